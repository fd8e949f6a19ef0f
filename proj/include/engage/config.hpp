#pragma once

#include "engage/artifact.hpp"
#include "engage/feature_store.hpp"
#include "engage/model.hpp"
#include "engage/sketch.hpp"
#include "engage/synthetic.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace engage {

// Pipeline stages; each artifact's config hash covers the keys its stage depends on.
enum class Stage { gen, fit_sketch, partition, build_store, featurize, train };

struct BenchConfig {
    std::size_t warmup = 1000;
    std::size_t predictions = 10000;
    double budget_p50_ms = 4.0;
    double budget_p95_ms = 6.0;
    int cpu = 0;
};

// Every tunable of the pipeline. Loaded from a `key = value` text file
// (`#` comments), then `key=value` overrides. Unknown keys are rejected.
struct RunConfig {
    std::uint64_t seed = 1;
    GeneratorConfig gen;
    std::size_t train_days = 21;
    std::size_t sketch_depth = 16;
    std::size_t sketch_width = 64;
    OffsetMode sketch_offsets = OffsetMode::quantile;
    double jaccard_threshold = 0.5;
    std::size_t partition_k = 10;
    double holdout_fraction = 0.1;
    ModelConfig model = desk_model();
    std::size_t metric_groups = 5;
    BenchConfig bench;
    std::size_t threads = 1;

    // Desk-scale model defaults (hidden width 256, lr 1e-3).
    static ModelConfig desk_model();

    static RunConfig load(const std::filesystem::path& path);
    static RunConfig parse(std::string_view text, std::string_view origin = "config");
    // Throws ConfigError for unknown keys or unparsable values.
    void set(std::string_view key, std::string_view value);
    void apply_override(std::string_view assignment); // "key=value"
    void validate() const;

    // All keys with their effective values, sorted by key.
    std::vector<std::string> lines() const;
    std::uint64_t hash(Stage stage) const;
    ArtifactMeta meta(Stage stage) const;

    SketchParams sketch_params(std::size_t embedding_dim) const;
    StoreConfig store_config() const;
    ModelConfig model_config() const; // model with seed derived from the run seed
};

std::vector<std::string> config_keys();

} // namespace engage
