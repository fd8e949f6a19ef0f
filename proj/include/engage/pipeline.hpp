#pragma once

#include "engage/assemble.hpp"
#include "engage/config.hpp"
#include "engage/feature_store.hpp"
#include "engage/metrics.hpp"
#include "engage/model.hpp"
#include "engage/partition.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace engage {

// Artifact locations inside one work directory.
struct WorkDir {
    std::filesystem::path root;

    std::filesystem::path log() const { return root / "log.tsv"; }
    std::filesystem::path followers() const { return root / "followers.tsv"; }
    std::filesystem::path embeddings() const { return root / "token_embeddings.txt"; }
    std::filesystem::path codec() const { return root / "sketch_codec.txt"; }
    std::filesystem::path plan_stage1() const { return root / "plan_stage1.txt"; }
    std::filesystem::path plan_stage2() const { return root / "plan_stage2.txt"; }
    std::filesystem::path plan_eval() const { return root / "plan_eval.txt"; }
    std::filesystem::path store_stage1(std::uint32_t chunk) const;
    std::filesystem::path store_stage2(std::uint32_t chunk) const;
    std::filesystem::path store_eval() const { return root / "stores" / "eval.txt"; }
    std::filesystem::path features_stage1() const { return root / "features_stage1.txt"; }
    std::filesystem::path features_stage2() const { return root / "features_stage2.txt"; }
    std::filesystem::path model() const { return root / "model.bin"; }
    std::filesystem::path predictions() const { return root / "predictions.tsv"; }
    std::filesystem::path report_text() const { return root / "report.txt"; }
    std::filesystem::path report_tsv() const { return root / "report.tsv"; }
};

// Stage 1 covers the first train_days of the log in day windows. The rest is
// the validation period: a random holdout for evaluation, the remainder split
// into k random parts for stage 2.
struct PipelinePlans {
    PartitionPlan stage1;
    PartitionPlan stage2;
    PartitionPlan eval; // one chunk holding the holdout positions
};

// Positions (ascending) whose event time falls before t0 + train_days.
std::vector<std::size_t> training_period(std::span<const InteractionRecord> log, std::size_t train_days);
PipelinePlans make_plans(std::span<const InteractionRecord> log, const RunConfig& config);

// History positions behind each store (all ascending).
std::vector<std::size_t> stage1_history(const PipelinePlans& plans, std::uint32_t chunk);
std::vector<std::size_t> stage2_history(const PipelinePlans& plans, std::uint32_t chunk);
std::vector<std::size_t> eval_history(const PipelinePlans& plans);

FeatureStore store_from_positions(std::span<const InteractionRecord> log, std::span<const std::size_t> positions,
                                  const std::unordered_map<UserId, UserId>& clusters, const StoreConfig& config);

// Feature rows of the plan's chunks, chunk by chunk in id order, each chunk's
// records ascending. `store_for(c)` supplies the store built without chunk c.
// Chunks run on up to `threads` workers; output order does not depend on it.
std::vector<FeatureRow> featurize_plan(std::span<const InteractionRecord> log, const PartitionPlan& plan,
                                       const std::function<FeatureStore(std::uint32_t)>& store_for,
                                       const SketchCodec& codec, const FeatureLayout& layout,
                                       std::size_t threads = 1);

FeatureLayout run_layout(const RunConfig& config);

// Subcommand bodies. Each reads the previous stage's artifacts from `dir`,
// checks their config hash against `config`, and writes its own.
void run_gen(const RunConfig& config, const WorkDir& dir);
void run_fit_sketch(const RunConfig& config, const WorkDir& dir);
void run_partition(const RunConfig& config, const WorkDir& dir);
void run_build_store(const RunConfig& config, const WorkDir& dir);
void run_featurize(const RunConfig& config, const WorkDir& dir);
TrainingReport run_train(const RunConfig& config, const WorkDir& dir);
void run_predict(const RunConfig& config, const WorkDir& dir);
EvalReport run_eval(const RunConfig& config, const WorkDir& dir);

struct BenchResult {
    std::size_t predictions = 0;
    double p50_ms = 0.0;
    double p95_ms = 0.0;
    double max_ms = 0.0;
    double mean_ms = 0.0;
    double wall_seconds = 0.0;
    bool pinned = false;
    // Heap allocations observed during the timed loop (when a counter is supplied).
    std::uint64_t allocations = 0;
};

struct BenchOptions {
    std::size_t warmup = 1000;
    std::size_t predictions = 10000;
    int cpu = 0;
    // Returns a running count of heap allocations; optional.
    std::function<std::uint64_t()> allocation_counter;
};

// Replays `records` cyclically, one at a time: feature assembly (store
// lookups, sketch, Fourier) plus the forward pass, each call timed.
BenchResult bench_predictions(std::span<const InteractionRecord> records, const FeatureStore& store,
                              const SketchCodec& codec, const EngagePredictor& model, const BenchOptions& options);

BenchResult run_bench(const RunConfig& config, const WorkDir& dir, const BenchOptions& options);

// Throws ConfigError when `meta` was written under a different configuration.
void check_hash(const ArtifactMeta& meta, const RunConfig& config, Stage stage, const std::filesystem::path& path);

} // namespace engage
