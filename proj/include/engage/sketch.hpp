#pragma once

#include "engage/artifact.hpp"
#include "engage/record.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace engage {

enum class OffsetMode {
    quantile, // offset = projection of a uniformly sampled token (follows data density)
    uniform,  // offset uniform between the min and max projection (baseline)
};

struct SketchParams {
    std::size_t depth = 16;        // K independent partitionings
    std::size_t width = 64;        // W regions per partitioning, a power of two >= 2
    std::size_t embedding_dim = 0; // D
    std::uint64_t seed = 0;
    OffsetMode offsets = OffsetMode::quantile;

    std::size_t bits() const;
    std::size_t size() const { return depth * width; }
    void validate() const; // throws ConfigError
    bool operator==(const SketchParams&) const = default;
};

// K x W region histogram, row-major. After normalization each depth row has
// unit L2 norm, or is all zero for an empty token list.
struct Sketch {
    std::size_t depth = 0;
    std::size_t width = 0;
    std::vector<double> values;

    Sketch() = default;
    Sketch(std::size_t k, std::size_t w) : depth(k), width(w), values(k * w, 0.0) {}

    std::span<const double> row(std::size_t k) const { return {values.data() + k * width, width}; }
    bool operator==(const Sketch&) const = default;
};

enum class OovPolicy {
    reject, // out-of-vocabulary token id throws DataError
    skip,   // out-of-vocabulary token contributes nothing
};

struct Hyperplane {
    std::vector<double> direction;
    double offset = 0.0;
    bool operator==(const Hyperplane&) const = default;
};

// Fitted set of K sign-bit partitionings over a token-embedding space plus the
// resulting token -> region table. Immutable after fitting.
class SketchCodec {
public:
    // Throws DataError for V < W, non-finite embeddings, or D mismatch.
    static SketchCodec fit(const EmbeddingMatrix& embeddings, const SketchParams& params);

    const SketchParams& params() const { return params_; }
    std::size_t vocab_size() const { return vocab_; }
    std::span<const Hyperplane> hyperplanes(std::size_t depth) const;

    std::uint32_t region(TokenId token, std::size_t depth) const {
        return assignment_[static_cast<std::size_t>(token) * params_.depth + depth];
    }
    // Region of an arbitrary embedding vector at a given depth.
    std::uint32_t region_of(std::span<const double> embedding, std::size_t depth) const;

    // Un-normalized region counts (sum of one-hot rows).
    std::vector<std::uint32_t> raw_counts(std::span<const TokenId> tokens,
                                          OovPolicy oov = OovPolicy::reject) const;
    Sketch encode(std::span<const TokenId> tokens, OovPolicy oov = OovPolicy::reject) const;
    // Reuses `out`'s storage; no allocation once `out` has the right shape.
    void encode_into(std::span<const TokenId> tokens, Sketch& out,
                     OovPolicy oov = OovPolicy::reject) const;

    void save(std::ostream& out, const ArtifactMeta& meta = {}) const;
    void save(const std::filesystem::path& path, const ArtifactMeta& meta = {}) const;
    static SketchCodec load(std::istream& in, ArtifactMeta* meta = nullptr);
    static SketchCodec load(const std::filesystem::path& path, ArtifactMeta* meta = nullptr);

    bool operator==(const SketchCodec&) const = default;

private:
    SketchParams params_;
    std::size_t vocab_ = 0;
    std::vector<Hyperplane> planes_;           // depth-major, bits() per depth
    std::vector<std::uint32_t> assignment_;    // vocab x depth
};

// Per-row L2 normalization in place.
void normalize_rows(Sketch& sketch);

} // namespace engage
