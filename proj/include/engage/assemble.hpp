#pragma once

#include "engage/artifact.hpp"
#include "engage/feature_store.hpp"
#include "engage/record.hpp"
#include "engage/sketch.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string_view>
#include <vector>

namespace engage {

// Numeric feature order. Each block of four follows like, reply, retweet, quote.
//   0-3    engagements between engaged and engaging user
//   4-7    engagements received by the engaged user
//   8-11   engagements given by the engaging user
//   12-15  engagements given by the engaging user to tweets in this tweet's language
//   16-19  engagements of the engaging user with this tweet's hashtags (summed)
//   20-23  engagements of the engaging user with users similar to the engaged user
//   24-27  engagements with this tweet id
//   28-31  follower / following counts of engaged, then engaging user
//   32-33  account age in days of engaged, then engaging user
//   34     number of hashtags
inline constexpr std::size_t kNumericFeatureCount = 35;
extern const std::array<std::string_view, kNumericFeatureCount> kNumericFeatureNames;

// Categorical feature order:
//   0 language, 1 tweet type, 2 day of week (UTC, Sunday = 0), 3 hour of day (UTC),
//   4 media bitfield, 5 engaged verified, 6 engaging verified,
//   7 engaging follows engaged, 8-11 same community (like, reply, retweet, quote)
inline constexpr std::size_t kCategoricalFeatureCount = 12;
extern const std::array<std::string_view, kCategoricalFeatureCount> kCategoricalFeatureNames;

inline constexpr std::size_t kStrengthCount = kReactionCount;

struct FeatureLayout {
    std::size_t sketch_depth = 0;
    std::size_t sketch_width = 0;
    std::size_t numeric_count = kNumericFeatureCount;
    std::vector<std::size_t> categorical_vocab;
    std::size_t strength_count = kStrengthCount;

    // `languages` known language ids; larger ids share one extra bucket.
    static FeatureLayout standard(std::size_t sketch_depth, std::size_t sketch_width,
                                  std::size_t languages);

    std::size_t sketch_size() const { return sketch_depth * sketch_width; }
    bool operator==(const FeatureLayout&) const = default;
};

struct AssembledFeatures {
    Sketch sketch;
    std::vector<double> numeric;
    std::vector<std::uint32_t> categorical;
    std::array<double, kStrengthCount> community_strengths{};

    bool operator==(const AssembledFeatures&) const = default;
};

// Builds model inputs for one record from the store and codec. Never reads the
// record's reaction fields. Store and codec must outlive the assembler.
class FeatureAssembler {
public:
    // Throws DataError if the codec shape disagrees with the layout.
    FeatureAssembler(const FeatureStore& store, const SketchCodec& codec, FeatureLayout layout);

    const FeatureLayout& layout() const { return layout_; }

    // Reuses the storage of `out`; allocation-free once `out` has been sized.
    void assemble(const InteractionRecord& record, AssembledFeatures& out) const;
    AssembledFeatures assemble(const InteractionRecord& record) const;

private:
    const FeatureStore* store_;
    const SketchCodec* codec_;
    FeatureLayout layout_;
};

AssembledFeatures assemble(const InteractionRecord& record, const FeatureStore& store,
                           const SketchCodec& codec, const FeatureLayout& layout);

// Compact training row: sketch kept sparse.
struct SketchEntry {
    std::uint32_t index = 0;
    float value = 0.0f;
    bool operator==(const SketchEntry&) const = default;
};

struct FeatureRow {
    std::size_t record_index = 0;
    std::uint32_t chunk = 0;
    std::vector<SketchEntry> sketch;
    std::vector<double> numeric;
    std::vector<std::uint32_t> categorical;
    std::array<double, kStrengthCount> strengths{};
    std::array<float, kReactionCount> labels{};

    bool operator==(const FeatureRow&) const = default;
};

std::array<float, kReactionCount> labels_of(const InteractionRecord& record);
FeatureRow to_row(const AssembledFeatures& features, std::size_t record_index, std::uint32_t chunk,
                  const std::array<float, kReactionCount>& labels);

// `#engage-features v1` text file: one FeatureRow per line, `#rows` footer.
void write_features(std::ostream& out, const FeatureLayout& layout, std::span<const FeatureRow> rows,
                    const ArtifactMeta& meta = {});
void write_features(const std::filesystem::path& path, const FeatureLayout& layout,
                    std::span<const FeatureRow> rows, const ArtifactMeta& meta = {});
std::vector<FeatureRow> read_features(const std::filesystem::path& path, FeatureLayout& layout,
                                      ArtifactMeta* meta = nullptr);

} // namespace engage
