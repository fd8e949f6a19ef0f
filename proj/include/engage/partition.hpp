#pragma once

#include "engage/artifact.hpp"
#include "engage/record.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

namespace engage {

enum class PartitionMode { day_window, k_random };

// Disjoint chunks covering a set of log records. For every chunk the feature
// history is the complement of the chunk within the plan.
struct PartitionPlan {
    PartitionMode mode = PartitionMode::day_window;
    std::size_t chunk_count = 0;
    std::vector<std::size_t> record_index;   // log positions covered by the plan
    std::vector<std::uint32_t> chunk;        // chunk id of record_index[i]
    std::vector<std::uint32_t> training_order; // shuffled chunk ids

    std::size_t size() const { return record_index.size(); }
    // Log positions in `c`, ascending.
    std::vector<std::size_t> members(std::uint32_t c) const;
    // Log positions covered by the plan but outside `c`, ascending.
    std::vector<std::size_t> history(std::uint32_t c) const;
    std::vector<std::size_t> chunk_sizes() const;

    bool operator==(const PartitionPlan&) const = default;
};

// Midnight UTC at or before the earliest tweet timestamp.
Timestamp day_anchor(std::span<const InteractionRecord> log);

// One chunk per 24h window: positives by earliest reaction time, negatives by
// tweet creation time. Throws DataError if all records fall in one day.
PartitionPlan plan_day_windows(std::span<const InteractionRecord> log, std::uint64_t seed);
// Same over a subset of log positions.
PartitionPlan plan_day_windows(std::span<const InteractionRecord> log,
                               std::span<const std::size_t> subset, std::uint64_t seed);

// Random balanced split into k parts (shuffle, then deal round-robin).
// Throws ConfigError for k < 2 or k > number of records.
PartitionPlan plan_k_random(std::size_t record_count, std::size_t k, std::uint64_t seed);
PartitionPlan plan_k_random(std::span<const std::size_t> subset, std::size_t k, std::uint64_t seed);

struct HoldoutSplit {
    std::vector<std::size_t> kept;
    std::vector<std::size_t> held_out;
};

// Reserves round(fraction * n) randomly chosen positions; both outputs ascending.
HoldoutSplit split_holdout(std::span<const std::size_t> positions, double fraction, std::uint64_t seed);

// `#partition-plan v1`, `#mode`, `#chunks`, `#order` lines, then record_index<TAB>chunk_id.
void write_plan(std::ostream& out, const PartitionPlan& plan, const ArtifactMeta& meta = {});
void write_plan(const std::filesystem::path& path, const PartitionPlan& plan, const ArtifactMeta& meta = {});
PartitionPlan read_plan(const std::filesystem::path& path, ArtifactMeta* meta = nullptr);

std::string_view mode_name(PartitionMode mode);

} // namespace engage
