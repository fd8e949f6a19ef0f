#include "engage/partition.hpp"

#include "engage/error.hpp"
#include "engage/log_io.hpp"
#include "engage/random.hpp"
#include "engage/text.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>

namespace engage {

std::string_view mode_name(PartitionMode mode) {
    return mode == PartitionMode::day_window ? "day-window" : "k-random";
}

std::vector<std::size_t> PartitionPlan::members(std::uint32_t c) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < record_index.size(); ++i) {
        if (chunk[i] == c) out.push_back(record_index[i]);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::size_t> PartitionPlan::history(std::uint32_t c) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < record_index.size(); ++i) {
        if (chunk[i] != c) out.push_back(record_index[i]);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::size_t> PartitionPlan::chunk_sizes() const {
    std::vector<std::size_t> sizes(chunk_count, 0);
    for (const auto c : chunk) ++sizes[c];
    return sizes;
}

namespace {

Timestamp floor_day(Timestamp t) {
    const Timestamp d = t >= 0 ? t / kSecondsPerDay : (t - kSecondsPerDay + 1) / kSecondsPerDay;
    return d * kSecondsPerDay;
}

std::vector<std::uint32_t> shuffled_chunks(std::size_t n, std::uint64_t seed) {
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    Rng rng(seed);
    rng.shuffle(order);
    return order;
}

} // namespace

Timestamp day_anchor(std::span<const InteractionRecord> log) {
    Timestamp t0 = std::numeric_limits<Timestamp>::max();
    for (const auto& r : log) t0 = std::min(t0, r.tweet_timestamp);
    return floor_day(t0);
}

PartitionPlan plan_day_windows(std::span<const InteractionRecord> log,
                               std::span<const std::size_t> subset, std::uint64_t seed) {
    if (subset.empty()) throw DataError("day-window partitioning of an empty log");
    Timestamp t0 = std::numeric_limits<Timestamp>::max();
    for (const auto i : subset) t0 = std::min(t0, log[i].tweet_timestamp);
    t0 = floor_day(t0);
    PartitionPlan plan;
    plan.mode = PartitionMode::day_window;
    plan.record_index.assign(subset.begin(), subset.end());
    plan.chunk.reserve(subset.size());
    std::uint32_t max_chunk = 0;
    for (const auto i : subset) {
        const Timestamp day = (log[i].event_time() - t0) / kSecondsPerDay;
        const auto c = static_cast<std::uint32_t>(day);
        plan.chunk.push_back(c);
        max_chunk = std::max(max_chunk, c);
    }
    if (max_chunk == 0) throw DataError("day-window partitioning needs records spanning at least two days");
    plan.chunk_count = max_chunk + 1;
    plan.training_order = shuffled_chunks(plan.chunk_count, seed);
    return plan;
}

PartitionPlan plan_day_windows(std::span<const InteractionRecord> log, std::uint64_t seed) {
    std::vector<std::size_t> all(log.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return plan_day_windows(log, all, seed);
}

PartitionPlan plan_k_random(std::span<const std::size_t> subset, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw ConfigError("k-random partitioning needs k >= 2");
    if (k > subset.size()) {
        throw ConfigError("k-random partitioning: k=" + std::to_string(k) + " exceeds " +
                          std::to_string(subset.size()) + " records");
    }
    Rng rng(seed);
    std::vector<std::size_t> perm(subset.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(perm);
    PartitionPlan plan;
    plan.mode = PartitionMode::k_random;
    plan.chunk_count = k;
    plan.record_index.assign(subset.begin(), subset.end());
    plan.chunk.resize(subset.size());
    for (std::size_t j = 0; j < perm.size(); ++j) plan.chunk[perm[j]] = static_cast<std::uint32_t>(j % k);
    plan.training_order = shuffled_chunks(k, rng.next_u64());
    return plan;
}

PartitionPlan plan_k_random(std::size_t record_count, std::size_t k, std::uint64_t seed) {
    std::vector<std::size_t> all(record_count);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return plan_k_random(all, k, seed);
}

HoldoutSplit split_holdout(std::span<const std::size_t> positions, double fraction, std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction < 1.0)) throw ConfigError("holdout fraction must lie in [0, 1)");
    std::vector<std::size_t> perm(positions.begin(), positions.end());
    Rng rng(seed);
    rng.shuffle(perm);
    const auto n_out = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(perm.size())));
    HoldoutSplit split;
    split.held_out.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_out));
    split.kept.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_out), perm.end());
    std::sort(split.held_out.begin(), split.held_out.end());
    std::sort(split.kept.begin(), split.kept.end());
    return split;
}

void write_plan(std::ostream& out, const PartitionPlan& plan, const ArtifactMeta& meta) {
    out << "#partition-plan v1\n";
    write_meta(out, meta);
    out << "#mode\t" << mode_name(plan.mode) << '\n';
    out << "#chunks\t" << plan.chunk_count << '\n';
    out << "#order\t" << text::join(std::span<const std::uint32_t>(plan.training_order), ',') << '\n';
    for (std::size_t i = 0; i < plan.size(); ++i) out << plan.record_index[i] << '\t' << plan.chunk[i] << '\n';
}

void write_plan(const std::filesystem::path& path, const PartitionPlan& plan, const ArtifactMeta& meta) {
    auto out = open_output(path);
    write_plan(out, plan, meta);
}

PartitionPlan read_plan(const std::filesystem::path& path, ArtifactMeta* meta) {
    auto in = open_input(path);
    std::string line;
    if (!text::read_line(in, line) || line != "#partition-plan v1") {
        throw DataError(path.string() + ": bad partition-plan header");
    }
    ArtifactMeta m;
    PartitionPlan plan;
    std::size_t line_no = 1;
    while (text::read_line(in, line)) {
        ++line_no;
        if (line.empty() || consume_meta_line(line, m)) continue;
        const auto where = path.string() + ": line " + std::to_string(line_no) + ": ";
        try {
            if (text::starts_with(line, "#mode\t")) {
                const auto v = std::string_view(line).substr(6);
                if (v == "day-window") {
                    plan.mode = PartitionMode::day_window;
                } else if (v == "k-random") {
                    plan.mode = PartitionMode::k_random;
                } else {
                    throw DataError("unknown mode");
                }
            } else if (text::starts_with(line, "#chunks\t")) {
                plan.chunk_count = text::parse_u64(std::string_view(line).substr(8), "chunk count");
            } else if (text::starts_with(line, "#order\t")) {
                plan.training_order = text::parse_u32_list(std::string_view(line).substr(7), "order");
            } else {
                const auto f = text::split(line, '\t');
                if (f.size() != 2) throw DataError("expected record_index<TAB>chunk_id");
                plan.record_index.push_back(text::parse_u64(f[0], "record index"));
                const std::uint64_t c = text::parse_u64(f[1], "chunk id");
                if (c >= plan.chunk_count) throw DataError("chunk id out of range");
                plan.chunk.push_back(static_cast<std::uint32_t>(c));
            }
        } catch (const DataError& e) {
            throw DataError(where + e.what());
        }
    }
    if (meta) *meta = std::move(m);
    return plan;
}

} // namespace engage
