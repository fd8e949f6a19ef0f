#include "support.hpp"

#include "engage/error.hpp"
#include "engage/partition.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>

using namespace engage;
using engage::testing::TempDir;

namespace {

constexpr Timestamp kT0 = 1612396800; // midnight UTC

InteractionRecord at(Timestamp created, std::optional<Timestamp> like = std::nullopt) {
    InteractionRecord r;
    r.engaged_user = 1;
    r.engaging_user = 2;
    r.tweet_timestamp = created;
    r.reactions[index_of(Reaction::like)] = like;
    return r;
}

} // namespace

TEST_CASE("positives use engagement time, negatives creation time") {
    const std::vector<InteractionRecord> log{
        at(kT0 + 4 * kSecondsPerDay + 100, kT0 + 5 * kSecondsPerDay + 7), // like on day 5, created day 4
        at(kT0 + 4 * kSecondsPerDay + 100),                               // negative created day 4
        at(kT0 + 3600),                                                   // day 0
    };
    const auto plan = plan_day_windows(log, 1);
    CHECK(day_anchor(log) == kT0);
    CHECK(plan.chunk_count == 6);
    CHECK(plan.chunk[0] == 5);
    CHECK(plan.chunk[1] == 4);
    CHECK(plan.chunk[2] == 0);
}

TEST_CASE("anchor is the earliest tweet time floored to midnight") {
    const std::vector<InteractionRecord> log{at(kT0 + 50000), at(kT0 + 2 * kSecondsPerDay)};
    CHECK(day_anchor(log) == kT0);
}

TEST_CASE("single-day logs cannot be split into day windows") {
    const std::vector<InteractionRecord> log{at(kT0 + 10), at(kT0 + 20)};
    CHECK_THROWS_AS(plan_day_windows(log, 1), DataError);
}

TEST_CASE("21 days of synthetic data give 21 chunks; chunks cover and histories complement") {
    auto cfg = engage::testing::tiny_generator();
    cfg.days = 21;
    cfg.rows = 3000;
    const auto data = generate_synthetic(cfg, 2);
    const auto plan = plan_day_windows(data.log, 3);
    CHECK(plan.chunk_count == 21);
    CHECK(plan.size() == data.log.size());
    std::vector<std::uint32_t> order = plan.training_order;
    std::sort(order.begin(), order.end());
    std::vector<std::uint32_t> expected(21);
    std::iota(expected.begin(), expected.end(), 0u);
    CHECK(order == expected);
    CHECK(plan.training_order != expected); // shuffled
    std::size_t total = 0;
    for (std::uint32_t c = 0; c < plan.chunk_count; ++c) {
        const auto m = plan.members(c);
        const auto h = plan.history(c);
        CHECK_FALSE(m.empty());
        total += m.size();
        CHECK(m.size() + h.size() == data.log.size());
        std::vector<std::size_t> both;
        std::set_intersection(m.begin(), m.end(), h.begin(), h.end(), std::back_inserter(both));
        CHECK(both.empty());
    }
    CHECK(total == data.log.size());
}

TEST_CASE("k-random: balanced, deterministic, validated") {
    const auto plan = plan_k_random(100000, 10, 4);
    for (const auto s : plan.chunk_sizes()) {
        CHECK(s >= 9500);
        CHECK(s <= 10500);
    }
    CHECK(plan_k_random(100000, 10, 4) == plan);
    CHECK_FALSE(plan_k_random(100000, 10, 5) == plan);

    const auto two = plan_k_random(2, 2, 1);
    CHECK(two.chunk_sizes() == std::vector<std::size_t>{1, 1});
    CHECK_THROWS_AS(plan_k_random(5, 1, 1), ConfigError);
    CHECK_THROWS_AS(plan_k_random(3, 4, 1), ConfigError);
}

TEST_CASE("k-random over a subset keeps the subset's positions") {
    const std::vector<std::size_t> subset{3, 8, 9, 20, 21, 40};
    const auto plan = plan_k_random(subset, 3, 7);
    std::vector<std::size_t> seen = plan.record_index;
    std::sort(seen.begin(), seen.end());
    CHECK(seen == subset);
    for (std::uint32_t c = 0; c < 3; ++c) CHECK(plan.members(c).size() == 2);
}

TEST_CASE("holdout reserves the requested fraction") {
    std::vector<std::size_t> positions(1000);
    std::iota(positions.begin(), positions.end(), 0);
    const auto split = split_holdout(positions, 0.1, 9);
    CHECK(split.held_out.size() == 100);
    CHECK(split.kept.size() == 900);
    CHECK(std::is_sorted(split.kept.begin(), split.kept.end()));
    std::vector<std::size_t> all = split.kept;
    all.insert(all.end(), split.held_out.begin(), split.held_out.end());
    std::sort(all.begin(), all.end());
    CHECK(all == positions);
    CHECK_THROWS_AS(split_holdout(positions, 1.0, 9), ConfigError);
}

TEST_CASE("plan file round-trips") {
    TempDir dir;
    const auto plan = plan_k_random(500, 7, 11);
    write_plan(dir / "p.txt", plan, ArtifactMeta{"aa", {"partition.k=7"}});
    ArtifactMeta meta;
    CHECK(read_plan(dir / "p.txt", &meta) == plan);
    CHECK(meta.config_lines.size() == 1);
}
