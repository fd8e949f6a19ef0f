#include "support.hpp"

#include "engage/feature_store.hpp"
#include "engage/similarity.hpp"

#include <doctest.h>

#include <sstream>

using namespace engage;
using engage::testing::tiny_generator;

namespace {

InteractionRecord row(UserId engaged, UserId engaging, std::initializer_list<Reaction> reactions,
                      TweetId tweet = 1, std::vector<std::uint32_t> hashtags = {}, std::uint32_t language = 0) {
    InteractionRecord r;
    r.tweet_id = tweet;
    r.engaged_user = engaged;
    r.engaging_user = engaging;
    r.hashtags = std::move(hashtags);
    r.language = language;
    r.tweet_timestamp = 1000;
    for (const auto x : reactions) r.reactions[index_of(x)] = 2000;
    return r;
}

} // namespace

TEST_CASE("a likes b's tweets twice and replies once") {
    const UserId a = 1, b = 2;
    const std::vector<InteractionRecord> history{
        row(b, a, {Reaction::like}, 10),
        row(b, a, {Reaction::like, Reaction::reply}, 11),
        row(b, 3, {}, 12),
    };
    const auto store = build_store(history, FollowerSets{}, StoreConfig{});
    const auto c = store.pair(b, a);
    CHECK(c[Reaction::like] == 2);
    CHECK(c[Reaction::reply] == 1);
    CHECK(c[Reaction::retweet] == 0);
    CHECK(c[Reaction::quote] == 0);
    CHECK(store.pair(a, b).zero());
    CHECK(store.received(b)[Reaction::like] == 2);
    CHECK(store.given(3).zero());
}

TEST_CASE("history without reactions gives an all-zero store") {
    std::vector<InteractionRecord> history;
    for (UserId u = 1; u < 10; ++u) history.push_back(row(u, u + 1, {}, u, {static_cast<std::uint32_t>(u)}, 1));
    const auto store = build_store(history, FollowerSets{}, StoreConfig{});
    CHECK(store.pair_counts.empty());
    CHECK(store.received_counts.empty());
    CHECK(store.tweet_counts.empty());
    for (const auto& p : store.communities) CHECK(p.partition_of.empty());
    CHECK(store.pair(1, 2).zero());
}

TEST_CASE("repeated hashtags in one row count once") {
    const std::vector<InteractionRecord> history{row(1, 2, {Reaction::retweet}, 5, {7, 7, 8})};
    const auto store = build_store(history, FollowerSets{}, StoreConfig{});
    CHECK(store.with_hashtag(2, 7)[Reaction::retweet] == 1);
    CHECK(store.with_hashtag(2, 8)[Reaction::retweet] == 1);
}

TEST_CASE("every store table equals a nested-loop recount") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const auto data = generate_synthetic(tiny_generator(), seed);
        const auto clusters = similar_user_clusters(data.followers, 0.5);
        const auto store = build_store(data.log, clusters, StoreConfig{0.5, seed});
        const auto bad = engage::testing::store_oracle_mismatches(data.log, clusters, store);
        CHECK_MESSAGE(bad.empty(), (bad.empty() ? "" : bad.front()));
    }
}

TEST_CASE("similar-user counts sum pair counts over the other cluster members") {
    const auto data = generate_synthetic(tiny_generator(), 4);
    const auto clusters = similar_user_clusters(data.followers, 0.3);
    const auto store = build_store(data.log, clusters, StoreConfig{0.3, 1});
    std::size_t nonzero = 0;
    for (const auto& r : data.log) {
        ReactionCounts expected;
        for (const auto& h : data.log) {
            if (h.engaged_user == r.engaged_user || h.engaging_user != r.engaging_user) continue;
            if (clusters.at(h.engaged_user) != clusters.at(r.engaged_user)) continue;
            for (std::size_t k = 0; k < kReactionCount; ++k) expected.n[k] += h.reactions[k].has_value();
        }
        const auto got = store.similar_users(r.engaged_user, r.engaging_user);
        CHECK(got == expected);
        nonzero += !got.zero();
    }
    CHECK(nonzero > 0);
}

TEST_CASE("store file round-trips exactly") {
    const auto data = generate_synthetic(tiny_generator(), 6);
    const auto store = build_store(data.log, data.followers, StoreConfig{0.5, 2});
    std::stringstream buf;
    store.save(buf, ArtifactMeta{"beef", {}});
    ArtifactMeta meta;
    const auto back = FeatureStore::load(buf, &meta);
    CHECK(back == store);
    CHECK(meta.config_hash == "beef");
    std::stringstream again;
    back.save(again, ArtifactMeta{"beef", {}});
    CHECK(again.str() == buf.str());
}

TEST_CASE("store build is deterministic, communities included") {
    const auto data = generate_synthetic(tiny_generator(), 7);
    const auto a = build_store(data.log, data.followers, StoreConfig{0.5, 3});
    const auto b = build_store(data.log, data.followers, StoreConfig{0.5, 3});
    CHECK(a == b);
    // Every user in a reaction's partition has at least one edge of that reaction.
    for (std::size_t k = 0; k < kReactionCount; ++k) {
        for (const auto& [user, part] : a.communities[k].partition_of) {
            bool has_edge = false;
            for (const auto& [key, counts] : a.pair_counts) {
                if ((key.first == user || key.second == user) && counts.n[k] > 0) has_edge = true;
            }
            CHECK(has_edge);
            CHECK(part < a.communities[k].sizes.size());
        }
    }
}

TEST_CASE("reaction counts saturate at 2^32 - 1") {
    ReactionCounts c;
    c.add(0, 0xFFFFFFF0ULL);
    c.add(0, 100);
    CHECK(c.n[0] == 0xFFFFFFFFu);
    ReactionCounts d;
    d.n[0] = 5;
    c += d;
    CHECK(c.n[0] == 0xFFFFFFFFu);
    CHECK(minus(d, c).n[0] == 0);
}
