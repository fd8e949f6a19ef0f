#pragma once

#include "engage/assemble.hpp"
#include "engage/feature_store.hpp"
#include "engage/random.hpp"
#include "engage/sketch.hpp"
#include "engage/synthetic.hpp"

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

namespace engage::testing {

// Small generator profile that keeps every test well under a second.
inline GeneratorConfig tiny_generator() {
    GeneratorConfig c;
    c.users = 60;
    c.tweets = 200;
    c.rows = 800;
    c.vocab = 80;
    c.embedding_dim = 8;
    c.days = 6;
    c.topics = 3;
    c.languages = 3;
    c.hashtag_vocab = 20;
    c.group_size = 6;
    c.priors = {0.4, 0.1, 0.15, 0.05};
    return c;
}

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("engage-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

// Random feature rows matching `layout`, labels drawn with the given rates.
inline std::vector<FeatureRow> random_rows(const FeatureLayout& layout, std::size_t n, std::uint64_t seed,
                                           double label_rate = 0.3) {
    Rng rng(seed);
    std::vector<FeatureRow> rows(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& r = rows[i];
        r.record_index = i;
        for (std::size_t k = 0; k < layout.sketch_depth; ++k) {
            const auto region = static_cast<std::uint32_t>(rng.below(layout.sketch_width));
            r.sketch.push_back({static_cast<std::uint32_t>(k * layout.sketch_width + region), 1.0f});
        }
        for (std::size_t j = 0; j < layout.numeric_count; ++j) r.numeric.push_back(std::floor(rng.exponential(3.0)));
        for (const auto v : layout.categorical_vocab) r.categorical.push_back(static_cast<std::uint32_t>(rng.below(v)));
        for (auto& s : r.strengths) s = rng.bernoulli(0.5) ? 1.0 / static_cast<double>(1 + rng.below(5)) : 0.0;
        for (auto& l : r.labels) l = rng.bernoulli(label_rate) ? 1.0f : 0.0f;
    }
    return rows;
}

// Fraction of token pairs sharing a region, averaged over depths, for
// same-topic and cross-topic pairs.
struct CollisionRates {
    double same_topic = 0.0;
    double cross_topic = 0.0;
};

inline CollisionRates topic_collision_rates(const SketchCodec& codec, const std::vector<std::uint32_t>& topic) {
    double same = 0, cross = 0;
    std::size_t n_same = 0, n_cross = 0;
    const std::size_t V = codec.vocab_size();
    for (std::size_t a = 0; a < V; ++a) {
        for (std::size_t b = a + 1; b < V; ++b) {
            std::size_t shared = 0;
            for (std::size_t k = 0; k < codec.params().depth; ++k) {
                shared += codec.region(static_cast<TokenId>(a), k) == codec.region(static_cast<TokenId>(b), k);
            }
            const double rate = static_cast<double>(shared) / static_cast<double>(codec.params().depth);
            if (topic[a] == topic[b]) {
                same += rate;
                ++n_same;
            } else {
                cross += rate;
                ++n_cross;
            }
        }
    }
    return {same / static_cast<double>(n_same), cross / static_cast<double>(n_cross)};
}

// Recounts every FeatureStore table by scanning the history once per entry
// and compares key sets. Returns a description of each disagreement.
inline std::vector<std::string> store_oracle_mismatches(std::span<const InteractionRecord> history,
                                                        const std::unordered_map<UserId, UserId>& clusters,
                                                        const FeatureStore& store) {
    std::vector<std::string> bad;
    auto recount = [&](auto matches) {
        ReactionCounts c;
        for (const auto& r : history) {
            if (!matches(r)) continue;
            for (std::size_t k = 0; k < kReactionCount; ++k) c.n[k] += r.reactions[k].has_value() ? 1u : 0u;
        }
        return c;
    };
    auto check_table = [&](const char* name, const auto& table, auto matches_key, auto keys_of_row) {
        using Key = typename std::decay_t<decltype(table)>::key_type;
        for (const auto& [key, counts] : table) {
            if (!(recount([&](const InteractionRecord& r) { return matches_key(r, key); }) == counts)) {
                bad.push_back(std::string(name) + ": entry differs from recount");
            }
        }
        std::set<Key> expected;
        for (const auto& r : history) {
            if (!r.any_engagement()) continue;
            for (const auto& k : keys_of_row(r)) expected.insert(k);
        }
        if (expected.size() != table.size()) bad.push_back(std::string(name) + ": key set size differs");
        for (const auto& k : expected) {
            if (!table.count(k)) bad.push_back(std::string(name) + ": missing key");
        }
    };
    check_table(
        "pair", store.pair_counts,
        [](const InteractionRecord& r, const PairKey& k) { return r.engaged_user == k.first && r.engaging_user == k.second; },
        [](const InteractionRecord& r) { return std::vector<PairKey>{{r.engaged_user, r.engaging_user}}; });
    check_table(
        "received", store.received_counts,
        [](const InteractionRecord& r, std::uint64_t k) { return r.engaged_user == k; },
        [](const InteractionRecord& r) { return std::vector<std::uint64_t>{r.engaged_user}; });
    check_table(
        "given", store.given_counts,
        [](const InteractionRecord& r, std::uint64_t k) { return r.engaging_user == k; },
        [](const InteractionRecord& r) { return std::vector<std::uint64_t>{r.engaging_user}; });
    check_table(
        "language", store.given_by_language,
        [](const InteractionRecord& r, const PairKey& k) { return r.engaging_user == k.first && r.language == k.second; },
        [](const InteractionRecord& r) { return std::vector<PairKey>{{r.engaging_user, r.language}}; });
    check_table(
        "hashtag", store.hashtag_counts,
        [](const InteractionRecord& r, const PairKey& k) {
            return r.engaging_user == k.first &&
                   std::find(r.hashtags.begin(), r.hashtags.end(), k.second) != r.hashtags.end();
        },
        [](const InteractionRecord& r) {
            std::vector<PairKey> keys;
            for (const auto h : r.hashtags) keys.push_back({r.engaging_user, h});
            return keys;
        });
    check_table(
        "tweet", store.tweet_counts, [](const InteractionRecord& r, std::uint64_t k) { return r.tweet_id == k; },
        [](const InteractionRecord& r) { return std::vector<std::uint64_t>{r.tweet_id}; });
    auto cluster_of = [&](UserId u) -> std::optional<UserId> {
        const auto it = clusters.find(u);
        if (it == clusters.end()) return std::nullopt;
        return it->second;
    };
    check_table(
        "cluster", store.cluster_pair_counts,
        [&](const InteractionRecord& r, const PairKey& k) {
            return r.engaging_user == k.second && cluster_of(r.engaged_user) == std::optional<UserId>(k.first);
        },
        [&](const InteractionRecord& r) {
            std::vector<PairKey> keys;
            if (const auto c = cluster_of(r.engaged_user)) keys.push_back({*c, r.engaging_user});
            return keys;
        });
    if (store.similar_user_clusters != clusters) bad.push_back("clusters differ from the input clusters");
    return bad;
}

} // namespace engage::testing
