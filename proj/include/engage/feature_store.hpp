#pragma once

#include "engage/artifact.hpp"
#include "engage/community.hpp"
#include "engage/record.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <unordered_map>
#include <utility>

namespace engage {

// Engagement counts per reaction type; saturate at 2^32-1.
struct ReactionCounts {
    std::array<std::uint32_t, kReactionCount> n{};

    void add(std::size_t reaction, std::uint64_t k = 1);
    ReactionCounts& operator+=(const ReactionCounts& o);
    std::uint32_t operator[](Reaction r) const { return n[index_of(r)]; }
    bool zero() const { return n == std::array<std::uint32_t, kReactionCount>{}; }
    bool operator==(const ReactionCounts&) const = default;
};

// Saturating a - b per component, floored at zero.
ReactionCounts minus(const ReactionCounts& a, const ReactionCounts& b);

using PairKey = std::pair<std::uint64_t, std::uint64_t>;

struct PairKeyHash {
    std::size_t operator()(const PairKey& k) const noexcept;
};

using PairCounts = std::unordered_map<PairKey, ReactionCounts, PairKeyHash>;
using KeyCounts = std::unordered_map<std::uint64_t, ReactionCounts>;

struct StoreConfig {
    double jaccard_threshold = 0.5;
    std::uint64_t seed = 0;
};

// Historical engagement tables plus precomputed user clusters and
// communities, looked up at feature-assembly time. Immutable once built.
struct FeatureStore {
    PairCounts pair_counts;          // (engaged, engaging)
    KeyCounts received_counts;       // engaged user
    KeyCounts given_counts;          // engaging user
    PairCounts given_by_language;    // (engaging user, language)
    PairCounts hashtag_counts;       // (engaging user, hashtag)
    KeyCounts tweet_counts;          // tweet id
    std::unordered_map<UserId, UserId> similar_user_clusters; // user -> cluster id
    PairCounts cluster_pair_counts;  // (cluster id, engaging): pair counts summed over members
    std::array<CommunityPartition, kReactionCount> communities;

    ReactionCounts pair(UserId engaged, UserId engaging) const;
    ReactionCounts received(UserId engaged) const;
    ReactionCounts given(UserId engaging) const;
    ReactionCounts given_in_language(UserId engaging, std::uint32_t language) const;
    ReactionCounts with_hashtag(UserId engaging, std::uint32_t hashtag) const;
    ReactionCounts tweet(TweetId tweet) const;
    // Engagements of `engaging` with the other members of `engaged`'s cluster.
    ReactionCounts similar_users(UserId engaged, UserId engaging) const;

    void save(std::ostream& out, const ArtifactMeta& meta = {}) const;
    void save(const std::filesystem::path& path, const ArtifactMeta& meta = {}) const;
    static FeatureStore load(std::istream& in, ArtifactMeta* meta = nullptr);
    static FeatureStore load(const std::filesystem::path& path, ArtifactMeta* meta = nullptr);

    bool operator==(const FeatureStore&) const = default;
};

// Accumulates counts one record at a time; `finish` derives the cluster
// aggregates and community partitions.
class StoreBuilder {
public:
    explicit StoreBuilder(StoreConfig config) : config_(config) {}

    void add(const InteractionRecord& record);
    FeatureStore finish(std::unordered_map<UserId, UserId> clusters) &&;

private:
    StoreConfig config_;
    FeatureStore store_;
};

FeatureStore build_store(std::span<const InteractionRecord> history, const FollowerSets& followers,
                         const StoreConfig& config);
FeatureStore build_store(std::span<const InteractionRecord> history,
                         const std::unordered_map<UserId, UserId>& clusters,
                         const StoreConfig& config);

} // namespace engage
