#pragma once

#include "engage/record.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

namespace engage {

struct WeightedEdge {
    std::size_t a = 0;
    std::size_t b = 0;
    double weight = 0.0;
};

// Newman modularity of a labelling of an undirected weighted graph. Parallel
// edges accumulate; a self-loop of weight w adds w to the diagonal once.
double modularity(std::size_t nodes, std::span<const WeightedEdge> edges,
                  std::span<const std::uint32_t> labels);

// Multi-level greedy modularity maximization (Louvain local moving plus
// aggregation), followed by one node-level refinement sweep on the input graph.
// Labels are dense, numbered in order of each community's smallest node.
std::vector<std::uint32_t> louvain(std::size_t nodes, std::span<const WeightedEdge> edges,
                                   std::uint64_t seed);

struct Membership {
    std::uint32_t partition = 0;
    std::uint32_t size = 0;
};

// Users absent from the interaction graph have no entry and count as singletons.
struct CommunityPartition {
    std::unordered_map<UserId, std::uint32_t> partition_of;
    std::vector<std::uint32_t> sizes;

    std::optional<Membership> lookup(UserId user) const;
    bool operator==(const CommunityPartition&) const = default;
};

struct DirectedInteraction {
    UserId engaged = 0;
    UserId engaging = 0;
    double weight = 0.0;
};

// Directed engaged->engaging edges, folded into a weighted undirected graph.
CommunityPartition detect_communities(std::span<const DirectedInteraction> interactions,
                                      std::uint64_t seed);

// One partition per reaction graph, built from the engagements in `history`.
std::array<CommunityPartition, kReactionCount> community_partitions(
    std::span<const InteractionRecord> history, std::uint64_t seed);

struct PairCommunity {
    bool same = false;
    double strength = 0.0; // 1 / partition size when same, else 0
};

PairCommunity pair_community(const CommunityPartition& partition, UserId a, UserId b);

} // namespace engage
