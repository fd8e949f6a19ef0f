#include "engage/community.hpp"

#include "engage/random.hpp"

#include <algorithm>
#include <map>
#include <numeric>

namespace engage {

namespace {

struct LevelGraph {
    std::vector<std::vector<std::pair<std::uint32_t, double>>> adj; // off-diagonal, both directions
    std::vector<double> diag;                                       // A_ii
    std::vector<double> degree;                                     // row sums of A
    double total = 0.0;                                             // sum of all A_ij

    std::size_t size() const { return diag.size(); }
};

LevelGraph build_graph(std::size_t n, std::span<const WeightedEdge> edges) {
    std::map<std::pair<std::size_t, std::size_t>, double> merged;
    std::vector<double> diag(n, 0.0);
    for (const auto& e : edges) {
        if (e.a == e.b) {
            diag[e.a] += e.weight;
        } else {
            merged[{std::min(e.a, e.b), std::max(e.a, e.b)}] += e.weight;
        }
    }
    LevelGraph g;
    g.adj.resize(n);
    g.diag = std::move(diag);
    for (const auto& [key, w] : merged) {
        g.adj[key.first].emplace_back(static_cast<std::uint32_t>(key.second), w);
        g.adj[key.second].emplace_back(static_cast<std::uint32_t>(key.first), w);
    }
    g.degree.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double d = g.diag[i];
        for (const auto& [j, w] : g.adj[i]) d += w;
        g.degree[i] = d;
        g.total += d;
    }
    return g;
}

// Moves nodes between communities while modularity strictly improves.
// Returns true if any node moved.
bool local_moving(const LevelGraph& g, std::vector<std::uint32_t>& community,
                  const std::vector<std::uint32_t>& order, std::size_t max_passes) {
    const std::size_t n = g.size();
    std::vector<double> tot(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) tot[community[i]] += g.degree[i];
    std::vector<double> link(n, 0.0);
    std::vector<std::uint32_t> touched;
    bool moved_any = false;
    for (std::size_t pass = 0; pass < max_passes; ++pass) {
        bool moved = false;
        for (const std::uint32_t i : order) {
            const std::uint32_t own = community[i];
            const double ki = g.degree[i];
            touched.clear();
            for (const auto& [j, w] : g.adj[i]) {
                const std::uint32_t c = community[j];
                if (link[c] == 0.0) touched.push_back(c);
                link[c] += w;
            }
            tot[own] -= ki;
            double best_gain = link[own] - tot[own] * ki / g.total;
            std::uint32_t best = own;
            for (const std::uint32_t c : touched) {
                const double gain = link[c] - tot[c] * ki / g.total;
                if (gain > best_gain + 1e-12) {
                    best_gain = gain;
                    best = c;
                }
            }
            tot[best] += ki;
            for (const std::uint32_t c : touched) link[c] = 0.0;
            link[own] = 0.0;
            if (best != own) {
                community[i] = best;
                moved = true;
                moved_any = true;
            }
        }
        if (!moved) break;
    }
    return moved_any;
}

// Renumbers labels densely in order of first appearance by node index.
std::uint32_t relabel(std::vector<std::uint32_t>& labels) {
    std::vector<std::uint32_t> map(labels.size(), UINT32_MAX);
    std::uint32_t next = 0;
    for (auto& l : labels) {
        if (map[l] == UINT32_MAX) map[l] = next++;
        l = map[l];
    }
    return next;
}

LevelGraph aggregate(const LevelGraph& g, const std::vector<std::uint32_t>& community,
                     std::uint32_t count) {
    std::vector<WeightedEdge> edges;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (g.diag[i] != 0.0) edges.push_back({community[i], community[i], g.diag[i]});
        for (const auto& [j, w] : g.adj[i]) {
            if (j < i) continue;
            const std::uint32_t ci = community[i];
            const std::uint32_t cj = community[j];
            // An internal edge appears twice in the symmetric matrix.
            edges.push_back({ci, cj, ci == cj ? 2.0 * w : w});
        }
    }
    return build_graph(count, edges);
}

std::vector<std::uint32_t> shuffled_order(std::size_t n, Rng& rng) {
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    rng.shuffle(order);
    return order;
}

} // namespace

double modularity(std::size_t nodes, std::span<const WeightedEdge> edges,
                  std::span<const std::uint32_t> labels) {
    const LevelGraph g = build_graph(nodes, edges);
    if (g.total == 0.0) return 0.0;
    const std::uint32_t max_label = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end());
    std::vector<double> internal(max_label + 1, 0.0);
    std::vector<double> tot(max_label + 1, 0.0);
    for (std::size_t i = 0; i < nodes; ++i) {
        internal[labels[i]] += g.diag[i];
        tot[labels[i]] += g.degree[i];
        for (const auto& [j, w] : g.adj[i]) {
            if (labels[j] == labels[i]) internal[labels[i]] += w;
        }
    }
    double q = 0.0;
    for (std::size_t c = 0; c < internal.size(); ++c) {
        q += internal[c] / g.total - (tot[c] / g.total) * (tot[c] / g.total);
    }
    return q;
}

std::vector<std::uint32_t> louvain(std::size_t nodes, std::span<const WeightedEdge> edges,
                                   std::uint64_t seed) {
    std::vector<std::uint32_t> labels(nodes);
    std::iota(labels.begin(), labels.end(), 0u);
    const LevelGraph base = build_graph(nodes, edges);
    if (nodes == 0 || base.total == 0.0) return labels;

    Rng rng(seed);
    LevelGraph g = base;
    constexpr std::size_t kMaxPasses = 64;
    while (true) {
        std::vector<std::uint32_t> community(g.size());
        std::iota(community.begin(), community.end(), 0u);
        const bool moved = local_moving(g, community, shuffled_order(g.size(), rng), kMaxPasses);
        const std::uint32_t count = relabel(community);
        if (!moved || count == g.size()) break;
        for (auto& l : labels) l = community[l];
        g = aggregate(g, community, count);
    }
    // Refinement sweep over individual nodes of the input graph.
    local_moving(base, labels, shuffled_order(nodes, rng), 1);
    relabel(labels);
    return labels;
}

std::optional<Membership> CommunityPartition::lookup(UserId user) const {
    const auto it = partition_of.find(user);
    if (it == partition_of.end()) return std::nullopt;
    return Membership{it->second, sizes[it->second]};
}

CommunityPartition detect_communities(std::span<const DirectedInteraction> interactions,
                                      std::uint64_t seed) {
    std::vector<UserId> users;
    users.reserve(2 * interactions.size());
    for (const auto& e : interactions) {
        if (e.weight <= 0.0) continue;
        users.push_back(e.engaged);
        users.push_back(e.engaging);
    }
    std::sort(users.begin(), users.end());
    users.erase(std::unique(users.begin(), users.end()), users.end());
    std::unordered_map<UserId, std::size_t> index;
    index.reserve(users.size());
    for (std::size_t i = 0; i < users.size(); ++i) index[users[i]] = i;

    std::vector<WeightedEdge> edges;
    edges.reserve(interactions.size());
    for (const auto& e : interactions) {
        if (e.weight <= 0.0) continue;
        edges.push_back({index.at(e.engaged), index.at(e.engaging), e.weight});
    }
    const auto labels = louvain(users.size(), edges, seed);

    CommunityPartition out;
    out.partition_of.reserve(users.size());
    for (std::size_t i = 0; i < users.size(); ++i) {
        out.partition_of.emplace(users[i], labels[i]);
        if (labels[i] >= out.sizes.size()) out.sizes.resize(labels[i] + 1, 0);
        ++out.sizes[labels[i]];
    }
    return out;
}

std::array<CommunityPartition, kReactionCount> community_partitions(
    std::span<const InteractionRecord> history, std::uint64_t seed) {
    std::array<std::map<std::pair<UserId, UserId>, double>, kReactionCount> weights;
    for (const auto& r : history) {
        for (std::size_t k = 0; k < kReactionCount; ++k) {
            if (r.reactions[k]) weights[k][{r.engaged_user, r.engaging_user}] += 1.0;
        }
    }
    std::array<CommunityPartition, kReactionCount> out;
    for (std::size_t k = 0; k < kReactionCount; ++k) {
        std::vector<DirectedInteraction> edges;
        edges.reserve(weights[k].size());
        for (const auto& [key, w] : weights[k]) edges.push_back({key.first, key.second, w});
        out[k] = detect_communities(edges, seed + k);
    }
    return out;
}

PairCommunity pair_community(const CommunityPartition& partition, UserId a, UserId b) {
    const auto ma = partition.lookup(a);
    const auto mb = partition.lookup(b);
    if (!ma || !mb || ma->partition != mb->partition) return {};
    return {true, 1.0 / static_cast<double>(ma->size)};
}

} // namespace engage
