#include "engage/community.hpp"
#include "engage/random.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>
#include <limits>

using namespace engage;

namespace {

// Q = 1/(2m) * sum_ij [A_ij - k_i k_j / (2m)] delta(c_i, c_j), on an explicit adjacency matrix.
double matrix_modularity(std::size_t n, std::span<const WeightedEdge> edges, std::span<const std::uint32_t> labels) {
    std::vector<double> A(n * n, 0.0);
    for (const auto& e : edges) {
        if (e.a == e.b) {
            A[e.a * n + e.a] += e.weight;
        } else {
            A[e.a * n + e.b] += e.weight;
            A[e.b * n + e.a] += e.weight;
        }
    }
    std::vector<double> k(n, 0.0);
    double two_m = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) k[i] += A[i * n + j];
        two_m += k[i];
    }
    double q = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (labels[i] == labels[j]) q += A[i * n + j] - k[i] * k[j] / two_m;
        }
    }
    return q / two_m;
}

// Enumerates all set partitions (restricted growth strings) and returns the best modularity.
double exhaustive_best(std::size_t n, std::span<const WeightedEdge> edges) {
    std::vector<std::uint32_t> labels(n, 0);
    double best = -std::numeric_limits<double>::infinity();
    std::size_t count = 0;
    std::function<void(std::size_t, std::uint32_t)> rec = [&](std::size_t i, std::uint32_t max_label) {
        if (i == n) {
            ++count;
            best = std::max(best, matrix_modularity(n, edges, labels));
            return;
        }
        for (std::uint32_t l = 0; l <= max_label + 1; ++l) {
            labels[i] = l;
            rec(i + 1, std::max(max_label, l));
        }
    };
    labels[0] = 0;
    rec(1, 0);
    if (n == 6) CHECK(count == 203); // Bell number B6
    return best;
}

std::vector<WeightedEdge> two_triangles() {
    return {{0, 1, 2}, {1, 2, 2}, {0, 2, 2}, {3, 4, 2}, {4, 5, 2}, {3, 5, 2}};
}

} // namespace

TEST_CASE("modularity agrees with the adjacency-matrix definition") {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + rng.below(8);
        std::vector<WeightedEdge> edges;
        const std::size_t m = 1 + rng.below(15);
        for (std::size_t i = 0; i < m; ++i) {
            edges.push_back({rng.below(n), rng.below(n), 1.0 + static_cast<double>(rng.below(3))});
        }
        std::vector<std::uint32_t> labels(n);
        for (auto& l : labels) l = static_cast<std::uint32_t>(rng.below(3));
        CHECK(modularity(n, edges, labels) == doctest::Approx(matrix_modularity(n, edges, labels)).epsilon(1e-12));
    }
}

TEST_CASE("two disconnected triangles split into two communities of three") {
    const auto edges = two_triangles();
    const auto labels = louvain(6, edges, 1);
    CHECK(labels == std::vector<std::uint32_t>{0, 0, 0, 1, 1, 1});
    CHECK(modularity(6, edges, labels) == doctest::Approx(exhaustive_best(6, edges)).epsilon(1e-12));
}

TEST_CASE("louvain reaches the exhaustive optimum on structured 6-node graphs") {
    const std::vector<std::vector<WeightedEdge>> graphs{
        two_triangles(),
        {{0, 1, 1}, {1, 2, 1}, {0, 2, 1}, {3, 4, 1}, {4, 5, 1}, {3, 5, 1}, {2, 3, 1}},
        {{0, 1, 3}, {2, 3, 3}, {4, 5, 3}, {1, 2, 1}, {3, 4, 1}},
        {{0, 1, 1}, {0, 2, 1}, {0, 3, 1}, {4, 5, 4}, {3, 4, 1}},
    };
    for (const auto& g : graphs) {
        const auto labels = louvain(6, g, 9);
        CHECK(modularity(6, g, labels) == doctest::Approx(exhaustive_best(6, g)).epsilon(1e-12));
    }
}

TEST_CASE("louvain never exceeds the exhaustive optimum on random graphs") {
    Rng rng(17);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<WeightedEdge> edges;
        for (std::size_t a = 0; a < 6; ++a) {
            for (std::size_t b = a + 1; b < 6; ++b) {
                if (rng.bernoulli(0.4)) edges.push_back({a, b, 1.0});
            }
        }
        if (edges.empty()) continue;
        const auto labels = louvain(6, edges, trial);
        const double best = exhaustive_best(6, edges);
        CHECK(modularity(6, edges, labels) <= best + 1e-12);
        CHECK(modularity(6, edges, labels) >= 0.0);
    }
}

TEST_CASE("louvain is deterministic for a seed and labels are dense by smallest node") {
    Rng rng(4);
    std::vector<WeightedEdge> edges;
    for (int i = 0; i < 300; ++i) edges.push_back({rng.below(80), rng.below(80), 1.0});
    const auto a = louvain(80, edges, 5), b = louvain(80, edges, 5);
    CHECK(a == b);
    std::uint32_t next = 0;
    std::vector<bool> seen(80, false);
    for (const auto l : a) {
        if (!seen[l]) {
            CHECK(l == next);
            seen[l] = true;
            ++next;
        }
    }
}

TEST_CASE("mutual-like cliques give same-partition flag and 1/3 strength") {
    std::vector<DirectedInteraction> interactions;
    const std::vector<std::vector<UserId>> cliques{{11, 12, 13}, {21, 22, 23}};
    for (const auto& c : cliques) {
        for (const auto a : c) {
            for (const auto b : c) {
                if (a != b) interactions.push_back({a, b, 1.0});
            }
        }
    }
    const auto p = detect_communities(interactions, 1);
    CHECK(p.sizes.size() == 2);
    const auto within = pair_community(p, 11, 13);
    CHECK(within.same);
    CHECK(within.strength == doctest::Approx(1.0 / 3.0));
    const auto across = pair_community(p, 12, 22);
    CHECK_FALSE(across.same);
    CHECK(across.strength == 0.0);
}

TEST_CASE("no edges: everyone is a singleton") {
    const auto p = detect_communities({}, 1);
    CHECK(p.partition_of.empty());
    CHECK_FALSE(p.lookup(5).has_value());
    const auto pc = pair_community(p, 5, 6);
    CHECK_FALSE(pc.same);
    CHECK(pc.strength == 0.0);
}

TEST_CASE("community_partitions builds one graph per reaction") {
    std::vector<InteractionRecord> history;
    auto make = [](UserId engaged, UserId engaging, Reaction r) {
        InteractionRecord rec;
        rec.engaged_user = engaged;
        rec.engaging_user = engaging;
        rec.tweet_timestamp = 100;
        rec.reactions[index_of(r)] = 200;
        return rec;
    };
    for (const auto& [a, b] : std::vector<std::pair<UserId, UserId>>{{1, 2}, {2, 3}, {3, 1}}) {
        history.push_back(make(a, b, Reaction::like));
        history.push_back(make(b, a, Reaction::like));
    }
    history.push_back(make(7, 8, Reaction::reply));
    const auto parts = community_partitions(history, 3);
    CHECK(pair_community(parts[index_of(Reaction::like)], 1, 3).same);
    CHECK_FALSE(parts[index_of(Reaction::like)].lookup(7).has_value());
    CHECK(pair_community(parts[index_of(Reaction::reply)], 7, 8).same);
    CHECK(pair_community(parts[index_of(Reaction::reply)], 7, 8).strength == 0.5);
    CHECK(parts[index_of(Reaction::quote)].partition_of.empty());
}
