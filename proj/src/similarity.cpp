#include "engage/similarity.hpp"

#include "engage/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace engage {

namespace {

std::size_t intersection_size(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b) {
    std::size_t i = 0, j = 0, n = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] < b[j]) {
            ++i;
        } else if (b[j] < a[i]) {
            ++j;
        } else {
            ++n;
            ++i;
            ++j;
        }
    }
    return n;
}

// Smallest overlap any set of size n must share with a partner at Jaccard >= t,
// rounded down a hair so floating error can only lengthen prefixes.
std::size_t min_overlap(std::size_t n, double t) {
    const double need = std::ceil(t * static_cast<double>(n) - 1e-9);
    return static_cast<std::size_t>(std::max(1.0, need));
}

class DisjointSets {
public:
    explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (a > b) std::swap(a, b);
        parent_[b] = a; // smaller index wins, so roots are component minima
    }

private:
    std::vector<std::size_t> parent_;
};

} // namespace

double jaccard(std::span<const UserId> a, std::span<const UserId> b) {
    if (a.empty() || b.empty()) return 0.0;
    std::size_t i = 0, j = 0, inter = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] < b[j]) {
            ++i;
        } else if (b[j] < a[i]) {
            ++j;
        } else {
            ++inter;
            ++i;
            ++j;
        }
    }
    return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

std::vector<std::pair<UserId, UserId>> similar_user_pairs(const FollowerSets& followers,
                                                          double threshold) {
    if (!(threshold > 0.0 && threshold <= 1.0)) {
        throw ConfigError("jaccard threshold must lie in (0, 1]");
    }
    std::vector<UserId> users;
    users.reserve(followers.size());
    for (const auto& [u, set] : followers) {
        if (!set.empty()) users.push_back(u);
    }

    // Rank follower tokens by ascending frequency (ties by id).
    std::unordered_map<UserId, std::size_t> freq;
    for (const UserId u : users) {
        for (const UserId f : followers.at(u)) ++freq[f];
    }
    std::vector<std::pair<std::size_t, UserId>> order;
    order.reserve(freq.size());
    for (const auto& [tok, n] : freq) order.emplace_back(n, tok);
    std::sort(order.begin(), order.end());
    std::unordered_map<UserId, std::uint32_t> rank;
    rank.reserve(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) rank[order[i].second] = static_cast<std::uint32_t>(i);

    std::vector<std::vector<std::uint32_t>> sets(users.size());
    for (std::size_t i = 0; i < users.size(); ++i) {
        const auto& raw = followers.at(users[i]);
        auto& s = sets[i];
        s.reserve(raw.size());
        for (const UserId f : raw) s.push_back(rank.at(f));
        std::sort(s.begin(), s.end());
    }

    // Probe in ascending size so every indexed set is no larger than the probe.
    std::vector<std::size_t> by_size(users.size());
    std::iota(by_size.begin(), by_size.end(), 0);
    std::stable_sort(by_size.begin(), by_size.end(),
                     [&](std::size_t a, std::size_t b) { return sets[a].size() < sets[b].size(); });

    std::vector<std::vector<std::size_t>> index(order.size());
    std::vector<std::size_t> seen_stamp(users.size(), SIZE_MAX);
    std::vector<std::pair<UserId, UserId>> pairs;
    for (const std::size_t s_idx : by_size) {
        const auto& s = sets[s_idx];
        const std::size_t n = s.size();
        const std::size_t prefix = n - min_overlap(n, threshold) + 1;
        const double min_size = threshold * static_cast<double>(n) - 1e-9;
        for (std::size_t p = 0; p < prefix; ++p) {
            for (const std::size_t r_idx : index[s[p]]) {
                if (seen_stamp[r_idx] == s_idx) continue;
                seen_stamp[r_idx] = s_idx;
                const auto& r = sets[r_idx];
                if (static_cast<double>(r.size()) < min_size) continue;
                const std::size_t inter = intersection_size(r, s);
                const double sim = static_cast<double>(inter) /
                                   static_cast<double>(r.size() + s.size() - inter);
                if (sim >= threshold) {
                    pairs.emplace_back(std::min(users[r_idx], users[s_idx]),
                                       std::max(users[r_idx], users[s_idx]));
                }
            }
        }
        for (std::size_t p = 0; p < prefix; ++p) index[s[p]].push_back(s_idx);
    }
    std::sort(pairs.begin(), pairs.end());
    return pairs;
}

std::unordered_map<UserId, UserId> similar_user_clusters(const FollowerSets& followers,
                                                         double threshold) {
    const auto pairs = similar_user_pairs(followers, threshold);
    std::vector<UserId> users;
    users.reserve(followers.size());
    for (const auto& [u, set] : followers) users.push_back(u); // std::map: ascending ids
    std::unordered_map<UserId, std::size_t> pos;
    pos.reserve(users.size());
    for (std::size_t i = 0; i < users.size(); ++i) pos[users[i]] = i;
    DisjointSets dsu(users.size());
    for (const auto& [a, b] : pairs) dsu.unite(pos.at(a), pos.at(b));
    std::unordered_map<UserId, UserId> clusters;
    clusters.reserve(users.size());
    for (std::size_t i = 0; i < users.size(); ++i) clusters[users[i]] = users[dsu.find(i)];
    return clusters;
}

} // namespace engage
