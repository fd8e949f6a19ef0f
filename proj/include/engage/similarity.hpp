#pragma once

#include "engage/record.hpp"

#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

namespace engage {

// |a ∩ b| / |a ∪ b| for sorted, duplicate-free sets; 0 when either set is empty.
double jaccard(std::span<const UserId> a, std::span<const UserId> b);

// All user pairs (a < b) whose follower sets have Jaccard >= threshold.
// All-pairs join with prefix and size filtering over a token inverted index,
// tokens ordered by ascending document frequency.
std::vector<std::pair<UserId, UserId>> similar_user_pairs(const FollowerSets& followers,
                                                          double threshold);

// Connected components of the similarity graph. Each user of `followers` maps
// to the smallest user id in its component, so ids do not depend on
// enumeration order. Users with empty follower sets are singletons.
std::unordered_map<UserId, UserId> similar_user_clusters(const FollowerSets& followers,
                                                         double threshold);

} // namespace engage
