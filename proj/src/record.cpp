#include "engage/record.hpp"

#include <algorithm>

namespace engage {

bool InteractionRecord::any_engagement() const {
    return std::any_of(reactions.begin(), reactions.end(),
                       [](const auto& t) { return t.has_value(); });
}

Timestamp InteractionRecord::event_time() const {
    std::optional<Timestamp> earliest;
    for (const auto& t : reactions) {
        if (t && (!earliest || *t < *earliest)) earliest = t;
    }
    return earliest.value_or(tweet_timestamp);
}

std::optional<std::string> check_invariants(const InteractionRecord& r) {
    if (r.engaged_user == r.engaging_user) {
        return "engaged_user equals engaging_user (" + std::to_string(r.engaged_user) + ")";
    }
    for (std::size_t i = 0; i < kReactionCount; ++i) {
        if (r.reactions[i] && *r.reactions[i] < r.tweet_timestamp) {
            return std::string(kReactionNames[i]) + " timestamp precedes tweet timestamp";
        }
    }
    if (r.engaged_account_created > r.tweet_timestamp) {
        return "engaged account created after tweet";
    }
    if (r.engaging_account_created > r.tweet_timestamp) {
        return "engaging account created after tweet";
    }
    return std::nullopt;
}

std::optional<std::string> check_invariants(const FollowerSets& followers) {
    for (const auto& [user, set] : followers) {
        if (std::binary_search(set.begin(), set.end(), user)) {
            return "user " + std::to_string(user) + " follows itself";
        }
        if (!std::is_sorted(set.begin(), set.end()) ||
            std::adjacent_find(set.begin(), set.end()) != set.end()) {
            return "follower list of user " + std::to_string(user) + " is not sorted/unique";
        }
    }
    return std::nullopt;
}

} // namespace engage
