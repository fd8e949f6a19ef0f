#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace engage {

using TweetId = std::uint64_t;
using UserId = std::uint64_t;
using TokenId = std::uint32_t;
using Timestamp = std::int64_t; // seconds since epoch, UTC

inline constexpr Timestamp kSecondsPerDay = 86400;

enum class Reaction : std::size_t { like = 0, reply = 1, retweet = 2, quote = 3 };
inline constexpr std::size_t kReactionCount = 4;
inline constexpr std::array<Reaction, kReactionCount> kReactions{
    Reaction::like, Reaction::reply, Reaction::retweet, Reaction::quote};
inline constexpr std::array<std::string_view, kReactionCount> kReactionNames{
    "like", "reply", "retweet", "quote"};

constexpr std::size_t index_of(Reaction r) { return static_cast<std::size_t>(r); }

enum class TweetType : std::uint8_t { top_level = 0, retweet = 1, quote = 2, reply_thread = 3 };
inline constexpr std::size_t kTweetTypeCount = 4;

struct MediaFlags {
    bool photo = false;
    bool video = false;
    bool gif = false;
    bool link = false;

    // photo=1, video=2, gif=4, link=8
    std::uint8_t bits() const {
        return static_cast<std::uint8_t>(photo | (video << 1) | (gif << 2) | (link << 3));
    }
    static MediaFlags from_bits(std::uint8_t b) {
        return {(b & 1) != 0, (b & 2) != 0, (b & 4) != 0, (b & 8) != 0};
    }
    bool operator==(const MediaFlags&) const = default;
};

// One impression: a tweet by `engaged_user` shown to `engaging_user`, with the
// timestamp of every reaction that happened (absent = no engagement).
struct InteractionRecord {
    TweetId tweet_id = 0;
    UserId engaged_user = 0;
    UserId engaging_user = 0;
    std::vector<TokenId> tweet_tokens;
    std::vector<std::uint32_t> hashtags;
    std::uint32_t language = 0;
    MediaFlags media;
    TweetType tweet_type = TweetType::top_level;
    Timestamp tweet_timestamp = 0;
    std::array<std::optional<Timestamp>, kReactionCount> reactions;
    std::uint64_t engaged_follower_count = 0;
    std::uint64_t engaged_following_count = 0;
    std::uint64_t engaging_follower_count = 0;
    std::uint64_t engaging_following_count = 0;
    bool engaged_verified = false;
    bool engaging_verified = false;
    bool engaging_follows_engaged = false;
    Timestamp engaged_account_created = 0;
    Timestamp engaging_account_created = 0;

    bool engaged(Reaction r) const { return reactions[index_of(r)].has_value(); }
    bool any_engagement() const;
    // Earliest reaction time for positives, tweet creation time otherwise.
    Timestamp event_time() const;

    bool operator==(const InteractionRecord&) const = default;
};

// Empty when every record invariant holds, otherwise a description of the first violation.
std::optional<std::string> check_invariants(const InteractionRecord& r);

// user -> sorted, duplicate-free list of users who follow them.
using FollowerSets = std::map<UserId, std::vector<UserId>>;

std::optional<std::string> check_invariants(const FollowerSets& followers);

// Dense row-major V x D token embedding table.
struct EmbeddingMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    EmbeddingMatrix() = default;
    EmbeddingMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}

    std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
    std::span<double> row(std::size_t i) { return {values.data() + i * cols, cols}; }

    bool operator==(const EmbeddingMatrix&) const = default;
};

} // namespace engage
