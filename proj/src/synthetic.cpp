#include "engage/synthetic.hpp"

#include "engage/error.hpp"
#include "engage/random.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

namespace engage {

namespace {

struct UserProfile {
    double popularity = 0.0;
    std::uint32_t language = 0;
    std::uint32_t preferred_topic = 0;
    bool verified = false;
    Timestamp created = 0;
    std::uint64_t extra_followers = 0;
    std::uint64_t extra_following = 0;
};

struct Tweet {
    TweetId id = 0;
    UserId author = 0;
    std::uint32_t topic = 0;
    std::vector<TokenId> tokens;
    std::vector<std::uint32_t> hashtags;
    MediaFlags media;
    TweetType type = TweetType::top_level;
    Timestamp timestamp = 0;
};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void validate(const GeneratorConfig& c) {
    auto fail = [](const std::string& msg) { throw ConfigError("generator: " + msg); };
    if (c.users < 2) fail("users must be >= 2");
    if (c.days < 2) fail("days must be >= 2");
    if (c.embedding_dim < 2) fail("embedding_dim must be >= 2");
    if (c.rows < c.users) fail("rows must be >= users (every user engages at least once)");
    if (c.tweets < 1) fail("tweets must be >= 1");
    if (c.topics < 1 || c.vocab < c.topics) fail("need 1 <= topics <= vocab");
    if (c.languages < 1) fail("languages must be >= 1");
    if (c.hashtag_vocab < 1) fail("hashtag_vocab must be >= 1");
    if (c.group_size < 1) fail("group_size must be >= 1");
    if (c.tokens_min > c.tokens_max) fail("tokens_min > tokens_max");
    for (double p : c.priors) {
        if (!(p > 0.0 && p < 1.0)) fail("reaction priors must lie in (0,1)");
    }
}

// Per-pair latent affinity; a pure function of the pair so it persists across rows.
double pair_affinity(std::uint64_t seed, UserId engaging, UserId engaged) {
    const std::uint64_t h1 = mix64(seed ^ mix64(engaging * 0x9e3779b97f4a7c15ULL + engaged));
    const std::uint64_t h2 = mix64(h1);
    const double u1 = (static_cast<double>(h1 >> 11) + 0.5) * 0x1.0p-53;
    const double u2 = static_cast<double>(h2 >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

// Intercept b such that mean(sigmoid(b + logits)) == target.
double calibrate_intercept(const std::vector<double>& logits, double target) {
    double lo = -40.0;
    double hi = 40.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        double sum = 0.0;
        for (double z : logits) sum += sigmoid(mid + z);
        if (sum / static_cast<double>(logits.size()) < target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

} // namespace

SyntheticData generate_synthetic(const GeneratorConfig& c, std::uint64_t seed) {
    validate(c);
    Rng rng(seed);
    const std::size_t U = c.users;
    const Timestamp span = static_cast<Timestamp>(c.days) * kSecondsPerDay;
    const Timestamp end_time = c.start_time + span;

    // Users.
    std::vector<UserProfile> users(U);
    for (auto& u : users) {
        u.popularity = rng.normal();
        u.language = static_cast<std::uint32_t>(rng.below(c.languages));
        u.preferred_topic = static_cast<std::uint32_t>(rng.below(c.topics));
        u.verified = rng.bernoulli(sigmoid(1.5 * u.popularity - 2.5));
        u.created = c.start_time - static_cast<Timestamp>(rng.uniform(30.0, 3650.0) * kSecondsPerDay);
        u.extra_followers = static_cast<std::uint64_t>(std::exp(3.0 + 1.5 * u.popularity));
        u.extra_following = static_cast<std::uint64_t>(std::exp(rng.uniform(1.0, 6.0)));
    }

    // Follow graph: dense inside small groups, sparse popularity-weighted links outside.
    std::vector<std::set<UserId>> following(U);
    std::vector<double> pop_cdf(U);
    {
        double acc = 0.0;
        for (std::size_t i = 0; i < U; ++i) {
            acc += std::exp(users[i].popularity);
            pop_cdf[i] = acc;
        }
    }
    auto popular_user = [&]() -> std::size_t {
        const double x = rng.uniform() * pop_cdf.back();
        const auto it = std::upper_bound(pop_cdf.begin(), pop_cdf.end(), x);
        return std::min<std::size_t>(static_cast<std::size_t>(it - pop_cdf.begin()), U - 1);
    };
    for (std::size_t v = 0; v < U; ++v) {
        const std::size_t g0 = (v / c.group_size) * c.group_size;
        const std::size_t g1 = std::min(U, g0 + c.group_size);
        for (std::size_t w = g0; w < g1; ++w) {
            if (w != v && rng.bernoulli(c.follow_in_group)) following[v].insert(w);
        }
        for (std::size_t k = 0; k < c.random_follows; ++k) {
            const std::size_t w = popular_user();
            if (w != v) following[v].insert(w);
        }
    }
    SyntheticData out;
    for (std::size_t u = 0; u < U; ++u) out.followers[u];
    for (std::size_t v = 0; v < U; ++v) {
        for (UserId w : following[v]) out.followers[w].push_back(v);
    }
    for (auto& [user, set] : out.followers) std::sort(set.begin(), set.end());

    // Topic-clustered token embeddings.
    const std::size_t D = c.embedding_dim;
    std::vector<std::vector<double>> centers(c.topics, std::vector<double>(D));
    for (auto& center : centers) {
        for (auto& x : center) x = rng.normal();
    }
    out.token_embeddings = EmbeddingMatrix(c.vocab, D);
    out.token_topic.resize(c.vocab);
    std::vector<std::vector<TokenId>> topic_tokens(c.topics);
    for (std::size_t t = 0; t < c.vocab; ++t) {
        const auto topic = static_cast<std::uint32_t>(t % c.topics);
        out.token_topic[t] = topic;
        topic_tokens[topic].push_back(static_cast<TokenId>(t));
        auto row = out.token_embeddings.row(t);
        for (std::size_t j = 0; j < D; ++j) row[j] = centers[topic][j] + c.embedding_noise * rng.normal();
    }

    // Tweets.
    std::vector<Tweet> tweets(c.tweets);
    std::vector<std::vector<std::size_t>> tweets_by_author(U);
    for (std::size_t j = 0; j < c.tweets; ++j) {
        Tweet& t = tweets[j];
        t.id = mix64(seed + 0x51ed27ULL * (j + 1));
        t.author = popular_user();
        t.topic = static_cast<std::uint32_t>(rng.below(c.topics));
        const std::size_t len = c.tokens_min + rng.below(c.tokens_max - c.tokens_min + 1);
        for (std::size_t k = 0; k < len; ++k) {
            if (rng.bernoulli(c.topic_purity)) {
                const auto& pool = topic_tokens[t.topic];
                t.tokens.push_back(pool[rng.below(pool.size())]);
            } else {
                t.tokens.push_back(static_cast<TokenId>(rng.below(c.vocab)));
            }
        }
        const double h = rng.uniform();
        const std::size_t n_tags = h < 0.5 ? 0 : h < 0.75 ? 1 : h < 0.9 ? 2 : 3;
        for (std::size_t k = 0; k < n_tags; ++k) {
            t.hashtags.push_back(static_cast<std::uint32_t>(rng.below(c.hashtag_vocab)));
        }
        t.media = {rng.bernoulli(0.3), rng.bernoulli(0.1), rng.bernoulli(0.05), rng.bernoulli(0.2)};
        const double ty = rng.uniform();
        t.type = ty < 0.6 ? TweetType::top_level
                 : ty < 0.75 ? TweetType::retweet
                 : ty < 0.85 ? TweetType::quote
                             : TweetType::reply_thread;
        t.timestamp = c.start_time + static_cast<Timestamp>(rng.below(static_cast<std::uint64_t>(span - 3600)));
        tweets_by_author[t.author].push_back(j);
    }

    // Global topic appeal per reaction.
    std::vector<std::array<double, kReactionCount>> topic_appeal(c.topics);
    for (auto& a : topic_appeal) {
        for (auto& x : a) x = c.topic_strength * rng.normal();
    }

    // Impressions: every user engages at least once, then uniformly random users.
    std::vector<std::size_t> first_pass(U);
    for (std::size_t i = 0; i < U; ++i) first_pass[i] = i;
    rng.shuffle(first_pass);

    struct Impression {
        std::size_t user;
        std::size_t tweet;
        Timestamp seen;
    };
    std::vector<Impression> impressions;
    impressions.reserve(c.rows);
    std::vector<std::array<double, kReactionCount>> latent(c.rows);
    for (std::size_t i = 0; i < c.rows; ++i) {
        const std::size_t u = i < U ? first_pass[i] : rng.below(U);
        std::size_t tweet = 0;
        bool found = false;
        for (int attempt = 0; attempt < 32 && !found; ++attempt) {
            if (!following[u].empty() && rng.bernoulli(c.followed_author_share)) {
                auto it = following[u].begin();
                std::advance(it, static_cast<std::ptrdiff_t>(rng.below(following[u].size())));
                const auto& own = tweets_by_author[*it];
                if (own.empty()) continue;
                tweet = own[rng.below(own.size())];
            } else {
                tweet = rng.below(c.tweets);
            }
            found = tweets[tweet].author != u;
        }
        if (!found) {
            // Every tweet drawn so far was authored by u; fall back to a linear scan.
            for (std::size_t j = 0; j < c.tweets && !found; ++j) {
                tweet = (j + i) % c.tweets;
                found = tweets[tweet].author != u;
            }
            if (!found) throw ConfigError("generator: every tweet is authored by one user");
        }
        const Tweet& t = tweets[tweet];
        const Timestamp seen = std::min<Timestamp>(
            end_time - 1, t.timestamp + static_cast<Timestamp>(rng.exponential(3600.0)));
        impressions.push_back({u, tweet, seen});

        const double interest =
            (t.topic == users[u].preferred_topic ? 1.0 : 0.0) - 1.0 / static_cast<double>(c.topics);
        const double affinity = pair_affinity(seed, u, t.author);
        for (std::size_t r = 0; r < kReactionCount; ++r) {
            latent[i][r] = topic_appeal[t.topic][r] + c.interest_strength * interest +
                           c.pair_strength * affinity +
                           c.popularity_strength * users[t.author].popularity;
        }
    }

    std::array<double, kReactionCount> intercept{};
    for (std::size_t r = 0; r < kReactionCount; ++r) {
        std::vector<double> z(c.rows);
        for (std::size_t i = 0; i < c.rows; ++i) z[i] = latent[i][r];
        intercept[r] = calibrate_intercept(z, c.priors[r]);
    }

    out.log.reserve(c.rows);
    for (std::size_t i = 0; i < c.rows; ++i) {
        const Impression& imp = impressions[i];
        const Tweet& t = tweets[imp.tweet];
        const UserProfile& author = users[t.author];
        const UserProfile& viewer = users[imp.user];
        InteractionRecord r;
        r.tweet_id = t.id;
        r.engaged_user = t.author;
        r.engaging_user = imp.user;
        r.tweet_tokens = t.tokens;
        r.hashtags = t.hashtags;
        r.language = author.language;
        r.media = t.media;
        r.tweet_type = t.type;
        r.tweet_timestamp = t.timestamp;
        for (std::size_t k = 0; k < kReactionCount; ++k) {
            const double p = sigmoid(intercept[k] + latent[i][k]);
            const bool hit = rng.bernoulli(p);
            const Timestamp delay = static_cast<Timestamp>(rng.exponential(1800.0));
            if (hit) r.reactions[k] = std::min<Timestamp>(end_time - 1, imp.seen + delay);
        }
        r.engaged_follower_count = out.followers[t.author].size() + author.extra_followers;
        r.engaged_following_count = following[t.author].size() + author.extra_following;
        r.engaging_follower_count = out.followers[imp.user].size() + viewer.extra_followers;
        r.engaging_following_count = following[imp.user].size() + viewer.extra_following;
        r.engaged_verified = author.verified;
        r.engaging_verified = viewer.verified;
        r.engaging_follows_engaged = following[imp.user].count(t.author) != 0;
        r.engaged_account_created = author.created;
        r.engaging_account_created = viewer.created;
        out.log.push_back(std::move(r));
    }
    return out;
}

} // namespace engage
