#include "engage/feature_store.hpp"

#include "engage/error.hpp"
#include "engage/log_io.hpp"
#include "engage/random.hpp"
#include "engage/similarity.hpp"
#include "engage/text.hpp"

#include <algorithm>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

namespace engage {

void ReactionCounts::add(std::size_t reaction, std::uint64_t k) {
    const std::uint64_t sum = static_cast<std::uint64_t>(n[reaction]) + k;
    n[reaction] = static_cast<std::uint32_t>(std::min<std::uint64_t>(sum, UINT32_MAX));
}

ReactionCounts& ReactionCounts::operator+=(const ReactionCounts& o) {
    for (std::size_t i = 0; i < kReactionCount; ++i) add(i, o.n[i]);
    return *this;
}

ReactionCounts minus(const ReactionCounts& a, const ReactionCounts& b) {
    ReactionCounts out;
    for (std::size_t i = 0; i < kReactionCount; ++i) out.n[i] = a.n[i] > b.n[i] ? a.n[i] - b.n[i] : 0;
    return out;
}

std::size_t PairKeyHash::operator()(const PairKey& k) const noexcept {
    return static_cast<std::size_t>(mix64(k.first * 0x9e3779b97f4a7c15ULL ^ mix64(k.second)));
}

namespace {

template <typename Map, typename Key>
ReactionCounts find_or_zero(const Map& m, const Key& k) {
    const auto it = m.find(k);
    return it == m.end() ? ReactionCounts{} : it->second;
}

} // namespace

ReactionCounts FeatureStore::pair(UserId engaged, UserId engaging) const {
    return find_or_zero(pair_counts, PairKey{engaged, engaging});
}
ReactionCounts FeatureStore::received(UserId engaged) const { return find_or_zero(received_counts, engaged); }
ReactionCounts FeatureStore::given(UserId engaging) const { return find_or_zero(given_counts, engaging); }
ReactionCounts FeatureStore::given_in_language(UserId engaging, std::uint32_t language) const {
    return find_or_zero(given_by_language, PairKey{engaging, language});
}
ReactionCounts FeatureStore::with_hashtag(UserId engaging, std::uint32_t hashtag) const {
    return find_or_zero(hashtag_counts, PairKey{engaging, hashtag});
}
ReactionCounts FeatureStore::tweet(TweetId tweet) const { return find_or_zero(tweet_counts, tweet); }

ReactionCounts FeatureStore::similar_users(UserId engaged, UserId engaging) const {
    const auto it = similar_user_clusters.find(engaged);
    if (it == similar_user_clusters.end()) return {};
    const ReactionCounts cluster = find_or_zero(cluster_pair_counts, PairKey{it->second, engaging});
    return minus(cluster, pair(engaged, engaging));
}

void StoreBuilder::add(const InteractionRecord& r) {
    if (!r.any_engagement()) return;
    ReactionCounts c;
    for (std::size_t k = 0; k < kReactionCount; ++k) {
        if (r.reactions[k]) c.n[k] = 1;
    }
    store_.pair_counts[{r.engaged_user, r.engaging_user}] += c;
    store_.received_counts[r.engaged_user] += c;
    store_.given_counts[r.engaging_user] += c;
    store_.given_by_language[{r.engaging_user, r.language}] += c;
    for (std::size_t i = 0; i < r.hashtags.size(); ++i) {
        const auto h = r.hashtags[i];
        if (std::find(r.hashtags.begin(), r.hashtags.begin() + static_cast<std::ptrdiff_t>(i), h) !=
            r.hashtags.begin() + static_cast<std::ptrdiff_t>(i)) {
            continue; // each distinct hashtag counts once per row
        }
        store_.hashtag_counts[{r.engaging_user, h}] += c;
    }
    store_.tweet_counts[r.tweet_id] += c;
}

FeatureStore StoreBuilder::finish(std::unordered_map<UserId, UserId> clusters) && {
    store_.similar_user_clusters = std::move(clusters);
    for (const auto& [key, counts] : store_.pair_counts) {
        const auto it = store_.similar_user_clusters.find(key.first);
        if (it == store_.similar_user_clusters.end()) continue;
        store_.cluster_pair_counts[{it->second, key.second}] += counts;
    }

    std::array<std::vector<DirectedInteraction>, kReactionCount> edges;
    // Sorted iteration keeps edge order, and therefore partitions, reproducible.
    std::vector<std::pair<PairKey, ReactionCounts>> sorted(store_.pair_counts.begin(),
                                                          store_.pair_counts.end());
    std::sort(sorted.begin(), sorted.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [key, counts] : sorted) {
        for (std::size_t k = 0; k < kReactionCount; ++k) {
            if (counts.n[k] > 0) {
                edges[k].push_back({key.first, key.second, static_cast<double>(counts.n[k])});
            }
        }
    }
    for (std::size_t k = 0; k < kReactionCount; ++k) {
        store_.communities[k] = detect_communities(edges[k], config_.seed + k);
    }
    return std::move(store_);
}

FeatureStore build_store(std::span<const InteractionRecord> history,
                         const std::unordered_map<UserId, UserId>& clusters,
                         const StoreConfig& config) {
    StoreBuilder builder(config);
    for (const auto& r : history) builder.add(r);
    return std::move(builder).finish(clusters);
}

FeatureStore build_store(std::span<const InteractionRecord> history, const FollowerSets& followers,
                         const StoreConfig& config) {
    return build_store(history, similar_user_clusters(followers, config.jaccard_threshold), config);
}

// Serialization -------------------------------------------------------------

namespace {

std::string counts_text(const ReactionCounts& c) {
    return std::to_string(c.n[0]) + '\t' + std::to_string(c.n[1]) + '\t' + std::to_string(c.n[2]) +
           '\t' + std::to_string(c.n[3]);
}

ReactionCounts parse_counts(std::span<const std::string_view> f) {
    ReactionCounts c;
    for (std::size_t i = 0; i < kReactionCount; ++i) {
        const std::uint64_t v = text::parse_u64(f[i], "count");
        if (v > UINT32_MAX) throw DataError("count out of range");
        c.n[i] = static_cast<std::uint32_t>(v);
    }
    return c;
}

void write_pairs(std::ostream& out, std::string_view name, const PairCounts& m) {
    std::vector<std::pair<PairKey, ReactionCounts>> rows(m.begin(), m.end());
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    out << '[' << name << "]\t" << rows.size() << '\n';
    for (const auto& [k, c] : rows) out << k.first << '\t' << k.second << '\t' << counts_text(c) << '\n';
}

void write_keys(std::ostream& out, std::string_view name, const KeyCounts& m) {
    std::vector<std::pair<std::uint64_t, ReactionCounts>> rows(m.begin(), m.end());
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    out << '[' << name << "]\t" << rows.size() << '\n';
    for (const auto& [k, c] : rows) out << k << '\t' << counts_text(c) << '\n';
}

void write_user_map(std::ostream& out, std::string_view name,
                    const std::unordered_map<UserId, std::uint64_t>& m) {
    std::vector<std::pair<UserId, std::uint64_t>> rows(m.begin(), m.end());
    std::sort(rows.begin(), rows.end());
    out << '[' << name << "]\t" << rows.size() << '\n';
    for (const auto& [k, v] : rows) out << k << '\t' << v << '\n';
}

constexpr std::array<std::string_view, kReactionCount> kCommunitySections{
    "community.like", "community.reply", "community.retweet", "community.quote"};

class SectionReader {
public:
    SectionReader(std::istream& in, ArtifactMeta& meta) : in_(in), meta_(meta) {}

    std::size_t open(std::string_view name) {
        const std::string& line = next("section [" + std::string(name) + "]");
        const std::string prefix = "[" + std::string(name) + "]\t";
        if (!text::starts_with(line, prefix)) {
            throw DataError("feature store: expected section [" + std::string(name) + "] at line " +
                            std::to_string(line_no_));
        }
        return text::parse_u64(std::string_view(line).substr(prefix.size()), "section size");
    }

    std::vector<std::string_view> fields(std::size_t expected) {
        const std::string& line = next("section row");
        auto f = text::split(line, '\t');
        if (f.size() != expected) {
            throw DataError("feature store: line " + std::to_string(line_no_) + ": expected " +
                            std::to_string(expected) + " fields");
        }
        return f;
    }

    std::size_t line_no() const { return line_no_; }

private:
    const std::string& next(const std::string& what) {
        while (text::read_line(in_, line_)) {
            ++line_no_;
            if (line_.empty() || consume_meta_line(line_, meta_)) continue;
            return line_;
        }
        throw DataError("feature store: truncated before " + what);
    }

    std::istream& in_;
    ArtifactMeta& meta_;
    std::string line_;
    std::size_t line_no_ = 1;
};

void read_pairs(SectionReader& rd, std::string_view name, PairCounts& m) {
    const std::size_t n = rd.open(name);
    m.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto f = rd.fields(6);
        m[{text::parse_u64(f[0], "key"), text::parse_u64(f[1], "key")}] =
            parse_counts(std::span(f).subspan(2));
    }
}

void read_keys(SectionReader& rd, std::string_view name, KeyCounts& m) {
    const std::size_t n = rd.open(name);
    m.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto f = rd.fields(5);
        m[text::parse_u64(f[0], "key")] = parse_counts(std::span(f).subspan(1));
    }
}

} // namespace

void FeatureStore::save(std::ostream& out, const ArtifactMeta& meta) const {
    out << "#feature-store v1\n";
    write_meta(out, meta);
    write_pairs(out, "pair_counts", pair_counts);
    write_keys(out, "received_counts", received_counts);
    write_keys(out, "given_counts", given_counts);
    write_pairs(out, "given_by_language", given_by_language);
    write_pairs(out, "hashtag_counts", hashtag_counts);
    write_keys(out, "tweet_counts", tweet_counts);
    write_user_map(out, "similar_user_clusters",
                   std::unordered_map<UserId, std::uint64_t>(similar_user_clusters.begin(),
                                                            similar_user_clusters.end()));
    write_pairs(out, "cluster_pair_counts", cluster_pair_counts);
    for (std::size_t k = 0; k < kReactionCount; ++k) {
        write_user_map(out, kCommunitySections[k],
                       std::unordered_map<UserId, std::uint64_t>(communities[k].partition_of.begin(),
                                                                communities[k].partition_of.end()));
    }
    out << "#end\n";
}

void FeatureStore::save(const std::filesystem::path& path, const ArtifactMeta& meta) const {
    auto out = open_output(path);
    save(out, meta);
}

FeatureStore FeatureStore::load(std::istream& in, ArtifactMeta* meta) {
    std::string line;
    if (!text::read_line(in, line) || line != "#feature-store v1") {
        throw DataError("feature store: bad header");
    }
    ArtifactMeta m;
    SectionReader rd(in, m);
    FeatureStore s;
    read_pairs(rd, "pair_counts", s.pair_counts);
    read_keys(rd, "received_counts", s.received_counts);
    read_keys(rd, "given_counts", s.given_counts);
    read_pairs(rd, "given_by_language", s.given_by_language);
    read_pairs(rd, "hashtag_counts", s.hashtag_counts);
    read_keys(rd, "tweet_counts", s.tweet_counts);
    {
        const std::size_t n = rd.open("similar_user_clusters");
        s.similar_user_clusters.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto f = rd.fields(2);
            s.similar_user_clusters[text::parse_u64(f[0], "user")] = text::parse_u64(f[1], "cluster");
        }
    }
    read_pairs(rd, "cluster_pair_counts", s.cluster_pair_counts);
    for (std::size_t k = 0; k < kReactionCount; ++k) {
        const std::size_t n = rd.open(kCommunitySections[k]);
        auto& part = s.communities[k];
        part.partition_of.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto f = rd.fields(2);
            const std::uint64_t id = text::parse_u64(f[1], "partition");
            if (id >= n) throw DataError("feature store: partition id out of range");
            part.partition_of[text::parse_u64(f[0], "user")] = static_cast<std::uint32_t>(id);
            if (id >= part.sizes.size()) part.sizes.resize(id + 1, 0);
            ++part.sizes[id];
        }
    }
    if (!text::read_line(in, line) || line != "#end") throw DataError("feature store: missing #end");
    if (meta) *meta = std::move(m);
    return s;
}

FeatureStore FeatureStore::load(const std::filesystem::path& path, ArtifactMeta* meta) {
    auto in = open_input(path);
    return load(in, meta);
}

} // namespace engage
