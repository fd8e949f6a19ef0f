#include "engage/log_io.hpp"

#include "engage/error.hpp"
#include "engage/text.hpp"

#include <algorithm>
#include <ostream>

namespace engage {

namespace {

std::string line_error(std::size_t line_no, const std::string& msg) {
    return "line " + std::to_string(line_no) + ": " + msg;
}

std::optional<Timestamp> parse_optional_ts(std::string_view s, std::string_view what) {
    if (s.empty()) return std::nullopt;
    return text::parse_i64(s, what);
}

MediaFlags parse_media(std::string_view s) {
    if (s.size() != 4 || s.find_first_not_of("01") != std::string_view::npos) {
        throw DataError("invalid media_flags (expected 4 chars of 0/1): '" + std::string(s) + "'");
    }
    return {s[0] == '1', s[1] == '1', s[2] == '1', s[3] == '1'};
}

std::string format_u32_list(const std::vector<std::uint32_t>& v) {
    return text::join(std::span<const std::uint32_t>(v), ',');
}

} // namespace

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    return out;
}

InteractionRecord parse_log_line(std::string_view line, std::size_t line_no) {
    const auto f = text::split(line, '\t');
    if (f.size() != kLogFieldCount) {
        throw DataError(line_error(line_no, "expected " + std::to_string(kLogFieldCount) +
                                                " fields, got " + std::to_string(f.size())));
    }
    InteractionRecord r;
    try {
        r.tweet_id = text::parse_u64(f[0], "tweet_id");
        r.engaged_user = text::parse_u64(f[1], "engaged_user");
        r.engaging_user = text::parse_u64(f[2], "engaging_user");
        r.tweet_tokens = text::parse_u32_list(f[3], "tweet_tokens");
        r.hashtags = text::parse_u32_list(f[4], "hashtags");
        const std::uint64_t lang = text::parse_u64(f[5], "language");
        if (lang > UINT32_MAX) throw DataError("language out of range");
        r.language = static_cast<std::uint32_t>(lang);
        r.media = parse_media(f[6]);
        const std::uint64_t type = text::parse_u64(f[7], "tweet_type");
        if (type >= kTweetTypeCount) {
            throw DataError("tweet_type out of range: " + std::string(f[7]));
        }
        r.tweet_type = static_cast<TweetType>(type);
        r.tweet_timestamp = text::parse_i64(f[8], "tweet_timestamp");
        for (std::size_t i = 0; i < kReactionCount; ++i) {
            r.reactions[i] = parse_optional_ts(f[9 + i], kReactionNames[i]);
        }
        r.engaged_follower_count = text::parse_u64(f[13], "engaged_follower_count");
        r.engaged_following_count = text::parse_u64(f[14], "engaged_following_count");
        r.engaging_follower_count = text::parse_u64(f[15], "engaging_follower_count");
        r.engaging_following_count = text::parse_u64(f[16], "engaging_following_count");
        r.engaged_verified = text::parse_bool01(f[17], "engaged_verified");
        r.engaging_verified = text::parse_bool01(f[18], "engaging_verified");
        r.engaging_follows_engaged = text::parse_bool01(f[19], "engaging_follows_engaged");
        r.engaged_account_created = text::parse_i64(f[20], "engaged_account_created");
        r.engaging_account_created = text::parse_i64(f[21], "engaging_account_created");
    } catch (const DataError& e) {
        throw DataError(line_error(line_no, e.what()));
    }
    if (auto violation = check_invariants(r)) {
        throw DataError(line_error(line_no, *violation));
    }
    return r;
}

std::string format_log_line(const InteractionRecord& r) {
    std::string s;
    s.reserve(256);
    auto field = [&s](const std::string& v) {
        s += v;
        s.push_back('\t');
    };
    field(std::to_string(r.tweet_id));
    field(std::to_string(r.engaged_user));
    field(std::to_string(r.engaging_user));
    field(format_u32_list(r.tweet_tokens));
    field(format_u32_list(r.hashtags));
    field(std::to_string(r.language));
    field(std::string{r.media.photo ? '1' : '0', r.media.video ? '1' : '0',
                      r.media.gif ? '1' : '0', r.media.link ? '1' : '0'});
    field(std::to_string(static_cast<unsigned>(r.tweet_type)));
    field(std::to_string(r.tweet_timestamp));
    for (const auto& t : r.reactions) field(t ? std::to_string(*t) : std::string());
    field(std::to_string(r.engaged_follower_count));
    field(std::to_string(r.engaged_following_count));
    field(std::to_string(r.engaging_follower_count));
    field(std::to_string(r.engaging_following_count));
    field(r.engaged_verified ? "1" : "0");
    field(r.engaging_verified ? "1" : "0");
    field(r.engaging_follows_engaged ? "1" : "0");
    field(std::to_string(r.engaged_account_created));
    s += std::to_string(r.engaging_account_created);
    return s;
}

LogReader::LogReader(const std::filesystem::path& path)
    : in_(open_input(path)), path_(path.string()) {
    if (!text::read_line(in_, line_)) {
        done_ = true; // zero-byte file: empty log
        return;
    }
    line_no_ = 1;
    if (line_ != kLogHeader) {
        throw DataError(path_ + ": bad header, expected '" + std::string(kLogHeader) + "'");
    }
}

std::optional<InteractionRecord> LogReader::next() {
    while (!done_) {
        if (!text::read_line(in_, line_)) {
            throw DataError(path_ + ": truncated log, missing #records footer after line " +
                            std::to_string(line_no_));
        }
        ++line_no_;
        if (line_.empty()) continue;
        if (line_[0] == '#') {
            if (consume_meta_line(line_, meta_)) continue;
            if (text::starts_with(line_, "#records\t")) {
                const std::uint64_t expected =
                    text::parse_u64(std::string_view(line_).substr(9), "record count");
                if (expected != records_) {
                    throw DataError(path_ + ": footer declares " + std::to_string(expected) +
                                    " records, found " + std::to_string(records_));
                }
                done_ = true;
                return std::nullopt;
            }
            throw DataError(line_error(line_no_, "unknown directive '" + line_ + "'"));
        }
        ++records_;
        return parse_log_line(line_, line_no_);
    }
    return std::nullopt;
}

std::vector<InteractionRecord> read_log(const std::filesystem::path& path, ArtifactMeta* meta) {
    LogReader reader(path);
    std::vector<InteractionRecord> out;
    while (auto r = reader.next()) out.push_back(std::move(*r));
    if (meta) *meta = reader.meta();
    return out;
}

void write_log(std::ostream& out, std::span<const InteractionRecord> records,
               const ArtifactMeta& meta) {
    out << kLogHeader << '\n';
    write_meta(out, meta);
    for (const auto& r : records) out << format_log_line(r) << '\n';
    out << "#records\t" << records.size() << '\n';
}

void write_log(const std::filesystem::path& path, std::span<const InteractionRecord> records,
               const ArtifactMeta& meta) {
    auto out = open_output(path);
    write_log(out, records, meta);
}

void write_followers(std::ostream& out, const FollowerSets& followers, const ArtifactMeta& meta) {
    out << kFollowersHeader << '\n';
    write_meta(out, meta);
    for (const auto& [user, set] : followers) {
        out << user << '\t';
        for (std::size_t i = 0; i < set.size(); ++i) {
            if (i) out << ',';
            out << set[i];
        }
        out << '\n';
    }
}

void write_followers(const std::filesystem::path& path, const FollowerSets& followers,
                     const ArtifactMeta& meta) {
    auto out = open_output(path);
    write_followers(out, followers, meta);
}

FollowerSets read_followers(const std::filesystem::path& path, ArtifactMeta* meta) {
    auto in = open_input(path);
    std::string line;
    if (!text::read_line(in, line) || line != kFollowersHeader) {
        throw DataError(path.string() + ": bad header, expected '" + std::string(kFollowersHeader) + "'");
    }
    ArtifactMeta m;
    FollowerSets out;
    std::size_t line_no = 1;
    while (text::read_line(in, line)) {
        ++line_no;
        if (line.empty() || consume_meta_line(line, m)) continue;
        const auto f = text::split(line, '\t');
        if (f.size() != 2) throw DataError(line_error(line_no, "expected user<TAB>followers"));
        try {
            const UserId user = text::parse_u64(f[0], "user");
            std::vector<UserId> set;
            if (!f[1].empty()) {
                for (const auto part : text::split(f[1], ',')) {
                    set.push_back(text::parse_u64(part, "follower"));
                }
            }
            std::sort(set.begin(), set.end());
            set.erase(std::unique(set.begin(), set.end()), set.end());
            if (std::binary_search(set.begin(), set.end(), user)) {
                throw DataError("user " + std::to_string(user) + " follows itself");
            }
            if (!out.emplace(user, std::move(set)).second) {
                throw DataError("duplicate user " + std::to_string(user));
            }
        } catch (const DataError& e) {
            throw DataError(line_error(line_no, e.what()));
        }
    }
    if (meta) *meta = std::move(m);
    return out;
}

void write_embeddings(std::ostream& out, const EmbeddingMatrix& emb, const ArtifactMeta& meta) {
    out << "#emb v1 " << emb.rows << ' ' << emb.cols << '\n';
    write_meta(out, meta);
    for (std::size_t i = 0; i < emb.rows; ++i) {
        out << text::join_doubles(emb.row(i), ' ') << '\n';
    }
}

void write_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& emb,
                      const ArtifactMeta& meta) {
    auto out = open_output(path);
    write_embeddings(out, emb, meta);
}

EmbeddingMatrix read_embeddings(const std::filesystem::path& path, ArtifactMeta* meta) {
    auto in = open_input(path);
    std::string line;
    if (!text::read_line(in, line) || !text::starts_with(line, "#emb v1 ")) {
        throw DataError(path.string() + ": bad header, expected '#emb v1 V D'");
    }
    const auto head = text::split(std::string_view(line).substr(8), ' ');
    if (head.size() != 2) throw DataError(path.string() + ": bad '#emb v1 V D' header");
    EmbeddingMatrix emb(text::parse_u64(head[0], "V"), text::parse_u64(head[1], "D"));
    ArtifactMeta m;
    std::size_t row = 0;
    std::size_t line_no = 1;
    while (text::read_line(in, line)) {
        ++line_no;
        if (line.empty() || consume_meta_line(line, m)) continue;
        if (row >= emb.rows) throw DataError(line_error(line_no, "more rows than declared V"));
        const auto f = text::split(line, ' ');
        if (f.size() != emb.cols) {
            throw DataError(line_error(line_no, "expected " + std::to_string(emb.cols) + " values"));
        }
        auto dst = emb.row(row);
        try {
            for (std::size_t j = 0; j < emb.cols; ++j) dst[j] = text::parse_double(f[j], "embedding value");
        } catch (const DataError& e) {
            throw DataError(line_error(line_no, e.what()));
        }
        ++row;
    }
    if (row != emb.rows) {
        throw DataError(path.string() + ": expected " + std::to_string(emb.rows) + " rows, found " +
                        std::to_string(row));
    }
    if (meta) *meta = std::move(m);
    return emb;
}

} // namespace engage
