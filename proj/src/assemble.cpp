#include "engage/assemble.hpp"

#include "engage/error.hpp"
#include "engage/log_io.hpp"
#include "engage/text.hpp"

#include <algorithm>
#include <chrono>
#include <ostream>
#include <string>

namespace engage {

const std::array<std::string_view, kNumericFeatureCount> kNumericFeatureNames{
    "pair_like", "pair_reply", "pair_retweet", "pair_quote",
    "received_like", "received_reply", "received_retweet", "received_quote",
    "given_like", "given_reply", "given_retweet", "given_quote",
    "language_like", "language_reply", "language_retweet", "language_quote",
    "hashtag_like", "hashtag_reply", "hashtag_retweet", "hashtag_quote",
    "similar_like", "similar_reply", "similar_retweet", "similar_quote",
    "tweet_like", "tweet_reply", "tweet_retweet", "tweet_quote",
    "engaged_followers", "engaged_following", "engaging_followers", "engaging_following",
    "engaged_account_age_days", "engaging_account_age_days",
    "hashtag_count"};

const std::array<std::string_view, kCategoricalFeatureCount> kCategoricalFeatureNames{
    "language", "tweet_type", "day_of_week", "hour_of_day", "media", "engaged_verified",
    "engaging_verified", "engaging_follows_engaged", "same_community_like",
    "same_community_reply", "same_community_retweet", "same_community_quote"};

FeatureLayout FeatureLayout::standard(std::size_t sketch_depth, std::size_t sketch_width,
                                      std::size_t languages) {
    FeatureLayout l;
    l.sketch_depth = sketch_depth;
    l.sketch_width = sketch_width;
    l.categorical_vocab = {languages + 1, kTweetTypeCount, 7, 24, 16, 2, 2, 2, 2, 2, 2, 2};
    return l;
}

FeatureAssembler::FeatureAssembler(const FeatureStore& store, const SketchCodec& codec,
                                   FeatureLayout layout)
    : store_(&store), codec_(&codec), layout_(std::move(layout)) {
    if (codec.params().depth != layout_.sketch_depth || codec.params().width != layout_.sketch_width) {
        throw DataError("codec shape " + std::to_string(codec.params().depth) + "x" +
                        std::to_string(codec.params().width) + " does not match feature layout " +
                        std::to_string(layout_.sketch_depth) + "x" + std::to_string(layout_.sketch_width));
    }
    if (layout_.numeric_count != kNumericFeatureCount ||
        layout_.categorical_vocab.size() != kCategoricalFeatureCount ||
        layout_.strength_count != kStrengthCount) {
        throw DataError("feature layout does not match the assembler's feature set");
    }
}

namespace {

void put_counts(double* dst, const ReactionCounts& c) {
    for (std::size_t k = 0; k < kReactionCount; ++k) dst[k] = static_cast<double>(c.n[k]);
}

std::uint32_t day_of_week(Timestamp t) {
    using namespace std::chrono;
    const sys_days day{days{t >= 0 ? t / kSecondsPerDay : (t - kSecondsPerDay + 1) / kSecondsPerDay}};
    return weekday{day}.c_encoding();
}

std::uint32_t hour_of_day(Timestamp t) {
    const Timestamp s = ((t % kSecondsPerDay) + kSecondsPerDay) % kSecondsPerDay;
    return static_cast<std::uint32_t>(s / 3600);
}

} // namespace

void FeatureAssembler::assemble(const InteractionRecord& r, AssembledFeatures& out) const {
    const FeatureStore& s = *store_;
    codec_->encode_into(r.tweet_tokens, out.sketch, OovPolicy::skip);

    out.numeric.resize(kNumericFeatureCount);
    double* num = out.numeric.data();
    put_counts(num + 0, s.pair(r.engaged_user, r.engaging_user));
    put_counts(num + 4, s.received(r.engaged_user));
    put_counts(num + 8, s.given(r.engaging_user));
    put_counts(num + 12, s.given_in_language(r.engaging_user, r.language));
    ReactionCounts tags;
    for (std::size_t i = 0; i < r.hashtags.size(); ++i) {
        const auto first = r.hashtags.begin();
        const auto here = first + static_cast<std::ptrdiff_t>(i);
        if (std::find(first, here, r.hashtags[i]) != here) continue;
        tags += s.with_hashtag(r.engaging_user, r.hashtags[i]);
    }
    put_counts(num + 16, tags);
    put_counts(num + 20, s.similar_users(r.engaged_user, r.engaging_user));
    put_counts(num + 24, s.tweet(r.tweet_id));
    num[28] = static_cast<double>(r.engaged_follower_count);
    num[29] = static_cast<double>(r.engaged_following_count);
    num[30] = static_cast<double>(r.engaging_follower_count);
    num[31] = static_cast<double>(r.engaging_following_count);
    num[32] = static_cast<double>(r.tweet_timestamp - r.engaged_account_created) / kSecondsPerDay;
    num[33] = static_cast<double>(r.tweet_timestamp - r.engaging_account_created) / kSecondsPerDay;
    num[34] = static_cast<double>(r.hashtags.size());

    out.categorical.resize(kCategoricalFeatureCount);
    auto* cat = out.categorical.data();
    const auto language_vocab = static_cast<std::uint32_t>(layout_.categorical_vocab[0]);
    cat[0] = std::min(r.language, language_vocab - 1);
    cat[1] = static_cast<std::uint32_t>(r.tweet_type);
    cat[2] = day_of_week(r.tweet_timestamp);
    cat[3] = hour_of_day(r.tweet_timestamp);
    cat[4] = r.media.bits();
    cat[5] = r.engaged_verified ? 1 : 0;
    cat[6] = r.engaging_verified ? 1 : 0;
    cat[7] = r.engaging_follows_engaged ? 1 : 0;
    for (std::size_t k = 0; k < kReactionCount; ++k) {
        const PairCommunity pc = pair_community(s.communities[k], r.engaged_user, r.engaging_user);
        cat[8 + k] = pc.same ? 1 : 0;
        out.community_strengths[k] = pc.strength;
    }
}

AssembledFeatures FeatureAssembler::assemble(const InteractionRecord& record) const {
    AssembledFeatures out;
    assemble(record, out);
    return out;
}

AssembledFeatures assemble(const InteractionRecord& record, const FeatureStore& store,
                           const SketchCodec& codec, const FeatureLayout& layout) {
    return FeatureAssembler(store, codec, layout).assemble(record);
}

std::array<float, kReactionCount> labels_of(const InteractionRecord& record) {
    std::array<float, kReactionCount> y{};
    for (std::size_t k = 0; k < kReactionCount; ++k) y[k] = record.reactions[k] ? 1.0f : 0.0f;
    return y;
}

FeatureRow to_row(const AssembledFeatures& f, std::size_t record_index, std::uint32_t chunk,
                  const std::array<float, kReactionCount>& labels) {
    FeatureRow row;
    row.record_index = record_index;
    row.chunk = chunk;
    for (std::size_t i = 0; i < f.sketch.values.size(); ++i) {
        if (f.sketch.values[i] != 0.0) {
            row.sketch.push_back({static_cast<std::uint32_t>(i), static_cast<float>(f.sketch.values[i])});
        }
    }
    row.numeric = f.numeric;
    row.categorical = f.categorical;
    row.strengths = f.community_strengths;
    row.labels = labels;
    return row;
}

// Features file ---------------------------------------------------------------

void write_features(std::ostream& out, const FeatureLayout& layout, std::span<const FeatureRow> rows,
                    const ArtifactMeta& meta) {
    out << "#engage-features v1\n";
    write_meta(out, meta);
    out << "#layout\t" << layout.sketch_depth << '\t' << layout.sketch_width << '\t'
        << layout.numeric_count << '\t'
        << text::join(std::span<const std::size_t>(layout.categorical_vocab), ',') << '\t'
        << layout.strength_count << '\n';
    for (const auto& r : rows) {
        out << r.record_index << '\t' << r.chunk << '\t';
        for (float y : r.labels) out << (y > 0.5f ? '1' : '0');
        out << '\t' << text::join_doubles(r.numeric, ',') << '\t'
            << text::join(std::span<const std::uint32_t>(r.categorical), ',') << '\t'
            << text::join_doubles(r.strengths, ',') << '\t';
        for (std::size_t i = 0; i < r.sketch.size(); ++i) {
            if (i) out << ',';
            out << r.sketch[i].index << ':' << text::format_float(r.sketch[i].value);
        }
        out << '\n';
    }
    out << "#rows\t" << rows.size() << '\n';
}

void write_features(const std::filesystem::path& path, const FeatureLayout& layout,
                    std::span<const FeatureRow> rows, const ArtifactMeta& meta) {
    auto out = open_output(path);
    write_features(out, layout, rows, meta);
}

std::vector<FeatureRow> read_features(const std::filesystem::path& path, FeatureLayout& layout,
                                      ArtifactMeta* meta) {
    auto in = open_input(path);
    std::string line;
    if (!text::read_line(in, line) || line != "#engage-features v1") {
        throw DataError(path.string() + ": bad features header");
    }
    ArtifactMeta m;
    std::vector<FeatureRow> rows;
    bool have_layout = false;
    bool have_footer = false;
    std::size_t line_no = 1;
    auto fail = [&](const std::string& msg) {
        throw DataError(path.string() + ": line " + std::to_string(line_no) + ": " + msg);
    };
    while (text::read_line(in, line)) {
        ++line_no;
        if (line.empty() || consume_meta_line(line, m)) continue;
        try {
            if (text::starts_with(line, "#layout\t")) {
                const auto f = text::split(std::string_view(line).substr(8), '\t');
                if (f.size() != 5) fail("bad #layout line");
                layout.sketch_depth = text::parse_u64(f[0], "depth");
                layout.sketch_width = text::parse_u64(f[1], "width");
                layout.numeric_count = text::parse_u64(f[2], "numeric count");
                layout.categorical_vocab.clear();
                for (const auto v : text::parse_u32_list(f[3], "vocab")) layout.categorical_vocab.push_back(v);
                layout.strength_count = text::parse_u64(f[4], "strength count");
                have_layout = true;
                continue;
            }
            if (text::starts_with(line, "#rows\t")) {
                if (text::parse_u64(std::string_view(line).substr(6), "row count") != rows.size()) {
                    fail("row count footer mismatch");
                }
                have_footer = true;
                break;
            }
            if (!have_layout) fail("row before #layout");
            const auto f = text::split(line, '\t');
            if (f.size() != 7) fail("expected 7 fields");
            FeatureRow r;
            r.record_index = text::parse_u64(f[0], "record index");
            r.chunk = static_cast<std::uint32_t>(text::parse_u64(f[1], "chunk"));
            if (f[2].size() != kReactionCount) fail("bad labels");
            for (std::size_t k = 0; k < kReactionCount; ++k) r.labels[k] = f[2][k] == '1' ? 1.0f : 0.0f;
            for (const auto v : text::split(f[3], ',')) r.numeric.push_back(text::parse_double(v, "numeric"));
            r.categorical = text::parse_u32_list(f[4], "categorical");
            const auto st = text::split(f[5], ',');
            if (st.size() != kStrengthCount) fail("bad strengths");
            for (std::size_t k = 0; k < kStrengthCount; ++k) r.strengths[k] = text::parse_double(st[k], "strength");
            if (!f[6].empty()) {
                for (const auto e : text::split(f[6], ',')) {
                    const auto colon = e.find(':');
                    if (colon == std::string_view::npos) fail("bad sketch entry");
                    const std::uint64_t idx = text::parse_u64(e.substr(0, colon), "sketch index");
                    if (idx >= layout.sketch_size()) fail("sketch index out of range");
                    r.sketch.push_back({static_cast<std::uint32_t>(idx),
                                        text::parse_float(e.substr(colon + 1), "sketch value")});
                }
            }
            if (r.numeric.size() != layout.numeric_count ||
                r.categorical.size() != layout.categorical_vocab.size()) {
                fail("row does not match #layout");
            }
            for (std::size_t c = 0; c < r.categorical.size(); ++c) {
                if (r.categorical[c] >= layout.categorical_vocab[c]) fail("categorical id out of range");
            }
            rows.push_back(std::move(r));
        } catch (const DataError& e) {
            if (std::string_view(e.what()).find(path.string()) == 0) throw;
            fail(e.what());
        }
    }
    if (!have_footer) throw DataError(path.string() + ": truncated features file (missing #rows footer)");
    if (meta) *meta = std::move(m);
    return rows;
}

} // namespace engage
