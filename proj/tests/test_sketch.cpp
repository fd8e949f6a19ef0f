#include "support.hpp"

#include "engage/error.hpp"
#include "engage/sketch.hpp"
#include "engage/synthetic.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace engage;
using engage::testing::tiny_generator;

namespace {

EmbeddingMatrix random_embeddings(std::size_t V, std::size_t D, std::uint64_t seed) {
    Rng rng(seed);
    EmbeddingMatrix e(V, D);
    for (auto& v : e.values) v = rng.normal();
    return e;
}

SketchParams params(std::size_t K, std::size_t W, std::size_t D, std::uint64_t seed = 3) {
    SketchParams p;
    p.depth = K;
    p.width = W;
    p.embedding_dim = D;
    p.seed = seed;
    return p;
}

std::vector<TokenId> random_tokens(Rng& rng, std::size_t V) {
    std::vector<TokenId> t(rng.below(20));
    for (auto& x : t) x = static_cast<TokenId>(rng.below(V));
    return t;
}

} // namespace

TEST_CASE("every token gets a region in [0, W) at every depth") {
    const auto emb = random_embeddings(16, 4, 1);
    const auto codec = SketchCodec::fit(emb, params(1, 16, 4));
    for (TokenId t = 0; t < 16; ++t) CHECK(codec.region(t, 0) < 16);
}

TEST_CASE("regions follow the sign bits of the fitted hyperplanes") {
    const auto emb = random_embeddings(100, 6, 2);
    const auto codec = SketchCodec::fit(emb, params(5, 32, 6));
    for (std::size_t t = 0; t < emb.rows; ++t) {
        for (std::size_t k = 0; k < 5; ++k) {
            std::uint32_t code = 0;
            const auto planes = codec.hyperplanes(k);
            REQUIRE(planes.size() == 5);
            for (std::size_t b = 0; b < planes.size(); ++b) {
                double dot = 0.0;
                for (std::size_t d = 0; d < 6; ++d) dot += planes[b].direction[d] * emb.values[t * 6 + d];
                if (dot > planes[b].offset) code |= 1u << b;
            }
            CHECK(codec.region(static_cast<TokenId>(t), k) == code);
        }
    }
}

TEST_CASE("quantile offsets are projections of embedding rows") {
    const auto emb = random_embeddings(50, 4, 3);
    const auto codec = SketchCodec::fit(emb, params(3, 8, 4));
    for (std::size_t k = 0; k < 3; ++k) {
        for (const auto& h : codec.hyperplanes(k)) {
            bool found = false;
            for (std::size_t t = 0; t < emb.rows && !found; ++t) {
                double dot = 0.0;
                for (std::size_t d = 0; d < 4; ++d) dot += h.direction[d] * emb.values[t * 4 + d];
                found = dot == h.offset;
            }
            CHECK(found);
        }
    }
}

TEST_CASE("identical embeddings share every region") {
    auto emb = random_embeddings(40, 5, 4);
    std::copy_n(emb.values.begin() + 3 * 5, 5, emb.values.begin() + 7 * 5);
    const auto codec = SketchCodec::fit(emb, params(16, 8, 5));
    for (std::size_t k = 0; k < 16; ++k) CHECK(codec.region(3, k) == codec.region(7, k));
}

TEST_CASE("fit is deterministic and the codec file round-trips exactly") {
    const auto emb = random_embeddings(64, 8, 5);
    for (const auto mode : {OffsetMode::quantile, OffsetMode::uniform}) {
        auto p = params(4, 16, 8, 99);
        p.offsets = mode;
        const auto a = SketchCodec::fit(emb, p);
        const auto b = SketchCodec::fit(emb, p);
        CHECK(a == b);
        std::stringstream buf;
        a.save(buf, ArtifactMeta{"00ff", {"sketch.depth=4"}});
        ArtifactMeta meta;
        const auto back = SketchCodec::load(buf, &meta);
        CHECK(back == a);
        CHECK(meta.config_hash == "00ff");
    }
}

TEST_CASE("empty, single and repeated token sketches") {
    const auto emb = random_embeddings(32, 4, 6);
    const auto codec = SketchCodec::fit(emb, params(4, 8, 4));
    const auto empty = codec.encode({});
    CHECK(std::all_of(empty.values.begin(), empty.values.end(), [](double v) { return v == 0.0; }));

    const std::vector<TokenId> one{5}, two{5, 5};
    const auto s1 = codec.encode(one);
    for (std::size_t k = 0; k < 4; ++k) {
        const auto row = s1.row(k);
        CHECK(std::count(row.begin(), row.end(), 1.0) == 1);
        CHECK(std::count(row.begin(), row.end(), 0.0) == 7);
    }
    CHECK(codec.encode(two) == s1);
    const auto c1 = codec.raw_counts(one), c2 = codec.raw_counts(two);
    for (std::size_t i = 0; i < c1.size(); ++i) CHECK(c2[i] == 2 * c1[i]);
}

TEST_CASE("additivity, permutation invariance and row norms on random sequences") {
    const auto emb = random_embeddings(200, 8, 7);
    const auto codec = SketchCodec::fit(emb, params(8, 16, 8));
    Rng rng(8);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto a = random_tokens(rng, 200), b = random_tokens(rng, 200);
        auto ab = a;
        ab.insert(ab.end(), b.begin(), b.end());
        const auto ca = codec.raw_counts(a), cb = codec.raw_counts(b), cab = codec.raw_counts(ab);
        for (std::size_t i = 0; i < cab.size(); ++i) REQUIRE(cab[i] == ca[i] + cb[i]);

        auto shuffled = ab;
        rng.shuffle(shuffled);
        const auto s = codec.encode(ab);
        REQUIRE(codec.encode(shuffled) == s);
        for (std::size_t k = 0; k < s.depth; ++k) {
            double sq = 0.0;
            for (const double v : s.row(k)) sq += v * v;
            const double norm = std::sqrt(sq);
            REQUIRE((norm == 0.0 || std::fabs(norm - 1.0) < 1e-9));
        }
    }
}

TEST_CASE("encode_into reuses storage and matches encode") {
    const auto emb = random_embeddings(50, 4, 9);
    const auto codec = SketchCodec::fit(emb, params(4, 8, 4));
    Sketch out;
    const std::vector<TokenId> t1{1, 2, 3}, t2{4};
    codec.encode_into(t1, out);
    const double* storage = out.values.data();
    codec.encode_into(t2, out);
    CHECK(out.values.data() == storage);
    CHECK(out == codec.encode(t2));
}

TEST_CASE("out-of-vocabulary tokens: rejected by default, skipped on request") {
    const auto emb = random_embeddings(20, 4, 10);
    const auto codec = SketchCodec::fit(emb, params(2, 4, 4));
    const std::vector<TokenId> with_oov{1, 20, 2}, without{1, 2};
    CHECK_THROWS_AS(codec.encode(with_oov), DataError);
    CHECK(codec.encode(with_oov, OovPolicy::skip) == codec.encode(without));
}

TEST_CASE("fit errors") {
    SUBCASE("vocabulary smaller than width") {
        CHECK_THROWS_AS(SketchCodec::fit(random_embeddings(7, 4, 1), params(1, 8, 4)), DataError);
    }
    SUBCASE("dimension mismatch") {
        CHECK_THROWS_AS(SketchCodec::fit(random_embeddings(16, 4, 1), params(1, 8, 5)), DataError);
    }
    SUBCASE("non-finite embedding") {
        auto e = random_embeddings(16, 4, 1);
        e.values[5] = std::nan("");
        CHECK_THROWS_AS(SketchCodec::fit(e, params(1, 8, 4)), DataError);
    }
    SUBCASE("width not a power of two") { CHECK_THROWS_AS(params(1, 12, 4).validate(), ConfigError); }
    SUBCASE("zero depth") { CHECK_THROWS_AS(params(0, 8, 4).validate(), ConfigError); }
}

TEST_CASE("same-topic tokens collide more often than cross-topic tokens") {
    auto cfg = tiny_generator();
    cfg.topics = 3;
    cfg.embedding_dim = 8;
    cfg.vocab = 300;
    const auto data = generate_synthetic(cfg, 12);
    const auto codec = SketchCodec::fit(data.token_embeddings, params(8, 16, 8));
    const auto rates = engage::testing::topic_collision_rates(codec, data.token_topic);
    CHECK(rates.same_topic > rates.cross_topic);
}
