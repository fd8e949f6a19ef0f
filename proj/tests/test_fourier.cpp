#include "engage/error.hpp"
#include "engage/fourier.hpp"
#include "engage/random.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace engage;

namespace {

// Reference evaluation in extended precision: sin/cos of x / 2^s.
long double ref_sin(double x, int s) { return std::sin(std::ldexp(static_cast<long double>(x), -s)); }
long double ref_cos(double x, int s) { return std::cos(std::ldexp(static_cast<long double>(x), -s)); }

} // namespace

TEST_CASE("zero encodes as eight sines of 0 then eight cosines of 0") {
    const auto v = encode_scalar(0.0, FourierScales{});
    REQUIRE(v.size() == 16);
    for (std::size_t i = 0; i < 8; ++i) CHECK(v[i] == 0.0);
    for (std::size_t i = 8; i < 16; ++i) CHECK(v[i] == 1.0);
}

TEST_CASE("x = 3 at scales -1, 0 gives sin 6, sin 3, cos 6, cos 3") {
    const auto v = encode_scalar(3.0, FourierScales{{-1, 0}});
    REQUIRE(v.size() == 4);
    CHECK(std::fabs(v[0] - static_cast<double>(std::sin(6.0L))) < 1e-12);
    CHECK(std::fabs(v[1] - static_cast<double>(std::sin(3.0L))) < 1e-12);
    CHECK(std::fabs(v[2] - static_cast<double>(std::cos(6.0L))) < 1e-12);
    CHECK(std::fabs(v[3] - static_cast<double>(std::cos(3.0L))) < 1e-12);
}

TEST_CASE("encode_column matches the reference and rows agree with encode_scalar") {
    const FourierScales scales;
    const std::vector<double> xs{100.0, 0.0, 0.0, -7.25, 12345.0};
    const auto m = encode_column(xs, scales);
    CHECK(m.rows == xs.size());
    CHECK(m.cols == 16);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const auto row = m.row(i);
        const auto single = encode_scalar(xs[i], scales);
        for (std::size_t j = 0; j < 16; ++j) CHECK(row[j] == single[j]);
        for (std::size_t j = 0; j < 8; ++j) {
            const int s = scales.exponents[j];
            CHECK(std::fabs(row[j] - static_cast<double>(ref_sin(xs[i], s))) < 1e-12);
            CHECK(std::fabs(row[8 + j] - static_cast<double>(ref_cos(xs[i], s))) < 1e-12);
        }
    }
    const auto r1 = m.row(1), r2 = m.row(2);
    CHECK(std::equal(r1.begin(), r1.end(), r2.begin()));
    CHECK(encode_column({}, scales).rows == 0);
    CHECK(encode_column({}, scales).cols == 16);
}

TEST_CASE("encoding is bounded and each sin/cos pair lies on the unit circle") {
    const FourierScales scales;
    Rng rng(7);
    for (int i = 0; i < 2000; ++i) {
        const double x = (rng.uniform() - 0.5) * std::pow(10.0, rng.uniform(0.0, 12.0));
        const auto v = encode_scalar(x, scales);
        for (const double c : v) CHECK(std::fabs(c) <= 1.0);
        for (std::size_t j = 0; j < 8; ++j) CHECK(std::fabs(v[j] * v[j] + v[8 + j] * v[8 + j] - 1.0) < 1e-12);
    }
}

TEST_CASE("huge inputs are clamped to 2^53") {
    const FourierScales scales;
    CHECK(encode_scalar(1e300, scales) == encode_scalar(kFourierInputCap, scales));
    CHECK(encode_scalar(-1e300, scales) == encode_scalar(-kFourierInputCap, scales));
}

TEST_CASE("non-finite input and bad scales are errors") {
    const FourierScales scales;
    CHECK_THROWS_AS(encode_scalar(std::numeric_limits<double>::quiet_NaN(), scales), DataError);
    CHECK_THROWS_AS(encode_scalar(std::numeric_limits<double>::infinity(), scales), DataError);
    CHECK_THROWS_AS(encode_column(std::vector<double>{1.0, std::nan("")}, scales), DataError);
    CHECK_THROWS_AS((FourierScales{{}}.validate()), ConfigError);
    CHECK_THROWS_AS((FourierScales{{1, 1}}.validate()), ConfigError);
    CHECK_THROWS_AS((FourierScales{{2, 0}}.validate()), ConfigError);
}

TEST_CASE("float path agrees with the double path") {
    const FourierEncoder enc;
    std::vector<float> f(enc.width());
    std::vector<double> d(enc.width());
    for (const double x : {0.0, 1.0, 3.5, 1000.0, 123456.0}) {
        enc.encode(x, std::span<float>(f));
        enc.encode(x, std::span<double>(d));
        for (std::size_t j = 0; j < f.size(); ++j) CHECK(std::fabs(f[j] - d[j]) < 1e-6);
    }
}

TEST_CASE("optional log pre-transform is sign-preserving log1p") {
    FourierEncoder enc;
    enc.log_inputs = true;
    CHECK(enc.pretransform(0.0) == 0.0);
    CHECK(enc.pretransform(std::expm1(2.0)) == doctest::Approx(2.0));
    CHECK(enc.pretransform(-std::expm1(2.0)) == doctest::Approx(-2.0));
}
