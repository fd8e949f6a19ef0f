#include "engage/error.hpp"
#include "engage/metrics.hpp"
#include "engage/random.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace engage;

namespace {

// For each positive, its rank is 1 + (#rows scored higher) + (#earlier rows with an equal score);
// precision at that rank counts positives ranked at or above it.
double brute_ap(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
    const std::size_t n = s.size();
    auto rank = [&](std::size_t i) {
        std::size_t r = 1;
        for (std::size_t j = 0; j < n; ++j) {
            if (s[j] > s[i] || (s[j] == s[i] && j < i)) ++r;
        }
        return r;
    };
    double sum = 0.0;
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!y[i]) continue;
        ++pos;
        const std::size_t ri = rank(i);
        std::size_t above = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (y[j] && rank(j) <= ri) ++above;
        }
        sum += static_cast<double>(above) / static_cast<double>(ri);
    }
    return sum / static_cast<double>(pos);
}

double brute_rce(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
    double p = 0.0;
    for (const auto v : y) p += v;
    p /= static_cast<double>(y.size());
    double ce = 0.0, ce0 = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double q = std::min(std::max(s[i], 1e-7), 1.0 - 1e-7);
        ce += y[i] ? -std::log(q) : -std::log(1.0 - q);
        ce0 += y[i] ? -std::log(p) : -std::log(1.0 - p);
    }
    return 100.0 * (1.0 - ce / ce0);
}

} // namespace

TEST_CASE("average precision on hand examples") {
    CHECK(*average_precision(std::vector<double>{0.9, 0.8, 0.1}, std::vector<std::uint8_t>{1, 1, 0}) == 1.0);
    CHECK(*average_precision(std::vector<double>{0.2, 0.9}, std::vector<std::uint8_t>{1, 0}) == 0.5);
    // Ties keep input order: the positive listed second ranks second.
    CHECK(*average_precision(std::vector<double>{0.5, 0.5}, std::vector<std::uint8_t>{0, 1}) == 0.5);
    CHECK_FALSE(average_precision(std::vector<double>{0.3, 0.4}, std::vector<std::uint8_t>{0, 0}).has_value());
}

TEST_CASE("AP and RCE match brute-force oracles on random fixtures") {
    Rng rng(1);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 2 + rng.below(60);
        std::vector<double> s(n);
        std::vector<std::uint8_t> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = rng.bernoulli(0.2) ? std::round(rng.uniform() * 4) / 4 : rng.uniform();
            y[i] = rng.bernoulli(0.3);
        }
        y[0] = 1;
        y[1] = 0;
        CHECK(std::fabs(*average_precision(s, y) - brute_ap(s, y)) < 1e-12);
        CHECK(std::fabs(*rce(s, y) - brute_rce(s, y)) < 1e-12);
    }
}

TEST_CASE("AP is invariant under strictly monotone score transforms") {
    Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> s(40), t(40);
        std::vector<std::uint8_t> y(40);
        for (std::size_t i = 0; i < 40; ++i) {
            s[i] = rng.uniform();
            t[i] = std::exp(3.0 * s[i]) - 7.0;
            y[i] = rng.bernoulli(0.4);
        }
        y[0] = 1;
        CHECK(*average_precision(s, y) == *average_precision(t, y));
    }
}

TEST_CASE("prior predictor has RCE exactly 0; near-perfect scores approach 100") {
    const std::vector<std::uint8_t> y{1, 0, 0, 1, 0, 0, 0, 0};
    const std::vector<double> prior(y.size(), 0.25);
    CHECK(*rce(prior, y) == 0.0);
    std::vector<double> perfect(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) perfect[i] = y[i] ? 1.0 - 1e-7 : 1e-7;
    const double r = *rce(perfect, y);
    CHECK(r < 100.0);
    CHECK(r > 99.99);
    CHECK_FALSE(rce(prior, std::vector<std::uint8_t>(8, 1)).has_value());
}

TEST_CASE("RCE on a 20-row hand-computed fixture") {
    // 5 positives scored 0.8, 15 negatives scored 0.1; prior rate 0.25.
    std::vector<double> s;
    std::vector<std::uint8_t> y;
    for (int i = 0; i < 5; ++i) {
        s.push_back(0.8);
        y.push_back(1);
    }
    for (int i = 0; i < 15; ++i) {
        s.push_back(0.1);
        y.push_back(0);
    }
    const double ce = (5 * -std::log(0.8) + 15 * -std::log(0.9)) / 20.0;
    const double ce0 = (5 * -std::log(0.25) + 15 * -std::log(0.75)) / 20.0;
    CHECK(*rce(s, y) == doctest::Approx(100.0 * (1.0 - ce / ce0)).epsilon(1e-12));
    CHECK(*rce(s, y) == doctest::Approx(76.0274).epsilon(1e-6));
}

TEST_CASE("metric inputs are validated") {
    CHECK_THROWS_AS(average_precision(std::vector<double>{0.1}, std::vector<std::uint8_t>{1, 0}), DataError);
    CHECK_THROWS_AS(average_precision(std::vector<double>{std::nan("")}, std::vector<std::uint8_t>{1}), DataError);
    CHECK_THROWS_AS(quantile_groups(std::vector<std::uint64_t>{1}, 0), ConfigError);
}

TEST_CASE("quantile groups: equal sizes for distinct keys, ties go to the lower group") {
    Rng rng(3);
    std::vector<std::uint64_t> keys(1003);
    for (std::size_t i = 0; i < keys.size(); ++i) keys[i] = i * 7919 % 1003;
    const auto g = quantile_groups(keys, 5);
    std::vector<std::size_t> sizes(5, 0);
    for (const auto x : g) ++sizes[x];
    for (const auto s : sizes) CHECK((s == 200 || s == 201));

    const std::vector<std::uint64_t> tied{5, 5, 5, 5, 9, 9, 1, 2};
    const auto t = quantile_groups(tied, 4);
    // Sorted: 1,2,5,5,5,5,9,9 -> nominal groups 0,0,1,1,2,2,3,3; the 5s all take group 1.
    CHECK(t == std::vector<std::uint32_t>{1, 1, 1, 1, 3, 3, 0, 0});
}

TEST_CASE("grouped eval: one group equals the ungrouped metric") {
    Rng rng(4);
    std::vector<EvalRow> rows(300);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto& r = rows[i];
        for (std::size_t k = 0; k < kReactionCount; ++k) {
            r.scores[k] = rng.uniform();
            r.labels[k] = rng.bernoulli(0.3);
        }
        r.engaged_follower_count = (i * 37) % 300; // distinct
        r.language = static_cast<std::uint32_t>(rng.below(3));
    }
    const auto rep = grouped_eval(rows, 1);
    for (const auto& rr : rep.reactions) {
        CHECK(std::fabs(*rr.mean_ap - *rr.ap) < 1e-12);
        CHECK(std::fabs(*rr.mean_rce - *rr.rce) < 1e-12);
        CHECK(rr.ap_by_language.size() == 3);
    }
    const auto five = grouped_eval(rows, 5);
    for (const auto& g : five.reactions[0].groups) CHECK((g.rows == 60));
}

TEST_CASE("grouped eval: mean of two hand-built groups") {
    std::vector<EvalRow> rows;
    auto add = [&](std::uint64_t followers, double score, bool label) {
        EvalRow r;
        r.engaged_follower_count = followers;
        r.scores.fill(score);
        r.labels.fill(label ? 1 : 0);
        rows.push_back(r);
    };
    // Low group: labels [1,0] scored [0.2,0.9] -> AP 0.5. High group: perfectly ranked -> AP 1.
    add(1, 0.2, true);
    add(2, 0.9, false);
    add(10, 0.9, true);
    add(11, 0.1, false);
    const auto rep = grouped_eval(rows, 2);
    const auto& like = rep.reactions[0];
    CHECK(*like.groups[0].ap == 0.5);
    CHECK(*like.groups[1].ap == 1.0);
    CHECK(*like.mean_ap == 0.75);
}

TEST_CASE("groups without positives are excluded from the mean with a warning") {
    std::vector<EvalRow> rows;
    for (int i = 0; i < 4; ++i) {
        EvalRow r;
        r.engaged_follower_count = static_cast<std::uint64_t>(i);
        r.scores.fill(0.1 * (i + 1));
        r.labels.fill(i >= 2 ? 1 : 0);
        r.labels[1] = (i == 3);
        rows.push_back(r);
    }
    rows[2].labels[0] = 0;
    const auto rep = grouped_eval(rows, 2);
    CHECK_FALSE(rep.reactions[0].groups[0].ap.has_value());
    CHECK(rep.reactions[0].mean_ap == rep.reactions[0].groups[1].ap);
    CHECK_FALSE(rep.warnings.empty());
    std::ostringstream tsv;
    write_report_tsv(tsv, rep);
    CHECK(tsv.str().find("ap\tlike\t0\tabsent") != std::string::npos);
    CHECK(format_report(rep).find("warning") != std::string::npos);
}
