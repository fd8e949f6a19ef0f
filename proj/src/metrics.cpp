#include "engage/metrics.hpp"

#include "engage/error.hpp"
#include "engage/text.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

namespace engage {

namespace {

void check_inputs(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size()) throw DataError("metrics: scores and labels differ in length");
    for (const double s : scores) {
        if (!std::isfinite(s)) throw DataError("metrics: non-finite score");
    }
    for (const auto l : labels) {
        if (l > 1) throw DataError("metrics: labels must be 0 or 1");
    }
}

} // namespace

std::optional<double> average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    check_inputs(scores, labels);
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    double sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t k = 0; k < order.size(); ++k) {
        if (labels[order[k]]) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(k + 1);
        }
    }
    if (hits == 0) return std::nullopt;
    return sum / static_cast<double>(hits);
}

double cross_entropy(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    check_inputs(scores, labels);
    if (scores.empty()) throw DataError("metrics: cross-entropy of an empty set");
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double p = std::clamp(scores[i], kRceClamp, 1.0 - kRceClamp);
        total -= labels[i] ? std::log(p) : std::log1p(-p);
    }
    return total / static_cast<double>(scores.size());
}

std::optional<double> rce(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    check_inputs(scores, labels);
    const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
    if (positives == 0 || positives == labels.size()) return std::nullopt;
    const double rate = static_cast<double>(positives) / static_cast<double>(labels.size());
    // Same arithmetic path for both terms, so scores equal to the rate give exactly 0.
    const std::vector<double> prior(labels.size(), rate);
    const double ce_prior = cross_entropy(prior, labels);
    const double ce_model = cross_entropy(scores, labels);
    return 100.0 * (1.0 - ce_model / ce_prior);
}

std::vector<std::uint32_t> quantile_groups(std::span<const std::uint64_t> key, std::size_t groups) {
    if (groups == 0) throw ConfigError("metrics: group count must be >= 1");
    const std::size_t n = key.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });
    std::vector<std::uint32_t> out(n, 0);
    std::size_t i = 0;
    while (i < n) {
        const auto group = static_cast<std::uint32_t>(i * groups / n);
        std::size_t j = i;
        while (j < n && key[order[j]] == key[order[i]]) out[order[j++]] = group;
        i = j;
    }
    return out;
}

EvalReport grouped_eval(std::span<const EvalRow> rows, std::size_t groups) {
    if (groups == 0) throw ConfigError("metrics: group count must be >= 1");
    EvalReport report;
    report.rows = rows.size();
    report.group_count = groups;

    std::vector<std::uint64_t> followers(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) followers[i] = rows[i].engaged_follower_count;
    const auto group_of = quantile_groups(followers, groups);
    std::vector<std::vector<std::size_t>> members(groups);
    for (std::size_t i = 0; i < rows.size(); ++i) members[group_of[i]].push_back(i);
    std::map<std::uint32_t, std::vector<std::size_t>> by_language;
    for (std::size_t i = 0; i < rows.size(); ++i) by_language[rows[i].language].push_back(i);

    std::vector<double> scores;
    std::vector<std::uint8_t> labels;
    auto gather = [&](std::span<const std::size_t> idx, std::size_t k) {
        scores.clear();
        labels.clear();
        for (const auto i : idx) {
            scores.push_back(rows[i].scores[k]);
            labels.push_back(rows[i].labels[k]);
        }
    };

    std::vector<std::size_t> all(rows.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    for (std::size_t k = 0; k < kReactionCount; ++k) {
        const std::string name(kReactionNames[k]);
        auto& rr = report.reactions[k];
        gather(all, k);
        rr.ap = average_precision(scores, labels);
        rr.rce = rce(scores, labels);
        double ap_sum = 0.0, rce_sum = 0.0;
        std::size_t ap_n = 0, rce_n = 0;
        for (std::size_t g = 0; g < groups; ++g) {
            GroupScore gs;
            gs.rows = members[g].size();
            gather(members[g], k);
            gs.ap = average_precision(scores, labels);
            gs.rce = rce(scores, labels);
            if (gs.ap) {
                ap_sum += *gs.ap;
                ++ap_n;
            } else {
                report.warnings.push_back(name + ": group " + std::to_string(g) +
                                          " has no positives; AP excluded from the mean");
            }
            if (gs.rce) {
                rce_sum += *gs.rce;
                ++rce_n;
            } else if (gs.ap) {
                report.warnings.push_back(name + ": group " + std::to_string(g) +
                                          " has a single class; RCE excluded from the mean");
            }
            rr.groups.push_back(gs);
        }
        if (ap_n) rr.mean_ap = ap_sum / static_cast<double>(ap_n);
        if (rce_n) rr.mean_rce = rce_sum / static_cast<double>(rce_n);
        for (const auto& [lang, idx] : by_language) {
            gather(idx, k);
            rr.ap_by_language[lang] = average_precision(scores, labels);
        }
    }
    return report;
}

namespace {

std::string show(const std::optional<double>& v, int precision = 4) {
    if (!v) return "absent";
    std::ostringstream s;
    s << std::fixed << std::setprecision(precision) << *v;
    return s.str();
}

std::string exact(const std::optional<double>& v) {
    return v ? text::format_double(*v) : "absent";
}

} // namespace

std::string format_report(const EvalReport& report) {
    std::ostringstream s;
    s << "rows " << report.rows << ", " << report.group_count << " popularity groups\n";
    s << std::left << std::setw(10) << "reaction" << std::right << std::setw(10) << "AP" << std::setw(10) << "RCE"
      << std::setw(12) << "mean AP" << std::setw(12) << "mean RCE" << '\n';
    for (std::size_t k = 0; k < kReactionCount; ++k) {
        const auto& r = report.reactions[k];
        s << std::left << std::setw(10) << kReactionNames[k] << std::right << std::setw(10) << show(r.ap)
          << std::setw(10) << show(r.rce, 2) << std::setw(12) << show(r.mean_ap) << std::setw(12)
          << show(r.mean_rce, 2) << '\n';
    }
    s << "\nper group\n";
    s << std::left << std::setw(10) << "reaction" << std::right << std::setw(7) << "group" << std::setw(9) << "rows"
      << std::setw(10) << "AP" << std::setw(10) << "RCE" << '\n';
    for (std::size_t k = 0; k < kReactionCount; ++k) {
        const auto& r = report.reactions[k];
        for (std::size_t g = 0; g < r.groups.size(); ++g) {
            s << std::left << std::setw(10) << kReactionNames[k] << std::right << std::setw(7) << g << std::setw(9)
              << r.groups[g].rows << std::setw(10) << show(r.groups[g].ap) << std::setw(10)
              << show(r.groups[g].rce, 2) << '\n';
        }
    }
    for (const auto& w : report.warnings) s << "warning: " << w << '\n';
    return s.str();
}

void write_report_tsv(std::ostream& out, const EvalReport& report) {
    for (std::size_t k = 0; k < kReactionCount; ++k) {
        const auto& r = report.reactions[k];
        const auto name = kReactionNames[k];
        out << "ap\t" << name << "\tall\t" << exact(r.ap) << '\n';
        out << "rce\t" << name << "\tall\t" << exact(r.rce) << '\n';
        out << "ap\t" << name << "\tmean\t" << exact(r.mean_ap) << '\n';
        out << "rce\t" << name << "\tmean\t" << exact(r.mean_rce) << '\n';
        for (std::size_t g = 0; g < r.groups.size(); ++g) {
            out << "ap\t" << name << '\t' << g << '\t' << exact(r.groups[g].ap) << '\n';
            out << "rce\t" << name << '\t' << g << '\t' << exact(r.groups[g].rce) << '\n';
            out << "rows\t" << name << '\t' << g << '\t' << r.groups[g].rows << '\n';
        }
        for (const auto& [lang, ap] : r.ap_by_language) {
            out << "ap\t" << name << "\tlang" << lang << '\t' << exact(ap) << '\n';
        }
    }
}

} // namespace engage
