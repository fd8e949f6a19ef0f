#pragma once

#include "engage/record.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace engage {

inline constexpr double kRceClamp = 1e-7;

// Mean of precision@k over the ranks k of the positives, scores sorted
// descending. Equal scores keep input order (stable sort). Absent when there
// are no positives.
std::optional<double> average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels);

// Mean binary cross-entropy with scores clamped to [1e-7, 1 - 1e-7].
double cross_entropy(std::span<const double> scores, std::span<const std::uint8_t> labels);

// 100 * (1 - CE(scores) / CE(prior)), prior = empirical positive rate.
// Absent unless both classes occur.
std::optional<double> rce(std::span<const double> scores, std::span<const std::uint8_t> labels);

// Quantile group of each row by `key`: sorted position i nominally falls in
// group floor(i * G / n); rows with equal keys all take the lowest nominal
// group among them. Throws ConfigError for G == 0.
std::vector<std::uint32_t> quantile_groups(std::span<const std::uint64_t> key, std::size_t groups);

struct EvalRow {
    std::array<double, kReactionCount> scores{};
    std::array<std::uint8_t, kReactionCount> labels{};
    std::uint64_t engaged_follower_count = 0;
    std::uint32_t language = 0;
};

struct GroupScore {
    std::size_t rows = 0;
    std::optional<double> ap;
    std::optional<double> rce;
};

struct ReactionReport {
    std::optional<double> ap;
    std::optional<double> rce;
    std::vector<GroupScore> groups;
    // Averages over the groups where the score is present.
    std::optional<double> mean_ap;
    std::optional<double> mean_rce;
    std::map<std::uint32_t, std::optional<double>> ap_by_language;
};

struct EvalReport {
    std::size_t rows = 0;
    std::size_t group_count = 0;
    std::array<ReactionReport, kReactionCount> reactions;
    std::vector<std::string> warnings;
};

EvalReport grouped_eval(std::span<const EvalRow> rows, std::size_t groups = 5);

// Aligned human-readable table.
std::string format_report(const EvalReport& report);
// Machine-readable lines `metric<TAB>reaction<TAB>group<TAB>value`; group is
// `all`, `mean`, a group index, or `lang<id>`; absent values print as `absent`.
void write_report_tsv(std::ostream& out, const EvalReport& report);

} // namespace engage
