#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace engage::text {

std::vector<std::string_view> split(std::string_view s, char sep);

// Strict parsers: the whole field must be consumed. Throw DataError naming `what`.
std::int64_t parse_i64(std::string_view s, std::string_view what);
std::uint64_t parse_u64(std::string_view s, std::string_view what);
double parse_double(std::string_view s, std::string_view what);
float parse_float(std::string_view s, std::string_view what);
bool parse_bool01(std::string_view s, std::string_view what);

// Comma-separated unsigned list; empty string is an empty list.
std::vector<std::uint32_t> parse_u32_list(std::string_view s, std::string_view what);

// Shortest decimal text that round-trips to the same double.
std::string format_double(double v);
std::string format_float(float v);

template <typename T>
std::string join(std::span<const T> values, char sep) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out.push_back(sep);
        out += std::to_string(values[i]);
    }
    return out;
}

std::string join_doubles(std::span<const double> values, char sep);

// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

bool starts_with(std::string_view s, std::string_view prefix);

// Reads one line without the trailing newline; returns false at EOF.
bool read_line(std::istream& in, std::string& line);

} // namespace engage::text
