#include "engage/text.hpp"

#include "engage/error.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <system_error>

namespace engage::text {

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(s.substr(start));
            return out;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

namespace {

template <typename T>
T parse_number(std::string_view s, std::string_view what) {
    T value{};
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (!s.empty() && s.front() == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (s.empty() || ec != std::errc{} || ptr != last) {
        throw DataError("invalid " + std::string(what) + ": '" + std::string(s) + "'");
    }
    return value;
}

} // namespace

std::int64_t parse_i64(std::string_view s, std::string_view what) {
    return parse_number<std::int64_t>(s, what);
}

std::uint64_t parse_u64(std::string_view s, std::string_view what) {
    if (!s.empty() && s.front() == '-') {
        throw DataError("invalid " + std::string(what) + ": '" + std::string(s) + "'");
    }
    return parse_number<std::uint64_t>(s, what);
}

double parse_double(std::string_view s, std::string_view what) {
    return parse_number<double>(s, what);
}

float parse_float(std::string_view s, std::string_view what) {
    return parse_number<float>(s, what);
}

bool parse_bool01(std::string_view s, std::string_view what) {
    if (s == "0") return false;
    if (s == "1") return true;
    throw DataError("invalid " + std::string(what) + " (expected 0/1): '" + std::string(s) + "'");
}

std::vector<std::uint32_t> parse_u32_list(std::string_view s, std::string_view what) {
    std::vector<std::uint32_t> out;
    if (s.empty()) return out;
    for (const auto part : split(s, ',')) {
        const std::uint64_t v = parse_u64(part, what);
        if (v > UINT32_MAX) {
            throw DataError(std::string(what) + " out of range: " + std::string(part));
        }
        out.push_back(static_cast<std::uint32_t>(v));
    }
    return out;
}

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

std::string format_float(float v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

std::string join_doubles(std::span<const double> values, char sep) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out.push_back(sep);
        out += format_double(values[i]);
    }
    return out;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h) {
    for (const char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return out;
}

bool starts_with(std::string_view s, std::string_view prefix) {
    return s.substr(0, prefix.size()) == prefix;
}

bool read_line(std::istream& in, std::string& line) {
    if (!std::getline(in, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
}

} // namespace engage::text
