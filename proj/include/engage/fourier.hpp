#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace engage {

// Multi-scale sin/cos encoding of scalars. A value x is divided by 2^s for
// every scale exponent s; the encoding is all sines followed by all cosines.
struct FourierScales {
    std::vector<int> exponents{-1, 0, 1, 2, 3, 4, 5, 6};

    std::size_t width() const { return 2 * exponents.size(); }
    // Throws ConfigError unless non-empty and strictly increasing.
    void validate() const;
};

// Magnitudes are clamped to 2^53 before scaling.
inline constexpr double kFourierInputCap = 9007199254740992.0;

std::vector<double> encode_scalar(double x, const FourierScales& scales);

// Writes width() values into `out`. Throws DataError for non-finite x.
void encode_scalar_into(double x, const FourierScales& scales, std::span<double> out);
void encode_scalar_into(double x, const FourierScales& scales, std::span<float> out);

struct EncodedColumn {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values; // row-major

    std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
};

EncodedColumn encode_column(std::span<const double> xs, const FourierScales& scales);

// Encoder used by the feature pipeline; optionally applies sign(x)*log1p(|x|) first.
struct FourierEncoder {
    FourierScales scales;
    bool log_inputs = false;

    std::size_t width() const { return scales.width(); }
    double pretransform(double x) const;
    template <typename T>
    void encode(double x, std::span<T> out) const {
        encode_scalar_into(pretransform(x), scales, out);
    }
};

} // namespace engage
