#include "engage/fourier.hpp"

#include "engage/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace engage {

void FourierScales::validate() const {
    if (exponents.empty()) throw ConfigError("fourier scales must be non-empty");
    for (std::size_t i = 1; i < exponents.size(); ++i) {
        if (exponents[i] <= exponents[i - 1]) {
            throw ConfigError("fourier scales must be strictly increasing");
        }
    }
}

namespace {

template <typename T>
void encode_impl(double x, const FourierScales& scales, std::span<T> out) {
    if (!std::isfinite(x)) throw DataError("fourier encoding of non-finite value");
    const std::size_t n = scales.exponents.size();
    if (out.size() != 2 * n) throw DataError("fourier output width mismatch");
    x = std::clamp(x, -kFourierInputCap, kFourierInputCap);
    for (std::size_t i = 0; i < n; ++i) {
        const double scaled = std::ldexp(x, -scales.exponents[i]);
        out[i] = static_cast<T>(std::sin(scaled));
        out[n + i] = static_cast<T>(std::cos(scaled));
    }
}

} // namespace

void encode_scalar_into(double x, const FourierScales& scales, std::span<double> out) {
    encode_impl(x, scales, out);
}

void encode_scalar_into(double x, const FourierScales& scales, std::span<float> out) {
    encode_impl(x, scales, out);
}

std::vector<double> encode_scalar(double x, const FourierScales& scales) {
    std::vector<double> out(scales.width());
    encode_impl(x, scales, std::span<double>(out));
    return out;
}

EncodedColumn encode_column(std::span<const double> xs, const FourierScales& scales) {
    EncodedColumn m;
    m.rows = xs.size();
    m.cols = scales.width();
    m.values.resize(m.rows * m.cols);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        encode_impl(xs[i], scales, std::span<double>(m.values.data() + i * m.cols, m.cols));
    }
    return m;
}

double FourierEncoder::pretransform(double x) const {
    if (!log_inputs) return x;
    return std::copysign(std::log1p(std::fabs(x)), x);
}

} // namespace engage
