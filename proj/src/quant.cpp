#include "mixedq/quant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mixedq {

int64_t round_shift_right(int64_t v, int shift) {
    if (shift <= 0) return v;
    if (shift >= 63) return 0;
    const int64_t sign = v < 0 ? -1 : 1;
    const int64_t a = v < 0 ? -v : v;
    const int64_t half = int64_t{1} << (shift - 1);
    return sign * ((a + half) >> shift);
}

int64_t round_div(int64_t n, int64_t d) {
    const int64_t sign = n < 0 ? -1 : 1;
    const int64_t a = n < 0 ? -n : n;
    return sign * ((a + d / 2) / d);
}

Scale compute_scale(const Tensor &t, int bits) {
    if (t.numel() == 0) throw InvalidInputError("compute_scale: empty tensor");
    double alpha = t.max_abs();
    if (alpha == 0.0) alpha = kDegenerateAlpha;
    return Scale::from_alpha(alpha, bits);
}

QTensor quantize(const Tensor &t, const Scale &s) {
    if (s.value <= 0.0) throw InvalidInputError("quantize: scale must be positive");
    std::vector<int32_t> out(static_cast<size_t>(t.numel()));
    const double lo = -s.alpha, hi = s.alpha;
    for (int64_t i = 0; i < t.numel(); ++i) {
        const double clipped = std::min(hi, std::max(lo, t[i]));
        out[static_cast<size_t>(i)] = static_cast<int32_t>(round_half_away(clipped / s.value));
    }
    return QTensor(t.shape(), std::move(out), s);
}

Tensor dequantize(const QTensor &q) {
    std::vector<double> out(static_cast<size_t>(q.numel()));
    for (int64_t i = 0; i < q.numel(); ++i) out[static_cast<size_t>(i)] = q[i] * q.scale().value;
    return Tensor(q.shape(), std::move(out));
}

Tensor fake_quantize(const Tensor &t, int bits) { return dequantize(quantize(t, compute_scale(t, bits))); }

Tensor ste_grad(const Tensor &upstream, const Tensor &r, const Scale &s) {
    if (upstream.shape() != r.shape()) throw InvalidInputError("ste_grad: shape mismatch");
    std::vector<double> out(static_cast<size_t>(r.numel()));
    for (int64_t i = 0; i < r.numel(); ++i) {
        const bool inside = r[i] >= -s.alpha && r[i] <= s.alpha;
        out[static_cast<size_t>(i)] = inside ? upstream[i] : 0.0;
    }
    return Tensor(r.shape(), std::move(out));
}

DyadicScale dyadic_approx(double real_scale, int precision_bits) {
    if (!(real_scale > 0.0) || !std::isfinite(real_scale))
        throw InvalidInputError("dyadic_approx: scale must be positive and finite");
    if (precision_bits < 8 || precision_bits > 31)
        throw InvalidInputError("dyadic_approx: precision_bits must be in {8..31}");
    int exp = 0;
    const double mant = std::frexp(real_scale, &exp); // mant in [0.5, 1)
    int64_t b = static_cast<int64_t>(round_half_away(std::ldexp(mant, precision_bits - 1)));
    int c = precision_bits - 1 - exp;
    // mant can round up to 2^(precision_bits-1); reducing b to odd keeps it
    // within the bit budget and canonicalizes powers of two.
    while (b > 1 && (b & 1) == 0) {
        b >>= 1;
        --c;
    }
    if (c < 0) { // large scales with power-of-two mantissa: fold into b
        b <<= -c;
        c = 0;
    }
    DyadicScale d;
    d.b = b;
    d.c = c;
    return d;
}

QTensor requantize(const QTensor &q, const Scale &new_scale, int precision_bits) {
    if (new_scale.value <= 0.0) throw InvalidInputError("requantize: scale must be positive");
    const double ratio = q.scale().value / new_scale.value;
    const DyadicScale d = dyadic_approx(ratio, precision_bits);
    std::vector<int32_t> out(static_cast<size_t>(q.numel()));
    constexpr int64_t kProductLimit = std::numeric_limits<int64_t>::max() >> 1;
    const int64_t bound = int64_t{1} << (new_scale.bits - 1);
    for (int64_t i = 0; i < q.numel(); ++i) {
        const int64_t v = q[i];
        if (v != 0 && std::abs(v) > kProductLimit / d.b)
            throw OverflowError("requantize: 64-bit accumulator overflow");
        int64_t scaled = round_shift_right(v * d.b, d.c);
        // saturate at the target grid's symmetric bound
        scaled = std::clamp(scaled, -bound, bound);
        out[static_cast<size_t>(i)] = static_cast<int32_t>(scaled);
    }
    return QTensor(q.shape(), std::move(out), new_scale);
}

} // namespace mixedq
