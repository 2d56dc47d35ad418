#include "mixedq/kernels.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "mixedq/kernel_constants.hpp"

namespace mixedq {

namespace {

// Working fixed point for the exponential primitives: inputs are regridded
// to 2^-16 so the z / fractional split of the base-change decomposition is
// pure shift-and-mask arithmetic.
constexpr int kWorkBits = 16;
constexpr int64_t kWorkOne = int64_t{1} << kWorkBits;
// Exponential outputs live on the 2^-24 grid; positive shift_exp inputs can
// scale the mantissa up to 2^30, so the output width is the full 31 bits.
constexpr int kExpFracBits = 24;
constexpr int64_t kExpOne = int64_t{1} << kExpFracBits;
constexpr int kExpOutIntBits = 31;
// GELU outputs live on the (input scale * 2^-15) grid.
constexpr int kGeluFracBits = 15;

constexpr int64_t kQLn2 = 45426;  // round(ln2 * 2^16)
constexpr int kIexpMaxZ = 26;     // e^-x underflows the 2^-24 grid past here

struct LaneView {
    int64_t count;   // lanes
    int64_t length;  // elements per lane
    int64_t stride;  // element stride within a lane
    int64_t outer_stride;
    int64_t inner;   // lanes per outer group
};

LaneView lanes_along(const Shape &shape, int axis) {
    const int rank = static_cast<int>(shape.size());
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank) throw InvalidInputError("axis out of range");
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= shape[static_cast<size_t>(i)];
    for (int i = axis + 1; i < rank; ++i) inner *= shape[static_cast<size_t>(i)];
    LaneView v;
    v.length = shape[static_cast<size_t>(axis)];
    v.count = outer * inner;
    v.stride = inner;
    v.outer_stride = v.length * inner;
    v.inner = inner;
    return v;
}

int64_t lane_base(const LaneView &v, int64_t lane) {
    const int64_t o = lane / v.inner, i = lane % v.inner;
    return o * v.outer_stride + i;
}

// Multiplier for regridding native-scale integers onto the 2^-16 working grid.
DyadicScale work_grid_multiplier(const Scale &s) { return dyadic_approx(s.value * kWorkOne, 24); }

int64_t to_work_grid(int64_t v, const DyadicScale &d) { return round_shift_right(v * d.b, d.c); }

// Mantissa 2^u for u = ir / 2^16 in (-1, 0], frozen cubic, result on 2^-24.
int64_t exp2_mantissa(int64_t ir) {
    static const int64_t c1 = llround(constants::kExp2C1 * kExpOne);
    static const int64_t c2 = llround(constants::kExp2C2 * kExpOne);
    static const int64_t c3 = llround(constants::kExp2C3 * kExpOne);
    int64_t m = c3;
    m = round_shift_right(m * ir, kWorkBits) + c2;
    m = round_shift_right(m * ir, kWorkBits) + c1;
    m = round_shift_right(m * ir, kWorkBits) + kExpOne;
    return m;
}

// e^(qw * 2^-16) on the 2^-24 grid via Eq-style base change:
// t = qw + qw>>1 - qw>>4, then 2^(t * 2^-16) split into 2^-z * 2^frac.
int64_t shift_exp_core(int64_t qw) {
    const int64_t t = qw + (qw >> 1) - (qw >> 4);
    int64_t ir = t % kWorkOne;
    if (ir > 0) ir -= kWorkOne; // remainder in (-2^16, 0]
    const int64_t z = (ir - t) >> kWorkBits;
    const int64_t m = exp2_mantissa(ir);
    if (z >= 0) return z >= 63 ? 0 : round_shift_right(m, static_cast<int>(z));
    if (z < -(30 - kExpFracBits))
        throw InvalidInputError("shift_exp: positive input beyond supported range");
    return m << (-z);
}

// e^(qw * 2^-16) on the 2^-24 grid via range reduction x = r - z*ln2 and the
// frozen quadratic evaluated in integers.
int64_t poly_iexp_core(int64_t qw) {
    static const int64_t qb = llround(constants::kIexpB * kWorkOne);
    static const int64_t qc = llround(constants::kIexpC / constants::kIexpA * kWorkOne * kWorkOne);
    // output multiplier a * 2^(24 - 32)
    static const DyadicScale ma = dyadic_approx(constants::kIexpA / 256.0, 24);
    if (qw > 0) qw = 0;
    if (qw < -kIexpMaxZ * kQLn2) return 0;
    const int64_t z = (-qw) / kQLn2;
    const int64_t qr = qw + z * kQLn2; // in (-kQLn2, 0]
    const int64_t u = qr + qb;
    const int64_t p = u * u + qc;
    const int shift = ma.c + static_cast<int>(z);
    return round_shift_right(p * ma.b, shift);
}

using ExpCore = int64_t (*)(int64_t);

// Kernel inputs are quantized activations; wider fixed-point tensors are not
// valid entry points.
void require_activation_input(const QTensor &q, const char *who) {
    if (q.scale().bits > Scale::kMaxQuantBits)
        throw InvalidInputError(std::string(who) + ": input must be a <=16-bit quantized tensor");
}

KernelOutput exp_kernel(const QTensor &q, ExpCore core) {
    require_activation_input(q, "exp");
    const DyadicScale wg = work_grid_multiplier(q.scale());
    std::vector<int32_t> out(static_cast<size_t>(q.numel()));
    for (int64_t i = 0; i < q.numel(); ++i) {
        const int64_t qw = to_work_grid(q[i], wg);
        out[static_cast<size_t>(i)] = static_cast<int32_t>(core(qw));
    }
    const Scale s = Scale::pow2(kExpFracBits, kExpOutIntBits);
    QTensor qt(q.shape(), std::move(out), s);
    return KernelOutput{std::move(qt), s};
}

KernelOutput softmax_linear(const QTensor &q, int axis, ExpCore core) {
    require_activation_input(q, "softmax");
    const LaneView lv = lanes_along(q.shape(), axis);
    const DyadicScale wg = work_grid_multiplier(q.scale());
    std::vector<int32_t> out(static_cast<size_t>(q.numel()));
    std::vector<int64_t> exps(static_cast<size_t>(lv.length));
    for (int64_t lane = 0; lane < lv.count; ++lane) {
        const int64_t base = lane_base(lv, lane);
        int32_t mx = q[base];
        for (int64_t j = 1; j < lv.length; ++j) mx = std::max(mx, q[base + j * lv.stride]);
        int64_t sum = 0;
        for (int64_t j = 0; j < lv.length; ++j) {
            const int64_t d = static_cast<int64_t>(q[base + j * lv.stride]) - mx;
            const int64_t e = core(to_work_grid(d, wg));
            exps[static_cast<size_t>(j)] = e;
            sum += e;
        }
        // max-subtracted term contributes >= 1, so sum > 0
        for (int64_t j = 0; j < lv.length; ++j) {
            const int64_t code = round_div(exps[static_cast<size_t>(j)] << kSoftmaxOutBits, sum);
            out[static_cast<size_t>(base + j * lv.stride)] = static_cast<int32_t>(code);
        }
    }
    const Scale s = Scale::pow2(kSoftmaxOutBits, kSoftmaxOutBits + 1);
    QTensor qt(q.shape(), std::move(out), s);
    return KernelOutput{std::move(qt), s};
}

// round(log2(sum / term)) for 1 <= term <= sum, exact via the integer
// sqrt(2) midpoint test.
int rounded_log2_ratio(int64_t sum, int64_t term) {
    const uint64_t ratio = static_cast<uint64_t>(sum / term);
    int k = std::bit_width(ratio) - 1;
    const unsigned __int128 lhs = static_cast<unsigned __int128>(sum) * static_cast<unsigned __int128>(sum);
    const unsigned __int128 t2 = static_cast<unsigned __int128>(term) << k;
    if (lhs >= 2 * t2 * t2) ++k;
    return k;
}

} // namespace

const char *to_string(MethodId m) {
    switch (m) {
        case MethodId::IBERT: return "ibert";
        case MethodId::FQVIT: return "fqvit";
        case MethodId::IVIT: return "ivit";
    }
    return "?";
}

const char *to_string(OpKind k) {
    switch (k) {
        case OpKind::SOFTMAX: return "softmax";
        case OpKind::GELU: return "gelu";
        case OpKind::LAYERNORM: return "layernorm";
    }
    return "?";
}

MethodId method_from_string(const std::string &s) {
    if (s == "ibert") return MethodId::IBERT;
    if (s == "fqvit") return MethodId::FQVIT;
    if (s == "ivit") return MethodId::IVIT;
    throw InvalidInputError("unknown method: " + s);
}

OpKind opkind_from_string(const std::string &s) {
    if (s == "softmax") return OpKind::SOFTMAX;
    if (s == "gelu") return OpKind::GELU;
    if (s == "layernorm") return OpKind::LAYERNORM;
    throw InvalidInputError("unknown op kind: " + s);
}

int method_option_count(OpKind k) { return k == OpKind::GELU ? 2 : 3; }

const std::vector<MethodId> &methods_for(OpKind k) {
    static const std::vector<MethodId> all = {MethodId::IBERT, MethodId::FQVIT, MethodId::IVIT};
    static const std::vector<MethodId> gelu = {MethodId::IBERT, MethodId::IVIT};
    return k == OpKind::GELU ? gelu : all;
}

uint64_t isqrt_newton(uint64_t n, int max_iters) {
    if (n == 0) return 0;
    uint64_t x = uint64_t{1} << ((std::bit_width(n) + 1) / 2);
    for (int i = 0; i < max_iters; ++i) {
        const uint64_t y = (x + n / x) >> 1;
        if (y >= x) break;
        x = y;
    }
    // monotone correction guarantees exactness even if iterations ran out
    while (x > 0 && x > n / x) --x;
    while ((x + 1) <= n / (x + 1)) ++x;
    return x;
}

uint64_t isqrt_shift10(uint64_t n) {
    if (n == 0) return 0;
    uint64_t x = uint64_t{1} << ((std::bit_width(n) + 1) / 2);
    for (int i = 0; i < 10; ++i) {
        x = (x + n / x) >> 1;
        if (x == 0) return 0;
    }
    return x;
}

KernelOutput shift_exp(const QTensor &q) { return exp_kernel(q, shift_exp_core); }

KernelOutput poly_iexp(const QTensor &q) { return exp_kernel(q, poly_iexp_core); }

KernelOutput softmax_ivit(const QTensor &q, int axis) { return softmax_linear(q, axis, shift_exp_core); }

KernelOutput softmax_ibert(const QTensor &q, int axis) { return softmax_linear(q, axis, poly_iexp_core); }

KernelOutput softmax_fqvit(const QTensor &q, int axis, int out_bits) {
    if (out_bits != 4 && out_bits != 8) throw InvalidInputError("softmax_fqvit: out_bits must be 4 or 8");
    require_activation_input(q, "softmax_fqvit");
    const LaneView lv = lanes_along(q.shape(), axis);
    const DyadicScale wg = work_grid_multiplier(q.scale());
    const int max_code = (1 << out_bits) - 1;
    // codes are stored linearly as 2^(30-code) on the 2^-30 grid; codes past
    // 30 dequantize to 0 (the clip floor for 8-bit codes is below the grid)
    constexpr int kStoreBits = 30;
    std::vector<int32_t> out(static_cast<size_t>(q.numel()));
    std::vector<int64_t> exps(static_cast<size_t>(lv.length));
    for (int64_t lane = 0; lane < lv.count; ++lane) {
        const int64_t base = lane_base(lv, lane);
        int32_t mx = q[base];
        for (int64_t j = 1; j < lv.length; ++j) mx = std::max(mx, q[base + j * lv.stride]);
        int64_t sum = 0;
        for (int64_t j = 0; j < lv.length; ++j) {
            const int64_t d = static_cast<int64_t>(q[base + j * lv.stride]) - mx;
            const int64_t e = poly_iexp_core(to_work_grid(d, wg));
            exps[static_cast<size_t>(j)] = e;
            sum += e;
        }
        for (int64_t j = 0; j < lv.length; ++j) {
            const int64_t term = exps[static_cast<size_t>(j)];
            int code = term == 0 ? max_code : rounded_log2_ratio(sum, term);
            code = std::clamp(code, 0, max_code);
            const int32_t v = code <= kStoreBits ? (int32_t{1} << (kStoreBits - code)) : 0;
            out[static_cast<size_t>(base + j * lv.stride)] = v;
        }
    }
    const Scale s = Scale::pow2(kStoreBits, kStoreBits + 1);
    QTensor qt(q.shape(), std::move(out), s);
    return KernelOutput{std::move(qt), s};
}

KernelOutput gelu_ibert(const QTensor &q) {
    require_activation_input(q, "gelu_ibert");
    const double su = q.scale().value / std::sqrt(2.0); // erf-argument scale
    // erf argument regridded to 2^-13 so the squared term stays in range;
    // the clip point lives on the same grid
    const DyadicScale du = dyadic_approx(su * 8192.0, 24);
    static const int64_t b13 = llround(-constants::kIerfB * 8192.0);
    // a * 2^-26 * 2^16 = a * 2^-10, applied to the squared 2^-13 argument
    const DyadicScale da = dyadic_approx(-constants::kIerfA / 1024.0, 24);
    constexpr int64_t kErfOne = 1 << 16;
    std::vector<int32_t> out(static_cast<size_t>(q.numel()));
    for (int64_t i = 0; i < q.numel(); ++i) {
        const int64_t v = q[i];
        const int64_t ua = round_shift_right(std::abs(v) * du.b, du.c);
        const int64_t uw = std::min(ua, b13) - b13; // <= 0
        const int64_t p = uw * uw;
        int64_t erf_mag = kErfOne - round_shift_right(p * da.b, da.c);
        erf_mag = std::max<int64_t>(erf_mag, 0);
        const int64_t erf_signed = v >= 0 ? erf_mag : -erf_mag;
        const int64_t g = v * (kErfOne + erf_signed); // x*(1+ierf) at S*2^-17
        out[static_cast<size_t>(i)] = static_cast<int32_t>(round_shift_right(g, 2));
    }
    const Scale s = Scale::from_value(std::ldexp(q.scale().value, -kGeluFracBits), 31);
    QTensor qt(q.shape(), std::move(out), s);
    return KernelOutput{std::move(qt), s};
}

KernelOutput gelu_ivit(const QTensor &q) {
    require_activation_input(q, "gelu_ivit");
    const DyadicScale wg = work_grid_multiplier(q.scale());
    std::vector<int32_t> out(static_cast<size_t>(q.numel()));
    for (int64_t i = 0; i < q.numel(); ++i) {
        const int64_t v = q[i];
        // 1.702x as x + x>>1 + x>>3 + x>>4 on the native grid
        const int64_t arg = v + (v >> 1) + (v >> 3) + (v >> 4);
        const int64_t aw = to_work_grid(arg, wg);
        // sigmoid from the shift-exp of the nonpositive argument
        int64_t sig;
        if (aw <= 0) {
            const int64_t e = shift_exp_core(aw);
            sig = round_div(e << kExpFracBits, e + kExpOne);
        } else {
            const int64_t e = shift_exp_core(-aw);
            sig = round_div(int64_t{1} << (2 * kExpFracBits), e + kExpOne);
        }
        const int64_t g = v * sig; // at S * 2^-24
        out[static_cast<size_t>(i)] =
            static_cast<int32_t>(round_shift_right(g, kExpFracBits - kGeluFracBits));
    }
    const Scale s = Scale::from_value(std::ldexp(q.scale().value, -kGeluFracBits), 31);
    QTensor qt(q.shape(), std::move(out), s);
    return KernelOutput{std::move(qt), s};
}

namespace {

constexpr int kNormFracBits = 15; // grid of the normalized value y/std

using IsqrtFn = uint64_t (*)(uint64_t);

uint64_t isqrt_exact(uint64_t n) { return isqrt_newton(n, 32); }

struct AffineInts {
    std::vector<int64_t> gamma;
    std::vector<int64_t> beta;
    double acc_scale; // scale of yn*gamma + beta
};

AffineInts quantize_affine(const AffineParams &p, int64_t d, int bits) {
    if (p.gamma.numel() != d || p.beta.numel() != d)
        throw InvalidInputError("layernorm: affine length does not match feature dim");
    const Scale sg = compute_scale(p.gamma, bits);
    AffineInts a;
    a.acc_scale = sg.value * std::ldexp(1.0, -kNormFracBits);
    a.gamma.resize(static_cast<size_t>(d));
    a.beta.resize(static_cast<size_t>(d));
    for (int64_t c = 0; c < d; ++c) {
        a.gamma[static_cast<size_t>(c)] = llround(p.gamma[c] / sg.value);
        a.beta[static_cast<size_t>(c)] = llround(p.beta[c] / a.acc_scale);
    }
    return a;
}

// Shared integer LayerNorm: integer row statistics at `sub_bits` fractional
// precision, Newton square root, 2^-15 normalized values, quantized affine.
// Output is requantized either to a dynamic max-abs scale (dynamic_out) or
// to the provided fixed scale.
KernelOutput layernorm_core(const QTensor &q, const AffineParams &p, IsqrtFn isqrt, int sub_bits,
                            const std::vector<int> *channel_alpha, const Scale *fixed_out) {
    require_activation_input(q, "layernorm");
    const Shape &shape = q.shape();
    const int64_t d = shape.back();
    const int64_t rows = q.numel() / d;
    const int bits = q.scale().bits;
    const AffineInts aff = quantize_affine(p, d, bits);
    // 64-bit bound on the squared-deviation sum: 2*(value bits + shift + 1) + log2(d) < 63
    {
        const int shift_max = sub_bits - CalibStats::kAlphaLo;
        const int ybits = bits + shift_max + 1;
        if (2 * ybits + std::bit_width(static_cast<uint64_t>(d)) >= 63)
            throw OverflowError("layernorm: row energy exceeds the 64-bit accumulator");
    }

    int alpha_min = 0;
    if (channel_alpha) {
        if (static_cast<int64_t>(channel_alpha->size()) != d)
            throw InvalidInputError("layernorm: channel alpha length mismatch");
        for (int a : *channel_alpha) alpha_min = std::min(alpha_min, a);
    }

    std::vector<int64_t> acc(static_cast<size_t>(q.numel()));
    std::vector<int64_t> row(static_cast<size_t>(d));
    for (int64_t r = 0; r < rows; ++r) {
        const int64_t base = r * d;
        int64_t sum = 0;
        for (int64_t c = 0; c < d; ++c) {
            // PTF alignment: channel grid S*2^alpha, then the common finest
            // grid S*2^(alpha_min - sub_bits). Per-tensor inputs make the
            // net shift uniform; the bookkeeping keeps the structure.
            int shift = sub_bits;
            if (channel_alpha) shift = sub_bits - (*channel_alpha)[static_cast<size_t>(c)] +
                                       ((*channel_alpha)[static_cast<size_t>(c)] - alpha_min);
            const int64_t v = static_cast<int64_t>(q[base + c]) << shift;
            row[static_cast<size_t>(c)] = v;
            sum += v;
        }
        const int64_t mu = round_div(sum, d);
        int64_t sq = 0;
        for (int64_t c = 0; c < d; ++c) {
            const int64_t y = row[static_cast<size_t>(c)] - mu;
            row[static_cast<size_t>(c)] = y;
            sq += y * y;
        }
        const int64_t var = round_div(sq, d);
        const int64_t std_int = static_cast<int64_t>(isqrt(static_cast<uint64_t>(var) + 1));
        for (int64_t c = 0; c < d; ++c) {
            const int64_t yn = round_div(row[static_cast<size_t>(c)] << kNormFracBits, std_int);
            acc[static_cast<size_t>(base + c)] =
                yn * aff.gamma[static_cast<size_t>(c)] + aff.beta[static_cast<size_t>(c)];
        }
    }

    Scale out_scale;
    std::vector<int32_t> out(static_cast<size_t>(q.numel()));
    if (fixed_out) {
        out_scale = *fixed_out;
        const DyadicScale dr = dyadic_approx(aff.acc_scale / out_scale.value, 24);
        const int64_t bound = int64_t{1} << (out_scale.bits - 1);
        for (size_t i = 0; i < acc.size(); ++i) {
            int64_t v = round_shift_right(acc[i] * dr.b, dr.c);
            out[i] = static_cast<int32_t>(std::clamp(v, -bound, bound));
        }
    } else {
        int64_t amax = 0;
        for (int64_t a : acc) amax = std::max(amax, std::abs(a));
        if (amax == 0) {
            out_scale = Scale::from_alpha(kDegenerateAlpha, bits);
        } else {
            out_scale = Scale::from_alpha(static_cast<double>(amax) * aff.acc_scale, bits);
            const int64_t levels = (int64_t{1} << bits) - 1;
            for (size_t i = 0; i < acc.size(); ++i)
                out[i] = static_cast<int32_t>(round_div(acc[i] * levels, 2 * amax));
        }
    }
    QTensor qt(shape, std::move(out), out_scale);
    return KernelOutput{std::move(qt), out_scale};
}

} // namespace

KernelOutput layernorm_ibert(const QTensor &q, const AffineParams &p) {
    return layernorm_core(q, p, isqrt_exact, 0, nullptr, nullptr);
}

KernelOutput layernorm_ivit(const QTensor &q, const AffineParams &p) {
    return layernorm_core(q, p, isqrt_shift10, 0, nullptr, nullptr);
}

KernelOutput layernorm_fqvit(const QTensor &q, const AffineParams &p, const CalibStats &calib) {
    if (!calib.valid) throw InvalidStateError("layernorm_fqvit: missing calibration");
    return layernorm_core(q, p, isqrt_exact, 6, &calib.channel_alpha, &calib.out_scale);
}

CalibStats calibrate_layernorm_fqvit(const std::vector<Tensor> &inputs, const AffineParams &p, int bits) {
    if (inputs.empty()) throw InvalidInputError("calibration requires at least one tensor");
    const int64_t d = inputs.front().shape().back();
    std::vector<double> ch_max(static_cast<size_t>(d), 0.0);
    double out_max = 0.0;
    for (const Tensor &t : inputs) {
        if (t.shape().back() != d) throw InvalidInputError("calibration tensors disagree on feature dim");
        for (int64_t i = 0; i < t.numel(); ++i)
            ch_max[static_cast<size_t>(i % d)] = std::max(ch_max[static_cast<size_t>(i % d)], std::fabs(t[i]));
        const Tensor ref = layernorm_reference(t, p);
        out_max = std::max(out_max, ref.max_abs());
    }
    double global = 0.0;
    for (double m : ch_max) global = std::max(global, m);
    CalibStats cs;
    cs.channel_alpha.resize(static_cast<size_t>(d));
    for (int64_t c = 0; c < d; ++c) {
        const double m = ch_max[static_cast<size_t>(c)];
        int a = CalibStats::kAlphaLo;
        if (m > 0.0 && global > 0.0)
            a = static_cast<int>(round_half_away(std::log2(m / global)));
        cs.channel_alpha[static_cast<size_t>(c)] = std::clamp(a, CalibStats::kAlphaLo, 0);
    }
    cs.out_scale = Scale::from_alpha(out_max > 0.0 ? out_max : kDegenerateAlpha,
                                     std::min(bits, Scale::kMaxQuantBits));
    cs.valid = true;
    return cs;
}

Tensor layernorm_reference(const Tensor &t, const AffineParams &p) {
    const int64_t d = t.shape().back();
    if (p.gamma.numel() != d || p.beta.numel() != d)
        throw InvalidInputError("layernorm: affine length does not match feature dim");
    Tensor out(t.shape());
    const int64_t rows = t.numel() / d;
    for (int64_t r = 0; r < rows; ++r) {
        const int64_t base = r * d;
        double mu = 0;
        for (int64_t c = 0; c < d; ++c) mu += t[base + c];
        mu /= static_cast<double>(d);
        double var = 0;
        for (int64_t c = 0; c < d; ++c) {
            const double y = t[base + c] - mu;
            var += y * y;
        }
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        for (int64_t c = 0; c < d; ++c)
            out[base + c] = (t[base + c] - mu) * inv * p.gamma[c] + p.beta[c];
    }
    return out;
}

} // namespace mixedq
