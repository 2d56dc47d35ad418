#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mixedq/quant.hpp"
#include "mixedq/tensor.hpp"

namespace mixedq {

// The three published integer approximation families.
enum class MethodId { IBERT, FQVIT, IVIT };

// The three non-linear operations of a transformer encoder.
enum class OpKind { SOFTMAX, GELU, LAYERNORM };

const char *to_string(MethodId m);
const char *to_string(OpKind k);
MethodId method_from_string(const std::string &s);
OpKind opkind_from_string(const std::string &s);

// FQ-ViT has no GELU method, so GELU offers two options.
int method_option_count(OpKind k);
const std::vector<MethodId> &methods_for(OpKind k);

// Uniform kernel return contract: integer output plus its scale.
struct KernelOutput {
    QTensor q;
    Scale scale; // == q.scale()
};

// Per-feature LayerNorm affine parameters.
struct AffineParams {
    Tensor gamma;
    Tensor beta;
};

// Power-of-two-factor calibration for the FQ-ViT LayerNorm: per-channel
// alignment exponents (<= 0) and the output scale fixed by the PTQ pass.
struct CalibStats {
    bool valid = false;
    std::vector<int> channel_alpha;
    Scale out_scale;

    static constexpr int kAlphaLo = -3;
};

// --- shared integer primitives --------------------------------------------

// floor(sqrt(n)) by Newton iteration from x0 = 2^ceil(bitlen(n)/2).
// Converges within max_iters or finishes with a monotone correction step.
uint64_t isqrt_newton(uint64_t n, int max_iters = 32);

// I-ViT variant: the halving is a right shift and the iteration count is a
// fixed empirical 10, with no final correction. May land on floor(sqrt)+1.
uint64_t isqrt_shift10(uint64_t n);

// e^x via the base change 2^(x * 1.4375) where 1.4375 = 1 + 1>>1 - 1>>4,
// mantissa from the frozen cubic. Output on the 2^-24 grid.
KernelOutput shift_exp(const QTensor &q);

// e^x via range reduction and the frozen second-order polynomial fit.
// Output on the 2^-24 grid.
KernelOutput poly_iexp(const QTensor &q);

// --- softmax ----------------------------------------------------------------

inline constexpr int kSoftmaxOutBits = 8; // I-ViT / I-BERT output codes

KernelOutput softmax_ivit(const QTensor &q, int axis);
KernelOutput softmax_ibert(const QTensor &q, int axis);
// Log-Int-Softmax: output codes dequantize to powers of two.
KernelOutput softmax_fqvit(const QTensor &q, int axis, int out_bits);

// --- GELU -------------------------------------------------------------------

// Both GELU kernels output on the (input scale * 2^-15) grid.
KernelOutput gelu_ibert(const QTensor &q);
KernelOutput gelu_ivit(const QTensor &q);

// --- LayerNorm --------------------------------------------------------------

// Normalization runs over the last axis; affine lengths must match it.
KernelOutput layernorm_ibert(const QTensor &q, const AffineParams &p);
KernelOutput layernorm_ivit(const QTensor &q, const AffineParams &p);
KernelOutput layernorm_fqvit(const QTensor &q, const AffineParams &p, const CalibStats &calib);

// PTQ calibration pass over analysis data (float inputs, last dim = features).
CalibStats calibrate_layernorm_fqvit(const std::vector<Tensor> &inputs, const AffineParams &p, int bits);

// Float LayerNorm used by the full-precision path and as calibration oracle.
Tensor layernorm_reference(const Tensor &t, const AffineParams &p);

inline constexpr double kLayerNormEps = 1e-5; // float-path epsilon

} // namespace mixedq
