#pragma once

#include <cstdint>

#include "mixedq/tensor.hpp"

namespace mixedq {

// Degenerate all-zero tensors get this clip bound instead of 0 so the scale
// stays positive.
inline constexpr double kDegenerateAlpha = 1e-8;

// round-half-away-from-zero on reals, the rounding mode of every quantizer
// in this project.
inline double round_half_away(double x) { return x >= 0.0 ? std::floor(x + 0.5) : std::ceil(x - 0.5); }

// (v * 2^-shift) with round-half-away-from-zero, shift >= 0.
int64_t round_shift_right(int64_t v, int shift);

// Rounded integer division, half away from zero. d > 0.
int64_t round_div(int64_t n, int64_t d);

// Per-tensor clip bound and step from the max-abs rule.
Scale compute_scale(const Tensor &t, int bits);

// I = round(clip(R, -alpha, alpha) / S).
QTensor quantize(const Tensor &t, const Scale &s);

// R' = I * S.
Tensor dequantize(const QTensor &q);

// quantize-then-dequantize at the tensor's own scale; shape preserved.
Tensor fake_quantize(const Tensor &t, int bits);

// Straight-through estimator: upstream gradient masked by the closed
// interval -alpha <= r <= alpha.
Tensor ste_grad(const Tensor &upstream, const Tensor &r, const Scale &s);

// Best b * 2^-c approximation of a positive real with b reduced to odd.
// Relative error <= 2^-(precision_bits-1).
DyadicScale dyadic_approx(double real_scale, int precision_bits);

// Integer rescaling between two scales via multiply-and-shift.
QTensor requantize(const QTensor &q, const Scale &new_scale, int precision_bits);

} // namespace mixedq
