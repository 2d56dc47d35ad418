#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "mixedq/errors.hpp"

namespace mixedq {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape &shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

// Dense full-precision tensor, row-major. All elements are finite by
// construction; this is the analysis-side representation of activations.
class Tensor {
public:
    Tensor() = default;

    Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        validate();
    }

    explicit Tensor(Shape shape) : shape_(std::move(shape)) {
        for (int64_t d : shape_)
            if (d <= 0) throw InvalidInputError("tensor dimensions must be positive");
        data_.assign(static_cast<size_t>(shape_numel(shape_)), 0.0);
    }

    static Tensor scalar_like(const Shape &shape, double v) {
        Tensor t(shape);
        for (auto &x : t.data_) x = v;
        return t;
    }

    const Shape &shape() const { return shape_; }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
    int64_t dim(int64_t i) const { return shape_[static_cast<size_t>(i)]; }

    double *data() { return data_.data(); }
    const double *data() const { return data_.data(); }
    double &operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    const std::vector<double> &values() const { return data_; }
    std::vector<double> &values() { return data_; }

    double max_abs() const {
        double m = 0.0;
        for (double v : data_) m = std::max(m, std::fabs(v));
        return m;
    }

private:
    void validate() const {
        if (shape_.empty()) throw InvalidInputError("tensor rank must be >= 1");
        for (int64_t d : shape_)
            if (d <= 0) throw InvalidInputError("tensor dimensions must be positive");
        if (shape_numel(shape_) != static_cast<int64_t>(data_.size()))
            throw InvalidInputError("shape product does not match element count");
        for (double v : data_)
            if (!std::isfinite(v)) throw InvalidInputError("tensor elements must be finite");
    }

    Shape shape_;
    std::vector<double> data_;
};

// Uniform symmetric quantization parameters: S = 2*alpha / (2^bits - 1).
// Scales derived from a tensor keep bits in the quantization range {2..16};
// kernel outputs use synthetic power-of-two scales whose integer width may
// be larger (up to 31) to hold fixed-point intermediates.
struct Scale {
    double value = 1.0;  // step size S, always > 0
    double alpha = 0.0;  // clip bound
    int bits = 8;

    static constexpr int kMinQuantBits = 2;
    static constexpr int kMaxQuantBits = 16;

    static Scale from_alpha(double alpha, int bits) {
        if (bits < kMinQuantBits || bits > kMaxQuantBits)
            throw InvalidInputError("quantization bits must be in {2..16}");
        if (alpha < 0.0 || !std::isfinite(alpha))
            throw InvalidInputError("clip bound must be nonnegative and finite");
        Scale s;
        s.alpha = alpha;
        s.bits = bits;
        s.value = 2.0 * alpha / (static_cast<double>((1 << bits) - 1));
        if (s.value <= 0.0) throw InvalidInputError("scale must be positive");
        return s;
    }

    // Synthetic scale for kernel fixed-point outputs. `bits` bounds the
    // integer magnitude (|v| <= 2^(bits-1)) rather than a quantizer width.
    static Scale from_value(double value, int bits) {
        if (value <= 0.0 || !std::isfinite(value))
            throw InvalidInputError("scale value must be positive and finite");
        if (bits < kMinQuantBits || bits > 31)
            throw InvalidInputError("scale bits out of range");
        Scale s;
        s.value = value;
        s.bits = bits;
        s.alpha = value * (std::ldexp(1.0, bits - 1));
        return s;
    }

    static Scale pow2(int neg_exp, int bits) { return from_value(std::ldexp(1.0, -neg_exp), bits); }
};

// Rational b * 2^(-c) used for integer-only rescaling.
struct DyadicScale {
    int64_t b = 1;
    int c = 0;

    double as_real() const { return std::ldexp(static_cast<double>(b), -c); }
};

// Integer tensor plus its scale. Values satisfy |v| <= 2^(bits-1); the bound
// itself is admitted because round(127.5) = 128 under half-away rounding.
class QTensor {
public:
    QTensor() = default;

    QTensor(Shape shape, std::vector<int32_t> values, Scale scale)
        : shape_(std::move(shape)), values_(std::move(values)), scale_(scale) {
        if (shape_numel(shape_) != static_cast<int64_t>(values_.size()))
            throw InvalidInputError("shape product does not match element count");
        const int64_t bound = int64_t{1} << (scale_.bits - 1);
        for (int32_t v : values_)
            if (std::abs(static_cast<int64_t>(v)) > bound)
                throw InvalidInputError("quantized value exceeds symmetric range");
    }

    const Shape &shape() const { return shape_; }
    int64_t numel() const { return static_cast<int64_t>(values_.size()); }
    const Scale &scale() const { return scale_; }

    const std::vector<int32_t> &values() const { return values_; }
    int32_t operator[](int64_t i) const { return values_[static_cast<size_t>(i)]; }

private:
    Shape shape_;
    std::vector<int32_t> values_;
    Scale scale_;
};

} // namespace mixedq
