#include "mixedq/bench.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "mixedq/kernel_constants.hpp"
#include "mixedq/quant.hpp"
#include "mixedq/sensitivity.hpp"

namespace mixedq {

namespace {

constexpr int kBenchBits = 8;

Tensor softmax_reference(const Tensor &t) {
    const int64_t d = t.shape().back();
    const int64_t rows = t.numel() / d;
    Tensor out(t.shape());
    for (int64_t r = 0; r < rows; ++r) {
        const int64_t base = r * d;
        double mx = t[base];
        for (int64_t j = 1; j < d; ++j) mx = std::max(mx, t[base + j]);
        double sum = 0;
        for (int64_t j = 0; j < d; ++j) {
            out[base + j] = std::exp(t[base + j] - mx);
            sum += out[base + j];
        }
        for (int64_t j = 0; j < d; ++j) out[base + j] /= sum;
    }
    return out;
}

// float form of the I-BERT GELU: the frozen saturated quadratic for erf
Tensor gelu_ibert_reference(const Tensor &t) {
    Tensor out(t.shape());
    for (int64_t i = 0; i < t.numel(); ++i) {
        const double x = t[i];
        const double u = std::min(std::fabs(x) / std::sqrt(2.0), -constants::kIerfB) + constants::kIerfB;
        const double erf_v = (x >= 0 ? 1.0 : -1.0) * (constants::kIerfA * u * u + 1.0);
        out[i] = x == 0.0 ? 0.0 : 0.5 * x * (1.0 + erf_v);
    }
    return out;
}

// float form of the I-ViT GELU: x * sigmoid(1.702 x)
Tensor gelu_ivit_reference(const Tensor &t) {
    Tensor out(t.shape());
    for (int64_t i = 0; i < t.numel(); ++i) {
        const double x = t[i];
        out[i] = x / (1.0 + std::exp(-1.702 * x));
    }
    return out;
}

KernelOutput run_kernel(OpKind kind, MethodId method, const QTensor &q, const AffineParams &p,
                        const CalibStats &cs) {
    switch (kind) {
        case OpKind::SOFTMAX:
            if (method == MethodId::IVIT) return softmax_ivit(q, -1);
            if (method == MethodId::IBERT) return softmax_ibert(q, -1);
            return softmax_fqvit(q, -1, kBenchBits);
        case OpKind::GELU:
            return method == MethodId::IBERT ? gelu_ibert(q) : gelu_ivit(q);
        case OpKind::LAYERNORM:
            if (method == MethodId::IBERT) return layernorm_ibert(q, p);
            if (method == MethodId::IVIT) return layernorm_ivit(q, p);
            return layernorm_fqvit(q, p, cs);
    }
    throw InvalidInputError("bench: bad kernel");
}

Tensor reference_for(OpKind kind, MethodId method, const Tensor &xq, const AffineParams &p) {
    switch (kind) {
        case OpKind::SOFTMAX: return softmax_reference(xq);
        case OpKind::GELU:
            return method == MethodId::IBERT ? gelu_ibert_reference(xq) : gelu_ivit_reference(xq);
        case OpKind::LAYERNORM: return layernorm_reference(xq, p);
    }
    throw InvalidInputError("bench: bad kernel");
}

} // namespace

void BenchSpec::validate() const {
    if (sizes.empty()) throw InvalidInputError("bench: sizes must be non-empty");
    for (auto [r, c] : sizes)
        if (r < 1 || c < 1) throw InvalidInputError("bench: sizes must be positive");
    if (!(lo < hi)) throw InvalidInputError("bench: value range must satisfy lo < hi");
    if (reps < 3) throw InvalidInputError("bench: reps must be >= 3");
}

Tensor random_uniform_tensor(Shape shape, double lo, double hi, uint64_t seed) {
    std::mt19937_64 g(seed);
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) {
        const double u = static_cast<double>(g() >> 11) * 0x1.0p-53;
        t[i] = lo + (hi - lo) * u;
    }
    return t;
}

double bench_sqnr(OpKind kind, MethodId method, const Tensor &input) {
    const QTensor q = quantize(input, compute_scale(input, kBenchBits));
    const Tensor xq = dequantize(q);
    const int64_t d = input.shape().back();
    AffineParams p{Tensor::scalar_like(Shape{d}, 1.0), Tensor(Shape{d})};
    CalibStats cs;
    if (kind == OpKind::LAYERNORM && method == MethodId::FQVIT)
        cs = calibrate_layernorm_fqvit({xq}, p, kBenchBits);
    const KernelOutput out = run_kernel(kind, method, q, p, cs);
    const Tensor ref = reference_for(kind, method, xq, p);
    return sqnr_capped(asqnr({ref}, {dequantize(out.q)}));
}

std::vector<BenchRow> run_bench(const BenchSpec &spec) {
    spec.validate();
    std::vector<BenchRow> rows;
    const std::vector<std::pair<OpKind, MethodId>> kernels = {
        {OpKind::GELU, MethodId::IVIT},      {OpKind::GELU, MethodId::IBERT},
        {OpKind::SOFTMAX, MethodId::IVIT},   {OpKind::SOFTMAX, MethodId::IBERT},
        {OpKind::SOFTMAX, MethodId::FQVIT},  {OpKind::LAYERNORM, MethodId::IVIT},
        {OpKind::LAYERNORM, MethodId::IBERT}, {OpKind::LAYERNORM, MethodId::FQVIT}};

    for (auto [r, c] : spec.sizes) {
        // one tensor per size so all methods see identical inputs
        const Tensor input =
            random_uniform_tensor(Shape{r, c}, spec.lo, spec.hi, spec.seed ^ (static_cast<uint64_t>(r) << 20 ^ static_cast<uint64_t>(c)));
        const QTensor q = quantize(input, compute_scale(input, kBenchBits));
        const Tensor xq = dequantize(q);
        AffineParams p{Tensor::scalar_like(Shape{c}, 1.0), Tensor(Shape{c})};
        for (auto [kind, method] : kernels) {
            CalibStats cs;
            if (kind == OpKind::LAYERNORM && method == MethodId::FQVIT)
                cs = calibrate_layernorm_fqvit({xq}, p, kBenchBits);
            BenchRow row;
            row.kind = kind;
            row.method = method;
            row.rows = r;
            row.cols = c;
            const KernelOutput out = run_kernel(kind, method, q, p, cs);
            row.sqnr_db = sqnr_capped(asqnr({reference_for(kind, method, xq, p)}, {dequantize(out.q)}));

            for (int w = 0; w < spec.warmup; ++w) (void)run_kernel(kind, method, q, p, cs);
            std::vector<double> ms(static_cast<size_t>(spec.reps));
            for (int rep = 0; rep < spec.reps; ++rep) {
                const auto t0 = std::chrono::steady_clock::now();
                (void)run_kernel(kind, method, q, p, cs);
                const auto t1 = std::chrono::steady_clock::now();
                ms[static_cast<size_t>(rep)] =
                    std::chrono::duration<double, std::milli>(t1 - t0).count();
            }
            double mean = 0;
            for (double v : ms) mean += v;
            mean /= static_cast<double>(ms.size());
            double var = 0;
            for (double v : ms) var += (v - mean) * (v - mean);
            var /= static_cast<double>(ms.size());
            row.latency_mean_ms = mean;
            row.latency_sd_ms = std::sqrt(var);
            rows.push_back(row);
        }
    }
    return rows;
}

std::string bench_to_csv(const std::vector<BenchRow> &rows) {
    std::ostringstream os;
    os << "op_kind,method,rows,cols,sqnr_db,latency_mean_ms,latency_sd_ms\n";
    char buf[128];
    for (const BenchRow &r : rows) {
        std::snprintf(buf, sizeof buf, "%s,%s,%lld,%lld,%.6f,%.6f,%.6f\n", to_string(r.kind),
                      to_string(r.method), static_cast<long long>(r.rows), static_cast<long long>(r.cols),
                      r.sqnr_db, r.latency_mean_ms, r.latency_sd_ms);
        os << buf;
    }
    return os.str();
}

std::string bench_to_table(const std::vector<BenchRow> &rows) {
    std::ostringstream os;
    os << "Layer      Method   Size         SQNR      Latency (SD)\n";
    os << "---------  -------  -----------  --------  --------------\n";
    char buf[160];
    for (const BenchRow &r : rows) {
        char size[32];
        std::snprintf(size, sizeof size, "%lldx%lld", static_cast<long long>(r.rows),
                      static_cast<long long>(r.cols));
        std::snprintf(buf, sizeof buf, "%-9s  %-7s  %-11s  %8.2f  %.3f (%.3f)\n", to_string(r.kind),
                      to_string(r.method), size, r.sqnr_db, r.latency_mean_ms, r.latency_sd_ms);
        os << buf;
    }
    return os.str();
}

} // namespace mixedq
