#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "mixedq/kernels.hpp"

namespace mixedq {

struct BenchSpec {
    std::vector<std::pair<int64_t, int64_t>> sizes = {{1000, 1000}, {100, 100}, {10, 10}};
    double lo = -4.0, hi = 4.0;
    int reps = 12;
    int warmup = 3;
    uint64_t seed = 1;

    void validate() const;
};

struct BenchRow {
    OpKind kind;
    MethodId method;
    int64_t rows, cols;
    double sqnr_db;
    double latency_mean_ms;
    double latency_sd_ms;
};

// Per-kernel SQNR and latency over random tensors. Inputs are 8-bit
// quantized; SQNR compares the dequantized kernel output against a float
// reference evaluated on the same dequantized input:
//   softmax / layernorm -> the true non-linearity (all methods comparable),
//   GELU -> the method's own float form (the erf-quadratic for I-BERT, the
//           1.702-sigmoid of the GELU paper for I-ViT), so the number
//           measures how faithfully the integer pipeline realizes it.
// Latency timing is single-threaded; warmup runs are discarded.
std::vector<BenchRow> run_bench(const BenchSpec &spec);

// One kernel cell, exposed for tests.
double bench_sqnr(OpKind kind, MethodId method, const Tensor &input);

std::string bench_to_csv(const std::vector<BenchRow> &rows);
std::string bench_to_table(const std::vector<BenchRow> &rows);

// Deterministic uniform tensor in [lo, hi).
Tensor random_uniform_tensor(Shape shape, double lo, double hi, uint64_t seed);

} // namespace mixedq
