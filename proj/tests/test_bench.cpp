#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mixedq/bench.hpp"
#include "mixedq/sensitivity.hpp"

using namespace mixedq;

TEST_CASE("run_bench covers every kernel at every size") {
    BenchSpec spec;
    spec.sizes = {{16, 16}, {32, 8}};
    spec.reps = 3;
    spec.warmup = 1;
    spec.seed = 5;
    const auto rows = run_bench(spec);
    CHECK(rows.size() == 8 * spec.sizes.size());
    int gelu = 0, softmax = 0, ln = 0;
    for (const BenchRow &r : rows) {
        CHECK(r.latency_sd_ms >= 0.0);
        CHECK(r.latency_mean_ms >= 0.0);
        if (r.kind == OpKind::GELU) ++gelu;
        if (r.kind == OpKind::SOFTMAX) ++softmax;
        if (r.kind == OpKind::LAYERNORM) ++ln;
    }
    CHECK(gelu == 2 * 2);
    CHECK(softmax == 3 * 2);
    CHECK(ln == 3 * 2);
}

TEST_CASE("bench SQNR is deterministic for a fixed seed") {
    BenchSpec spec;
    spec.sizes = {{64, 64}};
    spec.reps = 3;
    spec.warmup = 0;
    spec.seed = 9;
    const auto a = run_bench(spec);
    const auto b = run_bench(spec);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].sqnr_db == b[i].sqnr_db);
}

TEST_CASE("bench orderings at 1000x1000") {
    const Tensor t = random_uniform_tensor(Shape{1000, 1000}, -4.0, 4.0, 31);
    const double g_ibert = bench_sqnr(OpKind::GELU, MethodId::IBERT, t);
    const double g_ivit = bench_sqnr(OpKind::GELU, MethodId::IVIT, t);
    CHECK(g_ibert - g_ivit >= 30.0);

    const double l_fq = bench_sqnr(OpKind::LAYERNORM, MethodId::FQVIT, t);
    const double l_ib = bench_sqnr(OpKind::LAYERNORM, MethodId::IBERT, t);
    const double l_iv = bench_sqnr(OpKind::LAYERNORM, MethodId::IVIT, t);
    CHECK(l_fq > l_ib);
    CHECK(l_fq > l_iv);

    // shift-exp and poly-exp softmax stay within the same grid-noise band;
    // the three-way band including the log-coded output is exercised by the
    // acceptance suite
    const double s_iv = bench_sqnr(OpKind::SOFTMAX, MethodId::IVIT, t);
    const double s_ib = bench_sqnr(OpKind::SOFTMAX, MethodId::IBERT, t);
    CHECK(std::fabs(s_iv - s_ib) <= 1.0);
}

TEST_CASE("bench formatting") {
    BenchSpec spec;
    spec.sizes = {{10, 10}};
    spec.reps = 3;
    spec.warmup = 0;
    const auto rows = run_bench(spec);
    const std::string csv = bench_to_csv(rows);
    CHECK(csv.rfind("op_kind,method,rows,cols", 0) == 0);
    CHECK(csv.find("layernorm,fqvit,10,10") != std::string::npos);
    const std::string table = bench_to_table(rows);
    CHECK(table.find("10x10") != std::string::npos);
}

TEST_CASE("bench spec validation") {
    BenchSpec bad;
    bad.sizes = {};
    CHECK_THROWS_AS(run_bench(bad), InvalidInputError);
    bad = BenchSpec{};
    bad.reps = 1;
    CHECK_THROWS_AS(run_bench(bad), InvalidInputError);
    bad = BenchSpec{};
    bad.lo = 2.0;
    bad.hi = 1.0;
    CHECK_THROWS_AS(run_bench(bad), InvalidInputError);
}
