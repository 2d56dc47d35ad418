// Acceptance suite: one line per criterion, PASS/FAIL/WARN, details inline.
// The process exits nonzero if any hard criterion fails.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mixedq/bench.hpp"
#include "mixedq/fit.hpp"
#include "mixedq/kernel_constants.hpp"
#include "mixedq/pipeline.hpp"
#include "mixedq/quant.hpp"

using namespace mixedq;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int criterion, bool pass, const std::string &detail, bool soft = false) {
    const char *tag = pass ? "PASS" : (soft ? "WARN" : "FAIL");
    std::printf("criterion %2d [%s] %s\n", criterion, tag, detail.c_str());
    if (!pass && !soft) ++failures;
}

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

std::mt19937_64 rng(2024);

double uniform(double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

std::string fmt(const char *f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

bool bits_equal(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

std::string slurp(const fs::path &p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// --- criterion 1: integer sqrt exactness -----------------------------------

void criterion_isqrt() {
    const double t0 = now_seconds();
    uint64_t root = 0;
    bool exact = true;
    for (uint64_t n = 0; n < (uint64_t{1} << 20); ++n) {
        if ((root + 1) * (root + 1) <= n) ++root;
        if (isqrt_newton(n) != root) {
            exact = false;
            break;
        }
    }
    const double dt = now_seconds() - t0;
    report(1, exact && dt < 10.0,
           fmt("isqrt_newton == floor-sqrt for all n < 2^20 (%.2f s single-threaded)", dt));
}

// --- criterion 2: shift-exp fidelity ----------------------------------------

void criterion_shift_exp() {
    const int n = 100000;
    Tensor t(Shape{n});
    for (int i = 0; i < n; ++i) t[i] = -8.0 + 8.0 * i / (n - 1);
    const QTensor q = quantize(t, compute_scale(t, 16));
    const Tensor xq = dequantize(q);
    const Tensor out = dequantize(shift_exp(q).q);
    double worst = 0;
    for (int i = 0; i < n; ++i)
        worst = std::max(worst, std::fabs(out[i] - std::exp(xq[i])) / std::exp(xq[i]));
    report(2, worst <= 0.035,
           fmt("shift_exp max rel err vs e^x on [-8,0], 1e5 points: %.3f%% (limit 3.5%%)", 100 * worst));
}

// --- criterion 3: polynomial constants and fidelity --------------------------

void criterion_poly() {
    const auto e = fit::fit_exp_poly();
    const auto g = fit::fit_erf_poly();
    const auto m = fit::fit_exp2_mantissa();
    bool frozen = bits_equal(e.a, constants::kIexpA) && bits_equal(e.b, constants::kIexpB) &&
                  bits_equal(e.c, constants::kIexpC) && bits_equal(g.a, constants::kIerfA) &&
                  bits_equal(g.b, constants::kIerfB) && bits_equal(m.c1, constants::kExp2C1) &&
                  bits_equal(m.c2, constants::kExp2C2) && bits_equal(m.c3, constants::kExp2C3);

    std::ifstream f(std::string(MIXEDQ_SOURCE_DIR) + "/data/kernel_constants.txt");
    std::string name, eq;
    double v;
    int matched = 0;
    while (f >> name >> eq >> v) {
        if (name == "iexp_a") matched += bits_equal(v, constants::kIexpA);
        if (name == "iexp_b") matched += bits_equal(v, constants::kIexpB);
        if (name == "iexp_c") matched += bits_equal(v, constants::kIexpC);
        if (name == "ierf_a") matched += bits_equal(v, constants::kIerfA);
        if (name == "ierf_b") matched += bits_equal(v, constants::kIerfB);
        if (name == "exp2_c1") matched += bits_equal(v, constants::kExp2C1);
        if (name == "exp2_c2") matched += bits_equal(v, constants::kExp2C2);
        if (name == "exp2_c3") matched += bits_equal(v, constants::kExp2C3);
    }
    frozen = frozen && matched == 8;

    const int n = 100000;
    Tensor t(Shape{n});
    for (int i = 0; i < n; ++i) t[i] = -10.0 + 10.0 * i / (n - 1);
    const QTensor q = quantize(t, compute_scale(t, 16));
    const Tensor xq = dequantize(q);
    const Tensor out = dequantize(poly_iexp(q).q);
    double worst = 0;
    for (int i = 0; i < n; ++i)
        worst = std::max(worst, std::fabs(out[i] - std::exp(xq[i])) / std::exp(xq[i]));

    report(3, frozen && worst <= 0.02,
           fmt("fit constants frozen bit-exactly (%s); poly_iexp max rel err on [-10,0]: %.3f%% "
               "(limit 2%%)",
               frozen ? "yes" : "NO", 100 * worst));
}

// --- criterion 4: softmax kernel contracts -----------------------------------

void criterion_softmax() {
    int bad_sum = 0, bad_argmax = 0, bad_pow2 = 0, rows_checked = 0, argmax_checked = 0;
    // rows of length 8..64: the desk-scale attention regime this model runs
    for (int trial = 0; trial < 10000; ++trial) {
        const int64_t cols = 8 + static_cast<int64_t>(rng() % 57);
        Tensor t(Shape{1, cols});
        for (int64_t i = 0; i < cols; ++i) t[i] = uniform(-4, 4);
        const Scale s = compute_scale(t, 8);
        const QTensor q = quantize(t, s);

        int64_t arg = 0;
        double top = t[0], second = -1e300;
        for (int64_t j = 1; j < cols; ++j) {
            if (t[j] > top) {
                second = top;
                top = t[j];
                arg = j;
            } else if (t[j] > second) {
                second = t[j];
            }
        }
        const bool gap_ok = top - second > s.value;

        const KernelOutput iv = softmax_ivit(q, -1);
        const KernelOutput ib = softmax_ibert(q, -1);
        const KernelOutput fq = softmax_fqvit(q, -1, 8);

        for (const KernelOutput *o : {&iv, &ib}) {
            double sum = 0;
            for (int64_t j = 0; j < cols; ++j) sum += o->q[j] * o->scale.value;
            if (sum < 0.95 || sum > 1.05) ++bad_sum;
            ++rows_checked;
        }
        if (gap_ok) {
            for (const KernelOutput *o : {&iv, &ib, &fq}) {
                int32_t mx = o->q[0];
                for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, o->q[j]);
                if (o->q[arg] != mx) ++bad_argmax;
                ++argmax_checked;
            }
        }
        for (int64_t j = 0; j < cols; ++j) {
            const int32_t v = fq.q[j];
            if (v != 0 && (v & (v - 1)) != 0) ++bad_pow2;
        }
    }
    report(4, bad_sum == 0 && bad_argmax == 0 && bad_pow2 == 0,
           fmt("softmax on 1e4 random 8-bit rows (len 8-64): %d/%d sums outside [0.95,1.05], "
               "%d/%d argmax violations, %d non-power-of-two LIS outputs",
               bad_sum, rows_checked, bad_argmax, argmax_checked, bad_pow2));
}

// --- criterion 5: appendix ablation orderings ---------------------------------

void criterion_orderings() {
    const double t0 = now_seconds();
    bool gelu_ok = true, ln_ok = true, sm_ok = true;
    double worst_gap = 1e300, worst_band = 0;
    for (uint64_t seed : {1, 2, 3, 4, 5}) {
        const Tensor t = random_uniform_tensor(Shape{1000, 1000}, -4.0, 4.0, seed);
        const double g_ib = bench_sqnr(OpKind::GELU, MethodId::IBERT, t);
        const double g_iv = bench_sqnr(OpKind::GELU, MethodId::IVIT, t);
        worst_gap = std::min(worst_gap, g_ib - g_iv);
        if (g_ib - g_iv < 30.0) gelu_ok = false;

        const double l_fq = bench_sqnr(OpKind::LAYERNORM, MethodId::FQVIT, t);
        const double l_ib = bench_sqnr(OpKind::LAYERNORM, MethodId::IBERT, t);
        const double l_iv = bench_sqnr(OpKind::LAYERNORM, MethodId::IVIT, t);
        if (!(l_fq > l_ib && l_fq > l_iv)) ln_ok = false;

        const double s_iv = bench_sqnr(OpKind::SOFTMAX, MethodId::IVIT, t);
        const double s_ib = bench_sqnr(OpKind::SOFTMAX, MethodId::IBERT, t);
        const double s_fq = bench_sqnr(OpKind::SOFTMAX, MethodId::FQVIT, t);
        const double band = std::max({s_iv, s_ib, s_fq}) - std::min({s_iv, s_ib, s_fq});
        worst_band = std::max(worst_band, band);
        if (band > 1.0) sm_ok = false;
    }
    const double dt = now_seconds() - t0;
    report(5, gelu_ok && ln_ok && sm_ok && dt < 60.0,
           fmt("1000x1000, 5 seeds, %.1f s: GELU gap >= 30 dB %s (min %.1f), LayerNorm fqvit "
               "highest %s, softmax band <= 1 dB %s (max spread %.1f dB; the log-coded LIS output "
               "sits apart from the linear 8-bit outputs by construction)",
               dt, gelu_ok ? "PASS" : "FAIL", worst_gap, ln_ok ? "PASS" : "FAIL",
               sm_ok ? "PASS" : "FAIL", worst_band));
}

// --- criterion 6: ASQNR metric properties -------------------------------------

void criterion_asqnr() {
    auto mk = [](std::vector<double> v) {
        const int64_t n = static_cast<int64_t>(v.size());
        return Tensor(Shape{n}, std::move(v));
    };
    const double hand = asqnr({mk({1.0, 1.0})}, {mk({0.9, 1.1})});
    const bool hand_ok = std::fabs(hand - 40.0) <= 1e-6;

    std::vector<double> x(512), q(512);
    for (size_t i = 0; i < x.size(); ++i) {
        x[i] = uniform(-2, 2);
        q[i] = x[i] + uniform(-0.01, 0.01);
    }
    const double base = asqnr({mk(std::vector<double>(x))}, {mk(std::vector<double>(q))});
    bool scale_ok = true;
    for (double k : {3.0, -0.125, 100.0}) {
        std::vector<double> xs = x, qs = q;
        for (size_t i = 0; i < x.size(); ++i) {
            xs[i] *= k;
            qs[i] *= k;
        }
        if (std::fabs(asqnr({mk(std::move(xs))}, {mk(std::move(qs))}) - base) > 1e-9) scale_ok = false;
    }

    std::vector<double> u(65536);
    for (auto &v : u) v = uniform(-1, 1);
    const Tensor tu = mk(std::move(u));
    double prev = 0, incr_sum = 0;
    int incr_n = 0;
    for (int bits = 4; bits <= 9; ++bits) {
        const double cur = asqnr({tu}, {fake_quantize(tu, bits)});
        if (bits > 4) {
            incr_sum += cur - prev;
            ++incr_n;
        }
        prev = cur;
    }
    const double incr = incr_sum / incr_n;
    const bool incr_ok = incr >= 4.0 && incr <= 8.0;

    report(6, hand_ok && scale_ok && incr_ok,
           fmt("hand example %.9f dB (want 40 +- 1e-6) %s; scale invariance %s; per-bit increment "
               "%.2f dB vs stated [4,8] %s (the formula's energy-ratio dB double the amplitude "
               "convention, making ~12 dB/bit arithmetically forced)",
               hand, hand_ok ? "PASS" : "FAIL", scale_ok ? "PASS" : "FAIL", incr,
               incr_ok ? "PASS" : "FAIL"));
}

// --- criterion 7: selection oracle equivalence --------------------------------

void criterion_selection() {
    const std::vector<LayerId> layers = {{0, OpKind::LAYERNORM},
                                         {2, OpKind::SOFTMAX},
                                         {4, OpKind::LAYERNORM},
                                         {6, OpKind::GELU},
                                         {8, OpKind::LAYERNORM}};
    int mismatches = 0, gelu_violations = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        SensitivityTable t;
        const bool ties = trial % 4 == 0;
        for (const LayerId &l : layers)
            for (MethodId m : methods_for(l.kind)) {
                SensitivityRecord r;
                r.layer = l;
                r.method = m;
                r.asqnr_in_db = std::round(uniform(0, 40));
                r.asqnr_out_db = ties ? std::round(uniform(0, 3)) : uniform(-30, 90);
                r.sqnr_diff_db = r.asqnr_out_db - r.asqnr_in_db;
                t.records.push_back(r);
            }
        for (DecisionRule rule : {DecisionRule::SQNR_DIFF, DecisionRule::SQNR_OUTPUT}) {
            const AssignmentMap got = select_assignment(t, rule, layers);
            for (const LayerId &l : layers) {
                MethodId best = MethodId::IBERT;
                double best_key = 1e300;
                for (MethodId m : methods_for(l.kind))
                    for (const SensitivityRecord &r : t.records) {
                        if (r.layer.index != l.index || r.method != m) continue;
                        const double key =
                            rule == DecisionRule::SQNR_DIFF ? r.sqnr_diff_db : -r.asqnr_out_db;
                        if (key < best_key) {
                            best_key = key;
                            best = m;
                        }
                    }
                if (got.at(l.index) != best) ++mismatches;
                if (l.kind == OpKind::GELU && got.at(l.index) == MethodId::FQVIT) ++gelu_violations;
            }
        }
    }
    report(7, mismatches == 0 && gelu_violations == 0,
           fmt("1000 random tables, both rules: %d mismatches vs exhaustive scan, %d GELU "
               "candidate violations",
               mismatches, gelu_violations));
}

// --- criterion 8: pipeline determinism and completeness -----------------------

RunConfig acceptance_run_config(const std::string &out) {
    RunConfig cfg;
    cfg.model.depth = 2;
    cfg.model.embed_dim = 32;
    cfg.model.heads = 4;
    cfg.model.mlp_ratio = 2.0;
    cfg.model.seq_len = 16;
    cfg.model.input_dim = 32;
    cfg.model.bits = 8;
    cfg.seed = 7;
    cfg.model.seed = 7;
    cfg.batches = 1;
    cfg.batch_size = 4;
    cfg.output_dir = out;
    return cfg;
}

fs::path art_dir() { return fs::temp_directory_path() / "mixedq_acceptance"; }

void criterion_pipeline() {
    const double t0 = now_seconds();
    const fs::path dir = art_dir();
    fs::remove_all(dir);
    const RunConfig c1 = acceptance_run_config((dir / "run1").string());
    const RunConfig c2 = acceptance_run_config((dir / "run2").string());
    const AnalyzeArtifacts a1 = cmd_analyze(c1);
    const AnalyzeArtifacts a2 = cmd_analyze(c2);

    bool identical = true;
    for (const char *f : {"sensitivity.csv", "sensitivity.json", "assignment.json", "histogram.json",
                          "plot_sensitivity.csv", "report.json"})
        identical = identical && slurp(dir / "run1" / f) == slurp(dir / "run2" / f);

    const int d = 2;
    const size_t expect = static_cast<size_t>(3 * d + 2 * d + 3 * (2 * d + 1));
    const bool complete = a1.table.records.size() == expect && a2.table.records.size() == expect;
    const double dt = now_seconds() - t0;
    report(8, identical && complete && dt < 120.0,
           fmt("depth-2 dim-32 8-bit analyze twice: byte-identical reports %s, %zu records "
               "(want %zu), %.1f s",
               identical ? "yes" : "NO", a1.table.records.size(), expect, dt));
}

// --- criterion 9: STE rule -----------------------------------------------------

void criterion_ste() {
    const Scale s = Scale::from_alpha(1.0, 8);
    const int n = 40001;
    Tensor r(Shape{n}), up(Shape{n});
    for (int i = 0; i < n; ++i) {
        r[i] = -2.0 + 4.0 * i / (n - 1); // hits -1 and 1 exactly
        up[i] = 1.0 + i;
    }
    const Tensor g = ste_grad(up, r, s);
    int bad = 0;
    for (int i = 0; i < n; ++i) {
        const bool inside = r[i] >= -1.0 && r[i] <= 1.0;
        const double want = inside ? up[i] : 0.0;
        if (g[i] != want) ++bad;
    }
    report(9, bad == 0, fmt("STE exhaustive grid: %d/%d mismatches (closed interval at +-alpha)", bad, n));
}

// --- criterion 10: search-space arithmetic -------------------------------------

void criterion_searchspace() {
    unsigned long long p = 1;
    for (int i = 0; i < 37; ++i) p *= 3ull;
    unsigned __int128 v = static_cast<unsigned __int128>(p) << 12;
    std::string oracle;
    while (v > 0) {
        oracle.insert(oracle.begin(), static_cast<char>('0' + static_cast<int>(v % 10)));
        v /= 10;
    }
    const std::string got = search_space_size({12, 12, 25}).to_string();
    const uint64_t evals = evaluation_count({12, 12, 25});

    // the report from criterion 8 documents the swapped-count discrepancy
    const std::string report_json = slurp(art_dir() / "run1" / "report.json");
    const bool documented = report_json.find("9.47e18") != std::string::npos &&
                            report_json.find("135") != std::string::npos;

    report(10, got == oracle && evals == 135 && documented,
           fmt("exact 3^37*2^12 = %s (oracle match %s), evaluations 135, discrepancy note in "
               "report.json %s",
               got.c_str(), got == oracle ? "yes" : "NO", documented ? "present" : "MISSING"));
}

// --- criterion 11: end-to-end soft check ---------------------------------------

void criterion_mixed_soft() {
    const fs::path dir = art_dir();
    const RunConfig cfg = acceptance_run_config((dir / "eval").string());
    const EvalMetrics m = cmd_eval(cfg, (dir / "run1" / "assignment.json").string());
    const double min_base = std::min(
        {m.baseline_logit_sqnr_db[0], m.baseline_logit_sqnr_db[1], m.baseline_logit_sqnr_db[2]});
    report(11, m.mixed_logit_sqnr_db >= min_base - 1.0,
           fmt("mixed logit SQNR %.2f dB vs baselines min %.2f dB - 1 dB threshold (soft check)",
               m.mixed_logit_sqnr_db, min_base),
           /*soft=*/true);
}

} // namespace

int main() {
    std::printf("mixedq acceptance suite\n");
    criterion_isqrt();
    criterion_shift_exp();
    criterion_poly();
    criterion_softmax();
    criterion_orderings();
    criterion_asqnr();
    criterion_selection();
    criterion_pipeline();
    criterion_ste();
    criterion_searchspace();
    criterion_mixed_soft();
    if (failures > 0) std::printf("%d criterion(s) failed\n", failures);
    return failures == 0 ? 0 : 1;
}
