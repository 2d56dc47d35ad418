#include "mixedq/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mixedq/quant.hpp"
#include "mixedq/tensor_io.hpp"

namespace mixedq {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void write_file(const fs::path &path, const std::string &content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    os << content;
    if (!os) throw IoError("failed writing: " + path.string());
}

std::string read_file(const fs::path &path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void ensure_dir(const std::string &dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
}

std::string canonical_config(const RunConfig &c) {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "depth=%d;embed_dim=%d;heads=%d;mlp_ratio=%.17g;seq_len=%d;input_dim=%d;bits=%d;"
                  "model_seed=%llu;rule=%s;seed=%llu;distribution=%s;batches=%d;batch_size=%d",
                  c.model.depth, c.model.embed_dim, c.model.heads, c.model.mlp_ratio, c.model.seq_len,
                  c.model.input_dim, c.model.bits, static_cast<unsigned long long>(c.model.seed),
                  to_string(c.rule), static_cast<unsigned long long>(c.seed), c.distribution.c_str(),
                  c.batches, c.batch_size);
    std::string s(buf);
    for (const auto &f : c.data_files) s += ";data=" + f;
    return s;
}

json config_json(const RunConfig &c) {
    return json{{"depth", c.model.depth},
                {"embed_dim", c.model.embed_dim},
                {"heads", c.model.heads},
                {"mlp_ratio", c.model.mlp_ratio},
                {"seq_len", c.model.seq_len},
                {"input_dim", c.model.input_dim},
                {"bits", c.model.bits},
                {"model_seed", c.model.seed},
                {"rule", to_string(c.rule)},
                {"seed", c.seed},
                {"distribution", c.distribution},
                {"batches", c.batches},
                {"batch_size", c.batch_size},
                {"data_files", c.data_files}};
}

json histogram_json(const AssignmentMap &a, const std::vector<LayerId> &layers) {
    json h = json::object();
    for (OpKind k : {OpKind::SOFTMAX, OpKind::GELU, OpKind::LAYERNORM}) {
        json row = json::object();
        for (MethodId m : methods_for(k)) {
            int count = 0;
            for (const LayerId &l : layers)
                if (l.kind == k && a.at(l.index) == m) ++count;
            row[to_string(m)] = count;
        }
        h[to_string(k)] = row;
    }
    return h;
}

// Fig. 2-shaped series: per layer, the output sensitivity and diff of each
// candidate method.
std::string plot_series_csv(const SensitivityTable &t, const std::vector<LayerId> &layers) {
    std::ostringstream os;
    os << "layer_id,op_kind,method,asqnr_in_db,asqnr_out_db,sqnr_diff_db\n";
    char buf[64];
    for (const LayerId &l : layers)
        for (const SensitivityRecord &r : t.records) {
            if (r.layer.index != l.index) continue;
            os << r.layer.render() << "," << to_string(l.kind) << "," << to_string(r.method);
            std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%.6f\n", r.asqnr_in_db, r.asqnr_out_db,
                          r.sqnr_diff_db);
            os << buf;
        }
    return os.str();
}

std::vector<Tensor> load_data_files(const RunConfig &cfg) {
    std::vector<Tensor> out;
    for (const std::string &f : cfg.data_files) out.push_back(load_tensor(f));
    return out;
}

} // namespace

void RunConfig::validate() const {
    model.validate();
    if (batches < 1) throw InvalidInputError("config: batches must be >= 1");
    if (batch_size < 1) throw InvalidInputError("config: batch_size must be >= 1");
    if (distribution != "gaussian" && distribution != "uniform")
        throw InvalidInputError("config: distribution must be gaussian or uniform");
    if (threads < 1) throw InvalidInputError("config: threads must be >= 1");
}

std::vector<Tensor> make_analysis_batch(const RunConfig &cfg) {
    if (!cfg.data_files.empty()) return load_data_files(cfg);
    const int64_t n = static_cast<int64_t>(cfg.batches) * cfg.batch_size;
    std::mt19937_64 g(cfg.seed ^ 0x9e3779b97f4a7c15ull);
    std::vector<Tensor> out;
    out.reserve(static_cast<size_t>(n));
    for (int64_t s = 0; s < n; ++s) {
        Tensor t(Shape{cfg.model.seq_len, cfg.model.input_dim});
        for (int64_t i = 0; i < t.numel(); ++i) {
            const double u1 = static_cast<double>(g() >> 11) * 0x1.0p-53;
            const double u2 = static_cast<double>(g() >> 11) * 0x1.0p-53;
            if (cfg.distribution == "uniform") {
                t[i] = 2.0 * u1 - 1.0;
            } else {
                const double z = std::sqrt(-2.0 * std::log(u1 <= 0 ? 0x1.0p-53 : u1)) *
                                 std::cos(2.0 * 3.14159265358979323846 * u2);
                t[i] = z;
            }
        }
        out.push_back(std::move(t));
    }
    return out;
}

std::string config_hash(const RunConfig &cfg) {
    const std::string s = canonical_config(cfg);
    uint64_t h = 0xcbf29ce484222325ull;
    for (const char ch : s) {
        h ^= static_cast<unsigned char>(ch);
        h *= 0x100000001b3ull;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

AnalyzeArtifacts cmd_analyze(const RunConfig &cfg) {
    cfg.validate();
    ensure_dir(cfg.output_dir);
    Model m = build_model(cfg.model);
    const std::vector<Tensor> data = make_analysis_batch(cfg);

    AnalyzeArtifacts art;
    art.layers = m.nonlinear_layers();
    art.table = analyze(m, data, cfg.threads);
    art.assignment = select_assignment(art.table, cfg.rule, art.layers);

    const fs::path out(cfg.output_dir);
    write_file(out / "sensitivity.csv", table_to_csv(art.table));
    write_file(out / "sensitivity.json", table_to_json(art.table));
    write_file(out / "assignment.json", assignment_to_json(art.assignment, art.layers));
    write_file(out / "plot_sensitivity.csv", plot_series_csv(art.table, art.layers));

    OpCounts counts;
    for (const LayerId &l : art.layers) {
        if (l.kind == OpKind::SOFTMAX) ++counts.softmax;
        if (l.kind == OpKind::GELU) ++counts.gelu;
        if (l.kind == OpKind::LAYERNORM) ++counts.layernorm;
    }
    const json hist = histogram_json(art.assignment, art.layers);
    write_file(out / "histogram.json", hist.dump(2) + "\n");

    // full-scale reference figures for a ViT-base-like (12, 12, 25) layout
    const OpCounts vit{12, 12, 25};
    json report;
    report["tool"] = {{"name", "mixedq"}, {"version", kToolVersion}};
    report["provenance"] = {{"seed", cfg.seed},
                            {"config", config_json(cfg)},
                            {"config_hash", config_hash(cfg)}};
    report["layer_counts"] = {{"softmax", counts.softmax},
                              {"gelu", counts.gelu},
                              {"layernorm", counts.layernorm}};
    report["search_space"] = {
        {"exact", search_space_size(counts).to_string()},
        {"evaluation_count", evaluation_count(counts)},
        {"vit_base_exact", search_space_size(vit).to_string()},
        {"vit_base_evaluation_count", evaluation_count(vit)},
        {"notes",
         json::array(
             {"exact count for (softmax=12, gelu=12, layernorm=25) is 3^37 * 2^12 = "
              "1844362878529525198848 (~1.84e21); the often-quoted 9.47e18 equals 3^24 * 2^25, i.e. "
              "the same formula with the GELU and LayerNorm counts swapped",
              "under the per-layer independence assumption the evaluation count for (12, 12, 25) is "
              "3*12 + 2*12 + 3*25 = 135; the often-quoted 122 likewise corresponds to the swapped "
              "counts (3*12 + 3*12 + 2*25)"})}};
    report["rule"] = to_string(cfg.rule);
    report["histogram"] = hist;
    json assign = json::object();
    for (const LayerId &l : art.layers) assign[l.render()] = to_string(art.assignment.at(l.index));
    report["assignment"] = assign;
    write_file(out / "report.json", report.dump(2) + "\n");
    return art;
}

AssignmentMap cmd_select(const std::string &sensitivity_csv, DecisionRule rule,
                         const std::string &out_path) {
    const SensitivityTable t = table_from_csv(read_file(sensitivity_csv));
    // reconstruct the layer list from the table itself
    std::vector<LayerId> layers;
    for (const SensitivityRecord &r : t.records)
        if (std::none_of(layers.begin(), layers.end(),
                         [&](const LayerId &l) { return l.index == r.layer.index; }))
            layers.push_back(r.layer);
    std::sort(layers.begin(), layers.end());
    const AssignmentMap a = select_assignment(t, rule, layers);
    if (!out_path.empty()) write_file(out_path, assignment_to_json(a, layers));
    return a;
}

EvalMetrics cmd_eval(const RunConfig &cfg, const std::string &assignment_path) {
    cfg.validate();
    ensure_dir(cfg.output_dir);
    Model m = build_model(cfg.model);
    const std::vector<Tensor> data = make_analysis_batch(cfg);
    m.calibrate(data);
    const std::vector<LayerId> layers = m.nonlinear_layers();
    const AssignmentMap mixed = assignment_from_json(read_file(assignment_path), layers);

    const ForwardResult fp = m.forward_fp(data);
    const ForwardResult mixed_run = m.forward_quant(data, mixed);
    const std::vector<MethodId> base_methods = {MethodId::IVIT, MethodId::IBERT, MethodId::FQVIT};
    std::vector<ForwardResult> baselines;
    for (MethodId b : base_methods)
        baselines.push_back(m.forward_quant(data, uniform_assignment(layers, b)));

    EvalMetrics metrics;
    metrics.mixed_logit_sqnr_db = sqnr_capped(asqnr(fp.logits, mixed_run.logits));
    double min_base = kSqnrSentinelDb;
    for (size_t i = 0; i < baselines.size(); ++i) {
        metrics.baseline_logit_sqnr_db[i] = sqnr_capped(asqnr(fp.logits, baselines[i].logits));
        min_base = std::min(min_base, metrics.baseline_logit_sqnr_db[i]);
    }
    metrics.pass = metrics.mixed_logit_sqnr_db >= min_base - 1.0;

    // Fig. 4-shaped per-layer output sensitivity series
    std::ostringstream plot;
    plot << "layer_id,op_kind,asqnr_out_mixed,asqnr_out_ivit,asqnr_out_ibert,asqnr_out_fqvit\n";
    char buf[64];
    json per_layer = json::array();
    for (const LayerId &l : layers) {
        const LayerTrace &ref = fp.trace.layers.at(l.index);
        const double mx = sqnr_capped(asqnr(ref.outputs, mixed_run.trace.layers.at(l.index).outputs));
        plot << l.render() << "," << to_string(l.kind);
        std::snprintf(buf, sizeof buf, ",%.6f", mx);
        plot << buf;
        json row = {{"layer_id", l.render()}, {"asqnr_out_mixed", mx}};
        for (size_t i = 0; i < baselines.size(); ++i) {
            // GELU layers in the uniform FQ-ViT run use the base-code kernel;
            // the series still reports what that model actually produced.
            const double v =
                sqnr_capped(asqnr(ref.outputs, baselines[i].trace.layers.at(l.index).outputs));
            std::snprintf(buf, sizeof buf, ",%.6f", v);
            plot << buf;
            row[std::string("asqnr_out_") + to_string(base_methods[i])] = v;
        }
        plot << "\n";
        per_layer.push_back(row);
    }
    const fs::path out(cfg.output_dir);
    write_file(out / "plot_eval.csv", plot.str());

    json mj;
    mj["provenance"] = {{"seed", cfg.seed},
                        {"config", config_json(cfg)},
                        {"config_hash", config_hash(cfg)},
                        {"tool_version", kToolVersion}};
    mj["logit_sqnr_db"] = {{"mixed", metrics.mixed_logit_sqnr_db},
                           {"ivit", metrics.baseline_logit_sqnr_db[0]},
                           {"ibert", metrics.baseline_logit_sqnr_db[1]},
                           {"fqvit", metrics.baseline_logit_sqnr_db[2]}};
    mj["threshold_db"] = min_base - 1.0;
    mj["flag"] = metrics.pass ? "pass" : "warn";
    mj["per_layer"] = per_layer;
    write_file(out / "metrics.json", mj.dump(2) + "\n");
    return metrics;
}

std::vector<BenchRow> cmd_bench(const BenchSpec &spec, const std::string &output_dir) {
    ensure_dir(output_dir);
    const std::vector<BenchRow> rows = run_bench(spec);
    write_file(fs::path(output_dir) / "bench.csv", bench_to_csv(rows));
    write_file(fs::path(output_dir) / "bench.txt", bench_to_table(rows));
    return rows;
}

namespace {

double kernel_float_reference(const std::string &kernel, double x) {
    if (kernel == "shift_exp" || kernel == "poly_iexp") return std::exp(x);
    if (kernel == "gelu_ibert" || kernel == "gelu_ivit")
        return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
    throw InvalidInputError("kernels: no pointwise reference for " + kernel);
}

} // namespace

KernelRunSummary cmd_kernels(const std::string &kernel, bool grid, double lo, double hi, int64_t n,
                             const std::string &input_file, const std::string &output_file) {
    KernelRunSummary sum;

    if (kernel == "isqrt") {
        if (!grid) throw InvalidInputError("kernels isqrt requires --grid lo hi");
        const int64_t a = static_cast<int64_t>(lo), b = static_cast<int64_t>(hi);
        if (a < 0 || b < a) throw InvalidInputError("kernels isqrt: bad grid range");
        sum.exact = true;
        for (int64_t v = a; v <= b; ++v) {
            const uint64_t got = isqrt_newton(static_cast<uint64_t>(v));
            const uint64_t want = static_cast<uint64_t>(std::sqrt(static_cast<double>(v)));
            // float sqrt can be off by one at the edges; correct exactly
            uint64_t w = want;
            while (w * w > static_cast<uint64_t>(v)) --w;
            while ((w + 1) * (w + 1) <= static_cast<uint64_t>(v)) ++w;
            if (got != w) {
                sum.exact = false;
                sum.max_abs_err = std::max(
                    sum.max_abs_err, std::fabs(static_cast<double>(got) - static_cast<double>(w)));
            }
            ++sum.count;
        }
        return sum;
    }

    Tensor input;
    if (grid) {
        if (n < 2) throw InvalidInputError("kernels: grid needs at least 2 points");
        input = Tensor(Shape{n});
        for (int64_t i = 0; i < n; ++i)
            input[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    } else {
        input = load_tensor(input_file);
    }
    // grid runs isolate approximation error with a fine 16-bit input grid
    const int bits = grid ? 16 : 8;
    const QTensor q = quantize(input, compute_scale(input, bits));
    const Tensor xq = dequantize(q);

    KernelOutput out;
    Tensor ref;
    const int64_t d = input.shape().back();
    AffineParams p{Tensor::scalar_like(Shape{d}, 1.0), Tensor(Shape{d})};
    if (kernel == "shift_exp") {
        out = shift_exp(q);
        ref = Tensor(xq.shape());
        for (int64_t i = 0; i < xq.numel(); ++i) ref[i] = std::exp(xq[i]);
    } else if (kernel == "poly_iexp") {
        out = poly_iexp(q);
        ref = Tensor(xq.shape());
        for (int64_t i = 0; i < xq.numel(); ++i) ref[i] = std::exp(xq[i]);
    } else if (kernel == "gelu_ibert" || kernel == "gelu_ivit") {
        out = kernel == "gelu_ibert" ? gelu_ibert(q) : gelu_ivit(q);
        ref = Tensor(xq.shape());
        for (int64_t i = 0; i < xq.numel(); ++i) ref[i] = kernel_float_reference(kernel, xq[i]);
    } else if (kernel == "softmax_ivit" || kernel == "softmax_ibert" || kernel == "softmax_fqvit") {
        if (kernel == "softmax_ivit") out = softmax_ivit(q, -1);
        if (kernel == "softmax_ibert") out = softmax_ibert(q, -1);
        if (kernel == "softmax_fqvit") out = softmax_fqvit(q, -1, 8);
        // float softmax reference over the last axis
        ref = Tensor(xq.shape());
        const int64_t rows = xq.numel() / d;
        for (int64_t r = 0; r < rows; ++r) {
            double mx = xq[r * d];
            for (int64_t j = 1; j < d; ++j) mx = std::max(mx, xq[r * d + j]);
            double s = 0;
            for (int64_t j = 0; j < d; ++j) {
                ref[r * d + j] = std::exp(xq[r * d + j] - mx);
                s += ref[r * d + j];
            }
            for (int64_t j = 0; j < d; ++j) ref[r * d + j] /= s;
        }
    } else if (kernel == "layernorm_ibert" || kernel == "layernorm_ivit" || kernel == "layernorm_fqvit") {
        if (kernel == "layernorm_ibert") out = layernorm_ibert(q, p);
        if (kernel == "layernorm_ivit") out = layernorm_ivit(q, p);
        if (kernel == "layernorm_fqvit") out = layernorm_fqvit(q, p, calibrate_layernorm_fqvit({xq}, p, bits));
        ref = layernorm_reference(xq, p);
    } else {
        throw InvalidInputError(
            "unknown kernel '" + kernel +
            "'; valid: isqrt shift_exp poly_iexp softmax_ivit softmax_ibert softmax_fqvit "
            "gelu_ibert gelu_ivit layernorm_ibert layernorm_ivit layernorm_fqvit");
    }

    const Tensor got = dequantize(out.q);
    sum.count = got.numel();
    double abs_sum = 0;
    for (int64_t i = 0; i < got.numel(); ++i) {
        const double e = std::fabs(got[i] - ref[i]);
        abs_sum += e;
        sum.max_abs_err = std::max(sum.max_abs_err, e);
        if (ref[i] != 0.0) sum.max_rel_err = std::max(sum.max_rel_err, e / std::fabs(ref[i]));
    }
    sum.mean_abs_err = abs_sum / static_cast<double>(got.numel());
    if (!output_file.empty()) save_tensor(output_file, got);
    return sum;
}

SearchSpaceResult cmd_searchspace(uint64_t softmax, uint64_t gelu, uint64_t layernorm) {
    const OpCounts counts{softmax, gelu, layernorm};
    SearchSpaceResult r;
    r.exact = search_space_size(counts).to_string();
    r.evaluations = evaluation_count(counts);
    return r;
}

} // namespace mixedq
