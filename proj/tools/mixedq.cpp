// mixedq: integer non-linearity toolkit for transformer quantization
// analysis. Subcommands: analyze, select, eval, bench, kernels, searchspace.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "mixedq/pipeline.hpp"

namespace {

using namespace mixedq;

int env_threads() {
    const char *v = std::getenv("MIXEDQ_THREADS");
    if (!v) return 1;
    const int n = std::atoi(v);
    return n < 1 ? 1 : (n > 64 ? 64 : n);
}

void add_run_options(CLI::App *app, RunConfig &cfg, std::string &rule_name, std::string &config_path) {
    app->add_option("--config", config_path, "config file (sections of key = value)");
    app->add_option("--depth", cfg.model.depth, "encoder blocks");
    app->add_option("--embed-dim", cfg.model.embed_dim, "embedding width");
    app->add_option("--heads", cfg.model.heads, "attention heads");
    app->add_option("--mlp-ratio", cfg.model.mlp_ratio, "MLP hidden ratio");
    app->add_option("--seq-len", cfg.model.seq_len, "tokens per sample");
    app->add_option("--input-dim", cfg.model.input_dim, "input feature width");
    app->add_option("--bits", cfg.model.bits, "quantization bit width (6 or 8)");
    app->add_option("--seed", cfg.seed, "run seed (weights and data)");
    app->add_option("--rule", rule_name, "decision rule: sqnr-diff | sqnr-output");
    app->add_option("--out", cfg.output_dir, "output directory");
    app->add_option("--distribution", cfg.distribution, "synthetic data: gaussian | uniform");
    app->add_option("--batches", cfg.batches, "number of batches");
    app->add_option("--batch-size", cfg.batch_size, "samples per batch");
    app->add_option("--data", cfg.data_files, "raw tensor files instead of synthetic data");
}

std::string trim(const std::string &s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// key = value lines, optional [section] headers, # or ; comments. Flags that
// were passed explicitly keep precedence over file values.
void apply_config_file(const std::string &path, CLI::App *cmd, RunConfig &cfg, std::string &rule_name) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config file: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';' || t[0] == '[') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw InvalidInputError("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(t.substr(0, eq));
        for (char &c : key)
            if (c == '_') c = '-';
        kv[key] = trim(t.substr(eq + 1));
    }
    auto take = [&](const char *flag, const char *key, auto &target) {
        const auto it = kv.find(key);
        if (it == kv.end() || cmd->count(flag) > 0) {
            if (it != kv.end()) kv.erase(it);
            return;
        }
        std::istringstream ss(it->second);
        ss >> target;
        if (ss.fail()) throw InvalidInputError(std::string("config: bad value for ") + key);
        kv.erase(it);
    };
    take("--depth", "depth", cfg.model.depth);
    take("--embed-dim", "embed-dim", cfg.model.embed_dim);
    take("--heads", "heads", cfg.model.heads);
    take("--mlp-ratio", "mlp-ratio", cfg.model.mlp_ratio);
    take("--seq-len", "seq-len", cfg.model.seq_len);
    take("--input-dim", "input-dim", cfg.model.input_dim);
    take("--bits", "bits", cfg.model.bits);
    take("--seed", "seed", cfg.seed);
    take("--rule", "rule", rule_name);
    take("--out", "out", cfg.output_dir);
    take("--distribution", "distribution", cfg.distribution);
    take("--batches", "batches", cfg.batches);
    take("--batch-size", "batch-size", cfg.batch_size);
    if (const auto it = kv.find("data"); it != kv.end()) {
        if (cmd->count("--data") == 0) {
            cfg.data_files.clear();
            std::istringstream ss(it->second);
            std::string item;
            while (std::getline(ss, item, ',')) cfg.data_files.push_back(trim(item));
        }
        kv.erase(it);
    }
    if (!kv.empty()) throw InvalidInputError("config: unknown key '" + kv.begin()->first + "'");
}

void finish_config(CLI::App *cmd, RunConfig &cfg, std::string &rule_name, const std::string &config_path) {
    if (!config_path.empty()) apply_config_file(config_path, cmd, cfg, rule_name);
    cfg.rule = rule_from_string(rule_name);
    cfg.model.seed = cfg.seed;
    cfg.threads = env_threads();
    cfg.validate();
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"mixedq: layer-wise integer non-linearity analysis toolkit"};
    app.require_subcommand(1);

    RunConfig cfg;
    std::string rule_name = "sqnr-diff";
    std::string config_path;

    auto *analyze_cmd = app.add_subcommand("analyze", "run the sensitivity pipeline and select methods");
    add_run_options(analyze_cmd, cfg, rule_name, config_path);

    auto *select_cmd = app.add_subcommand("select", "re-run selection on an existing sensitivity.csv");
    std::string select_csv, select_out = "assignment.json", select_rule = "sqnr-diff";
    select_cmd->add_option("csv", select_csv, "sensitivity.csv path")->required();
    select_cmd->add_option("--rule", select_rule, "decision rule: sqnr-diff | sqnr-output");
    select_cmd->add_option("--out", select_out, "assignment output path");

    auto *eval_cmd = app.add_subcommand("eval", "evaluate a stored assignment against baselines");
    std::string eval_assignment;
    add_run_options(eval_cmd, cfg, rule_name, config_path);
    eval_cmd->add_option("assignment", eval_assignment, "assignment.json path")->required();

    auto *bench_cmd = app.add_subcommand("bench", "per-kernel SQNR and latency table");
    BenchSpec bench_spec;
    std::string bench_out = "out";
    std::vector<std::string> bench_sizes;
    bench_cmd->add_option("--sizes", bench_sizes, "sizes as RxC (default 1000x1000 100x100 10x10)");
    bench_cmd->add_option("--lo", bench_spec.lo, "value range low");
    bench_cmd->add_option("--hi", bench_spec.hi, "value range high");
    bench_cmd->add_option("--reps", bench_spec.reps, "timed repetitions");
    bench_cmd->add_option("--seed", bench_spec.seed, "input seed");
    bench_cmd->add_option("--out", bench_out, "output directory");

    auto *kernels_cmd = app.add_subcommand("kernels", "run one kernel and summarize error");
    std::string kname, kin, kout;
    std::vector<double> kgrid;
    kernels_cmd->add_option("name", kname, "kernel name")->required();
    kernels_cmd->add_option("--grid", kgrid, "lo hi [points]")->expected(2, 3);
    kernels_cmd->add_option("--input", kin, "input tensor file");
    kernels_cmd->add_option("--output", kout, "write kernel output tensor here");

    auto *ss_cmd = app.add_subcommand("searchspace", "exact search-space size and evaluation count");
    int64_t ss_s = 0, ss_g = 0, ss_l = 0;
    ss_cmd->add_option("softmax", ss_s, "softmax layer count")->required();
    ss_cmd->add_option("gelu", ss_g, "gelu layer count")->required();
    ss_cmd->add_option("layernorm", ss_l, "layernorm layer count")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return 1; // usage errors are exit code 1 by contract
    }

    try {
        if (*analyze_cmd) {
            finish_config(analyze_cmd, cfg, rule_name, config_path);
            const AnalyzeArtifacts art = cmd_analyze(cfg);
            std::printf("analyze: %zu records, reports in %s\n", art.table.records.size(),
                        cfg.output_dir.c_str());
            for (const LayerId &l : art.layers)
                std::printf("  %-14s -> %s\n", l.render().c_str(), to_string(art.assignment.at(l.index)));
        } else if (*select_cmd) {
            const AssignmentMap a = cmd_select(select_csv, rule_from_string(select_rule), select_out);
            std::printf("select: %zu layers -> %s\n", a.size(), select_out.c_str());
        } else if (*eval_cmd) {
            finish_config(eval_cmd, cfg, rule_name, config_path);
            const EvalMetrics mt = cmd_eval(cfg, eval_assignment);
            std::printf("eval: mixed logit SQNR %.2f dB (baselines ivit %.2f, ibert %.2f, fqvit %.2f)\n",
                        mt.mixed_logit_sqnr_db, mt.baseline_logit_sqnr_db[0],
                        mt.baseline_logit_sqnr_db[1], mt.baseline_logit_sqnr_db[2]);
            if (!mt.pass)
                std::printf("warn: mixed assignment fell more than 1 dB below the weakest baseline\n");
        } else if (*bench_cmd) {
            if (!bench_sizes.empty()) {
                bench_spec.sizes.clear();
                for (const std::string &s : bench_sizes) {
                    const auto x = s.find('x');
                    if (x == std::string::npos) throw InvalidInputError("bench size must look like 64x64");
                    bench_spec.sizes.emplace_back(std::stoll(s.substr(0, x)), std::stoll(s.substr(x + 1)));
                }
            }
            const auto rows = cmd_bench(bench_spec, bench_out);
            std::printf("%s", bench_to_table(rows).c_str());
        } else if (*kernels_cmd) {
            const bool grid = !kgrid.empty();
            if (!grid && kin.empty())
                throw InvalidInputError("kernels: provide --grid lo hi [n] or --input FILE");
            const double lo = grid ? kgrid[0] : 0.0;
            const double hi = grid ? kgrid[1] : 0.0;
            const int64_t n = kgrid.size() > 2 ? static_cast<int64_t>(kgrid[2]) : 100000;
            const KernelRunSummary s = cmd_kernels(kname, grid, lo, hi, n, kin, kout);
            if (kname == "isqrt") {
                if (s.exact)
                    std::printf("isqrt: exact for all %lld inputs\n", static_cast<long long>(s.count));
                else
                    std::printf("isqrt: MISMATCH, max abs deviation %.0f\n", s.max_abs_err);
            } else {
                std::printf("%s: n=%lld max_abs_err=%.8g mean_abs_err=%.8g max_rel_err=%.6f%%\n",
                            kname.c_str(), static_cast<long long>(s.count), s.max_abs_err,
                            s.mean_abs_err, 100.0 * s.max_rel_err);
            }
        } else if (*ss_cmd) {
            if (ss_s < 0 || ss_g < 0 || ss_l < 0)
                throw InvalidInputError("searchspace: counts must be nonnegative");
            const SearchSpaceResult r = cmd_searchspace(static_cast<uint64_t>(ss_s),
                                                        static_cast<uint64_t>(ss_g),
                                                        static_cast<uint64_t>(ss_l));
            std::printf("search_space = %s\n", r.exact.c_str());
            std::printf("evaluations  = %llu\n", static_cast<unsigned long long>(r.evaluations));
        }
    } catch (const IoError &e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return 2;
    } catch (const std::exception &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
