#pragma once

#include <string>
#include <vector>

#include "mixedq/bench.hpp"
#include "mixedq/sensitivity.hpp"

namespace mixedq {

inline constexpr const char *kToolVersion = "0.1.0";

// Everything a pipeline run needs; filled from flags and the config file.
struct RunConfig {
    ModelConfig model;
    DecisionRule rule = DecisionRule::SQNR_DIFF;
    std::string output_dir = "out";
    uint64_t seed = 1;
    std::string distribution = "gaussian"; // or "uniform"
    int batches = 1;
    int batch_size = 4;
    std::vector<std::string> data_files; // raw tensor files override synthesis
    int threads = 1;

    void validate() const;
};

// Synthetic token-embedding batch (or tensors loaded from data_files).
std::vector<Tensor> make_analysis_batch(const RunConfig &cfg);

// FNV-1a over the canonical config rendering; stable across runs.
std::string config_hash(const RunConfig &cfg);

struct AnalyzeArtifacts {
    SensitivityTable table;
    AssignmentMap assignment;
    std::vector<LayerId> layers;
};

// Full Algorithm-1 pipeline: three uniform runs, table, selection, reports.
// Writes sensitivity.csv/.json, assignment.json, histogram.json,
// plot_sensitivity.csv and report.json into output_dir.
AnalyzeArtifacts cmd_analyze(const RunConfig &cfg);

// Re-run selection on an existing sensitivity.csv.
AssignmentMap cmd_select(const std::string &sensitivity_csv, DecisionRule rule,
                         const std::string &out_path);

struct EvalMetrics {
    double mixed_logit_sqnr_db = 0.0;
    double baseline_logit_sqnr_db[3] = {0, 0, 0}; // ivit, ibert, fqvit
    bool pass = true;                             // soft flag, warn on violation
};

// Fresh quantized run under a stored assignment, compared with the three
// uniform baselines. Writes metrics.json and plot_eval.csv.
EvalMetrics cmd_eval(const RunConfig &cfg, const std::string &assignment_path);

std::vector<BenchRow> cmd_bench(const BenchSpec &spec, const std::string &output_dir);

struct KernelRunSummary {
    double max_abs_err = 0.0;
    double mean_abs_err = 0.0;
    double max_rel_err = 0.0;
    int64_t count = 0;
    bool exact = false; // isqrt grid sweeps
};

// Run one kernel over a grid or a tensor file and summarize the error
// against the float non-linearity. Grid inputs are quantized at 16 bits so
// the summary isolates approximation error.
KernelRunSummary cmd_kernels(const std::string &kernel, bool grid, double lo, double hi, int64_t n,
                             const std::string &input_file, const std::string &output_file);

struct SearchSpaceResult {
    std::string exact;
    uint64_t evaluations;
};

SearchSpaceResult cmd_searchspace(uint64_t softmax, uint64_t gelu, uint64_t layernorm);

} // namespace mixedq
