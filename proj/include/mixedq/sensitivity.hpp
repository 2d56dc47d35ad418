#pragma once

#include <string>
#include <vector>

#include "mixedq/bigint.hpp"
#include "mixedq/model.hpp"

namespace mixedq {

// Quantization sensitivity of one (layer, method) pair: batch-averaged SQNR
// of the layer's input and output activations, and their difference.
struct SensitivityRecord {
    LayerId layer;
    MethodId method;
    double asqnr_in_db = 0.0;
    double asqnr_out_db = 0.0;
    double sqnr_diff_db = 0.0;
};

struct SensitivityTable {
    std::vector<SensitivityRecord> records;

    bool complete(const std::vector<LayerId> &layers) const;
};

enum class DecisionRule { SQNR_DIFF, SQNR_OUTPUT };

const char *to_string(DecisionRule r);
DecisionRule rule_from_string(const std::string &s);

// Zero-noise comparisons are capped here so diffs stay finite while ranking
// above any physical value.
inline constexpr double kSqnrSentinelDb = 300.0;

// 20*log10( (1/N) * sum_i E[x_i^2]/E[(x_i-q_i)^2] ). Exact matches return
// +infinity; cap with sqnr_capped before arithmetic.
double asqnr(const std::vector<Tensor> &x_batch, const std::vector<Tensor> &q_batch);

double sqnr_capped(double v);

// beta - gamma of the selection metric.
double sqnr_diff(double asqnr_out, double asqnr_in);

// Three uniform quantized runs against the full-precision reference,
// one record per valid (layer, method) pair.
SensitivityTable analyze(Model &m, const std::vector<Tensor> &data, int max_threads = 1);

// Per-layer winner under the chosen rule. Ties break in the fixed order
// IBERT < FQVIT < IVIT; GELU candidates are restricted to {IBERT, IVIT}.
AssignmentMap select_assignment(const SensitivityTable &t, DecisionRule rule,
                                const std::vector<LayerId> &layers);

struct OpCounts {
    uint64_t softmax = 0;
    uint64_t gelu = 0;
    uint64_t layernorm = 0;
};

// Exact 3^softmax * 3^layernorm * 2^gelu.
BigUint search_space_size(const OpCounts &counts);

// Independence-assumption cost: 3*softmax + 2*gelu + 3*layernorm.
uint64_t evaluation_count(const OpCounts &counts);

// CSV/JSON serialization of tables and assignments.
std::string table_to_csv(const SensitivityTable &t);
SensitivityTable table_from_csv(const std::string &csv);
std::string table_to_json(const SensitivityTable &t);
std::string assignment_to_json(const AssignmentMap &a, const std::vector<LayerId> &layers);
AssignmentMap assignment_from_json(const std::string &json_text, const std::vector<LayerId> &layers);

} // namespace mixedq
