#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mixedq/kernels.hpp"
#include "mixedq/tensor.hpp"

namespace mixedq {

// Desk-scale stand-in for the ViT/DeiT configurations under analysis.
struct ModelConfig {
    int depth = 2;
    int embed_dim = 32;
    int heads = 4;
    double mlp_ratio = 4.0;
    int seq_len = 16;
    int input_dim = 32;
    int bits = 8;
    uint64_t seed = 1;

    void validate() const;
};

// Identity of a quantizable non-linear layer. The index is the global
// sequential position among quantizable modules (linear and non-linear) in
// forward order, so labels skip values the way the figure labels do
// ("2.softmax" is the first attention softmax).
struct LayerId {
    int index = 0;
    OpKind kind = OpKind::LAYERNORM;

    std::string render() const { return std::to_string(index) + "." + to_string(kind); }
    bool operator==(const LayerId &o) const { return index == o.index && kind == o.kind; }
    bool operator<(const LayerId &o) const { return index < o.index; }
};

// layer index -> approximation method, total over all non-linear layers
using AssignmentMap = std::map<int, MethodId>;

AssignmentMap uniform_assignment(const std::vector<LayerId> &layers, MethodId m);

// Per-layer input/output activations captured during a forward pass.
// Quantized runs store dequantized tensors so SQNR is directly computable.
struct LayerTrace {
    std::vector<Tensor> inputs;  // one per sample
    std::vector<Tensor> outputs;
};

struct ActivationTrace {
    std::map<int, LayerTrace> layers;
};

struct ForwardResult {
    std::vector<Tensor> logits; // one per sample
    ActivationTrace trace;
};

class Model {
public:
    static constexpr int kNumClasses = 10;

    explicit Model(const ModelConfig &cfg);

    const ModelConfig &config() const { return cfg_; }

    std::vector<LayerId> nonlinear_layers() const;

    // Full-precision forward over a batch of (seq_len x input_dim) samples.
    ForwardResult forward_fp(const std::vector<Tensor> &batch) const;

    // Integer forward with per-layer kernel dispatch. Requires calibration.
    ForwardResult forward_quant(const std::vector<Tensor> &batch, const AssignmentMap &a) const;

    // PTQ calibration over analysis data; the first analysis batch doubles
    // as this pass. Records activation ranges and FQ-ViT LayerNorm stats.
    void calibrate(const std::vector<Tensor> &batch);
    bool calibrated() const { return calibrated_; }

    void save_weights(const std::string &path) const;
    static Model load_weights(const std::string &path);

    // Named parameter access (tests zero the head, inspect determinism).
    Tensor &weight(const std::string &name);
    const Tensor &weight(const std::string &name) const;
    std::vector<std::string> weight_names() const;

private:
    struct Block {
        // weight tensor indices into params_
        int ln1_gamma, ln1_beta, w_qkv, w_proj, ln2_gamma, ln2_beta, w_fc1, w_fc2;
        // global module indices of the non-linear layers
        int idx_ln1, idx_softmax, idx_ln2, idx_gelu;
    };

    void build_layout();
    void init_weights();
    AffineParams affine(int gamma_idx, int beta_idx) const;

    ModelConfig cfg_;
    std::vector<std::pair<std::string, Tensor>> params_;
    std::vector<Block> blocks_;
    int w_stem_ = -1, ln_f_gamma_ = -1, ln_f_beta_ = -1, w_head_ = -1;
    int idx_ln_f_ = 0;

    // calibration state
    bool calibrated_ = false;
    std::map<std::string, double> act_max_;          // site name -> max |activation|
    std::map<int, CalibStats> fqvit_ln_calib_;       // layer index -> PTF stats
};

Model build_model(const ModelConfig &cfg);

std::vector<LayerId> enumerate_nonlinear_layers(const Model &m);

} // namespace mixedq
