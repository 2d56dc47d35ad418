#include "mixedq/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "mixedq/quant.hpp"
#include "mixedq/tensor_io.hpp"

namespace mixedq {

namespace {

constexpr int kModulesPerBlock = 8; // ln1, qkv, softmax, proj, ln2, fc1, gelu, fc2
// FQ-ViT attention codes below 2^-16 round to zero in the value matmul,
// mirroring the clip floor of 4-bit log codes.
constexpr int kAttnGridBits = 16;

// Deterministic generator: explicit Box-Muller over mt19937_64 so weight
//初始化 does not depend on the standard library's distribution internals.
class Rng {
public:
    explicit Rng(uint64_t seed) : g_(seed) {}

    double uniform() { return static_cast<double>(g_() >> 11) * 0x1.0p-53; }

    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

private:
    std::mt19937_64 g_;
};

Tensor normal_tensor(Rng &rng, Shape shape, double stddev) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal() * stddev;
    return t;
}

// (r x k) * (k x c) row-major
Tensor mm(const Tensor &a, const Tensor &b) {
    const int64_t r = a.shape()[0], k = a.shape()[1], c = b.shape()[1];
    Tensor out(Shape{r, c});
    for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) {
            double s = 0;
            for (int64_t t = 0; t < k; ++t) s += a[i * k + t] * b[t * c + j];
            out[i * c + j] = s;
        }
    return out;
}

double gelu_erf(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

Tensor softmax_rows(const Tensor &t) {
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

// integer matmul with 64-bit accumulation, rescaled onto out_scale's grid
QTensor mm_requant(const QTensor &x, const QTensor &w, double extra_mult, const Scale &out_scale) {
    const int64_t r = x.shape()[0], k = x.shape()[1], c = w.shape()[1];
    const double acc_scale = x.scale().value * w.scale().value * extra_mult;
    const DyadicScale d = dyadic_approx(acc_scale / out_scale.value, 24);
    const int64_t bound = int64_t{1} << (out_scale.bits - 1);
    std::vector<int32_t> out(static_cast<size_t>(r * c));
    for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) {
            int64_t acc = 0;
            for (int64_t t = 0; t < k; ++t)
                acc += static_cast<int64_t>(x[i * k + t]) * w[t * c + j];
            const int64_t v = std::clamp(round_shift_right(acc * d.b, d.c), -bound, bound);
            out[static_cast<size_t>(i * c + j)] = static_cast<int32_t>(v);
        }
    return QTensor(Shape{r, c}, std::move(out), out_scale);
}

QTensor requant_values(const Shape &shape, const std::vector<int64_t> &acc, double acc_scale,
                       const Scale &out_scale) {
    const DyadicScale d = dyadic_approx(acc_scale / out_scale.value, 24);
    const int64_t bound = int64_t{1} << (out_scale.bits - 1);
    std::vector<int32_t> out(acc.size());
    for (size_t i = 0; i < acc.size(); ++i)
        out[i] = static_cast<int32_t>(std::clamp(round_shift_right(acc[i] * d.b, d.c), -bound, bound));
    return QTensor(shape, std::move(out), out_scale);
}

// saturating add of two tensors already on a common grid
QTensor add_saturate(const QTensor &a, const QTensor &b) {
    const int64_t bound = int64_t{1} << (a.scale().bits - 1);
    std::vector<int32_t> out(static_cast<size_t>(a.numel()));
    for (int64_t i = 0; i < a.numel(); ++i) {
        const int64_t s = static_cast<int64_t>(a[i]) + b[i];
        out[static_cast<size_t>(i)] = static_cast<int32_t>(std::clamp(s, -bound, bound));
    }
    return QTensor(a.shape(), std::move(out), a.scale());
}

} // namespace

void ModelConfig::validate() const {
    if (depth < 1) throw InvalidInputError("config: depth must be >= 1");
    if (heads < 1) throw InvalidInputError("config: heads must be >= 1");
    if (embed_dim < 1 || embed_dim % heads != 0)
        throw InvalidInputError("config: embed_dim must be a positive multiple of heads");
    if (!(mlp_ratio > 0.0)) throw InvalidInputError("config: mlp_ratio must be positive");
    if (seq_len < 2) throw InvalidInputError("config: seq_len must be >= 2");
    if (input_dim < 1) throw InvalidInputError("config: input_dim must be >= 1");
    if (bits != 6 && bits != 8) throw InvalidInputError("config: bits must be 6 or 8");
}

AssignmentMap uniform_assignment(const std::vector<LayerId> &layers, MethodId m) {
    AssignmentMap a;
    for (const LayerId &l : layers) {
        // FQ-ViT provides no GELU method; those layers keep the base-code
        // kernel (I-ViT) in the uniform FQ-ViT model.
        if (l.kind == OpKind::GELU && m == MethodId::FQVIT)
            a[l.index] = MethodId::IVIT;
        else
            a[l.index] = m;
    }
    return a;
}

Model::Model(const ModelConfig &cfg) : cfg_(cfg) {
    cfg_.validate();
    build_layout();
    init_weights();
}

void Model::build_layout() {
    const int E = cfg_.embed_dim;
    const int M = std::max(1, static_cast<int>(std::lround(cfg_.mlp_ratio * E)));
    const int F = cfg_.input_dim;

    auto add = [&](const std::string &name, Shape shape) {
        params_.emplace_back(name, Tensor(std::move(shape)));
        return static_cast<int>(params_.size()) - 1;
    };

    w_stem_ = add("stem.w", {F, E});
    blocks_.clear();
    for (int b = 0; b < cfg_.depth; ++b) {
        const std::string p = "block" + std::to_string(b) + ".";
        Block blk;
        blk.ln1_gamma = add(p + "ln1.gamma", {E});
        blk.ln1_beta = add(p + "ln1.beta", {E});
        blk.w_qkv = add(p + "qkv.w", {E, 3 * E});
        blk.w_proj = add(p + "proj.w", {E, E});
        blk.ln2_gamma = add(p + "ln2.gamma", {E});
        blk.ln2_beta = add(p + "ln2.beta", {E});
        blk.w_fc1 = add(p + "fc1.w", {E, M});
        blk.w_fc2 = add(p + "fc2.w", {M, E});
        const int base = b * kModulesPerBlock;
        blk.idx_ln1 = base + 0;
        blk.idx_softmax = base + 2;
        blk.idx_ln2 = base + 4;
        blk.idx_gelu = base + 6;
        blocks_.push_back(blk);
    }
    ln_f_gamma_ = add("final_ln.gamma", {E});
    ln_f_beta_ = add("final_ln.beta", {E});
    w_head_ = add("head.w", {E, kNumClasses});
    idx_ln_f_ = cfg_.depth * kModulesPerBlock;
}

void Model::init_weights() {
    Rng rng(cfg_.seed);
    for (auto &[name, t] : params_) {
        if (name.find("gamma") != std::string::npos) {
            for (int64_t i = 0; i < t.numel(); ++i) t[i] = 1.0 + 0.1 * rng.normal();
        } else if (name.find("beta") != std::string::npos) {
            for (int64_t i = 0; i < t.numel(); ++i) t[i] = 0.1 * rng.normal();
        } else {
            const double stddev = 1.0 / std::sqrt(static_cast<double>(t.shape()[0]));
            t = normal_tensor(rng, t.shape(), stddev);
        }
        // weights live on the f32 grid of the blob format, so save/load
        // round-trips are bit-exact from a fresh build
        for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<double>(static_cast<float>(t[i]));
    }
}

AffineParams Model::affine(int gamma_idx, int beta_idx) const {
    return AffineParams{params_[static_cast<size_t>(gamma_idx)].second,
                        params_[static_cast<size_t>(beta_idx)].second};
}

std::vector<LayerId> Model::nonlinear_layers() const {
    std::vector<LayerId> out;
    for (const Block &b : blocks_) {
        out.push_back({b.idx_ln1, OpKind::LAYERNORM});
        out.push_back({b.idx_softmax, OpKind::SOFTMAX});
        out.push_back({b.idx_ln2, OpKind::LAYERNORM});
        out.push_back({b.idx_gelu, OpKind::GELU});
    }
    out.push_back({idx_ln_f_, OpKind::LAYERNORM});
    return out;
}

ForwardResult Model::forward_fp(const std::vector<Tensor> &batch) const {
    const int E = cfg_.embed_dim, H = cfg_.heads, T = cfg_.seq_len;
    const int dh = E / H;
    ForwardResult res;
    for (const Tensor &sample : batch) {
        if (sample.rank() != 2 || sample.shape()[0] != T || sample.shape()[1] != cfg_.input_dim)
            throw InvalidInputError("forward: sample shape must be (seq_len, input_dim)");
        Tensor x = mm(sample, params_[static_cast<size_t>(w_stem_)].second);
        for (const Block &blk : blocks_) {
            const AffineParams ln1 = affine(blk.ln1_gamma, blk.ln1_beta);
            Tensor a = layernorm_reference(x, ln1);
            auto &tl1 = res.trace.layers[blk.idx_ln1];
            tl1.inputs.push_back(x);
            tl1.outputs.push_back(a);

            const Tensor qkv = mm(a, params_[static_cast<size_t>(blk.w_qkv)].second);
            Tensor scores(Shape{H, T, T});
            const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
            for (int h = 0; h < H; ++h)
                for (int i = 0; i < T; ++i)
                    for (int j = 0; j < T; ++j) {
                        double s = 0;
                        for (int k = 0; k < dh; ++k)
                            s += qkv[i * 3 * E + h * dh + k] * qkv[j * 3 * E + E + h * dh + k];
                        scores[(h * T + i) * T + j] = s * inv;
                    }
            Tensor probs = softmax_rows(scores);
            auto &tsm = res.trace.layers[blk.idx_softmax];
            tsm.inputs.push_back(scores);
            tsm.outputs.push_back(probs);

            Tensor ctx(Shape{T, E});
            for (int h = 0; h < H; ++h)
                for (int i = 0; i < T; ++i)
                    for (int k = 0; k < dh; ++k) {
                        double s = 0;
                        for (int j = 0; j < T; ++j)
                            s += probs[(h * T + i) * T + j] * qkv[j * 3 * E + 2 * E + h * dh + k];
                        ctx[i * E + h * dh + k] = s;
                    }
            const Tensor o = mm(ctx, params_[static_cast<size_t>(blk.w_proj)].second);
            for (int64_t i = 0; i < x.numel(); ++i) x[i] += o[i];

            const AffineParams ln2 = affine(blk.ln2_gamma, blk.ln2_beta);
            Tensor bnorm = layernorm_reference(x, ln2);
            auto &tl2 = res.trace.layers[blk.idx_ln2];
            tl2.inputs.push_back(x);
            tl2.outputs.push_back(bnorm);

            Tensor gin = mm(bnorm, params_[static_cast<size_t>(blk.w_fc1)].second);
            Tensor gout(gin.shape());
            for (int64_t i = 0; i < gin.numel(); ++i) gout[i] = gelu_erf(gin[i]);
            auto &tg = res.trace.layers[blk.idx_gelu];
            tg.inputs.push_back(gin);
            tg.outputs.push_back(gout);

            const Tensor f = mm(gout, params_[static_cast<size_t>(blk.w_fc2)].second);
            for (int64_t i = 0; i < x.numel(); ++i) x[i] += f[i];
        }
        const AffineParams lnf = affine(ln_f_gamma_, ln_f_beta_);
        Tensor y = layernorm_reference(x, lnf);
        auto &tlf = res.trace.layers[idx_ln_f_];
        tlf.inputs.push_back(x);
        tlf.outputs.push_back(y);

        Tensor pooled(Shape{E});
        for (int c = 0; c < E; ++c) {
            double s = 0;
            for (int t = 0; t < T; ++t) s += y[t * E + c];
            pooled[c] = s / T;
        }
        Tensor logits(Shape{Model::kNumClasses});
        const Tensor &wh = params_[static_cast<size_t>(w_head_)].second;
        for (int c = 0; c < kNumClasses; ++c) {
            double s = 0;
            for (int k = 0; k < E; ++k) s += pooled[k] * wh[k * kNumClasses + c];
            logits[c] = s;
        }
        res.logits.push_back(std::move(logits));
    }
    return res;
}

void Model::calibrate(const std::vector<Tensor> &batch) {
    if (batch.empty()) throw InvalidInputError("calibrate: empty batch");
    const int E = cfg_.embed_dim, H = cfg_.heads, T = cfg_.seq_len;
    const int dh = E / H;
    act_max_.clear();
    fqvit_ln_calib_.clear();
    auto note = [&](const std::string &k, const Tensor &t) {
        double &m = act_max_[k];
        m = std::max(m, t.max_abs());
    };
    std::map<int, std::vector<Tensor>> ln_inputs;

    for (const Tensor &sample : batch) {
        if (sample.rank() != 2 || sample.shape()[0] != T || sample.shape()[1] != cfg_.input_dim)
            throw InvalidInputError("calibrate: sample shape must be (seq_len, input_dim)");
        note("input", sample);
        Tensor x = mm(sample, params_[static_cast<size_t>(w_stem_)].second);
        note("stem", x);
        int bi = 0;
        for (const Block &blk : blocks_) {
            const std::string p = "b" + std::to_string(bi++) + ".";
            ln_inputs[blk.idx_ln1].push_back(x);
            Tensor a = layernorm_reference(x, affine(blk.ln1_gamma, blk.ln1_beta));
            const Tensor qkv = mm(a, params_[static_cast<size_t>(blk.w_qkv)].second);
            note(p + "qkv", qkv);
            Tensor scores(Shape{H, T, T});
            const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
            for (int h = 0; h < H; ++h)
                for (int i = 0; i < T; ++i)
                    for (int j = 0; j < T; ++j) {
                        double s = 0;
                        for (int k = 0; k < dh; ++k)
                            s += qkv[i * 3 * E + h * dh + k] * qkv[j * 3 * E + E + h * dh + k];
                        scores[(h * T + i) * T + j] = s * inv;
                    }
            note(p + "scores", scores);
            const Tensor probs = softmax_rows(scores);
            Tensor ctx(Shape{T, E});
            for (int h = 0; h < H; ++h)
                for (int i = 0; i < T; ++i)
                    for (int k = 0; k < dh; ++k) {
                        double s = 0;
                        for (int j = 0; j < T; ++j)
                            s += probs[(h * T + i) * T + j] * qkv[j * 3 * E + 2 * E + h * dh + k];
                        ctx[i * E + h * dh + k] = s;
                    }
            note(p + "ctx", ctx);
            const Tensor o = mm(ctx, params_[static_cast<size_t>(blk.w_proj)].second);
            note(p + "proj", o);
            for (int64_t i = 0; i < x.numel(); ++i) x[i] += o[i];
            note(p + "res1", x);
            ln_inputs[blk.idx_ln2].push_back(x);
            Tensor bnorm = layernorm_reference(x, affine(blk.ln2_gamma, blk.ln2_beta));
            Tensor gin = mm(bnorm, params_[static_cast<size_t>(blk.w_fc1)].second);
            note(p + "fc1", gin);
            Tensor gout(gin.shape());
            for (int64_t i = 0; i < gin.numel(); ++i) gout[i] = gelu_erf(gin[i]);
            note(p + "gelu", gout);
            const Tensor f = mm(gout, params_[static_cast<size_t>(blk.w_fc2)].second);
            note(p + "fc2", f);
            for (int64_t i = 0; i < x.numel(); ++i) x[i] += f[i];
            note(p + "res2", x);
        }
        ln_inputs[idx_ln_f_].push_back(x);
    }

    // FQ-ViT LayerNorm PTF stats for every LN site
    for (const Block &blk : blocks_) {
        fqvit_ln_calib_[blk.idx_ln1] =
            calibrate_layernorm_fqvit(ln_inputs[blk.idx_ln1], affine(blk.ln1_gamma, blk.ln1_beta), cfg_.bits);
        fqvit_ln_calib_[blk.idx_ln2] =
            calibrate_layernorm_fqvit(ln_inputs[blk.idx_ln2], affine(blk.ln2_gamma, blk.ln2_beta), cfg_.bits);
    }
    fqvit_ln_calib_[idx_ln_f_] =
        calibrate_layernorm_fqvit(ln_inputs[idx_ln_f_], affine(ln_f_gamma_, ln_f_beta_), cfg_.bits);
    calibrated_ = true;
}

ForwardResult Model::forward_quant(const std::vector<Tensor> &batch, const AssignmentMap &a) const {
    if (!calibrated_) throw InvalidStateError("forward_quant: model is not calibrated");
    for (const LayerId &l : nonlinear_layers())
        if (a.find(l.index) == a.end())
            throw InvalidInputError("forward_quant: assignment missing layer " + l.render());
    for (const auto &[idx, m] : a) {
        (void)idx;
        (void)m;
    }

    const int E = cfg_.embed_dim, H = cfg_.heads, T = cfg_.seq_len;
    const int dh = E / H;
    const int bits = cfg_.bits;
    const int fq_out_bits = bits == 8 ? 8 : 4; // FQ-ViT softmax code width per bit regime

    auto grid = [&](const std::string &k) {
        const auto it = act_max_.find(k);
        if (it == act_max_.end()) throw InvalidStateError("forward_quant: missing calibration site " + k);
        return Scale::from_alpha(it->second > 0 ? it->second : kDegenerateAlpha, bits);
    };

    auto quant_weight = [&](int idx) {
        const Tensor &w = params_[static_cast<size_t>(idx)].second;
        return quantize(w, compute_scale(w, bits));
    };

    // dispatch one non-linear layer, tracing dequantized input/output
    auto run_layernorm = [&](int layer_idx, const QTensor &in, const AffineParams &p) {
        const MethodId m = a.at(layer_idx);
        switch (m) {
            case MethodId::IBERT: return layernorm_ibert(in, p);
            case MethodId::IVIT: return layernorm_ivit(in, p);
            case MethodId::FQVIT: return layernorm_fqvit(in, p, fqvit_ln_calib_.at(layer_idx));
        }
        throw InvalidInputError("bad method");
    };

    ForwardResult res;
    const QTensor stem_q = quant_weight(w_stem_);
    const Scale s_input = grid("input");
    const Scale s_stem = grid("stem");
    const Scale attn_grid = Scale::pow2(kAttnGridBits, kAttnGridBits + 1);

    for (const Tensor &sample : batch) {
        if (sample.rank() != 2 || sample.shape()[0] != T || sample.shape()[1] != cfg_.input_dim)
            throw InvalidInputError("forward: sample shape must be (seq_len, input_dim)");
        QTensor xq = quantize(sample, s_input);
        QTensor x = mm_requant(xq, stem_q, 1.0, s_stem);
        int bi = 0;
        for (const Block &blk : blocks_) {
            const std::string p = "b" + std::to_string(bi++) + ".";
            // LN1
            auto &tl1 = res.trace.layers[blk.idx_ln1];
            tl1.inputs.push_back(dequantize(x));
            const KernelOutput ln1 = run_layernorm(blk.idx_ln1, x, affine(blk.ln1_gamma, blk.ln1_beta));
            tl1.outputs.push_back(dequantize(ln1.q));

            // attention
            const QTensor qkv = mm_requant(ln1.q, quant_weight(blk.w_qkv), 1.0, grid(p + "qkv"));
            const Scale s_scores = grid(p + "scores");
            std::vector<int64_t> acc(static_cast<size_t>(H) * T * T);
            for (int h = 0; h < H; ++h)
                for (int i = 0; i < T; ++i)
                    for (int j = 0; j < T; ++j) {
                        int64_t s = 0;
                        for (int k = 0; k < dh; ++k)
                            s += static_cast<int64_t>(qkv[i * 3 * E + h * dh + k]) *
                                 qkv[j * 3 * E + E + h * dh + k];
                        acc[static_cast<size_t>((h * T + i) * T + j)] = s;
                    }
            const double score_acc_scale =
                qkv.scale().value * qkv.scale().value / std::sqrt(static_cast<double>(dh));
            QTensor scores = requant_values(Shape{H, T, T}, acc, score_acc_scale, s_scores);

            auto &tsm = res.trace.layers[blk.idx_softmax];
            tsm.inputs.push_back(dequantize(scores));
            KernelOutput sm;
            switch (a.at(blk.idx_softmax)) {
                case MethodId::IVIT: sm = softmax_ivit(scores, -1); break;
                case MethodId::IBERT: sm = softmax_ibert(scores, -1); break;
                case MethodId::FQVIT: sm = softmax_fqvit(scores, -1, fq_out_bits); break;
            }
            tsm.outputs.push_back(dequantize(sm.q));

            // align attention weights to the value-matmul grid
            QTensor probs = sm.q;
            if (sm.scale.value < attn_grid.value) probs = requantize(sm.q, attn_grid, 24);

            std::vector<int64_t> cacc(static_cast<size_t>(T) * E);
            for (int h = 0; h < H; ++h)
                for (int i = 0; i < T; ++i)
                    for (int k = 0; k < dh; ++k) {
                        int64_t s = 0;
                        for (int j = 0; j < T; ++j)
                            s += static_cast<int64_t>(probs[(h * T + i) * T + j]) *
                                 qkv[j * 3 * E + 2 * E + h * dh + k];
                        cacc[static_cast<size_t>(i * E + h * dh + k)] = s;
                    }
            const QTensor ctx = requant_values(Shape{T, E}, cacc, probs.scale().value * qkv.scale().value,
                                               grid(p + "ctx"));
            const QTensor o = mm_requant(ctx, quant_weight(blk.w_proj), 1.0, grid(p + "proj"));

            const Scale s_res1 = grid(p + "res1");
            x = add_saturate(requantize(x, s_res1, 24), requantize(o, s_res1, 24));

            // LN2 + MLP
            auto &tl2 = res.trace.layers[blk.idx_ln2];
            tl2.inputs.push_back(dequantize(x));
            const KernelOutput ln2 = run_layernorm(blk.idx_ln2, x, affine(blk.ln2_gamma, blk.ln2_beta));
            tl2.outputs.push_back(dequantize(ln2.q));

            const QTensor gin = mm_requant(ln2.q, quant_weight(blk.w_fc1), 1.0, grid(p + "fc1"));
            auto &tg = res.trace.layers[blk.idx_gelu];
            tg.inputs.push_back(dequantize(gin));
            const KernelOutput g = a.at(blk.idx_gelu) == MethodId::IBERT ? gelu_ibert(gin) : gelu_ivit(gin);
            // the activation that flows on is the requantized one; trace it
            const QTensor gq = requantize(g.q, grid(p + "gelu"), 24);
            tg.outputs.push_back(dequantize(gq));

            const QTensor f = mm_requant(gq, quant_weight(blk.w_fc2), 1.0, grid(p + "fc2"));
            const Scale s_res2 = grid(p + "res2");
            x = add_saturate(requantize(x, s_res2, 24), requantize(f, s_res2, 24));
        }

        auto &tlf = res.trace.layers[idx_ln_f_];
        tlf.inputs.push_back(dequantize(x));
        const KernelOutput lnf = run_layernorm(idx_ln_f_, x, affine(ln_f_gamma_, ln_f_beta_));
        tlf.outputs.push_back(dequantize(lnf.q));

        // mean pool on the LN grid, then the head matmul straight to floats
        std::vector<int64_t> pooled(static_cast<size_t>(E));
        for (int c = 0; c < E; ++c) {
            int64_t s = 0;
            for (int t = 0; t < T; ++t) s += lnf.q[t * E + c];
            pooled[static_cast<size_t>(c)] = round_div(s, T);
        }
        const QTensor head_q = quant_weight(w_head_);
        Tensor logits(Shape{kNumClasses});
        const double out_scale = lnf.scale.value * head_q.scale().value;
        for (int c = 0; c < kNumClasses; ++c) {
            int64_t s = 0;
            for (int k = 0; k < E; ++k) s += pooled[static_cast<size_t>(k)] * head_q[k * kNumClasses + c];
            logits[c] = static_cast<double>(s) * out_scale;
        }
        res.logits.push_back(std::move(logits));
    }
    return res;
}

namespace {

std::string blob_name(const std::string &manifest_path) {
    return manifest_path + ".blob";
}

} // namespace

void Model::save_weights(const std::string &path) const {
    std::ofstream blob(blob_name(path), std::ios::binary);
    if (!blob) throw IoError("cannot open for writing: " + blob_name(path));
    std::vector<std::streamoff> offsets;
    for (const auto &[name, t] : params_) {
        (void)name;
        offsets.push_back(blob.tellp());
        write_tensor(blob, t);
    }
    blob.close();

    std::ofstream mf(path);
    if (!mf) throw IoError("cannot open for writing: " + path);
    char buf[64];
    mf << "mixedq-weights v1\n";
    mf << "depth " << cfg_.depth << "\n";
    mf << "embed_dim " << cfg_.embed_dim << "\n";
    mf << "heads " << cfg_.heads << "\n";
    std::snprintf(buf, sizeof buf, "%.17g", cfg_.mlp_ratio);
    mf << "mlp_ratio " << buf << "\n";
    mf << "seq_len " << cfg_.seq_len << "\n";
    mf << "input_dim " << cfg_.input_dim << "\n";
    mf << "bits " << cfg_.bits << "\n";
    mf << "seed " << cfg_.seed << "\n";
    mf << "tensors " << params_.size() << "\n";
    for (size_t i = 0; i < params_.size(); ++i) {
        mf << params_[i].first << " " << offsets[i];
        const Shape &s = params_[i].second.shape();
        mf << " " << s.size();
        for (int64_t d : s) mf << " " << d;
        mf << "\n";
    }
    if (!mf) throw IoError("failed writing manifest: " + path);
}

Model Model::load_weights(const std::string &path) {
    std::ifstream mf(path);
    if (!mf) throw IoError("cannot open for reading: " + path);
    std::string line;
    if (!std::getline(mf, line) || line != "mixedq-weights v1")
        throw FileParseError("manifest: bad header");
    ModelConfig cfg;
    size_t n_tensors = 0;
    auto read_kv = [&](const std::string &key) {
        if (!std::getline(mf, line)) throw FileParseError("manifest: truncated");
        std::istringstream ss(line);
        std::string k;
        ss >> k;
        if (k != key) throw FileParseError("manifest: expected " + key);
        return ss;
    };
    read_kv("depth") >> cfg.depth;
    read_kv("embed_dim") >> cfg.embed_dim;
    read_kv("heads") >> cfg.heads;
    read_kv("mlp_ratio") >> cfg.mlp_ratio;
    read_kv("seq_len") >> cfg.seq_len;
    read_kv("input_dim") >> cfg.input_dim;
    read_kv("bits") >> cfg.bits;
    read_kv("seed") >> cfg.seed;
    read_kv("tensors") >> n_tensors;

    Model m(cfg);
    if (n_tensors != m.params_.size()) throw FileParseError("manifest: tensor count mismatch");

    std::ifstream blob(blob_name(path), std::ios::binary);
    if (!blob) throw IoError("cannot open for reading: " + blob_name(path));
    for (size_t i = 0; i < n_tensors; ++i) {
        if (!std::getline(mf, line)) throw FileParseError("manifest: truncated tensor list");
        std::istringstream ss(line);
        std::string name;
        std::streamoff off = 0;
        size_t rank = 0;
        ss >> name >> off >> rank;
        if (!ss || name != m.params_[i].first)
            throw FileParseError("manifest: tensor name mismatch at entry " + std::to_string(i));
        Shape shape(rank);
        for (auto &d : shape) ss >> d;
        if (!ss || shape != m.params_[i].second.shape())
            throw FileParseError("manifest: dims mismatch for " + name);
        blob.seekg(off);
        m.params_[i].second = read_tensor(blob);
        if (m.params_[i].second.shape() != shape)
            throw FileParseError("blob: shape mismatch for " + name);
    }
    return m;
}

Tensor &Model::weight(const std::string &name) {
    for (auto &[n, t] : params_)
        if (n == name) return t;
    throw InvalidInputError("unknown weight: " + name);
}

const Tensor &Model::weight(const std::string &name) const {
    for (const auto &[n, t] : params_)
        if (n == name) return t;
    throw InvalidInputError("unknown weight: " + name);
}

std::vector<std::string> Model::weight_names() const {
    std::vector<std::string> out;
    for (const auto &[n, t] : params_) {
        (void)t;
        out.push_back(n);
    }
    return out;
}

Model build_model(const ModelConfig &cfg) { return Model(cfg); }

std::vector<LayerId> enumerate_nonlinear_layers(const Model &m) { return m.nonlinear_layers(); }

} // namespace mixedq
