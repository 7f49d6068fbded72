#pragma once

// Tri-THP: three transformer encoders over the same event sequence whose
// hidden states are mixed with learned scalar weights.
//
//   ETE  attention augmented with the event-type encoding
//   PRI  plain biased attention
//   TE   attention augmented with the temporal encoding
//
// Layout: every hidden state is N x Z with one row per event.

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "trithp/attention.hpp"
#include "trithp/encodings.hpp"
#include "trithp/errors.hpp"
#include "trithp/rng.hpp"
#include "trithp/tensor.hpp"

namespace trithp {

enum class Branch : std::size_t { EventType = 0, Primary = 1, Temporal = 2 };

inline constexpr std::array<Branch, 3> kBranches{Branch::EventType, Branch::Primary, Branch::Temporal};

inline const char* branch_name(Branch b) {
    switch (b) {
        case Branch::EventType: return "ete";
        case Branch::Primary: return "pri";
        case Branch::Temporal: return "te";
    }
    return "?";
}

struct ModelConfig {
    std::size_t num_types = 0;   // K
    std::size_t layers = 2;      // n
    std::size_t heads = 2;       // S
    std::size_t model_dim = 16;  // Z
    std::size_t key_dim = 8;     // Z_K
    std::size_t value_dim = 8;   // Z_V
    std::size_t hidden_dim = 32; // Z_H
    double dropout = 0.1;
    double layer_norm_eps = 1e-6;

    void validate() const {
        if (num_types < 1) throw ConfigError("num_types must be >= 1");
        require_even_dim(model_dim);
        if (layers < 1 || heads < 1 || key_dim < 1 || value_dim < 1 || hidden_dim < 1) {
            throw ConfigError("layers, heads, key_dim, value_dim and hidden_dim must all be >= 1");
        }
        if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
        if (!(layer_norm_eps >= 0.0)) throw ConfigError("layer_norm_eps must be >= 0");
    }

    bool operator==(const ModelConfig&) const = default;
};

struct HeadParams {
    Tensor w_q;       // Z x Z_K
    Tensor w_k;       // Z x Z_K
    Tensor w_v;       // Z x Z_V
    Tensor b_q;       // 1 x Z_K
    Tensor aux_bias;  // 1 x Z_K (b_e or b_t); undefined for PRI
    Tensor aux_proj;  // Z x Z_K (W_event or W_tem); undefined for PRI
};

struct EncoderLayerParams {
    std::vector<HeadParams> heads;
    Tensor w_multi;  // (S * Z_V) x Z
    Tensor w_fc1;    // Z x Z_H
    Tensor b_fc1;    // 1 x Z_H
    Tensor w_fc2;    // Z_H x Z
    Tensor b_fc2;    // 1 x Z
    Tensor ln1_gain, ln1_bias, ln2_gain, ln2_bias;  // 1 x Z
};

/// Conditional-intensity head: row k of `weight` is w_k.
struct IntensityHead {
    Tensor weight;     // K x Z
    Tensor base;       // 1 x K   (b_k)
    Tensor time_coef;  // 1 x K   (alpha_k)
};

struct PredictionHead {
    Tensor time_weight;  // 1 x Z
    Tensor type_weight;  // K x Z
};

using NamedTensor = std::pair<std::string, Tensor>;

struct TriThpModel {
    ModelConfig config;
    Tensor embedding;  // Z x K
    std::array<std::vector<EncoderLayerParams>, 3> branches;
    std::array<Tensor, 3> fusion;  // 1 x 1 each
    IntensityHead intensity;
    PredictionHead prediction;

    const std::vector<EncoderLayerParams>& branch(Branch b) const { return branches[static_cast<std::size_t>(b)]; }
    std::vector<EncoderLayerParams>& branch(Branch b) { return branches[static_cast<std::size_t>(b)]; }

    /// Xavier-uniform weights, zero biases, unit layer-norm gains and fusion
    /// weights of 1/3.
    static TriThpModel create(const ModelConfig& cfg, std::uint64_t seed) {
        cfg.validate();
        SeededRng rng(seed);
        auto xavier = [&rng](std::size_t rows, std::size_t cols, std::size_t fan_in, std::size_t fan_out) {
            const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
            std::vector<double> v(rows * cols);
            for (double& x : v) x = (2.0 * rng.uniform() - 1.0) * limit;
            return Tensor::from(rows, cols, std::move(v), true);
        };
        auto weight = [&xavier](std::size_t in, std::size_t out) { return xavier(in, out, in, out); };
        auto zeros = [](std::size_t rows, std::size_t cols) { return Tensor::zeros(rows, cols, true); };
        auto ones = [](std::size_t cols) { return Tensor::full(1, cols, 1.0, true); };

        const std::size_t Z = cfg.model_dim, K = cfg.num_types;
        TriThpModel m;
        m.config = cfg;
        m.embedding = xavier(Z, K, K, Z);
        for (Branch b : kBranches) {
            for (std::size_t l = 0; l < cfg.layers; ++l) {
                EncoderLayerParams layer;
                for (std::size_t s = 0; s < cfg.heads; ++s) {
                    HeadParams h;
                    h.w_q = weight(Z, cfg.key_dim);
                    h.w_k = weight(Z, cfg.key_dim);
                    h.w_v = weight(Z, cfg.value_dim);
                    h.b_q = zeros(1, cfg.key_dim);
                    if (b != Branch::Primary) {
                        h.aux_bias = zeros(1, cfg.key_dim);
                        h.aux_proj = weight(Z, cfg.key_dim);
                    }
                    layer.heads.push_back(std::move(h));
                }
                layer.w_multi = weight(cfg.heads * cfg.value_dim, Z);
                layer.w_fc1 = weight(Z, cfg.hidden_dim);
                layer.b_fc1 = zeros(1, cfg.hidden_dim);
                layer.w_fc2 = weight(cfg.hidden_dim, Z);
                layer.b_fc2 = zeros(1, Z);
                layer.ln1_gain = ones(Z);
                layer.ln1_bias = zeros(1, Z);
                layer.ln2_gain = ones(Z);
                layer.ln2_bias = zeros(1, Z);
                m.branch(b).push_back(std::move(layer));
            }
        }
        for (auto& f : m.fusion) f = Tensor::scalar(1.0 / 3.0, true);
        m.intensity.weight = xavier(K, Z, Z, K);
        m.intensity.base = zeros(1, K);
        m.intensity.time_coef = zeros(1, K);
        m.prediction.time_weight = xavier(1, Z, Z, 1);
        m.prediction.type_weight = xavier(K, Z, Z, K);
        return m;
    }

    /// Every learnable tensor with a stable, unique name. The handles share
    /// storage with the model.
    std::vector<NamedTensor> named_parameters() const {
        std::vector<NamedTensor> out;
        out.emplace_back("embedding", embedding);
        for (Branch b : kBranches) {
            const auto& layers = branch(b);
            for (std::size_t l = 0; l < layers.size(); ++l) {
                const std::string lp = std::string(branch_name(b)) + ".layer" + std::to_string(l) + ".";
                const auto& layer = layers[l];
                for (std::size_t s = 0; s < layer.heads.size(); ++s) {
                    const std::string hp = lp + "head" + std::to_string(s) + ".";
                    const auto& h = layer.heads[s];
                    out.emplace_back(hp + "w_q", h.w_q);
                    out.emplace_back(hp + "w_k", h.w_k);
                    out.emplace_back(hp + "w_v", h.w_v);
                    out.emplace_back(hp + "b_q", h.b_q);
                    if (h.aux_bias.defined()) out.emplace_back(hp + "aux_bias", h.aux_bias);
                    if (h.aux_proj.defined()) out.emplace_back(hp + "aux_proj", h.aux_proj);
                }
                out.emplace_back(lp + "w_multi", layer.w_multi);
                out.emplace_back(lp + "w_fc1", layer.w_fc1);
                out.emplace_back(lp + "b_fc1", layer.b_fc1);
                out.emplace_back(lp + "w_fc2", layer.w_fc2);
                out.emplace_back(lp + "b_fc2", layer.b_fc2);
                out.emplace_back(lp + "ln1_gain", layer.ln1_gain);
                out.emplace_back(lp + "ln1_bias", layer.ln1_bias);
                out.emplace_back(lp + "ln2_gain", layer.ln2_gain);
                out.emplace_back(lp + "ln2_bias", layer.ln2_bias);
            }
        }
        out.emplace_back("fusion.lambda1", fusion[0]);
        out.emplace_back("fusion.lambda2", fusion[1]);
        out.emplace_back("fusion.lambda3", fusion[2]);
        out.emplace_back("intensity.weight", intensity.weight);
        out.emplace_back("intensity.base", intensity.base);
        out.emplace_back("intensity.time_coef", intensity.time_coef);
        out.emplace_back("prediction.time_weight", prediction.time_weight);
        out.emplace_back("prediction.type_weight", prediction.type_weight);
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& [_, t] : named_parameters()) n += t.size();
        return n;
    }

    /// Deep copy with independent parameter storage.
    TriThpModel clone() const {
        TriThpModel copy = create(config, 0);
        copy.assign_from(*this);
        return copy;
    }

    /// Copies parameter values from a model with identical architecture.
    void assign_from(const TriThpModel& other) {
        if (!(config == other.config)) throw ConfigError("assign_from: model configurations differ");
        auto dst = named_parameters();
        auto src = other.named_parameters();
        for (std::size_t i = 0; i < dst.size(); ++i) {
            auto d = dst[i].second.mutable_values();
            auto s = src[i].second.values();
            std::copy(s.begin(), s.end(), d.begin());
        }
    }

    void zero_grad() {
        for (auto& [_, t] : named_parameters()) t.zero_grad();
    }
};

struct ForwardOptions {
    bool training = false;
    SeededRng* rng = nullptr;  // required when training with dropout > 0
};

namespace detail {

inline Tensor maybe_dropout(const Tensor& x, double rate, const ForwardOptions& opt) {
    if (!opt.training || rate == 0.0) return x;
    if (opt.rng == nullptr) throw ContractError("training-mode forward with dropout needs an rng");
    return dropout(x, rate, *opt.rng, true);
}

}  // namespace detail

/// Head outputs concatenated column-wise, times W_multi. `aux` is (MY)^T for
/// ETE, C^T for TE and ignored for PRI.
inline Tensor multi_head(const Tensor& h, const EncoderLayerParams& layer, Branch kind, const Tensor& aux,
                         const Mask& mask) {
    if (layer.heads.empty()) throw DimensionError("multi_head: layer has no heads");
    std::vector<Tensor> outs;
    outs.reserve(layer.heads.size());
    for (const auto& head : layer.heads) {
        const QKV p = qkv_project(h, head.w_q, head.w_k, head.w_v);
        switch (kind) {
            case Branch::Primary: outs.push_back(attn_pri(p.q, p.k, p.v, head.b_q, mask)); break;
            case Branch::EventType:
                outs.push_back(attn_ete(p.q, p.k, p.v, head.b_q, head.aux_bias, aux, head.aux_proj, mask));
                break;
            case Branch::Temporal:
                outs.push_back(attn_te(p.q, p.k, p.v, head.b_q, head.aux_bias, aux, head.aux_proj, mask));
                break;
        }
    }
    Tensor cat = outs.size() == 1 ? outs.front() : concat_cols(outs);
    if (cat.cols() != layer.w_multi.rows()) {
        throw DimensionError("multi_head: concatenated heads " + cat.shape().str() + " do not match W_multi " +
                             layer.w_multi.shape().str());
    }
    return matmul(cat, layer.w_multi);
}

/// Post-norm encoder layer:
///   X1  = LN(H + dropout(MultiHead(H)))
///   out = LN(X1 + dropout(ReLU(X1 W1 + b1) W2 + b2))
inline Tensor encoder_layer(const Tensor& h_in, const EncoderLayerParams& layer, Branch kind, const Tensor& aux,
                            const Mask& mask, double dropout_rate, double ln_eps, const ForwardOptions& opt) {
    const Tensor attn = multi_head(h_in, layer, kind, aux, mask);
    const Tensor x1 =
        layer_norm(add(h_in, detail::maybe_dropout(attn, dropout_rate, opt)), layer.ln1_gain, layer.ln1_bias, ln_eps);
    const Tensor ffn =
        add_rowwise(matmul(relu(add_rowwise(matmul(x1, layer.w_fc1), layer.b_fc1)), layer.w_fc2), layer.b_fc2);
    return layer_norm(add(x1, detail::maybe_dropout(ffn, dropout_rate, opt)), layer.ln2_gain, layer.ln2_bias, ln_eps);
}

struct ForwardResult {
    Tensor hidden;                       // fused H, N x Z; row i is h(t_i)
    std::array<Tensor, 3> branch_hidden; // H1, H2, H3
    SequenceEncoding encoding;
};

/// Runs the three encoder stacks over `seq` and fuses them:
///   H_b <- (MY)^T;  per layer: H_b <- Layer_b(H_b + C^T);  H = sum_b lambda_b H_b
inline ForwardResult tri_thp_forward(const EventSequence& seq, const TriThpModel& model,
                                     const ForwardOptions& opt = {}) {
    const ModelConfig& cfg = model.config;
    if (seq.size() == 0) throw DataError("tri_thp_forward: empty sequence");
    ForwardResult r;
    r.encoding = encode_sequence(seq, model.embedding);
    const Mask mask = Mask::causal(seq.size());
    for (Branch b : kBranches) {
        const Tensor aux = b == Branch::EventType  ? r.encoding.event
                           : b == Branch::Temporal ? r.encoding.temporal
                                                   : Tensor{};
        Tensor h = r.encoding.event;
        for (const auto& layer : model.branch(b)) {
            h = add(h, r.encoding.temporal);
            h = encoder_layer(h, layer, b, aux, mask, cfg.dropout, cfg.layer_norm_eps, opt);
        }
        r.branch_hidden[static_cast<std::size_t>(b)] = h;
    }
    r.hidden = add(add(mul_scalar(model.fusion[0], r.branch_hidden[0]), mul_scalar(model.fusion[1], r.branch_hidden[1])),
                   mul_scalar(model.fusion[2], r.branch_hidden[2]));
    return r;
}

}  // namespace trithp
