#pragma once

// Biased dot-product attention in three flavours:
//
//   primary:     softmax(mask((Q + b_q) K^T / sqrt(d_k))) V
//   event type:  adds (Q + b_e) (MY^T W_event)^T inside the bracket
//   temporal:    adds (Q + b_t) (C^T W_tem)^T inside the bracket
//
// Bias rows are broadcast over every row of Q.

#include <cmath>

#include "trithp/tensor.hpp"

namespace trithp {

struct QKV {
    Tensor q;
    Tensor k;
    Tensor v;
};

inline QKV qkv_project(const Tensor& h, const Tensor& w_q, const Tensor& w_k, const Tensor& w_v) {
    return {matmul(h, w_q), matmul(h, w_k), matmul(h, w_v)};
}

/// Row-stochastic attention weights. `aux_bias` / `aux_keys` are optional
/// (pass undefined tensors for the primary variant); `aux_keys` is the
/// projected auxiliary encoding, N x d_k.
inline Tensor attention_probabilities(const Tensor& q, const Tensor& k, const Tensor& b_q, const Mask& mask,
                                      const Tensor& aux_bias = {}, const Tensor& aux_keys = {}) {
    Tensor scores = matmul_nt(add_rowwise(q, b_q), k);
    if (aux_keys.defined()) {
        if (!aux_bias.defined()) throw DimensionError("attention: auxiliary keys given without a bias vector");
        scores = add(scores, matmul_nt(add_rowwise(q, aux_bias), aux_keys));
    }
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(k.cols()));
    return softmax_rows(scale(scores, inv_sqrt_dk), mask);
}

inline Tensor attn_pri(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& b_q, const Mask& mask) {
    return matmul(attention_probabilities(q, k, b_q, mask), v);
}

/// `event_enc` is (MY)^T, N x Z; `w_event` is Z x d_k.
inline Tensor attn_ete(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& b_q, const Tensor& b_e,
                       const Tensor& event_enc, const Tensor& w_event, const Mask& mask) {
    return matmul(attention_probabilities(q, k, b_q, mask, b_e, matmul(event_enc, w_event)), v);
}

/// `time_enc` is C^T, N x Z; `w_tem` is Z x d_k.
inline Tensor attn_te(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& b_q, const Tensor& b_t,
                      const Tensor& time_enc, const Tensor& w_tem, const Mask& mask) {
    return matmul(attention_probabilities(q, k, b_q, mask, b_t, matmul(time_enc, w_tem)), v);
}

}  // namespace trithp
