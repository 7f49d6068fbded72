#pragma once

// Conditional intensity, sequence log-likelihood, next-event prediction heads
// and the training objective.
//
// On (t_i, t_{i+1}] the intensity of type k is
//   lambda_k(t) = softplus(b_k + alpha_k (t - t_i) / t_i + w_k . h(t_i))
// and lambda(t) = sum_k lambda_k(t). At an event time the time term vanishes.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "trithp/encodings.hpp"
#include "trithp/errors.hpp"
#include "trithp/model.hpp"
#include "trithp/rng.hpp"
#include "trithp/tensor.hpp"

namespace trithp {

enum class IntegrationMethod { MonteCarlo, Trapezoid };

inline const char* method_name(IntegrationMethod m) { return m == IntegrationMethod::MonteCarlo ? "mc" : "ni"; }

inline IntegrationMethod parse_method(const std::string& s) {
    if (s == "mc") return IntegrationMethod::MonteCarlo;
    if (s == "ni") return IntegrationMethod::Trapezoid;
    throw ConfigError("unknown integration method '" + s + "' (expected mc or ni)");
}

inline constexpr double kProbabilityFloor = 1e-12;

namespace detail {

inline void require_positive_anchor(double t_i, std::size_t i) {
    if (!(t_i > 0.0)) {
        throw DataError("intensity anchored at event " + std::to_string(i) + " with t = " + std::to_string(t_i) +
                        "; (t - t_i) / t_i needs t_i > 0 (shift the sequence)");
    }
}

/// Pre-activations b_k + w_k . h(t_i), N x K.
inline Tensor intensity_preactivation(const Tensor& hidden, const IntensityHead& head) {
    return add_rowwise(matmul_nt(hidden, head.weight), head.base);
}

/// Weighted sum of lambda(u) over query points. Point j lies in the interval
/// anchored at event anchor[j] at relative offset (u_j - t_a) / t_a.
inline Tensor weighted_interval_intensity(const Tensor& pre, const IntensityHead& head,
                                          std::vector<std::size_t> anchor, std::vector<double> rel_offset,
                                          std::vector<double> weight) {
    if (anchor.empty()) return scale(sum(head.base), 0.0);
    const std::size_t m = anchor.size();
    const Tensor offsets = Tensor::from(m, 1, std::move(rel_offset));
    const Tensor w = Tensor::from(1, m, std::move(weight));
    const Tensor lam = softplus(add(gather_rows(pre, std::move(anchor)), matmul(offsets, head.time_coef)));
    return sum(matmul(w, lam));
}

}  // namespace detail

/// lambda_k(t) for t in the interval anchored at event time t_i with hidden
/// state h(t_i). Plain-double version used by oracles and the CLI.
inline double intensity_k(double t, double t_i, std::span<const double> h_ti, const IntensityHead& head,
                          std::size_t k) {
    detail::require_positive_anchor(t_i, 0);
    const std::size_t z = head.weight.cols();
    if (h_ti.size() != z) throw DimensionError("intensity_k: hidden state width does not match the head");
    double a = head.base.values()[k] + head.time_coef.values()[k] * (t - t_i) / t_i;
    auto w = head.weight.values();
    for (std::size_t j = 0; j < z; ++j) a += w[k * z + j] * h_ti[j];
    return softplus_value(a);
}

inline double total_intensity(double t, double t_i, std::span<const double> h_ti, const IntensityHead& head) {
    double s = 0.0;
    for (std::size_t k = 0; k < head.weight.rows(); ++k) s += intensity_k(t, t_i, h_ti, head, k);
    return s;
}

/// lambda_k(t_i | H_i) for every event, N x K.
inline Tensor event_intensities(const Tensor& hidden, const IntensityHead& head) {
    return softplus(detail::intensity_preactivation(hidden, head));
}

/// Monte Carlo compensator: sum_i (t_i - t_{i-1}) * mean_o lambda(u_o),
/// u_o ~ U(t_{i-1}, t_i), lambda on the interval anchored at event i-1.
inline Tensor compensator_mc(const EventSequence& seq, const Tensor& hidden, const IntensityHead& head,
                             std::size_t samples, SeededRng& rng) {
    if (samples < 1) throw ConfigError("compensator_mc needs at least one sample per interval");
    const std::size_t n = seq.size();
    std::vector<std::size_t> anchor;
    std::vector<double> rel, weight;
    anchor.reserve((n - 1) * samples);
    rel.reserve((n - 1) * samples);
    weight.reserve((n - 1) * samples);
    for (std::size_t i = 1; i < n; ++i) {
        const double t0 = seq.times[i - 1], t1 = seq.times[i];
        detail::require_positive_anchor(t0, i - 1);
        const double w = (t1 - t0) / static_cast<double>(samples);
        for (std::size_t o = 0; o < samples; ++o) {
            const double u = rng.uniform(t0, t1);
            anchor.push_back(i - 1);
            rel.push_back((u - t0) / t0);
            weight.push_back(w);
        }
    }
    return detail::weighted_interval_intensity(detail::intensity_preactivation(hidden, head), head, std::move(anchor),
                                               std::move(rel), std::move(weight));
}

/// Trapezoid compensator over event times:
///   sum_{i>=2} (t_i - t_{i-1}) / 2 * (lambda(t_i | H_i) + lambda(t_{i-1} | H_{i-1}))
inline Tensor compensator_trapezoid(const EventSequence& seq, const Tensor& hidden, const IntensityHead& head) {
    const std::size_t n = seq.size();
    if (n < 2) throw DataError("compensator_trapezoid needs at least 2 events");
    const Tensor lam = row_sum(event_intensities(hidden, head));
    std::vector<double> half_dt(n - 1);
    for (std::size_t i = 1; i < n; ++i) half_dt[i - 1] = 0.5 * (seq.times[i] - seq.times[i - 1]);
    const Tensor pair_sum = add(slice_rows(lam, 1, n), slice_rows(lam, 0, n - 1));
    return sum(mul(pair_sum, Tensor::from(n - 1, 1, std::move(half_dt))));
}

/// Composite trapezoid rule with `subdivisions` panels per inter-event
/// interval, applied to the same in-interval intensity the Monte Carlo
/// estimator samples. Converges to the exact compensator.
inline Tensor compensator_trapezoid_refined(const EventSequence& seq, const Tensor& hidden,
                                            const IntensityHead& head, std::size_t subdivisions) {
    if (subdivisions < 1) throw ConfigError("compensator_trapezoid_refined needs >= 1 subdivision");
    const std::size_t n = seq.size();
    std::vector<std::size_t> anchor;
    std::vector<double> rel, weight;
    for (std::size_t i = 1; i < n; ++i) {
        const double t0 = seq.times[i - 1], t1 = seq.times[i];
        detail::require_positive_anchor(t0, i - 1);
        const double h = (t1 - t0) / static_cast<double>(subdivisions);
        for (std::size_t j = 0; j <= subdivisions; ++j) {
            const double u = j == subdivisions ? t1 : t0 + h * static_cast<double>(j);
            anchor.push_back(i - 1);
            rel.push_back((u - t0) / t0);
            weight.push_back(j == 0 || j == subdivisions ? 0.5 * h : h);
        }
    }
    return detail::weighted_interval_intensity(detail::intensity_preactivation(hidden, head), head, std::move(anchor),
                                               std::move(rel), std::move(weight));
}

struct LikelihoodReport {
    double log_intensity_sum = 0.0;
    double compensator = 0.0;
    IntegrationMethod method = IntegrationMethod::Trapezoid;
    double ll = 0.0;
};

struct LikelihoodTerms {
    Tensor event_term;   // sum_i log lambda(t_i | H_i)
    Tensor compensator;  // estimate of the integral of lambda over [t_1, t_N]
    Tensor ll;           // event_term - compensator
    IntegrationMethod method = IntegrationMethod::Trapezoid;

    LikelihoodReport report() const { return {event_term.item(), compensator.item(), method, ll.item()}; }
};

/// Sequence log-likelihood. `rng` is only used (and required) for Monte Carlo.
inline LikelihoodTerms log_likelihood(const EventSequence& seq, const Tensor& hidden, const IntensityHead& head,
                                      IntegrationMethod method, std::size_t mc_samples = 20,
                                      SeededRng* rng = nullptr) {
    if (seq.size() < 2) throw DataError("log_likelihood needs at least 2 events");
    if (hidden.rows() != seq.size()) throw DimensionError("log_likelihood: hidden rows do not match sequence length");
    const Tensor lam = row_sum(event_intensities(hidden, head));
    for (std::size_t i = 0; i < lam.size(); ++i) {
        const double v = lam.values()[i];
        if (!std::isfinite(v) || !(v > 0.0)) {
            throw NumericError("intensity at event " + std::to_string(i) + " is " + std::to_string(v));
        }
    }
    LikelihoodTerms out;
    out.method = method;
    out.event_term = sum(log(lam));
    if (method == IntegrationMethod::MonteCarlo) {
        if (rng == nullptr) throw ContractError("Monte Carlo log-likelihood needs an rng");
        out.compensator = compensator_mc(seq, hidden, head, mc_samples, *rng);
    } else {
        out.compensator = compensator_trapezoid(seq, hidden, head);
    }
    if (!std::isfinite(out.compensator.item())) {
        throw NumericError("compensator is not finite (" + std::to_string(out.compensator.item()) + ")");
    }
    out.ll = sub(out.event_term, out.compensator);
    return out;
}

struct NextEventPrediction {
    double time = 0.0;
    std::vector<double> probabilities;
    std::size_t type = 0;  // 0-based
};

/// Index of the largest entry; ties go to the smallest index.
inline std::size_t argmax_first(std::span<const double> v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

/// t_hat = W_time h, p_hat = softmax(W_type h), k_hat = argmax p_hat.
inline NextEventPrediction predict_next(std::span<const double> h, const PredictionHead& head) {
    const std::size_t z = head.time_weight.cols();
    if (h.size() != z) throw DimensionError("predict_next: hidden state width does not match the head");
    const Tensor hv = Tensor::from(1, z, {h.begin(), h.end()});
    NextEventPrediction p;
    p.time = matmul_nt(hv, head.time_weight).item();
    const Tensor probs = softmax_rows(matmul_nt(hv, head.type_weight));
    p.probabilities.assign(probs.values().begin(), probs.values().end());
    p.type = argmax_first(p.probabilities);
    return p;
}

/// Predictions made from every row of H: row i predicts event i+1.
struct PredictionTensors {
    Tensor time;           // N x 1
    Tensor probabilities;  // N x K
};

inline PredictionTensors predict_all(const Tensor& hidden, const PredictionHead& head) {
    return {matmul_nt(hidden, head.time_weight), softmax_rows(matmul_nt(hidden, head.type_weight))};
}

struct PredictionLosses {
    Tensor time;  // sum_{i>=2} (t_i - t_hat_i)^2
    Tensor type;  // sum_{i>=2} -log p_hat_i(k_i)
};

/// Event i (i >= 2) is scored against the prediction made from h(t_{i-1}).
inline PredictionLosses prediction_losses(const EventSequence& seq, const PredictionTensors& pred) {
    const std::size_t n = seq.size();
    if (n < 2) throw DataError("prediction_losses needs at least 2 events");
    const std::size_t k = pred.probabilities.cols();
    std::vector<double> target(seq.times.begin() + 1, seq.times.end());
    std::vector<double> onehot((n - 1) * k, 0.0);
    for (std::size_t i = 1; i < n; ++i) onehot[(i - 1) * k + seq.types[i]] = 1.0;
    PredictionLosses out;
    out.time = sum(square(sub(slice_rows(pred.time, 0, n - 1), Tensor::from(n - 1, 1, std::move(target)))));
    out.type = scale(sum(mul(log_floor(slice_rows(pred.probabilities, 0, n - 1), kProbabilityFloor),
                             Tensor::from(n - 1, k, std::move(onehot)))),
                     -1.0);
    return out;
}

struct ObjectiveWeights {
    double likelihood = 1.0;
    double type = 1.0;
    double time = 1.0;
};

struct ObjectiveOptions {
    IntegrationMethod method = IntegrationMethod::MonteCarlo;
    std::size_t mc_samples = 20;
    std::uint64_t seed = 0;
    bool training = false;  // enables dropout
    ObjectiveWeights weights;
};

struct SequenceObjective {
    Tensor total;  // -ll + L_type + L_time (weighted)
    LikelihoodTerms likelihood;
    PredictionLosses losses;
};

/// Objective for one sequence. `stream` identifies the sequence so dropout
/// masks and Monte Carlo samples depend only on (seed, stream).
inline SequenceObjective sequence_objective(const EventSequence& seq, const TriThpModel& model,
                                            const ObjectiveOptions& opt, std::uint64_t stream) {
    SeededRng dropout_rng(derive_seed(opt.seed, stream, 1));
    SeededRng mc_rng(derive_seed(opt.seed, stream, 2));
    const ForwardResult fwd = tri_thp_forward(seq, model, {opt.training, &dropout_rng});
    SequenceObjective out;
    out.likelihood = log_likelihood(seq, fwd.hidden, model.intensity, opt.method, opt.mc_samples, &mc_rng);
    out.losses = prediction_losses(seq, predict_all(fwd.hidden, model.prediction));
    out.total = add(add(scale(out.likelihood.ll, -opt.weights.likelihood), scale(out.losses.type, opt.weights.type)),
                    scale(out.losses.time, opt.weights.time));
    return out;
}

/// Sum of per-sequence objectives, accumulated in index order. Sequence i
/// uses stream first_stream + i.
inline Tensor objective(std::span<const EventSequence> batch, const TriThpModel& model, const ObjectiveOptions& opt,
                        std::uint64_t first_stream = 0) {
    if (batch.empty()) throw DataError("objective over an empty batch");
    Tensor total;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        Tensor term = sequence_objective(batch[i], model, opt, first_stream + i).total;
        total = total.defined() ? add(total, term) : term;
    }
    return total;
}

}  // namespace trithp
