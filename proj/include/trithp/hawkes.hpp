#pragma once

// Classical multivariate Hawkes process with exponential kernels:
//   lambda_k(t) = mu_k + sum_{t_i < t} alpha[k][k_i] * exp(-beta[k][k_i] (t - t_i))
// Used to generate synthetic data and as an exact likelihood oracle.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "trithp/encodings.hpp"
#include "trithp/errors.hpp"
#include "trithp/rng.hpp"

namespace trithp {

struct HawkesParams {
    std::vector<double> mu;     // K
    std::vector<double> alpha;  // K x K row-major; alpha[k * K + j] is the effect of type j on type k
    std::vector<double> beta;   // K x K row-major

    std::size_t dim() const noexcept { return mu.size(); }
    double alpha_at(std::size_t k, std::size_t j) const { return alpha[k * dim() + j]; }
    double beta_at(std::size_t k, std::size_t j) const { return beta[k * dim() + j]; }

    /// mu_k = mu, alpha_kj = alpha, beta_kj = beta for all k, j.
    static HawkesParams uniform(std::size_t k, double mu, double alpha, double beta) {
        return {std::vector<double>(k, mu), std::vector<double>(k * k, alpha), std::vector<double>(k * k, beta)};
    }

    /// Spectral radius of the branching matrix alpha_kj / beta_kj.
    double branching_radius() const {
        const auto k = static_cast<Eigen::Index>(dim());
        Eigen::MatrixXd g(k, k);
        for (Eigen::Index r = 0; r < k; ++r)
            for (Eigen::Index c = 0; c < k; ++c)
                g(r, c) = alpha_at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) /
                          beta_at(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
        return g.eigenvalues().cwiseAbs().maxCoeff();
    }

    void validate() const {
        const std::size_t k = dim();
        if (k == 0) throw ConfigError("Hawkes parameters need at least one type");
        if (alpha.size() != k * k || beta.size() != k * k) {
            throw ConfigError("Hawkes alpha and beta must be " + std::to_string(k) + "x" + std::to_string(k));
        }
        for (double m : mu)
            if (!(m > 0.0) || !std::isfinite(m)) throw ConfigError("Hawkes mu must be positive and finite");
        for (double a : alpha)
            if (!(a >= 0.0) || !std::isfinite(a)) throw ConfigError("Hawkes alpha must be non-negative and finite");
        for (double b : beta)
            if (!(b > 0.0) || !std::isfinite(b)) throw ConfigError("Hawkes beta must be positive and finite");
    }

    void require_stationary() const {
        validate();
        const double rho = branching_radius();
        if (!(rho < 1.0)) {
            throw ConfigError("Hawkes parameters are explosive: branching spectral radius " + std::to_string(rho) +
                              " >= 1");
        }
    }
};

/// lambda_k(t) given every event of `history` with time < t.
inline double classical_intensity(const HawkesParams& p, const EventSequence& history, double t, std::size_t k) {
    double lam = p.mu[k];
    for (std::size_t i = 0; i < history.size() && history.times[i] < t; ++i) {
        const std::size_t j = history.types[i];
        lam += p.alpha_at(k, j) * std::exp(-p.beta_at(k, j) * (t - history.times[i]));
    }
    return lam;
}

/// Ogata thinning on (0, horizon]. Between events the exponential-kernel
/// intensity only decays, so the total intensity at the current time bounds
/// it until the next accepted event; the bound is refreshed after every
/// candidate.
inline EventSequence simulate_thinning(const HawkesParams& p, double horizon, SeededRng& rng) {
    p.require_stationary();
    if (!(horizon > 0.0)) throw ConfigError("simulation horizon must be positive");
    const std::size_t K = p.dim();
    std::vector<double> excite(K * K, 0.0);  // excite[k * K + j]: current contribution of type-j events to type k
    std::vector<double> lam(K);
    auto refresh = [&] {
        double total = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            lam[k] = p.mu[k];
            for (std::size_t j = 0; j < K; ++j) lam[k] += excite[k * K + j];
            total += lam[k];
        }
        return total;
    };

    EventSequence seq;
    double bound = refresh();
    double last = 0.0;
    for (;;) {
        const double candidate = last + rng.exponential(bound);
        if (candidate > horizon) break;
        const double dt = candidate - last;
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t j = 0; j < K; ++j) excite[k * K + j] *= std::exp(-p.beta_at(k, j) * dt);
        last = candidate;
        const double total = refresh();
        const double u = rng.uniform() * bound;
        if (u <= total) {
            double pick = rng.uniform() * total;
            std::size_t type = 0;
            while (type + 1 < K && pick >= lam[type]) pick -= lam[type++];
            seq.times.push_back(candidate);
            seq.types.push_back(type);
            for (std::size_t k = 0; k < K; ++k) excite[k * K + type] += p.alpha_at(k, type);
        }
        bound = refresh();
    }
    return seq;
}

/// Total compensator increments Lambda(t_i) - Lambda(t_{i-1}), with t_0 = 0.
/// Under the true model they are i.i.d. Exp(1).
inline std::vector<double> time_rescaled_intervals(const HawkesParams& p, const EventSequence& seq) {
    const std::size_t K = p.dim();
    double mu_total = 0.0;
    for (double m : p.mu) mu_total += m;
    // decay[k * K + j] = sum over past type-j events of exp(-beta_kj (t - t_i))
    std::vector<double> decay(K * K, 0.0);
    std::vector<double> counts(K, 0.0);
    auto lambda_total_integral = [&](double t) {
        double v = mu_total * t;
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t j = 0; j < K; ++j)
                v += p.alpha_at(k, j) / p.beta_at(k, j) * (counts[j] - decay[k * K + j]);
        return v;
    };
    std::vector<double> out;
    out.reserve(seq.size());
    double prev_t = 0.0, prev_lambda = 0.0;
    for (std::size_t i = 0; i < seq.size(); ++i) {
        const double t = seq.times[i];
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t j = 0; j < K; ++j) decay[k * K + j] *= std::exp(-p.beta_at(k, j) * (t - prev_t));
        const double cum = lambda_total_integral(t);
        out.push_back(cum - prev_lambda);
        const std::size_t j = seq.types[i];
        counts[j] += 1.0;
        for (std::size_t k = 0; k < K; ++k) decay[k * K + j] += 1.0;
        prev_lambda = lambda_total_integral(t);
        prev_t = t;
    }
    return out;
}

/// Exact log-likelihood on [0, T]:
///   sum_i log lambda_{k_i}(t_i)
///   - sum_k [mu_k T + sum_i alpha_{k,k_i} / beta_{k,k_i} (1 - exp(-beta_{k,k_i} (T - t_i)))]
inline double analytic_loglik(const HawkesParams& p, const EventSequence& seq, double horizon) {
    p.validate();
    const std::size_t K = p.dim();
    std::vector<double> excite(K * K, 0.0);
    double event_term = 0.0, prev_t = 0.0;
    for (std::size_t i = 0; i < seq.size(); ++i) {
        const double t = seq.times[i];
        if (t < 0.0 || t > horizon) throw DataError("event " + std::to_string(i) + " lies outside [0, T]");
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t j = 0; j < K; ++j) excite[k * K + j] *= std::exp(-p.beta_at(k, j) * (t - prev_t));
        const std::size_t ki = seq.types[i];
        double lam = p.mu[ki];
        for (std::size_t j = 0; j < K; ++j) lam += excite[ki * K + j];
        event_term += std::log(lam);
        for (std::size_t k = 0; k < K; ++k) excite[k * K + ki] += p.alpha_at(k, ki);
        prev_t = t;
    }
    double compensator = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        compensator += p.mu[k] * horizon;
        for (std::size_t i = 0; i < seq.size(); ++i) {
            const std::size_t j = seq.types[i];
            compensator += p.alpha_at(k, j) / p.beta_at(k, j) * (1.0 - std::exp(-p.beta_at(k, j) * (horizon - seq.times[i])));
        }
    }
    return event_term - compensator;
}

}  // namespace trithp
