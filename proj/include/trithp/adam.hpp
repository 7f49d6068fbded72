#pragma once

#include <cmath>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trithp/errors.hpp"
#include "trithp/model.hpp"

namespace trithp {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const {
        if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
            throw ConfigError("Adam betas must lie in [0, 1)");
        }
        if (!(eps > 0.0)) throw ConfigError("Adam epsilon must be positive");
    }
};

struct AdamMoments {
    std::vector<double> m;
    std::vector<double> v;
};

/// One bias-corrected Adam update of `param` in place. `step` is the 1-based
/// update count.
inline void adam_step(std::span<double> param, std::span<const double> grad, AdamMoments& state, std::size_t step,
                      const AdamConfig& cfg) {
    if (grad.size() != param.size()) throw DimensionError("adam_step: gradient and parameter sizes differ");
    if (state.m.size() != param.size()) state.m.assign(param.size(), 0.0);
    if (state.v.size() != param.size()) state.v.assign(param.size(), 0.0);
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        const double m_hat = state.m[i] / c1;
        const double v_hat = state.v[i] / c2;
        param[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
}

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
inline double clip_grad_norm(std::vector<NamedTensor>& params, double max_norm) {
    double sq = 0.0;
    for (auto& [_, t] : params)
        if (t.has_grad())
            for (double g : t.grad()) sq += g * g;
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double f = max_norm / norm;
        for (auto& [_, t] : params)
            if (t.has_grad())
                for (double& g : t.mutable_grad()) g *= f;
    }
    return norm;
}

/// Adam over a model's named parameters. Frozen names are never updated.
class AdamOptimizer {
public:
    AdamOptimizer(std::vector<NamedTensor> params, AdamConfig cfg, std::set<std::string> frozen = {})
        : params_(std::move(params)), cfg_(cfg), frozen_(std::move(frozen)), moments_(params_.size()) {
        cfg_.validate();
        for (const auto& name : frozen_) {
            bool found = false;
            for (const auto& [n, _] : params_) found = found || n == name;
            if (!found) throw ConfigError("cannot freeze unknown parameter '" + name + "'");
        }
    }

    /// Applies one update using the gradients currently stored on the
    /// parameters. Throws NumericError (and changes nothing) if any gradient
    /// is not finite.
    void step() {
        for (const auto& [name, t] : params_) {
            if (!t.has_grad()) continue;
            for (double g : t.grad())
                if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter " + name);
        }
        ++step_count_;
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& [name, t] = params_[i];
            if (frozen_.count(name)) continue;
            std::vector<double> zeros;
            std::span<const double> g = t.grad();
            if (!t.has_grad()) {
                zeros.assign(t.size(), 0.0);
                g = zeros;
            }
            adam_step(t.mutable_values(), g, moments_[i], step_count_, cfg_);
        }
    }

    std::size_t step_count() const noexcept { return step_count_; }
    const AdamConfig& config() const noexcept { return cfg_; }
    std::vector<NamedTensor>& parameters() noexcept { return params_; }

    nlohmann::json state_to_json() const {
        nlohmann::json moments = nlohmann::json::array();
        for (std::size_t i = 0; i < params_.size(); ++i) {
            moments.push_back({{"name", params_[i].first}, {"m", moments_[i].m}, {"v", moments_[i].v}});
        }
        return {{"step", step_count_}, {"moments", std::move(moments)}};
    }

    void state_from_json(const nlohmann::json& j) {
        const auto& moments = j.at("moments");
        if (moments.size() != params_.size()) throw DataError("optimizer state does not match the parameter list");
        step_count_ = j.at("step").get<std::size_t>();
        for (std::size_t i = 0; i < params_.size(); ++i) {
            if (moments[i].at("name").get<std::string>() != params_[i].first) {
                throw DataError("optimizer state entry " + std::to_string(i) + " is for a different parameter");
            }
            moments_[i].m = moments[i].at("m").get<std::vector<double>>();
            moments_[i].v = moments[i].at("v").get<std::vector<double>>();
        }
    }

private:
    std::vector<NamedTensor> params_;
    AdamConfig cfg_;
    std::set<std::string> frozen_;
    std::vector<AdamMoments> moments_;
    std::size_t step_count_ = 0;
};

}  // namespace trithp
