#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "trithp/tensor.hpp"

namespace trithp {

struct GradCheckEntry {
    std::string name;
    std::size_t count = 0;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    bool passed = true;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_error = 0.0;
    bool passed = true;
    std::string diagnostic;
};

struct GradCheckOptions {
    double step = 1e-5;
    double tolerance = 1e-4;
    /// Lower bound on the relative-error denominator so near-zero gradients
    /// are judged on absolute error.
    double denominator_floor = 1e-3;
};

/// |a - b| / max(|a|, |b|, floor)
inline double relative_error(double a, double b, double floor) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Compares reverse-mode gradients of the scalar `f()` against central
/// differences for every entry of every named parameter. `f` must be
/// deterministic (re-seed any rng inside it).
template <class F>
GradCheckReport grad_check(F&& f, std::vector<std::pair<std::string, Tensor>> params,
                           const GradCheckOptions& opt = {}) {
    GradCheckReport report;
    for (auto& [_, p] : params) p.zero_grad();
    const Tensor loss = f();
    if (!std::isfinite(loss.item())) {
        report.passed = false;
        report.diagnostic = "objective is not finite: " + std::to_string(loss.item());
        return report;
    }
    backward(loss);

    NoGradGuard no_grad;
    for (auto& [name, p] : params) {
        GradCheckEntry entry{name, p.size()};
        std::vector<double> analytic(p.size(), 0.0);
        if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), analytic.begin());
        auto vals = p.mutable_values();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double orig = vals[i];
            vals[i] = orig + opt.step;
            const double up = f().item();
            vals[i] = orig - opt.step;
            const double down = f().item();
            vals[i] = orig;
            if (!std::isfinite(up) || !std::isfinite(down)) {
                report.passed = false;
                report.diagnostic = name + "[" + std::to_string(i) + "]: objective not finite under perturbation";
                entry.passed = false;
                continue;
            }
            const double numeric = (up - down) / (2.0 * opt.step);
            entry.max_abs_error = std::max(entry.max_abs_error, std::abs(numeric - analytic[i]));
            entry.max_rel_error =
                std::max(entry.max_rel_error, relative_error(analytic[i], numeric, opt.denominator_floor));
        }
        entry.passed = entry.passed && entry.max_rel_error <= opt.tolerance;
        report.passed = report.passed && entry.passed;
        report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
        report.entries.push_back(std::move(entry));
    }
    return report;
}

}  // namespace trithp
