#pragma once

// Finite-difference checks for every differentiable operation and for the
// full training objective. Shared by the command-line `gradcheck` command and
// the test suites.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "trithp/attention.hpp"
#include "trithp/grad_check.hpp"
#include "trithp/intensity.hpp"
#include "trithp/model.hpp"
#include "trithp/rng.hpp"
#include "trithp/tensor.hpp"

namespace trithp {

struct GradientCase {
    std::string name;
    std::function<Tensor()> f;
    std::vector<NamedTensor> params;
};

struct GradientSuiteRow {
    std::string name;
    std::size_t parameters = 0;  // scalar entries checked
    double max_rel_error = 0.0;
    bool passed = false;
    std::string diagnostic;
};

/// Leaf tensor with entries uniform in (lo, hi).
inline Tensor random_tensor(SeededRng& rng, std::size_t rows, std::size_t cols, double lo, double hi,
                            bool requires_grad = true) {
    std::vector<double> v(rows * cols);
    for (double& x : v) x = rng.uniform(lo, hi);
    return Tensor::from(rows, cols, std::move(v), requires_grad);
}

/// Entries with magnitude in (0.1, 1) and random sign, keeping clear of the
/// ReLU kink.
inline Tensor random_away_from_zero(SeededRng& rng, std::size_t rows, std::size_t cols) {
    std::vector<double> v(rows * cols);
    for (double& x : v) x = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.1, 1.0);
    return Tensor::from(rows, cols, std::move(v), true);
}

/// Random sequence with t_1 in (0.5, 1.5) and unit-rate exponential gaps.
inline EventSequence random_sequence(SeededRng& rng, std::size_t n, std::size_t num_types) {
    EventSequence s;
    double t = rng.uniform(0.5, 1.5);
    for (std::size_t i = 0; i < n; ++i) {
        if (i > 0) t += 0.05 + rng.exponential(1.0);
        s.times.push_back(t);
        s.types.push_back(static_cast<std::size_t>(rng.below(num_types)));
    }
    return s;
}

/// Freshly initialised model whose every parameter is then jittered, so zero
/// biases and unit gains do not hide gradient mistakes.
inline TriThpModel random_model(const ModelConfig& cfg, std::uint64_t seed, double jitter = 0.1) {
    TriThpModel m = TriThpModel::create(cfg, seed);
    SeededRng rng(derive_seed(seed, 77));
    for (auto& [_, t] : m.named_parameters())
        for (double& v : t.mutable_values()) v += rng.uniform(-jitter, jitter);
    return m;
}

namespace detail {

/// sum(out * w) for a fixed random w, so every output entry gets a distinct
/// upstream gradient.
inline std::function<Tensor()> weighted_sum(std::function<Tensor()> op, std::uint64_t seed) {
    auto weights = std::make_shared<Tensor>();
    return [op = std::move(op), weights, seed]() {
        Tensor out = op();
        if (!weights->defined() || weights->shape() != out.shape()) {
            SeededRng rng(derive_seed(seed, 99));
            *weights = random_tensor(rng, out.rows(), out.cols(), -1.0, 1.0, false);
        }
        return sum(mul(out, *weights));
    };
}

}  // namespace detail

/// One case per tensor operation plus the three attention variants.
inline std::vector<GradientCase> operation_gradient_cases(std::uint64_t seed) {
    SeededRng rng(seed);
    std::vector<GradientCase> cases;
    auto add_case = [&cases, seed](std::string name, std::function<Tensor()> op, std::vector<NamedTensor> params) {
        cases.push_back({std::move(name), detail::weighted_sum(std::move(op), derive_seed(seed, cases.size())),
                         std::move(params)});
    };

    {
        Tensor a = random_tensor(rng, 3, 4, -1, 1), b = random_tensor(rng, 4, 2, -1, 1);
        add_case("matmul", [=] { return matmul(a, b); }, {{"a", a}, {"b", b}});
    }
    {
        Tensor a = random_tensor(rng, 3, 4, -1, 1), b = random_tensor(rng, 5, 4, -1, 1);
        add_case("matmul_nt", [=] { return matmul_nt(a, b); }, {{"a", a}, {"b", b}});
    }
    {
        Tensor x = random_tensor(rng, 3, 5, -1, 1);
        add_case("transpose", [=] { return transpose(x); }, {{"x", x}});
    }
    {
        Tensor a = random_tensor(rng, 3, 4, -1, 1), b = random_tensor(rng, 3, 4, -1, 1);
        add_case("add", [=] { return add(a, b); }, {{"a", a}, {"b", b}});
        add_case("sub", [=] { return sub(a, b); }, {{"a", a}, {"b", b}});
        add_case("mul", [=] { return mul(a, b); }, {{"a", a}, {"b", b}});
        add_case("square", [=] { return square(a); }, {{"a", a}});
        add_case("scale", [=] { return scale(a, -2.5); }, {{"a", a}});
    }
    {
        Tensor x = random_tensor(rng, 3, 4, -1, 1), row = random_tensor(rng, 1, 4, -1, 1);
        add_case("add_rowwise", [=] { return add_rowwise(x, row); }, {{"x", x}, {"row", row}});
    }
    {
        Tensor s = random_tensor(rng, 1, 1, -1, 1), x = random_tensor(rng, 3, 4, -1, 1);
        add_case("mul_scalar", [=] { return mul_scalar(s, x); }, {{"s", s}, {"x", x}});
    }
    {
        Tensor x = random_away_from_zero(rng, 4, 5);
        add_case("relu", [=] { return relu(x); }, {{"x", x}});
    }
    {
        Tensor x = random_tensor(rng, 3, 4, -4, 4);
        add_case("softplus", [=] { return softplus(x); }, {{"x", x}});
    }
    {
        Tensor x = random_tensor(rng, 3, 4, 0.5, 2.0);
        add_case("log", [=] { return log(x); }, {{"x", x}});
        add_case("log_floor", [=] { return log_floor(x, 1e-12); }, {{"x", x}});
    }
    {
        Tensor x = random_tensor(rng, 3, 4, -1, 1);
        add_case("sum", [=] { return sum(x); }, {{"x", x}});
        add_case("row_sum", [=] { return row_sum(x); }, {{"x", x}});
        add_case("softmax_rows", [=] { return softmax_rows(x); }, {{"x", x}});
    }
    {
        Tensor x = random_tensor(rng, 4, 4, -2, 2);
        const Mask mask = Mask::causal(4);
        add_case("softmax_rows_causal", [=] { return softmax_rows(x, mask); }, {{"x", x}});
    }
    {
        Tensor x = random_tensor(rng, 2, 5, -1, 1), gain = random_tensor(rng, 1, 5, 0.5, 1.5),
               bias = random_tensor(rng, 1, 5, -0.5, 0.5);
        add_case("layer_norm", [=] { return layer_norm(x, gain, bias, 1e-6); },
                 {{"x", x}, {"gain", gain}, {"bias", bias}});
    }
    {
        Tensor x = random_tensor(rng, 4, 6, -1, 1);
        const std::uint64_t mask_seed = rng.next_u64();
        add_case("dropout", [=] {
            SeededRng r(mask_seed);
            return dropout(x, 0.3, r, true);
        }, {{"x", x}});
    }
    {
        Tensor a = random_tensor(rng, 3, 2, -1, 1), b = random_tensor(rng, 3, 3, -1, 1);
        add_case("concat_cols", [=] { return concat_cols({a, b}); }, {{"a", a}, {"b", b}});
    }
    {
        Tensor x = random_tensor(rng, 4, 3, -1, 1);
        add_case("gather_rows", [=] { return gather_rows(x, {2, 0, 2, 3}); }, {{"x", x}});
        add_case("slice_rows", [=] { return slice_rows(x, 1, 3); }, {{"x", x}});
    }
    {
        const std::size_t n = 4, z = 6, zk = 3, zv = 2;
        Tensor h = random_tensor(rng, n, z, -1, 1), aux = random_tensor(rng, n, z, -1, 1);
        Tensor w_q = random_tensor(rng, z, zk, -0.5, 0.5), w_k = random_tensor(rng, z, zk, -0.5, 0.5),
               w_v = random_tensor(rng, z, zv, -0.5, 0.5);
        Tensor b_q = random_tensor(rng, 1, zk, -0.5, 0.5), b_aux = random_tensor(rng, 1, zk, -0.5, 0.5);
        Tensor w_aux = random_tensor(rng, z, zk, -0.5, 0.5);
        const Mask mask = Mask::causal(n);
        auto project = [=] { return qkv_project(h, w_q, w_k, w_v); };
        std::vector<NamedTensor> base{{"h", h}, {"w_q", w_q}, {"w_k", w_k}, {"w_v", w_v}, {"b_q", b_q}};
        add_case("attn_pri", [=] {
            const QKV p = project();
            return attn_pri(p.q, p.k, p.v, b_q, mask);
        }, base);
        auto with_aux = base;
        with_aux.insert(with_aux.end(), {{"aux_bias", b_aux}, {"aux", aux}, {"aux_proj", w_aux}});
        add_case("attn_ete", [=] {
            const QKV p = project();
            return attn_ete(p.q, p.k, p.v, b_q, b_aux, aux, w_aux, mask);
        }, with_aux);
        add_case("attn_te", [=] {
            const QKV p = project();
            return attn_te(p.q, p.k, p.v, b_q, b_aux, aux, w_aux, mask);
        }, with_aux);
    }
    return cases;
}

struct ObjectiveCaseOptions {
    std::size_t num_types = 3;
    std::size_t model_dim = 16;
    std::size_t events = 8;
    std::size_t mc_samples = 20;
    bool training = true;
};

/// The full objective (negative log-likelihood plus both prediction losses)
/// of a jittered random model on a random sequence, with every model
/// parameter checked. Dropout masks and Monte Carlo samples are fixed by
/// `seed`.
inline GradientCase objective_gradient_case(std::uint64_t seed, IntegrationMethod method,
                                            const ObjectiveCaseOptions& o = {}) {
    ModelConfig cfg;
    cfg.num_types = o.num_types;
    cfg.model_dim = o.model_dim;
    auto model = std::make_shared<TriThpModel>(random_model(cfg, derive_seed(seed, 1)));
    SeededRng rng(derive_seed(seed, 2));
    const EventSequence seq = random_sequence(rng, o.events, o.num_types);
    ObjectiveOptions opt;
    opt.method = method;
    opt.mc_samples = o.mc_samples;
    opt.seed = derive_seed(seed, 3);
    opt.training = o.training;
    return {std::string("objective_") + method_name(method),
            [model, seq, opt] { return sequence_objective(seq, *model, opt, 0).total; }, model->named_parameters()};
}

inline GradientSuiteRow run_gradient_case(GradientCase& c, const GradCheckOptions& opt = {}) {
    const GradCheckReport r = grad_check(c.f, c.params, opt);
    GradientSuiteRow row{c.name, 0, r.max_rel_error, r.passed, r.diagnostic};
    for (const auto& e : r.entries) {
        row.parameters += e.count;
        if (!e.passed && row.diagnostic.empty()) {
            row.diagnostic = "worst parameter " + e.name + " (rel. err " + std::to_string(e.max_rel_error) + ")";
        }
    }
    return row;
}

/// Every operation case followed by the objective under both integration
/// methods.
inline std::vector<GradientSuiteRow> run_gradient_suite(std::uint64_t seed, const GradCheckOptions& opt = {},
                                                        const ObjectiveCaseOptions& objective = {}) {
    std::vector<GradientSuiteRow> rows;
    for (auto& c : operation_gradient_cases(seed)) rows.push_back(run_gradient_case(c, opt));
    for (IntegrationMethod m : {IntegrationMethod::MonteCarlo, IntegrationMethod::Trapezoid}) {
        GradientCase c = objective_gradient_case(seed, m, objective);
        rows.push_back(run_gradient_case(c, opt));
    }
    return rows;
}

}  // namespace trithp
