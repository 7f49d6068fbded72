#pragma once

// Dense row-major f64 matrices with eager reverse-mode differentiation.
//
// Every op runs immediately. When gradient recording is enabled and any input
// requires a gradient, the result keeps references to its inputs together with
// a closure that pushes the result's adjoint back into them. backward() sorts
// the recorded graph topologically and replays the closures in reverse.
//
// Everything is rank 2: vectors are 1 x n rows and scalars are 1 x 1.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "trithp/errors.hpp"
#include "trithp/rng.hpp"

namespace trithp {

struct Shape {
    std::size_t rows = 0;
    std::size_t cols = 0;

    std::size_t size() const noexcept { return rows * cols; }
    bool operator==(const Shape&) const = default;

    std::string str() const { return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]"; }
};

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    bool is_leaf = true;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

inline bool& grad_mode_flag() noexcept {
    thread_local bool enabled = true;
    return enabled;
}

}  // namespace detail

inline bool grad_enabled() noexcept { return detail::grad_mode_flag(); }

/// Disables gradient recording for the current thread while in scope.
class NoGradGuard {
public:
    NoGradGuard() : previous_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
    ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Handle to a node of the gradient graph. Copies share storage; use clone()
/// for an independent leaf.
class Tensor {
public:
    Tensor() = default;

    static Tensor from(std::size_t rows, std::size_t cols, std::vector<double> values,
                       bool requires_grad = false) {
        if (values.size() != rows * cols) {
            throw DimensionError("Tensor::from: " + std::to_string(values.size()) +
                                 " values do not fill shape " + Shape{rows, cols}.str());
        }
        auto node = std::make_shared<detail::Node>();
        node->shape = {rows, cols};
        node->value = std::move(values);
        node->requires_grad = requires_grad;
        return Tensor(std::move(node));
    }

    static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false) {
        return from(rows, cols, std::vector<double>(rows * cols, 0.0), requires_grad);
    }

    static Tensor full(std::size_t rows, std::size_t cols, double v, bool requires_grad = false) {
        return from(rows, cols, std::vector<double>(rows * cols, v), requires_grad);
    }

    static Tensor scalar(double v, bool requires_grad = false) { return from(1, 1, {v}, requires_grad); }

    static Tensor identity(std::size_t n) {
        auto t = zeros(n, n);
        for (std::size_t i = 0; i < n; ++i) t.node_->value[i * n + i] = 1.0;
        return t;
    }

    bool defined() const noexcept { return node_ != nullptr; }
    const Shape& shape() const { return node().shape; }
    std::size_t rows() const { return node().shape.rows; }
    std::size_t cols() const { return node().shape.cols; }
    std::size_t size() const { return node().value.size(); }

    std::span<const double> values() const { return node().value; }

    /// Writable view of a leaf's values (parameter updates, finite differences).
    std::span<double> mutable_values() {
        if (!node().is_leaf) throw ContractError("mutable_values() is only allowed on leaf tensors");
        return node_->value;
    }

    double operator()(std::size_t r, std::size_t c) const { return node().value[r * cols() + c]; }
    double item() const {
        if (size() != 1) throw ContractError("item() requires a 1x1 tensor, got " + shape().str());
        return node().value[0];
    }

    bool requires_grad() const { return node().requires_grad; }
    bool is_leaf() const { return node().is_leaf; }
    bool has_grad() const { return node().grad.size() == node().value.size(); }

    /// Accumulated gradient; empty span when nothing has been accumulated.
    std::span<const double> grad() const { return node().grad; }
    std::span<double> mutable_grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    void zero_grad() {
        if (node_) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
    }

    /// Constant copy of the current values, detached from the graph.
    Tensor detach() const { return from(rows(), cols(), node().value, false); }

    /// Independent leaf with the same values and requires_grad flag.
    Tensor clone() const { return from(rows(), cols(), node().value, node().requires_grad); }

    std::shared_ptr<detail::Node> node_ptr() const { return node_; }

    std::string str() const {
        std::ostringstream os;
        os.precision(10);
        os << shape().str() << "{";
        for (std::size_t r = 0; r < rows(); ++r) {
            os << (r ? "; " : "");
            for (std::size_t c = 0; c < cols(); ++c) os << (c ? ", " : "") << (*this)(r, c);
        }
        os << "}";
        return os.str();
    }

private:
    explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

    const detail::Node& node() const {
        if (!node_) throw ContractError("use of an undefined Tensor");
        return *node_;
    }

    std::shared_ptr<detail::Node> node_;

    template <class Backward>
    friend Tensor make_op_result(Shape, std::vector<double>, std::initializer_list<Tensor>, Backward&&);
};

/// Creates an op output. The closure is only kept when recording is on and
/// some input needs a gradient; it receives the output node, whose grad is
/// populated, and must accumulate into parents that require grad.
template <class Backward>
Tensor make_op_result(Shape shape, std::vector<double> value, std::initializer_list<Tensor> inputs,
                      Backward&& backward_fn) {
    auto node = std::make_shared<detail::Node>();
    node->shape = shape;
    node->value = std::move(value);
    bool needs = false;
    if (grad_enabled()) {
        for (const auto& in : inputs) needs = needs || in.requires_grad();
    }
    if (needs) {
        node->requires_grad = true;
        node->is_leaf = false;
        node->parents.reserve(inputs.size());
        for (const auto& in : inputs) node->parents.push_back(in.node_ptr());
        node->backward_fn = std::forward<Backward>(backward_fn);
    }
    return Tensor(std::move(node));
}

/// Populates .grad of every requires_grad leaf reachable from `loss` with
/// d(loss)/d(leaf), accumulating into whatever the leaves already hold.
inline void backward(const Tensor& loss) {
    if (loss.size() != 1) throw ContractError("backward() needs a scalar loss, got " + loss.shape().str());
    if (!loss.requires_grad()) throw ContractError("backward() on a tensor that is not on the gradient tape");

    // Iterative post-order DFS gives a topological order (inputs before outputs).
    std::vector<detail::Node*> order;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    std::unordered_set<detail::Node*> seen_set;
    stack.emplace_back(loss.node_ptr().get(), 0);
    seen_set.insert(loss.node_ptr().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            detail::Node* p = node->parents[next++].get();
            if (p->requires_grad && seen_set.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (detail::Node* n : order) {
        if (!n->is_leaf) std::fill(n->grad.begin(), n->grad.end(), 0.0);
    }
    detail::Node* root = loss.node_ptr().get();
    root->ensure_grad();
    root->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = *it;
        if (n->backward_fn && n->grad.size() == n->value.size()) n->backward_fn(*n);
    }
}

/// Boolean attention mask; true marks a position that may be attended.
struct Mask {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<unsigned char> allowed;

    bool operator()(std::size_t r, std::size_t c) const { return allowed[r * cols + c] != 0; }

    /// Position i may attend to j <= i.
    static Mask causal(std::size_t n) {
        Mask m{n, n, std::vector<unsigned char>(n * n, 0)};
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j <= i; ++j) m.allowed[i * n + j] = 1;
        return m;
    }

    static Mask all(std::size_t rows, std::size_t cols) {
        return Mask{rows, cols, std::vector<unsigned char>(rows * cols, 1)};
    }
};

namespace detail {

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shapes " + a.shape().str() + " and " + b.shape().str() +
                             " differ");
    }
}

inline std::vector<double>& parent_grad(Node& out, std::size_t i) {
    Node& p = *out.parents[i];
    p.ensure_grad();
    return p.grad;
}

inline bool wants(const Node& out, std::size_t i) { return out.parents[i]->requires_grad; }

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

// c[m x n] += a[m x k] * b[k x n]
inline void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    MutMap(c, m, n).noalias() += ConstMap(a, m, k) * ConstMap(b, k, n);
}

// c[m x n] += a[m x k] * b[n x k]^T
inline void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    MutMap(c, m, n).noalias() += ConstMap(a, m, k) * ConstMap(b, n, k).transpose();
}

// c[k x n] += a[m x k]^T * b[m x n]
inline void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    MutMap(c, k, n).noalias() += ConstMap(a, m, k).transpose() * ConstMap(b, m, n);
}

template <class Fwd, class Deriv>
Tensor unary_op(const Tensor& x, Fwd fwd, Deriv deriv) {
    std::vector<double> out(x.size());
    auto xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
    return make_op_result(x.shape(), std::move(out), {x}, [deriv](Node& o) {
        auto& g = parent_grad(o, 0);
        const auto& xin = o.parents[0]->value;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * deriv(xin[i], o.value[i]);
    });
}

}  // namespace detail

/// [m x k] * [k x n]
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: inner dimensions of " + a.shape().str() + " and " + b.shape().str() +
                             " do not agree");
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    std::vector<double> out(m * n, 0.0);
    detail::gemm_nn(a.values().data(), b.values().data(), out.data(), m, k, n);
    return make_op_result({m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& o) {
        const auto& av = o.parents[0]->value;
        const auto& bv = o.parents[1]->value;
        if (detail::wants(o, 0)) detail::gemm_nt(o.grad.data(), bv.data(), detail::parent_grad(o, 0).data(), m, n, k);
        if (detail::wants(o, 1)) detail::gemm_tn(av.data(), o.grad.data(), detail::parent_grad(o, 1).data(), m, k, n);
    });
}

/// a * b^T for a [m x k], b [n x k].
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols()) {
        throw DimensionError("matmul_nt: column counts of " + a.shape().str() + " and " + b.shape().str() +
                             " do not agree");
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    std::vector<double> out(m * n, 0.0);
    detail::gemm_nt(a.values().data(), b.values().data(), out.data(), m, k, n);
    return make_op_result({m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& o) {
        const auto& av = o.parents[0]->value;
        const auto& bv = o.parents[1]->value;
        // dA = dC * B, dB = dC^T * A
        if (detail::wants(o, 0)) detail::gemm_nn(o.grad.data(), bv.data(), detail::parent_grad(o, 0).data(), m, n, k);
        if (detail::wants(o, 1)) detail::gemm_tn(o.grad.data(), av.data(), detail::parent_grad(o, 1).data(), m, n, k);
    });
}

inline Tensor transpose(const Tensor& x) {
    const std::size_t r = x.rows(), c = x.cols();
    std::vector<double> out(r * c);
    auto xv = x.values();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
    return make_op_result({c, r}, std::move(out), {x}, [r, c](detail::Node& o) {
        auto& g = detail::parent_grad(o, 0);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) g[i * c + j] += o.grad[j * r + i];
    });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "add");
    std::vector<double> out(a.size());
    auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    return make_op_result(a.shape(), std::move(out), {a, b}, [](detail::Node& o) {
        for (std::size_t p = 0; p < 2; ++p) {
            if (!detail::wants(o, p)) continue;
            auto& g = detail::parent_grad(o, p);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
        }
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "sub");
    std::vector<double> out(a.size());
    auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    return make_op_result(a.shape(), std::move(out), {a, b}, [](detail::Node& o) {
        if (detail::wants(o, 0)) {
            auto& g = detail::parent_grad(o, 0);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
        }
        if (detail::wants(o, 1)) {
            auto& g = detail::parent_grad(o, 1);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i];
        }
    });
}

/// Elementwise product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "mul");
    std::vector<double> out(a.size());
    auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return make_op_result(a.shape(), std::move(out), {a, b}, [](detail::Node& o) {
        const auto& av = o.parents[0]->value;
        const auto& bv = o.parents[1]->value;
        if (detail::wants(o, 0)) {
            auto& g = detail::parent_grad(o, 0);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * bv[i];
        }
        if (detail::wants(o, 1)) {
            auto& g = detail::parent_grad(o, 1);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * av[i];
        }
    });
}

inline Tensor square(const Tensor& x) {
    return detail::unary_op(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

/// x [m x n] plus a 1 x n row added to every row.
inline Tensor add_rowwise(const Tensor& x, const Tensor& row) {
    if (row.rows() != 1 || row.cols() != x.cols()) {
        throw DimensionError("add_rowwise: row " + row.shape().str() + " does not broadcast over " + x.shape().str());
    }
    const std::size_t m = x.rows(), n = x.cols();
    std::vector<double> out(x.values().begin(), x.values().end());
    auto rv = row.values();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] += rv[j];
    return make_op_result(x.shape(), std::move(out), {x, row}, [m, n](detail::Node& o) {
        if (detail::wants(o, 0)) {
            auto& g = detail::parent_grad(o, 0);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
        }
        if (detail::wants(o, 1)) {
            auto& g = detail::parent_grad(o, 1);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) g[j] += o.grad[i * n + j];
        }
    });
}

/// x times a constant.
inline Tensor scale(const Tensor& x, double c) {
    return detail::unary_op(x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

/// x times a learnable 1 x 1 tensor.
inline Tensor mul_scalar(const Tensor& s, const Tensor& x) {
    if (s.size() != 1) throw DimensionError("mul_scalar: expected a 1x1 scalar, got " + s.shape().str());
    const double sv = s.values()[0];
    std::vector<double> out(x.size());
    auto xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = sv * xv[i];
    return make_op_result(x.shape(), std::move(out), {s, x}, [](detail::Node& o) {
        const double sv = o.parents[0]->value[0];
        const auto& xv = o.parents[1]->value;
        if (detail::wants(o, 0)) {
            double acc = 0.0;
            for (std::size_t i = 0; i < xv.size(); ++i) acc += o.grad[i] * xv[i];
            detail::parent_grad(o, 0)[0] += acc;
        }
        if (detail::wants(o, 1)) {
            auto& g = detail::parent_grad(o, 1);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += sv * o.grad[i];
        }
    });
}

/// Elementwise max(0, x); the derivative at 0 is taken to be 0.
inline Tensor relu(const Tensor& x) {
    return detail::unary_op(
        x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline double softplus_value(double v) noexcept {
    return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
}

inline double sigmoid_value(double v) noexcept {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
}

/// Elementwise log(1 + exp(x)), evaluated without overflow.
inline Tensor softplus(const Tensor& x) {
    return detail::unary_op(
        x, [](double v) { return softplus_value(v); }, [](double v, double) { return sigmoid_value(v); });
}

inline Tensor log(const Tensor& x) {
    return detail::unary_op(
        x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

/// log(max(x, floor)); no gradient flows through clamped entries.
inline Tensor log_floor(const Tensor& x, double floor) {
    return detail::unary_op(
        x, [floor](double v) { return std::log(std::max(v, floor)); },
        [floor](double v, double) { return v > floor ? 1.0 / v : 0.0; });
}

/// Sum of all entries, as a 1 x 1 tensor.
inline Tensor sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.values()) s += v;
    return make_op_result({1, 1}, {s}, {x}, [](detail::Node& o) {
        auto& g = detail::parent_grad(o, 0);
        for (double& v : g) v += o.grad[0];
    });
}

/// Per-row sums, [m x n] -> [m x 1].
inline Tensor row_sum(const Tensor& x) {
    const std::size_t m = x.rows(), n = x.cols();
    std::vector<double> out(m, 0.0);
    auto xv = x.values();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i] += xv[i * n + j];
    return make_op_result({m, 1}, std::move(out), {x}, [m, n](detail::Node& o) {
        auto& g = detail::parent_grad(o, 0);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) g[i * n + j] += o.grad[i];
    });
}

/// Row-wise softmax. Masked entries come out exactly 0 and are excluded from
/// the max shift and the normaliser.
inline Tensor softmax_rows(const Tensor& x, const Mask& mask) {
    const std::size_t m = x.rows(), n = x.cols();
    if (mask.rows != m || mask.cols != n) {
        throw DimensionError("softmax_rows: mask [" + std::to_string(mask.rows) + "x" + std::to_string(mask.cols) +
                             "] does not match " + x.shape().str());
    }
    std::vector<double> out(m * n, 0.0);
    auto xv = x.values();
    for (std::size_t i = 0; i < m; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        bool any = false;
        for (std::size_t j = 0; j < n; ++j) {
            if (!mask(i, j)) continue;
            any = true;
            mx = std::max(mx, xv[i * n + j]);
        }
        if (!any) throw InvalidMaskError("softmax_rows: row " + std::to_string(i) + " is fully masked");
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (!mask(i, j)) continue;
            out[i * n + j] = std::exp(xv[i * n + j] - mx);
            z += out[i * n + j];
        }
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
    }
    return make_op_result(x.shape(), std::move(out), {x}, [m, n](detail::Node& o) {
        auto& g = detail::parent_grad(o, 0);
        for (std::size_t i = 0; i < m; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += o.value[i * n + j] * o.grad[i * n + j];
            for (std::size_t j = 0; j < n; ++j) g[i * n + j] += o.value[i * n + j] * (o.grad[i * n + j] - dot);
        }
    });
}

inline Tensor softmax_rows(const Tensor& x) { return softmax_rows(x, Mask::all(x.rows(), x.cols())); }

/// Per-row standardisation (x - mean) / sqrt(var + eps), then * gain + bias.
/// Variance is the population variance of the row.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    const std::size_t m = x.rows(), n = x.cols();
    if (n < 2) throw DimensionError("layer_norm: rows need at least 2 entries, got " + x.shape().str());
    if (gain.shape() != Shape{1, n} || bias.shape() != Shape{1, n}) {
        throw DimensionError("layer_norm: gain " + gain.shape().str() + " / bias " + bias.shape().str() +
                             " do not match " + x.shape().str());
    }
    std::vector<double> xhat(m * n), inv_std(m), out(m * n);
    auto xv = x.values(), gv = gain.values(), bv = bias.values();
    for (std::size_t i = 0; i < m; ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) mean += xv[i * n + j];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = xv[i * n + j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) {
            xhat[i * n + j] = (xv[i * n + j] - mean) * inv_std[i];
            out[i * n + j] = xhat[i * n + j] * gv[j] + bv[j];
        }
    }
    return make_op_result(
        x.shape(), std::move(out), {x, gain, bias},
        [m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node& o) {
            const auto& gv = o.parents[1]->value;
            if (detail::wants(o, 0)) {
                auto& g = detail::parent_grad(o, 0);
                const double inv_n = 1.0 / static_cast<double>(n);
                for (std::size_t i = 0; i < m; ++i) {
                    double mean_d = 0.0, mean_dx = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        const double d = o.grad[i * n + j] * gv[j];
                        mean_d += d;
                        mean_dx += d * xhat[i * n + j];
                    }
                    mean_d *= inv_n;
                    mean_dx *= inv_n;
                    for (std::size_t j = 0; j < n; ++j) {
                        const double d = o.grad[i * n + j] * gv[j];
                        g[i * n + j] += inv_std[i] * (d - mean_d - xhat[i * n + j] * mean_dx);
                    }
                }
            }
            if (detail::wants(o, 1)) {
                auto& g = detail::parent_grad(o, 1);
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) g[j] += o.grad[i * n + j] * xhat[i * n + j];
            }
            if (detail::wants(o, 2)) {
                auto& g = detail::parent_grad(o, 2);
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) g[j] += o.grad[i * n + j];
            }
        });
}

/// Inverted dropout: in training each entry is zeroed with probability
/// `rate` and survivors are scaled by 1 / (1 - rate). Identity otherwise.
inline Tensor dropout(const Tensor& x, double rate, SeededRng& rng, bool training) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
    if (!training || rate == 0.0) return x;
    const double keep_scale = 1.0 / (1.0 - rate);
    std::vector<double> factor(x.size());
    for (double& f : factor) f = rng.uniform() < rate ? 0.0 : keep_scale;
    std::vector<double> out(x.size());
    auto xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * factor[i];
    return make_op_result(x.shape(), std::move(out), {x}, [factor = std::move(factor)](detail::Node& o) {
        auto& g = detail::parent_grad(o, 0);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * factor[i];
    });
}

/// Column-wise concatenation of tensors with equal row counts.
inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: nothing to concatenate");
    const std::size_t m = parts.front().rows();
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p.rows() != m) {
            throw DimensionError("concat_cols: row counts " + parts.front().shape().str() + " and " + p.shape().str() +
                                 " differ");
        }
        total += p.cols();
    }
    std::vector<double> out(m * total);
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const auto& p : parts) {
        offsets.push_back(off);
        auto pv = p.values();
        for (std::size_t i = 0; i < m; ++i)
            std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(i * p.cols()), p.cols(),
                        out.begin() + static_cast<std::ptrdiff_t>(i * total + off));
        off += p.cols();
    }
    // make_op_result takes an initializer_list, so wire parents manually.
    Tensor result = Tensor::from(m, total, std::move(out));
    bool needs = false;
    if (grad_enabled())
        for (const auto& p : parts) needs = needs || p.requires_grad();
    if (needs) {
        auto node = result.node_ptr();
        node->requires_grad = true;
        node->is_leaf = false;
        for (const auto& p : parts) node->parents.push_back(p.node_ptr());
        node->backward_fn = [m, total, offsets = std::move(offsets)](detail::Node& o) {
            for (std::size_t k = 0; k < o.parents.size(); ++k) {
                if (!detail::wants(o, k)) continue;
                auto& g = detail::parent_grad(o, k);
                const std::size_t c = o.parents[k]->shape.cols;
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < c; ++j) g[i * c + j] += o.grad[i * total + offsets[k] + j];
            }
        };
    }
    return result;
}

/// Rows of x selected by `index` (repeats allowed).
inline Tensor gather_rows(const Tensor& x, std::vector<std::size_t> index) {
    const std::size_t n = x.cols();
    for (std::size_t r : index) {
        if (r >= x.rows()) {
            throw DimensionError("gather_rows: row " + std::to_string(r) + " out of range for " + x.shape().str());
        }
    }
    std::vector<double> out(index.size() * n);
    auto xv = x.values();
    for (std::size_t i = 0; i < index.size(); ++i)
        std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(index[i] * n), n,
                    out.begin() + static_cast<std::ptrdiff_t>(i * n));
    const std::size_t m = index.size();
    return make_op_result({m, n}, std::move(out), {x}, [n, index = std::move(index)](detail::Node& o) {
        auto& g = detail::parent_grad(o, 0);
        for (std::size_t i = 0; i < index.size(); ++i)
            for (std::size_t j = 0; j < n; ++j) g[index[i] * n + j] += o.grad[i * n + j];
    });
}

/// Rows [begin, end) of x.
inline Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
    if (begin > end || end > x.rows()) {
        throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
                             ") out of range for " + x.shape().str());
    }
    std::vector<std::size_t> idx(end - begin);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = begin + i;
    return gather_rows(x, std::move(idx));
}

}  // namespace trithp
