#pragma once

// Dense float64 tensors with a reverse-mode gradient tape.
//
// Every op returns a fresh Tensor whose node remembers its parents and a
// backward closure when any input requires a gradient. Calling backward() on
// a scalar walks that record in reverse topological order and accumulates
// into the .grad buffers of every participating tensor.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "core.hpp"

namespace layoutforge::ad {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until something accumulates into it
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), 0.0);
    }
};

class Tensor {
public:
    Tensor() = default;

    static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false) {
        for (auto d : shape)
            if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
        if (shape_numel(shape) != data.size())
            throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
        auto n = std::make_shared<Node>();
        n->shape = std::move(shape);
        n->data = std::move(data);
        n->requires_grad = requires_grad;
        return Tensor(std::move(n));
    }
    static Tensor full(Shape shape, double value, bool requires_grad = false) {
        const auto n = shape_numel(shape);
        return from(std::move(shape), std::vector<double>(n, value), requires_grad);
    }
    static Tensor zeros(Shape shape, bool requires_grad = false) { return full(std::move(shape), 0.0, requires_grad); }
    static Tensor scalar(double v, bool requires_grad = false) { return from({}, {v}, requires_grad); }
    static Tensor row(std::vector<double> v, bool requires_grad = false) {
        const auto n = v.size();
        return from({1, n}, std::move(v), requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t size() const { return node_->data.size(); }
    std::size_t rank() const { return node_->shape.size(); }

    /// Rank <= 2 viewed as a matrix; rank 1 is a single row.
    std::size_t rows() const {
        const auto& s = shape();
        if (s.size() > 2) throw ShapeError("rows() on rank-" + std::to_string(s.size()) + " tensor");
        return s.size() == 2 ? s[0] : 1;
    }
    std::size_t cols() const {
        const auto& s = shape();
        if (s.size() > 2) throw ShapeError("cols() on rank-" + std::to_string(s.size()) + " tensor");
        return s.empty() ? 1 : s.back();
    }

    std::span<const double> data() const { return node_->data; }
    std::span<double> mutable_data() { return node_->data; }
    bool has_grad() const { return !node_->grad.empty(); }
    std::span<const double> grad() const { return node_->grad; }
    std::span<double> mutable_grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    void zero_grad() { node_->grad.clear(); }

    double item() const {
        if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
        return node_->data[0];
    }
    double at(std::size_t i) const { return node_->data.at(i); }
    double at(std::size_t r, std::size_t c) const { return node_->data.at(r * cols() + c); }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }

    /// Copy of the values cut off from the tape.
    Tensor detach() const { return from(shape(), node_->data, false); }

    bool same_node(const Tensor& o) const { return node_ == o.node_; }

    /// Reverse sweep from this scalar, seeding d(self)/d(self) = 1.
    void backward() const {
        if (size() != 1) throw ShapeError("backward() needs a scalar, got " + shape_str(shape()));
        if (!node_->requires_grad) return;
        std::vector<Node*> order;
        std::unordered_set<Node*> seen;
        // iterative post-order DFS
        std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
        seen.insert(node_.get());
        while (!stack.empty()) {
            auto& [n, next] = stack.back();
            if (next < n->parents.size()) {
                Node* p = n->parents[next++].get();
                if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }
        node_->ensure_grad();
        node_->grad[0] += 1.0;
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node* n = *it;
            if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
        }
    }

    /// Builds an op result. The closure receives the result node (with its
    /// grad populated) and must accumulate into parents that require grads.
    static Tensor make_op(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                          std::function<void(Node&)> backward_fn) {
        Tensor out = from(std::move(shape), std::move(data));
        bool any = false;
        for (const auto& t : inputs) any = any || t.requires_grad();
        if (any) {
            out.node_->requires_grad = true;
            for (auto& t : inputs) out.node_->parents.push_back(t.node_);
            out.node_->backward_fn = std::move(backward_fn);
        }
        return out;
    }

private:
    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}
    std::shared_ptr<Node> node_;
};

namespace detail {
inline Node& parent(Node& n, std::size_t i) { return *n.parents[i]; }

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <typename F, typename DF>
Tensor unary(const Tensor& x, F f, DF df) {
    std::vector<double> out(x.size());
    const auto in = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
    return Tensor::make_op(x.shape(), std::move(out), {x}, [df](Node& self) {
        Node& p = parent(self, 0);
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < p.data.size(); ++i) p.grad[i] += self.grad[i] * df(p.data[i], self.data[i]);
    });
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "add");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    return Tensor::make_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
        for (std::size_t k = 0; k < 2; ++k) {
            Node& p = detail::parent(self, k);
            if (!p.requires_grad) continue;
            p.ensure_grad();
            for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += self.grad[i];
        }
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "sub");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    return Tensor::make_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
        for (std::size_t k = 0; k < 2; ++k) {
            Node& p = detail::parent(self, k);
            if (!p.requires_grad) continue;
            p.ensure_grad();
            const double sign = k == 0 ? 1.0 : -1.0;
            for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += sign * self.grad[i];
        }
    });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "mul");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    return Tensor::make_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
        Node& pa = detail::parent(self, 0);
        Node& pb = detail::parent(self, 1);
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < pa.grad.size(); ++i) pa.grad[i] += self.grad[i] * pb.data[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < pb.grad.size(); ++i) pb.grad[i] += self.grad[i] * pa.data[i];
        }
    });
}

inline Tensor scale(const Tensor& x, double s) {
    return detail::unary(x, [s](double v) { return v * s; }, [s](double, double) { return s; });
}
inline Tensor add_scalar(const Tensor& x, double s) {
    return detail::unary(x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}
inline Tensor neg(const Tensor& x) { return scale(x, -1.0); }

inline Tensor relu(const Tensor& x) {
    return detail::unary(x, [](double v) { return v > 0 ? v : 0.0; }, [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}
inline Tensor leaky_relu(const Tensor& x, double alpha = 0.2) {
    return detail::unary(
        x, [alpha](double v) { return v > 0 ? v : alpha * v; },
        [alpha](double v, double) { return v > 0 ? 1.0 : alpha; });
}
inline Tensor sigmoid(const Tensor& x) {
    return detail::unary(
        x, [](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); },
        [](double, double y) { return y * (1.0 - y); });
}
inline Tensor tanh(const Tensor& x) {
    return detail::unary(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}
inline Tensor exp(const Tensor& x) {
    return detail::unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}
inline Tensor log(const Tensor& x) {
    return detail::unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}
inline Tensor square(const Tensor& x) {
    return detail::unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}
inline Tensor abs(const Tensor& x) {
    return detail::unary(
        x, [](double v) { return std::abs(v); },
        [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}
/// Gradient passes only where lo <= x <= hi.
inline Tensor clamp(const Tensor& x, double lo, double hi) {
    return detail::unary(
        x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
        [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Reductions

inline Tensor sum(const Tensor& x) {
    const auto d = x.data();
    const double s = std::accumulate(d.begin(), d.end(), 0.0);
    return Tensor::make_op({}, {s}, {x}, [](Node& self) {
        Node& p = detail::parent(self, 0);
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (auto& g : p.grad) g += self.grad[0];
    });
}

inline Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

/// Column means of an [M x N] matrix, result [1 x N].
inline Tensor mean_rows(const Tensor& x) {
    const std::size_t m = x.rows(), n = x.cols();
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j] += x.data()[i * n + j];
    for (auto& v : out) v /= static_cast<double>(m);
    return Tensor::make_op({1, n}, std::move(out), {x}, [m, n](Node& self) {
        Node& p = detail::parent(self, 0);
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) p.grad[i * n + j] += self.grad[j] / static_cast<double>(m);
    });
}

/// Column maxima of an [M x N] matrix; ties route the gradient to the first row.
inline Tensor max_rows(const Tensor& x) {
    const std::size_t m = x.rows(), n = x.cols();
    std::vector<double> out(n);
    std::vector<std::size_t> arg(n, 0);
    for (std::size_t j = 0; j < n; ++j) {
        out[j] = x.data()[j];
        for (std::size_t i = 1; i < m; ++i)
            if (x.data()[i * n + j] > out[j]) {
                out[j] = x.data()[i * n + j];
                arg[j] = i;
            }
    }
    return Tensor::make_op({1, n}, std::move(out), {x}, [n, arg = std::move(arg)](Node& self) {
        Node& p = detail::parent(self, 0);
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t j = 0; j < n; ++j) p.grad[arg[j] * n + j] += self.grad[j];
    });
}

// ---------------------------------------------------------------------------
// Shape plumbing

inline Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.size())
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    return Tensor::make_op(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()), {x}, [](Node& self) {
        Node& p = detail::parent(self, 0);
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += self.grad[i];
    });
}

inline Tensor flatten(const Tensor& x) { return reshape(x, {1, x.size()}); }

/// Horizontal concatenation of matrices with equal row counts.
inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const std::size_t m = parts[0].rows();
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p.rows() != m)
            throw ShapeError("concat_cols: row mismatch " + shape_str(parts[0].shape()) + " vs " + shape_str(p.shape()));
        widths.push_back(p.cols());
        total += p.cols();
    }
    std::vector<double> out(m * total);
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        for (std::size_t i = 0; i < m; ++i)
            std::copy_n(parts[k].data().begin() + static_cast<std::ptrdiff_t>(i * widths[k]), widths[k],
                        out.begin() + static_cast<std::ptrdiff_t>(i * total + off));
        off += widths[k];
    }
    return Tensor::make_op({m, total}, std::move(out), parts, [m, total, widths](Node& self) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < widths.size(); ++k) {
            Node& p = detail::parent(self, k);
            if (p.requires_grad) {
                p.ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < widths[k]; ++j) p.grad[i * widths[k] + j] += self.grad[i * total + off + j];
            }
            off += widths[k];
        }
    });
}

inline Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
    const std::size_t m = x.rows(), n = x.cols();
    if (begin >= end || end > n)
        throw ShapeError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for " +
                         shape_str(x.shape()));
    const std::size_t w = end - begin;
    std::vector<double> out(m * w);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) out[i * w + j] = x.data()[i * n + begin + j];
    return Tensor::make_op({m, w}, std::move(out), {x}, [m, n, w, begin](Node& self) {
        Node& p = detail::parent(self, 0);
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j) p.grad[i * n + begin + j] += self.grad[i * w + j];
    });
}

/// Repeats a [1 x N] row m times.
inline Tensor broadcast_rows(const Tensor& x, std::size_t m) {
    if (x.rows() != 1) throw ShapeError("broadcast_rows: expected one row, got " + shape_str(x.shape()));
    const std::size_t n = x.cols();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i) std::copy(x.data().begin(), x.data().end(), out.begin() + static_cast<std::ptrdiff_t>(i * n));
    return Tensor::make_op({m, n}, std::move(out), {x}, [m, n](Node& self) {
        Node& p = detail::parent(self, 0);
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) p.grad[j] += self.grad[i * n + j];
    });
}

// ---------------------------------------------------------------------------
// Linear algebra

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k) throw ShapeError("matmul: shape mismatch " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    std::vector<double> out(m * n, 0.0);
    const double* A = a.data().data();
    const double* B = b.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        double* c = out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = A[i * k + p];
            if (av == 0.0) continue;
            const double* br = B + p * n;
            for (std::size_t j = 0; j < n; ++j) c[j] += av * br[j];
        }
    }
    return Tensor::make_op({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
        Node& pa = detail::parent(self, 0);
        Node& pb = detail::parent(self, 1);
        const double* G = self.grad.data();
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double* br = pb.data.data() + p * n;
                    const double* g = G + i * n;
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += g[j] * br[j];
                    pa.grad[i * k + p] += acc;
                }
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double av = pa.data[i * k + p];
                    if (av == 0.0) continue;
                    double* gb = pb.grad.data() + p * n;
                    const double* g = G + i * n;
                    for (std::size_t j = 0; j < n; ++j) gb[j] += av * g[j];
                }
        }
    });
}

/// x[M x N] + b broadcast over rows; b has N elements.
inline Tensor add_bias(const Tensor& x, const Tensor& b) {
    const std::size_t m = x.rows(), n = x.cols();
    if (b.size() != n) throw ShapeError("add_bias: bias " + shape_str(b.shape()) + " does not fit " + shape_str(x.shape()));
    std::vector<double> out(x.data().begin(), x.data().end());
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] += b.data()[j];
    return Tensor::make_op({m, n}, std::move(out), {x, b}, [m, n](Node& self) {
        Node& px = detail::parent(self, 0);
        Node& pb = detail::parent(self, 1);
        if (px.requires_grad) {
            px.ensure_grad();
            for (std::size_t i = 0; i < m * n; ++i) px.grad[i] += self.grad[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) pb.grad[j] += self.grad[i * n + j];
        }
    });
}

/// output[b,o] = sum_i input[b,i] * weight[i,o] + bias[o]
inline Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
    if (input.cols() != weight.rows() || bias.size() != weight.cols())
        throw ShapeError("linear: input " + shape_str(input.shape()) + ", weight " + shape_str(weight.shape()) +
                         ", bias " + shape_str(bias.shape()) + " do not conform");
    return add_bias(matmul(input, weight), bias);
}

/// Row-wise softmax of an [M x N] matrix.
inline Tensor softmax_rows(const Tensor& x) {
    const std::size_t m = x.rows(), n = x.cols();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        const double* r = x.data().data() + i * n;
        const double mx = *std::max_element(r, r + n);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) z += (out[i * n + j] = std::exp(r[j] - mx));
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
    }
    return Tensor::make_op({m, n}, std::move(out), {x}, [m, n](Node& self) {
        Node& p = detail::parent(self, 0);
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
            const double* y = self.data.data() + i * n;
            const double* g = self.grad.data() + i * n;
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
            for (std::size_t j = 0; j < n; ++j) p.grad[i * n + j] += y[j] * (g[j] - dot);
        }
    });
}

// ---------------------------------------------------------------------------
// Losses

enum class Metric { L1, L2 };

inline Metric metric_from_string(std::string_view s) {
    if (s == "L1" || s == "l1") return Metric::L1;
    if (s == "L2" || s == "l2") return Metric::L2;
    throw ConfigError("unknown distance metric '" + std::string(s) + "'");
}
inline std::string_view to_string(Metric m) { return m == Metric::L1 ? "L1" : "L2"; }

/// Mean absolute (L1) or mean squared (L2) difference.
inline Tensor reconstruction_distance(const Tensor& a, const Tensor& b, Metric metric) {
    detail::require_same_shape(a, b, "reconstruction_distance");
    const Tensor d = sub(a, b);
    return mean(metric == Metric::L1 ? abs(d) : square(d));
}

inline constexpr double kScoreEpsilon = 1e-7;

namespace detail {
inline void require_probability(const Tensor& s, const char* what) {
    if (s.size() != 1) throw ShapeError(std::string(what) + " must be a scalar score, got " + shape_str(s.shape()));
    const double v = s.item();
    // NaN passes through so the training loop reports it as divergence
    if (v < 0.0 || v > 1.0) throw std::domain_error(std::string(what) + " = " + std::to_string(v) + " lies outside [0,1]");
}
}  // namespace detail

/// -log(1 - D(fake)) - log(D(real)), scores clamped to [eps, 1-eps].
inline Tensor bce_discriminator_loss(const Tensor& score_fake, const Tensor& score_real) {
    detail::require_probability(score_fake, "score_fake");
    detail::require_probability(score_real, "score_real");
    const Tensor f = clamp(reshape(score_fake, {}), kScoreEpsilon, 1.0 - kScoreEpsilon);
    const Tensor r = clamp(reshape(score_real, {}), kScoreEpsilon, 1.0 - kScoreEpsilon);
    return neg(add(log(add_scalar(neg(f), 1.0)), log(r)));
}

/// Non-saturating generator term -log(D(fake)).
inline Tensor adversarial_generator_loss(const Tensor& score_fake) {
    detail::require_probability(score_fake, "score_fake");
    return neg(log(clamp(reshape(score_fake, {}), kScoreEpsilon, 1.0 - kScoreEpsilon)));
}

}  // namespace layoutforge::ad
