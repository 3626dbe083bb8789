#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace layoutforge::nn {

using ad::Tensor;

struct Parameter {
    std::string name;
    Tensor tensor;
};

/// Named trainable tensors of one model. Layers hold Tensor handles that
/// share storage with the entries here.
class ParameterList {
public:
    Tensor add(std::string name, Tensor t) {
        for (const auto& p : params_)
            if (p.name == name) throw ConfigError("duplicate parameter name '" + name + "'");
        t.set_requires_grad(true);
        params_.push_back({std::move(name), t});
        return t;
    }

    std::vector<Parameter>& items() { return params_; }
    const std::vector<Parameter>& items() const { return params_; }
    std::size_t count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.tensor.size();
        return n;
    }

    void zero_grad() {
        for (auto& p : params_) p.tensor.zero_grad();
    }
    void set_trainable(bool on) {
        for (auto& p : params_) p.tensor.set_requires_grad(on);
    }

    /// FNV-1a over the raw parameter bytes; used to assert that a step left a model untouched.
    std::uint64_t fingerprint() const {
        std::uint64_t h = 0xCBF29CE484222325ULL;
        for (const auto& p : params_)
            for (double v : p.tensor.data()) {
                const auto bits = std::bit_cast<std::uint64_t>(v);
                for (int b = 0; b < 8; ++b) {
                    h ^= (bits >> (8 * b)) & 0xFF;
                    h *= 0x100000001B3ULL;
                }
            }
        return h;
    }

private:
    std::vector<Parameter> params_;
};

/// Fully connected layer, weight stored [in x out].
struct Linear {
    Tensor weight;
    Tensor bias;

    Linear() = default;
    Linear(ParameterList& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
        // He-style scaling keeps leaky-relu stacks well conditioned.
        auto w = normal_vector(rng, in * out, std::sqrt(2.0 / static_cast<double>(in)));
        weight = params.add(name + ".weight", Tensor::from({in, out}, std::move(w)));
        bias = params.add(name + ".bias", Tensor::zeros({out}));
    }

    Tensor operator()(const Tensor& x) const { return ad::linear(x, weight, bias); }
    std::size_t in() const { return weight.rows(); }
    std::size_t out() const { return weight.cols(); }
};

// ---------------------------------------------------------------------------
// Optimizers

enum class OptimizerKind { SGD, Adam };

class Optimizer {
public:
    Optimizer(OptimizerKind kind, double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : kind_(kind), lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {
        if (!(learning_rate > 0)) throw ConfigError("learning rate must be positive");
        if (!(beta1 > 0 && beta1 < 1 && beta2 > 0 && beta2 < 1)) throw ConfigError("Adam betas must lie in (0,1)");
    }

    static Optimizer sgd(double lr) { return Optimizer(OptimizerKind::SGD, lr); }
    static Optimizer adam(double lr) { return Optimizer(OptimizerKind::Adam, lr); }

    OptimizerKind kind() const { return kind_; }
    double learning_rate() const { return lr_; }
    std::uint64_t steps() const { return t_; }

    /// Applies one update to every parameter and clears the gradients.
    /// A parameter without a gradient buffer is an error.
    void step(ParameterList& params) {
        for (const auto& p : params.items())
            if (!p.tensor.has_grad()) throw std::logic_error("optimizer step: parameter '" + p.name + "' has no gradient");
        ++t_;
        if (kind_ == OptimizerKind::Adam && moments_.empty()) {
            for (const auto& p : params.items()) {
                moments_.emplace_back(p.tensor.size(), 0.0);
                moments_.emplace_back(p.tensor.size(), 0.0);
            }
        }
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t k = 0; k < params.items().size(); ++k) {
            auto& t = params.items()[k].tensor;
            auto w = t.mutable_data();
            const auto g = t.grad();
            if (kind_ == OptimizerKind::SGD) {
                for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr_ * g[i];
            } else {
                auto& m = moments_[2 * k];
                auto& v = moments_[2 * k + 1];
                for (std::size_t i = 0; i < w.size(); ++i) {
                    m[i] = beta1_ * m[i] + (1 - beta1_) * g[i];
                    v[i] = beta2_ * v[i] + (1 - beta2_) * g[i] * g[i];
                    w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
                }
            }
            t.zero_grad();
        }
    }

private:
    OptimizerKind kind_;
    double lr_, beta1_, beta2_, eps_;
    std::uint64_t t_ = 0;
    std::vector<std::vector<double>> moments_;
};

// ---------------------------------------------------------------------------
// Checkpoints: "LFCK", version byte, u32 count, then per entry
// u32 name length, name bytes, u32 rank, u32 dims..., float64 data.
// All integers and floats little-endian.

inline constexpr std::array<char, 4> kCheckpointMagic = {'L', 'F', 'C', 'K'};
inline constexpr std::uint8_t kCheckpointVersion = 1;

namespace detail {
inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_f64(std::string& out, double d) {
    const auto v = std::bit_cast<std::uint64_t>(d);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

struct Reader {
    std::string_view buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw DataError("checkpoint truncated at byte " + std::to_string(pos));
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    double f64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 8;
        return std::bit_cast<double>(v);
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s(buf.substr(pos, n));
        pos += n;
        return s;
    }
};
}  // namespace detail

struct NamedTensor {
    std::string name;
    ad::Shape shape;
    std::vector<double> data;
};

inline std::string encode_checkpoint(const std::vector<NamedTensor>& entries) {
    std::string out(kCheckpointMagic.begin(), kCheckpointMagic.end());
    out.push_back(static_cast<char>(kCheckpointVersion));
    detail::put_u32(out, static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) {
        detail::put_u32(out, static_cast<std::uint32_t>(e.name.size()));
        out += e.name;
        detail::put_u32(out, static_cast<std::uint32_t>(e.shape.size()));
        for (auto d : e.shape) detail::put_u32(out, static_cast<std::uint32_t>(d));
        for (double v : e.data) detail::put_f64(out, v);
    }
    return out;
}

inline std::vector<NamedTensor> decode_checkpoint(std::string_view bytes) {
    detail::Reader r{bytes};
    r.need(5);
    if (bytes.substr(0, 4) != std::string_view(kCheckpointMagic.data(), 4)) throw DataError("not a checkpoint file (bad magic)");
    r.pos = 4;
    const auto version = static_cast<std::uint8_t>(bytes[4]);
    r.pos = 5;
    if (version != kCheckpointVersion)
        throw DataError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                        std::to_string(kCheckpointVersion) + ")");
    const auto count = r.u32();
    std::vector<NamedTensor> out;
    for (std::uint32_t k = 0; k < count; ++k) {
        NamedTensor e;
        e.name = r.bytes(r.u32());
        const auto rank = r.u32();
        for (std::uint32_t i = 0; i < rank; ++i) e.shape.push_back(r.u32());
        const auto n = ad::shape_numel(e.shape);
        r.need(n * 8);
        e.data.resize(n);
        for (auto& v : e.data) v = r.f64();
        out.push_back(std::move(e));
    }
    if (r.pos != bytes.size()) throw DataError("checkpoint has trailing bytes");
    return out;
}

inline std::vector<NamedTensor> snapshot(const std::vector<const ParameterList*>& lists) {
    std::vector<NamedTensor> out;
    for (const auto* l : lists)
        for (const auto& p : l->items())
            out.push_back({p.name, p.tensor.shape(), std::vector<double>(p.tensor.data().begin(), p.tensor.data().end())});
    return out;
}

/// Copies checkpoint values into the parameters; names and shapes must match exactly.
inline void restore(const std::vector<NamedTensor>& entries, const std::vector<ParameterList*>& lists) {
    std::map<std::string, const NamedTensor*> by_name;
    for (const auto& e : entries) by_name[e.name] = &e;
    std::size_t used = 0;
    for (auto* l : lists)
        for (auto& p : l->items()) {
            auto it = by_name.find(p.name);
            if (it == by_name.end()) throw DataError("checkpoint lacks parameter '" + p.name + "'");
            if (it->second->shape != p.tensor.shape())
                throw DataError("checkpoint parameter '" + p.name + "' has shape " + ad::shape_str(it->second->shape) +
                                ", model expects " + ad::shape_str(p.tensor.shape()));
            std::copy(it->second->data.begin(), it->second->data.end(), p.tensor.mutable_data().begin());
            ++used;
        }
    if (used != entries.size()) throw DataError("checkpoint holds parameters the model does not define");
}

inline void write_file(const std::string& path, std::string_view bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open '" + path + "' for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DataError("failed writing '" + path + "'");
}

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open '" + path + "'");
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

// ---------------------------------------------------------------------------
// Gradient checking

struct GradCheckEntry {
    std::string parameter;
    std::size_t index;
    double analytic;
    double numeric;
    double relative_error;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_relative_error = 0.0;         // worst single element
    double max_tensor_relative_error = 0.0;  // worst |a - n| / max(|a|, |n|) over each parameter's gradient vector
    bool passed = true;
};

/// Relative error with a small absolute floor so that two vanishing
/// gradients compare as equal.
inline double relative_error(double a, double b, double floor = 1e-8) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Central differences against one analytic backward pass of `loss_fn`.
inline GradCheckReport grad_check(const std::function<Tensor()>& loss_fn, std::vector<Parameter> params,
                                  double eps = 1e-5, double tolerance = 1e-4) {
    for (auto& p : params) p.tensor.zero_grad();
    loss_fn().backward();
    GradCheckReport report;
    for (auto& p : params) {
        std::vector<double> analytic(p.tensor.size(), 0.0);
        if (p.tensor.has_grad()) std::copy(p.tensor.grad().begin(), p.tensor.grad().end(), analytic.begin());
        auto w = p.tensor.mutable_data();
        double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double orig = w[i];
            w[i] = orig + eps;
            const double up = loss_fn().item();
            w[i] = orig - eps;
            const double down = loss_fn().item();
            w[i] = orig;
            const double numeric = (up - down) / (2 * eps);
            const double rel = relative_error(analytic[i], numeric);
            report.entries.push_back({p.name, i, analytic[i], numeric, rel});
            report.max_relative_error = std::max(report.max_relative_error, rel);
            diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
            a2 += analytic[i] * analytic[i];
            n2 += numeric * numeric;
        }
        const double tensor_rel = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-8});
        report.max_tensor_relative_error = std::max(report.max_tensor_relative_error, tensor_rel);
        p.tensor.zero_grad();
    }
    report.passed = report.max_relative_error < tolerance;
    return report;
}

}  // namespace layoutforge::nn
