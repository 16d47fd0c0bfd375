#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "pri4r/rng.hpp"
#include "pri4r/tensor.hpp"

namespace pri4r {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // decoupled (AdamW)
};

// Named parameters plus Adam moment buffers. Iteration is always in insertion
// order so initialization and updates are reproducible.
class ParamStore {
public:
    Tensor& create(const std::string& name, Shape shape, std::vector<double> data) {
        if (params_.count(name)) throw std::runtime_error("ParamStore: duplicate parameter " + name);
        order_.push_back(name);
        auto [it, ok] = params_.emplace(name, Tensor::leaf(std::move(shape), std::move(data), true));
        moments_m_[name].assign(it->second.size(), 0.0);
        moments_v_[name].assign(it->second.size(), 0.0);
        return it->second;
    }

    // fan-in scaled uniform init U(-1/sqrt(fan_in), 1/sqrt(fan_in))
    Tensor& create_fan_in(const std::string& name, Shape shape, size_t fan_in, Pcg32& rng) {
        double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::vector<double> d(numel(shape));
        for (double& x : d) x = rng.uniform(-bound, bound);
        return create(name, std::move(shape), std::move(d));
    }

    Tensor& create_zeros(const std::string& name, Shape shape) {
        std::vector<double> d(numel(shape), 0.0);
        return create(name, std::move(shape), std::move(d));
    }

    bool has(const std::string& name) const { return params_.count(name) != 0; }

    Tensor& at(const std::string& name) {
        auto it = params_.find(name);
        if (it == params_.end()) throw std::runtime_error("ParamStore: unknown parameter " + name);
        return it->second;
    }
    const Tensor& at(const std::string& name) const {
        auto it = params_.find(name);
        if (it == params_.end()) throw std::runtime_error("ParamStore: unknown parameter " + name);
        return it->second;
    }

    const std::vector<std::string>& names() const { return order_; }
    size_t count() const { return order_.size(); }

    size_t total_scalars() const {
        size_t n = 0;
        for (const auto& name : order_) n += params_.at(name).size();
        return n;
    }

    uint64_t step_count() const { return step_; }

    void zero_grad() {
        for (const auto& name : order_) {
            auto n = params_.at(name).node();
            n->grad.assign(n->data.size(), 0.0);
        }
    }

    // Decoupled-weight-decay Adam. Requires every parameter's grad to be
    // populated; zeroes grads afterwards.
    void adam_step(const AdamConfig& cfg) {
        ++step_;
        double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_));
        double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_));
        for (const auto& name : order_) {
            auto n = params_.at(name).node();
            if (n->grad.size() != n->data.size())
                throw std::runtime_error("adam_step: missing gradient for parameter " + name);
            auto& m = moments_m_[name];
            auto& v = moments_v_[name];
            for (size_t i = 0; i < n->data.size(); ++i) {
                double g = n->grad[i];
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
                double mhat = m[i] / bc1;
                double vhat = v[i] / bc2;
                n->data[i] -= cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * n->data[i]);
            }
            n->grad.assign(n->data.size(), 0.0);
        }
    }

    // Replaces parameter values (shapes must match); moments are kept.
    void load_values(const std::string& name, const std::vector<double>& values) {
        auto n = at(name).node();
        if (values.size() != n->data.size())
            throw std::runtime_error("load_values: size mismatch for " + name);
        n->data = values;
    }

private:
    std::vector<std::string> order_;
    std::map<std::string, Tensor> params_;
    std::map<std::string, std::vector<double>> moments_m_, moments_v_;
    uint64_t step_ = 0;
};

// y = x W + b  with W [in,out], b [out]
struct Linear {
    Tensor w, b;
    Tensor operator()(const Tensor& x) const { return add(matmul(x, w), b); }
};

inline Linear make_linear(ParamStore& ps, const std::string& prefix, size_t in, size_t out, Pcg32& rng,
                          bool zero_init = false) {
    Linear l;
    if (zero_init) {
        l.w = ps.create_zeros(prefix + ".w", {in, out});
        l.b = ps.create_zeros(prefix + ".b", {out});
    } else {
        l.w = ps.create_fan_in(prefix + ".w", {in, out}, in, rng);
        l.b = ps.create_fan_in(prefix + ".b", {out}, in, rng);
    }
    return l;
}

inline Linear bind_linear(ParamStore& ps, const std::string& prefix) {
    return Linear{ps.at(prefix + ".w"), ps.at(prefix + ".b")};
}

}  // namespace pri4r
