#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "pri4r/trainer.hpp"

namespace pri4r {

struct GradCheckResult {
    std::string name;
    size_t instances = 0;
    double max_rel_err = 0.0;
    bool pass = false;
};

namespace detail {

inline double rel_err(double analytic, double fd) {
    return std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1e-3});
}

// Central finite difference of f along one scalar, perturbing in place.
inline double central_diff(const std::function<double()>& f, double& x, double eps) {
    double x0 = x;
    x = x0 + eps;
    double fp = f();
    x = x0 - eps;
    double fm = f();
    x = x0;
    return (fp - fm) / (2.0 * eps);
}

}  // namespace detail

// One differentiable-op check: make_inputs builds fresh leaf tensors, loss
// rebuilds the graph from their current values. Every input element is
// compared against a central difference.
struct OpCheck {
    std::string name;
    std::function<std::vector<Tensor>(Pcg32&)> make_inputs;
    std::function<Tensor(const std::vector<Tensor>&)> loss;
};

inline GradCheckResult run_op_check(const OpCheck& check, size_t instances, uint64_t seed,
                                    double eps = 1e-5, double tol = 1e-5) {
    GradCheckResult res;
    res.name = check.name;
    res.instances = instances;
    Pcg32 rng(seed, 0x853c49e6748fea9bULL);
    for (size_t inst = 0; inst < instances; ++inst) {
        std::vector<Tensor> inputs = check.make_inputs(rng);
        Tensor l = check.loss(inputs);
        backward(l);
        auto f = [&]() { return check.loss(inputs).item(); };
        for (Tensor& in : inputs) {
            const auto& grad = in.grad();
            auto& data = in.data();
            for (size_t i = 0; i < data.size(); ++i) {
                double fd = detail::central_diff(f, data[i], eps);
                res.max_rel_err = std::max(res.max_rel_err, detail::rel_err(grad[i], fd));
            }
        }
    }
    res.pass = res.max_rel_err <= tol;
    return res;
}

inline std::vector<double> rand_vec(size_t n, Pcg32& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

inline Tensor rand_leaf(Shape shape, Pcg32& rng) {
    return Tensor::leaf(shape, rand_vec(numel(shape), rng), true);
}

// The standard op suite: every differentiable operation exposed by the tensor
// engine, each wrapped so its output reduces to a scalar through sum_all.
inline std::vector<OpCheck> standard_op_checks() {
    std::vector<OpCheck> checks;
    auto dim = [](Pcg32& rng) { return static_cast<size_t>(2 + rng.below(3)); };

    checks.push_back({"add_broadcast",
                      [dim](Pcg32& rng) {
                          size_t r = dim(rng), c = dim(rng);
                          return std::vector<Tensor>{rand_leaf({r, c}, rng), rand_leaf({1, c}, rng)};
                      },
                      [](const std::vector<Tensor>& in) { return sum_all(add(in[0], in[1])); }});
    checks.push_back({"sub",
                      [dim](Pcg32& rng) {
                          size_t r = dim(rng), c = dim(rng);
                          return std::vector<Tensor>{rand_leaf({r, c}, rng), rand_leaf({r, c}, rng)};
                      },
                      [](const std::vector<Tensor>& in) { return sum_all(sub(in[0], in[1])); }});
    checks.push_back({"mul_broadcast",
                      [dim](Pcg32& rng) {
                          size_t r = dim(rng), c = dim(rng);
                          return std::vector<Tensor>{rand_leaf({r, c}, rng), rand_leaf({r, 1}, rng)};
                      },
                      [](const std::vector<Tensor>& in) { return sum_all(mul(in[0], in[1])); }});
    checks.push_back({"relu",
                      [dim](Pcg32& rng) { return std::vector<Tensor>{rand_leaf({dim(rng), dim(rng)}, rng)}; },
                      [](const std::vector<Tensor>& in) { return sum_all(mul(relu(in[0]), in[0])); }});
    checks.push_back({"gelu",
                      [dim](Pcg32& rng) { return std::vector<Tensor>{rand_leaf({dim(rng), dim(rng)}, rng)}; },
                      [](const std::vector<Tensor>& in) { return sum_all(gelu(in[0])); }});
    checks.push_back({"tanh",
                      [dim](Pcg32& rng) { return std::vector<Tensor>{rand_leaf({dim(rng), dim(rng)}, rng)}; },
                      [](const std::vector<Tensor>& in) { return sum_all(tanh_op(in[0])); }});
    checks.push_back({"scale",
                      [dim](Pcg32& rng) { return std::vector<Tensor>{rand_leaf({dim(rng), dim(rng)}, rng)}; },
                      [](const std::vector<Tensor>& in) { return sum_all(scale(in[0], -1.7)); }});
    checks.push_back({"matmul",
                      [dim](Pcg32& rng) {
                          size_t m = dim(rng), k = dim(rng), n = dim(rng);
                          return std::vector<Tensor>{rand_leaf({m, k}, rng), rand_leaf({k, n}, rng)};
                      },
                      [](const std::vector<Tensor>& in) { return sum_all(mul(matmul(in[0], in[1]),
                                                                             matmul(in[0], in[1]))); }});
    checks.push_back({"matmul_batched",
                      [dim](Pcg32& rng) {
                          size_t b = dim(rng), m = dim(rng), k = dim(rng), n = dim(rng);
                          return std::vector<Tensor>{rand_leaf({b, m, k}, rng), rand_leaf({k, n}, rng)};
                      },
                      [](const std::vector<Tensor>& in) { return sum_all(matmul(in[0], in[1])); }});
    checks.push_back({"transpose2d",
                      [dim](Pcg32& rng) {
                          size_t r = dim(rng), c = dim(rng);
                          return std::vector<Tensor>{rand_leaf({r, c}, rng), rand_leaf({r, c}, rng)};
                      },
                      [](const std::vector<Tensor>& in) {
                          return sum_all(matmul(transpose2d(in[0]), in[1]));
                      }});
    checks.push_back({"reshape",
                      [dim](Pcg32& rng) {
                          size_t r = dim(rng);
                          return std::vector<Tensor>{rand_leaf({r, 4}, rng)};
                      },
                      [](const std::vector<Tensor>& in) {
                          size_t r = in[0].shape()[0];
                          return sum_all(mul(reshape(in[0], {r * 2, 2}), reshape(in[0], {r * 2, 2})));
                      }});
    checks.push_back({"row_slice",
                      [dim](Pcg32& rng) {
                          size_t c = dim(rng);
                          return std::vector<Tensor>{rand_leaf({4, c}, rng)};
                      },
                      [](const std::vector<Tensor>& in) {
                          return sum_all(mul(row_slice(in[0], 1, 3), row_slice(in[0], 1, 3)));
                      }});
    checks.push_back({"concat_rows",
                      [dim](Pcg32& rng) {
                          size_t c = dim(rng);
                          return std::vector<Tensor>{rand_leaf({2, c}, rng), rand_leaf({3, c}, rng)};
                      },
                      [](const std::vector<Tensor>& in) {
                          Tensor cat = concat_rows({in[0], in[1]});
                          return sum_all(mul(cat, cat));
                      }});
    checks.push_back({"col_slice",
                      [dim](Pcg32& rng) {
                          size_t r = dim(rng);
                          return std::vector<Tensor>{rand_leaf({r, 4}, rng)};
                      },
                      [](const std::vector<Tensor>& in) {
                          return sum_all(mul(col_slice(in[0], 1, 3), col_slice(in[0], 1, 3)));
                      }});
    checks.push_back({"concat_cols",
                      [dim](Pcg32& rng) {
                          size_t r = dim(rng);
                          return std::vector<Tensor>{rand_leaf({r, 2}, rng), rand_leaf({r, 3}, rng)};
                      },
                      [](const std::vector<Tensor>& in) {
                          Tensor cat = concat_cols({in[0], in[1]});
                          return sum_all(mul(cat, cat));
                      }});
    checks.push_back({"row_select",
                      [dim](Pcg32& rng) {
                          size_t c = dim(rng);
                          return std::vector<Tensor>{rand_leaf({4, c}, rng)};
                      },
                      [](const std::vector<Tensor>& in) {
                          return sum_all(mul(row_select(in[0], 2), row_select(in[0], 2)));
                      }});
    checks.push_back({"repeat_rows",
                      [dim](Pcg32& rng) {
                          size_t c = dim(rng);
                          return std::vector<Tensor>{rand_leaf({1, c}, rng), rand_leaf({3, c}, rng)};
                      },
                      [](const std::vector<Tensor>& in) {
                          return sum_all(mul(repeat_rows(in[0], 3), in[1]));
                      }});
    checks.push_back({"broadcast_concat",
                      [dim](Pcg32& rng) {
                          size_t d = dim(rng);
                          return std::vector<Tensor>{rand_leaf({2, d}, rng), rand_leaf({3, d}, rng)};
                      },
                      [](const std::vector<Tensor>& in) {
                          Tensor bc = broadcast_concat(in[0], in[1]);
                          return sum_all(mul(bc, bc));
                      }});
    checks.push_back({"masked_softmax_rows",
                      [dim](Pcg32& rng) {
                          size_t r = dim(rng), c = 4;
                          return std::vector<Tensor>{rand_leaf({r, c}, rng)};
                      },
                      [](const std::vector<Tensor>& in) {
                          size_t r = in[0].shape()[0], c = in[0].shape()[1];
                          std::vector<uint8_t> mask(r * c, 0);
                          for (size_t i = 0; i < r; ++i)
                              for (size_t j = 0; j < c; ++j)
                                  mask[i * c + j] = ((i + j) % 3 != 0 || j == 0) ? 1 : 0;
                          Tensor probs = masked_softmax_rows(in[0], mask);
                          return sum_all(mul(probs, in[0]));
                      }});
    checks.push_back({"mean_rows",
                      [dim](Pcg32& rng) {
                          size_t r = dim(rng), c = dim(rng);
                          return std::vector<Tensor>{rand_leaf({r, c}, rng)};
                      },
                      [](const std::vector<Tensor>& in) {
                          return sum_all(mul(mean_rows(in[0]), mean_rows(in[0])));
                      }});
    checks.push_back({"mean_all",
                      [dim](Pcg32& rng) { return std::vector<Tensor>{rand_leaf({dim(rng), dim(rng)}, rng)}; },
                      [](const std::vector<Tensor>& in) { return mean_all(mul(in[0], in[0])); }});
    checks.push_back({"l1_loss",
                      [dim](Pcg32& rng) {
                          size_t r = dim(rng), c = dim(rng);
                          return std::vector<Tensor>{rand_leaf({r, c}, rng), rand_leaf({r, c}, rng)};
                      },
                      [](const std::vector<Tensor>& in) { return l1_loss(in[0], in[1]); }});
    checks.push_back({"mse_loss",
                      [dim](Pcg32& rng) {
                          size_t r = dim(rng), c = dim(rng);
                          return std::vector<Tensor>{rand_leaf({r, c}, rng), rand_leaf({r, c}, rng)};
                      },
                      [](const std::vector<Tensor>& in) { return mse_loss(in[0], in[1]); }});
    checks.push_back({"attention",
                      [dim](Pcg32& rng) {
                          size_t r = 3, c = 4, d = dim(rng);
                          return std::vector<Tensor>{rand_leaf({r, d}, rng), rand_leaf({c, d}, rng),
                                                     rand_leaf({c, d}, rng)};
                      },
                      [](const std::vector<Tensor>& in) {
                          size_t r = in[0].shape()[0], c = in[1].shape()[0];
                          std::vector<uint8_t> mask(r * c, 0);
                          for (size_t i = 0; i < r; ++i)
                              for (size_t j = 0; j < c; ++j) mask[i * c + j] = (j <= i + 1) ? 1 : 0;
                          Tensor o = attention(in[0], in[1], in[2], mask);
                          return sum_all(mul(o, o));
                      }});
    return checks;
}

// ---------------------------------------------------------------------------
// full-policy checks via directional derivatives: one random direction per
// instance covers every parameter in the graph simultaneously
// ---------------------------------------------------------------------------

inline TrackWindow synthetic_window(size_t horizon, size_t np, Pcg32& rng) {
    TrackWindow w;
    w.t = 0;
    w.p_t.resize(np);
    for (auto& p : w.p_t) p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    w.delta.assign(horizon, std::vector<Vec3>(np));
    for (auto& row : w.delta)
        for (auto& p : row) p = {rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05),
                                 rng.uniform(-0.05, 0.05)};
    w.labels.resize(np);
    for (size_t j = 0; j < np; ++j) w.labels[j] = j % 2;
    w.actions.resize(horizon);
    for (auto& a : w.actions) {
        a.delta = {rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05)};
        a.gripper = rng.uniform();
    }
    w.observation.task_id = rng.below(3);
    w.observation.scene_features.resize(kObsDim);
    for (double& f : w.observation.scene_features) f = rng.uniform(-1, 1);
    for (double& f : w.observation.proprio) f = rng.uniform(-1, 1);
    w.abs.resize(horizon + 1);
    w.abs[0] = w.p_t;
    for (size_t h = 0; h < horizon; ++h) {
        w.abs[h + 1].resize(np);
        for (size_t j = 0; j < np; ++j) w.abs[h + 1][j] = w.abs[h][j] + w.delta[h][j];
    }
    w.p_end = w.abs[horizon];
    return w;
}

inline PolicyConfig tiny_policy_config(Arch arch) {
    PolicyConfig cfg;
    cfg.arch = arch;
    cfg.d = 8;
    cfg.n_heads = 2;
    cfg.n_blocks = 1;
    cfg.horizon = 2;
    cfg.np = 4;
    cfg.point_mlp_hidden = 8;
    cfg.fusion_hidden = 8;
    cfg.head_hidden = 8;
    return cfg;
}

// Checks d/dt L(theta + t u) at t = 0 against grad . u for a random unit
// direction u over all parameters jointly.
inline GradCheckResult run_policy_check(const PolicyConfig& cfg_in, size_t instances, uint64_t seed,
                                        double eps = 1e-5, double tol = 1e-5) {
    GradCheckResult res;
    res.name = std::string("policy_") + (cfg_in.arch == Arch::OFT ? "oft" : "expert");
    res.instances = instances;
    Pcg32 rng(seed, 0xda3e39cb94b95bdbULL);
    SupervisionVariant variant;
    for (size_t inst = 0; inst < instances; ++inst) {
        PolicyConfig cfg = cfg_in;
        Policy policy(cfg, seed * 1000 + inst);
        TrackWindow w = synthetic_window(cfg.horizon, cfg.np, rng);
        std::vector<const TrackWindow*> batch{&w};
        Pcg32 flow_frozen(seed + inst, 29);

        auto eval_loss = [&]() {
            Pcg32 fr = flow_frozen;  // same (eps, s) draw every evaluation
            return combined_loss(policy, batch, variant, 1.0, fr).total.item();
        };

        policy.params.zero_grad();
        {
            Pcg32 fr = flow_frozen;
            auto lb = combined_loss(policy, batch, variant, 1.0, fr);
            backward(lb.total);
        }

        // random direction, fixed per instance
        std::vector<std::vector<double>> dirs;
        double analytic = 0.0;
        for (const auto& name : policy.params.names()) {
            const Tensor& p = policy.params.at(name);
            std::vector<double> u(p.size());
            for (double& x : u) x = rng.normal();
            for (size_t i = 0; i < u.size(); ++i) analytic += p.grad()[i] * u[i];
            dirs.push_back(std::move(u));
        }
        auto shift = [&](double t) {
            size_t k = 0;
            for (const auto& name : policy.params.names()) {
                auto& d = policy.params.at(name).data();
                for (size_t i = 0; i < d.size(); ++i) d[i] += t * dirs[k][i];
                ++k;
            }
        };
        shift(eps);
        double fp = eval_loss();
        shift(-2 * eps);
        double fm = eval_loss();
        shift(eps);
        double fd = (fp - fm) / (2.0 * eps);
        res.max_rel_err = std::max(res.max_rel_err, detail::rel_err(analytic, fd));
    }
    res.pass = res.max_rel_err <= tol;
    return res;
}

// The full suite the CLI and the acceptance gate both run.
inline std::vector<GradCheckResult> run_gradient_suite(size_t op_instances = 100,
                                                       size_t policy_instances = 100,
                                                       uint64_t seed = 7) {
    std::vector<GradCheckResult> out;
    for (const auto& c : standard_op_checks()) out.push_back(run_op_check(c, op_instances, seed));
    out.push_back(run_policy_check(tiny_policy_config(Arch::OFT), policy_instances, seed));
    out.push_back(run_policy_check(tiny_policy_config(Arch::Expert), policy_instances, seed));
    return out;
}

}  // namespace pri4r
