#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "pri4r/policy.hpp"
#include "pri4r/supervision.hpp"

namespace pri4r {

struct TrainConfig {
    PolicyConfig policy;
    double omega_pt = 1.0;  // weight of the auxiliary point-track loss
    size_t np = 1024;
    size_t horizon = 8;
    double lr = 1e-3;
    size_t batch_size = 32;
    size_t steps = 2000;
    uint64_t seed = 0;
    SupervisionVariant variant;
    std::string dataset_path;
    size_t log_interval = 100;
    bool cosine_lr = false;
    double weight_decay = 0.0;
    // test hook: drop the head from the graph entirely (vs omega_pt = 0,
    // which keeps the head branch but weights it to zero)
    bool detach_head = false;
    size_t flow_steps = 10;  // sampler steps when evaluating
};

struct TrainLogRow {
    size_t step;
    double loss_total, loss_act, loss_pt;
    double eval_sr = -1.0;  // negative = not probed
    double wall_ms = 0.0;
};

struct ValPoint {
    size_t step;
    double val_act, val_pt;
};

struct TrainResult {
    std::unique_ptr<Policy> policy;
    std::vector<TrainLogRow> rows;
    std::vector<ValPoint> val;
    double final_val_act = 0.0, final_val_pt = 0.0;
};

struct LossBreakdown {
    Tensor total;
    double act, pt;
};

// L = L_act + omega_pt * L_pt, averaged over the batch. L_act is l1
// regression for OFT and the flow-matching velocity MSE for the Expert.
inline LossBreakdown combined_loss(const Policy& policy, const std::vector<const TrackWindow*>& batch,
                                   const SupervisionVariant& variant, double omega_pt, Pcg32& flow_rng,
                                   bool detach_head = false) {
    const PolicyConfig& cfg = policy.cfg;
    bool with_head = cfg.head_enabled && !detach_head;
    std::vector<Tensor> act_losses, pt_losses;
    for (const TrackWindow* w : batch) {
        if (w->actions.size() != cfg.horizon)
            throw std::runtime_error("combined_loss: window horizon mismatch");
        std::vector<double> act_data;
        act_data.reserve(cfg.horizon * cfg.action_dim);
        for (const auto& a : w->actions) {
            act_data.push_back(a.delta.x);
            act_data.push_back(a.delta.y);
            act_data.push_back(a.delta.z);
            act_data.push_back(a.gripper);
        }
        Tensor target_a = Tensor::leaf({cfg.horizon, cfg.action_dim}, act_data);

        // P_t for the backbone-token ablation rides the action path
        Tensor p_all;
        if (cfg.head_pt_input == PtInput::BackboneToken) {
            std::vector<size_t> all_idx(w->p_t.size());
            for (size_t j = 0; j < all_idx.size(); ++j) all_idx[j] = j;
            p_all = Tensor::leaf({w->p_t.size(), 3},
                                 normalized_points(w->p_t, all_idx, w->observation));
        }
        const Tensor* p_all_ptr = p_all.defined() ? &p_all : nullptr;

        Tensor z;
        if (cfg.arch == Arch::OFT) {
            auto out = policy.forward_oft(w->observation, p_all_ptr);
            act_losses.push_back(l1_loss(out.actions, target_a));
            z = out.z;
        } else {
            // one (eps, s) draw per record per step
            std::vector<double> eps(cfg.horizon * cfg.action_dim);
            for (double& e : eps) e = flow_rng.normal();
            double s = flow_rng.uniform();
            std::vector<double> xs(eps.size()), vt(eps.size());
            for (size_t i = 0; i < eps.size(); ++i) {
                xs[i] = (1.0 - s) * eps[i] + s * act_data[i];
                vt[i] = act_data[i] - eps[i];
            }
            Tensor noisy = Tensor::leaf({cfg.horizon, cfg.action_dim}, xs);
            Tensor v_target = Tensor::leaf({cfg.horizon, cfg.action_dim}, vt);
            auto out = policy.forward_expert(w->observation, noisy, s, with_head, p_all_ptr);
            act_losses.push_back(mse_loss(out.velocity, v_target));
            if (with_head) z = out.z;
        }

        if (with_head) {
            VariantTarget vt = make_variant(*w, variant);
            if (vt.out_dim != cfg.head_out_dim)
                throw std::runtime_error("combined_loss: head output dim " +
                                         std::to_string(cfg.head_out_dim) +
                                         " does not match variant target dim " +
                                         std::to_string(vt.out_dim));
            Tensor p_sub = Tensor::leaf({vt.point_idx.size(), 3},
                                        normalized_points(w->p_t, vt.point_idx, w->observation));
            Tensor pred = policy.predict_tracks(z, p_sub, vt.goal_only);
            Tensor target = Tensor::leaf(vt.shape, vt.values);
            pt_losses.push_back(l1_loss(pred, target));
        }
    }
    double inv_b = 1.0 / static_cast<double>(batch.size());
    Tensor l_act = scale(sum_of(act_losses), inv_b);
    LossBreakdown out{Tensor(), 0.0, 0.0};
    out.act = l_act.item();
    if (!pt_losses.empty()) {
        Tensor l_pt = scale(sum_of(pt_losses), inv_b);
        out.pt = l_pt.item();
        out.total = add(l_act, scale(l_pt, omega_pt));
    } else {
        out.total = l_act;
    }
    return out;
}

inline std::vector<TrackWindow> windows_from_episodes(const std::vector<Episode>& eps, size_t h,
                                                      size_t begin, size_t end) {
    std::vector<TrackWindow> out;
    for (size_t i = begin; i < end; ++i) {
        auto w = build_windows(eps[i], h, 1);
        out.insert(out.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
    }
    return out;
}

inline TrainResult train(const TrainConfig& cfg_in, const std::vector<Episode>& episodes,
                         const std::function<double(const Policy&, size_t)>& eval_probe = nullptr,
                         size_t eval_interval = 0) {
    TrainConfig cfg = cfg_in;
    if (cfg.omega_pt < 0) throw std::runtime_error("train: omega_pt must be >= 0");
    if (episodes.empty()) throw std::runtime_error("train: empty dataset");
    if (episodes[0].n_points() != cfg.np)
        throw std::runtime_error("train: config Np " + std::to_string(cfg.np) +
                                 " does not match dataset Np " +
                                 std::to_string(episodes[0].n_points()));
    cfg.policy.horizon = cfg.horizon;
    cfg.policy.np = cfg.np;

    // validation split: last 10% of episodes by seed order
    size_t n_val = std::max<size_t>(1, episodes.size() / 10);
    size_t n_train = episodes.size() > n_val ? episodes.size() - n_val : episodes.size();
    auto train_windows = windows_from_episodes(episodes, cfg.horizon, 0, n_train);
    auto val_windows = windows_from_episodes(episodes, cfg.horizon, n_train, episodes.size());
    if (train_windows.empty()) throw std::runtime_error("train: no training windows");

    TrainResult res;
    res.policy = std::make_unique<Policy>(cfg.policy, cfg.seed);
    Policy& policy = *res.policy;

    Pcg32 shuffle_rng(cfg.seed, 11);
    Pcg32 flow_rng(cfg.seed, 13);

    AdamConfig adam;
    adam.lr = cfg.lr;
    adam.weight_decay = cfg.weight_decay;

    auto validate = [&](size_t step_idx) {
        Pcg32 vrng(cfg.seed, 17);  // fixed stream so validation is comparable
        double va = 0, vp = 0;
        const auto& ws = val_windows.empty() ? train_windows : val_windows;
        size_t n = std::min<size_t>(ws.size(), 256);
        for (size_t i = 0; i < n; ++i) {
            std::vector<const TrackWindow*> one{&ws[i]};
            auto lb = combined_loss(policy, one, cfg.variant, cfg.omega_pt, vrng, cfg.detach_head);
            va += lb.act;
            vp += lb.pt;
        }
        res.val.push_back({step_idx, va / n, vp / n});
    };

    std::vector<size_t> order(train_windows.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    size_t cursor = order.size();  // force shuffle on first use

    auto t0 = std::chrono::steady_clock::now();
    validate(0);
    double acc_total = 0, acc_act = 0, acc_pt = 0;
    size_t acc_n = 0;
    for (size_t step_idx = 1; step_idx <= cfg.steps; ++step_idx) {
        std::vector<const TrackWindow*> batch;
        batch.reserve(cfg.batch_size);
        for (size_t b = 0; b < cfg.batch_size; ++b) {
            if (cursor >= order.size()) {
                // Fisher-Yates with the seeded stream
                for (size_t i = order.size(); i-- > 1;) {
                    size_t j = shuffle_rng.below(static_cast<uint32_t>(i + 1));
                    std::swap(order[i], order[j]);
                }
                cursor = 0;
            }
            batch.push_back(&train_windows[order[cursor++]]);
        }
        auto lb = combined_loss(policy, batch, cfg.variant, cfg.omega_pt, flow_rng, cfg.detach_head);
        double total = lb.total.item();
        if (!std::isfinite(total))
            throw std::runtime_error("train: non-finite loss at step " + std::to_string(step_idx));
        // parameters off the active graph (e.g. a detached head) still need
        // grads for the optimizer; they just receive zeros
        policy.params.zero_grad();
        backward(lb.total);
        if (cfg.cosine_lr)
            adam.lr = cfg.lr * 0.5 *
                      (1.0 + std::cos(M_PI * static_cast<double>(step_idx - 1) /
                                      static_cast<double>(cfg.steps)));
        policy.params.adam_step(adam);

        acc_total += total;
        acc_act += lb.act;
        acc_pt += lb.pt;
        ++acc_n;
        bool log_now = cfg.log_interval > 0 && (step_idx % cfg.log_interval == 0 || step_idx == cfg.steps);
        if (log_now) {
            TrainLogRow row;
            row.step = step_idx;
            row.loss_total = acc_total / acc_n;
            row.loss_act = acc_act / acc_n;
            row.loss_pt = acc_pt / acc_n;
            row.wall_ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - t0)
                              .count();
            if (eval_probe && eval_interval > 0 &&
                (step_idx % eval_interval == 0 || step_idx == cfg.steps))
                row.eval_sr = eval_probe(policy, step_idx);
            res.rows.push_back(row);
            acc_total = acc_act = acc_pt = 0;
            acc_n = 0;
            validate(step_idx);
        }
    }
    if (res.val.empty()) validate(cfg.steps);
    res.final_val_act = res.val.back().val_act;
    res.final_val_pt = res.val.back().val_pt;
    return res;
}

// real_wall=false zeroes the timing column so logs from equal-seed runs are
// byte-identical; timing stays available as an opt-in diagnostic
inline void write_train_log_csv(const std::vector<TrainLogRow>& rows, const std::string& path,
                                bool real_wall = true) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("train log: cannot open " + path);
    os << "step,loss_total,loss_act,loss_pt,eval_sr,wall_ms\n";
    char buf[512];
    for (const auto& r : rows) {
        double wall = real_wall ? r.wall_ms : 0.0;
        if (r.eval_sr >= 0)
            std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g,%.1f\n", r.step,
                          r.loss_total, r.loss_act, r.loss_pt, r.eval_sr, wall);
        else
            std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,,%.1f\n", r.step, r.loss_total,
                          r.loss_act, r.loss_pt, wall);
        os << buf;
    }
}

}  // namespace pri4r
