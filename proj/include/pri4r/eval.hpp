#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pri4r/trainer.hpp"

namespace pri4r {

struct RolloutResult {
    bool success = false;
    size_t steps = 0;
    std::string error;               // non-empty when marked failed by diagnostics
    std::vector<Action> executed;    // full action trace, for determinism checks
};

using ChunkProvider = std::function<std::vector<Action>(const Scene&, const Observation&)>;

// Closed-loop protocol: predict a chunk, execute all H actions, re-observe;
// success is checked after every single step.
inline RolloutResult rollout_with(const ChunkProvider& provider, TaskKind task, uint64_t seed,
                                  size_t max_steps = 200) {
    Pcg32 rng(seed, 0x9e3779b97f4a7c15ULL);  // same stream as the demo scripter
    Scene s = make_scene(task, rng);
    RolloutResult res;
    while (res.steps < max_steps) {
        Observation obs = observe(s);
        std::vector<Action> chunk = provider(s, obs);
        for (const Action& a : chunk) {
            if (!std::isfinite(a.delta.x) || !std::isfinite(a.delta.y) ||
                !std::isfinite(a.delta.z) || !std::isfinite(a.gripper)) {
                res.error = "non-finite action at step " + std::to_string(res.steps);
                return res;
            }
            step(s, a);
            res.executed.push_back(a);
            ++res.steps;
            if (success(s)) {
                res.success = true;
                return res;
            }
            if (res.steps >= max_steps) return res;
        }
    }
    return res;
}

// Wraps a policy as a chunk provider. BackboneToken policies receive the
// current privileged point set from the simulator state (the Table-IV-style
// trade-off: P_t on the action path means tracks are needed at inference).
inline RolloutResult rollout(const Policy& policy, TaskKind task, uint64_t seed,
                             size_t max_steps = 200, size_t flow_steps = 10) {
    std::shared_ptr<std::vector<SurfacePoint>> points;
    if (policy.cfg.head_pt_input == PtInput::BackboneToken) {
        Pcg32 env_rng(seed, 0x9e3779b97f4a7c15ULL);
        Scene init = make_scene(task, env_rng);
        std::vector<MeshInstance> instances;
        for (size_t i = 0; i < init.bodies.size(); ++i)
            instances.push_back({&init.bodies[i].mesh, init.bodies[i].pose(),
                                 init.bodies[i].is_robot ? PointLabel::Robot : PointLabel::Scene});
        Pcg32 sample_rng(seed, 0x7f4a7c159e3779b9ULL);
        points = std::make_shared<std::vector<SurfacePoint>>(sample_surface_points(
            instances, policy.cfg.np, init.gripper_pos, 1.0, 0.5, sample_rng));
    }
    auto sampler_rng = std::make_shared<Pcg32>(seed, 0x6a09e667f3bcc909ULL);
    ChunkProvider provider = [&policy, points, sampler_rng, flow_steps](const Scene& s,
                                                                        const Observation& obs) {
        Tensor p_t;
        const Tensor* p_ptr = nullptr;
        if (points) {
            std::vector<Vec3> cur;
            cur.reserve(points->size());
            for (const auto& sp : *points)
                cur.push_back(locate(sp, s.bodies[static_cast<size_t>(sp.body_id)].mesh,
                                     s.bodies[static_cast<size_t>(sp.body_id)].pose()));
            std::vector<size_t> idx(cur.size());
            for (size_t j = 0; j < idx.size(); ++j) idx[j] = j;
            p_t = Tensor::leaf({cur.size(), 3}, normalized_points(cur, idx, obs));
            p_ptr = &p_t;
        }
        std::vector<double> flat;
        if (policy.cfg.arch == Arch::OFT)
            flat = policy.forward_oft(obs, p_ptr).actions.data();
        else
            flat = policy.sample_actions_fm(obs, flow_steps, *sampler_rng, p_ptr);
        std::vector<Action> chunk(policy.cfg.horizon);
        for (size_t h = 0; h < policy.cfg.horizon; ++h) {
            chunk[h].delta = {flat[h * 4 + 0], flat[h * 4 + 1], flat[h * 4 + 2]};
            chunk[h].gripper = flat[h * 4 + 3];
        }
        return chunk;
    };
    return rollout_with(provider, task, seed, max_steps);
}

// Open-loop replay of the scripted expert, served chunk by chunk. On the
// matching environment seed this is a provably successful policy.
inline ChunkProvider scripted_provider(TaskKind task, uint64_t seed, size_t horizon) {
    auto actions = std::make_shared<std::vector<Action>>(script_demonstration(task, seed, 4).actions);
    auto cursor = std::make_shared<size_t>(0);
    return [actions, cursor, horizon](const Scene&, const Observation&) {
        std::vector<Action> chunk;
        for (size_t h = 0; h < horizon; ++h) {
            if (*cursor < actions->size()) chunk.push_back((*actions)[(*cursor)++]);
            else chunk.push_back(Action{{0, 0, 0}, 1.0});
        }
        return chunk;
    };
}

// --------------------------------------------------------------------------
// ablation harness
// --------------------------------------------------------------------------

enum class AblationAxis { Supervision, PtInput, EmbedVariant, Weight, PointCount, Method };

inline const char* axis_name(AblationAxis a) {
    switch (a) {
        case AblationAxis::Supervision: return "supervision";
        case AblationAxis::PtInput: return "pt_input";
        case AblationAxis::EmbedVariant: return "embed_variant";
        case AblationAxis::Weight: return "weight";
        case AblationAxis::PointCount: return "point_count";
        case AblationAxis::Method: return "method";
    }
    return "?";
}

inline AblationAxis axis_from_name(const std::string& s) {
    if (s == "supervision") return AblationAxis::Supervision;
    if (s == "pt_input") return AblationAxis::PtInput;
    if (s == "embed_variant") return AblationAxis::EmbedVariant;
    if (s == "weight") return AblationAxis::Weight;
    if (s == "point_count") return AblationAxis::PointCount;
    if (s == "method") return AblationAxis::Method;
    throw std::runtime_error("unknown ablation axis: " + s);
}

struct AblationSpec {
    AblationAxis axis = AblationAxis::Weight;
    std::vector<std::string> values;
    std::vector<uint64_t> seeds;       // >= 5 for reported comparisons
    std::vector<TaskKind> tasks;
    Arch arch = Arch::OFT;
    size_t episodes = 32;
    size_t steps = 300;
    size_t batch = 8;
    size_t np = 64;
    size_t horizon = 8;
    size_t trials = 50;
    size_t max_steps = 200;
    size_t flow_steps = 10;
    double lr = 1e-3;
    double omega_pt = 1.0;
    size_t policy_d = 64;
    size_t n_blocks = 2;
};

struct ResultRow {
    std::string axis, value, seed;  // seed is "mean"/"std" on summary rows
    std::string task;
    size_t successes = 0, trials = 0;
    double success_rate = 0.0;
    double final_loss_pt = 0.0, final_loss_act = 0.0;
    std::string error;
    bool is_summary = false;
};

inline const std::vector<std::string>& result_csv_columns() {
    static const std::vector<std::string> cols = {
        "axis", "value", "seed", "task", "successes", "trials", "success_rate",
        "final_loss_pt", "final_loss_act", "error"};
    return cols;
}

inline void write_result_csv(const std::vector<ResultRow>& rows, std::ostream& os) {
    const auto& cols = result_csv_columns();
    for (size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
    os << "\n";
    char buf[256];
    for (const auto& r : rows) {
        os << r.axis << "," << r.value << "," << r.seed << "," << r.task << ",";
        if (!r.is_summary) os << r.successes << "," << r.trials;
        else os << ",";
        std::snprintf(buf, sizeof(buf), ",%.17g,%.17g,%.17g,", r.success_rate, r.final_loss_pt,
                      r.final_loss_act);
        os << buf << r.error << "\n";
    }
}

// minimal CSV reader (no quoting; our writers never emit quoted fields)
inline std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("csv: cannot open " + path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.push_back("");
        rows.push_back(std::move(cells));
    }
    return rows;
}

// Builds the TrainConfig for one ablation cell.
inline TrainConfig cell_config(const AblationSpec& spec, const std::string& value, uint64_t seed) {
    TrainConfig tc;
    tc.policy.arch = spec.arch;
    tc.policy.d = spec.policy_d;
    tc.policy.n_blocks = spec.n_blocks;
    tc.policy.head_enabled = true;
    tc.omega_pt = spec.omega_pt;
    tc.np = spec.np;
    tc.horizon = spec.horizon;
    tc.lr = spec.lr;
    tc.batch_size = spec.batch;
    tc.steps = spec.steps;
    tc.seed = seed;
    tc.log_interval = spec.steps;  // one validation point at the end
    tc.variant.kind = VariantKind::Full3D;

    switch (spec.axis) {
        case AblationAxis::Supervision:
            tc.variant.kind = variant_from_name(value);
            if (tc.variant.kind == VariantKind::Track2D) {
                tc.policy.head_out_dim = 2;
                tc.variant.camera.world_to_camera =
                    RigidTransform::translate({0.0, 0.0, 1.0});  // overhead-ish virtual camera
            }
            break;
        case AblationAxis::PtInput:
            tc.policy.head_pt_input = pt_input_from_name(value);
            break;
        case AblationAxis::EmbedVariant:
            tc.policy.arch = Arch::Expert;
            tc.policy.embed_variant = embed_variant_from_name(value);
            break;
        case AblationAxis::Weight:
            tc.omega_pt = std::stod(value);
            break;
        case AblationAxis::PointCount:
            tc.np = std::stoul(value);
            break;
        case AblationAxis::Method:
            if (value == "baseline") tc.policy.head_enabled = false;
            else if (value != "pri4r")
                throw std::runtime_error("method axis value must be baseline or pri4r, got " + value);
            break;
    }
    tc.policy.horizon = tc.horizon;
    tc.policy.np = tc.np;
    return tc;
}

// Full factorial over (value, seed, task). A failed cell produces an error
// row; the rest of the matrix still runs. Summary mean/std rows per
// (value, task) are appended at the end.
inline std::vector<ResultRow> run_ablation(const AblationSpec& spec) {
    if (spec.values.empty() || spec.seeds.empty() || spec.tasks.empty())
        throw std::runtime_error("run_ablation: values, seeds and tasks must be non-empty");
    std::vector<ResultRow> rows;
    // dataset cache keyed by (task, np); episode seeds derived from the task
    std::map<std::pair<uint32_t, size_t>, std::vector<Episode>> datasets;
    auto dataset_for = [&](TaskKind task, size_t np) -> const std::vector<Episode>& {
        auto key = std::make_pair(static_cast<uint32_t>(task), np);
        auto it = datasets.find(key);
        if (it != datasets.end()) return it->second;
        std::vector<Episode> eps;
        for (size_t i = 0; i < spec.episodes; ++i)
            eps.push_back(script_demonstration(task, 1000 + static_cast<uint64_t>(i) * 7919 +
                                                         static_cast<uint64_t>(task) * 104729,
                                               np));
        return datasets.emplace(key, std::move(eps)).first->second;
    };

    for (const auto& value : spec.values)
        for (TaskKind task : spec.tasks)
            for (uint64_t seed : spec.seeds) {
                ResultRow row;
                row.axis = axis_name(spec.axis);
                row.value = value;
                row.seed = std::to_string(seed);
                row.task = task_name(task);
                row.trials = spec.trials;
                try {
                    TrainConfig tc = cell_config(spec, value, seed);
                    const auto& eps = dataset_for(task, tc.np);
                    TrainResult tr = train(tc, eps);
                    size_t wins = 0;
                    for (size_t t = 0; t < spec.trials; ++t) {
                        auto rr = rollout(*tr.policy, task, 20000 + seed * 1000 + t, spec.max_steps,
                                          spec.flow_steps);
                        if (rr.success) ++wins;
                    }
                    row.successes = wins;
                    row.success_rate = static_cast<double>(wins) / static_cast<double>(spec.trials);
                    row.final_loss_pt = tr.final_val_pt;
                    row.final_loss_act = tr.final_val_act;
                } catch (const std::exception& e) {
                    row.error = e.what();
                }
                rows.push_back(std::move(row));
            }

    // summaries recomputed from the raw rows just written
    std::vector<ResultRow> summaries;
    for (const auto& value : spec.values)
        for (TaskKind task : spec.tasks) {
            std::vector<double> srs;
            for (const auto& r : rows)
                if (r.value == value && r.task == task_name(task) && r.error.empty())
                    srs.push_back(r.success_rate);
            if (srs.empty()) continue;
            double mean = 0;
            for (double v : srs) mean += v;
            mean /= static_cast<double>(srs.size());
            double var = 0;
            for (double v : srs) var += (v - mean) * (v - mean);
            double sd = srs.size() > 1 ? std::sqrt(var / static_cast<double>(srs.size() - 1)) : 0.0;
            ResultRow m;
            m.axis = axis_name(spec.axis);
            m.value = value;
            m.task = task_name(task);
            m.is_summary = true;
            m.seed = "mean";
            m.success_rate = mean;
            summaries.push_back(m);
            if (srs.size() > 1) {  // std is undefined for a single seed
                m.seed = "std";
                m.success_rate = sd;
                summaries.push_back(m);
            }
        }
    rows.insert(rows.end(), summaries.begin(), summaries.end());
    return rows;
}

inline bool any_cell_errored(const std::vector<ResultRow>& rows) {
    for (const auto& r : rows)
        if (!r.error.empty()) return true;
    return false;
}

}  // namespace pri4r
