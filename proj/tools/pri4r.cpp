// pri4r command-line tool: data generation, training, evaluation, ablations,
// gradient checking and artifact plumbing. All outputs are deterministic for
// fixed seeds; every path is explicit.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pri4r/pri4r.hpp"

using namespace pri4r;

namespace {

// seed precedence: --seed flag > P4R_SEED env > default
uint64_t resolve_seed(const CLI::Option* opt, uint64_t flag_value, uint64_t def) {
    if (opt->count() > 0) return flag_value;
    if (const char* env = std::getenv("P4R_SEED")) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw std::runtime_error(std::string("P4R_SEED is not an integer: ") + env);
        }
    }
    return def;
}

int cmd_gen_data(const std::string& task_str, size_t episodes, size_t np, uint64_t seed,
                 double robot_fraction, const std::string& out) {
    TaskKind task = task_from_name(task_str);
    std::vector<Episode> eps;
    eps.reserve(episodes);
    for (size_t i = 0; i < episodes; ++i)
        eps.push_back(script_demonstration(task, seed + i, np, robot_fraction));
    save_dataset(eps, out);
    std::printf("wrote %zu %s episodes (np=%zu) to %s\n", episodes, task_name(task), np,
                out.c_str());
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& ckpt_out,
              const std::string& log_out, bool cosine_lr, bool wall_clock) {
    std::ifstream is(config_path);
    if (!is) throw std::runtime_error("cannot open config " + config_path);
    nlohmann::json j;
    is >> j;
    TrainConfig cfg = train_config_from_json(j);
    cfg.cosine_lr = cosine_lr;
    auto eps = load_dataset(cfg.dataset_path);
    TrainResult res = train(cfg, eps);
    save_policy(*res.policy, ckpt_out);
    write_train_log_csv(res.rows, log_out, wall_clock);
    std::printf("trained %zu steps; final val loss_act=%.6g loss_pt=%.6g\n", cfg.steps,
                res.final_val_act, res.final_val_pt);
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& task_str, size_t trials, uint64_t seed,
             size_t max_steps, size_t flow_steps) {
    auto policy = load_policy(ckpt);
    TaskKind task = task_from_name(task_str);
    size_t wins = 0;
    for (size_t t = 0; t < trials; ++t)
        if (rollout(*policy, task, seed + t, max_steps, flow_steps).success) ++wins;
    std::printf("task=%s trials=%zu successes=%zu success_rate=%.17g\n", task_name(task), trials,
                wins, static_cast<double>(wins) / static_cast<double>(trials));
    return 0;
}

AblationSpec ablation_spec_from_json(const nlohmann::json& j) {
    AblationSpec spec;
    spec.axis = axis_from_name(j.at("axis").get<std::string>());
    for (const auto& v : j.at("values")) spec.values.push_back(v.get<std::string>());
    for (const auto& v : j.at("seeds")) spec.seeds.push_back(v.get<uint64_t>());
    for (const auto& v : j.at("tasks")) spec.tasks.push_back(task_from_name(v.get<std::string>()));
    if (j.contains("arch")) spec.arch = arch_from_name(j.at("arch").get<std::string>());
    if (j.contains("episodes")) spec.episodes = j.at("episodes").get<size_t>();
    if (j.contains("steps")) spec.steps = j.at("steps").get<size_t>();
    if (j.contains("batch")) spec.batch = j.at("batch").get<size_t>();
    if (j.contains("np")) spec.np = j.at("np").get<size_t>();
    if (j.contains("horizon")) spec.horizon = j.at("horizon").get<size_t>();
    if (j.contains("trials")) spec.trials = j.at("trials").get<size_t>();
    if (j.contains("max_steps")) spec.max_steps = j.at("max_steps").get<size_t>();
    if (j.contains("flow_steps")) spec.flow_steps = j.at("flow_steps").get<size_t>();
    if (j.contains("lr")) spec.lr = j.at("lr").get<double>();
    if (j.contains("omega_pt")) spec.omega_pt = j.at("omega_pt").get<double>();
    if (j.contains("policy_d")) spec.policy_d = j.at("policy_d").get<size_t>();
    if (j.contains("n_blocks")) spec.n_blocks = j.at("n_blocks").get<size_t>();
    return spec;
}

int cmd_ablate(const std::string& spec_path, const std::string& out_csv) {
    std::ifstream is(spec_path);
    if (!is) throw std::runtime_error("cannot open ablation spec " + spec_path);
    nlohmann::json j;
    is >> j;
    AblationSpec spec = ablation_spec_from_json(j);
    auto rows = run_ablation(spec);
    std::ofstream os(out_csv);
    if (!os) throw std::runtime_error("cannot open " + out_csv + " for writing");
    write_result_csv(rows, os);
    size_t errs = 0;
    for (const auto& r : rows)
        if (!r.error.empty()) ++errs;
    std::printf("wrote %zu rows to %s (%zu cell errors)\n", rows.size(), out_csv.c_str(), errs);
    return errs == 0 ? 0 : 1;
}

int cmd_gradcheck(size_t op_instances, size_t policy_instances, uint64_t seed) {
    auto results = run_gradient_suite(op_instances, policy_instances, seed);
    bool all_pass = true;
    for (const auto& r : results) {
        std::printf("%-22s instances=%zu max_rel_err=%.3e %s\n", r.name.c_str(), r.instances,
                    r.max_rel_err, r.pass ? "pass" : "FAIL");
        all_pass = all_pass && r.pass;
    }
    return all_pass ? 0 : 1;
}

int cmd_strip(const std::string& in, const std::string& out) {
    auto policy = load_policy(in);
    auto stripped = strip_head(*policy);
    save_policy(*stripped, out);
    std::printf("stripped %zu -> %zu parameters; wrote %s\n", policy->params.total_scalars(),
                stripped->params.total_scalars(), out.c_str());
    return 0;
}

int cmd_export_plots(const std::vector<std::string>& csvs, const std::vector<std::string>& labels,
                     const std::string& xcol, const std::string& ycol, const std::string& title,
                     const std::string& out) {
    if (!labels.empty() && labels.size() != csvs.size())
        throw std::runtime_error("--label count must match --csv count");
    std::vector<Series> series;
    for (size_t i = 0; i < csvs.size(); ++i) {
        auto rows = read_csv(csvs[i]);
        if (rows.size() < 2) throw std::runtime_error("csv has no data rows: " + csvs[i]);
        const auto& header = rows[0];
        auto find_col = [&](const std::string& name) {
            for (size_t c = 0; c < header.size(); ++c)
                if (header[c] == name) return c;
            throw std::runtime_error("column '" + name + "' not in " + csvs[i]);
        };
        size_t xc = find_col(xcol), yc = find_col(ycol);
        Series s;
        s.label = i < labels.size() ? labels[i] : csvs[i];
        for (size_t r = 1; r < rows.size(); ++r) {
            if (xc >= rows[r].size() || yc >= rows[r].size()) continue;
            if (rows[r][xc].empty() || rows[r][yc].empty()) continue;  // unprobed cells
            s.points.emplace_back(std::stod(rows[r][xc]), std::stod(rows[r][yc]));
        }
        if (s.points.empty())
            throw std::runtime_error("no plottable (" + xcol + "," + ycol + ") rows in " + csvs[i]);
        series.push_back(std::move(s));
    }
    write_svg(render_line_chart(series, title, xcol, ycol), out);
    std::printf("wrote %s\n", out.c_str());
    return 0;
}

int cmd_validate_tracks(const std::string& path) {
    ExternalTracks et = import_external_tracks(path);
    std::printf("ok: %zu frames, %zu points\n", et.tracks.size(), et.labels.size());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Privileged 3D point-track supervision for behavior-cloned policies"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate a scripted demonstration dataset (P4RD)");
    std::string g_task = "drawer", g_out = "dataset.p4rd";
    size_t g_eps = 200, g_np = 1024;
    uint64_t g_seed = 0;
    double g_rf = 0.5;
    gen->add_option("--task", g_task, "Task: drawer|door|pickplace")->capture_default_str();
    gen->add_option("--episodes", g_eps, "Number of episodes")->capture_default_str();
    gen->add_option("--np", g_np, "Tracked points per episode")->capture_default_str();
    auto* g_seed_opt = gen->add_option("--seed", g_seed, "Base seed (episode i uses seed+i)");
    g_seed_opt->capture_default_str();
    gen->add_option("--robot-fraction", g_rf, "Fraction of points on the robot body")
        ->capture_default_str();
    gen->add_option("--out", g_out, "Output dataset path")->capture_default_str();

    // train
    auto* tr = app.add_subcommand("train", "Train a policy from a JSON config");
    std::string t_config, t_ckpt = "policy.p4rk", t_log = "train_log.csv";
    bool t_cosine = false, t_wall = false;
    tr->add_option("--config", t_config, "Train config JSON path")->required();
    tr->add_option("--out", t_ckpt, "Output checkpoint path (config sidecar at <out>.json)")
        ->capture_default_str();
    tr->add_option("--log", t_log, "Output training-log CSV path")->capture_default_str();
    tr->add_flag("--cosine-lr", t_cosine, "Cosine learning-rate decay (default: constant lr)");
    tr->add_flag("--wall-clock", t_wall,
                 "Record real wall time in the log (breaks byte-reproducibility)");

    // eval
    auto* ev = app.add_subcommand("eval", "Closed-loop success rate of a checkpoint");
    std::string e_ckpt, e_task = "drawer";
    size_t e_trials = 50, e_max = 200, e_flow = 10;
    uint64_t e_seed = 0;
    ev->add_option("--checkpoint", e_ckpt, "Checkpoint path")->required();
    ev->add_option("--task", e_task, "Task: drawer|door|pickplace")->capture_default_str();
    ev->add_option("--trials", e_trials, "Rollout trials")->capture_default_str();
    auto* e_seed_opt = ev->add_option("--seed", e_seed, "Base rollout seed (trial t uses seed+t)");
    e_seed_opt->capture_default_str();
    ev->add_option("--max-steps", e_max, "Control-step budget per rollout")->capture_default_str();
    ev->add_option("--flow-steps", e_flow, "Euler steps for the flow-matching sampler")
        ->capture_default_str();

    // ablate
    auto* ab = app.add_subcommand("ablate", "Run an ablation matrix from a JSON spec");
    std::string a_spec, a_out = "ablation.csv";
    ab->add_option("--spec", a_spec, "Ablation spec JSON path")->required();
    ab->add_option("--out", a_out, "Output results CSV path")->capture_default_str();

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
    size_t gc_op = 100, gc_pol = 100;
    uint64_t gc_seed = 7;
    gc->add_option("--op-instances", gc_op, "Random instances per op check")->capture_default_str();
    gc->add_option("--policy-instances", gc_pol, "Random instances per policy check")
        ->capture_default_str();
    auto* gc_seed_opt = gc->add_option("--seed", gc_seed, "Suite seed");
    gc_seed_opt->capture_default_str();

    // strip
    auto* st = app.add_subcommand("strip", "Discard the point-track head from a checkpoint");
    std::string s_in, s_out;
    st->add_option("--in", s_in, "Input checkpoint path")->required();
    st->add_option("--out", s_out, "Output checkpoint path")->required();

    // export-plots
    auto* ep = app.add_subcommand("export-plots", "Render CSV columns as a deterministic SVG chart");
    std::vector<std::string> p_csvs, p_labels;
    std::string p_x = "step", p_y = "loss_total", p_title = "training curves", p_out = "plot.svg";
    ep->add_option("--csv", p_csvs, "Input CSV path (repeatable)")->required();
    ep->add_option("--label", p_labels, "Series label per CSV (repeatable)");
    ep->add_option("--x", p_x, "X column name")->capture_default_str();
    ep->add_option("--y", p_y, "Y column name")->capture_default_str();
    ep->add_option("--title", p_title, "Chart title")->capture_default_str();
    ep->add_option("--out", p_out, "Output SVG path")->capture_default_str();

    // validate-tracks
    auto* vt = app.add_subcommand("validate-tracks", "Validate an external track file (P4RT)");
    std::string v_in;
    vt->add_option("--in", v_in, "Track file path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;  // usage errors exit 2, --help exits 0
    }

    try {
        if (gen->parsed())
            return cmd_gen_data(g_task, g_eps, g_np, resolve_seed(g_seed_opt, g_seed, 0), g_rf,
                                g_out);
        if (tr->parsed()) return cmd_train(t_config, t_ckpt, t_log, t_cosine, t_wall);
        if (ev->parsed())
            return cmd_eval(e_ckpt, e_task, e_trials, resolve_seed(e_seed_opt, e_seed, 0), e_max,
                            e_flow);
        if (ab->parsed()) return cmd_ablate(a_spec, a_out);
        if (gc->parsed())
            return cmd_gradcheck(gc_op, gc_pol, resolve_seed(gc_seed_opt, gc_seed, 7));
        if (st->parsed()) return cmd_strip(s_in, s_out);
        if (ep->parsed()) return cmd_export_plots(p_csvs, p_labels, p_x, p_y, p_title, p_out);
        if (vt->parsed()) return cmd_validate_tracks(v_in);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
