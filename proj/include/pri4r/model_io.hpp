#pragma once

#include <algorithm>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pri4r/checkpoint.hpp"
#include "pri4r/trainer.hpp"

namespace pri4r {

inline nlohmann::json config_to_json(const PolicyConfig& c) {
    return nlohmann::json{{"arch", arch_name(c.arch)},
                          {"d", c.d},
                          {"horizon", c.horizon},
                          {"np", c.np},
                          {"action_dim", c.action_dim},
                          {"embed_variant", embed_variant_name(c.embed_variant)},
                          {"head_enabled", c.head_enabled},
                          {"head_pt_input", pt_input_name(c.head_pt_input)},
                          {"n_blocks", c.n_blocks},
                          {"n_heads", c.n_heads},
                          {"n_tasks", c.n_tasks},
                          {"obs_dim", c.obs_dim},
                          {"proprio_dim", c.proprio_dim},
                          {"head_out_dim", c.head_out_dim},
                          {"point_mlp_hidden", c.point_mlp_hidden},
                          {"fusion_hidden", c.fusion_hidden},
                          {"head_hidden", c.head_hidden}};
}

inline PolicyConfig config_from_json(const nlohmann::json& j) {
    PolicyConfig c;
    c.arch = arch_from_name(j.at("arch").get<std::string>());
    c.d = j.at("d").get<size_t>();
    c.horizon = j.at("horizon").get<size_t>();
    c.np = j.at("np").get<size_t>();
    c.action_dim = j.at("action_dim").get<size_t>();
    c.embed_variant = embed_variant_from_name(j.at("embed_variant").get<std::string>());
    c.head_enabled = j.at("head_enabled").get<bool>();
    c.head_pt_input = pt_input_from_name(j.at("head_pt_input").get<std::string>());
    c.n_blocks = j.at("n_blocks").get<size_t>();
    c.n_heads = j.at("n_heads").get<size_t>();
    c.n_tasks = j.at("n_tasks").get<size_t>();
    c.obs_dim = j.at("obs_dim").get<size_t>();
    c.proprio_dim = j.at("proprio_dim").get<size_t>();
    c.head_out_dim = j.at("head_out_dim").get<size_t>();
    c.point_mlp_hidden = j.at("point_mlp_hidden").get<size_t>();
    c.fusion_hidden = j.at("fusion_hidden").get<size_t>();
    c.head_hidden = j.at("head_hidden").get<size_t>();
    c.validate();
    return c;
}

inline std::string sidecar_path(const std::string& ckpt_path) { return ckpt_path + ".json"; }

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
    return nlohmann::json{{"policy", config_to_json(c.policy)},
                          {"omega_pt", c.omega_pt},
                          {"np", c.np},
                          {"horizon", c.horizon},
                          {"lr", c.lr},
                          {"batch_size", c.batch_size},
                          {"steps", c.steps},
                          {"seed", c.seed},
                          {"variant", variant_name(c.variant.kind)},
                          {"dataset", c.dataset_path},
                          {"log_interval", c.log_interval}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    static const std::vector<std::string> known = {"policy", "omega_pt",  "np",      "horizon",
                                                   "lr",     "batch_size", "steps",  "seed",
                                                   "variant", "dataset",   "log_interval"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            throw std::runtime_error("train config: unknown field '" + it.key() + "'");
    TrainConfig c;
    c.policy = config_from_json(j.at("policy"));
    c.omega_pt = j.at("omega_pt").get<double>();
    c.np = j.at("np").get<size_t>();
    c.horizon = j.at("horizon").get<size_t>();
    c.lr = j.at("lr").get<double>();
    c.batch_size = j.at("batch_size").get<size_t>();
    c.steps = j.at("steps").get<size_t>();
    c.seed = j.at("seed").get<uint64_t>();
    c.variant.kind = variant_from_name(j.at("variant").get<std::string>());
    if (c.variant.kind == VariantKind::Track2D) {
        c.policy.head_out_dim = 2;
        c.variant.camera.world_to_camera = RigidTransform::translate({0.0, 0.0, 1.0});
    }
    c.dataset_path = j.at("dataset").get<std::string>();
    c.log_interval = j.at("log_interval").get<size_t>();
    if (c.omega_pt < 0) throw std::runtime_error("train config: omega_pt must be >= 0");
    return c;
}

// weights to <path> (P4RK), config to <path>.json
inline void save_policy(const Policy& policy, const std::string& path) {
    save_checkpoint(policy.params, path);
    std::ofstream os(sidecar_path(path));
    if (!os) throw std::runtime_error("policy: cannot open " + sidecar_path(path) + " for writing");
    os << config_to_json(policy.cfg).dump(2) << "\n";
    if (!os) throw std::runtime_error("policy: write failed for " + sidecar_path(path));
}

inline std::unique_ptr<Policy> load_policy(const std::string& path) {
    std::ifstream is(sidecar_path(path));
    if (!is) throw std::runtime_error("policy: missing config sidecar " + sidecar_path(path));
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("policy: bad config sidecar " + sidecar_path(path) + ": " + e.what());
    }
    auto policy = std::make_unique<Policy>(config_from_json(j), 0);
    auto entries = load_checkpoint(path);
    // the entry set must match the config's parameter set exactly
    if (entries.size() != policy->params.count())
        throw std::runtime_error("policy: checkpoint has " + std::to_string(entries.size()) +
                                 " parameters, config expects " +
                                 std::to_string(policy->params.count()));
    restore_params(policy->params, entries);
    return policy;
}

// Removes the point-track head (and its embedding module) from a trained
// policy, leaving the action path untouched. BackboneToken policies cannot be
// stripped: their P_t tokens feed the backbone, so the action path itself
// depends on tracks at inference.
inline std::unique_ptr<Policy> strip_head(const Policy& policy) {
    if (!policy.cfg.head_enabled) throw std::runtime_error("strip: policy has no head to strip");
    if (policy.cfg.head_pt_input == PtInput::BackboneToken)
        throw std::runtime_error(
            "strip: point tokens feed the backbone in this configuration; the action path "
            "depends on P_t at inference, so the head cannot be discarded");
    PolicyConfig cfg = policy.cfg;
    cfg.head_enabled = false;
    auto stripped = std::make_unique<Policy>(cfg, 0);
    for (const auto& name : stripped->params.names()) {
        if (is_head_param(name))
            throw std::runtime_error("strip: head parameter " + name + " in head-disabled policy");
        stripped->params.load_values(name, policy.params.at(name).data());
    }
    return stripped;
}

}  // namespace pri4r
