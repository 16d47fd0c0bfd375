#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pri4r/nn.hpp"
#include "pri4r/rng.hpp"
#include "pri4r/tensor.hpp"
#include "pri4r/toyworld.hpp"

namespace pri4r {

enum class Arch : uint8_t { OFT = 0, Expert = 1 };
enum class EmbedVariant : uint8_t {
    CrossAttnQueries = 0,       // external learnable-query cross-attention module
    PointExpert = 1,            // second expert with its own weights in the shared attention
    BackboneQuery = 2,          // extra backbone tokens, masked away from action tokens
    BackboneQueryAttendAction = 3
};
enum class PtInput : uint8_t { HeadOnly = 0, BackboneToken = 1, None = 2 };

inline const char* arch_name(Arch a) { return a == Arch::OFT ? "oft" : "expert"; }
inline Arch arch_from_name(const std::string& s) {
    if (s == "oft") return Arch::OFT;
    if (s == "expert") return Arch::Expert;
    throw std::runtime_error("unknown arch: " + s);
}

inline const char* embed_variant_name(EmbedVariant v) {
    switch (v) {
        case EmbedVariant::CrossAttnQueries: return "cross_attn_queries";
        case EmbedVariant::PointExpert: return "point_expert";
        case EmbedVariant::BackboneQuery: return "backbone_query";
        case EmbedVariant::BackboneQueryAttendAction: return "backbone_query_attend_action";
    }
    return "?";
}
inline EmbedVariant embed_variant_from_name(const std::string& s) {
    if (s == "cross_attn_queries") return EmbedVariant::CrossAttnQueries;
    if (s == "point_expert") return EmbedVariant::PointExpert;
    if (s == "backbone_query") return EmbedVariant::BackboneQuery;
    if (s == "backbone_query_attend_action") return EmbedVariant::BackboneQueryAttendAction;
    throw std::runtime_error("unknown embed variant: " + s);
}

inline const char* pt_input_name(PtInput p) {
    switch (p) {
        case PtInput::HeadOnly: return "head_only";
        case PtInput::BackboneToken: return "backbone_token";
        case PtInput::None: return "none";
    }
    return "?";
}
inline PtInput pt_input_from_name(const std::string& s) {
    if (s == "head_only") return PtInput::HeadOnly;
    if (s == "backbone_token") return PtInput::BackboneToken;
    if (s == "none") return PtInput::None;
    throw std::runtime_error("unknown pt input mode: " + s);
}

struct PolicyConfig {
    Arch arch = Arch::OFT;
    size_t d = 64;
    size_t horizon = 8;
    size_t np = 1024;
    size_t action_dim = kActionDim;
    EmbedVariant embed_variant = EmbedVariant::CrossAttnQueries;
    bool head_enabled = true;
    PtInput head_pt_input = PtInput::HeadOnly;
    size_t n_blocks = 2;
    size_t n_heads = 4;
    size_t n_tasks = 3;
    size_t obs_dim = kObsDim;
    size_t proprio_dim = kProprioDim;
    size_t head_out_dim = 3;  // 2 for the projected-2D supervision variant
    size_t point_mlp_hidden = 64;
    size_t fusion_hidden = 128;
    size_t head_hidden = 64;  // action / velocity head hidden width

    void validate() const {
        if (d % n_heads != 0) throw std::runtime_error("PolicyConfig: d must divide into n_heads");
        if (head_enabled && arch == Arch::OFT && embed_variant != EmbedVariant::CrossAttnQueries)
            throw std::runtime_error(
                "PolicyConfig: embedding-module variants require the Expert architecture");
        if (horizon < 1 || action_dim < 1) throw std::runtime_error("PolicyConfig: bad dimensions");
    }
};

namespace detail {

// one contiguous run of tokens sharing a weight set
struct TokenSegment {
    Tensor x;             // [rows, d]
    std::string wprefix;  // parameter prefix for this segment's weights
    size_t rows;
};

// mask[i*n+j]: may row-block of segment si attend column-block of segment sj
inline std::vector<uint8_t> build_mask(const std::vector<TokenSegment>& segs,
                                       const std::vector<std::vector<uint8_t>>& allowed) {
    size_t total = 0;
    for (const auto& s : segs) total += s.rows;
    std::vector<uint8_t> mask(total * total, 0);
    size_t ro = 0;
    for (size_t si = 0; si < segs.size(); ++si) {
        size_t co = 0;
        for (size_t sj = 0; sj < segs.size(); ++sj) {
            if (allowed[si][sj])
                for (size_t i = 0; i < segs[si].rows; ++i)
                    for (size_t j = 0; j < segs[sj].rows; ++j)
                        mask[(ro + i) * total + (co + j)] = 1;
            co += segs[sj].rows;
        }
        ro += segs[si].rows;
    }
    return mask;
}

}  // namespace detail

// The policy: a small transformer backbone shared by both integration styles,
// an action component (regression head or flow-matching expert), and the
// optional privileged point-track head with its embedding machinery.
class Policy {
public:
    PolicyConfig cfg;
    ParamStore params;

    Policy(PolicyConfig config, uint64_t seed) : cfg(config) {
        cfg.validate();
        Pcg32 rng(seed, 0x2545f4914f6cdd1dULL);
        build_params(rng);
    }

    // ---- construction ----------------------------------------------------

    void build_params(Pcg32& rng) {
        size_t d = cfg.d;
        make_linear(params, "backbone.tok_scene", cfg.obs_dim, d, rng);
        params.create_fan_in("backbone.tok_task", {cfg.n_tasks, d}, d, rng);
        if (cfg.arch == Arch::OFT) {
            make_linear(params, "backbone.tok_proprio", cfg.proprio_dim, d, rng);
            params.create_fan_in("backbone.action_query", {cfg.horizon, d}, d, rng);
        }
        if (cfg.head_pt_input == PtInput::BackboneToken)
            make_linear(params, "backbone.tok_point", 3, d, rng);
        for (size_t b = 0; b < cfg.n_blocks; ++b) make_block("backbone", b, rng);

        if (cfg.arch == Arch::OFT) {
            make_linear(params, "action_head.l1", d, cfg.head_hidden, rng);
            make_linear(params, "action_head.l2", cfg.head_hidden, cfg.action_dim, rng, true);
        } else {
            make_linear(params, "expert.tok_proprio", cfg.proprio_dim, d, rng);
            make_linear(params, "expert.tok_chunk", cfg.action_dim, d, rng);
            make_linear(params, "expert.tok_time", 1, d, rng);
            for (size_t b = 0; b < cfg.n_blocks; ++b) make_block("expert", b, rng);
            make_linear(params, "expert.vel_head.l1", d, cfg.head_hidden, rng);
            make_linear(params, "expert.vel_head.l2", cfg.head_hidden, cfg.action_dim, rng, true);
        }

        if (cfg.head_enabled) {
            if (cfg.head_pt_input == PtInput::None)
                params.create_fan_in("head.point_token", {1, d}, d, rng);
            else {
                make_linear(params, "head.point_mlp.l1", 3, cfg.point_mlp_hidden, rng);
                make_linear(params, "head.point_mlp.l2", cfg.point_mlp_hidden, d, rng);
            }
            make_linear(params, "head.fusion.l1", 2 * d, cfg.fusion_hidden, rng);
            make_linear(params, "head.fusion.l2", cfg.fusion_hidden, cfg.head_out_dim, rng, true);

            if (cfg.arch == Arch::Expert) {
                params.create_fan_in("embed.queries", {cfg.horizon, d}, d, rng);
                if (cfg.embed_variant == EmbedVariant::CrossAttnQueries) {
                    make_linear(params, "embed.cross.wq", d, d, rng);
                    make_linear(params, "embed.cross.wk", d, d, rng);
                    make_linear(params, "embed.cross.wv", d, d, rng);
                    make_linear(params, "embed.cross.wo", d, d, rng);
                    make_linear(params, "embed.cross.mlp1", d, 4 * d, rng);
                    make_linear(params, "embed.cross.mlp2", 4 * d, d, rng);
                } else if (cfg.embed_variant == EmbedVariant::PointExpert) {
                    for (size_t b = 0; b < cfg.n_blocks; ++b) make_block("embed.ptexpert", b, rng);
                }
            }
        }
    }

    void make_block(const std::string& prefix, size_t b, Pcg32& rng) {
        size_t d = cfg.d;
        std::string base = prefix + ".blk" + std::to_string(b);
        make_linear(params, base + ".wq", d, d, rng);
        make_linear(params, base + ".wk", d, d, rng);
        make_linear(params, base + ".wv", d, d, rng);
        make_linear(params, base + ".wo", d, d, rng);
        make_linear(params, base + ".mlp1", d, 4 * d, rng);
        make_linear(params, base + ".mlp2", 4 * d, d, rng);
    }

    // ---- transformer core ------------------------------------------------

    // Runs all blocks over the concatenated segments under the given
    // block-level attention rule; returns the final hidden states per segment.
    std::vector<Tensor> run_blocks(std::vector<detail::TokenSegment> segs,
                                   const std::vector<std::vector<uint8_t>>& allowed) const {
        auto mask = detail::build_mask(segs, allowed);
        size_t total = 0;
        for (const auto& s : segs) total += s.rows;
        size_t dh = cfg.d / cfg.n_heads;
        for (size_t b = 0; b < cfg.n_blocks; ++b) {
            std::vector<Tensor> qs, ks, vs;
            for (const auto& s : segs) {
                std::string base = s.wprefix + ".blk" + std::to_string(b);
                qs.push_back(bind_linear(const_cast<ParamStore&>(params), base + ".wq")(s.x));
                ks.push_back(bind_linear(const_cast<ParamStore&>(params), base + ".wk")(s.x));
                vs.push_back(bind_linear(const_cast<ParamStore&>(params), base + ".wv")(s.x));
            }
            Tensor q = segs.size() == 1 ? qs[0] : concat_rows(qs);
            Tensor k = segs.size() == 1 ? ks[0] : concat_rows(ks);
            Tensor v = segs.size() == 1 ? vs[0] : concat_rows(vs);
            std::vector<Tensor> head_outs;
            for (size_t h = 0; h < cfg.n_heads; ++h) {
                Tensor qh = col_slice(q, h * dh, (h + 1) * dh);
                Tensor kh = col_slice(k, h * dh, (h + 1) * dh);
                Tensor vh = col_slice(v, h * dh, (h + 1) * dh);
                head_outs.push_back(attention(qh, kh, vh, mask));
            }
            Tensor attn = cfg.n_heads == 1 ? head_outs[0] : concat_cols(head_outs);
            size_t off = 0;
            for (auto& s : segs) {
                std::string base = s.wprefix + ".blk" + std::to_string(b);
                Tensor rows = segs.size() == 1 ? attn : row_slice(attn, off, off + s.rows);
                Tensor y = add(s.x, bind_linear(const_cast<ParamStore&>(params), base + ".wo")(rows));
                Tensor m = bind_linear(const_cast<ParamStore&>(params), base + ".mlp2")(
                    gelu(bind_linear(const_cast<ParamStore&>(params), base + ".mlp1")(y)));
                s.x = add(y, m);
                off += s.rows;
            }
        }
        std::vector<Tensor> out;
        for (auto& s : segs) out.push_back(s.x);
        return out;
    }

    // ---- token assembly --------------------------------------------------

    Tensor obs_tensor(const Observation& obs) const {
        return Tensor::leaf({1, cfg.obs_dim},
                            std::vector<double>(obs.scene_features.begin(), obs.scene_features.end()));
    }
    Tensor proprio_tensor(const Observation& obs) const {
        return Tensor::leaf({1, cfg.proprio_dim},
                            std::vector<double>(obs.proprio.begin(), obs.proprio.end()));
    }

    // scene + task (+ optional P_t tokens): the "image and language" block
    Tensor prefix_tokens(const Observation& obs, const Tensor* p_t, bool include_proprio) const {
        auto& ps = const_cast<ParamStore&>(params);
        std::vector<Tensor> toks;
        toks.push_back(bind_linear(ps, "backbone.tok_scene")(obs_tensor(obs)));
        if (obs.task_id >= cfg.n_tasks)
            throw std::runtime_error("policy: task id " + std::to_string(obs.task_id) +
                                     " out of range for config");
        toks.push_back(row_select(ps.at("backbone.tok_task"), obs.task_id));
        if (include_proprio)
            toks.push_back(bind_linear(ps, "backbone.tok_proprio")(proprio_tensor(obs)));
        if (cfg.head_pt_input == PtInput::BackboneToken) {
            if (p_t == nullptr)
                throw std::runtime_error("policy: BackboneToken config requires P_t at every forward");
            toks.push_back(bind_linear(ps, "backbone.tok_point")(*p_t));
        }
        return concat_rows(toks);
    }

    // ---- OFT forward -----------------------------------------------------

    struct OftOut {
        Tensor z;        // [H, d] final action-query hidden states
        Tensor actions;  // [H, action_dim]
    };

    OftOut forward_oft(const Observation& obs, const Tensor* p_t = nullptr) const {
        if (cfg.arch != Arch::OFT) throw std::runtime_error("forward_oft: policy is not OFT");
        auto& ps = const_cast<ParamStore&>(params);
        Tensor prefix = prefix_tokens(obs, p_t, /*include_proprio=*/true);
        Tensor aq = ps.at("backbone.action_query");
        std::vector<detail::TokenSegment> segs{{prefix, "backbone", prefix.shape()[0]},
                                               {aq, "backbone", cfg.horizon}};
        // blockwise rule: prefix attends only itself; action queries attend all
        auto finals = run_blocks(segs, {{1, 0}, {1, 1}});
        Tensor z = finals[1];
        Tensor a = bind_linear(ps, "action_head.l2")(gelu(bind_linear(ps, "action_head.l1")(z)));
        return {z, a};
    }

    // ---- Expert forward --------------------------------------------------

    struct ExpertOut {
        Tensor velocity;  // [H, action_dim]
        Tensor z;         // [H, d]; defined only when want_z
        Tensor prefix_final;
    };

    ExpertOut forward_expert(const Observation& obs, const Tensor& noisy_chunk, double flow_s,
                             bool want_z, const Tensor* p_t = nullptr) const {
        if (cfg.arch != Arch::Expert) throw std::runtime_error("forward_expert: policy is not Expert");
        if (flow_s < 0.0 || flow_s > 1.0)
            throw std::runtime_error("forward_expert: flow time " + std::to_string(flow_s) +
                                     " outside [0,1]");
        if (noisy_chunk.rank() != 2 || noisy_chunk.shape()[0] != cfg.horizon ||
            noisy_chunk.shape()[1] != cfg.action_dim)
            throw std::runtime_error("forward_expert: noisy chunk must be [H, action_dim]");
        auto& ps = const_cast<ParamStore&>(params);
        Tensor prefix = prefix_tokens(obs, p_t, /*include_proprio=*/false);

        std::vector<Tensor> ex_toks;
        ex_toks.push_back(bind_linear(ps, "expert.tok_proprio")(proprio_tensor(obs)));
        ex_toks.push_back(bind_linear(ps, "expert.tok_chunk")(noisy_chunk));
        ex_toks.push_back(bind_linear(ps, "expert.tok_time")(Tensor::leaf({1, 1}, {flow_s})));
        Tensor expert_x = concat_rows(ex_toks);

        bool queries_in_graph =
            want_z && cfg.head_enabled && cfg.embed_variant != EmbedVariant::CrossAttnQueries;

        std::vector<detail::TokenSegment> segs;
        segs.push_back({prefix, "backbone", prefix.shape()[0]});
        std::vector<std::vector<uint8_t>> allowed;
        size_t expert_idx;
        if (queries_in_graph) {
            std::string qprefix = cfg.embed_variant == EmbedVariant::PointExpert
                                      ? "embed.ptexpert"
                                      : "backbone";
            segs.push_back({ps.at("embed.queries"), qprefix, cfg.horizon});
            expert_idx = 2;
            uint8_t q_sees_action =
                cfg.embed_variant == EmbedVariant::BackboneQueryAttendAction ? 1 : 0;
            // rows: prefix, queries, expert; cols likewise
            allowed = {{1, 0, 0}, {1, 1, q_sees_action}, {1, 0, 1}};
        } else {
            expert_idx = 1;
            allowed = {{1, 0}, {1, 1}};
        }
        segs.insert(segs.begin() + static_cast<long>(expert_idx),
                    detail::TokenSegment{expert_x, "expert", expert_x.shape()[0]});
        auto finals = run_blocks(segs, allowed);

        Tensor expert_final = finals[queries_in_graph ? 2 : 1];
        // chunk token rows sit between the proprio row and the time row
        Tensor chunk_final = row_slice(expert_final, 1, 1 + cfg.horizon);
        Tensor vel = bind_linear(ps, "expert.vel_head.l2")(
            gelu(bind_linear(ps, "expert.vel_head.l1")(chunk_final)));

        ExpertOut out;
        out.velocity = vel;
        out.prefix_final = finals[0];
        if (want_z && cfg.head_enabled) {
            if (cfg.embed_variant == EmbedVariant::CrossAttnQueries)
                out.z = cross_attn_embed(finals[0]);
            else
                out.z = finals[1];
        }
        return out;
    }

    // learnable-query cross-attention over the backbone's final-layer tokens
    Tensor cross_attn_embed(const Tensor& prefix_final) const {
        auto& ps = const_cast<ParamStore&>(params);
        Tensor q0 = ps.at("embed.queries");
        Tensor q = bind_linear(ps, "embed.cross.wq")(q0);
        Tensor k = bind_linear(ps, "embed.cross.wk")(prefix_final);
        Tensor v = bind_linear(ps, "embed.cross.wv")(prefix_final);
        Tensor att = attention(q, k, v, full_mask(cfg.horizon, prefix_final.shape()[0]));
        Tensor y = add(q0, bind_linear(ps, "embed.cross.wo")(att));
        Tensor m = bind_linear(ps, "embed.cross.mlp2")(gelu(bind_linear(ps, "embed.cross.mlp1")(y)));
        return add(y, m);
    }

    // ---- point track head ------------------------------------------------

    // z [H,d] (or mean-pooled for goal-only), p_t [Np,3] normalized points
    Tensor predict_tracks(const Tensor& z, const Tensor& p_t, bool goal_only = false) const {
        if (!cfg.head_enabled) throw std::runtime_error("predict_tracks: head is disabled");
        auto& ps = const_cast<ParamStore&>(params);
        size_t np = p_t.shape()[0];
        Tensor e;
        if (cfg.head_pt_input == PtInput::None)
            e = repeat_rows(ps.at("head.point_token"), np);
        else
            e = bind_linear(ps, "head.point_mlp.l2")(
                gelu(bind_linear(ps, "head.point_mlp.l1")(p_t)));
        Tensor zz = goal_only ? mean_rows(z) : z;
        size_t h = zz.shape()[0];
        Tensor fused = broadcast_concat(zz, e);
        Tensor flat = reshape(fused, {h * np, 2 * cfg.d});
        Tensor out = bind_linear(ps, "head.fusion.l2")(gelu(bind_linear(ps, "head.fusion.l1")(flat)));
        if (goal_only) return reshape(out, {np, cfg.head_out_dim});
        return reshape(out, {h, np, cfg.head_out_dim});
    }

    // ---- flow-matching sampler -------------------------------------------

    // Euler integration of the learned velocity field from s=0 to s=1
    std::vector<double> sample_actions_fm(const Observation& obs, size_t n_steps, Pcg32& rng,
                                          const Tensor* p_t = nullptr) const {
        if (n_steps < 1) throw std::runtime_error("sample_actions_fm: n_steps must be >= 1");
        size_t n = cfg.horizon * cfg.action_dim;
        std::vector<double> x(n);
        for (double& v : x) v = rng.normal();
        double ds = 1.0 / static_cast<double>(n_steps);
        for (size_t i = 0; i < n_steps; ++i) {
            double s = static_cast<double>(i) * ds;
            Tensor xt = Tensor::leaf({cfg.horizon, cfg.action_dim}, x);
            Tensor v = forward_expert(obs, xt, s, false, p_t).velocity;
            for (size_t j = 0; j < n; ++j) x[j] += ds * v.data()[j];
        }
        return x;
    }

};

// strippable parameter name: the point track head and its embedding module
inline bool is_head_param(const std::string& name) {
    return name.rfind("head.", 0) == 0 || name.rfind("embed.", 0) == 0;
}

}  // namespace pri4r
