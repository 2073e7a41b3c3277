#pragma once

#include <algorithm>
#include <functional>
#include <numeric>
#include <vector>

#include "wdmatch/data.hpp"
#include "wdmatch/errors.hpp"
#include "wdmatch/graph.hpp"
#include "wdmatch/models.hpp"
#include "wdmatch/optim.hpp"

namespace wdmatch {

enum class Reduction { Sum, Mean };

inline Reduction reduction_from_string(const std::string& s) {
    if (s == "sum") return Reduction::Sum;
    if (s == "mean") return Reduction::Mean;
    throw ConfigError("reduction: expected 'sum' or 'mean', got '" + s + "'");
}

inline const char* reduction_to_string(Reduction r) {
    return r == Reduction::Sum ? "sum" : "mean";
}

// Feature pairs sampled for one critic update, as [n, K] matrices.
struct CriticBatch {
    Tensor hx;
    Tensor hy;

    static CriticBatch from_pairs(const std::vector<FeaturePair>& pairs) {
        if (pairs.empty()) throw DataError("critic batch: empty");
        const std::size_t k = pairs[0].hx.size();
        CriticBatch b;
        b.hx = Tensor({pairs.size(), k});
        b.hy = Tensor({pairs.size(), k});
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            if (pairs[i].hx.size() != k || pairs[i].hy.size() != k) {
                throw ShapeError("critic batch: pair " + std::to_string(i) +
                                 " has inconsistent feature dim");
            }
            for (std::size_t j = 0; j < k; ++j) {
                b.hx.at(i, j) = pairs[i].hx[j];
                b.hy.at(i, j) = pairs[i].hy[j];
            }
        }
        return b;
    }

    std::size_t size() const { return hx.rows(); }
};

// Critic objective over feature nodes already in the graph:
// reduce_i [G(hx_i) - G(hy_i)]. Differentiable with respect to the critic
// leaves and, through the feature nodes, anything upstream of them.
inline NodeId build_critic_objective(Graph& g, NodeId hx, NodeId hy, const ParamSet& g_params,
                                     bool critic_trainable, Reduction reduction) {
    const NodeId sx = build_critic(g, hx, g_params, critic_trainable);
    const NodeId sy = build_critic(g, hy, g_params, critic_trainable);
    const NodeId diff = g.sub(sx, sy);
    return reduction == Reduction::Sum ? g.reduce_sum(diff) : g.reduce_mean(diff);
}

// Standalone objective graph over a sampled batch of projected pairs.
inline Graph critic_objective(const ParamSet& g_params, const CriticBatch& batch,
                              Reduction reduction, bool critic_trainable = true) {
    if (batch.size() == 0) throw DataError("critic_objective: empty batch");
    Graph g;
    const NodeId hx = g.constant(batch.hx, "h_x");
    const NodeId hy = g.constant(batch.hy, "h_y");
    g.set_loss(build_critic_objective(g, hx, hy, g_params, critic_trainable, reduction));
    return g;
}

inline double critic_objective_value(const ParamSet& g_params, const CriticBatch& batch,
                                     Reduction reduction) {
    Graph g = critic_objective(g_params, batch, reduction, false);
    return g.forward();
}

struct RegularizerConfig {
    int k = 5;
    int n1 = 64;
    double lr_critic = 1e-3;
    double clip = 0.1;
    Reduction reduction = Reduction::Mean;

    void validate() const {
        if (k < 0) throw ConfigError("k: critic steps must be >= 0");
        if (n1 < 1) throw ConfigError("n1: critic batch size must be >= 1");
        if (lr_critic <= 0.0) throw ConfigError("lr_critic: must be positive");
        if (clip <= 0.0) throw ConfigError("clip: must be positive");
    }
};

using CriticStepHook = std::function<void(const ParamSet& g_params, double objective)>;

// One graph per critic ascent step: gathered pooled rows are projected with
// the frozen F parameters, then the clipped critic maximizes the objective.
inline double critic_ascent_step(ParamSet& g_params, AdamState& g_state, const ParamSet& f_params,
                                 const ProjectorSpec& f_spec, const EncodedPairs& data,
                                 const std::vector<std::size_t>& idx,
                                 const RegularizerConfig& cfg) {
    const EncodedPairs rows = data.gather(idx);
    Graph g;
    const NodeId hx = build_projector(g, g.constant(rows.x, "rows_x"), f_params, f_spec, false);
    const NodeId hy = build_projector(g, g.constant(rows.y, "rows_y"), f_params, f_spec, false);
    g.set_loss(build_critic_objective(g, hx, hy, g_params, true, cfg.reduction));
    const double objective = g.forward();
    const auto grads = g.backward();
    adam_step(g_params, grads, g_state, cfg.lr_critic, StepDirection::Maximize);
    clip_params(g_params, cfg.clip);
    return objective;
}

// Algorithm lines 3-9: k iterations of {sample, project with F frozen,
// ascend the critic, clip to [-c, c]}. Touches only the critic parameters.
inline void regularizer_branch(ParamSet& g_params, AdamState& g_state, const ParamSet& f_params,
                               const ProjectorSpec& f_spec, const EncodedPairs& data,
                               const RegularizerConfig& cfg, BatchSampler& sampler,
                               const CriticStepHook& hook = nullptr) {
    cfg.validate();
    for (int t = 0; t < cfg.k; ++t) {
        const auto idx = sampler.next(static_cast<std::size_t>(cfg.n1));
        const double objective =
            critic_ascent_step(g_params, g_state, f_params, f_spec, data, idx, cfg);
        if (hook) hook(g_params, objective);
    }
}

// Mean objective over an index set, with the per-pair differences summed in
// sorted-value order so the estimate is exactly invariant to the order the
// evaluation batch was drawn in.
inline double mean_objective_canonical(const ParamSet& g_params, const ParamSet& f_params,
                                       const ProjectorSpec& f_spec, const EncodedPairs& data,
                                       const std::vector<std::size_t>& idx) {
    const EncodedPairs rows = data.gather(idx);
    Graph g;
    const NodeId hx = build_projector(g, g.constant(rows.x, "rows_x"), f_params, f_spec, false);
    const NodeId hy = build_projector(g, g.constant(rows.y, "rows_y"), f_params, f_spec, false);
    const NodeId sx = build_critic(g, hx, g_params, false);
    const NodeId sy = build_critic(g, hy, g_params, false);
    const NodeId diff = g.sub(sx, sy);
    g.forward();
    const Tensor& d = g.value(diff);
    std::vector<double> vals(d.data().begin(), d.data().end());
    std::sort(vals.begin(), vals.end());
    double acc = 0.0;
    for (double v : vals) acc += v;
    return acc / static_cast<double>(vals.size());
}

// Wasserstein-distance estimate: trains a scratch copy of the critic for
// converge_steps ascent iterations, then reports the mean objective on an
// evaluation batch. The projection parameters are never modified.
inline double estimate_wd(ParamSet g_params, const ParamSet& f_params,
                          const ProjectorSpec& f_spec, const EncodedPairs& data, int n_eval,
                          int converge_steps, RegularizerConfig cfg, Rng& rng) {
    if (n_eval < 1) throw ConfigError("estimate_wd: n_eval must be >= 1");
    if (converge_steps < 0) throw ConfigError("estimate_wd: converge_steps must be >= 0");
    cfg.k = converge_steps;
    cfg.validate();
    AdamState state = AdamState::init(g_params);
    BatchSampler sampler(data.size(), rng.split());
    regularizer_branch(g_params, state, f_params, f_spec, data, cfg, sampler);

    std::vector<std::size_t> idx;
    if (static_cast<std::size_t>(n_eval) >= data.size()) {
        idx.resize(data.size());
        std::iota(idx.begin(), idx.end(), 0);
    } else {
        std::vector<std::size_t> perm(data.size());
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm);
        idx.assign(perm.begin(), perm.begin() + n_eval);
        std::sort(idx.begin(), idx.end());
    }
    return mean_objective_canonical(g_params, f_params, f_spec, data, idx);
}

} // namespace wdmatch
