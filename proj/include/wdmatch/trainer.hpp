#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "wdmatch/checkpoint.hpp"
#include "wdmatch/config.hpp"
#include "wdmatch/data.hpp"
#include "wdmatch/eval.hpp"
#include "wdmatch/history.hpp"
#include "wdmatch/models.hpp"
#include "wdmatch/optim.hpp"
#include "wdmatch/wdreg.hpp"

namespace wdmatch {

// One matching-branch batch: pooled encoder rows plus task labels.
struct TrainBatch {
    EncodedPairs rows;
    std::vector<int> class_labels;
    std::vector<double> binary_labels;
};

inline TrainBatch make_batch(const std::vector<Triple>& triples, const EncodedPairs& encoded,
                             const std::vector<std::size_t>& idx, TaskKind task) {
    TrainBatch b;
    b.rows = encoded.gather(idx);
    for (std::size_t i : idx) {
        if (task == TaskKind::Classification) {
            b.class_labels.push_back(triples[i].z);
        } else {
            b.binary_labels.push_back(static_cast<double>(triples[i].z));
        }
    }
    return b;
}

// Handles into a built loss graph.
struct LossGraph {
    Graph graph;
    NodeId match_loss = -1; // L_m node (scalar)
    NodeId objective = -1;  // critic objective node, -1 when absent
    NodeId total = -1;      // loss node fed to backward
};

namespace detail {

inline NodeId reduce(Graph& g, NodeId per_example, Reduction reduction) {
    return reduction == Reduction::Sum ? g.reduce_sum(per_example) : g.reduce_mean(per_example);
}

inline NodeId build_match_loss_node(Graph& g, NodeId hx, NodeId hy, const ParamSet& m_params,
                                    const MatcherSpec& m_spec, const TrainBatch& batch,
                                    Reduction reduction, bool trainable) {
    const NodeId logits = build_matcher(g, hx, hy, m_params, m_spec, trainable);
    const NodeId per_example = m_spec.task == TaskKind::Classification
                                   ? g.softmax_xent(logits, batch.class_labels)
                                   : g.sigmoid_bce(logits, batch.binary_labels);
    return reduce(g, per_example, reduction);
}

} // namespace detail

// L_m over a batch: matcher on projected pairs, cross-entropy per task,
// reduced per config.
inline LossGraph build_matching_loss(const ParamSet& f_params, const ParamSet& m_params,
                                     const ProjectorSpec& f_spec, const MatcherSpec& m_spec,
                                     const TrainBatch& batch, Reduction reduction,
                                     bool trainable = true) {
    LossGraph lg;
    Graph& g = lg.graph;
    const NodeId hx =
        build_projector(g, g.constant(batch.rows.x, "rows_x"), f_params, f_spec, trainable);
    const NodeId hy =
        build_projector(g, g.constant(batch.rows.y, "rows_y"), f_params, f_spec, trainable);
    lg.match_loss =
        detail::build_match_loss_node(g, hx, hy, m_params, m_spec, batch, reduction, trainable);
    lg.total = lg.match_loss;
    g.set_loss(lg.total);
    return lg;
}

// L_reg = L_m + lambda * O_G on one shared batch. The critic enters as
// constants: its parameters receive no update here, but gradients flow
// through it into the projector.
inline LossGraph build_regularized_loss(const ParamSet& f_params, const ParamSet& m_params,
                                        const ParamSet& g_params, const ProjectorSpec& f_spec,
                                        const MatcherSpec& m_spec, const TrainBatch& batch,
                                        double lambda, Reduction reduction) {
    LossGraph lg;
    Graph& g = lg.graph;
    const NodeId hx = build_projector(g, g.constant(batch.rows.x, "rows_x"), f_params, f_spec, true);
    const NodeId hy = build_projector(g, g.constant(batch.rows.y, "rows_y"), f_params, f_spec, true);
    lg.match_loss = detail::build_match_loss_node(g, hx, hy, m_params, m_spec, batch, reduction, true);
    lg.objective = build_critic_objective(g, hx, hy, g_params, false, reduction);
    lg.total = g.add(lg.match_loss, g.scale(lg.objective, lambda));
    g.set_loss(lg.total);
    return lg;
}

// Forward-only logits for a whole encoded dataset: [N, classes] or [N, 1].
inline Tensor predict_logits(const ParamSet& f_params, const ParamSet& m_params,
                             const ProjectorSpec& f_spec, const MatcherSpec& m_spec,
                             const EncodedPairs& data) {
    Graph g;
    const NodeId hx = build_projector(g, g.constant(data.x, "rows_x"), f_params, f_spec, false);
    const NodeId hy = build_projector(g, g.constant(data.y, "rows_y"), f_params, f_spec, false);
    const NodeId logits = build_matcher(g, hx, hy, m_params, m_spec, false);
    g.forward();
    return g.value(logits);
}

inline std::vector<int> argmax_rows(const Tensor& logits) {
    std::vector<int> out(logits.rows());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < logits.cols(); ++j) {
            if (logits.at(i, j) > logits.at(i, best)) best = j;
        }
        out[i] = static_cast<int>(best);
    }
    return out;
}

// Task metric on a labeled dataset: accuracy for classification, MAP for
// ranking.
inline double evaluate_metric(const ParamSet& f_params, const ParamSet& m_params,
                              const ProjectorSpec& f_spec, const MatcherSpec& m_spec,
                              const std::vector<Triple>& triples, const EncodedPairs& encoded) {
    const Tensor logits = predict_logits(f_params, m_params, f_spec, m_spec, encoded);
    if (m_spec.task == TaskKind::Classification) {
        std::vector<int> labels;
        labels.reserve(triples.size());
        for (const auto& t : triples) labels.push_back(t.z);
        return accuracy(argmax_rows(logits), labels);
    }
    std::vector<double> scores(logits.data().begin(), logits.data().end());
    return mean_average_precision(group_queries(triples, scores));
}

// The full outer loop: per round, k critic ascent steps (regularizer branch)
// followed by one descent step on F and M (matching branch); per epoch, dev
// evaluation, a Wasserstein estimate from a freshly initialized diagnostic
// critic, and early stopping on the dev metric.
class Trainer {
public:
    struct Counters {
        std::int64_t rounds = 0;
        std::int64_t critic_updates = 0;
        std::int64_t match_updates = 0;
    };

    Trainer(TrainingConfig config, std::vector<Triple> train, std::vector<Triple> dev,
            Vocabulary vocab)
        : cfg_(std::move(config)), vocab_(std::move(vocab)), train_triples_(std::move(train)),
          dev_triples_(std::move(dev)) {
        cfg_.validate();
        if (train_triples_.empty()) throw DataError("train: empty training set");
        if (dev_triples_.empty()) throw DataError("train: empty dev set");
        validate_labels(train_triples_);
        validate_labels(dev_triples_);
        encode();

        Rng init_rng(derive_seed(cfg_.seed, 1));
        f_ = init_projector_params(cfg_.projector, init_rng);
        g_ = init_critic_params(cfg_.projector.feature_dim, cfg_.critic, init_rng);
        m_ = init_matcher_params(cfg_.projector.feature_dim, cfg_.matcher, init_rng);
        adam_f_ = AdamState::init(f_);
        adam_g_ = AdamState::init(g_);
        adam_m_ = AdamState::init(m_);

        critic_rng_ = Rng(derive_seed(cfg_.seed, 2));
        match_rng_ = Rng(derive_seed(cfg_.seed, 3));
        diag_rng_ = Rng(derive_seed(cfg_.seed, 4));
        critic_sampler_ = BatchSampler(train_triples_.size(), critic_rng_.split());
        match_sampler_ = BatchSampler(train_triples_.size(), match_rng_.split());
    }

    // Resume. The triples must be mapped through the checkpoint's own
    // vocabulary (see Checkpoint::vocabulary()).
    Trainer(const Checkpoint& ckpt, std::vector<Triple> train, std::vector<Triple> dev)
        : cfg_(ckpt.config), vocab_(ckpt.vocabulary()), train_triples_(std::move(train)),
          dev_triples_(std::move(dev)) {
        cfg_.validate();
        if (train_triples_.empty()) throw DataError("train: empty training set");
        if (dev_triples_.empty()) throw DataError("train: empty dev set");
        validate_labels(train_triples_);
        validate_labels(dev_triples_);
        encode();
        if (ckpt.critic_sampler.order.size() != train_triples_.size()) {
            throw ShapeError("resume: checkpoint sampler covers " +
                             std::to_string(ckpt.critic_sampler.order.size()) +
                             " records, dataset has " + std::to_string(train_triples_.size()));
        }
        f_ = ckpt.f;
        m_ = ckpt.m;
        g_ = ckpt.g;
        adam_f_ = ckpt.adam_f;
        adam_m_ = ckpt.adam_m;
        adam_g_ = ckpt.adam_g;
        epochs_done_ = ckpt.epoch;
        has_best_ = ckpt.has_best;
        best_f_ = ckpt.best_f;
        best_m_ = ckpt.best_m;
        best_metric_ = ckpt.best_metric;
        best_epoch_ = ckpt.best_epoch;
        epochs_since_improve_ = ckpt.epochs_since_improve;
        critic_rng_ = Rng::deserialize(ckpt.rng_critic);
        match_rng_ = Rng::deserialize(ckpt.rng_match);
        diag_rng_ = Rng::deserialize(ckpt.rng_diag);
        critic_sampler_ = ckpt.critic_sampler.restore();
        match_sampler_ = ckpt.match_sampler.restore();
        history_ = ckpt.history;
    }

    std::size_t rounds_per_epoch() const {
        return (train_triples_.size() + static_cast<std::size_t>(cfg_.n2) - 1) /
               static_cast<std::size_t>(cfg_.n2);
    }

    bool finished() const {
        return epochs_done_ >= cfg_.epochs || epochs_since_improve_ >= cfg_.patience;
    }

    // Runs one epoch; returns false once the run is finished.
    bool run_epoch() {
        if (finished()) return false;
        const RegularizerConfig reg_cfg = cfg_.regularizer();
        const bool with_critic_term = cfg_.regularizer_enabled && cfg_.lambda > 0.0;
        double sum_total = 0.0;
        double sum_match = 0.0;
        const std::size_t rounds = rounds_per_epoch();
        for (std::size_t r = 0; r < rounds; ++r) {
            if (cfg_.regularizer_enabled && cfg_.k > 0) {
                regularizer_branch(g_, adam_g_, f_, cfg_.projector, train_encoded_, reg_cfg,
                                   critic_sampler_, critic_hook);
                counters_.critic_updates += cfg_.k;
            }
            const auto idx = match_sampler_.next(static_cast<std::size_t>(cfg_.n2));
            const TrainBatch batch =
                make_batch(train_triples_, train_encoded_, idx, cfg_.matcher.task);
            LossGraph lg =
                with_critic_term
                    ? build_regularized_loss(f_, m_, g_, cfg_.projector, cfg_.matcher, batch,
                                             cfg_.lambda, cfg_.reduction)
                    : build_matching_loss(f_, m_, cfg_.projector, cfg_.matcher, batch,
                                          cfg_.reduction);
            const double total = lg.graph.forward();
            const double match = lg.graph.value(lg.match_loss)[0];
            const auto grads = lg.graph.backward();
            adam_step(f_, grads, adam_f_, cfg_.lr_match, StepDirection::Minimize);
            adam_step(m_, grads, adam_m_, cfg_.lr_match, StepDirection::Minimize);
            counters_.match_updates += 1;
            counters_.rounds += 1;
            sum_total += total;
            sum_match += match;
        }
        ++epochs_done_;

        EpochRecord rec;
        rec.epoch = epochs_done_;
        rec.train_loss = sum_total / static_cast<double>(rounds);
        rec.train_match_loss = sum_match / static_cast<double>(rounds);
        rec.dev_metric =
            evaluate_metric(f_, m_, cfg_.projector, cfg_.matcher, dev_triples_, dev_encoded_);
        rec.wd_estimate = cfg_.wd_eval.enabled ? diagnostic_wd() : 0.0;
        history_.rows.push_back(rec);

        if (!has_best_ || rec.dev_metric > best_metric_) {
            has_best_ = true;
            best_metric_ = rec.dev_metric;
            best_epoch_ = epochs_done_;
            best_f_ = f_;
            best_m_ = m_;
            epochs_since_improve_ = 0;
        } else {
            ++epochs_since_improve_;
        }
        return !finished();
    }

    void run() {
        while (run_epoch()) {
        }
    }

    // Wasserstein estimate against a freshly initialized diagnostic critic,
    // so the reading is comparable between regularized and baseline runs
    // (a baseline run never trains its own critic).
    double diagnostic_wd() {
        ParamSet g0 = init_critic_params(cfg_.projector.feature_dim, cfg_.critic, diag_rng_);
        RegularizerConfig reg_cfg = cfg_.regularizer();
        return estimate_wd(std::move(g0), f_, cfg_.projector, train_encoded_, cfg_.wd_eval.n_eval,
                           cfg_.wd_eval.converge_steps, reg_cfg, diag_rng_);
    }

    Checkpoint checkpoint() const {
        Checkpoint c;
        c.config = cfg_;
        c.epoch = epochs_done_;
        c.f = f_;
        c.m = m_;
        c.g = g_;
        c.adam_f = adam_f_;
        c.adam_m = adam_m_;
        c.adam_g = adam_g_;
        c.has_best = has_best_;
        c.best_f = best_f_;
        c.best_m = best_m_;
        c.best_metric = best_metric_;
        c.best_epoch = best_epoch_;
        c.epochs_since_improve = epochs_since_improve_;
        c.rng_critic = critic_rng_.serialize();
        c.rng_match = match_rng_.serialize();
        c.rng_diag = diag_rng_.serialize();
        c.critic_sampler = SamplerState::capture(critic_sampler_);
        c.match_sampler = SamplerState::capture(match_sampler_);
        c.history = history_;
        c.set_vocabulary(vocab_);
        return c;
    }

    const TrainingConfig& config() const { return cfg_; }
    const RunHistory& history() const { return history_; }
    const Counters& counters() const { return counters_; }
    int epochs_done() const { return epochs_done_; }
    const ParamSet& f_params() const { return f_; }
    const ParamSet& m_params() const { return m_; }
    const ParamSet& g_params() const { return g_; }
    const Vocabulary& vocabulary() const { return vocab_; }
    const EncodedPairs& train_encoded() const { return train_encoded_; }
    double best_metric() const { return best_metric_; }
    int best_epoch() const { return best_epoch_; }

    // Best-dev snapshot; falls back to the current parameters when no epoch
    // has completed yet.
    const ParamSet& best_f() const { return has_best_ ? best_f_ : f_; }
    const ParamSet& best_m() const { return has_best_ ? best_m_ : m_; }

    CriticStepHook critic_hook;

private:
    void validate_labels(const std::vector<Triple>& triples) const {
        for (const auto& t : triples) {
            if (cfg_.matcher.task == TaskKind::Classification) {
                if (t.z < 0 || t.z >= cfg_.matcher.classes) {
                    throw DataError("label " + std::to_string(t.z) + " out of range [0," +
                                    std::to_string(cfg_.matcher.classes) + ")");
                }
            } else if (t.z != 0 && t.z != 1) {
                throw DataError("ranking label must be 0 or 1, got " + std::to_string(t.z));
            }
        }
    }

    void encode() {
        train_encoded_ = encode_dataset(train_triples_, vocab_, cfg_.projector);
        dev_encoded_ = encode_dataset(dev_triples_, vocab_, cfg_.projector);
    }

    TrainingConfig cfg_;
    Vocabulary vocab_;
    std::vector<Triple> train_triples_;
    std::vector<Triple> dev_triples_;
    EncodedPairs train_encoded_;
    EncodedPairs dev_encoded_;

    ParamSet f_, m_, g_;
    AdamState adam_f_, adam_m_, adam_g_;

    Rng critic_rng_, match_rng_, diag_rng_;
    BatchSampler critic_sampler_, match_sampler_;

    RunHistory history_;
    Counters counters_;
    int epochs_done_ = 0;
    bool has_best_ = false;
    ParamSet best_f_, best_m_;
    double best_metric_ = 0.0;
    int best_epoch_ = 0;
    int epochs_since_improve_ = 0;
};

struct TrainResult {
    ParamSet f;
    ParamSet m;
    RunHistory history;
};

inline TrainResult train(const std::vector<Triple>& train_set, const std::vector<Triple>& dev_set,
                         const Vocabulary& vocab, const TrainingConfig& config) {
    Trainer t(config, train_set, dev_set, vocab);
    t.run();
    return TrainResult{t.best_f(), t.best_m(), t.history()};
}

} // namespace wdmatch
