#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "wdmatch/errors.hpp"
#include "wdmatch/models.hpp"
#include "wdmatch/wdreg.hpp"

namespace wdmatch {

// Per-epoch Wasserstein-estimate diagnostics.
struct WdEvalConfig {
    bool enabled = true;
    int n_eval = 1000;
    int converge_steps = 300;
};

// Every input of the training algorithm plus run control and architecture.
struct TrainingConfig {
    int n1 = 64;           // critic minibatch size
    int n2 = 256;          // matching minibatch size
    int k = 5;             // critic steps per round
    double lambda = 0.001; // regularizer trade-off
    double lr_critic = 0.001;
    double lr_match = 0.001;
    double clip = 0.1;
    int epochs = 20;
    int patience = 5;
    std::uint64_t seed = 7;
    Reduction reduction = Reduction::Mean;
    bool regularizer_enabled = true;

    ProjectorSpec projector;
    CriticSpec critic;
    MatcherSpec matcher;
    WdEvalConfig wd_eval;

    RegularizerConfig regularizer() const {
        RegularizerConfig r;
        r.k = k;
        r.n1 = n1;
        r.lr_critic = lr_critic;
        r.clip = clip;
        r.reduction = reduction;
        return r;
    }

    void validate() const {
        if (lambda < 0.0 || lambda > 1.0) throw ConfigError("train.lambda must be in [0, 1]");
        if (lr_critic <= 0.0) throw ConfigError("train.lr_critic must be positive");
        if (lr_match <= 0.0) throw ConfigError("train.lr_match must be positive");
        if (n1 < 1) throw ConfigError("train.n1 must be >= 1");
        if (n2 < 1) throw ConfigError("train.n2 must be >= 1");
        if (k < 0) throw ConfigError("train.k must be >= 0");
        if (clip <= 0.0) throw ConfigError("train.clip must be positive");
        if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
        if (patience < 1) throw ConfigError("train.patience must be >= 1");
        if (projector.embedding_dim < 1) throw ConfigError("model.embedding_dim must be >= 1");
        if (projector.feature_dim < 1) throw ConfigError("model.feature_dim must be >= 1");
        for (int h : projector.hidden) {
            if (h < 1) throw ConfigError("model.projector_hidden entries must be >= 1");
        }
        for (int h : matcher.hidden) {
            if (h < 1) throw ConfigError("model.matcher_hidden entries must be >= 1");
        }
        if (critic.hidden_width < 1) throw ConfigError("model.critic_hidden must be >= 1");
        if (matcher.task == TaskKind::Classification && matcher.classes < 2) {
            throw ConfigError("model.classes must be >= 2 for classification");
        }
        if (wd_eval.n_eval < 1) throw ConfigError("wd_eval.n_eval must be >= 1");
        if (wd_eval.converge_steps < 0) throw ConfigError("wd_eval.converge_steps must be >= 0");
    }
};

namespace detail {

template <class T>
T get_field(const nlohmann::json& j, const std::string& section, const std::string& key,
            const T& fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(section + "." + key + ": wrong type");
    }
}

} // namespace detail

inline nlohmann::json to_json(const TrainingConfig& c) {
    nlohmann::json j;
    j["model"] = {
        {"encoder", encoder_to_string(c.projector.encoder)},
        {"embedding_dim", c.projector.embedding_dim},
        {"feature_dim", c.projector.feature_dim},
        {"projector_hidden", c.projector.hidden},
        {"critic_hidden", c.critic.hidden_width},
        {"matcher_hidden", c.matcher.hidden},
        {"matcher_enrich", c.matcher.enrich},
        {"task", task_to_string(c.matcher.task)},
        {"classes", c.matcher.classes},
    };
    j["train"] = {
        {"n1", c.n1},
        {"n2", c.n2},
        {"k", c.k},
        {"lambda", c.lambda},
        {"lr_critic", c.lr_critic},
        {"lr_match", c.lr_match},
        {"clip", c.clip},
        {"epochs", c.epochs},
        {"patience", c.patience},
        {"seed", c.seed},
        {"reduction", reduction_to_string(c.reduction)},
        {"regularizer_enabled", c.regularizer_enabled},
    };
    j["wd_eval"] = {
        {"enabled", c.wd_eval.enabled},
        {"n_eval", c.wd_eval.n_eval},
        {"converge_steps", c.wd_eval.converge_steps},
    };
    return j;
}

inline TrainingConfig config_from_json(const nlohmann::json& j) {
    using detail::get_field;
    TrainingConfig c;
    const nlohmann::json model = j.contains("model") ? j.at("model") : nlohmann::json::object();
    const nlohmann::json train = j.contains("train") ? j.at("train") : nlohmann::json::object();
    const nlohmann::json wd = j.contains("wd_eval") ? j.at("wd_eval") : nlohmann::json::object();

    c.projector.encoder =
        encoder_from_string(get_field<std::string>(model, "model", "encoder", "bag"));
    c.projector.embedding_dim = get_field<int>(model, "model", "embedding_dim", 16);
    c.projector.feature_dim = get_field<int>(model, "model", "feature_dim", 32);
    c.projector.hidden =
        get_field<std::vector<int>>(model, "model", "projector_hidden", std::vector<int>{32});
    c.critic.hidden_width = get_field<int>(model, "model", "critic_hidden", 128);
    c.matcher.hidden =
        get_field<std::vector<int>>(model, "model", "matcher_hidden", std::vector<int>{32});
    c.matcher.enrich = get_field<bool>(model, "model", "matcher_enrich", true);
    c.matcher.task = task_from_string(get_field<std::string>(model, "model", "task", "classification"));
    c.matcher.classes = get_field<int>(model, "model", "classes", 2);

    c.n1 = get_field<int>(train, "train", "n1", c.n1);
    c.n2 = get_field<int>(train, "train", "n2", c.n2);
    c.k = get_field<int>(train, "train", "k", c.k);
    c.lambda = get_field<double>(train, "train", "lambda", c.lambda);
    c.lr_critic = get_field<double>(train, "train", "lr_critic", c.lr_critic);
    c.lr_match = get_field<double>(train, "train", "lr_match", c.lr_match);
    c.clip = get_field<double>(train, "train", "clip", c.clip);
    c.epochs = get_field<int>(train, "train", "epochs", c.epochs);
    c.patience = get_field<int>(train, "train", "patience", c.patience);
    c.seed = get_field<std::uint64_t>(train, "train", "seed", c.seed);
    c.reduction =
        reduction_from_string(get_field<std::string>(train, "train", "reduction", "mean"));
    c.regularizer_enabled = get_field<bool>(train, "train", "regularizer_enabled", true);

    c.wd_eval.enabled = get_field<bool>(wd, "wd_eval", "enabled", true);
    c.wd_eval.n_eval = get_field<int>(wd, "wd_eval", "n_eval", 1000);
    c.wd_eval.converge_steps = get_field<int>(wd, "wd_eval", "converge_steps", 300);

    c.critic.clip = c.clip;
    return c;
}

inline std::string config_to_string(const TrainingConfig& c) { return to_json(c).dump(2); }

inline TrainingConfig config_from_string(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    return config_from_json(j);
}

} // namespace wdmatch
