// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Each criterion pins its thresholds and time budget in place.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "wdmatch/wdmatch.hpp"

using namespace wdmatch;

namespace {

struct Criterion {
    std::string name;
    std::function<bool(std::string&)> fn;
};

double seconds_since(const std::chrono::steady_clock::time_point& start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

bool bits_equal(double a, double b) {
    std::uint64_t x, y;
    std::memcpy(&x, &a, 8);
    std::memcpy(&y, &b, 8);
    return x == y;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

// Identity projector over encoded rows (single linear layer fixed to I).
struct Identity {
    ProjectorSpec spec;
    ParamSet f;
};

Identity identity_projector(int dim) {
    Identity s;
    s.spec.embedding_dim = dim;
    s.spec.feature_dim = dim;
    Tensor eye({static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)});
    for (int i = 0; i < dim; ++i) eye.at(i, i) = 1.0;
    s.f.tensors["F.W0"] = eye;
    s.f.tensors["F.b0"] = Tensor({1, static_cast<std::size_t>(dim)});
    return s;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Shared setup for the training-based criteria.
struct SynthTask {
    Vocabulary vocab;
    std::vector<Triple> train, dev, test;
};

SynthTask make_task(int pairs, int latent_dim, double delta, std::uint64_t seed) {
    SynthSpec spec;
    spec.pairs = pairs;
    spec.latent_dim = latent_dim;
    spec.delta = delta;
    spec.vocab_a = 100;
    spec.vocab_b = 100;
    const SyntheticData d = generate_synthetic(spec, seed);
    SynthTask t;
    t.vocab = vocabulary_from_synthetic(d);
    t.train = triples_from_synthetic(d.train, t.vocab);
    t.dev = triples_from_synthetic(d.dev, t.vocab);
    t.test = triples_from_synthetic(d.test, t.vocab);
    return t;
}

TrainingConfig synth_config(int embedding_dim, int feature_dim, std::uint64_t seed) {
    TrainingConfig cfg;
    cfg.projector.embedding_dim = embedding_dim;
    cfg.projector.feature_dim = feature_dim;
    cfg.projector.hidden = {32};
    cfg.matcher.classes = 2;
    cfg.matcher.hidden = {32};
    cfg.critic.hidden_width = 128;
    cfg.n1 = 64;
    cfg.n2 = 256;
    cfg.k = 5;
    cfg.lambda = 0.01;
    cfg.lr_critic = 0.001;
    cfg.lr_match = 0.001;
    cfg.clip = 0.1;
    cfg.critic.clip = 0.1;
    cfg.epochs = 8;
    cfg.patience = 100;
    cfg.seed = seed;
    cfg.wd_eval.n_eval = 1000;
    cfg.wd_eval.converge_steps = 300;
    return cfg;
}

double test_accuracy(const Trainer& t, const SynthTask& task) {
    const auto encoded = encode_dataset(task.test, t.vocabulary(), t.config().projector);
    return evaluate_metric(t.best_f(), t.best_m(), t.config().projector, t.config().matcher,
                           task.test, encoded);
}

// ---------------------------------------------------------------------------

bool criterion_gradients(std::string& detail) {
    const auto start = std::chrono::steady_clock::now();
    double worst = 0.0;
    const std::size_t n_graphs = 100;
    std::set<OpKind> seen;
    for (std::size_t s = 0; s < n_graphs; ++s) {
        Graph g = build_random_graph(5000 + s);
        for (std::size_t i = 0; i < g.node_count(); ++i) {
            seen.insert(g.node(static_cast<NodeId>(i)).op);
        }
        worst = std::max(worst, check_gradients(g, 1e-5));
    }
    const std::vector<OpKind> required{
        OpKind::MatMul, OpKind::Add,     OpKind::Sub,        OpKind::Mul,
        OpKind::Scale,  OpKind::Maximum, OpKind::Relu,       OpKind::Tanh,
        OpKind::Sigmoid, OpKind::Exp,    OpKind::Log,        OpKind::Abs,
        OpKind::Concat, OpKind::ReduceSum, OpKind::ReduceMean, OpKind::SoftmaxXent,
        OpKind::SigmoidBce};
    std::string missing;
    for (OpKind k : required) {
        if (!seen.count(k)) missing += std::string(" ") + op_name(k);
    }
    const double secs = seconds_since(start);
    detail = "max rel err " + format_g17(worst) + " over 100 graphs in " + format_g17(secs) + "s";
    if (!missing.empty()) detail += "; MISSING op kinds:" + missing;
    return worst < 1e-4 && secs < 10.0 && missing.empty();
}

bool criterion_clipping(std::string& detail) {
    // 800 pairs split 640/80/80; 640 training pairs at n2=64 gives 10 rounds
    // per epoch, so 20 epochs = 200 rounds.
    SynthTask task = make_task(800, 8, 1.5, 77);
    TrainingConfig cfg = synth_config(8, 8, 13);
    cfg.projector.hidden = {16};
    cfg.matcher.hidden = {16};
    cfg.critic.hidden_width = 32;
    cfg.n2 = 64;
    cfg.n1 = 32;
    cfg.epochs = 20;
    cfg.wd_eval.enabled = false;
    Trainer t(cfg, task.train, task.dev, task.vocab);
    std::int64_t steps = 0, violations = 0;
    t.critic_hook = [&](const ParamSet& gp, double) {
        ++steps;
        if (gp.max_abs() > cfg.clip) ++violations;
    };
    t.run();
    detail = std::to_string(t.counters().rounds) + " rounds, " + std::to_string(steps) +
             " critic steps, " + std::to_string(violations) + " violations";
    return t.counters().rounds == 200 && steps == 200 * cfg.k && violations == 0;
}

bool criterion_algebraic_laws(std::string& detail) {
    Rng rng(2024);
    CriticSpec cspec;
    cspec.hidden_width = 24;
    ProjectorSpec pspec;
    pspec.embedding_dim = 6;
    pspec.feature_dim = 5;
    pspec.hidden = {7};
    MatcherSpec mspec;
    mspec.classes = 3;
    mspec.hidden = {6};

    double worst_decomp = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        // Antisymmetry and the zero law, bit-exact.
        ParamSet gp = init_critic_params(5, cspec, rng);
        std::vector<FeaturePair> pairs;
        for (int i = 0; i < 11; ++i) {
            FeaturePair fp;
            for (int j = 0; j < 5; ++j) {
                fp.hx.push_back(rng.uniform(-2.0, 2.0));
                fp.hy.push_back(rng.uniform(-2.0, 2.0));
            }
            pairs.push_back(fp);
        }
        CriticBatch batch = CriticBatch::from_pairs(pairs);
        CriticBatch swapped;
        swapped.hx = batch.hy;
        swapped.hy = batch.hx;
        const double o = critic_objective_value(gp, batch, Reduction::Sum);
        if (!bits_equal(critic_objective_value(gp, swapped, Reduction::Sum), -o)) {
            detail = "antisymmetry violated at trial " + std::to_string(trial);
            return false;
        }
        CriticBatch equal;
        equal.hx = batch.hx;
        equal.hy = batch.hx;
        if (critic_objective_value(gp, equal, Reduction::Sum) != 0.0) {
            detail = "zero law violated at trial " + std::to_string(trial);
            return false;
        }

        // Decomposition L_reg - L_m = lambda * O_G within 1e-12 relative.
        const ParamSet f = init_projector_params(pspec, rng);
        const ParamSet m = init_matcher_params(5, mspec, rng);
        TrainBatch tb;
        tb.rows.x = Tensor({9, 6});
        tb.rows.y = Tensor({9, 6});
        for (std::size_t i = 0; i < tb.rows.x.size(); ++i) {
            tb.rows.x[i] = rng.uniform(-1.5, 1.5);
            tb.rows.y[i] = rng.uniform(-1.5, 1.5);
        }
        for (int i = 0; i < 9; ++i) tb.class_labels.push_back(static_cast<int>(rng.uniform_int(3)));
        const double lambda = rng.uniform(0.0, 1.0);
        ParamSet gp2 = init_critic_params(5, cspec, rng);
        LossGraph reg = build_regularized_loss(f, m, gp2, pspec, mspec, tb, lambda, Reduction::Mean);
        const double total = reg.graph.forward();
        LossGraph plain = build_matching_loss(f, m, pspec, mspec, tb, Reduction::Mean, false);
        const double lm = plain.graph.forward();
        CriticBatch feats;
        feats.hx = apply_projector(f, pspec, tb.rows.x);
        feats.hy = apply_projector(f, pspec, tb.rows.y);
        const double og = critic_objective_value(gp2, feats, Reduction::Mean);
        const double rel = std::fabs((total - lm) - lambda * og) /
                           std::max({1.0, std::fabs(total), std::fabs(lambda * og)});
        worst_decomp = std::max(worst_decomp, rel);
    }
    detail = "50 batches, worst decomposition residual " + format_g17(worst_decomp);
    return worst_decomp <= 1e-12;
}

bool criterion_oracle_consistency(std::string& detail) {
    const auto start = std::chrono::steady_clock::now();
    const std::vector<double> deltas{0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0};
    const int n = 1000;
    Identity id = identity_projector(1);
    CriticSpec cspec;
    cspec.hidden_width = 128;
    std::vector<double> estimates, oracles;
    for (std::size_t di = 0; di < deltas.size(); ++di) {
        Rng data_rng(31337); // same base samples for every delta
        std::vector<double> xs(n), ys(n);
        for (int i = 0; i < n; ++i) xs[static_cast<std::size_t>(i)] = data_rng.normal();
        for (int i = 0; i < n; ++i) {
            ys[static_cast<std::size_t>(i)] = data_rng.normal() + deltas[di];
        }
        EncodedPairs data;
        data.x = Tensor({static_cast<std::size_t>(n), 1}, std::vector<double>(xs));
        data.y = Tensor({static_cast<std::size_t>(n), 1}, std::vector<double>(ys));
        ParamSet g0 = init_params(1, cspec, 4242);
        RegularizerConfig cfg;
        cfg.n1 = 256;
        cfg.lr_critic = 0.001;
        cfg.clip = 0.2;
        Rng est_rng(909);
        estimates.push_back(estimate_wd(g0, id.f, id.spec, data, n, 400, cfg, est_rng));
        oracles.push_back(w1_empirical_1d(xs, ys));
    }
    const double r = pearson(estimates, oracles);
    const auto [mn, mx] = std::minmax_element(estimates.begin(), estimates.end());
    const double slack = 0.05 * (*mx - *mn);
    bool monotone = true;
    for (std::size_t i = 0; i + 1 < estimates.size(); ++i) {
        if (estimates[i + 1] < estimates[i] - slack) monotone = false;
    }
    const double secs = seconds_since(start);
    std::ostringstream os;
    os << "estimates {";
    for (double e : estimates) os << " " << format_g17(e);
    os << " }, pearson " << format_g17(r) << ", " << format_g17(secs) << "s";
    detail = os.str();
    return r > 0.99 && monotone && secs < 120.0;
}

bool criterion_lambda_zero(std::string& detail) {
    SynthTask task = make_task(800, 8, 1.5, 99);
    TrainingConfig cfg = synth_config(8, 8, 21);
    cfg.projector.hidden = {16};
    cfg.matcher.hidden = {16};
    cfg.critic.hidden_width = 32;
    cfg.n2 = 64;
    cfg.epochs = 4;
    cfg.wd_eval.n_eval = 256;
    cfg.wd_eval.converge_steps = 50;

    cfg.lambda = 0.0;
    cfg.regularizer_enabled = true;
    Trainer with_branch(cfg, task.train, task.dev, task.vocab);
    with_branch.run();

    cfg.regularizer_enabled = false;
    Trainer disabled(cfg, task.train, task.dev, task.vocab);
    disabled.run();

    const std::string p1 = temp_path("wdm_acc_hist_a.csv");
    const std::string p2 = temp_path("wdm_acc_hist_b.csv");
    with_branch.history().write_csv(p1);
    disabled.history().write_csv(p2);
    const bool files_equal = slurp(p1) == slurp(p2);
    std::remove(p1.c_str());
    std::remove(p2.c_str());

    const bool f_equal = with_branch.f_params().checksum() == disabled.f_params().checksum();
    const bool m_equal = with_branch.m_params().checksum() == disabled.m_params().checksum();
    detail = std::string("theta_F ") + (f_equal ? "equal" : "DIFFER") + ", theta_M " +
             (m_equal ? "equal" : "DIFFER") + ", history files " +
             (files_equal ? "equal" : "DIFFER");
    return f_equal && m_equal && files_equal;
}

bool criterion_fig4(std::string& detail) {
    const auto start = std::chrono::steady_clock::now();
    int wd_wins = 0, acc_ok = 0;
    std::ostringstream os;
    for (std::uint64_t s = 0; s < 5; ++s) {
        SynthTask task = make_task(5000, 16, 2.0, 1000 + s);
        TrainingConfig cfg = synth_config(16, 32, 50 + s);

        TrainingConfig base_cfg = cfg;
        base_cfg.regularizer_enabled = false;
        Trainer baseline(base_cfg, task.train, task.dev, task.vocab);
        baseline.run();

        Trainer regularized(cfg, task.train, task.dev, task.vocab);
        regularized.run();

        const double wd_base = baseline.history().rows.back().wd_estimate;
        const double wd_reg = regularized.history().rows.back().wd_estimate;
        const double acc_base = test_accuracy(baseline, task);
        const double acc_reg = test_accuracy(regularized, task);
        if (wd_reg < wd_base) ++wd_wins;
        if (acc_reg >= acc_base - 0.005) ++acc_ok;
        os << " seed" << s << "[wd " << format_g17(wd_base) << "->" << format_g17(wd_reg)
           << ", acc " << format_g17(acc_base) << "->" << format_g17(acc_reg) << "]";
    }
    const double secs = seconds_since(start);
    detail = "wd wins " + std::to_string(wd_wins) + "/5, acc ok " + std::to_string(acc_ok) +
             "/5, " + format_g17(secs) + "s;" + os.str();
    return wd_wins >= 4 && acc_ok >= 4 && secs < 600.0;
}

bool criterion_metric_oracles(std::string& detail) {
    Rng rng(171717);
    for (int trial = 0; trial < 200; ++trial) {
        // Random query set.
        std::vector<RankedQuery> queries;
        const std::size_t nq = 1 + rng.uniform_int(5);
        bool any_relevant = false;
        for (std::size_t qi = 0; qi < nq; ++qi) {
            RankedQuery q;
            q.query_id = "q" + std::to_string(qi);
            const std::size_t n = 1 + rng.uniform_int(8);
            for (std::size_t i = 0; i < n; ++i) {
                q.scores.push_back(rng.uniform(-1.0, 1.0));
                q.relevance.push_back(rng.bernoulli(0.4) ? 1 : 0);
                any_relevant = any_relevant || q.relevance.back() != 0;
            }
            queries.push_back(std::move(q));
        }
        double ap_sum = 0, rr_sum = 0;
        std::size_t counted = 0;
        for (const auto& q : queries) {
            std::vector<std::size_t> order(q.size());
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return q.scores[a] > q.scores[b];
            });
            double ap = 0, rr = 0;
            std::size_t rel = 0;
            for (std::size_t r = 0; r < order.size(); ++r) {
                if (q.relevance[order[r]] != 0) {
                    ++rel;
                    ap += static_cast<double>(rel) / static_cast<double>(r + 1);
                    if (rel == 1) rr = 1.0 / static_cast<double>(r + 1);
                }
            }
            if (rel == 0) continue;
            ap_sum += ap / static_cast<double>(rel);
            rr_sum += rr;
            ++counted;
        }
        if (!any_relevant) continue;
        const double map = mean_average_precision(queries);
        const double mrr = mean_reciprocal_rank(queries);
        if (std::fabs(map - ap_sum / static_cast<double>(counted)) > 1e-12 ||
            std::fabs(mrr - rr_sum / static_cast<double>(counted)) > 1e-12) {
            detail = "mismatch at trial " + std::to_string(trial);
            return false;
        }

        // Accuracy against direct counting.
        const std::size_t n = 1 + rng.uniform_int(40);
        std::vector<int> preds(n), labels(n);
        std::size_t hits = 0;
        for (std::size_t i = 0; i < n; ++i) {
            preds[i] = static_cast<int>(rng.uniform_int(3));
            labels[i] = static_cast<int>(rng.uniform_int(3));
            if (preds[i] == labels[i]) ++hits;
        }
        if (accuracy(preds, labels) != static_cast<double>(hits) / static_cast<double>(n)) {
            detail = "accuracy mismatch at trial " + std::to_string(trial);
            return false;
        }
    }
    detail = "200 random query sets matched brute force";
    return true;
}

bool criterion_determinism(std::string& detail) {
    SynthTask task = make_task(600, 8, 1.5, 404);
    TrainingConfig cfg = synth_config(8, 8, 31);
    cfg.projector.hidden = {16};
    cfg.matcher.hidden = {16};
    cfg.critic.hidden_width = 32;
    cfg.n2 = 64;
    cfg.epochs = 4;
    cfg.wd_eval.n_eval = 128;
    cfg.wd_eval.converge_steps = 40;

    // Identical seeds -> identical history files.
    Trainer a(cfg, task.train, task.dev, task.vocab);
    Trainer b(cfg, task.train, task.dev, task.vocab);
    a.run();
    b.run();
    const std::string p1 = temp_path("wdm_acc_det_a.csv");
    const std::string p2 = temp_path("wdm_acc_det_b.csv");
    a.history().write_csv(p1);
    b.history().write_csv(p2);
    const bool hist_equal = slurp(p1) == slurp(p2);
    std::remove(p1.c_str());
    std::remove(p2.c_str());

    // Save -> load -> resume matches the uninterrupted run bitwise.
    Trainer part(cfg, task.train, task.dev, task.vocab);
    part.run_epoch();
    part.run_epoch();
    const std::string ck = temp_path("wdm_acc_det.ckpt");
    save_checkpoint(ck, part.checkpoint());
    const Checkpoint loaded = load_checkpoint(ck);
    std::remove(ck.c_str());
    Trainer resumed(loaded, task.train, task.dev);
    resumed.run();
    const bool f_eq = resumed.f_params().checksum() == a.f_params().checksum();
    const bool m_eq = resumed.m_params().checksum() == a.m_params().checksum();
    const bool g_eq = resumed.g_params().checksum() == a.g_params().checksum();
    const bool h_eq = resumed.history().to_csv() == a.history().to_csv();
    detail = std::string("history ") + (hist_equal ? "equal" : "DIFFER") + "; resume F/M/G " +
             (f_eq ? "=" : "!") + (m_eq ? "=" : "!") + (g_eq ? "=" : "!") + ", resumed history " +
             (h_eq ? "equal" : "DIFFER");
    return hist_equal && f_eq && m_eq && g_eq && h_eq;
}

int run_all(std::vector<Criterion>& criteria) {
    int failures = 0;
    for (auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        std::string detail;
        bool ok = false;
        try {
            ok = c.fn(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        const double secs = seconds_since(start);
        std::printf("[%s] %s (%.1fs)%s%s\n", ok ? "PASS" : "FAIL", c.name.c_str(), secs,
                    detail.empty() ? "" : " - ", detail.c_str());
        std::fflush(stdout);
        if (!ok) ++failures;
    }
    return failures;
}

} // namespace

int main() {
    std::vector<Criterion> criteria;
    criteria.push_back({"1 gradient-check suite (<1e-4, <10s)", criterion_gradients});
    criteria.push_back({"2 clipping invariant over 200 rounds", criterion_clipping});
    criteria.push_back({"3 exact algebraic laws", criterion_algebraic_laws});
    criteria.push_back({"4 oracle consistency across the delta grid", criterion_oracle_consistency});
    criteria.push_back({"5 lambda=0 equivalence", criterion_lambda_zero});
    criteria.push_back({"6 qualitative WD-Diff reproduction", criterion_fig4});
    criteria.push_back({"7 metric oracles", criterion_metric_oracles});
    criteria.push_back({"8 determinism and checkpointing", criterion_determinism});
    const int failures = run_all(criteria);
    if (failures > 0) {
        std::printf("%d criterion(s) failed\n", failures);
        return 1;
    }
    std::printf("all acceptance criteria passed\n");
    return 0;
}
