#pragma once

#include <cmath>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "wdmatch/eval.hpp"
#include "wdmatch/graph.hpp"
#include "wdmatch/models.hpp"
#include "wdmatch/optim.hpp"
#include "wdmatch/rng.hpp"
#include "wdmatch/wdreg.hpp"

namespace wdmatch {

// Randomly composed differentiable graph touching every op kind across a
// seed sweep. Kink-bearing ops (relu/maximum/abs) are only accepted when all
// their inputs sit at least `kink_margin` away from the kink, so central
// differences stay valid.
struct RandomGraphSpec {
    std::size_t min_ops = 3;
    std::size_t max_ops = 8;
    double kink_margin = 2e-3;
    std::size_t max_attempts = 64;
};

namespace detail {

inline Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.5,
                            double hi = 1.5) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// Partner node with the same shape: usually an existing pool entry, else a
// fresh parameter.
inline NodeId same_shape_peer(Graph& g, std::vector<NodeId>& pool, NodeId a, Rng& rng,
                              int& param_idx) {
    const auto& shape = g.node(a).shape;
    std::vector<NodeId> candidates;
    for (NodeId p : pool) {
        if (p != a && g.node(p).shape == shape) candidates.push_back(p);
    }
    if (!candidates.empty() && rng.bernoulli(0.7)) {
        return candidates[rng.uniform_int(candidates.size())];
    }
    return g.parameter("p" + std::to_string(param_idx++), random_tensor(shape, rng));
}

// Builds one candidate graph; returns true if all kinks are comfortably
// avoided at the evaluation point.
inline bool try_build_random_graph(Graph& g, Rng& rng, const RandomGraphSpec& spec) {
    const std::size_t m = 2 + rng.uniform_int(3); // rows
    const std::size_t c = 2 + rng.uniform_int(3); // cols
    std::vector<NodeId> pool;
    std::vector<NodeId> kink_nodes;
    int param_idx = 0;
    auto fresh_param = [&](std::size_t rows, std::size_t cols) {
        return g.parameter("p" + std::to_string(param_idx++), random_tensor({rows, cols}, rng));
    };
    pool.push_back(fresh_param(m, c));
    pool.push_back(fresh_param(m, c));

    auto pick = [&]() { return pool[rng.uniform_int(pool.size())]; };
    const std::size_t ops = spec.min_ops + rng.uniform_int(spec.max_ops - spec.min_ops + 1);
    for (std::size_t i = 0; i < ops; ++i) {
        const std::size_t choice = rng.uniform_int(12);
        const NodeId a = pick();
        switch (choice) {
            case 0: { // matmul into a fresh width
                const std::size_t c2 = 2 + rng.uniform_int(3);
                const std::size_t cols = g.node(a).shape[1];
                NodeId w = g.parameter("p" + std::to_string(param_idx++),
                                       random_tensor({cols, c2}, rng, -0.7, 0.7));
                pool.push_back(g.matmul(a, w));
                break;
            }
            case 1: { // add with bias broadcast
                NodeId b = g.parameter("p" + std::to_string(param_idx++),
                                       random_tensor({1, g.node(a).shape[1]}, rng));
                pool.push_back(g.add(a, b));
                break;
            }
            case 2: {
                NodeId b = same_shape_peer(g, pool, a, rng, param_idx);
                pool.push_back(g.sub(a, b));
                break;
            }
            case 3: {
                NodeId b = same_shape_peer(g, pool, a, rng, param_idx);
                pool.push_back(g.mul(a, b));
                break;
            }
            case 4: {
                NodeId b = same_shape_peer(g, pool, a, rng, param_idx);
                NodeId mx = g.maximum(a, b);
                pool.push_back(mx);
                kink_nodes.push_back(mx);
                break;
            }
            case 5: {
                NodeId r = g.relu(a);
                pool.push_back(r);
                kink_nodes.push_back(r);
                break;
            }
            case 6:
                pool.push_back(g.tanh(a));
                break;
            case 7:
                pool.push_back(g.sigmoid(a));
                break;
            case 8: // exp of a bounded value
                pool.push_back(g.exp(g.tanh(a)));
                break;
            case 9: // log of a positive value
                pool.push_back(g.log(g.add(g.sigmoid(a), g.constant(Tensor::full(g.node(a).shape, 0.5)))));
                break;
            case 10: {
                NodeId ab = g.abs(a);
                pool.push_back(ab);
                kink_nodes.push_back(ab);
                break;
            }
            case 11: {
                NodeId b = same_shape_peer(g, pool, a, rng, param_idx);
                pool.push_back(g.concat({a, b}));
                break;
            }
        }
        pool.push_back(g.scale(pick(), rng.uniform(-1.2, 1.2)));
    }

    // Head: fold everything that shares the final node's shape is overkill;
    // reduce one pooled node through a loss-style head.
    const NodeId last = pool.back();
    NodeId loss;
    switch (rng.uniform_int(4)) {
        case 0:
            loss = g.reduce_mean(last);
            break;
        case 1:
            loss = g.reduce_sum(g.scale(last, 0.25));
            break;
        case 2: {
            std::vector<int> labels(g.node(last).shape[0]);
            for (auto& l : labels)
                l = static_cast<int>(rng.uniform_int(g.node(last).shape[1]));
            loss = g.reduce_mean(g.softmax_xent(last, std::move(labels)));
            break;
        }
        default: {
            const std::size_t rows = g.node(last).shape[0];
            NodeId w = g.parameter("p" + std::to_string(param_idx++),
                                   random_tensor({g.node(last).shape[1], 1}, rng, -0.7, 0.7));
            NodeId logit = g.matmul(last, w);
            std::vector<double> labels(rows);
            for (auto& l : labels) l = rng.uniform() < 0.5 ? 0.0 : 1.0;
            loss = g.reduce_mean(g.sigmoid_bce(logit, std::move(labels)));
            break;
        }
    }
    g.set_loss(loss);
    g.forward();

    for (NodeId id : kink_nodes) {
        const auto& inputs = g.node(id).inputs;
        const Tensor& a = g.node(inputs[0]).value;
        if (g.node(id).op == OpKind::Maximum) {
            const Tensor& b = g.node(inputs[1]).value;
            for (std::size_t i = 0; i < a.size(); ++i) {
                if (std::fabs(a[i] - b[i]) < spec.kink_margin) return false;
            }
        } else {
            for (std::size_t i = 0; i < a.size(); ++i) {
                if (std::fabs(a[i]) < spec.kink_margin) return false;
            }
        }
    }
    return true;
}

} // namespace detail

inline Graph build_random_graph(std::uint64_t seed, const RandomGraphSpec& spec = {}) {
    for (std::size_t attempt = 0; attempt < spec.max_attempts; ++attempt) {
        Rng rng(derive_seed(seed, 700 + attempt));
        Graph g;
        if (detail::try_build_random_graph(g, rng, spec)) return g;
    }
    throw StateError("build_random_graph: no kink-safe graph found for seed " +
                     std::to_string(seed));
}

// ---------------------------------------------------------------------------
// Self-test suites (also wired to the CLI `selftest` command).
// ---------------------------------------------------------------------------

struct SelftestOptions {
    std::size_t graphs = 25;
    bool inject_gradient_fault = false; // test fixture: corrupts one check
};

inline bool run_selftest(std::ostream& out, const SelftestOptions& opts = {}) {
    struct Suite {
        std::string name;
        std::function<bool(std::string&)> fn;
    };

    std::vector<Suite> suites;

    suites.push_back({"gradient-check", [&](std::string& detail) {
        double worst = 0.0;
        for (std::size_t s = 0; s < opts.graphs; ++s) {
            Graph g = build_random_graph(9000 + s);
            double err = check_gradients(g, 1e-5);
            if (opts.inject_gradient_fault && s == 0) err += 1.0;
            worst = std::max(worst, err);
        }
        detail = "max rel err " + format_g17(worst) + " over " + std::to_string(opts.graphs) +
                 " graphs";
        return worst < 1e-4;
    }});

    suites.push_back({"clip-invariants", [](std::string& detail) {
        Rng rng(41);
        for (int trial = 0; trial < 50; ++trial) {
            ParamSet p;
            p.tensors["w"] = detail::random_tensor({4, 4}, rng, -2.0, 2.0);
            const double c = rng.uniform(0.05, 0.8);
            clip_params(p, c);
            if (p.max_abs() > c) return false;
            ParamSet twice = p;
            clip_params(twice, c);
            if (twice.checksum() != p.checksum()) return false;
        }
        detail = "bound + idempotence over 50 trials";
        return true;
    }});

    suites.push_back({"critic-laws", [](std::string& detail) {
        Rng rng(43);
        CriticSpec cspec;
        cspec.hidden_width = 16;
        for (int trial = 0; trial < 20; ++trial) {
            ParamSet g_params = init_critic_params(6, cspec, rng);
            std::vector<FeaturePair> pairs;
            for (int i = 0; i < 9; ++i) {
                FeaturePair fp;
                for (int k = 0; k < 6; ++k) {
                    fp.hx.push_back(rng.uniform(-2.0, 2.0));
                    fp.hy.push_back(rng.uniform(-2.0, 2.0));
                }
                pairs.push_back(fp);
            }
            CriticBatch batch = CriticBatch::from_pairs(pairs);
            CriticBatch swapped;
            swapped.hx = batch.hy;
            swapped.hy = batch.hx;
            const double o = critic_objective_value(g_params, batch, Reduction::Sum);
            const double o_sw = critic_objective_value(g_params, swapped, Reduction::Sum);
            if (o_sw != -o) return false;
            CriticBatch equal;
            equal.hx = batch.hx;
            equal.hy = batch.hx;
            if (critic_objective_value(g_params, equal, Reduction::Sum) != 0.0) return false;
        }
        detail = "antisymmetry + zero law over 20 random batches";
        return true;
    }});

    suites.push_back({"metric-oracles", [](std::string& detail) {
        Rng rng(47);
        for (int trial = 0; trial < 50; ++trial) {
            RankedQuery q;
            q.query_id = "q";
            const std::size_t n = 2 + rng.uniform_int(6);
            bool any = false;
            for (std::size_t i = 0; i < n; ++i) {
                q.scores.push_back(rng.uniform(-1.0, 1.0));
                const int rel = rng.bernoulli(0.4) ? 1 : 0;
                any = any || rel;
                q.relevance.push_back(rel);
            }
            if (!any) q.relevance[0] = 1;
            // Brute force from the definition.
            std::vector<std::size_t> order(n);
            for (std::size_t i = 0; i < n; ++i) order[i] = i;
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return q.scores[a] > q.scores[b];
            });
            double ap = 0.0, rr = 0.0;
            std::size_t seen = 0;
            for (std::size_t r = 0; r < n; ++r) {
                if (q.relevance[order[r]]) {
                    ++seen;
                    ap += static_cast<double>(seen) / static_cast<double>(r + 1);
                    if (seen == 1) rr = 1.0 / static_cast<double>(r + 1);
                }
            }
            ap /= static_cast<double>(seen);
            if (std::fabs(average_precision(q) - ap) > 1e-12) return false;
            if (std::fabs(reciprocal_rank(q) - rr) > 1e-12) return false;
        }
        detail = "MAP/MRR vs definitional recomputation over 50 query sets";
        return true;
    }});

    suites.push_back({"w1-oracle", [](std::string& detail) {
        Rng rng(53);
        for (int trial = 0; trial < 30; ++trial) {
            std::vector<double> xs, ys, zs;
            const std::size_t n = 3 + rng.uniform_int(20);
            for (std::size_t i = 0; i < n; ++i) {
                xs.push_back(rng.normal());
                ys.push_back(rng.normal());
                zs.push_back(rng.normal());
            }
            const double dxy = w1_empirical_1d(xs, ys);
            if (dxy < 0.0) return false;
            if (std::fabs(dxy - w1_empirical_1d(ys, xs)) > 1e-12) return false;
            if (w1_empirical_1d(xs, xs) != 0.0) return false;
            const double dxz = w1_empirical_1d(xs, zs);
            const double dzy = w1_empirical_1d(zs, ys);
            if (dxy > dxz + dzy + 1e-12) return false;
        }
        detail = "symmetry, identity, triangle inequality over 30 triples";
        return true;
    }});

    bool all_ok = true;
    for (auto& suite : suites) {
        std::string detail;
        bool ok = false;
        try {
            ok = suite.fn(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        out << (ok ? "[PASS] " : "[FAIL] ") << suite.name;
        if (!detail.empty()) out << " (" << detail << ")";
        out << "\n";
        all_ok = all_ok && ok;
    }
    return all_ok;
}

} // namespace wdmatch
