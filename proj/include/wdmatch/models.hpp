#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "wdmatch/data.hpp"
#include "wdmatch/errors.hpp"
#include "wdmatch/graph.hpp"
#include "wdmatch/optim.hpp"
#include "wdmatch/rng.hpp"

namespace wdmatch {

enum class EncoderKind { BagOfEmbeddings, AlignPool };

inline EncoderKind encoder_from_string(const std::string& s) {
    if (s == "bag") return EncoderKind::BagOfEmbeddings;
    if (s == "align-pool") return EncoderKind::AlignPool;
    throw ConfigError("encoder: expected 'bag' or 'align-pool', got '" + s + "'");
}

inline const char* encoder_to_string(EncoderKind k) {
    return k == EncoderKind::BagOfEmbeddings ? "bag" : "align-pool";
}

// Shared-parameter feature projection F. The encoder pools frozen token
// embeddings into a fixed-size row; the trainable part is an MLP from that
// row to the K-dimensional semantic space, applied identically to the X and
// Y paths.
struct ProjectorSpec {
    EncoderKind encoder = EncoderKind::BagOfEmbeddings;
    int embedding_dim = 0;
    int feature_dim = 0; // K
    std::vector<int> hidden;
};

inline int encoder_output_dim(const ProjectorSpec& spec) {
    return spec.encoder == EncoderKind::AlignPool ? 2 * spec.embedding_dim : spec.embedding_dim;
}

// Critic G: one rectified layer, one linear layer to a single real output.
struct CriticSpec {
    int hidden_width = 128;
    double clip = 0.1;
};

// Matcher M over the projected pair.
struct MatcherSpec {
    TaskKind task = TaskKind::Classification;
    int classes = 2;
    std::vector<int> hidden;
    bool enrich = true; // feed [h_x, h_y, h_x*h_y, |h_x - h_y|] instead of [h_x, h_y]
};

inline int matcher_input_dim(int feature_dim, const MatcherSpec& spec) {
    return (spec.enrich ? 4 : 2) * feature_dim;
}

inline int matcher_output_dim(const MatcherSpec& spec) {
    return spec.task == TaskKind::Classification ? spec.classes : 1;
}

struct FeaturePair {
    std::vector<double> hx;
    std::vector<double> hy;
};

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

inline Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t({fan_in, fan_out});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

// Dense stack init: weights glorot uniform, biases zero, names
// <prefix>.W<i> / <prefix>.b<i> with layer dims in -> dims[0] -> ... -> out.
inline ParamSet init_dense_stack(const std::string& prefix, int input_dim,
                                 const std::vector<int>& hidden, int output_dim, Rng& rng) {
    if (input_dim <= 0 || output_dim <= 0) {
        throw ConfigError(prefix + ": layer dims must be positive");
    }
    for (int h : hidden) {
        if (h <= 0) throw ConfigError(prefix + ": hidden dims must be positive");
    }
    ParamSet params;
    std::vector<int> dims;
    dims.push_back(input_dim);
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(output_dim);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const auto rows = static_cast<std::size_t>(dims[l]);
        const auto cols = static_cast<std::size_t>(dims[l + 1]);
        params.tensors[prefix + ".W" + std::to_string(l)] = glorot_uniform(rows, cols, rng);
        params.tensors[prefix + ".b" + std::to_string(l)] = Tensor({1, cols});
    }
    return params;
}

inline ParamSet init_projector_params(const ProjectorSpec& spec, Rng& rng) {
    if (spec.embedding_dim <= 0) throw ConfigError("projector: embedding_dim must be positive");
    if (spec.feature_dim <= 0) throw ConfigError("projector: feature_dim must be positive");
    return init_dense_stack("F", encoder_output_dim(spec), spec.hidden, spec.feature_dim, rng);
}

inline ParamSet init_critic_params(int feature_dim, const CriticSpec& spec, Rng& rng) {
    if (spec.hidden_width <= 0) throw ConfigError("critic: hidden_width must be positive");
    if (spec.clip <= 0.0) throw ConfigError("critic: clip threshold must be positive");
    return init_dense_stack("G", feature_dim, {spec.hidden_width}, 1, rng);
}

inline ParamSet init_matcher_params(int feature_dim, const MatcherSpec& spec, Rng& rng) {
    if (spec.task == TaskKind::Classification && spec.classes < 2) {
        throw ConfigError("matcher: classification needs at least 2 classes");
    }
    return init_dense_stack("M", matcher_input_dim(feature_dim, spec), spec.hidden,
                            matcher_output_dim(spec), rng);
}

inline ParamSet init_params(const ProjectorSpec& spec, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 1));
    return init_projector_params(spec, rng);
}

inline ParamSet init_params(int feature_dim, const CriticSpec& spec, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 2));
    return init_critic_params(feature_dim, spec, rng);
}

inline ParamSet init_params(int feature_dim, const MatcherSpec& spec, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 3));
    return init_matcher_params(feature_dim, spec, rng);
}

// ---------------------------------------------------------------------------
// Encoders (frozen-embedding pooling, outside the autodiff graph)
// ---------------------------------------------------------------------------

inline void check_ids(const std::vector<int>& ids, const Vocabulary& vocab, const char* side) {
    if (ids.empty()) throw DataError(std::string(side) + " sequence is empty");
    for (int id : ids) {
        if (id < 0 || id >= vocab.size()) {
            throw DataError(std::string(side) + " sequence: token id " + std::to_string(id) +
                            " out of vocabulary range [0," + std::to_string(vocab.size()) + ")");
        }
    }
}

// Mean of embedding rows, accumulated in sorted-id order so that the pooled
// vector is bit-identical under any permutation of the tokens.
inline std::vector<double> encode_bag(const std::vector<int>& ids, const Vocabulary& vocab) {
    check_ids(ids, vocab, "bag");
    std::vector<int> sorted = ids;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t dim = static_cast<std::size_t>(vocab.dim);
    std::vector<double> out(dim, 0.0);
    for (int id : sorted) {
        const auto row = vocab.row(id);
        for (std::size_t k = 0; k < dim; ++k) out[k] += row[k];
    }
    const double inv = 1.0 / static_cast<double>(sorted.size());
    for (double& v : out) v *= inv;
    return out;
}

// Soft cross-alignment of `a` against `b` followed by mean pooling of
// [token, aligned-context] rows; gives a 2E-dim row for the `a` side.
inline std::vector<double> encode_align(const std::vector<int>& a, const std::vector<int>& b,
                                        const Vocabulary& vocab) {
    check_ids(a, vocab, "align lhs");
    check_ids(b, vocab, "align rhs");
    const std::size_t dim = static_cast<std::size_t>(vocab.dim);
    std::vector<double> out(2 * dim, 0.0);
    std::vector<double> weights(b.size());
    for (int ai : a) {
        const auto ra = vocab.row(ai);
        double mx = -1e300;
        for (std::size_t j = 0; j < b.size(); ++j) {
            const auto rb = vocab.row(b[j]);
            double dot = 0.0;
            for (std::size_t k = 0; k < dim; ++k) dot += ra[k] * rb[k];
            weights[j] = dot;
            mx = std::max(mx, dot);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < b.size(); ++j) {
            weights[j] = std::exp(weights[j] - mx);
            z += weights[j];
        }
        for (std::size_t k = 0; k < dim; ++k) out[k] += ra[k];
        for (std::size_t j = 0; j < b.size(); ++j) {
            const auto rb = vocab.row(b[j]);
            const double w = weights[j] / z;
            for (std::size_t k = 0; k < dim; ++k) out[dim + k] += w * rb[k];
        }
    }
    const double inv = 1.0 / static_cast<double>(a.size());
    for (double& v : out) v *= inv;
    return out;
}

// Pooled encoder rows for one pair: (row for X, row for Y).
inline std::pair<std::vector<double>, std::vector<double>> encode_pair(const ProjectorSpec& spec,
                                                                       const Vocabulary& vocab,
                                                                       const std::vector<int>& x,
                                                                       const std::vector<int>& y) {
    if (vocab.dim != spec.embedding_dim) {
        throw ShapeError("encoder: vocabulary dim " + std::to_string(vocab.dim) +
                         " != spec embedding_dim " + std::to_string(spec.embedding_dim));
    }
    if (spec.encoder == EncoderKind::BagOfEmbeddings) {
        return {encode_bag(x, vocab), encode_bag(y, vocab)};
    }
    return {encode_align(x, y, vocab), encode_align(y, x, vocab)};
}

// Pooled rows for a whole dataset; row i of x/y belongs to triple i.
struct EncodedPairs {
    Tensor x; // [N, D]
    Tensor y; // [N, D]

    std::size_t size() const { return x.rows(); }
    std::size_t dim() const { return x.cols(); }

    EncodedPairs gather(const std::vector<std::size_t>& idx) const {
        const std::size_t d = dim();
        EncodedPairs out;
        out.x = Tensor({idx.size(), d});
        out.y = Tensor({idx.size(), d});
        for (std::size_t r = 0; r < idx.size(); ++r) {
            for (std::size_t k = 0; k < d; ++k) {
                out.x.at(r, k) = x.at(idx[r], k);
                out.y.at(r, k) = y.at(idx[r], k);
            }
        }
        return out;
    }
};

inline EncodedPairs encode_dataset(const std::vector<Triple>& triples, const Vocabulary& vocab,
                                   const ProjectorSpec& spec) {
    if (triples.empty()) throw DataError("encode_dataset: empty dataset");
    const std::size_t d = static_cast<std::size_t>(encoder_output_dim(spec));
    EncodedPairs out;
    out.x = Tensor({triples.size(), d});
    out.y = Tensor({triples.size(), d});
    for (std::size_t i = 0; i < triples.size(); ++i) {
        auto [rx, ry] = encode_pair(spec, vocab, triples[i].x, triples[i].y);
        for (std::size_t k = 0; k < d; ++k) {
            out.x.at(i, k) = rx[k];
            out.y.at(i, k) = ry[k];
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Graph builders
// ---------------------------------------------------------------------------

inline NodeId leaf(Graph& g, const std::string& name, const Tensor& value, bool trainable) {
    return trainable ? g.parameter(name, value) : g.constant(value, name);
}

// Dense stack with tanh hidden activations and a linear output layer.
// Re-registering the same trainable names shares the parameters, which is
// what ties the X and Y projection paths together.
inline NodeId build_dense_stack(Graph& g, NodeId in, const ParamSet& params,
                                const std::string& prefix, std::size_t layers, bool trainable,
                                bool relu_hidden = false) {
    NodeId h = in;
    for (std::size_t l = 0; l < layers; ++l) {
        const NodeId w = leaf(g, prefix + ".W" + std::to_string(l),
                              params.at(prefix + ".W" + std::to_string(l)), trainable);
        const NodeId b = leaf(g, prefix + ".b" + std::to_string(l),
                              params.at(prefix + ".b" + std::to_string(l)), trainable);
        h = g.add(g.matmul(h, w), b);
        if (l + 1 < layers) h = relu_hidden ? g.relu(h) : g.tanh(h);
    }
    return h;
}

inline std::size_t stack_layers(const ParamSet& params, const std::string& prefix) {
    std::size_t layers = 0;
    while (params.tensors.count(prefix + ".W" + std::to_string(layers))) ++layers;
    if (layers == 0) throw StateError("no '" + prefix + ".W0' parameter found");
    return layers;
}

inline NodeId build_projector(Graph& g, NodeId in, const ParamSet& f_params,
                              const ProjectorSpec& spec, bool trainable) {
    return build_dense_stack(g, in, f_params, "F", spec.hidden.size() + 1, trainable);
}

inline NodeId build_critic(Graph& g, NodeId features, const ParamSet& g_params, bool trainable) {
    const NodeId w0 = leaf(g, "G.W0", g_params.at("G.W0"), trainable);
    const NodeId b0 = leaf(g, "G.b0", g_params.at("G.b0"), trainable);
    const NodeId w1 = leaf(g, "G.W1", g_params.at("G.W1"), trainable);
    const NodeId b1 = leaf(g, "G.b1", g_params.at("G.b1"), trainable);
    const NodeId hidden = g.relu(g.add(g.matmul(features, w0), b0));
    return g.add(g.matmul(hidden, w1), b1);
}

inline NodeId build_matcher(Graph& g, NodeId hx, NodeId hy, const ParamSet& m_params,
                            const MatcherSpec& spec, bool trainable) {
    std::vector<NodeId> parts{hx, hy};
    if (spec.enrich) {
        parts.push_back(g.mul(hx, hy));
        parts.push_back(g.abs(g.sub(hx, hy)));
    }
    const NodeId in = g.concat(parts);
    return build_dense_stack(g, in, m_params, "M", spec.hidden.size() + 1, trainable);
}

// ---------------------------------------------------------------------------
// Single-pair and batch application
// ---------------------------------------------------------------------------

// Forward-only projection of pooled rows: [N, D] -> [N, K].
inline Tensor apply_projector(const ParamSet& f_params, const ProjectorSpec& spec,
                              const Tensor& rows) {
    Graph g;
    const NodeId out = build_projector(g, g.constant(rows, "rows"), f_params, spec, false);
    g.forward();
    return g.value(out);
}

inline FeaturePair project(const ParamSet& f_params, const ProjectorSpec& spec,
                           const std::vector<int>& x, const std::vector<int>& y,
                           const Vocabulary& vocab) {
    auto [rx, ry] = encode_pair(spec, vocab, x, y);
    const std::size_t d = rx.size();
    Tensor rows({2, d});
    for (std::size_t k = 0; k < d; ++k) {
        rows.at(0, k) = rx[k];
        rows.at(1, k) = ry[k];
    }
    const Tensor feats = apply_projector(f_params, spec, rows);
    FeaturePair fp;
    const std::size_t k_dim = feats.cols();
    fp.hx.resize(k_dim);
    fp.hy.resize(k_dim);
    for (std::size_t k = 0; k < k_dim; ++k) {
        fp.hx[k] = feats.at(0, k);
        fp.hy[k] = feats.at(1, k);
    }
    return fp;
}

inline double critic_score(const ParamSet& g_params, const std::vector<double>& h) {
    const std::size_t k = g_params.at("G.W0").rows();
    if (h.size() != k) {
        throw ShapeError("critic_score: feature has dim " + std::to_string(h.size()) +
                         ", critic expects " + std::to_string(k));
    }
    Graph g;
    const NodeId in = g.constant(Tensor({1, k}, std::vector<double>(h)), "h");
    const NodeId out = build_critic(g, in, g_params, false);
    g.forward();
    return g.value(out)[0];
}

inline std::vector<double> match_predict(const ParamSet& m_params, const MatcherSpec& spec,
                                         const FeaturePair& fp) {
    if (fp.hx.size() != fp.hy.size()) {
        throw ShapeError("match_predict: feature halves differ in length");
    }
    const std::size_t k = fp.hx.size();
    const auto expect = static_cast<std::size_t>(m_params.at("M.W0").rows());
    if (static_cast<std::size_t>(spec.enrich ? 4 : 2) * k != expect) {
        throw ShapeError("match_predict: feature dim " + std::to_string(k) +
                         " incompatible with matcher input dim " + std::to_string(expect));
    }
    Graph g;
    const NodeId hx = g.constant(Tensor({1, k}, std::vector<double>(fp.hx)), "hx");
    const NodeId hy = g.constant(Tensor({1, k}, std::vector<double>(fp.hy)), "hy");
    const NodeId out = build_matcher(g, hx, hy, m_params, spec, false);
    g.forward();
    const Tensor& logits = g.value(out);
    return std::vector<double>(logits.data().begin(), logits.data().end());
}

} // namespace wdmatch
