#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "wdmatch/errors.hpp"
#include "wdmatch/rng.hpp"
#include "wdmatch/tensor.hpp"

namespace wdmatch {

enum class TaskKind { Classification, Ranking };

inline TaskKind task_from_string(const std::string& s) {
    if (s == "classification") return TaskKind::Classification;
    if (s == "ranking") return TaskKind::Ranking;
    throw ConfigError("task: expected 'classification' or 'ranking', got '" + s + "'");
}

inline const char* task_to_string(TaskKind t) {
    return t == TaskKind::Classification ? "classification" : "ranking";
}

// One training record: two token-id sequences and a label. Ranking records
// additionally carry the query group key.
struct Triple {
    std::vector<int> x;
    std::vector<int> y;
    int z = 0;
    std::string query_id;
};

// Lowercase + whitespace split. Idempotent: tokens contain no whitespace or
// uppercase, so re-tokenizing a joined token list reproduces it.
inline std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!cur.empty()) {
                out.push_back(cur);
                cur.clear();
            }
        } else {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

// Raw dataset row before vocabulary mapping.
struct RawRecord {
    std::vector<std::string> x_tokens;
    std::vector<std::string> y_tokens;
    std::string label;
    std::string query_id;
    std::size_t line_no = 0;
};

// Reads the tab-separated dataset format: one header line
// `text_a<TAB>text_b<TAB>label[<TAB>query_id]`, then one record per line.
inline std::vector<RawRecord> read_records(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset file '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ":1: empty dataset file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, '\t')) header.push_back(field);
    }
    const bool has_query = header.size() == 4 && header[3] == "query_id";
    if (!(header.size() == 3 || has_query) || header[0] != "text_a" || header[1] != "text_b" ||
        header[2] != "label") {
        throw DataError(path + ":1: expected header 'text_a\ttext_b\tlabel[\tquery_id]'");
    }
    std::vector<RawRecord> records;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            const std::size_t tab = line.find('\t', start);
            fields.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (fields.size() != header.size()) {
            throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(header.size()) + " tab-separated fields, got " +
                            std::to_string(fields.size()));
        }
        RawRecord rec;
        rec.x_tokens = tokenize(fields[0]);
        rec.y_tokens = tokenize(fields[1]);
        rec.label = fields[2];
        if (has_query) rec.query_id = fields[3];
        rec.line_no = line_no;
        records.push_back(std::move(rec));
    }
    return records;
}

// Token ids with id 0 reserved for padding/unknown, plus the frozen
// embedding matrix (one row per id).
struct Vocabulary {
    std::vector<std::string> id_to_token{"<pad>"};
    std::unordered_map<std::string, int> token_to_id;
    Tensor embeddings;
    int dim = 0;
    std::size_t loaded_from_file = 0;
    std::size_t duplicates_skipped = 0;

    int size() const { return static_cast<int>(id_to_token.size()); }

    int id(const std::string& token) const {
        auto it = token_to_id.find(token);
        return it == token_to_id.end() ? 0 : it->second;
    }

    int add(const std::string& token) {
        auto it = token_to_id.find(token);
        if (it != token_to_id.end()) return it->second;
        const int new_id = size();
        id_to_token.push_back(token);
        token_to_id.emplace(token, new_id);
        return new_id;
    }

    std::vector<int> map(const std::vector<std::string>& tokens) const {
        std::vector<int> ids;
        ids.reserve(tokens.size());
        for (const auto& t : tokens) ids.push_back(id(t));
        return ids;
    }

    std::span<const double> row(int id) const {
        return embeddings.data().subspan(static_cast<std::size_t>(id) * dim,
                                         static_cast<std::size_t>(dim));
    }
};

inline void add_corpus(Vocabulary& vocab, const std::vector<RawRecord>& records) {
    for (const auto& rec : records) {
        for (const auto& t : rec.x_tokens) vocab.add(t);
        for (const auto& t : rec.y_tokens) vocab.add(t);
    }
}

// Attaches embedding rows to an existing vocabulary. Tokens present in the
// GloVe-format file take the file vector (first occurrence wins); tokens
// absent from the file draw uniform [-0.05, 0.05] components from the init
// stream, in id order. Id 0 keeps the zero vector. An empty path means no
// file: every token gets a random frozen vector.
inline void load_embeddings(Vocabulary& vocab, const std::string& path, int dim, Rng& init_rng) {
    if (dim <= 0) throw ConfigError("embedding dim must be positive");
    vocab.dim = dim;
    std::unordered_map<std::string, std::vector<double>> file_vectors;
    vocab.duplicates_skipped = 0;
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open embeddings file '" + path + "'");
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            std::istringstream ss(line);
            std::string token;
            ss >> token;
            std::vector<double> vec;
            double v;
            while (ss >> v) vec.push_back(v);
            if (!ss.eof()) {
                throw DataError(path + ":" + std::to_string(line_no) +
                                ": malformed embedding component");
            }
            if (static_cast<int>(vec.size()) != dim) {
                throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                                std::to_string(dim) + " components for token '" + token +
                                "', got " + std::to_string(vec.size()));
            }
            auto [it, inserted] = file_vectors.emplace(token, std::move(vec));
            if (!inserted) ++vocab.duplicates_skipped;
        }
        if (vocab.duplicates_skipped > 0) {
            std::cerr << "warning: " << vocab.duplicates_skipped << " duplicate token(s) in '"
                      << path << "', first occurrence kept\n";
        }
    }
    const std::size_t v = static_cast<std::size_t>(vocab.size());
    Tensor emb({v, static_cast<std::size_t>(dim)});
    vocab.loaded_from_file = 0;
    for (std::size_t id = 1; id < v; ++id) {
        auto it = file_vectors.find(vocab.id_to_token[id]);
        if (it != file_vectors.end()) {
            for (int d = 0; d < dim; ++d) emb[id * dim + d] = it->second[static_cast<std::size_t>(d)];
            ++vocab.loaded_from_file;
        } else {
            for (int d = 0; d < dim; ++d) emb[id * dim + d] = init_rng.uniform(-0.05, 0.05);
        }
    }
    emb.ensure_finite("load_embeddings");
    vocab.embeddings = std::move(emb);
}

// Label-string to class-index mapping. Integer labels are always accepted;
// named labels resolve through the configured class list, which defaults to
// the inference convention: entailment=0, neutral=1, contradiction=2.
struct LabelMap {
    std::vector<std::string> names{"entailment", "neutral", "contradiction"};

    int index_of(const std::string& label) const {
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (names[i] == label) return static_cast<int>(i);
        }
        return -1;
    }
};

struct LoadStats {
    std::size_t skipped_unlabeled = 0;
};

// Maps raw records through the vocabulary into Triples. Classification rows
// labeled "-" are dropped (and counted); ranking rows need a binary label
// and a query id.
inline std::vector<Triple> map_records(const std::vector<RawRecord>& records,
                                       const std::string& path, TaskKind task,
                                       const Vocabulary& vocab, const LabelMap& labels,
                                       LoadStats* stats = nullptr) {
    std::vector<Triple> out;
    out.reserve(records.size());
    for (const auto& rec : records) {
        const std::string where = path + ":" + std::to_string(rec.line_no);
        if (rec.x_tokens.empty() || rec.y_tokens.empty()) {
            throw DataError(where + ": empty text field");
        }
        Triple t;
        t.x = vocab.map(rec.x_tokens);
        t.y = vocab.map(rec.y_tokens);
        if (task == TaskKind::Classification) {
            if (rec.label == "-") {
                if (stats) ++stats->skipped_unlabeled;
                continue;
            }
            int value = 0;
            const auto [p, ec] =
                std::from_chars(rec.label.data(), rec.label.data() + rec.label.size(), value);
            if (ec == std::errc() && p == rec.label.data() + rec.label.size()) {
                if (value < 0) throw DataError(where + ": negative class index");
                t.z = value;
            } else {
                const int idx = labels.index_of(rec.label);
                if (idx < 0) throw DataError(where + ": unknown label '" + rec.label + "'");
                t.z = idx;
            }
        } else {
            if (rec.label != "0" && rec.label != "1") {
                throw DataError(where + ": ranking label must be 0 or 1, got '" + rec.label + "'");
            }
            if (rec.query_id.empty()) {
                throw DataError(where + ": ranking record missing query_id");
            }
            t.z = rec.label == "1" ? 1 : 0;
            t.query_id = rec.query_id;
        }
        out.push_back(std::move(t));
    }
    return out;
}

inline std::vector<Triple> load_triples(const std::string& path, TaskKind task,
                                        const Vocabulary& vocab, const LabelMap& labels = {},
                                        LoadStats* stats = nullptr) {
    return map_records(read_records(path), path, task, vocab, labels, stats);
}

// Without-replacement minibatch stream: walks a shuffled permutation of the
// dataset, keeps the final short batch, and reshuffles at each new pass.
class BatchSampler {
public:
    BatchSampler() = default;

    BatchSampler(std::size_t dataset_size, Rng rng) : rng_(std::move(rng)) {
        if (dataset_size == 0) throw DataError("sample_minibatch: empty dataset");
        order_.resize(dataset_size);
        for (std::size_t i = 0; i < dataset_size; ++i) order_[i] = i;
        rng_.shuffle(order_);
    }

    std::vector<std::size_t> next(std::size_t batch_size) {
        if (batch_size == 0) throw ConfigError("sample_minibatch: batch size must be positive");
        if (cursor_ >= order_.size()) {
            rng_.shuffle(order_);
            cursor_ = 0;
        }
        const std::size_t take = std::min(batch_size, order_.size() - cursor_);
        std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                     order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + take));
        cursor_ += take;
        return out;
    }

    std::size_t dataset_size() const { return order_.size(); }
    std::size_t cursor() const { return cursor_; }
    const std::vector<std::size_t>& order() const { return order_; }
    const Rng& rng() const { return rng_; }

    static BatchSampler restore(std::vector<std::size_t> order, std::size_t cursor, Rng rng) {
        BatchSampler s;
        s.order_ = std::move(order);
        s.cursor_ = cursor;
        s.rng_ = std::move(rng);
        return s;
    }

private:
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
    Rng rng_;
};

// ---------------------------------------------------------------------------
// Synthetic asymmetric-domain generation.
//
// Two latent topics sit at +/-2 on the last latent axis. Domain-B token
// embeddings are additionally shifted by delta along the first latent axis,
// so the population means of the two domains' first-axis projections differ
// by exactly delta. The label is 1 iff the two topics match, which makes the
// optimal label rule exact by construction.
// ---------------------------------------------------------------------------

struct SynthSpec {
    int latent_dim = 8;
    double delta = 2.0;
    int vocab_a = 100;
    int vocab_b = 100;
    int len_min = 3;
    int len_max = 8;
    int pairs = 1000;
    double positive_rate = 0.5;
};

struct SyntheticRecord {
    std::vector<std::string> x_tokens;
    std::vector<std::string> y_tokens;
    int label = 0;
    double x_latent = 0.0; // first-axis projection of the mean token embedding
    double y_latent = 0.0;
};

struct SyntheticData {
    std::vector<SyntheticRecord> train;
    std::vector<SyntheticRecord> dev;
    std::vector<SyntheticRecord> test;
    std::vector<std::string> tokens; // domain A tokens, then domain B tokens
    Tensor token_embeddings;         // [tokens, latent_dim]
};

inline void validate(const SynthSpec& spec) {
    if (spec.latent_dim < 1) throw ConfigError("synth.latent_dim must be >= 1");
    if (!(spec.delta >= 0.0) || !std::isfinite(spec.delta)) {
        throw ConfigError("synth.delta must be finite and >= 0");
    }
    if (spec.vocab_a < 2 || spec.vocab_b < 2) throw ConfigError("synth vocab sizes must be >= 2");
    if (spec.len_min < 1 || spec.len_max < spec.len_min) {
        throw ConfigError("synth sequence length range invalid");
    }
    if (spec.pairs < 1) throw ConfigError("synth.pairs must be >= 1");
    if (spec.positive_rate < 0.0 || spec.positive_rate > 1.0) {
        throw ConfigError("synth.positive_rate must be in [0, 1]");
    }
}

inline SyntheticData generate_synthetic(const SynthSpec& spec, std::uint64_t seed) {
    validate(spec);
    Rng rng(derive_seed(seed, 101));
    const std::size_t d = static_cast<std::size_t>(spec.latent_dim);
    const std::size_t topic_axis = d - 1;
    const double topic_sep = 2.0;
    const double token_noise = 0.5;

    SyntheticData out;
    const std::size_t va = static_cast<std::size_t>(spec.vocab_a);
    const std::size_t vb = static_cast<std::size_t>(spec.vocab_b);
    out.tokens.reserve(va + vb);
    out.token_embeddings = Tensor({va + vb, d});
    auto emit_token = [&](const std::string& name, std::size_t row, int topic, double shift) {
        out.tokens.push_back(name);
        for (std::size_t k = 0; k < d; ++k) {
            double v = rng.normal(0.0, token_noise);
            if (k == topic_axis) v += topic == 0 ? topic_sep : -topic_sep;
            if (k == 0) v += shift;
            out.token_embeddings[row * d + k] = v;
        }
    };
    for (std::size_t j = 0; j < va; ++j) {
        emit_token("a" + std::to_string(j), j, static_cast<int>(j % 2), 0.0);
    }
    for (std::size_t j = 0; j < vb; ++j) {
        emit_token("b" + std::to_string(j), va + j, static_cast<int>(j % 2), spec.delta);
    }

    // Exact positive count, shuffled: keeps the label balance within 1/n of
    // the requested rate for any seed.
    const std::size_t n = static_cast<std::size_t>(spec.pairs);
    std::vector<char> positive(n, 0);
    const std::size_t n_pos =
        static_cast<std::size_t>(std::llround(spec.positive_rate * static_cast<double>(n)));
    for (std::size_t i = 0; i < std::min(n_pos, n); ++i) positive[i] = 1;
    rng.shuffle(positive);

    auto draw_tokens = [&](std::size_t base, std::size_t vocab_size, int topic,
                           std::vector<std::string>& toks, double& latent) {
        const std::size_t len = static_cast<std::size_t>(spec.len_min) +
                                rng.uniform_int(static_cast<std::uint64_t>(spec.len_max - spec.len_min + 1));
        const std::size_t per_topic = (vocab_size + (topic == 0 ? 1 : 0)) / 2;
        double acc = 0.0;
        for (std::size_t t = 0; t < len; ++t) {
            const std::size_t k = rng.uniform_int(per_topic);
            const std::size_t j = static_cast<std::size_t>(topic) + 2 * k;
            toks.push_back(out.tokens[base + j]);
            acc += out.token_embeddings[(base + j) * d + 0];
        }
        latent = acc / static_cast<double>(len);
    };

    std::vector<SyntheticRecord> all;
    all.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        SyntheticRecord rec;
        const int tx = static_cast<int>(rng.uniform_int(2));
        rec.label = positive[i] ? 1 : 0;
        const int ty = rec.label == 1 ? tx : 1 - tx;
        draw_tokens(0, va, tx, rec.x_tokens, rec.x_latent);
        draw_tokens(va, vb, ty, rec.y_tokens, rec.y_latent);
        all.push_back(std::move(rec));
    }

    const std::size_t n_dev = std::max<std::size_t>(n >= 10 ? n / 10 : 0, n >= 3 ? 1 : 0);
    const std::size_t n_test = n_dev;
    const std::size_t n_train = n - n_dev - n_test;
    out.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.dev.assign(all.begin() + static_cast<std::ptrdiff_t>(n_train),
                   all.begin() + static_cast<std::ptrdiff_t>(n_train + n_dev));
    out.test.assign(all.begin() + static_cast<std::ptrdiff_t>(n_train + n_dev), all.end());
    return out;
}

// Vocabulary over the synthetic token set, carrying the generator's own
// embeddings (id 0 keeps the zero pad row).
inline Vocabulary vocabulary_from_synthetic(const SyntheticData& d) {
    Vocabulary v;
    for (const auto& t : d.tokens) v.add(t);
    const std::size_t dim = d.token_embeddings.cols();
    v.dim = static_cast<int>(dim);
    Tensor emb({static_cast<std::size_t>(v.size()), dim});
    for (std::size_t row = 0; row < d.tokens.size(); ++row) {
        for (std::size_t k = 0; k < dim; ++k) {
            emb[(row + 1) * dim + k] = d.token_embeddings[row * dim + k];
        }
    }
    v.embeddings = std::move(emb);
    return v;
}

inline std::vector<Triple> triples_from_synthetic(const std::vector<SyntheticRecord>& records,
                                                  const Vocabulary& vocab) {
    std::vector<Triple> out;
    out.reserve(records.size());
    for (const auto& rec : records) {
        Triple t;
        t.x = vocab.map(rec.x_tokens);
        t.y = vocab.map(rec.y_tokens);
        t.z = rec.label;
        out.push_back(std::move(t));
    }
    return out;
}

} // namespace wdmatch
