#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "wdmatch/config.hpp"
#include "wdmatch/data.hpp"
#include "wdmatch/errors.hpp"
#include "wdmatch/history.hpp"
#include "wdmatch/optim.hpp"
#include "wdmatch/rng.hpp"

namespace wdmatch {

namespace bin {

// Little-endian binary buffer writer. Field order is fixed, so identical
// state serializes to identical bytes.
class Writer {
public:
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }

    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }

    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }

    void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }

    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof(bits));
        u64(bits);
    }

    void str(const std::string& s) {
        u64(s.size());
        buf_.append(s);
    }

    void tensor(const Tensor& t) {
        u32(static_cast<std::uint32_t>(t.rank()));
        for (std::size_t e : t.shape()) u64(e);
        for (double v : t.data()) f64(v);
    }

    void params(const ParamSet& p) {
        u64(p.tensors.size());
        for (const auto& [name, t] : p.tensors) {
            str(name);
            tensor(t);
        }
    }

    void adam(const AdamState& s) {
        u64(s.m.size());
        for (const auto& [name, t] : s.m) {
            str(name);
            tensor(t);
            tensor(s.v.at(name));
        }
        i64(s.t);
        f64(s.beta1);
        f64(s.beta2);
        f64(s.eps);
    }

    const std::string& bytes() const { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    Reader(const char* data, std::size_t size) : data_(data), size_(size) {}

    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(data_[pos_++]);
    }

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + static_cast<std::size_t>(i)]))
                 << (8 * i);
        }
        pos_ += 4;
        return v;
    }

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + static_cast<std::size_t>(i)]))
                 << (8 * i);
        }
        pos_ += 8;
        return v;
    }

    std::int64_t i64() { return static_cast<std::int64_t>(u64()); }

    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, sizeof(v));
        return v;
    }

    std::string str() {
        const std::uint64_t n = u64();
        need(n);
        std::string s(data_ + pos_, n);
        pos_ += n;
        return s;
    }

    Tensor tensor() {
        const std::uint32_t rank = u32();
        if (rank == 0 || rank > 8) throw IoError("checkpoint: bad tensor rank");
        std::vector<std::size_t> shape(rank);
        std::size_t total = 1;
        for (auto& e : shape) {
            e = static_cast<std::size_t>(u64());
            total *= e;
        }
        std::vector<double> data(total);
        for (auto& v : data) v = f64();
        return Tensor(std::move(shape), std::move(data));
    }

    ParamSet params() {
        ParamSet p;
        const std::uint64_t n = u64();
        for (std::uint64_t i = 0; i < n; ++i) {
            std::string name = str();
            p.tensors[name] = tensor();
        }
        return p;
    }

    AdamState adam() {
        AdamState s;
        const std::uint64_t n = u64();
        for (std::uint64_t i = 0; i < n; ++i) {
            std::string name = str();
            s.m[name] = tensor();
            s.v[name] = tensor();
        }
        s.t = i64();
        s.beta1 = f64();
        s.beta2 = f64();
        s.eps = f64();
        return s;
    }

    std::size_t remaining() const { return size_ - pos_; }

private:
    void need(std::size_t n) const {
        if (pos_ + n > size_) throw IoError("checkpoint: truncated file");
    }

    const char* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

} // namespace bin

struct SamplerState {
    std::vector<std::size_t> order;
    std::size_t cursor = 0;
    std::string rng;

    static SamplerState capture(const BatchSampler& s) {
        return SamplerState{s.order(), s.cursor(), s.rng().serialize()};
    }

    BatchSampler restore() const {
        return BatchSampler::restore(order, cursor, Rng::deserialize(rng));
    }
};

// Full training state: parameters, optimizer state, RNG streams, sampler
// positions, history, and the vocabulary with its frozen embeddings, so a
// checkpoint is sufficient both to resume bit-exactly and to evaluate on new
// data.
struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;

    TrainingConfig config;
    int epoch = 0; // completed epochs

    ParamSet f, m, g;
    AdamState adam_f, adam_m, adam_g;

    bool has_best = false;
    ParamSet best_f, best_m;
    double best_metric = 0.0;
    int best_epoch = 0;
    int epochs_since_improve = 0;

    std::string rng_critic, rng_match, rng_diag;
    SamplerState critic_sampler, match_sampler;

    RunHistory history;

    std::vector<std::string> vocab_tokens;
    Tensor vocab_embeddings;
    int vocab_dim = 0;

    Vocabulary vocabulary() const {
        Vocabulary v;
        v.id_to_token = vocab_tokens;
        v.token_to_id.clear();
        for (std::size_t i = 0; i < vocab_tokens.size(); ++i) {
            v.token_to_id.emplace(vocab_tokens[i], static_cast<int>(i));
        }
        v.embeddings = vocab_embeddings;
        v.dim = vocab_dim;
        return v;
    }

    void set_vocabulary(const Vocabulary& v) {
        vocab_tokens = v.id_to_token;
        vocab_embeddings = v.embeddings;
        vocab_dim = v.dim;
    }

    // Cross-checks stored tensors against the stored config.
    void validate_shapes() const {
        const auto k_dim = static_cast<std::size_t>(config.projector.feature_dim);
        const std::string f_out = "F.W" + std::to_string(config.projector.hidden.size());
        if (f.at(f_out).cols() != k_dim) {
            throw ShapeError("checkpoint: projector output dim " +
                             std::to_string(f.at(f_out).cols()) + " != config feature_dim " +
                             std::to_string(k_dim));
        }
        if (g.at("G.W0").rows() != k_dim) {
            throw ShapeError("checkpoint: critic input dim " + std::to_string(g.at("G.W0").rows()) +
                             " != config feature_dim " + std::to_string(k_dim));
        }
        const auto m_in = static_cast<std::size_t>(
            matcher_input_dim(config.projector.feature_dim, config.matcher));
        if (m.at("M.W0").rows() != m_in) {
            throw ShapeError("checkpoint: matcher input dim " + std::to_string(m.at("M.W0").rows()) +
                             " != expected " + std::to_string(m_in));
        }
        if (vocab_dim != config.projector.embedding_dim) {
            throw ShapeError("checkpoint: vocabulary dim " + std::to_string(vocab_dim) +
                             " != config embedding_dim " +
                             std::to_string(config.projector.embedding_dim));
        }
    }
};

namespace detail {

inline void write_sampler(bin::Writer& w, const SamplerState& s) {
    w.u64(s.order.size());
    for (std::size_t v : s.order) w.u64(v);
    w.u64(s.cursor);
    w.str(s.rng);
}

inline SamplerState read_sampler(bin::Reader& r) {
    SamplerState s;
    const std::uint64_t n = r.u64();
    s.order.resize(n);
    for (auto& v : s.order) v = static_cast<std::size_t>(r.u64());
    s.cursor = static_cast<std::size_t>(r.u64());
    s.rng = r.str();
    return s;
}

} // namespace detail

inline constexpr char kCheckpointMagic[8] = {'W', 'D', 'M', 'C', 'K', 'P', 'T', '\0'};

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
    bin::Writer w;
    w.str(config_to_string(c.config));
    w.u32(static_cast<std::uint32_t>(c.epoch));
    w.params(c.f);
    w.adam(c.adam_f);
    w.params(c.m);
    w.adam(c.adam_m);
    w.params(c.g);
    w.adam(c.adam_g);
    w.u8(c.has_best ? 1 : 0);
    w.params(c.best_f);
    w.params(c.best_m);
    w.f64(c.best_metric);
    w.u32(static_cast<std::uint32_t>(c.best_epoch));
    w.u32(static_cast<std::uint32_t>(c.epochs_since_improve));
    w.str(c.rng_critic);
    w.str(c.rng_match);
    w.str(c.rng_diag);
    detail::write_sampler(w, c.critic_sampler);
    detail::write_sampler(w, c.match_sampler);
    w.u64(c.history.rows.size());
    for (const auto& row : c.history.rows) {
        w.u32(static_cast<std::uint32_t>(row.epoch));
        w.f64(row.train_loss);
        w.f64(row.train_match_loss);
        w.f64(row.dev_metric);
        w.f64(row.wd_estimate);
    }
    w.u64(c.vocab_tokens.size());
    for (const auto& t : c.vocab_tokens) w.str(t);
    w.u32(static_cast<std::uint32_t>(c.vocab_dim));
    w.tensor(c.vocab_embeddings);

    bin::Writer head;
    for (char ch : kCheckpointMagic) head.u8(static_cast<std::uint8_t>(ch));
    head.u32(Checkpoint::kVersion);
    const std::string& payload = w.bytes();
    std::uint64_t sum = fnv1a64(head.bytes().data(), head.bytes().size());
    sum = fnv1a64(payload.data(), payload.size(), sum);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("checkpoint: cannot open '" + path + "' for writing");
    out.write(head.bytes().data(), static_cast<std::streamsize>(head.bytes().size()));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    bin::Writer tail;
    tail.u64(sum);
    out.write(tail.bytes().data(), static_cast<std::streamsize>(tail.bytes().size()));
    if (!out) throw IoError("checkpoint: write failure on '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("checkpoint: cannot open '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < sizeof(kCheckpointMagic) + 4 + 8) {
        throw IoError("checkpoint: file too short");
    }
    if (std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
        throw IoError("checkpoint: bad magic, not a checkpoint file");
    }
    bin::Reader tail(bytes.data() + bytes.size() - 8, 8);
    const std::uint64_t stored_sum = tail.u64();
    const std::uint64_t actual_sum = fnv1a64(bytes.data(), bytes.size() - 8);
    if (stored_sum != actual_sum) {
        throw IoError("checkpoint: checksum mismatch, file is corrupted");
    }
    bin::Reader r(bytes.data() + sizeof(kCheckpointMagic),
                  bytes.size() - sizeof(kCheckpointMagic) - 8);
    const std::uint32_t version = r.u32();
    if (version != Checkpoint::kVersion) {
        throw IoError("checkpoint: version mismatch, file has version " + std::to_string(version) +
                      ", this build reads version " + std::to_string(Checkpoint::kVersion));
    }
    Checkpoint c;
    c.config = config_from_string(r.str());
    c.epoch = static_cast<int>(r.u32());
    c.f = r.params();
    c.adam_f = r.adam();
    c.m = r.params();
    c.adam_m = r.adam();
    c.g = r.params();
    c.adam_g = r.adam();
    c.has_best = r.u8() != 0;
    c.best_f = r.params();
    c.best_m = r.params();
    c.best_metric = r.f64();
    c.best_epoch = static_cast<int>(r.u32());
    c.epochs_since_improve = static_cast<int>(r.u32());
    c.rng_critic = r.str();
    c.rng_match = r.str();
    c.rng_diag = r.str();
    c.critic_sampler = detail::read_sampler(r);
    c.match_sampler = detail::read_sampler(r);
    const std::uint64_t n_rows = r.u64();
    for (std::uint64_t i = 0; i < n_rows; ++i) {
        EpochRecord row;
        row.epoch = static_cast<int>(r.u32());
        row.train_loss = r.f64();
        row.train_match_loss = r.f64();
        row.dev_metric = r.f64();
        row.wd_estimate = r.f64();
        c.history.rows.push_back(row);
    }
    const std::uint64_t n_tokens = r.u64();
    c.vocab_tokens.resize(n_tokens);
    for (auto& t : c.vocab_tokens) t = r.str();
    c.vocab_dim = static_cast<int>(r.u32());
    c.vocab_embeddings = r.tensor();
    if (r.remaining() != 0) throw IoError("checkpoint: trailing bytes");
    c.config.validate();
    c.validate_shapes();
    return c;
}

} // namespace wdmatch
