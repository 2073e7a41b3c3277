// wdmatch: training and diagnostics CLI for Wasserstein-regularized
// sequence-pair matching.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "wdmatch/wdmatch.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

int dispatch(const std::function<int()>& body) {
    try {
        return body();
    } catch (const wdmatch::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const wdmatch::ShapeError& e) {
        std::cerr << "shape error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const wdmatch::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const wdmatch::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitData;
    } catch (const wdmatch::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw wdmatch::IoError("cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json parse_json_file(const std::string& path) {
    try {
        return json::parse(slurp(path));
    } catch (const json::exception& e) {
        throw wdmatch::ConfigError(path + ": invalid JSON: " + e.what());
    }
}

std::uint64_t file_checksum(const std::string& path) {
    const std::string bytes = slurp(path);
    return wdmatch::fnv1a64(bytes.data(), bytes.size());
}

std::string hex64(std::uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// Paths and label names from the config's "data" section.
struct DataConfig {
    std::string train, dev, test, embeddings;
    std::vector<std::string> class_names;
};

DataConfig data_config_from_json(const json& j) {
    DataConfig d;
    if (!j.contains("data")) return d;
    const json& data = j.at("data");
    d.train = data.value("train", "");
    d.dev = data.value("dev", "");
    d.test = data.value("test", "");
    d.embeddings = data.value("embeddings", "");
    if (data.contains("class_names")) {
        d.class_names = data.at("class_names").get<std::vector<std::string>>();
    }
    return d;
}

json data_config_to_json(const DataConfig& d) {
    json j;
    j["train"] = d.train;
    j["dev"] = d.dev;
    j["test"] = d.test;
    j["embeddings"] = d.embeddings;
    if (!d.class_names.empty()) j["class_names"] = d.class_names;
    return j;
}

struct Bundle {
    wdmatch::Vocabulary vocab;
    std::vector<wdmatch::Triple> train, dev, test;
    wdmatch::LoadStats stats;
};

// Builds the vocabulary over every split, attaches embeddings, and maps all
// records. Out-of-file tokens draw frozen random vectors from a dedicated
// init stream of the master seed.
Bundle load_bundle(const DataConfig& d, const wdmatch::TrainingConfig& cfg) {
    if (d.train.empty() || d.dev.empty()) {
        throw wdmatch::ConfigError("data.train and data.dev paths are required");
    }
    Bundle b;
    const auto train_recs = wdmatch::read_records(d.train);
    const auto dev_recs = wdmatch::read_records(d.dev);
    wdmatch::add_corpus(b.vocab, train_recs);
    wdmatch::add_corpus(b.vocab, dev_recs);
    std::vector<wdmatch::RawRecord> test_recs;
    if (!d.test.empty()) {
        test_recs = wdmatch::read_records(d.test);
        wdmatch::add_corpus(b.vocab, test_recs);
    }
    wdmatch::Rng emb_rng(wdmatch::derive_seed(cfg.seed, 5));
    wdmatch::load_embeddings(b.vocab, d.embeddings, cfg.projector.embedding_dim, emb_rng);

    wdmatch::LabelMap labels;
    if (!d.class_names.empty()) labels.names = d.class_names;
    const auto task = cfg.matcher.task;
    b.train = wdmatch::map_records(train_recs, d.train, task, b.vocab, labels, &b.stats);
    b.dev = wdmatch::map_records(dev_recs, d.dev, task, b.vocab, labels, &b.stats);
    if (!d.test.empty()) {
        b.test = wdmatch::map_records(test_recs, d.test, task, b.vocab, labels, &b.stats);
    }
    return b;
}

std::string default_out_dir(std::uint64_t seed) {
    const char* root = std::getenv("WDMATCH_OUT_ROOT");
    const fs::path base = root && *root ? fs::path(root) : fs::path(".");
    return (base / ("run-seed" + std::to_string(seed))).string();
}

std::string timestamp_utc() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw wdmatch::IoError("cannot open '" + path + "' for writing");
    out << content;
    if (!out) throw wdmatch::IoError("write failure on '" + path + "'");
}

// Metric report with fixed field names.
void print_metrics(std::ostream& os, const wdmatch::TrainingConfig& cfg,
                   const wdmatch::ParamSet& f, const wdmatch::ParamSet& m,
                   const std::vector<wdmatch::Triple>& triples,
                   const wdmatch::EncodedPairs& encoded, json* out_json) {
    const wdmatch::Tensor logits =
        wdmatch::predict_logits(f, m, cfg.projector, cfg.matcher, encoded);
    if (cfg.matcher.task == wdmatch::TaskKind::Classification) {
        std::vector<int> labels;
        for (const auto& t : triples) labels.push_back(t.z);
        const double acc = wdmatch::accuracy(wdmatch::argmax_rows(logits), labels);
        os << "metric=accuracy value=" << wdmatch::format_g17(acc)
           << " n_examples=" << triples.size() << "\n";
        if (out_json) (*out_json)["accuracy"] = acc;
    } else {
        std::vector<double> scores(logits.data().begin(), logits.data().end());
        const auto queries = wdmatch::group_queries(triples, scores);
        const double map = wdmatch::mean_average_precision(queries);
        const double mrr = wdmatch::mean_reciprocal_rank(queries);
        os << "metric=map value=" << wdmatch::format_g17(map) << " n_queries=" << queries.size()
           << "\n";
        os << "metric=mrr value=" << wdmatch::format_g17(mrr) << " n_queries=" << queries.size()
           << "\n";
        if (out_json) {
            (*out_json)["map"] = map;
            (*out_json)["mrr"] = mrr;
        }
    }
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainCliArgs {
    std::string config_path;
    std::string out_dir;
    std::string resume;
    std::optional<double> lambda, clip, lr_critic, lr_match;
    std::optional<int> k, n1, n2, epochs;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> train_path, dev_path, test_path, embeddings_path;
};

int cmd_train(const TrainCliArgs& args) {
    const json file = parse_json_file(args.config_path);
    wdmatch::TrainingConfig cfg = wdmatch::config_from_json(file);
    DataConfig data = data_config_from_json(file);

    if (args.lambda) cfg.lambda = *args.lambda;
    if (args.clip) {
        cfg.clip = *args.clip;
        cfg.critic.clip = *args.clip;
    }
    if (args.lr_critic) cfg.lr_critic = *args.lr_critic;
    if (args.lr_match) cfg.lr_match = *args.lr_match;
    if (args.k) cfg.k = *args.k;
    if (args.n1) cfg.n1 = *args.n1;
    if (args.n2) cfg.n2 = *args.n2;
    if (args.epochs) cfg.epochs = *args.epochs;
    if (args.seed) cfg.seed = *args.seed;
    if (args.train_path) data.train = *args.train_path;
    if (args.dev_path) data.dev = *args.dev_path;
    if (args.test_path) data.test = *args.test_path;
    if (args.embeddings_path) data.embeddings = *args.embeddings_path;
    cfg.validate();

    const std::string out_dir = args.out_dir.empty() ? default_out_dir(cfg.seed) : args.out_dir;
    fs::create_directories(out_dir);

    // Resolve to absolute paths so the manifest reproduces the run from
    // anywhere.
    for (std::string* p : {&data.train, &data.dev, &data.test, &data.embeddings}) {
        if (!p->empty()) *p = fs::absolute(*p).string();
    }

    // A resumed run keeps the checkpoint's configuration and vocabulary;
    // only the epoch budget may be extended from the command line.
    std::optional<wdmatch::Checkpoint> ckpt;
    if (!args.resume.empty()) {
        ckpt = wdmatch::load_checkpoint(args.resume);
        if (args.epochs) ckpt->config.epochs = *args.epochs;
        cfg = ckpt->config;
    }

    Bundle bundle;
    if (ckpt) {
        if (data.train.empty() || data.dev.empty()) {
            throw wdmatch::ConfigError("data.train and data.dev paths are required");
        }
        bundle.vocab = ckpt->vocabulary();
        wdmatch::LabelMap labels;
        if (!data.class_names.empty()) labels.names = data.class_names;
        const auto task = cfg.matcher.task;
        bundle.train = wdmatch::load_triples(data.train, task, bundle.vocab, labels, &bundle.stats);
        bundle.dev = wdmatch::load_triples(data.dev, task, bundle.vocab, labels, &bundle.stats);
        if (!data.test.empty()) {
            bundle.test = wdmatch::load_triples(data.test, task, bundle.vocab, labels, &bundle.stats);
        }
    } else {
        bundle = load_bundle(data, cfg);
    }
    if (bundle.stats.skipped_unlabeled > 0) {
        std::cout << "skipped " << bundle.stats.skipped_unlabeled << " unlabeled record(s)\n";
    }

    json manifest = wdmatch::to_json(cfg);
    manifest["data"] = data_config_to_json(data);
    json meta;
    meta["created_at"] = timestamp_utc();
    meta["out_dir"] = fs::absolute(out_dir).string();
    meta["resumed_from"] = args.resume;
    json checksums;
    checksums["train"] = hex64(file_checksum(data.train));
    checksums["dev"] = hex64(file_checksum(data.dev));
    if (!data.test.empty()) checksums["test"] = hex64(file_checksum(data.test));
    if (!data.embeddings.empty()) checksums["embeddings"] = hex64(file_checksum(data.embeddings));
    meta["input_checksums"] = checksums;
    manifest["manifest"] = meta;
    write_text((fs::path(out_dir) / "manifest.json").string(), manifest.dump(2) + "\n");

    std::optional<wdmatch::Trainer> trainer;
    if (ckpt) {
        trainer.emplace(*ckpt, bundle.train, bundle.dev);
    } else {
        trainer.emplace(cfg, bundle.train, bundle.dev, bundle.vocab);
    }

    while (trainer->run_epoch()) {
        const auto& row = trainer->history().rows.back();
        std::cout << "epoch " << row.epoch << " loss=" << wdmatch::format_g17(row.train_loss)
                  << " dev=" << wdmatch::format_g17(row.dev_metric)
                  << " wd=" << wdmatch::format_g17(row.wd_estimate) << "\n";
    }
    if (!trainer->history().rows.empty()) {
        const auto& row = trainer->history().rows.back();
        std::cout << "finished at epoch " << row.epoch << ", best dev "
                  << wdmatch::format_g17(trainer->best_metric()) << " (epoch "
                  << trainer->best_epoch() << ")\n";
    }

    trainer->history().write_csv((fs::path(out_dir) / "history.csv").string());
    wdmatch::save_checkpoint((fs::path(out_dir) / "checkpoint_final.ckpt").string(),
                             trainer->checkpoint());

    json metrics;
    metrics["best_dev_metric"] = trainer->best_metric();
    metrics["best_epoch"] = trainer->best_epoch();
    metrics["epochs_run"] = trainer->epochs_done();
    if (!bundle.test.empty()) {
        const auto encoded =
            wdmatch::encode_dataset(bundle.test, trainer->vocabulary(), cfg.projector);
        json test_metrics;
        print_metrics(std::cout, cfg, trainer->best_f(), trainer->best_m(), bundle.test, encoded,
                      &test_metrics);
        metrics["test"] = test_metrics;
    }
    write_text((fs::path(out_dir) / "metrics.json").string(), metrics.dump(2) + "\n");
    return 0;
}

// ---------------------------------------------------------------------------
// eval / dump-features / diagnose-wd
// ---------------------------------------------------------------------------

std::vector<wdmatch::Triple> load_for_checkpoint(const wdmatch::Checkpoint& ckpt,
                                                 const wdmatch::Vocabulary& vocab,
                                                 const std::string& dataset) {
    wdmatch::LabelMap labels;
    return wdmatch::load_triples(dataset, ckpt.config.matcher.task, vocab, labels);
}

int cmd_eval(const std::string& checkpoint_path, const std::string& dataset) {
    const wdmatch::Checkpoint ckpt = wdmatch::load_checkpoint(checkpoint_path);
    const wdmatch::Vocabulary vocab = ckpt.vocabulary();
    const auto triples = load_for_checkpoint(ckpt, vocab, dataset);
    if (triples.empty()) throw wdmatch::DataError(dataset + ": no usable records");
    const auto encoded = wdmatch::encode_dataset(triples, vocab, ckpt.config.projector);
    const wdmatch::ParamSet& f = ckpt.has_best ? ckpt.best_f : ckpt.f;
    const wdmatch::ParamSet& m = ckpt.has_best ? ckpt.best_m : ckpt.m;
    print_metrics(std::cout, ckpt.config, f, m, triples, encoded, nullptr);
    return 0;
}

int cmd_dump_features(const std::string& checkpoint_path, const std::string& dataset,
                      const std::string& out_path) {
    const wdmatch::Checkpoint ckpt = wdmatch::load_checkpoint(checkpoint_path);
    const wdmatch::Vocabulary vocab = ckpt.vocabulary();
    const auto triples = load_for_checkpoint(ckpt, vocab, dataset);
    if (triples.empty()) throw wdmatch::DataError(dataset + ": no usable records");
    const auto encoded = wdmatch::encode_dataset(triples, vocab, ckpt.config.projector);
    const wdmatch::ParamSet& f = ckpt.has_best ? ckpt.best_f : ckpt.f;
    wdmatch::dump_features(f, ckpt.config.projector, encoded, out_path);
    std::cout << "wrote " << 2 * triples.size() << " feature rows to " << out_path << "\n";
    return 0;
}

int cmd_diagnose_wd(const std::string& ckpt_a_path, const std::string& ckpt_b_path,
                    const std::string& dataset, const std::string& out_csv, std::uint64_t seed,
                    int n_eval, int converge_steps) {
    const wdmatch::Checkpoint a = wdmatch::load_checkpoint(ckpt_a_path);
    const wdmatch::Checkpoint b = wdmatch::load_checkpoint(ckpt_b_path);
    if (a.config.projector.feature_dim != b.config.projector.feature_dim) {
        throw wdmatch::ConfigError(
            "checkpoints disagree on feature_dim (" +
            std::to_string(a.config.projector.feature_dim) + " vs " +
            std::to_string(b.config.projector.feature_dim) + ")");
    }

    // Diagnoses the training endpoint: uses each checkpoint's current F (not
    // the best-dev snapshot), matching the per-epoch estimates in history.
    auto estimate = [&](const wdmatch::Checkpoint& c, std::uint64_t stream) {
        const wdmatch::Vocabulary vocab = c.vocabulary();
        const auto triples = load_for_checkpoint(c, vocab, dataset);
        if (triples.empty()) throw wdmatch::DataError(dataset + ": no usable records");
        const auto encoded = wdmatch::encode_dataset(triples, vocab, c.config.projector);
        wdmatch::Rng rng(wdmatch::derive_seed(seed, stream));
        wdmatch::ParamSet g0 = wdmatch::init_critic_params(c.config.projector.feature_dim,
                                                           c.config.critic, rng);
        wdmatch::RegularizerConfig reg = c.config.regularizer();
        return wdmatch::estimate_wd(std::move(g0), c.f, c.config.projector, encoded, n_eval,
                                    converge_steps, reg, rng);
    };
    const double wd_a = estimate(a, 6);
    const double wd_b = estimate(b, 6);
    std::cout << "wd_a=" << wdmatch::format_g17(wd_a) << "\n";
    std::cout << "wd_b=" << wdmatch::format_g17(wd_b) << "\n";
    std::cout << "wd_diff=" << wdmatch::format_g17(wd_a - wd_b) << "\n";

    std::ostringstream csv;
    csv << "epoch,wd_a,wd_b,wd_diff\n";
    if (a.history.rows.size() == b.history.rows.size() && !a.history.rows.empty()) {
        const auto diffs = wdmatch::wd_diff(a.history.wd_column(), b.history.wd_column());
        for (std::size_t i = 0; i < diffs.size(); ++i) {
            csv << a.history.rows[i].epoch << "," << wdmatch::format_g17(a.history.rows[i].wd_estimate)
                << "," << wdmatch::format_g17(b.history.rows[i].wd_estimate) << ","
                << wdmatch::format_g17(diffs[i]) << "\n";
        }
    }
    csv << "final," << wdmatch::format_g17(wd_a) << "," << wdmatch::format_g17(wd_b) << ","
        << wdmatch::format_g17(wd_a - wd_b) << "\n";
    write_text(out_csv, csv.str());
    return 0;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

wdmatch::SynthSpec synth_spec_from_json(const json& j) {
    wdmatch::SynthSpec s;
    s.latent_dim = j.value("latent_dim", s.latent_dim);
    s.delta = j.value("delta", s.delta);
    s.vocab_a = j.value("vocab_a", s.vocab_a);
    s.vocab_b = j.value("vocab_b", s.vocab_b);
    s.len_min = j.value("len_min", s.len_min);
    s.len_max = j.value("len_max", s.len_max);
    s.pairs = j.value("pairs", s.pairs);
    s.positive_rate = j.value("positive_rate", s.positive_rate);
    return s;
}

void write_split_tsv(const std::string& path,
                     const std::vector<wdmatch::SyntheticRecord>& records) {
    std::ostringstream os;
    os << "text_a\ttext_b\tlabel\n";
    for (const auto& r : records) {
        for (std::size_t i = 0; i < r.x_tokens.size(); ++i) os << (i ? " " : "") << r.x_tokens[i];
        os << "\t";
        for (std::size_t i = 0; i < r.y_tokens.size(); ++i) os << (i ? " " : "") << r.y_tokens[i];
        os << "\t" << r.label << "\n";
    }
    write_text(path, os.str());
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir, std::uint64_t seed) {
    const wdmatch::SynthSpec spec = synth_spec_from_json(parse_json_file(spec_path));
    const wdmatch::SyntheticData data = wdmatch::generate_synthetic(spec, seed);
    fs::create_directories(out_dir);
    write_split_tsv((fs::path(out_dir) / "train.tsv").string(), data.train);
    write_split_tsv((fs::path(out_dir) / "dev.tsv").string(), data.dev);
    write_split_tsv((fs::path(out_dir) / "test.tsv").string(), data.test);

    std::ostringstream emb;
    const std::size_t dim = data.token_embeddings.cols();
    for (std::size_t i = 0; i < data.tokens.size(); ++i) {
        emb << data.tokens[i];
        for (std::size_t k = 0; k < dim; ++k) {
            emb << " " << wdmatch::format_g17(data.token_embeddings[i * dim + k]);
        }
        emb << "\n";
    }
    write_text((fs::path(out_dir) / "embeddings.txt").string(), emb.str());

    std::ostringstream lat;
    lat << "split,pair_index,x_latent,y_latent\n";
    auto write_latents = [&](const char* split, const std::vector<wdmatch::SyntheticRecord>& recs) {
        for (std::size_t i = 0; i < recs.size(); ++i) {
            lat << split << "," << i << "," << wdmatch::format_g17(recs[i].x_latent) << ","
                << wdmatch::format_g17(recs[i].y_latent) << "\n";
        }
    };
    write_latents("train", data.train);
    write_latents("dev", data.dev);
    write_latents("test", data.test);
    write_text((fs::path(out_dir) / "latents.csv").string(), lat.str());

    std::cout << "wrote " << data.train.size() << "/" << data.dev.size() << "/"
              << data.test.size() << " train/dev/test pairs to " << out_dir << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Wasserstein-regularized sequence-pair matching"};
    app.require_subcommand(1);

    // train
    TrainCliArgs targs;
    auto* train_cmd = app.add_subcommand("train", "train a matching model");
    train_cmd->add_option("--config", targs.config_path, "config or manifest JSON")->required();
    train_cmd->add_option("--out-dir", targs.out_dir, "output directory");
    train_cmd->add_option("--resume", targs.resume, "checkpoint to resume from");
    double lambda_v = 0, clip_v = 0, lr1_v = 0, lr2_v = 0;
    int k_v = 0, n1_v = 0, n2_v = 0, epochs_v = 0;
    std::uint64_t seed_v = 0;
    std::string train_p, dev_p, test_p, emb_p;
    auto* opt_lambda = train_cmd->add_option("--lambda", lambda_v, "trade-off coefficient");
    auto* opt_clip = train_cmd->add_option("--clip", clip_v, "critic clip threshold c");
    auto* opt_k = train_cmd->add_option("--k", k_v, "critic steps per round");
    auto* opt_n1 = train_cmd->add_option("--n1", n1_v, "critic batch size");
    auto* opt_n2 = train_cmd->add_option("--n2", n2_v, "matching batch size");
    auto* opt_lr1 = train_cmd->add_option("--lr-critic", lr1_v, "critic learning rate");
    auto* opt_lr2 = train_cmd->add_option("--lr-match", lr2_v, "matching learning rate");
    auto* opt_epochs = train_cmd->add_option("--epochs", epochs_v, "max epochs");
    auto* opt_seed = train_cmd->add_option("--seed", seed_v, "master seed");
    auto* opt_train = train_cmd->add_option("--train", train_p, "training set path");
    auto* opt_dev = train_cmd->add_option("--dev", dev_p, "dev set path");
    auto* opt_test = train_cmd->add_option("--test", test_p, "test set path");
    auto* opt_emb = train_cmd->add_option("--embeddings", emb_p, "embeddings file path");

    // eval
    std::string eval_ckpt, eval_data;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    eval_cmd->add_option("checkpoint", eval_ckpt)->required();
    eval_cmd->add_option("dataset", eval_data)->required();

    // diagnose-wd
    std::string diag_a, diag_b, diag_data, diag_out = "wd_diff.csv";
    std::uint64_t diag_seed = 7;
    int diag_n_eval = 1000, diag_steps = 300;
    auto* diag_cmd = app.add_subcommand("diagnose-wd", "compare Wasserstein estimates of two checkpoints");
    diag_cmd->add_option("checkpoint_a", diag_a, "baseline checkpoint")->required();
    diag_cmd->add_option("checkpoint_b", diag_b, "regularized checkpoint")->required();
    diag_cmd->add_option("dataset", diag_data)->required();
    diag_cmd->add_option("--out", diag_out, "output CSV path");
    diag_cmd->add_option("--seed", diag_seed, "diagnostic seed");
    diag_cmd->add_option("--n-eval", diag_n_eval, "evaluation batch size");
    diag_cmd->add_option("--converge-steps", diag_steps, "critic convergence steps");

    // synth
    std::string synth_spec, synth_out;
    std::uint64_t synth_seed = 7;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic shifted-domain dataset");
    synth_cmd->add_option("spec", synth_spec, "synthesis spec JSON")->required();
    synth_cmd->add_option("out_dir", synth_out)->required();
    synth_cmd->add_option("--seed", synth_seed, "generation seed");

    // dump-features
    std::string dump_ckpt, dump_data, dump_out = "features.csv";
    auto* dump_cmd = app.add_subcommand("dump-features", "write projected feature vectors as CSV");
    dump_cmd->add_option("checkpoint", dump_ckpt)->required();
    dump_cmd->add_option("dataset", dump_data)->required();
    dump_cmd->add_option("--out", dump_out, "output CSV path");

    // selftest
    std::size_t selftest_graphs = 25;
    bool inject_fault = false;
    auto* selftest_cmd = app.add_subcommand("selftest", "run built-in invariant checks");
    selftest_cmd->add_option("--graphs", selftest_graphs, "random graphs for the gradient check");
    selftest_cmd->add_flag("--inject-gradient-fault", inject_fault)->group(""); // test fixture

    CLI11_PARSE(app, argc, argv);

    if (opt_lambda->count()) targs.lambda = lambda_v;
    if (opt_clip->count()) targs.clip = clip_v;
    if (opt_k->count()) targs.k = k_v;
    if (opt_n1->count()) targs.n1 = n1_v;
    if (opt_n2->count()) targs.n2 = n2_v;
    if (opt_lr1->count()) targs.lr_critic = lr1_v;
    if (opt_lr2->count()) targs.lr_match = lr2_v;
    if (opt_epochs->count()) targs.epochs = epochs_v;
    if (opt_seed->count()) targs.seed = seed_v;
    if (opt_train->count()) targs.train_path = train_p;
    if (opt_dev->count()) targs.dev_path = dev_p;
    if (opt_test->count()) targs.test_path = test_p;
    if (opt_emb->count()) targs.embeddings_path = emb_p;

    if (*train_cmd) return dispatch([&] { return cmd_train(targs); });
    if (*eval_cmd) return dispatch([&] { return cmd_eval(eval_ckpt, eval_data); });
    if (*diag_cmd) {
        return dispatch([&] {
            return cmd_diagnose_wd(diag_a, diag_b, diag_data, diag_out, diag_seed, diag_n_eval,
                                   diag_steps);
        });
    }
    if (*synth_cmd) return dispatch([&] { return cmd_synth(synth_spec, synth_out, synth_seed); });
    if (*dump_cmd) {
        return dispatch([&] { return cmd_dump_features(dump_ckpt, dump_data, dump_out); });
    }
    if (*selftest_cmd) {
        return dispatch([&] {
            wdmatch::SelftestOptions opts;
            opts.graphs = selftest_graphs;
            opts.inject_gradient_fault = inject_fault;
            return wdmatch::run_selftest(std::cout, opts) ? 0 : 1;
        });
    }
    return 1;
}
