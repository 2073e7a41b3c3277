#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "wdmatch/errors.hpp"
#include "wdmatch/models.hpp"

namespace wdmatch {

// Shortest round-trippable decimal representation used by every CSV writer,
// so identical runs produce byte-identical files.
inline std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
    if (predictions.empty()) throw DataError("accuracy: empty input");
    if (predictions.size() != labels.size()) {
        throw DataError("accuracy: " + std::to_string(predictions.size()) + " predictions vs " +
                        std::to_string(labels.size()) + " labels");
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (predictions[i] == labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

// One query's scored candidates; relevance is binary.
struct RankedQuery {
    std::string query_id;
    std::vector<double> scores;
    std::vector<int> relevance;

    std::size_t size() const { return scores.size(); }
};

namespace detail {

// Candidate order by descending score; ties keep the original index order.
inline std::vector<std::size_t> ranking_order(const RankedQuery& q) {
    if (q.scores.empty()) throw DataError("ranked query '" + q.query_id + "': empty candidates");
    if (q.scores.size() != q.relevance.size()) {
        throw DataError("ranked query '" + q.query_id + "': scores/relevance length mismatch");
    }
    std::vector<std::size_t> order(q.scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return q.scores[a] > q.scores[b]; });
    return order;
}

inline bool has_relevant(const RankedQuery& q) {
    return std::any_of(q.relevance.begin(), q.relevance.end(), [](int r) { return r != 0; });
}

} // namespace detail

inline double average_precision(const RankedQuery& q) {
    const auto order = detail::ranking_order(q);
    double ap = 0.0;
    std::size_t relevant_seen = 0;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        if (q.relevance[order[rank]] != 0) {
            ++relevant_seen;
            ap += static_cast<double>(relevant_seen) / static_cast<double>(rank + 1);
        }
    }
    if (relevant_seen == 0) throw DataError("average_precision: no relevant candidate");
    return ap / static_cast<double>(relevant_seen);
}

inline double reciprocal_rank(const RankedQuery& q) {
    const auto order = detail::ranking_order(q);
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        if (q.relevance[order[rank]] != 0) {
            return 1.0 / static_cast<double>(rank + 1);
        }
    }
    throw DataError("reciprocal_rank: no relevant candidate");
}

// Queries without any relevant candidate are excluded from the mean; if every
// query lacks one the metric is undefined and an error is raised.
inline double mean_average_precision(const std::vector<RankedQuery>& queries) {
    if (queries.empty()) throw DataError("mean_average_precision: no queries");
    double sum = 0.0;
    std::size_t counted = 0;
    for (const auto& q : queries) {
        if (!detail::has_relevant(q)) continue;
        sum += average_precision(q);
        ++counted;
    }
    if (counted == 0) throw DataError("mean_average_precision: no query has a relevant candidate");
    return sum / static_cast<double>(counted);
}

inline double mean_reciprocal_rank(const std::vector<RankedQuery>& queries) {
    if (queries.empty()) throw DataError("mean_reciprocal_rank: no queries");
    double sum = 0.0;
    std::size_t counted = 0;
    for (const auto& q : queries) {
        if (!detail::has_relevant(q)) continue;
        sum += reciprocal_rank(q);
        ++counted;
    }
    if (counted == 0) throw DataError("mean_reciprocal_rank: no query has a relevant candidate");
    return sum / static_cast<double>(counted);
}

// Groups ranking triples into per-query candidate lists. Queries appear in
// first-occurrence order; candidates keep dataset order.
inline std::vector<RankedQuery> group_queries(const std::vector<Triple>& triples,
                                              const std::vector<double>& scores) {
    if (triples.size() != scores.size()) {
        throw DataError("group_queries: triples/scores length mismatch");
    }
    std::vector<RankedQuery> queries;
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < triples.size(); ++i) {
        const std::string& qid = triples[i].query_id;
        auto it = index.find(qid);
        if (it == index.end()) {
            index.emplace(qid, queries.size());
            queries.push_back(RankedQuery{qid, {}, {}});
            it = index.find(qid);
        }
        queries[it->second].scores.push_back(scores[i]);
        queries[it->second].relevance.push_back(triples[i].z);
    }
    return queries;
}

// Exact 1-D Wasserstein-1 between equal-size empirical measures: sort both
// samples and average the coordinate-wise absolute differences. Serves as
// the independent oracle for the critic-based estimate.
inline double w1_empirical_1d(std::vector<double> xs, std::vector<double> ys) {
    if (xs.empty()) throw DataError("w1_empirical_1d: empty samples");
    if (xs.size() != ys.size()) {
        throw DataError("w1_empirical_1d: sample counts differ (" + std::to_string(xs.size()) +
                        " vs " + std::to_string(ys.size()) + ")");
    }
    std::sort(xs.begin(), xs.end());
    std::sort(ys.begin(), ys.end());
    double acc = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) acc += std::fabs(xs[i] - ys[i]);
    return acc / static_cast<double>(xs.size());
}

// Per-epoch difference of Wasserstein estimates: baseline minus regularized.
inline std::vector<double> wd_diff(const std::vector<double>& baseline,
                                   const std::vector<double>& regularized) {
    if (baseline.size() != regularized.size()) {
        throw DataError("wd_diff: history lengths differ (" + std::to_string(baseline.size()) +
                        " vs " + std::to_string(regularized.size()) + ")");
    }
    std::vector<double> out(baseline.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = baseline[i] - regularized[i];
    return out;
}

// Writes every projected feature vector as CSV rows `domain,pair_index,f1..fK`
// (X block first, then Y), for external visualization tools.
inline void dump_features(const ParamSet& f_params, const ProjectorSpec& spec,
                          const EncodedPairs& data, const std::string& path) {
    const Tensor fx = apply_projector(f_params, spec, data.x);
    const Tensor fy = apply_projector(f_params, spec, data.y);
    std::ofstream out(path);
    if (!out) throw IoError("dump_features: cannot open '" + path + "' for writing");
    const std::size_t k = fx.cols();
    out << "domain,pair_index";
    for (std::size_t j = 0; j < k; ++j) out << ",f" << (j + 1);
    out << "\n";
    auto write_block = [&](const char* domain, const Tensor& f) {
        for (std::size_t i = 0; i < f.rows(); ++i) {
            out << domain << "," << i;
            for (std::size_t j = 0; j < k; ++j) out << "," << format_g17(f.at(i, j));
            out << "\n";
        }
    };
    write_block("X", fx);
    write_block("Y", fy);
    if (!out) throw IoError("dump_features: write failure on '" + path + "'");
}

} // namespace wdmatch
