#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "wdmatch/eval.hpp"
#include "wdmatch/selftest.hpp"

using namespace wdmatch;

TEST_CASE("accuracy: exact-match fraction") {
    CHECK(accuracy({1, 2, 3}, {1, 2, 3}) == 1.0);
    CHECK(accuracy({1, 2, 3, 4}, {1, 2, 0, 0}) == 0.5);
    CHECK_THROWS_AS(accuracy({}, {}), DataError);
    CHECK_THROWS_AS(accuracy({1}, {1, 2}), DataError);
}

TEST_CASE("MAP: worked examples") {
    RankedQuery first_hit{"q1", {0.9, 0.5, 0.1}, {1, 0, 0}};
    CHECK(mean_average_precision({first_hit}) == 1.0);

    RankedQuery second_hit{"q2", {0.9, 0.8}, {0, 1}};
    CHECK(mean_average_precision({second_hit}) == 0.5);

    CHECK(mean_average_precision({first_hit, second_hit}) == 0.75);
}

TEST_CASE("MAP: queries without relevant candidates are excluded") {
    RankedQuery good{"q1", {0.9, 0.5}, {1, 0}};
    RankedQuery barren{"q2", {0.9, 0.5}, {0, 0}};
    CHECK(mean_average_precision({good, barren}) == 1.0);
    CHECK_THROWS_AS(mean_average_precision({barren}), DataError);
    CHECK_THROWS_AS(mean_average_precision({}), DataError);
}

TEST_CASE("MRR: worked examples") {
    RankedQuery rank1{"q1", {0.9, 0.5}, {1, 0}};
    RankedQuery rank2{"q2", {0.9, 0.8}, {0, 1}};
    RankedQuery rank4{"q3", {0.9, 0.8, 0.7, 0.6}, {0, 0, 0, 1}};
    CHECK(mean_reciprocal_rank({rank1}) == 1.0);
    CHECK(mean_reciprocal_rank({rank2}) == 0.5);
    CHECK(mean_reciprocal_rank({rank1, rank4}) == 0.625);
}

TEST_CASE("ranking metrics are invariant to candidate order for distinct scores") {
    RankedQuery q{"q", {0.9, 0.7, 0.3, 0.5}, {0, 1, 1, 0}};
    RankedQuery shuffled{"q", {0.3, 0.9, 0.5, 0.7}, {1, 0, 0, 1}};
    CHECK(average_precision(q) == average_precision(shuffled));
    CHECK(reciprocal_rank(q) == reciprocal_rank(shuffled));
}

TEST_CASE("ties break by original candidate index") {
    RankedQuery q{"q", {0.5, 0.5}, {0, 1}};
    // Candidate 0 keeps rank 1 on the tie, so the relevant one lands second.
    CHECK(average_precision(q) == 0.5);
}

TEST_CASE("metrics match brute-force recomputation on random query sets") {
    Rng rng(71);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<RankedQuery> queries;
        const std::size_t nq = 1 + rng.uniform_int(4);
        for (std::size_t qi = 0; qi < nq; ++qi) {
            RankedQuery q;
            q.query_id = "q" + std::to_string(qi);
            const std::size_t n = 1 + rng.uniform_int(7);
            for (std::size_t i = 0; i < n; ++i) {
                q.scores.push_back(rng.uniform(-1.0, 1.0));
                q.relevance.push_back(rng.bernoulli(0.35) ? 1 : 0);
            }
            queries.push_back(std::move(q));
        }
        // Brute force straight from the definitions.
        double ap_sum = 0.0, rr_sum = 0.0;
        std::size_t counted = 0;
        for (const auto& q : queries) {
            std::vector<std::size_t> order(q.size());
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return q.scores[a] > q.scores[b];
            });
            double ap = 0.0, rr = 0.0;
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
        if (counted == 0) {
            CHECK_THROWS_AS(mean_average_precision(queries), DataError);
            continue;
        }
        CHECK(std::fabs(mean_average_precision(queries) - ap_sum / counted) < 1e-12);
        CHECK(std::fabs(mean_reciprocal_rank(queries) - rr_sum / counted) < 1e-12);
    }
}

TEST_CASE("w1_empirical_1d: worked examples") {
    CHECK(w1_empirical_1d({1.0, 2.0, 3.0}, {3.0, 1.0, 2.0}) == 0.0);
    CHECK(w1_empirical_1d({0.0}, {3.0}) == 3.0);
    CHECK(w1_empirical_1d({0.0, 2.0}, {1.0, 3.0}) == 1.0);
    CHECK_THROWS_AS(w1_empirical_1d({1.0}, {1.0, 2.0}), DataError);
    CHECK_THROWS_AS(w1_empirical_1d({}, {}), DataError);
}

TEST_CASE("w1_empirical_1d: metric properties on random samples") {
    Rng rng(73);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t n = 2 + rng.uniform_int(30);
        std::vector<double> xs, ys, zs;
        for (std::size_t i = 0; i < n; ++i) {
            xs.push_back(rng.normal(0.0, 2.0));
            ys.push_back(rng.normal(0.5, 1.0));
            zs.push_back(rng.normal(-1.0, 1.5));
        }
        const double dxy = w1_empirical_1d(xs, ys);
        CHECK(dxy >= 0.0);
        CHECK(dxy == w1_empirical_1d(ys, xs));
        CHECK(w1_empirical_1d(xs, xs) == 0.0);
        CHECK(dxy <= w1_empirical_1d(xs, zs) + w1_empirical_1d(zs, ys) + 1e-12);
    }
}

TEST_CASE("w1_empirical_1d: zero iff equal multisets") {
    CHECK(w1_empirical_1d({1.0, 1.0, 2.0}, {2.0, 1.0, 1.0}) == 0.0);
    CHECK(w1_empirical_1d({1.0, 1.0, 2.0}, {2.0, 2.0, 1.0}) > 0.0);
}

TEST_CASE("wd_diff: elementwise baseline minus regularized") {
    CHECK(wd_diff({2.0, 2.0}, {2.0, 2.0}) == std::vector<double>{0.0, 0.0});
    CHECK(wd_diff({2.0, 2.0}, {1.5, 1.0}) == std::vector<double>{0.5, 1.0});
    CHECK_THROWS_AS(wd_diff({1.0}, {1.0, 2.0}), DataError);
}

TEST_CASE("group_queries preserves first-occurrence order") {
    std::vector<Triple> triples(4);
    triples[0].query_id = "b";
    triples[0].z = 1;
    triples[1].query_id = "a";
    triples[1].z = 0;
    triples[2].query_id = "b";
    triples[2].z = 0;
    triples[3].query_id = "a";
    triples[3].z = 1;
    const auto queries = group_queries(triples, {0.1, 0.2, 0.3, 0.4});
    REQUIRE(queries.size() == 2);
    CHECK(queries[0].query_id == "b");
    CHECK(queries[0].scores == std::vector<double>{0.1, 0.3});
    CHECK(queries[1].relevance == std::vector<int>{0, 1});
}

TEST_CASE("dump_features writes 2m data rows with K+2 columns, byte-stable") {
    Rng rng(79);
    ProjectorSpec spec;
    spec.embedding_dim = 3;
    spec.feature_dim = 4;
    const ParamSet f = init_projector_params(spec, rng);
    EncodedPairs data;
    data.x = wdmatch::detail::random_tensor({5, 3}, rng);
    data.y = wdmatch::detail::random_tensor({5, 3}, rng);

    const auto dir = std::filesystem::temp_directory_path();
    const std::string p1 = (dir / "wdm_feats1.csv").string();
    const std::string p2 = (dir / "wdm_feats2.csv").string();
    dump_features(f, spec, data, p1);
    dump_features(f, spec, data, p2);

    std::ifstream in(p1);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) lines.push_back(line);
    REQUIRE(lines.size() == 11); // header + 2 * 5
    CHECK(lines[0] == "domain,pair_index,f1,f2,f3,f4");
    CHECK(lines[1].rfind("X,0,", 0) == 0);
    CHECK(lines[6].rfind("Y,0,", 0) == 0);
    CHECK(std::count(lines[2].begin(), lines[2].end(), ',') == 5);

    std::ifstream a(p1, std::ios::binary), b(p2, std::ios::binary);
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    CHECK(sa.str() == sb.str());
    std::remove(p1.c_str());
    std::remove(p2.c_str());
}
