#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>

#include "wdmatch/selftest.hpp"
#include "wdmatch/wdreg.hpp"

using namespace wdmatch;

namespace {

// Projector that passes encoded rows through unchanged (identity layer).
struct IdentitySetup {
    ProjectorSpec spec;
    ParamSet f;
};

IdentitySetup identity_projector(int dim) {
    IdentitySetup s;
    s.spec.encoder = EncoderKind::BagOfEmbeddings;
    s.spec.embedding_dim = dim;
    s.spec.feature_dim = dim;
    Tensor eye({static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)});
    for (int i = 0; i < dim; ++i) eye.at(i, i) = 1.0;
    s.f.tensors["F.W0"] = eye;
    s.f.tensors["F.b0"] = Tensor({1, static_cast<std::size_t>(dim)});
    return s;
}

CriticBatch random_batch(std::size_t n, int k, Rng& rng) {
    std::vector<FeaturePair> pairs;
    for (std::size_t i = 0; i < n; ++i) {
        FeaturePair fp;
        for (int j = 0; j < k; ++j) {
            fp.hx.push_back(rng.uniform(-2.0, 2.0));
            fp.hy.push_back(rng.uniform(-2.0, 2.0));
        }
        pairs.push_back(fp);
    }
    return CriticBatch::from_pairs(pairs);
}

bool bits_equal(double a, double b) {
    std::uint64_t x, y;
    std::memcpy(&x, &a, 8);
    std::memcpy(&y, &b, 8);
    return x == y;
}

} // namespace

TEST_CASE("critic objective: swapping domains negates bit-exactly") {
    Rng rng(31);
    CriticSpec cspec;
    cspec.hidden_width = 12;
    for (int trial = 0; trial < 10; ++trial) {
        ParamSet g = init_critic_params(5, cspec, rng);
        CriticBatch batch = random_batch(14, 5, rng);
        CriticBatch swapped;
        swapped.hx = batch.hy;
        swapped.hy = batch.hx;
        for (Reduction red : {Reduction::Sum, Reduction::Mean}) {
            const double o = critic_objective_value(g, batch, red);
            const double o_swapped = critic_objective_value(g, swapped, red);
            CHECK(bits_equal(o_swapped, -o));
        }
    }
}

TEST_CASE("critic objective: pairwise-equal features give exactly zero") {
    Rng rng(37);
    CriticSpec cspec;
    cspec.hidden_width = 12;
    for (int trial = 0; trial < 10; ++trial) {
        ParamSet g = init_critic_params(4, cspec, rng);
        CriticBatch batch = random_batch(9, 4, rng);
        batch.hy = batch.hx;
        CHECK(critic_objective_value(g, batch, Reduction::Sum) == 0.0);
    }
}

TEST_CASE("critic objective: linear critic hand example sums to 6") {
    // G(h) = h via identity hidden layer; X = (3, 5), Y = (1, 1).
    ParamSet g;
    g.tensors["G.W0"] = Tensor({1, 1}, {1.0});
    g.tensors["G.b0"] = Tensor({1, 1});
    g.tensors["G.W1"] = Tensor({1, 1}, {1.0});
    g.tensors["G.b1"] = Tensor({1, 1});
    CriticBatch batch;
    batch.hx = Tensor({2, 1}, {3.0, 5.0});
    batch.hy = Tensor({2, 1}, {1.0, 1.0});
    CHECK(critic_objective_value(g, batch, Reduction::Sum) == 6.0);
    CHECK(critic_objective_value(g, batch, Reduction::Mean) == 3.0);
}

TEST_CASE("critic objective rejects empty batches") {
    ParamSet g;
    g.tensors["G.W0"] = Tensor({1, 1}, {1.0});
    CriticBatch batch;
    CHECK_THROWS_AS(critic_objective(g, batch, Reduction::Sum), DataError);
    CHECK_THROWS_AS(CriticBatch::from_pairs({}), DataError);
}

TEST_CASE("regularizer branch: k=0 leaves the critic unchanged") {
    Rng rng(41);
    auto setup = identity_projector(3);
    CriticSpec cspec;
    cspec.hidden_width = 8;
    ParamSet g = init_critic_params(3, cspec, rng);
    AdamState st = AdamState::init(g);
    EncodedPairs data;
    data.x = wdmatch::detail::random_tensor({20, 3}, rng);
    data.y = wdmatch::detail::random_tensor({20, 3}, rng);
    RegularizerConfig cfg;
    cfg.k = 0;
    BatchSampler sampler(20, Rng(1));
    const auto before = g.checksum();
    regularizer_branch(g, st, setup.f, setup.spec, data, cfg, sampler);
    CHECK(g.checksum() == before);
    CHECK(st.t == 0);
}

TEST_CASE("regularizer branch: clips after every step and never touches F") {
    Rng rng(43);
    auto setup = identity_projector(3);
    CriticSpec cspec;
    cspec.hidden_width = 8;
    ParamSet g = init_critic_params(3, cspec, rng);
    AdamState st = AdamState::init(g);
    EncodedPairs data;
    data.x = wdmatch::detail::random_tensor({64, 3}, rng, 0.0, 1.0);
    data.y = wdmatch::detail::random_tensor({64, 3}, rng, 1.0, 2.0);
    RegularizerConfig cfg;
    cfg.k = 25;
    cfg.n1 = 16;
    cfg.clip = 0.2;
    BatchSampler sampler(64, Rng(2));
    const auto f_before = setup.f.checksum();
    int steps = 0;
    int violations = 0;
    regularizer_branch(g, st, setup.f, setup.spec, data, cfg, sampler,
                       [&](const ParamSet& gp, double) {
                           ++steps;
                           if (gp.max_abs() > cfg.clip) ++violations;
                       });
    CHECK(steps == 25);
    CHECK(violations == 0);
    CHECK(st.t == 25);
    CHECK(setup.f.checksum() == f_before);
    CHECK(g.max_abs() <= cfg.clip);
}

TEST_CASE("clipped critic on two-point domains converges to the clipped maximum") {
    // X ~ point mass at 0, Y ~ point mass at 1, width-1 critic, c = 0.5.
    // The maximum of the clipped objective is c^2 = 0.25 with a weight pinned
    // at the clip boundary.
    auto setup = identity_projector(1);
    ParamSet g;
    g.tensors["G.W0"] = Tensor({1, 1}, {0.1});
    g.tensors["G.b0"] = Tensor({1, 1}, {0.1});
    g.tensors["G.W1"] = Tensor({1, 1}, {0.1});
    g.tensors["G.b1"] = Tensor({1, 1}, {0.0});
    AdamState st = AdamState::init(g);
    EncodedPairs data;
    data.x = Tensor({8, 1});
    data.y = Tensor::full({8, 1}, 1.0);
    RegularizerConfig cfg;
    cfg.k = 2000;
    cfg.n1 = 8;
    cfg.lr_critic = 0.01;
    cfg.clip = 0.5;
    BatchSampler sampler(8, Rng(3));
    regularizer_branch(g, st, setup.f, setup.spec, data, cfg, sampler);
    CriticBatch batch;
    batch.hx = data.x;
    batch.hy = data.y;
    const double objective = critic_objective_value(g, batch, Reduction::Mean);
    CHECK(objective > 0.9 * 0.25);
    CHECK(objective <= 0.25 + 1e-9);
    CHECK(g.max_abs() == 0.5); // pinned exactly at the boundary by clipping
}

TEST_CASE("estimate_wd: identically paired features give exactly zero") {
    Rng rng(47);
    auto setup = identity_projector(2);
    CriticSpec cspec;
    cspec.hidden_width = 8;
    ParamSet g = init_critic_params(2, cspec, rng);
    EncodedPairs data;
    data.x = wdmatch::detail::random_tensor({50, 2}, rng);
    data.y = data.x;
    RegularizerConfig cfg;
    Rng est_rng(5);
    const double est = estimate_wd(g, setup.f, setup.spec, data, 50, 40, cfg, est_rng);
    CHECK(est == 0.0);
}

TEST_CASE("estimate_wd grows with the domain shift") {
    Rng rng(53);
    auto setup = identity_projector(1);
    CriticSpec cspec;
    cspec.hidden_width = 16;
    std::vector<double> base;
    for (int i = 0; i < 200; ++i) base.push_back(rng.normal());
    std::vector<double> estimates;
    for (double delta : {0.0, 1.0, 2.0}) {
        EncodedPairs data;
        data.x = Tensor({200, 1});
        data.y = Tensor({200, 1});
        for (int i = 0; i < 200; ++i) {
            data.x.at(static_cast<std::size_t>(i), 0) = base[static_cast<std::size_t>(i)];
            data.y.at(static_cast<std::size_t>(i), 0) =
                base[199 - static_cast<std::size_t>(i)] + delta;
        }
        ParamSet g = init_params(1, cspec, 9);
        RegularizerConfig cfg;
        cfg.n1 = 64;
        cfg.clip = 0.2;
        Rng est_rng(7);
        estimates.push_back(estimate_wd(g, setup.f, setup.spec, data, 200, 250, cfg, est_rng));
    }
    CAPTURE(estimates);
    CHECK(estimates[0] < estimates[1]);
    CHECK(estimates[1] < estimates[2]);
    CHECK(estimates[0] < 0.2);
}

TEST_CASE("estimate_wd evaluation is invariant to batch order") {
    Rng rng(59);
    auto setup = identity_projector(2);
    CriticSpec cspec;
    cspec.hidden_width = 8;
    ParamSet g = init_critic_params(2, cspec, rng);
    clip_params(g, 0.1);
    EncodedPairs data;
    data.x = wdmatch::detail::random_tensor({30, 2}, rng);
    data.y = wdmatch::detail::random_tensor({30, 2}, rng);
    std::vector<std::size_t> idx(30);
    std::iota(idx.begin(), idx.end(), 0);
    const double a = mean_objective_canonical(g, setup.f, setup.spec, data, idx);
    std::reverse(idx.begin(), idx.end());
    Rng shuf(3);
    shuf.shuffle(idx);
    const double b = mean_objective_canonical(g, setup.f, setup.spec, data, idx);
    CHECK(bits_equal(a, b));
}

TEST_CASE("estimate_wd validates its inputs") {
    Rng rng(61);
    auto setup = identity_projector(2);
    CriticSpec cspec;
    ParamSet g = init_critic_params(2, cspec, rng);
    EncodedPairs data;
    data.x = Tensor({4, 2});
    data.y = Tensor({4, 2});
    RegularizerConfig cfg;
    Rng est_rng(1);
    CHECK_THROWS_AS(estimate_wd(g, setup.f, setup.spec, data, 0, 10, cfg, est_rng), ConfigError);
    CHECK_THROWS_AS(estimate_wd(g, setup.f, setup.spec, data, 4, -1, cfg, est_rng), ConfigError);
}

TEST_CASE("sum and mean reductions are consistent") {
    Rng rng(67);
    CriticSpec cspec;
    cspec.hidden_width = 6;
    ParamSet g = init_critic_params(3, cspec, rng);
    CriticBatch batch = random_batch(10, 3, rng);
    const double sum = critic_objective_value(g, batch, Reduction::Sum);
    const double mean = critic_objective_value(g, batch, Reduction::Mean);
    CHECK(mean == sum / 10.0);
}
