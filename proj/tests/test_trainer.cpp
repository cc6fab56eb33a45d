#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "gace/trainer.hpp"

using namespace gace;

namespace {

NodeFeatures make_nf(const std::vector<std::vector<double>>& sem,
                     const std::vector<std::array<double, kPageVecDim>>& page,
                     const std::vector<std::array<double, kInteractionDim>>& inter) {
    NodeFeatures nf;
    nf.sem_dim = sem[0].size();
    const std::size_t F = nf.sem_dim + kPageVecDim + kInteractionDim;
    nf.X = Matrix(sem.size(), F);
    for (std::size_t i = 0; i < sem.size(); ++i) {
        nf.ordering.push_back("n" + std::to_string(i));
        double* row = nf.X.row_ptr(i);
        for (std::size_t c = 0; c < nf.sem_dim; ++c) row[c] = sem[i][c];
        for (std::size_t c = 0; c < kPageVecDim; ++c) row[nf.sem_dim + c] = page[i][c];
        for (std::size_t c = 0; c < kInteractionDim; ++c) row[nf.sem_dim + kPageVecDim + c] = inter[i][c];
    }
    nf.interaction_lo = {0.0, 0.0, 0.0, 0.0};
    nf.interaction_hi = {1.0, 1.0, 1.0, 1.0};
    return nf;
}

NodeFeatures random_nf(std::size_t n, std::size_t k, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<std::vector<double>> sem(n, std::vector<double>(k));
    std::vector<std::array<double, kPageVecDim>> page(n);
    std::vector<std::array<double, kInteractionDim>> inter(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& x : sem[i]) x = gauss(rng);
        for (auto& x : page[i]) x = gauss(rng);
        for (auto& x : inter[i]) x = unit(rng);
    }
    return make_nf(sem, page, inter);
}

// Two planted communities: orthogonal semantic supports, shared page space.
WeightedGraph planted_two_cluster(std::size_t n, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.3, 1.0);
    std::vector<std::vector<double>> sem;
    std::vector<std::array<double, kPageVecDim>> page;
    std::vector<std::array<double, kInteractionDim>> inter;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> s(4, 0.0);
        if (i % 2 == 0) {
            s[0] = u(rng);
            s[1] = u(rng);
        } else {
            s[2] = u(rng);
            s[3] = u(rng);
        }
        sem.push_back(s);
        page.push_back({u(rng), u(rng), 0.0, 0.0, 0.0});
        inter.push_back({u(rng), u(rng), u(rng), u(rng)});
    }
    return build_graph(make_nf(sem, page, inter), {6, 1e-6});
}

EncoderParams random_params(std::size_t feature_dim, std::size_t hidden, std::size_t dim,
                            uint64_t seed) {
    auto p = init_encoder_params(feature_dim, hidden, dim, 0.2, seed);
    std::mt19937_64 rng(mix_seed(seed, 99));
    std::normal_distribution<double> gauss(0.0, 0.3);
    for (const auto& t : {p.a_h, p.a_mu, p.a_sig})
        for (auto& v : t->data) v = gauss(rng);
    return p;
}

}  // namespace

TEST(Decode, ZeroLatentDecodesToZero) {
    const auto a_hat = decode(Matrix(3, 2));
    ASSERT_EQ(a_hat.rows, 3u);
    ASSERT_EQ(a_hat.cols, 3u);
    for (double v : a_hat.data) EXPECT_EQ(v, 0.0);
}

TEST(Decode, OrthonormalRowsDecodeToIdentity) {
    Matrix z(3, 3);
    for (std::size_t i = 0; i < 3; ++i) z.at(i, i) = 1.0;
    const auto a_hat = decode(z);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(a_hat.at(i, j), i == j ? 1.0 : 0.0);
}

TEST(Decode, HandComputedEntries) {
    const auto a_hat = decode(Matrix(2, 2, {1.0, 2.0, 2.0, 1.0}));
    EXPECT_DOUBLE_EQ(a_hat.at(0, 1), 4.0);
    EXPECT_DOUBLE_EQ(a_hat.at(1, 0), 4.0);
    EXPECT_DOUBLE_EQ(a_hat.at(0, 0), 5.0);
    EXPECT_DOUBLE_EQ(a_hat.at(1, 1), 5.0);
}

TEST(Decode, ClipsNegativeInnerProducts) {
    const auto a_hat = decode(Matrix(2, 1, {1.0, -3.0}));
    EXPECT_EQ(a_hat.at(0, 1), 0.0);
    EXPECT_EQ(a_hat.at(1, 0), 0.0);
    EXPECT_EQ(a_hat.at(1, 1), 9.0);
}

TEST(Decode, SymmetricAndNonNegativeOnRandomInputs) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix z(7, 4);
    for (auto& v : z.data) v = gauss(rng);
    const auto a_hat = decode(z);
    for (std::size_t i = 0; i < 7; ++i)
        for (std::size_t j = 0; j < 7; ++j) {
            EXPECT_GE(a_hat.at(i, j), 0.0);
            EXPECT_EQ(a_hat.at(i, j), a_hat.at(j, i));
        }
}

TEST(RowKl, PointMassAgainstUniformIsLogTwo) {
    EXPECT_NEAR(row_kl({1.0, 0.0}, {0.5, 0.5}, 1e-8), std::log(2.0), 1e-5);
}

TEST(RowKl, IdenticalRowsGiveZero) {
    EXPECT_EQ(row_kl({0.3, 0.2, 0.5}, {0.3, 0.2, 0.5}, 1e-8), 0.0);
}

TEST(RowKl, ProportionalRowsGiveNearlyZero) {
    EXPECT_NEAR(row_kl({2.0, 6.0, 4.0}, {6.0, 18.0, 12.0}, 1e-8), 0.0, 1e-9);
}

TEST(RowKl, NonNegativeOnRandomPairs) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    for (int t = 0; t < 1000; ++t) {
        std::vector<double> pred(4), target(4);
        for (auto& v : pred) v = u(rng);
        for (auto& v : target) v = u(rng);
        EXPECT_GE(row_kl(pred, target, 1e-8), 0.0);
    }
}

TEST(RowKl, RejectsEmptyOrMismatchedRows) {
    EXPECT_THROW(row_kl({}, {}, 1e-8), Error);
    EXPECT_THROW(row_kl({1.0}, {1.0, 2.0}, 1e-8), Error);
    EXPECT_THROW(row_kl({1.0}, {1.0}, 0.0), Error);
}

TEST(ReconLoss, MatchesPerRowAssembly) {
    // a: path 0-1-2 plus edge 1-3.
    Matrix a(4, 4);
    a.at(0, 1) = a.at(1, 0) = 0.5;
    a.at(1, 2) = a.at(2, 1) = 1.5;
    a.at(1, 3) = a.at(3, 1) = 0.25;
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    Matrix a_hat(4, 4);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = i; j < 4; ++j) a_hat.at(i, j) = a_hat.at(j, i) = u(rng);
    const double eps = 1e-8;
    double expected = 0.0;
    expected += row_kl({a_hat.at(0, 0), a_hat.at(0, 1)}, {kSelfWeight, 0.5}, eps);
    expected += row_kl({a_hat.at(1, 0), a_hat.at(1, 1), a_hat.at(1, 2), a_hat.at(1, 3)},
                       {0.5, kSelfWeight, 1.5, 0.25}, eps);
    expected += row_kl({a_hat.at(2, 1), a_hat.at(2, 2)}, {1.5, kSelfWeight}, eps);
    expected += row_kl({a_hat.at(3, 1), a_hat.at(3, 3)}, {0.25, kSelfWeight}, eps);
    EXPECT_DOUBLE_EQ(recon_loss(a_hat, a, eps), expected);
}

TEST(ReconLoss, ZeroWhenPredictionMatchesTargets) {
    // Edgeless graph: each row reduces to the self entry, and predicting the
    // self weight exactly zeroes the loss.
    Matrix a(3, 3);
    Matrix a_hat(3, 3);
    for (std::size_t i = 0; i < 3; ++i) a_hat.at(i, i) = kSelfWeight;
    EXPECT_EQ(recon_loss(a_hat, a, 1e-8), 0.0);
}

TEST(PriorKl, ZeroAtTheStandardNormal) {
    EXPECT_EQ(prior_kl(Matrix(4, 3), Matrix(4, 3)), 0.0);
}

TEST(PriorKl, HandComputedValues) {
    EXPECT_DOUBLE_EQ(prior_kl(Matrix(1, 1, {1.0}), Matrix(1, 1, {0.0})), 0.5);
    const double expected = 0.5 * (std::exp(2.0 * std::log(2.0)) - 1.0 - 2.0 * std::log(2.0));
    EXPECT_NEAR(prior_kl(Matrix(1, 1, {0.0}), Matrix(1, 1, std::vector<double>{std::log(2.0)})),
                expected, 1e-12);
}

TEST(PriorKl, NonNegativeOnRandomInputs) {
    std::mt19937_64 rng(13);
    std::normal_distribution<double> gauss(0.0, 1.5);
    for (int t = 0; t < 1000; ++t) {
        Matrix mu(2, 3), ls(2, 3);
        for (auto& v : mu.data) v = gauss(rng);
        for (auto& v : ls.data) v = gauss(rng);
        EXPECT_GE(prior_kl(mu, ls), 0.0);
    }
}

TEST(PriorKl, TensorVersionMatchesPlainVersion) {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix mu(5, 4), ls(5, 4);
    for (auto& v : mu.data) v = gauss(rng);
    for (auto& v : ls.data) v = gauss(rng);
    Tape tape;
    const auto t = prior_kl_t(tape, from_matrix(mu), from_matrix(ls));
    EXPECT_NEAR(t->data[0], prior_kl(mu, ls), 1e-12);
}

TEST(ReconLossTensor, MatchesMatrixVersionThroughDecode) {
    std::mt19937_64 rng(19);
    const auto g = build_graph(random_nf(7, 3, rng), {3, 1e-6});
    const auto plan = build_plan(g);
    Matrix z(7, 4);
    std::normal_distribution<double> gauss(0.0, 0.8);
    for (auto& v : z.data) v = gauss(rng);

    Matrix a(7, 7);
    for (std::size_t i = 0; i < 7; ++i)
        for (const auto& [j, w] : g.neighbors(i)) a.at(i, j) = w;
    const double eps = 1e-8;
    const double expected = recon_loss(decode(z), a, eps);
    Tape tape;
    const auto got = recon_loss_t(tape, plan, from_matrix(z), eps);
    EXPECT_NEAR(got->data[0], expected, 1e-10 * (1.0 + std::abs(expected)));
}

TEST(TotalLoss, CombinesTermsUnderTheConfiguredWeight) {
    std::mt19937_64 rng(23);
    const auto g = build_graph(random_nf(6, 3, rng), {3, 1e-6});
    const auto plan = build_plan(g);
    const auto x = from_matrix(g.features.X);
    const auto p = random_params(g.features.X.cols, 5, 3, 31);
    const auto noise = draw_noise(6, 3, rng);

    TrainConfig cfg;
    cfg.kl_weight = 0.0;
    {
        Tape tape;
        const auto parts = total_loss_t(tape, plan, x, p, noise, cfg);
        EXPECT_EQ(parts.total->data[0], parts.recon->data[0]);
    }
    cfg.kl_weight = 2.5;
    {
        Tape tape;
        const auto parts = total_loss_t(tape, plan, x, p, noise, cfg);
        EXPECT_DOUBLE_EQ(parts.total->data[0], parts.recon->data[0] + 2.5 * parts.prior->data[0]);
        EXPECT_GE(parts.prior->data[0], 0.0);
        EXPECT_GE(parts.recon->data[0], 0.0);
    }
    cfg.flip_prior_sign = true;
    {
        Tape tape;
        const auto parts = total_loss_t(tape, plan, x, p, noise, cfg);
        EXPECT_DOUBLE_EQ(parts.total->data[0], parts.recon->data[0] - 2.5 * parts.prior->data[0]);
    }
}

TEST(TotalLoss, FiniteAtAllZeroParameters) {
    std::mt19937_64 rng(29);
    const auto g = build_graph(random_nf(5, 3, rng), {3, 1e-6});
    auto p = init_encoder_params(g.features.X.cols, 4, 3, 0.2, 1);
    for (const auto& t : p.trainable())
        for (auto& v : t->data) v = 0.0;
    const auto noise = draw_noise(5, 3, rng);
    Tape tape;
    const auto parts = total_loss_t(tape, build_plan(g), from_matrix(g.features.X), p, noise, TrainConfig{});
    EXPECT_TRUE(std::isfinite(parts.total->data[0]));
    EXPECT_EQ(parts.prior->data[0], 0.0);  // mu = 0, sigma = 1 is the prior itself
}

TEST(TotalLoss, GradientsMatchFiniteDifferencesOnSixNodeGraph) {
    // Seeds chosen so no hidden unit is dead: a dead unit has exactly-zero
    // analytic gradients, and central differences then compare float noise
    // against the relative-error floor.
    std::mt19937_64 rng(42);
    const auto g = build_graph(random_nf(6, 2, rng), {4, 1e-6});
    const auto plan = build_plan(g);
    const auto x = from_matrix(g.features.X);
    const auto p = random_params(g.features.X.cols, 3, 2, 46);
    const auto noise = draw_noise(6, 2, rng);
    TrainConfig cfg;
    cfg.kl_weight = 0.7;
    const LossFn f = [&](Tape& tape, const std::vector<TensorPtr>&) {
        return total_loss_t(tape, plan, x, p, noise, cfg).total;
    };
    EXPECT_LT(grad_check(f, p.trainable(), 1e-4), 1e-4);
}

TEST(Train, ZeroEpochsLeavesTheSeededInitialization) {
    const auto g = planted_two_cluster(10, 3);
    TrainConfig cfg;
    cfg.epochs = 0;
    cfg.hidden_dim = 4;
    cfg.embed_dim = 3;
    cfg.seed = 5;
    const auto r1 = train(g, cfg);
    const auto r2 = train(g, cfg);
    EXPECT_TRUE(r1.history.empty());
    EXPECT_EQ(r1.params.w_h->data, r2.params.w_h->data);
    EXPECT_EQ(r1.params.w_mu->data, r2.params.w_mu->data);
    // Initialization property: attention vectors start at zero.
    for (double v : r1.params.a_h->data) EXPECT_EQ(v, 0.0);
    const double bound = std::sqrt(6.0 / (4 + g.features.X.cols));
    for (double v : r1.params.w_h->data) EXPECT_LE(std::abs(v), bound);
}

TEST(Train, LossDescendsOnPlantedClusters) {
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        const auto g = planted_two_cluster(20, 100 + seed);
        TrainConfig cfg;
        cfg.epochs = 60;
        cfg.lr = 1e-2;
        cfg.optimizer = "adamw";
        cfg.hidden_dim = 16;
        cfg.embed_dim = 8;
        cfg.seed = seed;
        const auto report = train(g, cfg);
        ASSERT_EQ(report.history.size(), 60u);
        double tail = 0.0;
        for (std::size_t e = 55; e < 60; ++e) tail += report.history[e].total;
        tail /= 5.0;
        EXPECT_LT(tail, report.history[0].total) << "seed " << seed;
        for (const auto& s : report.history) {
            EXPECT_TRUE(std::isfinite(s.total));
            EXPECT_GE(s.recon, 0.0);
            EXPECT_GE(s.prior, 0.0);
        }
    }
}

TEST(Train, GdOptimizerAlsoDescends) {
    const auto g = planted_two_cluster(12, 7);
    TrainConfig cfg;
    cfg.epochs = 40;
    cfg.lr = 5e-3;
    cfg.optimizer = "gd";
    cfg.hidden_dim = 8;
    cfg.embed_dim = 4;
    cfg.seed = 2;
    const auto report = train(g, cfg);
    double tail = 0.0;
    for (std::size_t e = 35; e < 40; ++e) tail += report.history[e].total;
    EXPECT_LT(tail / 5.0, report.history.front().total);
}

TEST(Train, DeterministicGivenTheSeed) {
    const auto g = planted_two_cluster(12, 9);
    TrainConfig cfg;
    cfg.epochs = 8;
    cfg.hidden_dim = 6;
    cfg.embed_dim = 4;
    cfg.seed = 11;
    const auto r1 = train(g, cfg);
    const auto r2 = train(g, cfg);
    ASSERT_EQ(r1.history.size(), r2.history.size());
    for (std::size_t e = 0; e < r1.history.size(); ++e) {
        EXPECT_EQ(r1.history[e].total, r2.history[e].total);
        EXPECT_EQ(r1.history[e].recon, r2.history[e].recon);
        EXPECT_EQ(r1.history[e].prior, r2.history[e].prior);
    }
    for (std::size_t t = 0; t < 6; ++t)
        EXPECT_EQ(r1.params.trainable()[t]->data, r2.params.trainable()[t]->data);

    cfg.seed = 12;
    const auto r3 = train(g, cfg);
    EXPECT_NE(r1.history.back().total, r3.history.back().total);
}

TEST(Train, DivergenceGuardNamesTheEpoch) {
    const auto g = planted_two_cluster(8, 15);
    TrainConfig cfg;
    cfg.epochs = 60;
    cfg.optimizer = "gd";
    cfg.lr = 0.05;
    // Flipping the prior sign makes the objective unbounded below, so plain
    // gradient descent inflates the parameters until the loss overflows. The
    // weight must stay moderate: an astronomically large one kills every relu
    // in a single step and the encoder freezes at a finite loss instead.
    cfg.kl_weight = 1e3;
    cfg.flip_prior_sign = true;
    cfg.hidden_dim = 4;
    cfg.embed_dim = 3;
    try {
        train(g, cfg);
        FAIL() << "expected divergence";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("diverged"), std::string::npos) << e.what();
    }
}

TEST(Train, RejectsInvalidConfigs) {
    const auto g = planted_two_cluster(6, 21);
    TrainConfig cfg;
    cfg.lr = 0.0;
    EXPECT_THROW(train(g, cfg), Error);
    cfg = TrainConfig{};
    cfg.optimizer = "sgd";
    EXPECT_THROW(train(g, cfg), Error);
    cfg = TrainConfig{};
    cfg.kl_weight = -1.0;
    EXPECT_THROW(train(g, cfg), Error);
    cfg = TrainConfig{};
    cfg.eps = 0.0;
    EXPECT_THROW(train(g, cfg), Error);
}

TEST(History, SerializesOneRowPerEpoch) {
    std::vector<EpochStats> h = {{0, 3.5, 3.0, 0.5}, {1, 2.5, 2.25, 0.25}};
    const auto text = serialize_history(h);
    EXPECT_EQ(text.substr(0, text.find('\n')), "epoch,total,recon,prior");
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
    EXPECT_NE(text.find("\n0,3.5,3,0.5\n"), std::string::npos);
    EXPECT_NE(text.find("\n1,2.5,2.25,0.25\n"), std::string::npos);
}
