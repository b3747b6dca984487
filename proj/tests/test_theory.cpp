#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "sparseft/rng.hpp"
#include "sparseft/theory.hpp"

using namespace sparseft;

TEST_CASE("phs_bound plug-in values and the full-tuning sentinel") {
    BoundInputs in;
    in.rho = 1.0;
    in.lambda_min = 0.0;
    in.n = 100;
    in.p = 0.5;
    CHECK(phs_bound(in) == doctest::Approx(0.02).epsilon(1e-12));
    in.p = 0.9;
    CHECK(phs_bound(in) == doctest::Approx(0.1).epsilon(1e-12));
    in.p = 1.0;
    CHECK(std::isinf(phs_bound(in)));
}

TEST_CASE("phs_bound decreases monotonically as p decreases") {
    const std::vector<double> sweep{0.0002, 0.0005, 0.001, 0.002, 0.005,
                                    0.01,   0.02,   0.05,  0.1,   0.2};
    BoundInputs in;
    in.rho = 2.3;
    in.lambda_min = 0.0;
    in.n = 180;
    double prev = -1.0;
    for (double p : sweep) {
        in.p = p;
        const double b = phs_bound(in);
        CHECK(b >= prev);
        prev = b;
    }
}

TEST_CASE("gen_bound plug-in values and monotonicity in beta") {
    BoundInputs in;
    in.C = 1.0;
    in.n = 100;
    in.delta = 0.5;
    CHECK(gen_bound(0.0, in, 0.0) == doctest::Approx(0.1).epsilon(1e-12));
    in.delta = 0.1;
    CHECK(gen_bound(0.0, in, 0.02) == doctest::Approx(std::sqrt(25.0 / 20.0)).epsilon(1e-9));

    double prev = 0.0;
    for (double beta : {0.0, 0.01, 0.05, 0.2, 1.0}) {
        const double b = gen_bound(0.3, in, beta);
        CHECK(b > prev);
        CHECK(b >= 0.3);
        prev = b;
    }
}

TEST_CASE("expected regularizer: exact cases and MC convergence") {
    std::vector<double> theta{1, 1, 1, 1};
    std::vector<double> theta0{0, 0, 0, 0};

    // p = 1 keeps every coordinate: zero for every trial
    CHECK(expected_regularizer_mc(theta, theta0, 1.0, 50, 3) == 0.0);
    // theta == theta0
    CHECK(expected_regularizer_mc(theta0, theta0, 0.5, 50, 3) == 0.0);

    // exhaustive oracle over all C(4,2) = 6 masks: mean drop = (1 - 2/4) * 4 = 2
    double exhaustive = 0.0;
    for (int a = 0; a < 4; ++a)
        for (int b = a + 1; b < 4; ++b) exhaustive += 4.0 - (theta[a] * theta[a] + theta[b] * theta[b]);
    exhaustive /= 6.0;
    CHECK(exhaustive == doctest::Approx(2.0).epsilon(1e-15));

    const double mc = expected_regularizer_mc(theta, theta0, 0.5, 100000, 17);
    CHECK(std::fabs(mc - 2.0) / 2.0 < 0.01);

    CHECK_THROWS_AS(expected_regularizer_mc(theta, theta0, 0.1, 10, 1), ZeroBudget);
}

TEST_CASE("MC standard error shrinks roughly like 1/sqrt(trials)") {
    Rng rng(5);
    std::vector<double> theta(10), theta0(10, 0.0);
    for (double& v : theta) v = rng.normal();
    auto spread = [&](int trials) {
        std::vector<double> vals;
        for (int rep = 0; rep < 12; ++rep) {
            vals.push_back(expected_regularizer_mc(theta, theta0, 0.3, trials, 100 + rep));
        }
        double mu = 0.0;
        for (double v : vals) mu += v;
        mu /= vals.size();
        double s = 0.0;
        for (double v : vals) s += (v - mu) * (v - mu);
        return std::sqrt(s / (vals.size() - 1));
    };
    const double s_small = spread(100);
    const double s_big = spread(10000);
    CHECK(s_big < s_small);  // 10x expected; demand at least 3x
    CHECK(s_big * 3.0 < s_small);
}

TEST_CASE("hessian diagonal by finite differences on a quadratic") {
    auto f = [](const std::vector<double>& t) { return t[0] * t[0] + 3.0 * t[1] * t[1]; };
    auto diag = hessian_diag_fd(f, {0.3, -0.7}, 1e-3);
    CHECK(diag[0] == doctest::Approx(2.0).epsilon(1e-4));
    CHECK(diag[1] == doctest::Approx(6.0).epsilon(1e-4));

    std::vector<double> huge(501, 0.0);
    CHECK_THROWS_AS(hessian_diag_fd(f, huge, 1e-3), TooLarge);
}

TEST_CASE("lambda_min by finite differences on a known spectrum") {
    // f = x' A x with A = diag(1, 4): Hessian diag(2, 8), smallest 2
    auto f = [](const std::vector<double>& t) { return t[0] * t[0] + 4.0 * t[1] * t[1]; };
    CHECK(lambda_min_fd(f, {0.2, 0.1}, 1e-4) == doctest::Approx(2.0).epsilon(1e-3));

    // indefinite: f = x0^2 - x1^2 has Hessian diag(2, -2)
    auto g = [](const std::vector<double>& t) { return t[0] * t[0] - t[1] * t[1]; };
    CHECK(lambda_min_fd(g, {0.1, 0.1}, 1e-4) == doctest::Approx(-2.0).epsilon(1e-3));

    std::vector<double> huge(61, 0.0);
    CHECK_THROWS_AS(lambda_min_fd(f, huge, 1e-4), TooLarge);
}

TEST_CASE("diagonal FD agrees with the FD-of-FD-gradient oracle on a tiny MLP") {
    ModelSpec s;
    s.input_dim = 2;
    s.hidden_dims = {3};
    s.head_dim = 2;
    Model model = build_model(s, 23);
    Dataset ds;
    ds.classification = true;
    ds.input_dim = 2;
    Rng rng(31);
    for (int i = 0; i < 12; ++i) {
        ds.x.push_back(rng.normal());
        ds.x.push_back(rng.normal());
        ds.labels.push_back(i % 2);
    }
    std::vector<int> rows;
    for (int i = 0; i < 12; ++i) rows.push_back(i);

    Model probe = model;
    auto f = [&](const std::vector<double>& theta) {
        probe.mutable_params() = theta;
        return probe.loss(ds, rows);
    };
    const std::vector<double> theta = model.params();
    const double h = 1e-3;
    const std::vector<double> diag = hessian_diag_fd(f, theta, h);

    // independent scheme: central difference of the FD gradient field
    for (int i = 0; i < model.param_count(); i += 3) {
        std::vector<double> tp = theta, tm = theta;
        tp[static_cast<std::size_t>(i)] += h;
        tm[static_cast<std::size_t>(i)] -= h;
        const double gp = ag::finite_diff_grad(f, tp, h)[static_cast<std::size_t>(i)];
        const double gm = ag::finite_diff_grad(f, tm, h)[static_cast<std::size_t>(i)];
        const double oracle = (gp - gm) / (2.0 * h);
        CHECK(std::fabs(diag[static_cast<std::size_t>(i)] - oracle) /
                  (1.0 + std::fabs(oracle)) < 1e-3);
    }
}

TEST_CASE("rayleigh upper bound: identity, indefinite diagonal, random PSD") {
    // identity: equality, zero violation
    std::vector<double> eye{1, 0, 0, 1};
    RayleighCheck r = rayleigh_upperbound_check(eye, 2, 50, 1);
    CHECK(r.ok);
    CHECK(r.max_violation == doctest::Approx(0.0));
    CHECK(r.lambda_max_abs == doctest::Approx(1.0).epsilon(1e-10));

    // diag(1, -3): |lambda_max| = 3 dominates the Rayleigh quotient
    std::vector<double> ind{1, 0, 0, -3};
    r = rayleigh_upperbound_check(ind, 2, 200, 2);
    CHECK(r.ok);
    CHECK(r.lambda_max_abs == doctest::Approx(3.0).epsilon(1e-10));

    // 100 random PSD matrices built from a known eigendecomposition
    Rng rng(77);
    const int m = 20;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::vector<double>> u(m, std::vector<double>(m));
        for (auto& row : u)
            for (double& v : row) v = rng.normal();
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < i; ++j) {
                double dot = 0.0;
                for (int t = 0; t < m; ++t) dot += u[i][t] * u[j][t];
                for (int t = 0; t < m; ++t) u[i][t] -= dot * u[j][t];
            }
            double norm = 0.0;
            for (int t = 0; t < m; ++t) norm += u[i][t] * u[i][t];
            norm = std::sqrt(norm);
            for (int t = 0; t < m; ++t) u[i][t] /= norm;
        }
        std::vector<double> lambda(m);
        double lmax = 0.0;
        for (double& v : lambda) {
            v = std::fabs(rng.normal()) * 2.0;
            lmax = std::max(lmax, v);
        }
        std::vector<double> hmat(static_cast<std::size_t>(m) * m, 0.0);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j) {
                double s = 0.0;
                for (int t = 0; t < m; ++t) s += u[t][i] * lambda[t] * u[t][j];
                hmat[static_cast<std::size_t>(i * m + j)] = s;
            }
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < i; ++j) {
                const double avg = 0.5 * (hmat[static_cast<std::size_t>(i * m + j)] +
                                          hmat[static_cast<std::size_t>(j * m + i)]);
                hmat[static_cast<std::size_t>(i * m + j)] = avg;
                hmat[static_cast<std::size_t>(j * m + i)] = avg;
            }
        RayleighCheck rc = rayleigh_upperbound_check(hmat, m, 20, 1000 + trial);
        CHECK(rc.ok);
        CHECK(rc.lambda_max_abs == doctest::Approx(lmax).epsilon(1e-6));
    }
}

TEST_CASE("asymmetric matrices are rejected") {
    std::vector<double> bad{1, 2, 3, 4};
    CHECK_THROWS_AS(rayleigh_upperbound_check(bad, 2, 10, 1), NotSymmetric);
}

namespace {

// convex head-only regression fixture with a duplicated, symmetric design:
// every sample is fit exactly at w = 1, b = 0, so removing one copy keeps
// the minimizer unchanged
SplitData duplicated_regression() {
    Dataset train;
    train.classification = false;
    train.input_dim = 1;
    train.target_dim = 1;
    train.x = {1.0, 1.0, -1.0, -1.0};
    train.targets = {1.0, 1.0, -1.0, -1.0};
    SplitData s;
    s.train = train;
    s.dev = train;
    s.test = train;
    return s;
}

Checkpoint head_only_regression_ckpt(std::uint64_t seed) {
    ModelSpec ms;
    ms.input_dim = 1;
    ms.head = HeadKind::regression;
    ms.head_dim = 1;
    return make_checkpoint(build_model(ms, seed), seed);
}

}  // namespace

TEST_CASE("phs_estimate: removing a duplicated sample leaves the minimizer") {
    SplitData data = duplicated_regression();
    Checkpoint ckpt = head_only_regression_ckpt(3);
    StrategyConfig strat;
    strat.variant = StrategyKind::random;
    strat.p = 1.0;
    strat.head_in_budget = true;
    strat.seed = 1;
    TrainConfig cfg;
    cfg.seed = 1;
    cfg.lr = 0.2;
    cfg.batch_size = 4;
    cfg.max_epochs = 1500;
    cfg.early_stop_tolerance = 1500;

    StabilityReport rep = phs_estimate(ckpt, strat, data, cfg, {0}, 0.1, "dup");
    CHECK(rep.per_index_delta_task[0] < 1e-6);
    CHECK(rep.per_index_delta[0] < 1e-6);
    CHECK(rep.phs_empirical < 1e-6);
}

TEST_CASE("phs_estimate: n = 1 compares against the zero-step initialization") {
    Dataset lone;
    lone.classification = false;
    lone.input_dim = 1;
    lone.target_dim = 1;
    lone.x = {1.0};
    lone.targets = {2.0};
    SplitData data;
    data.train = lone;
    data.dev = lone;
    data.test = lone;

    Checkpoint ckpt = head_only_regression_ckpt(5);
    StrategyConfig strat;
    strat.variant = StrategyKind::random;
    strat.p = 1.0;
    strat.head_in_budget = true;
    TrainConfig cfg;
    cfg.seed = 2;
    cfg.lr = 0.3;
    cfg.batch_size = 1;
    cfg.max_epochs = 800;
    cfg.early_stop_tolerance = 800;

    StabilityReport rep = phs_estimate(ckpt, strat, data, cfg, {0}, 0.1, "single");

    // direct recomputation: |l(theta_init, z) - l(A(S), z)|
    Model init = model_for_run(ckpt, strat, cfg);
    RunReport full = train(ckpt, strat, data, cfg, "single");
    Model fitted = model_for_run(ckpt, strat, cfg);
    fitted.mutable_params() = full.final_params;
    const double expected =
        std::fabs(per_sample_bounded01(init, lone, 0) - per_sample_bounded01(fitted, lone, 0));
    CHECK(rep.per_index_delta[0] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("projection demo: flip pair always reproduced; no events when stride too long") {
    Dataset pool;
    pool.classification = true;
    pool.input_dim = 2;
    Rng rng(8);
    for (int i = 0; i < 30; ++i) {
        const int label = i % 2;
        pool.x.push_back(label ? 1.5 : -1.5);
        pool.x.push_back(rng.normal());
        pool.labels.push_back(label);
    }
    std::vector<int> tr, dv;
    for (int i = 0; i < 30; ++i) (i % 5 == 4 ? dv : tr).push_back(i);
    SplitData data{pool.select(tr), pool.select(dv), pool.select(dv)};

    ModelSpec ms;
    ms.input_dim = 2;
    ms.hidden_dims = {4};
    ms.head_dim = 2;
    Checkpoint ckpt = make_checkpoint(build_model(ms, 4), 4);

    StrategyConfig dp;
    dp.variant = StrategyKind::diffprune;
    dp.p = 0.2;
    dp.seed = 1;
    dp.reproject_every = 100000;  // longer than the whole run
    TrainConfig cfg;
    cfg.seed = 1;
    cfg.max_epochs = 5;

    ProjectionDemoReport rep = projection_discontinuity_demo(ckpt, data, cfg, dp);
    CHECK(rep.flip_ok);
    CHECK(rep.flip_a.tunable == std::vector<int>{1});
    CHECK(rep.flip_b.tunable == std::vector<int>{0});
    CHECK(rep.events.empty());
    CHECK(rep.increase_fraction == 0.0);

    StrategyConfig wrong;
    wrong.variant = StrategyKind::random;
    CHECK_THROWS_AS(projection_discontinuity_demo(ckpt, data, cfg, wrong), InvalidSpec);
}
