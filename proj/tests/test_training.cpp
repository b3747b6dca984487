#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "sparseft/json_io.hpp"
#include "sparseft/rng.hpp"
#include "sparseft/training.hpp"

using namespace sparseft;

namespace {

// Linearly separable 2-class blobs on the first coordinate.
Dataset separable_blobs(int n, int d, std::uint64_t seed) {
    Dataset ds;
    ds.classification = true;
    ds.input_dim = d;
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        const int label = i % 2;
        ds.x.push_back(label ? 3.0 + 0.4 * rng.normal() : -3.0 + 0.4 * rng.normal());
        for (int j = 1; j < d; ++j) ds.x.push_back(0.3 * rng.normal());
        ds.labels.push_back(label);
    }
    return ds;
}

SplitData split_three_ways(const Dataset& pool) {
    const int n = pool.size();
    std::vector<int> train_rows, dev_rows, test_rows;
    for (int i = 0; i < n; ++i) {
        if (i % 5 == 3) dev_rows.push_back(i);
        else if (i % 5 == 4) test_rows.push_back(i);
        else train_rows.push_back(i);
    }
    return {pool.select(train_rows), pool.select(dev_rows), pool.select(test_rows)};
}

Checkpoint toy_checkpoint(int d, std::vector<int> hidden, int classes, std::uint64_t seed) {
    ModelSpec s;
    s.input_dim = d;
    s.hidden_dims = std::move(hidden);
    s.head_dim = classes;
    return make_checkpoint(build_model(s, seed), seed);
}

// Independent oracle: plain logistic regression trained by hand (no tape, no
// Model machinery) certifying the dataset is separable to 100% accuracy.
double logistic_fit_accuracy(const Dataset& ds, int epochs, double lr) {
    const int d = ds.input_dim;
    std::vector<double> w(static_cast<std::size_t>(d), 0.0);
    double b = 0.0;
    for (int e = 0; e < epochs; ++e) {
        for (int i = 0; i < ds.size(); ++i) {
            double z = b;
            for (int j = 0; j < d; ++j) z += w[static_cast<std::size_t>(j)] * ds.x[static_cast<std::size_t>(i * d + j)];
            const double p = 1.0 / (1.0 + std::exp(-z));
            const double err = p - (ds.labels[static_cast<std::size_t>(i)] == 1 ? 1.0 : 0.0);
            for (int j = 0; j < d; ++j) w[static_cast<std::size_t>(j)] -= lr * err * ds.x[static_cast<std::size_t>(i * d + j)];
            b -= lr * err;
        }
    }
    int correct = 0;
    for (int i = 0; i < ds.size(); ++i) {
        double z = b;
        for (int j = 0; j < d; ++j) z += w[static_cast<std::size_t>(j)] * ds.x[static_cast<std::size_t>(i * d + j)];
        if ((z > 0.0 ? 1 : 0) == ds.labels[static_cast<std::size_t>(i)]) ++correct;
    }
    return static_cast<double>(correct) / ds.size();
}

}  // namespace

TEST_CASE("masked_step: empty mask leaves theta bit-identical") {
    std::vector<double> theta{1.0, -2.0, 0.5};
    const std::vector<double> before = theta;
    std::vector<double> grads{10.0, 10.0, 10.0};
    OptimizerState opt;
    TrainConfig cfg;
    masked_step(theta, grads, {}, opt, cfg);
    CHECK(theta == before);
}

TEST_CASE("masked_step: full mask is plain SGD") {
    std::vector<double> theta{1.0, 2.0};
    std::vector<double> grads{3.0, -1.0};
    OptimizerState opt;
    TrainConfig cfg;
    cfg.lr = 0.1;
    masked_step(theta, grads, {0, 1}, opt, cfg);
    CHECK(theta[0] == doctest::Approx(1.0 - 0.3).epsilon(1e-15));
    CHECK(theta[1] == doctest::Approx(2.0 + 0.1).epsilon(1e-15));
}

TEST_CASE("masked coordinates move, the rest stay bit-exact under momentum too") {
    Rng rng(9);
    for (OptimizerKind opt_kind : {OptimizerKind::sgd, OptimizerKind::sgd_momentum}) {
        std::vector<double> theta(20), grads(20);
        for (double& v : theta) v = rng.normal();
        const std::vector<double> theta0 = theta;
        OptimizerState opt;
        TrainConfig cfg;
        cfg.optimizer = opt_kind;
        std::vector<int> mask{2, 5, 11};
        for (int step = 0; step < 25; ++step) {
            for (double& g : grads) g = rng.normal();
            masked_step(theta, grads, mask, opt, cfg);
        }
        for (int i = 0; i < 20; ++i) {
            const bool tuned = std::find(mask.begin(), mask.end(), i) != mask.end();
            if (!tuned) CHECK(theta[static_cast<std::size_t>(i)] == theta0[static_cast<std::size_t>(i)]);
        }
        for (int i : mask) CHECK(theta[static_cast<std::size_t>(i)] != theta0[static_cast<std::size_t>(i)]);
    }
}

TEST_CASE("regularized loss plug-in values") {
    ModelSpec s;
    s.input_dim = 1;
    s.head = HeadKind::regression;
    s.head_dim = 1;
    Model m(s);
    m.mutable_params() = {1.0, 2.0};
    Dataset ds;
    ds.classification = false;
    ds.input_dim = 1;
    ds.targets = {0.0};
    ds.x = {1.0};
    const std::vector<int> rows{0};
    const double base = m.loss(ds, rows);

    std::vector<double> theta0{0.0, 0.0};  // theta - theta0 = (1, 2)
    SparseMask empty;
    CHECK(regularized_loss(m, ds, rows, theta0, empty, 1.0) == doctest::Approx(base + 5.0));

    SparseMask all;
    all.tunable = {0, 1};
    CHECK(regularized_loss(m, ds, rows, theta0, all, 123.0) == doctest::Approx(base));

    // theta == theta0: the penalty vanishes for any mask and lambda
    CHECK(regularized_loss(m, ds, rows, m.params(), empty, 7.0) == doctest::Approx(base));
}

TEST_CASE("evaluate: perfect and constant predictors, plus per-sample oracle") {
    Dataset ds = separable_blobs(10, 2, 3);
    ModelSpec s;
    s.input_dim = 2;
    s.head_dim = 2;
    Model m(s);
    // weights steering class 1 for positive x0
    m.mutable_params() = {-5.0, 5.0, 0.0, 0.0, 0.0, 0.0};
    EvalResult r = evaluate(m, ds);
    CHECK(r.metric == doctest::Approx(1.0));
    CHECK(r.bounded01 == doctest::Approx(0.0));

    // constant predictor on a balanced set
    Model c(s);
    c.mutable_params() = {0, 0, 0, 0, 10.0, 0.0};  // bias forces class 0
    EvalResult rc = evaluate(c, ds);
    CHECK(rc.metric == doctest::Approx(0.5));

    // mean loss equals the mean of per-sample losses recomputed one by one
    double acc = 0.0;
    for (int i = 0; i < ds.size(); ++i) acc += per_sample_loss(m, ds, i);
    CHECK(r.loss == doctest::Approx(acc / ds.size()).epsilon(1e-12));

    Dataset empty;
    empty.input_dim = 2;
    CHECK_THROWS_AS(evaluate(m, empty), EmptyData);
}

TEST_CASE("full tuning solves a separable task; oracle fit confirms separability") {
    Dataset pool = separable_blobs(100, 3, 11);
    CHECK(logistic_fit_accuracy(pool, 200, 0.5) == doctest::Approx(1.0));

    SplitData splits = split_three_ways(pool);
    Checkpoint ckpt = toy_checkpoint(3, {8}, 2, 5);
    StrategyConfig strat;
    strat.variant = StrategyKind::random;
    strat.p = 1.0;
    strat.seed = 4;
    TrainConfig cfg;
    cfg.lr = 0.3;
    cfg.max_epochs = 120;
    cfg.seed = 4;
    RunReport run = train(ckpt, strat, splits, cfg, "separable");
    CHECK(run.final_train.metric == doctest::Approx(1.0));
    // full budget: parameters actually moved
    double dist = 0.0;
    Model start = model_for_run(ckpt, strat, cfg);
    for (std::size_t i = 0; i < run.final_params.size(); ++i) {
        const double d = run.final_params[i] - start.params()[i];
        dist += d * d;
    }
    CHECK(dist > 0.0);
}

TEST_CASE("hard-mask constraint holds bit-exactly for a static run") {
    Dataset pool = separable_blobs(60, 4, 21);
    SplitData splits = split_three_ways(pool);
    Checkpoint ckpt = toy_checkpoint(4, {10}, 2, 9);
    StrategyConfig strat;
    strat.variant = StrategyKind::magprune;
    strat.p = 0.05;
    strat.seed = 2;
    TrainConfig cfg;
    cfg.seed = 2;
    cfg.max_epochs = 40;
    RunReport run = train(ckpt, strat, splits, cfg, "hardmask");

    Model start = model_for_run(ckpt, strat, cfg);
    CHECK(run.start_digest == fnv1a(start.params().data(), start.params().size() * sizeof(double)));
    const auto head = head_indices(start);
    int frozen = 0;
    for (int i = 0; i < start.param_count(); ++i) {
        const bool in_head = std::find(head.begin(), head.end(), i) != head.end();
        if (in_head || run.mask.contains(i)) continue;
        CHECK(run.final_params[static_cast<std::size_t>(i)] == start.params()[static_cast<std::size_t>(i)]);
        ++frozen;
    }
    CHECK(frozen > 0);
    CHECK(static_cast<int>(run.mask.tunable.size()) ==
          static_cast<int>(std::floor(run.mask.m * strat.p)));
}

TEST_CASE("run reports are deterministic functions of their inputs") {
    Dataset pool = separable_blobs(50, 3, 31);
    SplitData splits = split_three_ways(pool);
    Checkpoint ckpt = toy_checkpoint(3, {6}, 2, 7);
    StrategyConfig strat;
    strat.variant = StrategyKind::sam;
    strat.p = 0.1;
    strat.seed = 3;
    strat.burn_in = 4;
    TrainConfig cfg;
    cfg.seed = 3;
    cfg.max_epochs = 25;

    RunReport a = train(ckpt, strat, splits, cfg, "det");
    RunReport b = train(ckpt, strat, splits, cfg, "det");
    CHECK(a.final_params == b.final_params);
    CHECK(a.mask.tunable == b.mask.tunable);
    CHECK(a.stop_step == b.stop_step);
    CHECK(nlohmann::json(a).dump() == nlohmann::json(b).dump());
}

TEST_CASE("nested magprune masks cannot fit worse on a convex head-only task") {
    // head-only regression model: the objective is convex in every coordinate
    Dataset ds;
    ds.classification = false;
    ds.input_dim = 4;
    ds.target_dim = 1;
    Rng rng(13);
    for (int i = 0; i < 40; ++i) {
        double y = 0.0;
        for (int j = 0; j < 4; ++j) {
            const double v = rng.normal();
            ds.x.push_back(v);
            y += (j + 1) * 0.5 * v;
        }
        ds.targets.push_back(y);
    }
    SplitData splits = split_three_ways(ds);

    ModelSpec s;
    s.input_dim = 4;
    s.head = HeadKind::regression;
    s.head_dim = 1;
    Checkpoint ckpt = make_checkpoint(build_model(s, 17), 17);

    auto run_with_p = [&](double p) {
        StrategyConfig strat;
        strat.variant = StrategyKind::magprune;
        strat.p = p;
        strat.seed = 1;
        strat.head_in_budget = true;  // the head is the whole model here
        TrainConfig cfg;
        cfg.seed = 1;
        cfg.lr = 0.05;
        cfg.max_epochs = 400;
        cfg.early_stop_tolerance = 400;
        return train(ckpt, strat, splits, cfg, "convex");
    };
    RunReport small = run_with_p(0.4);   // k = 2
    RunReport large = run_with_p(0.81);  // k = 4, superset by magnitude ranking
    for (int idx : small.mask.tunable) CHECK(large.mask.contains(idx));
    CHECK(large.final_train.loss <= small.final_train.loss + 1e-6);
}

TEST_CASE("empty train split degenerates to the zero-step initialization") {
    Dataset pool = separable_blobs(20, 2, 41);
    SplitData splits = split_three_ways(pool);
    splits.train = Dataset{};
    splits.train.input_dim = 2;
    Checkpoint ckpt = toy_checkpoint(2, {4}, 2, 2);
    StrategyConfig strat;
    strat.variant = StrategyKind::random;
    strat.p = 0.5;
    TrainConfig cfg;
    cfg.seed = 6;
    RunReport run = train(ckpt, strat, splits, cfg, "degenerate");
    Model start = model_for_run(ckpt, strat, cfg);
    CHECK(run.final_params == start.params());
    CHECK(run.stop_step == 0);
    CHECK(!run.curves.empty());
}

TEST_CASE("regularized mode keeps off-mask drift small but nonzero") {
    Dataset pool = separable_blobs(60, 3, 51);
    SplitData splits = split_three_ways(pool);
    Checkpoint ckpt = toy_checkpoint(3, {6}, 2, 12);
    StrategyConfig strat;
    strat.variant = StrategyKind::random;
    strat.p = 0.1;
    strat.seed = 8;
    TrainConfig cfg;
    cfg.seed = 8;
    cfg.max_epochs = 30;
    cfg.lambda_reg = 5.0;
    RunReport run = train(ckpt, strat, splits, cfg, "reg");

    Model start = model_for_run(ckpt, strat, cfg);
    double off_mask = 0.0;
    const auto head = head_indices(start);
    for (int i = 0; i < start.param_count(); ++i) {
        const bool in_head = std::find(head.begin(), head.end(), i) != head.end();
        if (in_head || run.mask.contains(i)) continue;
        const double d = run.final_params[static_cast<std::size_t>(i)] - start.params()[static_cast<std::size_t>(i)];
        off_mask += d * d;
    }
    CHECK(off_mask > 0.0);    // soft constraint, not hard
    CHECK(off_mask < 0.05);   // but strongly penalized
}
