#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "sparseft/json_io.hpp"
#include "sparseft/model.hpp"
#include "sparseft/rng.hpp"

using namespace sparseft;

namespace {

ModelSpec small_spec() {
    ModelSpec s;
    s.input_dim = 2;
    s.hidden_dims = {4};
    s.activation = Activation::tanh;
    s.head = HeadKind::classification;
    s.head_dim = 2;
    return s;
}

std::vector<double> random_input(Rng& rng, int n, int d) {
    std::vector<double> x(static_cast<std::size_t>(n) * d);
    for (double& v : x) v = rng.normal();
    return x;
}

}  // namespace

TEST_CASE("build_model is deterministic in the seed") {
    Model a = build_model(small_spec(), 7);
    Model b = build_model(small_spec(), 7);
    CHECK(a.params() == b.params());
    Model c = build_model(small_spec(), 8);
    CHECK(a.params() != c.params());
}

TEST_CASE("zero hidden layers gives a direct linear head") {
    ModelSpec s = small_spec();
    s.hidden_dims = {};
    Model m = build_model(s, 3);
    CHECK(m.segments().size() == 2);  // head weight + bias
    CHECK(m.param_count() == 2 * 2 + 2);
    Rng rng(1);
    auto x = random_input(rng, 3, 2);
    CHECK(m.predict(x.data(), 3).size() == 6);
}

TEST_CASE("invalid specs are rejected") {
    ModelSpec s = small_spec();
    s.augmentation = AugmentKind::lora;
    s.lora_rank = 5;  // exceeds min(2, 4)
    CHECK_THROWS_AS(build_model(s, 1), InvalidSpec);
    s.lora_rank = 0;
    CHECK_THROWS_AS(build_model(s, 1), InvalidSpec);
    ModelSpec bad = small_spec();
    bad.hidden_dims = {0};
    CHECK_THROWS_AS(bad.validate(), InvalidSpec);
}

TEST_CASE("param_count is a pure function of the spec") {
    ModelSpec s = small_spec();
    CHECK(s.param_count() == build_model(s, 1).param_count());
    CHECK(s.param_count() == 2 * 4 + 4 + 4 * 2 + 2);
    s.augmentation = AugmentKind::adapter;
    s.adapter_bottleneck = 3;
    CHECK(s.param_count() == build_model(s, 1).param_count());
    ModelSpec l = small_spec();
    l.augmentation = AugmentKind::lora;
    l.lora_rank = 2;
    CHECK(l.param_count() == build_model(l, 1).param_count());
}

TEST_CASE("flatten/unflatten round-trips") {
    Model m = build_model(small_spec(), 11);
    Rng rng(2);
    auto x = random_input(rng, 5, 2);
    const auto before = m.predict(x.data(), 5);

    std::vector<double> v = flatten_params(m);
    unflatten_params(m, v);
    CHECK(m.predict(x.data(), 5) == before);
    CHECK(flatten_params(m) == v);

    std::vector<double> wrong(v.size() + 1, 0.0);
    CHECK_THROWS_AS(unflatten_params(m, wrong), DimMismatch);
}

TEST_CASE("param_groups partitions all indices; bias group spans all layers") {
    Model m = build_model(small_spec(), 7);
    auto groups = param_groups(m);
    std::vector<char> seen(static_cast<std::size_t>(m.param_count()), 0);
    for (const auto& [name, idx] : groups) {
        for (int i : idx) {
            CHECK(!seen[static_cast<std::size_t>(i)]);
            seen[static_cast<std::size_t>(i)] = 1;
        }
    }
    for (char c : seen) CHECK(c == 1);

    // MLP(2 -> 4 -> 2): hidden bias 4 plus head bias 2
    CHECK(indices_of_kind(m, ParamKind::bias).size() == 6);

    // head and body never overlap
    auto head = head_indices(m);
    auto body = body_indices(m);
    for (int h : head) {
        CHECK(std::find(body.begin(), body.end(), h) == body.end());
    }
    CHECK(head.size() + body.size() == static_cast<std::size_t>(m.param_count()));
}

TEST_CASE("lora group size is r * (d_in + d_out) per augmented layer") {
    ModelSpec s;
    s.input_dim = 5;
    s.hidden_dims = {6, 4};
    s.head_dim = 3;
    s.augmentation = AugmentKind::lora;
    s.lora_rank = 2;
    Model m = build_model(s, 1);
    const auto a = indices_of_kind(m, ParamKind::lora_a);
    const auto b = indices_of_kind(m, ParamKind::lora_b);
    CHECK(a.size() + b.size() == static_cast<std::size_t>(2 * (5 + 6) + 2 * (6 + 4)));
}

TEST_CASE("adapter equivalent model matches the base output exactly") {
    ModelSpec s;
    s.input_dim = 3;
    s.hidden_dims = {5, 4};
    s.head_dim = 2;
    Model base = build_model(s, 21);
    Checkpoint ckpt = make_checkpoint(base, 21);
    Model aug = augment_equivalent(ckpt, AugmentKind::adapter, 2, 99);

    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        auto x = random_input(rng, 1, 3);
        const auto yb = base.predict(x.data(), 1);
        const auto ya = aug.predict(x.data(), 1);
        for (std::size_t i = 0; i < yb.size(); ++i) {
            CHECK(std::fabs(ya[i] - yb[i]) == 0.0);
        }
    }
}

TEST_CASE("lora equivalent model matches the base output exactly") {
    ModelSpec s;
    s.input_dim = 4;
    s.hidden_dims = {6};
    s.head_dim = 3;
    Model base = build_model(s, 5);
    Checkpoint ckpt = make_checkpoint(base, 5);
    Model aug = augment_equivalent(ckpt, AugmentKind::lora, 2, 77);

    Rng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        auto x = random_input(rng, 2, 4);
        const auto yb = base.predict(x.data(), 2);
        const auto ya = aug.predict(x.data(), 2);
        for (std::size_t i = 0; i < yb.size(); ++i) {
            CHECK(std::fabs(ya[i] - yb[i]) == 0.0);
        }
    }
}

TEST_CASE("perturbing one adapter parameter makes the augmentation live") {
    ModelSpec s;
    s.input_dim = 3;
    s.hidden_dims = {5};
    s.head_dim = 2;
    Model base = build_model(s, 13);
    Checkpoint ckpt = make_checkpoint(base, 13);
    Model aug = augment_equivalent(ckpt, AugmentKind::adapter, 2, 1);

    // bump one up-projection weight
    for (const auto& seg : aug.segments()) {
        if (seg.kind == ParamKind::adapter && seg.shape.size() == 2 && seg.shape[0] == 2) {
            aug.mutable_params()[static_cast<std::size_t>(seg.offset)] += 0.1;
            break;
        }
    }
    Rng rng(6);
    double max_diff = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        auto x = random_input(rng, 1, 3);
        const auto yb = base.predict(x.data(), 1);
        const auto ya = aug.predict(x.data(), 1);
        for (std::size_t i = 0; i < yb.size(); ++i) {
            max_diff = std::max(max_diff, std::fabs(ya[i] - yb[i]));
        }
    }
    CHECK(max_diff > 0.0);
}

TEST_CASE("reinit_head changes only head coordinates") {
    Model m = build_model(small_spec(), 9);
    const auto before = m.params();
    reinit_head(m, 1234);
    const auto after = m.params();
    const auto head = head_indices(m);
    for (int i = 0; i < m.param_count(); ++i) {
        const bool in_head = std::find(head.begin(), head.end(), i) != head.end();
        if (!in_head) CHECK(after[static_cast<std::size_t>(i)] == before[static_cast<std::size_t>(i)]);
    }
    CHECK(after != before);
}

TEST_CASE("checkpoint save/load reproduces forward outputs bit-identically") {
    ModelSpec s;
    s.input_dim = 4;
    s.hidden_dims = {7, 3};
    s.head_dim = 2;
    Model m = build_model(s, 31);
    Checkpoint ckpt = make_checkpoint(m, 31);

    const auto path = std::filesystem::temp_directory_path() / "sparseft_ckpt_test.ckpt";
    save_checkpoint(ckpt, path.string());
    Checkpoint loaded = load_checkpoint(path.string());
    std::filesystem::remove(path);

    CHECK(loaded.spec == ckpt.spec);
    CHECK(loaded.theta0 == ckpt.theta0);
    CHECK(loaded.digest == ckpt.digest);
    CHECK(loaded.seed == ckpt.seed);

    Model m2 = model_from_checkpoint(loaded);
    Rng rng(8);
    auto x = random_input(rng, 6, 4);
    CHECK(m2.predict(x.data(), 6) == m.predict(x.data(), 6));
}
