#include "sparseft/json_io.hpp"

#include <cmath>
#include <limits>

namespace sparseft {

std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }

std::string to_string(HeadKind h) {
    return h == HeadKind::classification ? "classification" : "regression";
}

std::string to_string(AugmentKind a) {
    switch (a) {
        case AugmentKind::none: return "none";
        case AugmentKind::adapter: return "adapter";
        case AugmentKind::lora: return "lora";
    }
    return "none";
}

Activation activation_from_string(const std::string& s) {
    if (s == "tanh") return Activation::tanh;
    if (s == "relu") return Activation::relu;
    throw InvalidSpec("unknown activation: " + s);
}

HeadKind head_from_string(const std::string& s) {
    if (s == "classification") return HeadKind::classification;
    if (s == "regression") return HeadKind::regression;
    throw InvalidSpec("unknown head kind: " + s);
}

AugmentKind augment_from_string(const std::string& s) {
    if (s == "none") return AugmentKind::none;
    if (s == "adapter") return AugmentKind::adapter;
    if (s == "lora") return AugmentKind::lora;
    throw InvalidSpec("unknown augmentation: " + s);
}

void to_json(nlohmann::json& j, const ModelSpec& s) {
    j = nlohmann::json{
        {"input_dim", s.input_dim},
        {"hidden_dims", s.hidden_dims},
        {"activation", to_string(s.activation)},
        {"head", to_string(s.head)},
        {"head_dim", s.head_dim},
        {"augmentation", to_string(s.augmentation)},
        {"adapter_bottleneck", s.adapter_bottleneck},
        {"lora_rank", s.lora_rank},
    };
}

void from_json(const nlohmann::json& j, ModelSpec& s) {
    s = ModelSpec{};
    s.input_dim = j.value("input_dim", s.input_dim);
    s.hidden_dims = j.value("hidden_dims", s.hidden_dims);
    if (j.contains("activation")) s.activation = activation_from_string(j.at("activation"));
    if (j.contains("head")) s.head = head_from_string(j.at("head"));
    s.head_dim = j.value("head_dim", s.head_dim);
    if (j.contains("augmentation")) s.augmentation = augment_from_string(j.at("augmentation"));
    s.adapter_bottleneck = j.value("adapter_bottleneck", s.adapter_bottleneck);
    s.lora_rank = j.value("lora_rank", s.lora_rank);
}

void to_json(nlohmann::json& j, const SparseMask& m) {
    j = nlohmann::json{
        {"m", m.m}, {"k", m.k}, {"p", m.p}, {"strategy", m.strategy}, {"seed", m.seed},
        {"indices", m.tunable},
    };
}

void from_json(const nlohmann::json& j, SparseMask& m) {
    m = SparseMask{};
    m.m = j.value("m", 0);
    m.k = j.value("k", 0);
    m.p = j.value("p", 1.0);
    m.strategy = j.value("strategy", std::string{});
    m.seed = j.value("seed", std::uint64_t{0});
    m.tunable = j.value("indices", std::vector<int>{});
}

void to_json(nlohmann::json& j, const StrategyConfig& c) {
    j = nlohmann::json{
        {"variant", to_string(c.variant)},
        {"p", c.p},
        {"seed", c.seed},
        {"burn_in", c.burn_in},
        {"reproject_every", c.reproject_every},
        {"full_steps", c.full_steps},
        {"adapter_bottleneck", c.adapter_bottleneck},
        {"lora_rank", c.lora_rank},
        {"mixout_per_step", c.mixout_per_step},
        {"head_in_budget", c.head_in_budget},
    };
}

void from_json(const nlohmann::json& j, StrategyConfig& c) {
    c = StrategyConfig{};
    if (j.contains("variant")) c.variant = strategy_from_string(j.at("variant"));
    c.p = j.value("p", c.p);
    c.seed = j.value("seed", c.seed);
    c.burn_in = j.value("burn_in", c.burn_in);
    c.reproject_every = j.value("reproject_every", c.reproject_every);
    c.full_steps = j.value("full_steps", c.full_steps);
    c.adapter_bottleneck = j.value("adapter_bottleneck", c.adapter_bottleneck);
    c.lora_rank = j.value("lora_rank", c.lora_rank);
    c.mixout_per_step = j.value("mixout_per_step", c.mixout_per_step);
    c.head_in_budget = j.value("head_in_budget", c.head_in_budget);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{
        {"optimizer", to_string(c.optimizer)},
        {"lr", c.lr},
        {"momentum", c.momentum},
        {"batch_size", c.batch_size},
        {"max_epochs", c.max_epochs},
        {"early_stop_tolerance", c.early_stop_tolerance},
        {"eval_every", c.eval_every},
        {"seed", c.seed},
        {"lambda_reg", c.lambda_reg},
    };
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    c = TrainConfig{};
    if (j.contains("optimizer")) c.optimizer = optimizer_from_string(j.at("optimizer"));
    c.lr = j.value("lr", c.lr);
    c.momentum = j.value("momentum", c.momentum);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.early_stop_tolerance = j.value("early_stop_tolerance", c.early_stop_tolerance);
    c.eval_every = j.value("eval_every", c.eval_every);
    c.seed = j.value("seed", c.seed);
    c.lambda_reg = j.value("lambda_reg", c.lambda_reg);
}

void to_json(nlohmann::json& j, const EvalResult& e) {
    j = nlohmann::json{{"loss", e.loss}, {"metric", e.metric}, {"bounded01", e.bounded01}};
}

void from_json(const nlohmann::json& j, EvalResult& e) {
    e.loss = j.value("loss", 0.0);
    e.metric = j.value("metric", 0.0);
    e.bounded01 = j.value("bounded01", 0.0);
}

void to_json(nlohmann::json& j, const RunReport& r) {
    nlohmann::json curves = nlohmann::json::array();
    for (const auto& c : r.curves) curves.push_back({c.step, c.train_loss, c.dev_loss});
    nlohmann::json events = nlohmann::json::array();
    for (const auto& e : r.mask_change_events) {
        events.push_back({{"step", e.step}, {"loss_before", e.loss_before}, {"loss_after", e.loss_after}});
    }
    j = nlohmann::json{
        {"format", "sparseft-run-v1"},
        {"task", r.task},
        {"strategy", r.strategy},
        {"seed", r.seed},
        {"p", r.p},
        {"mask", r.mask},
        {"curves", curves},
        {"final", {{"train", r.final_train}, {"dev", r.final_dev}, {"test", r.final_test}}},
        {"stop_step", r.stop_step},
        {"mask_change_events", events},
        {"rho_estimate", r.rho_estimate},
        {"start_digest", r.start_digest},
        {"final_params", r.final_params},
        {"n_train", r.n_train},
        {"head_trainable", r.head_trainable},
    };
}

void from_json(const nlohmann::json& j, RunReport& r) {
    r = RunReport{};
    r.task = j.value("task", std::string{});
    r.strategy = j.value("strategy", std::string{});
    r.seed = j.value("seed", std::uint64_t{0});
    r.p = j.value("p", 1.0);
    if (j.contains("mask")) r.mask = j.at("mask").get<SparseMask>();
    for (const auto& c : j.value("curves", nlohmann::json::array())) {
        r.curves.push_back({c.at(0).get<int>(), c.at(1).get<double>(), c.at(2).get<double>()});
    }
    if (j.contains("final")) {
        const auto& f = j.at("final");
        r.final_train = f.at("train").get<EvalResult>();
        r.final_dev = f.at("dev").get<EvalResult>();
        r.final_test = f.at("test").get<EvalResult>();
    }
    r.stop_step = j.value("stop_step", 0);
    for (const auto& e : j.value("mask_change_events", nlohmann::json::array())) {
        r.mask_change_events.push_back({e.at("step").get<int>(), e.value("loss_before", 0.0),
                                        e.value("loss_after", 0.0)});
    }
    r.rho_estimate = j.value("rho_estimate", 0.0);
    r.start_digest = j.value("start_digest", std::uint64_t{0});
    r.final_params = j.value("final_params", std::vector<double>{});
    r.n_train = j.value("n_train", 0);
    r.head_trainable = j.value("head_trainable", true);
}

void to_json(nlohmann::json& j, const BoundInputs& b) {
    j = nlohmann::json{
        {"rho", b.rho},     {"lambda_min", b.lambda_min}, {"C", b.C},
        {"n", b.n},         {"p", b.p},                   {"delta", b.delta},
    };
}

void from_json(const nlohmann::json& j, BoundInputs& b) {
    b = BoundInputs{};
    b.rho = j.value("rho", 0.0);
    b.lambda_min = j.value("lambda_min", 0.0);
    b.C = j.value("C", 1.0);
    b.n = j.value("n", 1);
    b.p = j.value("p", 1.0);
    b.delta = j.value("delta", 0.1);
}

namespace {

// +inf is not representable in JSON; use null and map it back on read.
nlohmann::json bound_to_json(double v) {
    if (std::isinf(v)) return nullptr;
    return v;
}

double bound_from_json(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::numeric_limits<double>::infinity();
    return j.at(key).get<double>();
}

}  // namespace

void to_json(nlohmann::json& j, const StabilityReport& r) {
    j = nlohmann::json{
        {"format", "sparseft-stab-v1"},
        {"task", r.task},
        {"strategy", r.strategy},
        {"seed", r.seed},
        {"p", r.p},
        {"phs_empirical", r.phs_empirical},
        {"sampled_indices", r.sampled_indices},
        {"per_index_delta", r.per_index_delta},
        {"per_index_delta_task", r.per_index_delta_task},
        {"bound_inputs", r.bound_inputs},
        {"phs_bound_value", bound_to_json(r.phs_bound_value)},
        {"gen_bound_value", bound_to_json(r.gen_bound_value)},
        {"train_risk01", r.train_risk01},
        {"test_risk01", r.test_risk01},
        {"test_metric", r.test_metric},
        {"train_loss", r.train_loss},
    };
}

void from_json(const nlohmann::json& j, StabilityReport& r) {
    r = StabilityReport{};
    r.task = j.value("task", std::string{});
    r.strategy = j.value("strategy", std::string{});
    r.seed = j.value("seed", std::uint64_t{0});
    r.p = j.value("p", 1.0);
    r.phs_empirical = j.value("phs_empirical", 0.0);
    r.sampled_indices = j.value("sampled_indices", std::vector<int>{});
    r.per_index_delta = j.value("per_index_delta", std::vector<double>{});
    r.per_index_delta_task = j.value("per_index_delta_task", std::vector<double>{});
    if (j.contains("bound_inputs")) r.bound_inputs = j.at("bound_inputs").get<BoundInputs>();
    r.phs_bound_value = bound_from_json(j, "phs_bound_value");
    r.gen_bound_value = bound_from_json(j, "gen_bound_value");
    r.train_risk01 = j.value("train_risk01", 0.0);
    r.test_risk01 = j.value("test_risk01", 0.0);
    r.test_metric = j.value("test_metric", 0.0);
    r.train_loss = j.value("train_loss", 0.0);
}

void to_json(nlohmann::json& j, const TaskSpec& t) {
    j = nlohmann::json{
        {"name", t.name},
        {"input_dim", t.input_dim},
        {"classes", t.classes},
        {"n_pretrain", t.n_pretrain},
        {"n_train", t.n_train},
        {"n_test", t.n_test},
        {"shift", t.shift},
        {"label_noise", t.label_noise},
        {"separation", t.separation},
        {"seed", t.seed},
    };
}

void from_json(const nlohmann::json& j, TaskSpec& t) {
    t = TaskSpec{};
    t.name = j.value("name", t.name);
    t.input_dim = j.value("input_dim", t.input_dim);
    t.classes = j.value("classes", t.classes);
    t.n_pretrain = j.value("n_pretrain", t.n_pretrain);
    t.n_train = j.value("n_train", t.n_train);
    t.n_test = j.value("n_test", t.n_test);
    t.shift = j.value("shift", t.shift);
    t.label_noise = j.value("label_noise", t.label_noise);
    t.separation = j.value("separation", t.separation);
    t.seed = j.value("seed", t.seed);
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
    nlohmann::json strategies = nlohmann::json::array();
    for (StrategyKind s : c.strategies) strategies.push_back(to_string(s));
    j = nlohmann::json{
        {"checkpoint", c.checkpoint},
        {"tasks", c.tasks},
        {"strategies", strategies},
        {"seeds", c.seeds},
        {"sparsities", c.sparsities},
        {"train", c.train},
        {"strategy_defaults", c.strategy_defaults},
        {"model", c.model},
        {"output_dir", c.output_dir},
        {"mode", to_string(c.mode)},
        {"phs_samples", c.phs_samples},
        {"phs_full", c.phs_full},
        {"delta", c.delta},
        {"drop_fraction", c.drop_fraction},
        {"workers", c.workers},
        {"pooled_ranks", c.pooled_ranks},
    };
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
    c = reference_config();
    c.checkpoint = j.value("checkpoint", c.checkpoint);
    if (j.contains("tasks")) c.tasks = j.at("tasks").get<std::vector<TaskSpec>>();
    if (j.contains("strategies")) {
        c.strategies.clear();
        for (const auto& s : j.at("strategies")) c.strategies.push_back(strategy_from_string(s));
    }
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("sparsities")) c.sparsities = j.at("sparsities").get<std::vector<double>>();
    if (j.contains("train")) c.train = j.at("train").get<TrainConfig>();
    if (j.contains("strategy_defaults")) c.strategy_defaults = j.at("strategy_defaults").get<StrategyConfig>();
    if (j.contains("model")) c.model = j.at("model").get<ModelSpec>();
    c.output_dir = j.value("output_dir", c.output_dir);
    if (j.contains("mode")) c.mode = mode_from_string(j.at("mode"));
    c.phs_samples = j.value("phs_samples", c.phs_samples);
    c.phs_full = j.value("phs_full", c.phs_full);
    c.delta = j.value("delta", c.delta);
    c.drop_fraction = j.value("drop_fraction", c.drop_fraction);
    c.workers = j.value("workers", c.workers);
    c.pooled_ranks = j.value("pooled_ranks", c.pooled_ranks);
}

void to_json(nlohmann::json& j, const ProjectionDemoReport& r) {
    nlohmann::json events = nlohmann::json::array();
    for (const auto& e : r.events) {
        events.push_back({{"step", e.step}, {"loss_before", e.loss_before}, {"loss_after", e.loss_after}});
    }
    nlohmann::json curve = nlohmann::json::array();
    for (const auto& c : r.curve) curve.push_back({c.step, c.train_loss, c.dev_loss});
    j = nlohmann::json{
        {"flip_ok", r.flip_ok},
        {"flip_masks", {{"first", r.flip_a}, {"second", r.flip_b}}},
        {"events", events},
        {"increase_fraction", r.increase_fraction},
        {"mean_jump", r.mean_jump},
        {"curve", curve},
        {"final_train_loss", r.final_train_loss},
        {"final_test_metric", r.final_test_metric},
    };
}

}  // namespace sparseft
