#include "sparseft/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sparseft/rng.hpp"

namespace sparseft {

std::string to_string(OptimizerKind k) {
    return k == OptimizerKind::sgd ? "sgd" : "sgd_momentum";
}

OptimizerKind optimizer_from_string(const std::string& s) {
    if (s == "sgd") return OptimizerKind::sgd;
    if (s == "sgd_momentum") return OptimizerKind::sgd_momentum;
    throw InvalidSpec("unknown optimizer: " + s);
}

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw InvalidSpec("lr must be positive");
    if (batch_size < 1) throw InvalidSpec("batch_size must be >= 1");
    if (early_stop_tolerance < 1) throw InvalidSpec("early_stop_tolerance must be >= 1");
    if (max_epochs < 1) throw InvalidSpec("max_epochs must be >= 1");
    if (lambda_reg < 0.0) throw InvalidSpec("lambda_reg must be >= 0");
}

void masked_step(std::vector<double>& theta, const std::vector<double>& grads,
                 const std::vector<int>& tunable, OptimizerState& opt, const TrainConfig& cfg) {
    if (theta.size() != grads.size()) throw DimMismatch("masked_step: |theta| != |grads|");
    if (cfg.optimizer == OptimizerKind::sgd_momentum && opt.velocity.size() != theta.size()) {
        opt.velocity.assign(theta.size(), 0.0);
    }
    for (int idx : tunable) {
        if (idx < 0 || idx >= static_cast<int>(theta.size())) {
            throw DimMismatch("masked_step: index out of range");
        }
        const auto i = static_cast<std::size_t>(idx);
        if (cfg.optimizer == OptimizerKind::sgd) {
            theta[i] -= cfg.lr * grads[i];
        } else {
            opt.velocity[i] = cfg.momentum * opt.velocity[i] + grads[i];
            theta[i] -= cfg.lr * opt.velocity[i];
        }
    }
}

double masked_complement_sqnorm(const std::vector<double>& theta,
                                const std::vector<double>& theta0, const SparseMask& mask) {
    if (theta.size() != theta0.size()) throw DimMismatch("complement norm: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        if (mask.contains(static_cast<int>(i))) continue;
        const double d = theta[i] - theta0[i];
        s += d * d;
    }
    return s;
}

double regularized_loss(const Model& model, const Dataset& data, const std::vector<int>& rows,
                        const std::vector<double>& theta0, const SparseMask& mask, double lambda) {
    if (lambda < 0.0) throw InvalidSpec("regularized_loss: lambda must be >= 0");
    return model.loss(data, rows) + lambda * masked_complement_sqnorm(model.params(), theta0, mask);
}

namespace {

std::vector<int> all_rows(const Dataset& d) {
    std::vector<int> rows(static_cast<std::size_t>(d.size()));
    std::iota(rows.begin(), rows.end(), 0);
    return rows;
}

int argmax_row(const double* row, int c) {
    int best = 0;
    for (int j = 1; j < c; ++j) {
        if (row[j] > row[best]) best = j;
    }
    return best;
}

}  // namespace

EvalResult evaluate(const Model& model, const Dataset& data) {
    const int n = data.size();
    if (n == 0) throw EmptyData("evaluate: empty dataset");
    ag::Tape tape;
    ag::Tensor out = model.forward(tape, data.x.data(), n);
    const int c = model.spec().head_dim;

    EvalResult r;
    if (model.spec().head == HeadKind::classification) {
        double loss = 0.0;
        int correct = 0;
        for (int i = 0; i < n; ++i) {
            const double* row = &out.data[static_cast<std::size_t>(i * c)];
            double mx = row[0];
            for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
            double z = 0.0;
            for (int j = 0; j < c; ++j) z += std::exp(row[j] - mx);
            const int y = data.labels[static_cast<std::size_t>(i)];
            loss += std::log(z) - (row[y] - mx);
            if (argmax_row(row, c) == y) ++correct;
        }
        r.loss = loss / n;
        r.metric = static_cast<double>(correct) / n;
        r.bounded01 = 1.0 - r.metric;
    } else {
        double total = 0.0;
        double clipped = 0.0;
        for (int i = 0; i < n; ++i) {
            double se = 0.0;
            for (int j = 0; j < c; ++j) {
                const double d = out.data[static_cast<std::size_t>(i * c + j)] -
                                 data.targets[static_cast<std::size_t>(i * c + j)];
                se += d * d;
            }
            total += se / c;
            clipped += std::min(1.0, se / c);
        }
        r.loss = total / n;
        r.metric = std::sqrt(r.loss);  // RMSE
        r.bounded01 = clipped / n;
    }
    return r;
}

double per_sample_loss(const Model& model, const Dataset& data, int row) {
    return model.loss(data, {row});
}

double per_sample_bounded01(const Model& model, const Dataset& data, int row) {
    std::vector<double> out = model.predict(&data.x[static_cast<std::size_t>(row) * data.input_dim], 1);
    const int c = model.spec().head_dim;
    if (model.spec().head == HeadKind::classification) {
        return argmax_row(out.data(), c) == data.labels[static_cast<std::size_t>(row)] ? 0.0 : 1.0;
    }
    double se = 0.0;
    for (int j = 0; j < c; ++j) {
        const double d = out[static_cast<std::size_t>(j)] - data.targets[static_cast<std::size_t>(row * c + j)];
        se += d * d;
    }
    return std::min(1.0, se / c);
}

Model model_for_run(const Checkpoint& ckpt, const StrategyConfig& strategy, const TrainConfig& cfg) {
    Model model = [&] {
        switch (strategy.variant) {
            case StrategyKind::adapter:
                return augment_equivalent(ckpt, AugmentKind::adapter, strategy.adapter_bottleneck,
                                          splitmix64(strategy.seed ^ 0xada9ee75ull));
            case StrategyKind::lora:
                return augment_equivalent(ckpt, AugmentKind::lora, strategy.lora_rank,
                                          splitmix64(strategy.seed ^ 0x10aa55ffull));
            default:
                return model_from_checkpoint(ckpt);
        }
    }();
    reinit_head(model, splitmix64(cfg.seed ^ 0x4ead5eedull));
    return model;
}

RunReport train(const Checkpoint& ckpt, const StrategyConfig& strategy, const SplitData& data,
                const TrainConfig& cfg, const std::string& task_name) {
    cfg.validate();
    strategy.validate();
    if (data.dev.size() == 0 || data.test.size() == 0) throw EmptyData("train: empty dev/test split");

    Model model = model_for_run(ckpt, strategy, cfg);
    const std::vector<double> theta0 = model.params();

    RunReport report;
    report.task = task_name;
    report.strategy = to_string(strategy.variant);
    report.seed = cfg.seed;
    report.p = strategy.p;
    report.n_train = data.train.size();
    report.head_trainable = !strategy.head_in_budget;
    report.start_digest = fnv1a(theta0.data(), theta0.size() * sizeof(double));

    StrategyState state = init_mask(strategy, model, data.train, cfg.batch_size, cfg.lr);

    std::vector<int> all_params_idx;
    if (cfg.lambda_reg > 0.0) {
        all_params_idx.resize(theta0.size());
        std::iota(all_params_idx.begin(), all_params_idx.end(), 0);
    }
    std::vector<int> trainable = cfg.lambda_reg > 0.0 ? all_params_idx : state.trainable();

    const int n = data.train.size();
    const std::vector<int> full_train = all_rows(data.train);
    const int steps_per_epoch = n > 0 ? (n + cfg.batch_size - 1) / cfg.batch_size : 1;
    const int eval_stride = cfg.eval_every > 0 ? cfg.eval_every : steps_per_epoch;

    OptimizerState opt;
    Rng shuffle_rng(splitmix64(cfg.seed ^ 0x0badc0deull));
    Rng probe_rng(splitmix64(cfg.seed ^ 0x9a0be5ull));

    auto& params = model.mutable_params();
    std::vector<double> grads;

    double rho = 0.0;
    auto probe_rho = [&](bool full_pass) {
        if (n == 0) return;
        std::vector<int> rows =
            full_pass ? full_train : probe_rng.sample_without_replacement(n, std::min(8, n));
        std::vector<double> g;
        for (int r : rows) {
            model.loss_and_grad(data.train, {r}, g);
            double s = 0.0;
            for (double v : g) s += v * v;
            rho = std::max(rho, std::sqrt(s));
        }
    };

    struct Snapshot {
        std::vector<double> params;
        SparseMask mask;
        double dev_loss = 0.0;
        int step = 0;
        bool valid = false;
    } best;

    int since_best = 0;
    int step = 0;
    int eval_count = 0;

    auto run_eval = [&]() -> bool {
        const double train_loss = n > 0 ? model.loss(data.train, full_train) : 0.0;
        const EvalResult dev = evaluate(model, data.dev);
        report.curves.push_back({step, train_loss, dev.loss});
        probe_rho(false);
        ++eval_count;
        const bool eligible = step >= state.final_mask_from_step();
        if (eligible && (!best.valid || dev.loss < best.dev_loss)) {
            best.params = params;
            best.mask = state.mask();
            best.dev_loss = dev.loss;
            best.step = step;
            best.valid = true;
            since_best = 0;
        } else if (eligible) {
            ++since_best;
        }
        return since_best >= cfg.early_stop_tolerance;
    };

    run_eval();  // step-0 curve point; also the n == 0 degenerate report

    bool stop = false;
    for (int epoch = 0; epoch < cfg.max_epochs && !stop && n > 0; ++epoch) {
        std::vector<int> order = full_train;
        shuffle_rng.shuffle(order);
        for (int start = 0; start < n && !stop; start += cfg.batch_size) {
            const int take = std::min(cfg.batch_size, n - start);
            std::vector<int> rows(order.begin() + start, order.begin() + start + take);
            ++step;

            const double batch_loss = model.loss_and_grad(data.train, rows, grads);
            if (!std::isfinite(batch_loss)) {
                throw Diverged("train loss became non-finite at step " + std::to_string(step));
            }
            if (cfg.lambda_reg > 0.0) {
                const SparseMask& mask = state.mask();
                for (std::size_t i = 0; i < grads.size(); ++i) {
                    if (!mask.contains(static_cast<int>(i))) {
                        grads[i] += 2.0 * cfg.lambda_reg * (params[i] - theta0[i]);
                    }
                }
            }
            masked_step(params, grads, trainable, opt, cfg);

            double loss_before = 0.0;
            const bool due = state.update_due(step);
            if (due) loss_before = model.loss(data.train, full_train);
            if (auto new_mask = strategy_on_step(state, step, params, theta0, grads)) {
                const double loss_after = model.loss(data.train, full_train);
                report.mask_change_events.push_back({step, loss_before, loss_after});
                if (cfg.lambda_reg == 0.0) trainable = state.trainable();
            }

            if (step % eval_stride == 0) stop = run_eval();
        }
    }

    report.stop_step = step;
    if (best.valid) {
        params = best.params;
        report.mask = best.mask;
    } else {
        report.mask = state.mask();
    }

    {
        const double before = n > 0 ? model.loss(data.train, full_train) : 0.0;
        bool changed = strategy_on_finish(state, params, theta0);
        if (state.config().variant == StrategyKind::childprune && changed) {
            report.mask = state.mask();  // forced projection at finish
        }
        if (changed) {
            const double after = n > 0 ? model.loss(data.train, full_train) : 0.0;
            report.mask_change_events.push_back({report.stop_step, before, after});
        }
    }

    probe_rho(true);
    report.rho_estimate = rho;
    if (n > 0) report.final_train = evaluate(model, data.train);
    report.final_dev = evaluate(model, data.dev);
    report.final_test = evaluate(model, data.test);
    report.final_params = params;
    return report;
}

}  // namespace sparseft
