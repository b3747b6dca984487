#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sparseft/dataset.hpp"
#include "sparseft/model.hpp"
#include "sparseft/selection.hpp"

namespace sparseft {

enum class OptimizerKind { sgd, sgd_momentum };

std::string to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& s);

struct TrainConfig {
    OptimizerKind optimizer = OptimizerKind::sgd;
    double lr = 0.15;
    double momentum = 0.9;
    int batch_size = 32;
    int max_epochs = 150;
    int early_stop_tolerance = 40;  // dev evaluations without improvement
    int eval_every = 0;             // steps; 0 = once per epoch
    std::uint64_t seed = 0;
    double lambda_reg = 0.0;        // 0 = hard-mask mode

    void validate() const;
};

struct EvalResult {
    double loss = 0.0;
    double metric = 0.0;     // accuracy or RMSE
    double bounded01 = 0.0;  // loss in [0,1] for the generalization bound (C = 1)
};

struct CurvePoint {
    int step = 0;
    double train_loss = 0.0;
    double dev_loss = 0.0;
};

struct MaskChange {
    int step = 0;
    double loss_before = 0.0;  // full-train loss right before the change
    double loss_after = 0.0;
};

struct RunReport {
    std::string task;
    std::string strategy;
    std::uint64_t seed = 0;
    double p = 1.0;
    SparseMask mask;
    std::vector<CurvePoint> curves;
    EvalResult final_train, final_dev, final_test;
    int stop_step = 0;
    std::vector<MaskChange> mask_change_events;
    double rho_estimate = 0.0;      // max per-sample gradient norm seen
    std::uint64_t start_digest = 0; // FNV over the run's starting parameters
    std::vector<double> final_params;
    int n_train = 0;
    bool head_trainable = true;
};

struct OptimizerState {
    std::vector<double> velocity;
};

// Applies one optimizer step to exactly the listed coordinates; everything
// else stays bit-identical.
void masked_step(std::vector<double>& theta, const std::vector<double>& grads,
                 const std::vector<int>& tunable, OptimizerState& opt, const TrainConfig& cfg);

// ||(I - M)(theta - theta0)||^2
double masked_complement_sqnorm(const std::vector<double>& theta,
                                const std::vector<double>& theta0, const SparseMask& mask);

// L(theta) + lambda * ||(I - M)(theta - theta0)||^2 on the given rows.
double regularized_loss(const Model& model, const Dataset& data, const std::vector<int>& rows,
                        const std::vector<double>& theta0, const SparseMask& mask, double lambda);

// Mean loss, task metric, and bounded 0-1 loss over a dataset.
EvalResult evaluate(const Model& model, const Dataset& data);
double per_sample_loss(const Model& model, const Dataset& data, int row);
double per_sample_bounded01(const Model& model, const Dataset& data, int row);

// Start model for a fine-tuning run: equivalent-model augmentation when the
// strategy needs one, then a freshly drawn task head.
Model model_for_run(const Checkpoint& ckpt, const StrategyConfig& strategy, const TrainConfig& cfg);

// Masked fine-tuning with dev early stopping; restores the best-dev snapshot
// before the final evaluations.
RunReport train(const Checkpoint& ckpt, const StrategyConfig& strategy, const SplitData& data,
                const TrainConfig& cfg, const std::string& task_name = "task");

}  // namespace sparseft
