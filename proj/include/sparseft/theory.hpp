#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sparseft/autodiff.hpp"
#include "sparseft/training.hpp"

namespace sparseft {

struct BoundInputs {
    double rho = 0.0;         // Lipschitz estimate (max per-sample gradient norm)
    double lambda_min = 0.0;  // smallest loss-Hessian eigenvalue at the optimum; 0 = conservative
    double C = 1.0;           // loss range bound
    int n = 1;                // training-set size
    double p = 1.0;           // sparsity
    double delta = 0.1;       // confidence parameter

    void validate() const;
};

// Stability rate 2 rho^2 / ((lambda_min + 2(1-p)) n); +inf when the
// denominator degenerates (full tuning with a flat optimum).
double phs_bound(const BoundInputs& in);

// r_hat + sqrt((C^2 + 12 C n beta) / (2 n delta)), beta = pointwise
// hypothesis stability.
double gen_bound(double r_hat, const BoundInputs& in, double beta);

// Monte Carlo average of ||(I - M)(theta - theta0)||^2 over uniform exact-k
// masks; converges to (1 - k/m) ||theta - theta0||^2.
double expected_regularizer_mc(const std::vector<double>& theta,
                               const std::vector<double>& theta0, double p, int trials,
                               std::uint64_t seed);

// Central second differences per coordinate. Guard m <= 500.
std::vector<double> hessian_diag_fd(const ag::ScalarFn& f, std::vector<double> theta, double h);

// Full FD Hessian, symmetrized, smallest eigenvalue by shifted power
// iteration. Guard m <= 60.
double lambda_min_fd(const ag::ScalarFn& f, std::vector<double> theta, double h);

// Dominant |eigenvalue| of a symmetric matrix (power iteration on H^2).
double spectral_radius(const std::vector<double>& h_flat, int dim);

struct RayleighCheck {
    bool ok = false;
    double max_violation = 0.0;
    double lambda_max_abs = 0.0;
};

// Verifies x^T H x <= |lambda_max| x^T x + 1e-9 over random probes.
RayleighCheck rayleigh_upperbound_check(const std::vector<double>& h_flat, int dim, int trials,
                                        std::uint64_t seed);

struct StabilityReport {
    std::string task;
    std::string strategy;
    std::uint64_t seed = 0;
    double p = 1.0;
    double phs_empirical = 0.0;            // mean bounded 0-1 loss delta
    std::vector<int> sampled_indices;
    std::vector<double> per_index_delta;   // bounded 0-1 deltas
    std::vector<double> per_index_delta_task;  // task-loss deltas, for reference
    BoundInputs bound_inputs;
    double phs_bound_value = 0.0;
    double gen_bound_value = 0.0;
    double train_risk01 = 0.0;
    double test_risk01 = 0.0;
    double test_metric = 0.0;
    double train_loss = 0.0;
};

// Trains on S once, retrains on each S \ z_i for the sampled indices, and
// reports the mean absolute per-sample loss change (Definition-3 estimate).
StabilityReport phs_estimate(const Checkpoint& ckpt, const StrategyConfig& strategy,
                             const SplitData& data, const TrainConfig& cfg,
                             const std::vector<int>& indices, double delta,
                             const std::string& task_name = "task");

struct ProjectionDemoReport {
    bool flip_ok = false;
    SparseMask flip_a, flip_b;
    std::vector<MaskChange> events;
    double increase_fraction = 0.0;  // share of reprojections where loss rose
    double mean_jump = 0.0;
    std::vector<CurvePoint> curve;
    double final_train_loss = 0.0;
    double final_test_metric = 0.0;
};

// (a) replays the two-coordinate flip pair through project_l0, (b) runs a
// diffprune training and measures the loss jump at every reprojection.
ProjectionDemoReport projection_discontinuity_demo(const Checkpoint& ckpt, const SplitData& data,
                                                   const TrainConfig& cfg,
                                                   const StrategyConfig& diffprune_cfg);

}  // namespace sparseft
