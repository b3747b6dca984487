#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sparseft/dataset.hpp"
#include "sparseft/model.hpp"
#include "sparseft/rng.hpp"

namespace sparseft {

// Exact-cardinality set of tunable parameter indices. Indices are global
// (into the flat parameter vector); `m` is the size of the selection universe
// the budget was computed over (body parameters unless the head is budgeted).
struct SparseMask {
    std::vector<int> tunable;  // sorted
    int m = 0;
    int k = 0;
    double p = 1.0;
    std::string strategy;
    std::uint64_t seed = 0;

    bool contains(int idx) const;
};

enum class ScoreProvenance { magnitude, sam_grad_sq, fisher, continuous_gate };

struct ScoreVector {
    std::vector<double> scores;
    ScoreProvenance provenance = ScoreProvenance::magnitude;
};

enum class StrategyKind { random, mixout, bitfit, magprune, adapter, lora, diffprune, childprune, sam };

std::string to_string(StrategyKind k);
StrategyKind strategy_from_string(const std::string& s);

struct StrategyConfig {
    StrategyKind variant = StrategyKind::random;
    double p = 0.005;
    std::uint64_t seed = 0;
    int burn_in = 10;           // sam: gradient-accumulation steps at theta0
    int reproject_every = 100;  // diffprune
    int full_steps = 120;       // childprune probe phase length
    int adapter_bottleneck = 4;
    int lora_rank = 2;
    bool mixout_per_step = false;
    // Default keeps the task head always trainable and outside the budget.
    bool head_in_budget = false;

    void validate() const;  // throws InvalidSpec
};

// k = floor(m * p); throws ZeroBudget when that floors to zero.
int budget(int m, double p);

// Indices of the k largest scores, ties broken by lower index.
SparseMask top_k_select(const ScoreVector& scores, int k);
SparseMask top_k_subset(const std::vector<double>& scores, const std::vector<int>& candidates, int k);

// Euclidean projection of a continuous diagonal onto the L0 ball of hard
// masks: keep the k entries of largest value.
SparseMask project_l0(const std::vector<double>& diag_values, int k);

// Taylor-surrogate value at its inner minimum for a fixed mask:
// l0 - sum_{i in mask} g_i^2 / (2 h_i).
double surrogate_objective(double l0, const std::vector<double>& g, const std::vector<double>& h,
                           const SparseMask& mask);

// Exhaustive minimum over all C(m, k) masks. Combinatorial guard m <= 20.
std::pair<double, SparseMask> brute_force_mask(double l0, const std::vector<double>& g,
                                               const std::vector<double>& h, int k);

// Accumulates batch gradients at theta0 (no parameter updates) and returns
// per-coordinate squared sums.
ScoreVector sam_scores(const Model& model_at_theta0, const Dataset& train, int burn_in,
                       int batch_size, std::uint64_t seed);

// Per-run strategy state. Built by init_mask; the training loop drives it via
// strategy_on_step / strategy_on_finish.
class StrategyState {
public:
    StrategyState() = default;

    bool initialized() const { return initialized_; }
    const StrategyConfig& config() const { return cfg_; }
    const SparseMask& mask() const { return mask_; }
    // Sorted indices the optimizer may touch right now.
    const std::vector<int>& trainable() const { return trainable_; }
    // True when calling strategy_on_step at `step` will change the mask.
    bool update_due(int step) const;
    // Evaluations before this step are probe-phase models, not snapshot candidates.
    int final_mask_from_step() const;

private:
    friend StrategyState init_mask(const StrategyConfig&, const Model&, const Dataset&, int, double);
    friend std::optional<SparseMask> strategy_on_step(StrategyState&, int, std::vector<double>&,
                                                      const std::vector<double>&,
                                                      const std::vector<double>&);
    friend bool strategy_on_finish(StrategyState&, std::vector<double>&, const std::vector<double>&);

    void set_trainable_from_mask();

    bool initialized_ = false;
    StrategyConfig cfg_;
    SparseMask mask_;
    std::vector<int> universe_;
    std::vector<int> head_;
    std::vector<int> trainable_;
    double step_size_ = 0.0;
    Rng rng_{0};

    // diffprune
    std::vector<double> gates_;
    std::vector<double> shadow_;
    // childprune
    std::vector<double> grad_sq_accum_;
    bool projected_ = false;
    // mixout
    std::vector<int> mixout_keep_;
};

// Builds strategy state and its initial (or provisional) mask. `step_size` is
// the optimizer learning rate, used by diffprune's straight-through gates.
StrategyState init_mask(const StrategyConfig& cfg, const Model& start_model, const Dataset& train,
                        int batch_size, double step_size);

// Per-step hook. May mutate theta (reprojection, probe-phase resets) and
// returns the new mask when it changed at this step.
std::optional<SparseMask> strategy_on_step(StrategyState& state, int step,
                                           std::vector<double>& theta,
                                           const std::vector<double>& theta0,
                                           const std::vector<double>& grads);

// End-of-run hook (mixout reset, forced childprune projection). Returns true
// when theta was modified.
bool strategy_on_finish(StrategyState& state, std::vector<double>& theta,
                        const std::vector<double>& theta0);

}  // namespace sparseft
