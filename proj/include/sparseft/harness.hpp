#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sparseft/selection.hpp"
#include "sparseft/synth.hpp"
#include "sparseft/theory.hpp"
#include "sparseft/training.hpp"

namespace sparseft {

enum class MatrixMode { main, data_perturbation, sparsity_sweep, stability };

std::string to_string(MatrixMode m);
MatrixMode mode_from_string(const std::string& s);

struct ExperimentConfig {
    std::string checkpoint;  // path to a sparseft-ckpt-v1 file
    std::vector<TaskSpec> tasks;
    std::vector<StrategyKind> strategies;
    std::vector<std::uint64_t> seeds;
    std::vector<double> sparsities;
    TrainConfig train;
    StrategyConfig strategy_defaults;  // variant/p/seed overridden per cell
    ModelSpec model;                   // used by pretraining
    std::string output_dir = "out";
    MatrixMode mode = MatrixMode::main;
    int phs_samples = 20;
    bool phs_full = false;
    double delta = 0.1;
    double drop_fraction = 0.1;
    int workers = 1;
    bool pooled_ranks = false;

    void validate() const;
};

struct Cell {
    std::string task;
    StrategyKind strategy = StrategyKind::random;
    double p = 1.0;
    std::uint64_t seed = 0;
    MatrixMode mode = MatrixMode::main;

    std::string stem() const;  // <task>_<strategy>_<p>_<seed>
};

struct CellOutcome {
    Cell cell;
    bool ok = false;
    std::string error;
    RunReport run;
    StabilityReport stab;
    bool has_stab = false;
};

// Full-tuning pass over the pretraining split; returns the frozen checkpoint.
Checkpoint pretrain_checkpoint(const TaskSpec& task, const ModelSpec& model,
                               const TrainConfig& cfg);

// Executes the strategy x seed x sparsity cross-product for each task,
// persisting one JSON file per cell under <out>/runs/<mode>/. Existing cells
// are loaded instead of re-run; a failing cell is recorded, never fatal.
// `max_cells` > 0 stops after that many cells (used to exercise resumption).
std::vector<CellOutcome> run_matrix(const ExperimentConfig& cfg, int max_cells = -1);

// summary.csv / sweep.csv / stats.json / series/*.tsv under cfg.output_dir.
// Numbers are printed with 6 significant digits so reruns are byte-identical.
void emit_report(const std::vector<CellOutcome>& outcomes, const ExperimentConfig& cfg);

std::string format_g6(double v);

// Built-in reference experiment (used when no config file is given).
ExperimentConfig reference_config();

}  // namespace sparseft
