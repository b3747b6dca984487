#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sparseft/dataset.hpp"

namespace sparseft {

// Seeded Gaussian-mixture classification source. The downstream distribution
// reuses the pretraining mixture with its class means rotated (by `shift`
// radians in a seeded random 2-plane) and translated by `shift`, plus label
// flips with probability `label_noise`.
struct TaskSpec {
    std::string name = "task";
    int input_dim = 8;
    int classes = 3;
    int n_pretrain = 1000;
    int n_train = 200;
    int n_test = 500;
    double shift = 0.0;
    double label_noise = 0.0;
    double separation = 4.0;  // class-mean radius, cluster std is 1
    std::uint64_t seed = 1;

    void validate() const;  // throws InvalidSpec
};

struct TaskData {
    Dataset pretrain;
    SplitData downstream;  // 90/10 train/dev split plus test
};

TaskData synth_task(const TaskSpec& spec);

// The class means of the two phases, for generator-oracle tests.
std::vector<double> task_means_pretrain(const TaskSpec& spec);
std::vector<double> task_means_downstream(const TaskSpec& spec);

// `count` seeded subsamples of the training set keeping ceil((1-drop)*n)
// points each; dev/test are untouched by construction.
std::vector<Dataset> perturbed_datasets(const Dataset& train, int count, double drop_fraction,
                                        std::uint64_t seed);

}  // namespace sparseft
