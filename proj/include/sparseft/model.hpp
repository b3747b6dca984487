#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sparseft/autodiff.hpp"
#include "sparseft/dataset.hpp"

namespace sparseft {

enum class Activation { tanh, relu };
enum class HeadKind { classification, regression };
enum class AugmentKind { none, adapter, lora };

struct ModelSpec {
    int input_dim = 1;
    std::vector<int> hidden_dims;
    Activation activation = Activation::tanh;
    HeadKind head = HeadKind::classification;
    int head_dim = 2;  // classes or regression outputs
    AugmentKind augmentation = AugmentKind::none;
    int adapter_bottleneck = 0;
    int lora_rank = 0;

    void validate() const;   // throws InvalidSpec
    int param_count() const; // pure function of the spec
    bool operator==(const ModelSpec&) const = default;
};

enum class ParamKind { weight, bias, adapter, lora_a, lora_b };

// Contiguous slice of the flat parameter vector. `layer` is the hidden-layer
// index, -1 for the output head. `group` is "layer<i>.<kind>" or "head.<kind>";
// all four adapter pieces of a layer share one "layer<i>.adapter" group.
struct ParamSegment {
    std::string group;
    ParamKind kind;
    int layer = -1;
    int offset = 0;
    std::vector<int> shape;
    int size = 0;
};

class Model {
public:
    explicit Model(ModelSpec spec);

    const ModelSpec& spec() const { return spec_; }
    int param_count() const { return static_cast<int>(params_.size()); }
    const std::vector<ParamSegment>& segments() const { return segments_; }
    const std::vector<double>& params() const { return params_; }
    std::vector<double>& mutable_params() { return params_; }

    // Network output ([n, head_dim] logits or regression values). If `leaves`
    // is given it receives one tape leaf per segment, in segment order.
    ag::Tensor forward(ag::Tape& tape, const double* x, int n,
                       std::vector<ag::Tensor>* leaves = nullptr) const;
    std::vector<double> predict(const double* x, int n) const;

    ag::Tensor loss_node(ag::Tape& tape, const Dataset& data, const std::vector<int>& rows,
                         std::vector<ag::Tensor>* leaves = nullptr) const;
    double loss(const Dataset& data, const std::vector<int>& rows) const;
    // Returns the loss; fills grad_out (resized to param_count).
    double loss_and_grad(const Dataset& data, const std::vector<int>& rows,
                         std::vector<double>& grad_out) const;

private:
    ModelSpec spec_;
    std::vector<ParamSegment> segments_;
    std::vector<double> params_;
};

// Frozen pretrained parameters plus the architecture that produced them.
struct Checkpoint {
    ModelSpec spec;
    std::vector<double> theta0;
    std::uint64_t seed = 0;
    std::string digest;
};

Model build_model(const ModelSpec& spec, std::uint64_t seed);

// Base model carrying theta0 unchanged.
Model model_from_checkpoint(const Checkpoint& ckpt);

// Equivalent-model constructions: the returned model carries theta0 plus the
// new adapter/LoRA parameters, initialized so its outputs match the base
// model exactly for every input (up-projection / B matrix start at zero).
Model augment_equivalent(const Checkpoint& ckpt, AugmentKind kind, int dim, std::uint64_t seed);

std::vector<double> flatten_params(const Model& model);
void unflatten_params(Model& model, const std::vector<double>& v);

// Partition of 0..m-1 keyed by segment group label.
std::map<std::string, std::vector<int>> param_groups(const Model& model);

std::vector<int> indices_of_kind(const Model& model, ParamKind kind);
std::vector<int> head_indices(const Model& model);
std::vector<int> body_indices(const Model& model);
std::vector<int> augmentation_indices(const Model& model);

// Re-draws the task head (weights fan-in uniform, bias zero); body untouched.
void reinit_head(Model& model, std::uint64_t seed);

Checkpoint make_checkpoint(const Model& model, std::uint64_t seed);
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace sparseft
