#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <unordered_map>
#include <vector>

#include "sparseft/errors.hpp"

namespace sparseft::ag {

// Dense row-major tensor of doubles. `node` is the handle into the tape that
// produced the value (-1 for tensors not yet registered on a tape).
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;
    int node = -1;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<double> d);

    static Tensor zeros(const std::vector<int>& s);
    static Tensor scalar(double v);
    static Tensor vec(std::vector<double> v);
    static Tensor mat(int r, int c, std::vector<double> d);

    int size() const { return static_cast<int>(data.size()); }
    int rows() const;
    int cols() const;
    double value() const;  // scalar contents; throws NotScalar
    bool all_finite() const;
};

enum class Primitive { leaf, matmul, add, scale, tanh, relu, softmax_xent, mse };

class GradientMap {
public:
    const Tensor& at(int node_id) const;
    const Tensor& at(const Tensor& t) const { return at(t.node); }
    bool contains(int node_id) const { return grads_.count(node_id) > 0; }

private:
    friend class Tape;
    std::unordered_map<int, Tensor> grads_;
};

// Append-only record of one forward pass. Node inputs always precede the node,
// so reverse creation order is a valid reverse-topological sweep.
class Tape {
public:
    Tensor leaf(Tensor value);

    Tensor matmul(const Tensor& a, const Tensor& b);
    // Elementwise when shapes match; a [n,m] plus b [m] broadcasts b over rows.
    Tensor add(const Tensor& a, const Tensor& b);
    Tensor scale(const Tensor& a, double c);
    Tensor tanh(const Tensor& a);
    Tensor relu(const Tensor& a);
    // Mean cross-entropy of row-wise softmax against integer class targets.
    Tensor softmax_xent(const Tensor& logits, const std::vector<int>& targets);
    // Mean squared error over all elements.
    Tensor mse(const Tensor& pred, const Tensor& target);

    // Reverse sweep from a scalar loss. Pure: repeated calls give identical
    // results. Every leaf gets an entry; unreachable leaves get exact zeros.
    GradientMap backward(const Tensor& loss) const;

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Primitive kind = Primitive::leaf;
        std::array<int, 2> in{-1, -1};
        Tensor out;
        std::vector<int> targets;  // softmax_xent only
        double alpha = 0.0;        // scale only
    };

    int push(Node n);
    const Tensor& val(int id) const { return nodes_[static_cast<std::size_t>(id)].out; }
    void check_on_tape(const Tensor& t, const char* who) const;

    std::vector<Node> nodes_;
    std::vector<int> leaves_;
};

// Generic dispatch over the primitive set. `scale` reads its factor from a
// one-element second input (treated as a constant, no gradient).
Tensor apply_primitive(Tape& tape, Primitive kind, const std::vector<Tensor>& inputs,
                       const std::vector<int>& targets = {});

using ScalarFn = std::function<double(const std::vector<double>&)>;

// Central differences (f(x+h e_i) - f(x-h e_i)) / 2h per coordinate.
// Verification oracle for backward(); shares no code with the tape.
std::vector<double> finite_diff_grad(const ScalarFn& f, std::vector<double> theta, double h);

}  // namespace sparseft::ag
