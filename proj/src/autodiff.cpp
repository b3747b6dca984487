#include "sparseft/autodiff.hpp"

#include <cmath>
#include <cstdio>
#include <string>

namespace sparseft::ag {

namespace {

int product(const std::vector<int>& shape) {
    int n = 1;
    for (int d : shape) n *= d;
    return n;
}

std::string shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

}  // namespace

Tensor::Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    for (int dim : shape) {
        if (dim <= 0) throw ShapeMismatch("tensor dimension must be positive");
    }
    if (product(shape) != static_cast<int>(data.size())) {
        throw ShapeMismatch("tensor data length " + std::to_string(data.size()) +
                            " does not match shape " + shape_str(shape));
    }
}

Tensor Tensor::zeros(const std::vector<int>& s) {
    return Tensor(s, std::vector<double>(static_cast<std::size_t>(product(s)), 0.0));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::vec(std::vector<double> v) {
    const int n = static_cast<int>(v.size());
    return Tensor({n}, std::move(v));
}

Tensor Tensor::mat(int r, int c, std::vector<double> d) { return Tensor({r, c}, std::move(d)); }

int Tensor::rows() const { return shape.empty() ? 1 : shape[0]; }

int Tensor::cols() const {
    if (shape.size() >= 2) return shape[1];
    return 1;
}

double Tensor::value() const {
    if (data.size() != 1) throw NotScalar("tensor has " + std::to_string(data.size()) + " elements");
    return data[0];
}

bool Tensor::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

const Tensor& GradientMap::at(int node_id) const {
    auto it = grads_.find(node_id);
    if (it == grads_.end()) {
        throw std::out_of_range("no gradient recorded for node " + std::to_string(node_id));
    }
    return it->second;
}

int Tape::push(Node n) {
    const int id = static_cast<int>(nodes_.size());
    n.out.node = id;
    nodes_.push_back(std::move(n));
    return id;
}

void Tape::check_on_tape(const Tensor& t, const char* who) const {
    if (t.node < 0 || t.node >= static_cast<int>(nodes_.size())) {
        throw ShapeMismatch(std::string(who) + ": input tensor is not registered on this tape");
    }
}

Tensor Tape::leaf(Tensor value) {
    Node n;
    n.kind = Primitive::leaf;
    n.out = std::move(value);
    const int id = push(std::move(n));
    leaves_.push_back(id);
    return nodes_.back().out;
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
    check_on_tape(a, "matmul");
    check_on_tape(b, "matmul");
    if (a.shape.size() != 2 || b.shape.size() != 2 || a.shape[1] != b.shape[0]) {
        throw ShapeMismatch("matmul: " + shape_str(a.shape) + " x " + shape_str(b.shape));
    }
    const int n = a.shape[0], k = a.shape[1], m = b.shape[1];
    Tensor out = Tensor::zeros({n, m});
    for (int i = 0; i < n; ++i) {
        for (int t = 0; t < k; ++t) {
            const double av = a.data[static_cast<std::size_t>(i * k + t)];
            if (av == 0.0) continue;
            const double* brow = &b.data[static_cast<std::size_t>(t * m)];
            double* orow = &out.data[static_cast<std::size_t>(i * m)];
            for (int j = 0; j < m; ++j) orow[j] += av * brow[j];
        }
    }
    Node node;
    node.kind = Primitive::matmul;
    node.in = {a.node, b.node};
    node.out = std::move(out);
    push(std::move(node));
    return nodes_.back().out;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
    check_on_tape(a, "add");
    check_on_tape(b, "add");
    const bool same = a.shape == b.shape;
    const bool rowcast = a.shape.size() == 2 && b.shape.size() == 1 && b.shape[0] == a.shape[1];
    if (!same && !rowcast) {
        throw ShapeMismatch("add: " + shape_str(a.shape) + " + " + shape_str(b.shape));
    }
    Tensor out = a;
    out.node = -1;
    if (same) {
        for (int i = 0; i < out.size(); ++i) out.data[static_cast<std::size_t>(i)] += b.data[static_cast<std::size_t>(i)];
    } else {
        const int n = a.shape[0], m = a.shape[1];
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j)
                out.data[static_cast<std::size_t>(i * m + j)] += b.data[static_cast<std::size_t>(j)];
    }
    Node node;
    node.kind = Primitive::add;
    node.in = {a.node, b.node};
    node.out = std::move(out);
    push(std::move(node));
    return nodes_.back().out;
}

Tensor Tape::scale(const Tensor& a, double c) {
    check_on_tape(a, "scale");
    Tensor out = a;
    out.node = -1;
    for (double& v : out.data) v *= c;
    Node node;
    node.kind = Primitive::scale;
    node.in = {a.node, -1};
    node.alpha = c;
    node.out = std::move(out);
    push(std::move(node));
    return nodes_.back().out;
}

Tensor Tape::tanh(const Tensor& a) {
    check_on_tape(a, "tanh");
    Tensor out = a;
    out.node = -1;
    for (double& v : out.data) v = std::tanh(v);
    Node node;
    node.kind = Primitive::tanh;
    node.in = {a.node, -1};
    node.out = std::move(out);
    push(std::move(node));
    return nodes_.back().out;
}

Tensor Tape::relu(const Tensor& a) {
    check_on_tape(a, "relu");
    Tensor out = a;
    out.node = -1;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    Node node;
    node.kind = Primitive::relu;
    node.in = {a.node, -1};
    node.out = std::move(out);
    push(std::move(node));
    return nodes_.back().out;
}

Tensor Tape::softmax_xent(const Tensor& logits, const std::vector<int>& targets) {
    check_on_tape(logits, "softmax_xent");
    if (logits.shape.size() != 2) throw ShapeMismatch("softmax_xent: logits must be 2-d");
    const int n = logits.shape[0], c = logits.shape[1];
    if (static_cast<int>(targets.size()) != n) {
        throw ShapeMismatch("softmax_xent: need one target per logits row");
    }
    for (int t : targets) {
        if (t < 0 || t >= c) throw InvalidTarget("class index " + std::to_string(t) + " outside [0," + std::to_string(c) + ")");
    }
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        const double* row = &logits.data[static_cast<std::size_t>(i * c)];
        double mx = row[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (int j = 0; j < c; ++j) z += std::exp(row[j] - mx);
        loss += std::log(z) - (row[targets[static_cast<std::size_t>(i)]] - mx);
    }
    Node node;
    node.kind = Primitive::softmax_xent;
    node.in = {logits.node, -1};
    node.targets = targets;
    node.out = Tensor::scalar(loss / n);
    push(std::move(node));
    return nodes_.back().out;
}

Tensor Tape::mse(const Tensor& pred, const Tensor& target) {
    check_on_tape(pred, "mse");
    check_on_tape(target, "mse");
    if (pred.shape != target.shape) {
        throw ShapeMismatch("mse: " + shape_str(pred.shape) + " vs " + shape_str(target.shape));
    }
    double s = 0.0;
    for (int i = 0; i < pred.size(); ++i) {
        const double d = pred.data[static_cast<std::size_t>(i)] - target.data[static_cast<std::size_t>(i)];
        s += d * d;
    }
    Node node;
    node.kind = Primitive::mse;
    node.in = {pred.node, target.node};
    node.out = Tensor::scalar(s / pred.size());
    push(std::move(node));
    return nodes_.back().out;
}

GradientMap Tape::backward(const Tensor& loss) const {
    check_on_tape(loss, "backward");
    if (loss.size() != 1) throw NotScalar("backward: loss has " + std::to_string(loss.size()) + " elements");

    std::vector<Tensor> grad(nodes_.size());
    std::vector<char> has(nodes_.size(), 0);

    auto accumulate = [&](int id, const Tensor& g) {
        auto& slot = grad[static_cast<std::size_t>(id)];
        if (!has[static_cast<std::size_t>(id)]) {
            slot = g;
            has[static_cast<std::size_t>(id)] = 1;
        } else {
            for (int i = 0; i < slot.size(); ++i) slot.data[static_cast<std::size_t>(i)] += g.data[static_cast<std::size_t>(i)];
        }
    };

    grad[static_cast<std::size_t>(loss.node)] = Tensor(val(loss.node).shape, {1.0});
    has[static_cast<std::size_t>(loss.node)] = 1;

    for (int id = loss.node; id >= 0; --id) {
        if (!has[static_cast<std::size_t>(id)]) continue;
        const Node& node = nodes_[static_cast<std::size_t>(id)];
        const Tensor& g = grad[static_cast<std::size_t>(id)];
        switch (node.kind) {
            case Primitive::leaf:
                break;
            case Primitive::matmul: {
                const Tensor& a = val(node.in[0]);
                const Tensor& b = val(node.in[1]);
                const int n = a.shape[0], k = a.shape[1], m = b.shape[1];
                Tensor da = Tensor::zeros(a.shape);
                Tensor db = Tensor::zeros(b.shape);
                for (int i = 0; i < n; ++i) {
                    for (int j = 0; j < m; ++j) {
                        const double gv = g.data[static_cast<std::size_t>(i * m + j)];
                        if (gv == 0.0) continue;
                        for (int t = 0; t < k; ++t) {
                            da.data[static_cast<std::size_t>(i * k + t)] += gv * b.data[static_cast<std::size_t>(t * m + j)];
                            db.data[static_cast<std::size_t>(t * m + j)] += gv * a.data[static_cast<std::size_t>(i * k + t)];
                        }
                    }
                }
                accumulate(node.in[0], da);
                accumulate(node.in[1], db);
                break;
            }
            case Primitive::add: {
                const Tensor& a = val(node.in[0]);
                const Tensor& b = val(node.in[1]);
                accumulate(node.in[0], g);
                if (a.shape == b.shape) {
                    accumulate(node.in[1], g);
                } else {
                    const int n = a.shape[0], m = a.shape[1];
                    Tensor db = Tensor::zeros(b.shape);
                    for (int i = 0; i < n; ++i)
                        for (int j = 0; j < m; ++j)
                            db.data[static_cast<std::size_t>(j)] += g.data[static_cast<std::size_t>(i * m + j)];
                    accumulate(node.in[1], db);
                }
                break;
            }
            case Primitive::scale: {
                Tensor da = g;
                for (double& v : da.data) v *= node.alpha;
                accumulate(node.in[0], da);
                break;
            }
            case Primitive::tanh: {
                const Tensor& y = node.out;
                Tensor da = g;
                for (int i = 0; i < da.size(); ++i) {
                    const double t = y.data[static_cast<std::size_t>(i)];
                    da.data[static_cast<std::size_t>(i)] *= 1.0 - t * t;
                }
                accumulate(node.in[0], da);
                break;
            }
            case Primitive::relu: {
                const Tensor& x = val(node.in[0]);
                Tensor da = g;
                for (int i = 0; i < da.size(); ++i) {
                    // subgradient at 0 defined as 0
                    if (!(x.data[static_cast<std::size_t>(i)] > 0.0)) da.data[static_cast<std::size_t>(i)] = 0.0;
                }
                accumulate(node.in[0], da);
                break;
            }
            case Primitive::softmax_xent: {
                const Tensor& logits = val(node.in[0]);
                const int n = logits.shape[0], c = logits.shape[1];
                const double gs = g.data[0] / n;
                Tensor dl = Tensor::zeros(logits.shape);
                for (int i = 0; i < n; ++i) {
                    const double* row = &logits.data[static_cast<std::size_t>(i * c)];
                    double mx = row[0];
                    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
                    double z = 0.0;
                    for (int j = 0; j < c; ++j) z += std::exp(row[j] - mx);
                    for (int j = 0; j < c; ++j) {
                        double p = std::exp(row[j] - mx) / z;
                        if (j == node.targets[static_cast<std::size_t>(i)]) p -= 1.0;
                        dl.data[static_cast<std::size_t>(i * c + j)] = gs * p;
                    }
                }
                accumulate(node.in[0], dl);
                break;
            }
            case Primitive::mse: {
                const Tensor& p = val(node.in[0]);
                const Tensor& t = val(node.in[1]);
                const double gs = 2.0 * g.data[0] / p.size();
                Tensor dp = Tensor::zeros(p.shape);
                for (int i = 0; i < p.size(); ++i) {
                    dp.data[static_cast<std::size_t>(i)] =
                        gs * (p.data[static_cast<std::size_t>(i)] - t.data[static_cast<std::size_t>(i)]);
                }
                Tensor dt = dp;
                for (double& v : dt.data) v = -v;
                accumulate(node.in[0], dp);
                accumulate(node.in[1], dt);
                break;
            }
        }
    }

    GradientMap out;
    for (int id : leaves_) {
        if (has[static_cast<std::size_t>(id)]) {
            out.grads_.emplace(id, std::move(grad[static_cast<std::size_t>(id)]));
        } else {
            out.grads_.emplace(id, Tensor::zeros(val(id).shape));
        }
    }
    return out;
}

Tensor apply_primitive(Tape& tape, Primitive kind, const std::vector<Tensor>& inputs,
                       const std::vector<int>& targets) {
    auto need = [&](std::size_t n) {
        if (inputs.size() != n) {
            throw ShapeMismatch("apply_primitive: expected " + std::to_string(n) + " inputs, got " +
                                std::to_string(inputs.size()));
        }
    };
    switch (kind) {
        case Primitive::leaf:
            need(1);
            return tape.leaf(inputs[0]);
        case Primitive::matmul:
            need(2);
            return tape.matmul(inputs[0], inputs[1]);
        case Primitive::add:
            need(2);
            return tape.add(inputs[0], inputs[1]);
        case Primitive::scale:
            need(2);
            return tape.scale(inputs[0], inputs[1].value());
        case Primitive::tanh:
            need(1);
            return tape.tanh(inputs[0]);
        case Primitive::relu:
            need(1);
            return tape.relu(inputs[0]);
        case Primitive::softmax_xent:
            need(1);
            return tape.softmax_xent(inputs[0], targets);
        case Primitive::mse:
            need(2);
            return tape.mse(inputs[0], inputs[1]);
    }
    throw ShapeMismatch("apply_primitive: unknown primitive");
}

std::vector<double> finite_diff_grad(const ScalarFn& f, std::vector<double> theta, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: h must be positive");
    std::vector<double> grad(theta.size(), 0.0);
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double orig = theta[i];
        theta[i] = orig + h;
        const double fp = f(theta);
        theta[i] = orig - h;
        const double fm = f(theta);
        theta[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw NonFiniteEvaluation("finite_diff_grad: probe at coordinate " + std::to_string(i));
        }
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

}  // namespace sparseft::ag
