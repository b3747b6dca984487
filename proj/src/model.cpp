#include "sparseft/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sparseft/json_io.hpp"
#include "sparseft/rng.hpp"

namespace sparseft {

namespace {

int seg_size(const std::vector<int>& shape) {
    int n = 1;
    for (int d : shape) n *= d;
    return n;
}

struct LayoutBuilder {
    std::vector<ParamSegment> segments;
    int offset = 0;

    void push(std::string group, ParamKind kind, int layer, std::vector<int> shape) {
        ParamSegment s;
        s.group = std::move(group);
        s.kind = kind;
        s.layer = layer;
        s.offset = offset;
        s.shape = std::move(shape);
        s.size = seg_size(s.shape);
        offset += s.size;
        segments.push_back(std::move(s));
    }
};

std::vector<ParamSegment> build_layout(const ModelSpec& spec) {
    LayoutBuilder lb;
    int in_d = spec.input_dim;
    for (std::size_t l = 0; l < spec.hidden_dims.size(); ++l) {
        const int out_d = spec.hidden_dims[l];
        const std::string base = "layer" + std::to_string(l);
        const int li = static_cast<int>(l);
        lb.push(base + ".weight", ParamKind::weight, li, {in_d, out_d});
        lb.push(base + ".bias", ParamKind::bias, li, {out_d});
        if (spec.augmentation == AugmentKind::adapter) {
            const int b = spec.adapter_bottleneck;
            lb.push(base + ".adapter", ParamKind::adapter, li, {out_d, b});
            lb.push(base + ".adapter", ParamKind::adapter, li, {b});
            lb.push(base + ".adapter", ParamKind::adapter, li, {b, out_d});
            lb.push(base + ".adapter", ParamKind::adapter, li, {out_d});
        }
        if (spec.augmentation == AugmentKind::lora) {
            const int r = spec.lora_rank;
            lb.push(base + ".lora_A", ParamKind::lora_a, li, {in_d, r});
            lb.push(base + ".lora_B", ParamKind::lora_b, li, {r, out_d});
        }
        in_d = out_d;
    }
    lb.push("head.weight", ParamKind::weight, -1, {in_d, spec.head_dim});
    lb.push("head.bias", ParamKind::bias, -1, {spec.head_dim});
    return lb.segments;
}

void init_segment(std::vector<double>& params, const ParamSegment& seg, Rng& rng, bool zero) {
    if (zero) {
        std::fill(params.begin() + seg.offset, params.begin() + seg.offset + seg.size, 0.0);
        return;
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(seg.shape[0]));
    for (int i = 0; i < seg.size; ++i) {
        params[static_cast<std::size_t>(seg.offset + i)] = rng.uniform(-bound, bound);
    }
}

// Random draws only for weight-like pieces; biases and the zero-initialized
// augmentation halves consume no randomness, keeping streams layout-stable.
bool randomly_initialized(const ParamSegment& seg, int adapter_piece) {
    switch (seg.kind) {
        case ParamKind::weight: return true;
        case ParamKind::bias: return false;
        case ParamKind::adapter: return adapter_piece == 0;  // down-projection only
        case ParamKind::lora_a: return true;
        case ParamKind::lora_b: return false;
    }
    return false;
}

}  // namespace

void ModelSpec::validate() const {
    if (input_dim < 1) throw InvalidSpec("input_dim must be >= 1");
    if (head_dim < 1) throw InvalidSpec("head_dim must be >= 1");
    for (int d : hidden_dims) {
        if (d < 1) throw InvalidSpec("hidden dims must be >= 1");
    }
    if (augmentation == AugmentKind::adapter && adapter_bottleneck < 1) {
        throw InvalidSpec("adapter bottleneck must be >= 1");
    }
    if (augmentation == AugmentKind::lora) {
        if (lora_rank < 1) throw InvalidSpec("lora rank must be >= 1");
        int in_d = input_dim;
        for (int out_d : hidden_dims) {
            if (lora_rank > std::min(in_d, out_d)) {
                throw InvalidSpec("lora rank exceeds layer dimension");
            }
            in_d = out_d;
        }
    }
}

int ModelSpec::param_count() const {
    int total = 0;
    for (const auto& seg : build_layout(*this)) total += seg.size;
    return total;
}

Model::Model(ModelSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    segments_ = build_layout(spec_);
    int total = 0;
    for (const auto& s : segments_) total += s.size;
    params_.assign(static_cast<std::size_t>(total), 0.0);
}

ag::Tensor Model::forward(ag::Tape& tape, const double* x, int n,
                          std::vector<ag::Tensor>* leaves) const {
    std::vector<ag::Tensor> local;
    std::vector<ag::Tensor>& lv = leaves ? *leaves : local;
    lv.clear();
    lv.reserve(segments_.size());
    for (const auto& seg : segments_) {
        std::vector<double> d(params_.begin() + seg.offset, params_.begin() + seg.offset + seg.size);
        lv.push_back(tape.leaf(ag::Tensor(seg.shape, std::move(d))));
    }

    ag::Tensor h = tape.leaf(ag::Tensor({n, spec_.input_dim},
                                        std::vector<double>(x, x + static_cast<std::size_t>(n) * spec_.input_dim)));
    auto act = [&](const ag::Tensor& t) {
        return spec_.activation == Activation::tanh ? tape.tanh(t) : tape.relu(t);
    };

    std::size_t si = 0;
    for (std::size_t l = 0; l < spec_.hidden_dims.size(); ++l) {
        const ag::Tensor& w = lv[si++];
        const ag::Tensor& b = lv[si++];
        ag::Tensor z = tape.add(tape.matmul(h, w), b);
        if (spec_.augmentation == AugmentKind::adapter) {
            const ag::Tensor& down_w = lv[si++];
            const ag::Tensor& down_b = lv[si++];
            const ag::Tensor& up_w = lv[si++];
            const ag::Tensor& up_b = lv[si++];
            h = act(z);
            ag::Tensor mid = act(tape.add(tape.matmul(h, down_w), down_b));
            h = tape.add(h, tape.add(tape.matmul(mid, up_w), up_b));
            continue;
        }
        if (spec_.augmentation == AugmentKind::lora) {
            const ag::Tensor& a = lv[si++];
            const ag::Tensor& bm = lv[si++];
            z = tape.add(z, tape.matmul(tape.matmul(h, a), bm));
        }
        h = act(z);
    }
    const ag::Tensor& head_w = lv[si++];
    const ag::Tensor& head_b = lv[si++];
    return tape.add(tape.matmul(h, head_w), head_b);
}

std::vector<double> Model::predict(const double* x, int n) const {
    ag::Tape tape;
    return forward(tape, x, n).data;
}

ag::Tensor Model::loss_node(ag::Tape& tape, const Dataset& data, const std::vector<int>& rows,
                            std::vector<ag::Tensor>* leaves) const {
    if (rows.empty()) throw EmptyData("loss over empty batch");
    const int n = static_cast<int>(rows.size());
    std::vector<double> xb(static_cast<std::size_t>(n) * data.input_dim);
    for (int i = 0; i < n; ++i) {
        const int r = rows[static_cast<std::size_t>(i)];
        std::copy_n(&data.x[static_cast<std::size_t>(r) * data.input_dim], data.input_dim,
                    &xb[static_cast<std::size_t>(i) * data.input_dim]);
    }
    ag::Tensor out = forward(tape, xb.data(), n, leaves);
    if (spec_.head == HeadKind::classification) {
        std::vector<int> t(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) t[static_cast<std::size_t>(i)] = data.labels[static_cast<std::size_t>(rows[static_cast<std::size_t>(i)])];
        return tape.softmax_xent(out, t);
    }
    std::vector<double> yb(static_cast<std::size_t>(n) * data.target_dim);
    for (int i = 0; i < n; ++i) {
        const int r = rows[static_cast<std::size_t>(i)];
        std::copy_n(&data.targets[static_cast<std::size_t>(r) * data.target_dim], data.target_dim,
                    &yb[static_cast<std::size_t>(i) * data.target_dim]);
    }
    return tape.mse(out, tape.leaf(ag::Tensor({n, data.target_dim}, std::move(yb))));
}

double Model::loss(const Dataset& data, const std::vector<int>& rows) const {
    ag::Tape tape;
    return loss_node(tape, data, rows).value();
}

double Model::loss_and_grad(const Dataset& data, const std::vector<int>& rows,
                            std::vector<double>& grad_out) const {
    ag::Tape tape;
    std::vector<ag::Tensor> leaves;
    ag::Tensor loss = loss_node(tape, data, rows, &leaves);
    ag::GradientMap gm = tape.backward(loss);
    grad_out.assign(params_.size(), 0.0);
    for (std::size_t s = 0; s < segments_.size(); ++s) {
        const auto& seg = segments_[s];
        const ag::Tensor& g = gm.at(leaves[s]);
        std::copy(g.data.begin(), g.data.end(), grad_out.begin() + seg.offset);
    }
    return loss.value();
}

Model build_model(const ModelSpec& spec, std::uint64_t seed) {
    Model model(spec);
    Rng rng(seed);
    auto& params = model.mutable_params();
    int adapter_piece = 0;
    for (const auto& seg : model.segments()) {
        if (seg.kind == ParamKind::adapter) {
            init_segment(params, seg, rng, !randomly_initialized(seg, adapter_piece));
            adapter_piece = (adapter_piece + 1) % 4;
        } else {
            init_segment(params, seg, rng, !randomly_initialized(seg, 0));
        }
    }
    return model;
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
    Model model(ckpt.spec);
    if (static_cast<int>(ckpt.theta0.size()) != model.param_count()) {
        throw DimMismatch("checkpoint parameter count does not match spec");
    }
    model.mutable_params() = ckpt.theta0;
    return model;
}

Model augment_equivalent(const Checkpoint& ckpt, AugmentKind kind, int dim, std::uint64_t seed) {
    if (kind == AugmentKind::none) throw InvalidSpec("augment_equivalent: kind must be adapter or lora");
    if (ckpt.spec.augmentation != AugmentKind::none) {
        throw InvalidSpec("augment_equivalent: checkpoint is already augmented");
    }
    ModelSpec spec = ckpt.spec;
    spec.augmentation = kind;
    if (kind == AugmentKind::adapter) {
        spec.adapter_bottleneck = dim;
    } else {
        spec.lora_rank = dim;
    }
    spec.validate();

    Model base(ckpt.spec);
    Model model(spec);
    auto& params = model.mutable_params();

    // theta0 carries over by (group, shape); new segments start at the
    // output-equivalent point (up-projection / B at zero).
    std::map<std::string, int> base_offsets;
    {
        std::size_t bi = 0;
        for (const auto& bseg : base.segments()) {
            base_offsets[bseg.group + "#" + std::to_string(bi)] = bseg.offset;
            ++bi;
        }
    }
    // Base and augmented layouts list the shared segments in the same order.
    std::size_t bi = 0;
    const auto& base_segs = base.segments();
    Rng rng(seed);
    int adapter_piece = 0;
    for (const auto& seg : model.segments()) {
        const bool shared = seg.kind == ParamKind::weight || seg.kind == ParamKind::bias;
        if (shared) {
            const auto& bseg = base_segs[bi++];
            std::copy_n(ckpt.theta0.begin() + bseg.offset, bseg.size, params.begin() + seg.offset);
        } else if (seg.kind == ParamKind::adapter) {
            init_segment(params, seg, rng, !randomly_initialized(seg, adapter_piece));
            adapter_piece = (adapter_piece + 1) % 4;
        } else {
            init_segment(params, seg, rng, !randomly_initialized(seg, 0));
        }
    }
    return model;
}

std::vector<double> flatten_params(const Model& model) { return model.params(); }

void unflatten_params(Model& model, const std::vector<double>& v) {
    if (v.size() != model.params().size()) {
        throw DimMismatch("unflatten_params: got " + std::to_string(v.size()) + " values for " +
                          std::to_string(model.params().size()) + " parameters");
    }
    model.mutable_params() = v;
}

std::map<std::string, std::vector<int>> param_groups(const Model& model) {
    std::map<std::string, std::vector<int>> groups;
    for (const auto& seg : model.segments()) {
        auto& idx = groups[seg.group];
        for (int i = 0; i < seg.size; ++i) idx.push_back(seg.offset + i);
    }
    return groups;
}

std::vector<int> indices_of_kind(const Model& model, ParamKind kind) {
    std::vector<int> idx;
    for (const auto& seg : model.segments()) {
        if (seg.kind != kind) continue;
        for (int i = 0; i < seg.size; ++i) idx.push_back(seg.offset + i);
    }
    return idx;
}

std::vector<int> head_indices(const Model& model) {
    std::vector<int> idx;
    for (const auto& seg : model.segments()) {
        if (seg.layer != -1) continue;
        for (int i = 0; i < seg.size; ++i) idx.push_back(seg.offset + i);
    }
    return idx;
}

std::vector<int> body_indices(const Model& model) {
    std::vector<int> idx;
    for (const auto& seg : model.segments()) {
        if (seg.layer == -1) continue;
        for (int i = 0; i < seg.size; ++i) idx.push_back(seg.offset + i);
    }
    return idx;
}

std::vector<int> augmentation_indices(const Model& model) {
    std::vector<int> idx;
    for (const auto& seg : model.segments()) {
        if (seg.kind != ParamKind::adapter && seg.kind != ParamKind::lora_a &&
            seg.kind != ParamKind::lora_b)
            continue;
        for (int i = 0; i < seg.size; ++i) idx.push_back(seg.offset + i);
    }
    return idx;
}

void reinit_head(Model& model, std::uint64_t seed) {
    Rng rng(seed);
    auto& params = model.mutable_params();
    for (const auto& seg : model.segments()) {
        if (seg.layer != -1) continue;
        init_segment(params, seg, rng, seg.kind != ParamKind::weight);
    }
}

Checkpoint make_checkpoint(const Model& model, std::uint64_t seed) {
    Checkpoint ckpt;
    ckpt.spec = model.spec();
    ckpt.theta0 = model.params();
    ckpt.seed = seed;
    const std::string cfg = nlohmann::json(model.spec()).dump() + ":" + std::to_string(seed);
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a(cfg.data(), cfg.size())));
    ckpt.digest = buf;
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    nlohmann::json header = {
        {"format", "sparseft-ckpt-v1"},
        {"spec", ckpt.spec},
        {"seed", ckpt.seed},
        {"digest", ckpt.digest},
        {"param_count", ckpt.theta0.size()},
    };
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << header.dump() << "\n";
    std::vector<unsigned char> bytes(ckpt.theta0.size() * 8);
    for (std::size_t i = 0; i < ckpt.theta0.size(); ++i) {
        std::uint64_t u = 0;
        std::memcpy(&u, &ckpt.theta0[i], 8);
        for (int b = 0; b < 8; ++b) bytes[i * 8 + static_cast<std::size_t>(b)] = static_cast<unsigned char>((u >> (8 * b)) & 0xff);
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("short write to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("missing checkpoint header in " + path);
    nlohmann::json header = nlohmann::json::parse(line);
    if (header.value("format", "") != "sparseft-ckpt-v1") {
        throw std::runtime_error("unsupported checkpoint format in " + path);
    }
    Checkpoint ckpt;
    ckpt.spec = header.at("spec").get<ModelSpec>();
    ckpt.seed = header.at("seed").get<std::uint64_t>();
    ckpt.digest = header.value("digest", "");
    const std::size_t m = header.at("param_count").get<std::size_t>();
    std::vector<unsigned char> bytes(m * 8);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<std::size_t>(in.gcount()) != bytes.size()) {
        throw std::runtime_error("truncated checkpoint payload in " + path);
    }
    ckpt.theta0.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        std::uint64_t u = 0;
        for (int b = 0; b < 8; ++b) u |= static_cast<std::uint64_t>(bytes[i * 8 + static_cast<std::size_t>(b)]) << (8 * b);
        std::memcpy(&ckpt.theta0[i], &u, 8);
    }
    ckpt.spec.validate();
    if (static_cast<int>(m) != ckpt.spec.param_count()) {
        throw DimMismatch("checkpoint payload size disagrees with spec");
    }
    return ckpt;
}

}  // namespace sparseft
