#include "sparseft/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sparseft/rng.hpp"

namespace sparseft {

void TaskSpec::validate() const {
    if (input_dim < 1) throw InvalidSpec("task: input_dim must be >= 1");
    if (classes < 2) throw InvalidSpec("task: need at least 2 classes");
    if (n_pretrain < 1 || n_train < 1 || n_test < 1) throw InvalidSpec("task: counts must be >= 1");
    if (shift < 0.0) throw InvalidSpec("task: shift must be >= 0");
    if (label_noise < 0.0 || label_noise >= 1.0) throw InvalidSpec("task: label_noise must be in [0,1)");
    if (separation < 0.0) throw InvalidSpec("task: separation must be >= 0");
}

namespace {

std::vector<double> base_means(const TaskSpec& spec) {
    Rng rng(splitmix64(spec.seed ^ 0x6ea5ull));
    std::vector<double> means(static_cast<std::size_t>(spec.classes) * spec.input_dim);
    for (int c = 0; c < spec.classes; ++c) {
        double norm = 0.0;
        std::vector<double> v(static_cast<std::size_t>(spec.input_dim));
        for (double& x : v) {
            x = rng.normal();
            norm += x * x;
        }
        norm = std::sqrt(norm);
        for (int j = 0; j < spec.input_dim; ++j) {
            means[static_cast<std::size_t>(c * spec.input_dim + j)] =
                norm > 0.0 ? spec.separation * v[static_cast<std::size_t>(j)] / norm : 0.0;
        }
    }
    return means;
}

std::vector<double> shifted_means(const TaskSpec& spec) {
    std::vector<double> means = base_means(spec);
    if (spec.shift == 0.0) return means;

    Rng rng(splitmix64(spec.seed ^ 0x541f7ull));
    const int d = spec.input_dim;

    // orthonormal 2-plane (u, v) by Gram-Schmidt over seeded normals
    std::vector<double> u(static_cast<std::size_t>(d)), v(static_cast<std::size_t>(d));
    double nu = 0.0;
    for (double& x : u) {
        x = rng.normal();
        nu += x * x;
    }
    nu = std::sqrt(nu);
    for (double& x : u) x /= nu;
    double dot = 0.0, nv = 0.0;
    for (int j = 0; j < d; ++j) {
        v[static_cast<std::size_t>(j)] = rng.normal();
        dot += v[static_cast<std::size_t>(j)] * u[static_cast<std::size_t>(j)];
    }
    for (int j = 0; j < d; ++j) {
        v[static_cast<std::size_t>(j)] -= dot * u[static_cast<std::size_t>(j)];
        nv += v[static_cast<std::size_t>(j)] * v[static_cast<std::size_t>(j)];
    }
    nv = std::sqrt(nv);
    if (nv > 0.0) {
        for (double& x : v) x /= nv;
    }

    std::vector<double> t(static_cast<std::size_t>(d));
    double nt = 0.0;
    for (double& x : t) {
        x = rng.normal();
        nt += x * x;
    }
    nt = std::sqrt(nt);

    const double cs = std::cos(spec.shift) - 1.0;
    const double sn = std::sin(spec.shift);
    for (int c = 0; c < spec.classes; ++c) {
        double* m = &means[static_cast<std::size_t>(c * d)];
        double mu = 0.0, mv = 0.0;
        for (int j = 0; j < d; ++j) {
            mu += m[j] * u[static_cast<std::size_t>(j)];
            mv += m[j] * v[static_cast<std::size_t>(j)];
        }
        for (int j = 0; j < d; ++j) {
            // rotation in span(u, v) plus translation by shift
            m[j] += cs * (mu * u[static_cast<std::size_t>(j)] + mv * v[static_cast<std::size_t>(j)]) +
                    sn * (mu * v[static_cast<std::size_t>(j)] - mv * u[static_cast<std::size_t>(j)]);
            if (nt > 0.0) m[j] += spec.shift * t[static_cast<std::size_t>(j)] / nt;
        }
    }
    return means;
}

Dataset sample_mixture(const TaskSpec& spec, const std::vector<double>& means, int n,
                       double label_noise, Rng& rng) {
    Dataset d;
    d.classification = true;
    d.input_dim = spec.input_dim;
    d.x.reserve(static_cast<std::size_t>(n) * spec.input_dim);
    d.labels.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int c = rng.uniform_int(spec.classes);
        for (int j = 0; j < spec.input_dim; ++j) {
            d.x.push_back(means[static_cast<std::size_t>(c * spec.input_dim + j)] + rng.normal());
        }
        int label = c;
        if (label_noise > 0.0 && rng.uniform() < label_noise) {
            label = (c + 1 + rng.uniform_int(spec.classes - 1)) % spec.classes;
        }
        d.labels.push_back(label);
    }
    return d;
}

}  // namespace

std::vector<double> task_means_pretrain(const TaskSpec& spec) { return base_means(spec); }

std::vector<double> task_means_downstream(const TaskSpec& spec) { return shifted_means(spec); }

TaskData synth_task(const TaskSpec& spec) {
    spec.validate();
    TaskData out;

    Rng pre_rng(splitmix64(spec.seed ^ 0x9e7a11ull));
    out.pretrain = sample_mixture(spec, base_means(spec), spec.n_pretrain, 0.0, pre_rng);

    Rng down_rng(splitmix64(spec.seed ^ 0xd05713ull));
    const std::vector<double> means = shifted_means(spec);
    Dataset pool = sample_mixture(spec, means, spec.n_train, spec.label_noise, down_rng);
    out.downstream.test = sample_mixture(spec, means, spec.n_test, spec.label_noise, down_rng);

    // 10% of the training pool becomes the development set
    const int n = pool.size();
    int dev_n = n / 10;
    if (dev_n == 0 && n >= 2) dev_n = 1;
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng split_rng(splitmix64(spec.seed ^ 0x5b117ull));
    split_rng.shuffle(order);
    std::vector<int> train_rows(order.begin(), order.end() - dev_n);
    std::vector<int> dev_rows(order.end() - dev_n, order.end());
    std::sort(train_rows.begin(), train_rows.end());
    std::sort(dev_rows.begin(), dev_rows.end());
    out.downstream.train = pool.select(train_rows);
    out.downstream.dev = pool.select(dev_rows);
    return out;
}

std::vector<Dataset> perturbed_datasets(const Dataset& train, int count, double drop_fraction,
                                        std::uint64_t seed) {
    if (!(drop_fraction > 0.0) || drop_fraction >= 1.0) {
        throw InvalidFraction("drop_fraction must be in (0,1)");
    }
    if (count < 1) throw InvalidSpec("perturbed_datasets: count must be >= 1");
    const int n = train.size();
    if (n == 0) throw EmptyData("perturbed_datasets: empty training set");
    const int keep = static_cast<int>(std::ceil((1.0 - drop_fraction) * n));

    Rng rng(seed);
    std::vector<Dataset> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        Rng sub = rng.fork(static_cast<std::uint64_t>(i));
        out.push_back(train.select(sub.sample_without_replacement(n, keep)));
    }
    return out;
}

}  // namespace sparseft
