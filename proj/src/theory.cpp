#include "sparseft/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sparseft/rng.hpp"

namespace sparseft {

void BoundInputs::validate() const {
    if (rho < 0.0) throw InvalidSpec("bound inputs: rho must be >= 0");
    if (!(C > 0.0)) throw InvalidSpec("bound inputs: C must be positive");
    if (n < 1) throw InvalidSpec("bound inputs: n must be >= 1");
    if (!(p > 0.0) || p > 1.0) throw InvalidSpec("bound inputs: p must be in (0,1]");
    if (!(delta > 0.0) || delta >= 1.0) throw InvalidSpec("bound inputs: delta must be in (0,1)");
}

double phs_bound(const BoundInputs& in) {
    in.validate();
    const double denom = (in.lambda_min + 2.0 * (1.0 - in.p)) * in.n;
    if (denom <= 0.0) return std::numeric_limits<double>::infinity();
    return 2.0 * in.rho * in.rho / denom;
}

double gen_bound(double r_hat, const BoundInputs& in, double beta) {
    in.validate();
    if (r_hat < 0.0) throw InvalidSpec("gen_bound: empirical risk must be >= 0");
    if (beta < 0.0) throw InvalidSpec("gen_bound: beta must be >= 0");
    return r_hat + std::sqrt((in.C * in.C + 12.0 * in.C * in.n * beta) / (2.0 * in.n * in.delta));
}

double expected_regularizer_mc(const std::vector<double>& theta,
                               const std::vector<double>& theta0, double p, int trials,
                               std::uint64_t seed) {
    if (theta.size() != theta0.size()) throw DimMismatch("expected_regularizer_mc: size mismatch");
    if (trials < 1) throw InvalidSpec("expected_regularizer_mc: trials must be >= 1");
    const int m = static_cast<int>(theta.size());
    const int k = budget(m, p);

    std::vector<double> sq(theta.size());
    double total_sq = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double d = theta[i] - theta0[i];
        sq[i] = d * d;
        total_sq += sq[i];
    }

    Rng rng(seed);
    double acc = 0.0;
    for (int t = 0; t < trials; ++t) {
        double kept = 0.0;
        for (int idx : rng.sample_without_replacement(m, k)) kept += sq[static_cast<std::size_t>(idx)];
        acc += total_sq - kept;
    }
    return acc / trials;
}

std::vector<double> hessian_diag_fd(const ag::ScalarFn& f, std::vector<double> theta, double h) {
    const int m = static_cast<int>(theta.size());
    if (m > 500) throw TooLarge("hessian_diag_fd: m > 500");
    if (!(h > 0.0)) throw std::invalid_argument("hessian_diag_fd: h must be positive");
    const double f0 = f(theta);
    if (!std::isfinite(f0)) throw NonFiniteEvaluation("hessian_diag_fd: f(theta) non-finite");
    std::vector<double> diag(theta.size());
    for (int i = 0; i < m; ++i) {
        const auto ii = static_cast<std::size_t>(i);
        const double orig = theta[ii];
        theta[ii] = orig + h;
        const double fp = f(theta);
        theta[ii] = orig - h;
        const double fm = f(theta);
        theta[ii] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw NonFiniteEvaluation("hessian_diag_fd: probe non-finite");
        }
        diag[ii] = (fp - 2.0 * f0 + fm) / (h * h);
    }
    return diag;
}

namespace {

// Cyclic Jacobi eigenvalue iteration for small symmetric matrices; precise
// enough that the Rayleigh upper bound never under-reports |lambda_max|.
std::vector<double> symmetric_eigenvalues(std::vector<double> a, int m) {
    auto at = [&](int i, int j) -> double& { return a[static_cast<std::size_t>(i * m + j)]; };
    double scale = 0.0;
    for (double v : a) scale = std::max(scale, std::fabs(v));
    if (scale == 0.0) return std::vector<double>(static_cast<std::size_t>(m), 0.0);

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < m; ++i)
            for (int j = i + 1; j < m; ++j) off += at(i, j) * at(i, j);
        if (off <= 1e-300 || std::sqrt(off) <= 1e-15 * scale * m) break;
        for (int p = 0; p < m; ++p) {
            for (int q = p + 1; q < m; ++q) {
                const double apq = at(p, q);
                if (std::fabs(apq) <= 1e-18 * scale) continue;
                const double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int i = 0; i < m; ++i) {
                    const double aip = at(i, p);
                    const double aiq = at(i, q);
                    at(i, p) = c * aip - s * aiq;
                    at(i, q) = s * aip + c * aiq;
                }
                for (int j = 0; j < m; ++j) {
                    const double apj = at(p, j);
                    const double aqj = at(q, j);
                    at(p, j) = c * apj - s * aqj;
                    at(q, j) = s * apj + c * aqj;
                }
            }
        }
    }
    std::vector<double> eig(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) eig[static_cast<std::size_t>(i)] = at(i, i);
    return eig;
}

}  // namespace

double spectral_radius(const std::vector<double>& h_flat, int dim) {
    const int m = dim;
    if (static_cast<int>(h_flat.size()) != m * m) throw DimMismatch("spectral_radius: bad matrix size");
    double radius = 0.0;
    for (double v : symmetric_eigenvalues(h_flat, m)) radius = std::max(radius, std::fabs(v));
    return radius;
}

double lambda_min_fd(const ag::ScalarFn& f, std::vector<double> theta, double h) {
    const int m = static_cast<int>(theta.size());
    if (m > 60) throw TooLarge("lambda_min_fd: m > 60");
    if (!(h > 0.0)) throw std::invalid_argument("lambda_min_fd: h must be positive");

    auto probe = [&](int i, double di, int j, double dj) {
        theta[static_cast<std::size_t>(i)] += di;
        theta[static_cast<std::size_t>(j)] += dj;
        const double v = f(theta);
        theta[static_cast<std::size_t>(i)] -= di;
        theta[static_cast<std::size_t>(j)] -= dj;
        if (!std::isfinite(v)) throw NonFiniteEvaluation("lambda_min_fd: probe non-finite");
        return v;
    };

    std::vector<double> hess(static_cast<std::size_t>(m) * m, 0.0);
    const double f0 = f(theta);
    if (!std::isfinite(f0)) throw NonFiniteEvaluation("lambda_min_fd: f(theta) non-finite");
    for (int i = 0; i < m; ++i) {
        hess[static_cast<std::size_t>(i * m + i)] =
            (probe(i, h, i, 0.0) - 2.0 * f0 + probe(i, -h, i, 0.0)) / (h * h);
        for (int j = i + 1; j < m; ++j) {
            const double v = (probe(i, h, j, h) - probe(i, h, j, -h) - probe(i, -h, j, h) +
                              probe(i, -h, j, -h)) /
                             (4.0 * h * h);
            hess[static_cast<std::size_t>(i * m + j)] = v;
            hess[static_cast<std::size_t>(j * m + i)] = v;
        }
    }

    double smallest = std::numeric_limits<double>::infinity();
    for (double v : symmetric_eigenvalues(hess, m)) smallest = std::min(smallest, v);
    return smallest;
}

RayleighCheck rayleigh_upperbound_check(const std::vector<double>& h_flat, int dim, int trials,
                                        std::uint64_t seed) {
    const int m = dim;
    if (m > 60) throw TooLarge("rayleigh_upperbound_check: dim > 60");
    if (static_cast<int>(h_flat.size()) != m * m) throw DimMismatch("rayleigh check: bad matrix size");
    double scale = 0.0;
    for (double v : h_flat) scale = std::max(scale, std::fabs(v));
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) {
            if (std::fabs(h_flat[static_cast<std::size_t>(i * m + j)] -
                          h_flat[static_cast<std::size_t>(j * m + i)]) > 1e-12 * (1.0 + scale)) {
                throw NotSymmetric("rayleigh_upperbound_check: matrix is not symmetric");
            }
        }

    RayleighCheck out;
    out.lambda_max_abs = spectral_radius(h_flat, m);
    Rng rng(seed);
    double worst = -std::numeric_limits<double>::infinity();
    for (int t = 0; t < trials; ++t) {
        std::vector<double> x(static_cast<std::size_t>(m));
        double nx = 0.0;
        do {
            nx = 0.0;
            for (double& v : x) {
                v = rng.normal();
                nx += v * v;
            }
        } while (nx == 0.0);
        double quad = 0.0;
        for (int i = 0; i < m; ++i) {
            double s = 0.0;
            for (int j = 0; j < m; ++j) s += h_flat[static_cast<std::size_t>(i * m + j)] * x[static_cast<std::size_t>(j)];
            quad += x[static_cast<std::size_t>(i)] * s;
        }
        worst = std::max(worst, quad - out.lambda_max_abs * nx);
    }
    out.max_violation = std::max(0.0, worst);
    out.ok = worst <= 1e-9;
    return out;
}

StabilityReport phs_estimate(const Checkpoint& ckpt, const StrategyConfig& strategy,
                             const SplitData& data, const TrainConfig& cfg,
                             const std::vector<int>& indices, double delta,
                             const std::string& task_name) {
    if (indices.empty()) throw EmptyData("phs_estimate: no sampled indices");
    const int n = data.train.size();
    for (int i : indices) {
        if (i < 0 || i >= n) throw DimMismatch("phs_estimate: sampled index out of range");
    }

    RunReport base = train(ckpt, strategy, data, cfg, task_name);
    Model base_model = model_for_run(ckpt, strategy, cfg);
    base_model.mutable_params() = base.final_params;

    StabilityReport rep;
    rep.task = task_name;
    rep.strategy = to_string(strategy.variant);
    rep.seed = cfg.seed;
    rep.p = strategy.p;
    rep.sampled_indices = indices;

    double rho = base.rho_estimate;
    for (int i : indices) {
        SplitData drop;
        drop.train = data.train.without_row(i);
        drop.dev = data.dev;
        drop.test = data.test;
        RunReport run_i = train(ckpt, strategy, drop, cfg, task_name);
        Model model_i = model_for_run(ckpt, strategy, cfg);
        model_i.mutable_params() = run_i.final_params;
        rho = std::max(rho, run_i.rho_estimate);

        const double d01 = std::fabs(per_sample_bounded01(model_i, data.train, i) -
                                     per_sample_bounded01(base_model, data.train, i));
        const double dtask = std::fabs(per_sample_loss(model_i, data.train, i) -
                                       per_sample_loss(base_model, data.train, i));
        rep.per_index_delta.push_back(d01);
        rep.per_index_delta_task.push_back(dtask);
    }

    double acc = 0.0;
    for (double d : rep.per_index_delta) acc += d;
    rep.phs_empirical = acc / static_cast<double>(rep.per_index_delta.size());

    rep.bound_inputs.rho = rho;
    rep.bound_inputs.lambda_min = 0.0;  // conservative PSD default
    rep.bound_inputs.C = 1.0;
    rep.bound_inputs.n = n;
    rep.bound_inputs.p = strategy.p;
    rep.bound_inputs.delta = delta;
    rep.phs_bound_value = phs_bound(rep.bound_inputs);
    rep.train_risk01 = base.final_train.bounded01;
    rep.test_risk01 = base.final_test.bounded01;
    rep.test_metric = base.final_test.metric;
    rep.train_loss = base.final_train.loss;
    rep.gen_bound_value = gen_bound(rep.train_risk01, rep.bound_inputs, rep.phs_empirical);
    return rep;
}

ProjectionDemoReport projection_discontinuity_demo(const Checkpoint& ckpt, const SplitData& data,
                                                   const TrainConfig& cfg,
                                                   const StrategyConfig& diffprune_cfg) {
    if (diffprune_cfg.variant != StrategyKind::diffprune) {
        throw InvalidSpec("projection demo requires the diffprune strategy");
    }
    ProjectionDemoReport rep;
    rep.flip_a = project_l0({0.99, 1.0}, 1);
    rep.flip_b = project_l0({1.0, 0.99}, 1);
    rep.flip_ok = rep.flip_a.tunable == std::vector<int>{1} && rep.flip_b.tunable == std::vector<int>{0};

    RunReport run = train(ckpt, diffprune_cfg, data, cfg, "projection_demo");
    rep.events = run.mask_change_events;
    rep.curve = run.curves;
    rep.final_train_loss = run.final_train.loss;
    rep.final_test_metric = run.final_test.metric;
    if (!rep.events.empty()) {
        int increased = 0;
        double jump = 0.0;
        for (const auto& e : rep.events) {
            if (e.loss_after > e.loss_before) ++increased;
            jump += e.loss_after - e.loss_before;
        }
        rep.increase_fraction = static_cast<double>(increased) / static_cast<double>(rep.events.size());
        rep.mean_jump = jump / static_cast<double>(rep.events.size());
    }
    return rep;
}

}  // namespace sparseft
