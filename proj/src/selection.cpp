#include "sparseft/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace sparseft {

bool SparseMask::contains(int idx) const {
    return std::binary_search(tunable.begin(), tunable.end(), idx);
}

std::string to_string(StrategyKind k) {
    switch (k) {
        case StrategyKind::random: return "random";
        case StrategyKind::mixout: return "mixout";
        case StrategyKind::bitfit: return "bitfit";
        case StrategyKind::magprune: return "magprune";
        case StrategyKind::adapter: return "adapter";
        case StrategyKind::lora: return "lora";
        case StrategyKind::diffprune: return "diffprune";
        case StrategyKind::childprune: return "childprune";
        case StrategyKind::sam: return "sam";
    }
    return "random";
}

StrategyKind strategy_from_string(const std::string& s) {
    for (StrategyKind k : {StrategyKind::random, StrategyKind::mixout, StrategyKind::bitfit,
                           StrategyKind::magprune, StrategyKind::adapter, StrategyKind::lora,
                           StrategyKind::diffprune, StrategyKind::childprune, StrategyKind::sam}) {
        if (to_string(k) == s) return k;
    }
    throw InvalidSpec("unknown strategy: " + s);
}

void StrategyConfig::validate() const {
    if (!(p > 0.0) || p > 1.0) throw InvalidSpec("sparsity p must be in (0,1]");
    if (burn_in < 1) throw InvalidSpec("burn_in must be >= 1");
    if (reproject_every < 1) throw InvalidSpec("reproject_every must be >= 1");
    if (full_steps < 1) throw InvalidSpec("full_steps must be >= 1");
    if (variant == StrategyKind::adapter && adapter_bottleneck < 1) {
        throw InvalidSpec("adapter bottleneck must be >= 1");
    }
    if (variant == StrategyKind::lora && lora_rank < 1) throw InvalidSpec("lora rank must be >= 1");
}

int budget(int m, double p) {
    if (m < 1) throw InvalidSpec("budget: m must be >= 1");
    if (!(p > 0.0) || p > 1.0) throw InvalidSpec("budget: p must be in (0,1]");
    const int k = static_cast<int>(std::floor(static_cast<double>(m) * p));
    if (k == 0) throw ZeroBudget("floor(" + std::to_string(m) + " * " + std::to_string(p) + ") == 0");
    return k;
}

namespace {

SparseMask select_top_k(const std::vector<double>& scores, const std::vector<int>& candidates,
                        int k) {
    const int m = static_cast<int>(candidates.size());
    if (k > m) {
        throw BudgetExceedsDim("k=" + std::to_string(k) + " exceeds " + std::to_string(m));
    }
    std::vector<int> order(candidates);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const double sa = scores[static_cast<std::size_t>(a)];
        const double sb = scores[static_cast<std::size_t>(b)];
        if (sa != sb) return sa > sb;
        return a < b;
    });
    order.resize(static_cast<std::size_t>(k));
    std::sort(order.begin(), order.end());
    SparseMask mask;
    mask.tunable = std::move(order);
    mask.m = m;
    mask.k = k;
    return mask;
}

}  // namespace

SparseMask top_k_select(const ScoreVector& scores, int k) {
    for (double s : scores.scores) {
        if (!std::isfinite(s)) throw NonFiniteEvaluation("top_k_select: non-finite score");
    }
    std::vector<int> all(scores.scores.size());
    std::iota(all.begin(), all.end(), 0);
    return select_top_k(scores.scores, all, k);
}

SparseMask top_k_subset(const std::vector<double>& scores, const std::vector<int>& candidates,
                        int k) {
    return select_top_k(scores, candidates, k);
}

SparseMask project_l0(const std::vector<double>& diag_values, int k) {
    std::vector<int> all(diag_values.size());
    std::iota(all.begin(), all.end(), 0);
    SparseMask mask = select_top_k(diag_values, all, k);
    mask.strategy = "projection";
    return mask;
}

double surrogate_objective(double l0, const std::vector<double>& g, const std::vector<double>& h,
                           const SparseMask& mask) {
    if (g.size() != h.size()) throw DimMismatch("surrogate_objective: |g| != |h|");
    for (double hv : h) {
        if (!(hv > 0.0)) throw NonPositiveCurvature("surrogate_objective: h must be positive");
    }
    double drop = 0.0;
    for (int i : mask.tunable) {
        if (i < 0 || i >= static_cast<int>(g.size())) {
            throw DimMismatch("surrogate_objective: mask index out of range");
        }
        drop += g[static_cast<std::size_t>(i)] * g[static_cast<std::size_t>(i)] /
                (2.0 * h[static_cast<std::size_t>(i)]);
    }
    return l0 - drop;
}

std::pair<double, SparseMask> brute_force_mask(double l0, const std::vector<double>& g,
                                               const std::vector<double>& h, int k) {
    const int m = static_cast<int>(g.size());
    if (m > 20) throw TooLarge("brute_force_mask: m=" + std::to_string(m) + " > 20");
    if (g.size() != h.size()) throw DimMismatch("brute_force_mask: |g| != |h|");
    if (k > m) throw BudgetExceedsDim("brute_force_mask: k > m");
    for (double hv : h) {
        if (!(hv > 0.0)) throw NonPositiveCurvature("brute_force_mask: h must be positive");
    }

    std::vector<int> comb(static_cast<std::size_t>(k));
    std::iota(comb.begin(), comb.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> best_comb;
    while (true) {
        SparseMask mask;
        mask.tunable = comb;
        mask.m = m;
        mask.k = k;
        const double value = surrogate_objective(l0, g, h, mask);
        if (value < best) {
            best = value;
            best_comb = comb;
        }
        // next combination in lexicographic order
        int i = k - 1;
        while (i >= 0 && comb[static_cast<std::size_t>(i)] == m - k + i) --i;
        if (i < 0) break;
        ++comb[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < k; ++j) comb[static_cast<std::size_t>(j)] = comb[static_cast<std::size_t>(j - 1)] + 1;
    }
    SparseMask mask;
    mask.tunable = std::move(best_comb);
    mask.m = m;
    mask.k = k;
    mask.strategy = "brute_force";
    return {best, mask};
}

ScoreVector sam_scores(const Model& model_at_theta0, const Dataset& train, int burn_in,
                       int batch_size, std::uint64_t seed) {
    if (train.size() == 0) throw EmptyData("sam_scores: empty burn-in data");
    if (burn_in < 1) throw InvalidSpec("sam_scores: burn_in must be >= 1");

    const int n = train.size();
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);

    std::vector<double> grad_sum(static_cast<std::size_t>(model_at_theta0.param_count()), 0.0);
    std::vector<double> grad;
    int cursor = 0;
    for (int step = 0; step < burn_in; ++step) {
        if (cursor >= n) {
            cursor = 0;
            rng.shuffle(order);
        }
        const int take = std::min(batch_size, n - cursor);
        std::vector<int> rows(order.begin() + cursor, order.begin() + cursor + take);
        cursor += take;
        model_at_theta0.loss_and_grad(train, rows, grad);
        for (std::size_t i = 0; i < grad_sum.size(); ++i) grad_sum[i] += grad[i];
    }
    ScoreVector out;
    out.provenance = ScoreProvenance::sam_grad_sq;
    out.scores.resize(grad_sum.size());
    for (std::size_t i = 0; i < grad_sum.size(); ++i) out.scores[i] = grad_sum[i] * grad_sum[i];
    return out;
}

void StrategyState::set_trainable_from_mask() {
    trainable_ = mask_.tunable;
    for (int i : head_) trainable_.push_back(i);
    std::sort(trainable_.begin(), trainable_.end());
    trainable_.erase(std::unique(trainable_.begin(), trainable_.end()), trainable_.end());
}

bool StrategyState::update_due(int step) const {
    if (!initialized_) throw StateCorrupt("strategy state used before init_mask");
    if (cfg_.variant == StrategyKind::diffprune) return step % cfg_.reproject_every == 0;
    if (cfg_.variant == StrategyKind::childprune) return !projected_ && step == cfg_.full_steps;
    return false;
}

int StrategyState::final_mask_from_step() const {
    if (cfg_.variant == StrategyKind::childprune && !projected_) return cfg_.full_steps;
    return 0;
}

StrategyState init_mask(const StrategyConfig& cfg, const Model& start_model, const Dataset& train,
                        int batch_size, double step_size) {
    cfg.validate();
    StrategyState st;
    st.cfg_ = cfg;
    st.step_size_ = step_size;
    st.rng_ = Rng(splitmix64(cfg.seed ^ 0x5eedf00dull));
    st.head_ = cfg.head_in_budget ? std::vector<int>{} : head_indices(start_model);
    st.universe_ = cfg.head_in_budget ? [&] {
        std::vector<int> all(static_cast<std::size_t>(start_model.param_count()));
        std::iota(all.begin(), all.end(), 0);
        return all;
    }() : body_indices(start_model);

    const int mu = static_cast<int>(st.universe_.size());
    const auto& theta0 = start_model.params();

    switch (cfg.variant) {
        case StrategyKind::random: {
            const int k = budget(mu, cfg.p);
            std::vector<int> picks = st.rng_.sample_without_replacement(mu, k);
            SparseMask mask;
            for (int pos : picks) mask.tunable.push_back(st.universe_[static_cast<std::size_t>(pos)]);
            std::sort(mask.tunable.begin(), mask.tunable.end());
            mask.m = mu;
            mask.k = k;
            st.mask_ = std::move(mask);
            break;
        }
        case StrategyKind::mixout: {
            const int k = budget(mu, cfg.p);
            std::vector<int> picks = st.rng_.sample_without_replacement(mu, k);
            for (int pos : picks) st.mixout_keep_.push_back(st.universe_[static_cast<std::size_t>(pos)]);
            std::sort(st.mixout_keep_.begin(), st.mixout_keep_.end());
            st.mask_.tunable = st.mixout_keep_;
            st.mask_.m = mu;
            st.mask_.k = k;
            break;
        }
        case StrategyKind::bitfit: {
            // budget is overridden by the structural group size
            st.mask_.tunable = indices_of_kind(start_model, ParamKind::bias);
            st.mask_.m = mu;
            st.mask_.k = static_cast<int>(st.mask_.tunable.size());
            break;
        }
        case StrategyKind::magprune: {
            const int k = budget(mu, cfg.p);
            std::vector<double> mag(theta0.size());
            for (std::size_t i = 0; i < theta0.size(); ++i) mag[i] = std::fabs(theta0[i]);
            st.mask_ = top_k_subset(mag, st.universe_, k);
            break;
        }
        case StrategyKind::adapter:
        case StrategyKind::lora: {
            const AugmentKind want =
                cfg.variant == StrategyKind::adapter ? AugmentKind::adapter : AugmentKind::lora;
            if (start_model.spec().augmentation != want) {
                throw InvalidSpec("strategy " + to_string(cfg.variant) +
                                  " requires a matching equivalent model");
            }
            st.mask_.tunable = augmentation_indices(start_model);
            st.mask_.m = mu;
            st.mask_.k = static_cast<int>(st.mask_.tunable.size());
            break;
        }
        case StrategyKind::diffprune: {
            const int k = budget(mu, cfg.p);
            st.gates_.assign(theta0.size(), 0.0);
            st.shadow_.assign(theta0.size(), 0.0);
            // near-uniform gates; the jitter fixes a deterministic initial top-k
            for (int idx : st.universe_) {
                st.gates_[static_cast<std::size_t>(idx)] = 1.0 + 1e-3 * (st.rng_.uniform() - 0.5);
            }
            st.mask_ = top_k_subset(st.gates_, st.universe_, k);
            break;
        }
        case StrategyKind::childprune: {
            budget(mu, cfg.p);  // fail early on zero budgets
            st.grad_sq_accum_.assign(theta0.size(), 0.0);
            st.mask_.tunable = st.universe_;
            st.mask_.m = mu;
            st.mask_.k = mu;
            break;
        }
        case StrategyKind::sam: {
            const int k = budget(mu, cfg.p);
            if (train.size() == 0) throw EmptyData("sam: no burn-in data");
            ScoreVector scores = sam_scores(start_model, train, cfg.burn_in, batch_size, cfg.seed);
            st.mask_ = top_k_subset(scores.scores, st.universe_, k);
            break;
        }
    }

    st.mask_.p = cfg.p;
    st.mask_.strategy = to_string(cfg.variant);
    st.mask_.seed = cfg.seed;
    st.set_trainable_from_mask();
    if (cfg.variant == StrategyKind::mixout) {
        // train-then-reset: every parameter moves, the finish hook restores
        // the complement of the keep-mask to theta0
        st.trainable_.resize(theta0.size());
        std::iota(st.trainable_.begin(), st.trainable_.end(), 0);
    }
    st.initialized_ = true;
    return st;
}

std::optional<SparseMask> strategy_on_step(StrategyState& st, int step, std::vector<double>& theta,
                                           const std::vector<double>& theta0,
                                           const std::vector<double>& grads) {
    if (!st.initialized_) throw StateCorrupt("strategy_on_step called before init_mask");
    if (theta.size() != theta0.size() || grads.size() != theta.size()) {
        throw DimMismatch("strategy_on_step: vector sizes disagree");
    }

    switch (st.cfg_.variant) {
        case StrategyKind::mixout:
            if (st.cfg_.mixout_per_step) {
                for (int idx : st.universe_) {
                    if (st.rng_.uniform() < 1.0 - st.cfg_.p) {
                        theta[static_cast<std::size_t>(idx)] = theta0[static_cast<std::size_t>(idx)];
                    }
                }
            }
            return std::nullopt;
        case StrategyKind::diffprune: {
            for (int idx : st.universe_) {
                const auto i = static_cast<std::size_t>(idx);
                if (st.mask_.contains(idx)) {
                    st.shadow_[i] = theta[i] - theta0[i];
                } else {
                    st.shadow_[i] -= st.step_size_ * grads[i];  // straight-through path
                }
                st.gates_[i] -= st.step_size_ * grads[i] * st.shadow_[i];
            }
            if (step % st.cfg_.reproject_every != 0) return std::nullopt;
            st.mask_ = top_k_subset(st.gates_, st.universe_, st.mask_.k);
            st.mask_.p = st.cfg_.p;
            st.mask_.strategy = to_string(st.cfg_.variant);
            st.mask_.seed = st.cfg_.seed;
            for (int idx : st.universe_) {
                const auto i = static_cast<std::size_t>(idx);
                theta[i] = st.mask_.contains(idx) ? theta0[i] + st.shadow_[i] : theta0[i];
            }
            st.set_trainable_from_mask();
            return st.mask_;
        }
        case StrategyKind::childprune: {
            if (st.projected_) return std::nullopt;
            for (int idx : st.universe_) {
                const auto i = static_cast<std::size_t>(idx);
                st.grad_sq_accum_[i] += grads[i] * grads[i];
            }
            if (step != st.cfg_.full_steps) return std::nullopt;
            const int k = budget(static_cast<int>(st.universe_.size()), st.cfg_.p);
            st.mask_ = top_k_subset(st.grad_sq_accum_, st.universe_, k);
            st.mask_.p = st.cfg_.p;
            st.mask_.strategy = to_string(st.cfg_.variant);
            st.mask_.seed = st.cfg_.seed;
            // child network keeps its probe-phase progress; the rest returns to theta0
            for (int idx : st.universe_) {
                if (!st.mask_.contains(idx)) theta[static_cast<std::size_t>(idx)] = theta0[static_cast<std::size_t>(idx)];
            }
            st.projected_ = true;
            st.set_trainable_from_mask();
            return st.mask_;
        }
        default:
            return std::nullopt;
    }
}

bool strategy_on_finish(StrategyState& st, std::vector<double>& theta,
                        const std::vector<double>& theta0) {
    if (!st.initialized_) throw StateCorrupt("strategy_on_finish called before init_mask");
    switch (st.cfg_.variant) {
        case StrategyKind::mixout: {
            bool changed = false;
            for (int idx : st.universe_) {
                if (st.mask_.contains(idx)) continue;
                const auto i = static_cast<std::size_t>(idx);
                if (theta[i] != theta0[i]) changed = true;
                theta[i] = theta0[i];
            }
            return changed;
        }
        case StrategyKind::childprune: {
            if (st.projected_) return false;
            const int k = budget(static_cast<int>(st.universe_.size()), st.cfg_.p);
            st.mask_ = top_k_subset(st.grad_sq_accum_, st.universe_, k);
            st.mask_.p = st.cfg_.p;
            st.mask_.strategy = to_string(st.cfg_.variant);
            st.mask_.seed = st.cfg_.seed;
            for (int idx : st.universe_) {
                if (!st.mask_.contains(idx)) theta[static_cast<std::size_t>(idx)] = theta0[static_cast<std::size_t>(idx)];
            }
            st.projected_ = true;
            st.set_trainable_from_mask();
            return true;
        }
        default:
            return false;
    }
}

}  // namespace sparseft
