#include "sparseft/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <thread>
#include <tuple>

#include "sparseft/json_io.hpp"
#include "sparseft/rng.hpp"
#include "sparseft/stats.hpp"

namespace fs = std::filesystem;

namespace sparseft {

std::string to_string(MatrixMode m) {
    switch (m) {
        case MatrixMode::main: return "main";
        case MatrixMode::data_perturbation: return "data_perturbation";
        case MatrixMode::sparsity_sweep: return "sparsity_sweep";
        case MatrixMode::stability: return "stability";
    }
    return "main";
}

MatrixMode mode_from_string(const std::string& s) {
    for (MatrixMode m : {MatrixMode::main, MatrixMode::data_perturbation,
                         MatrixMode::sparsity_sweep, MatrixMode::stability}) {
        if (to_string(m) == s) return m;
    }
    throw InvalidSpec("unknown matrix mode: " + s);
}

std::string format_g6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

void ExperimentConfig::validate() const {
    if (tasks.empty()) throw InvalidSpec("experiment: no tasks");
    if (strategies.empty()) throw InvalidSpec("experiment: no strategies");
    if (seeds.empty()) throw InvalidSpec("experiment: no seeds");
    if (sparsities.empty()) throw InvalidSpec("experiment: no sparsities");
    std::set<std::uint64_t> uniq(seeds.begin(), seeds.end());
    if (uniq.size() != seeds.size()) throw InvalidSpec("experiment: seeds must be distinct");
    if (workers < 1) throw InvalidSpec("experiment: workers must be >= 1");
    for (const auto& t : tasks) t.validate();
    train.validate();
}

std::string Cell::stem() const {
    return task + "_" + to_string(strategy) + "_" + format_g6(p) + "_" + std::to_string(seed);
}

Checkpoint pretrain_checkpoint(const TaskSpec& task, const ModelSpec& model,
                               const TrainConfig& cfg) {
    TaskData data = synth_task(task);
    const int n = data.pretrain.size();
    int dev_n = std::max(1, n / 10);
    if (dev_n >= n) dev_n = n - 1 > 0 ? n - 1 : 1;

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(splitmix64(task.seed ^ 0x99e7ea11ull));
    rng.shuffle(order);
    std::vector<int> train_rows(order.begin(), order.end() - dev_n);
    std::vector<int> dev_rows(order.end() - dev_n, order.end());
    std::sort(train_rows.begin(), train_rows.end());
    std::sort(dev_rows.begin(), dev_rows.end());

    SplitData splits;
    splits.train = data.pretrain.select(train_rows);
    splits.dev = data.pretrain.select(dev_rows);
    splits.test = splits.dev;

    const Checkpoint init = make_checkpoint(build_model(model, task.seed), task.seed);
    StrategyConfig full;
    full.variant = StrategyKind::random;
    full.p = 1.0;
    full.seed = cfg.seed;
    RunReport run = train(init, full, splits, cfg, task.name + "_pretrain");

    Model trained = model_for_run(init, full, cfg);
    trained.mutable_params() = run.final_params;
    return make_checkpoint(trained, task.seed);
}

namespace {

CellOutcome execute_cell(const Checkpoint& ckpt, const Cell& cell, const TaskSpec& tspec,
                         const ExperimentConfig& cfg) {
    CellOutcome out;
    out.cell = cell;

    TaskData data = synth_task(tspec);
    StrategyConfig strat = cfg.strategy_defaults;
    strat.variant = cell.strategy;
    strat.p = cell.p;
    strat.seed = cell.seed;
    TrainConfig tc = cfg.train;
    tc.seed = cell.seed;

    switch (cell.mode) {
        case MatrixMode::main:
        case MatrixMode::sparsity_sweep: {
            out.run = train(ckpt, strat, data.downstream, tc, cell.task);
            break;
        }
        case MatrixMode::data_perturbation: {
            SplitData perturbed = data.downstream;
            perturbed.train = perturbed_datasets(data.downstream.train, 1, cfg.drop_fraction,
                                                 splitmix64(tspec.seed ^ cell.seed))[0];
            out.run = train(ckpt, strat, perturbed, tc, cell.task);
            break;
        }
        case MatrixMode::stability: {
            const int n = data.downstream.train.size();
            std::vector<int> indices;
            if (cfg.phs_full || cfg.phs_samples >= n) {
                indices.resize(static_cast<std::size_t>(n));
                std::iota(indices.begin(), indices.end(), 0);
            } else {
                Rng rng(splitmix64(cell.seed ^ 0x9e5a3b1eull));
                indices = rng.sample_without_replacement(n, cfg.phs_samples);
            }
            out.stab = phs_estimate(ckpt, strat, data.downstream, tc, indices, cfg.delta, cell.task);
            out.has_stab = true;
            break;
        }
    }
    out.ok = true;
    return out;
}

void persist_outcome(const CellOutcome& out, const fs::path& path) {
    nlohmann::json j;
    if (!out.ok) {
        j["format"] = "sparseft-run-v1";
        j["error"] = out.error;
        j["cell"] = {{"task", out.cell.task},
                     {"strategy", to_string(out.cell.strategy)},
                     {"p", out.cell.p},
                     {"seed", out.cell.seed},
                     {"mode", to_string(out.cell.mode)}};
    } else if (out.has_stab) {
        j = out.stab;
    } else {
        j = out.run;
    }
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp);
        if (!f) throw std::runtime_error("cannot write " + tmp.string());
        f << j.dump(1) << "\n";
    }
    fs::rename(tmp, path);
}

CellOutcome load_outcome(const Cell& cell, const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read " + path.string());
    nlohmann::json j = nlohmann::json::parse(f);
    CellOutcome out;
    out.cell = cell;
    if (j.contains("error")) {
        out.ok = false;
        out.error = j.at("error").get<std::string>();
        return out;
    }
    out.ok = true;
    if (j.value("format", "") == "sparseft-stab-v1") {
        out.stab = j.get<StabilityReport>();
        out.has_stab = true;
    } else {
        out.run = j.get<RunReport>();
    }
    return out;
}

}  // namespace

std::vector<CellOutcome> run_matrix(const ExperimentConfig& cfg, int max_cells) {
    cfg.validate();
    const Checkpoint ckpt = load_checkpoint(cfg.checkpoint);

    std::map<std::string, TaskSpec> task_by_name;
    for (const auto& t : cfg.tasks) task_by_name[t.name] = t;

    std::vector<Cell> cells;
    for (const auto& task : cfg.tasks) {
        for (StrategyKind strategy : cfg.strategies) {
            for (double p : cfg.sparsities) {
                for (std::uint64_t seed : cfg.seeds) {
                    cells.push_back({task.name, strategy, p, seed, cfg.mode});
                }
            }
        }
    }
    const int limit = max_cells >= 0 ? std::min<int>(max_cells, static_cast<int>(cells.size()))
                                     : static_cast<int>(cells.size());

    const fs::path runs_dir = fs::path(cfg.output_dir) / "runs" / to_string(cfg.mode);
    fs::create_directories(runs_dir);

    std::vector<CellOutcome> outcomes(static_cast<std::size_t>(limit));
    std::atomic<int> next{0};
    auto worker = [&] {
        while (true) {
            const int i = next.fetch_add(1);
            if (i >= limit) break;
            const Cell& cell = cells[static_cast<std::size_t>(i)];
            const fs::path path = runs_dir / (cell.stem() + ".json");
            if (fs::exists(path)) {
                outcomes[static_cast<std::size_t>(i)] = load_outcome(cell, path);
                continue;
            }
            CellOutcome out;
            try {
                out = execute_cell(ckpt, cell, task_by_name.at(cell.task), cfg);
            } catch (const std::exception& e) {
                out.cell = cell;
                out.ok = false;
                out.error = e.what();
            }
            persist_outcome(out, path);
            outcomes[static_cast<std::size_t>(i)] = out;
        }
    };

    const int nthreads = std::max(1, std::min(cfg.workers, limit));
    if (nthreads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(nthreads));
        for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    return outcomes;
}

namespace {

struct GroupStats {
    std::vector<double> test_metric;
    std::vector<double> train_loss;
    std::vector<double> dev_loss;
    std::vector<double> test_loss;
};

using GroupKey = std::tuple<std::string, double, std::string>;  // task, p, strategy

void write_series(const std::vector<CellOutcome>& outcomes, const ExperimentConfig& cfg) {
    const fs::path dir = fs::path(cfg.output_dir) / "series";
    fs::create_directories(dir);
    for (const auto& out : outcomes) {
        if (!out.ok || out.has_stab) continue;
        const fs::path path = dir / (to_string(out.cell.mode) + "_" + out.cell.stem() + ".tsv");
        std::ofstream f(path);
        f << "step\tloss\n";
        for (const auto& c : out.run.curves) f << c.step << "\t" << format_g6(c.train_loss) << "\n";
    }
}

void emit_stability(const std::vector<CellOutcome>& outcomes, const ExperimentConfig& cfg) {
    std::vector<const CellOutcome*> rows;
    for (const auto& out : outcomes) {
        if (out.ok && out.has_stab) rows.push_back(&out);
    }
    if (rows.empty()) throw NoData("no successful stability cells");
    std::sort(rows.begin(), rows.end(), [](const CellOutcome* a, const CellOutcome* b) {
        return std::tie(a->stab.task, a->stab.p, a->stab.strategy, a->stab.seed) <
               std::tie(b->stab.task, b->stab.p, b->stab.strategy, b->stab.seed);
    });

    std::ofstream f(fs::path(cfg.output_dir) / "stability.csv");
    f << "task,strategy,p,seed,phs_empirical,phs_bound,gen_bound,train_risk01,test_risk01,"
         "test_metric,rho\n";
    int contained = 0;
    for (const auto* r : rows) {
        const auto& s = r->stab;
        f << s.task << "," << s.strategy << "," << format_g6(s.p) << "," << s.seed << ","
          << format_g6(s.phs_empirical) << "," << format_g6(s.phs_bound_value) << ","
          << format_g6(s.gen_bound_value) << "," << format_g6(s.train_risk01) << ","
          << format_g6(s.test_risk01) << "," << format_g6(s.test_metric) << ","
          << format_g6(s.bound_inputs.rho) << "\n";
        if (s.test_risk01 <= s.gen_bound_value) ++contained;
    }
    nlohmann::json stats = {
        {"cells", rows.size()},
        {"containment_fraction", static_cast<double>(contained) / static_cast<double>(rows.size())},
    };
    std::ofstream sf(fs::path(cfg.output_dir) / "stats.json");
    sf << stats.dump(2) << "\n";
}

}  // namespace

void emit_report(const std::vector<CellOutcome>& outcomes, const ExperimentConfig& cfg) {
    fs::create_directories(cfg.output_dir);
    if (cfg.mode == MatrixMode::stability) {
        emit_stability(outcomes, cfg);
        return;
    }

    std::map<GroupKey, GroupStats> groups;
    for (const auto& out : outcomes) {
        if (!out.ok || out.has_stab) continue;
        auto& g = groups[{out.cell.task, out.cell.p, to_string(out.cell.strategy)}];
        g.test_metric.push_back(out.run.final_test.metric);
        g.train_loss.push_back(out.run.final_train.loss);
        g.dev_loss.push_back(out.run.final_dev.loss);
        g.test_loss.push_back(out.run.final_test.loss);
    }
    if (groups.empty()) throw NoData("no successful runs to report");

    // per-(task, p) ranks: performance by mean descending, stability by std ascending
    std::map<GroupKey, std::pair<double, double>> ranks;  // perf, stability
    std::map<std::pair<std::string, double>, std::vector<GroupKey>> columns;
    for (const auto& [key, g] : groups) {
        columns[{std::get<0>(key), std::get<1>(key)}].push_back(key);
    }
    for (const auto& [col, keys] : columns) {
        std::vector<double> neg_means, stds;
        for (const auto& k : keys) {
            neg_means.push_back(-mean(groups[k].test_metric));
            stds.push_back(sample_std(groups[k].test_metric));
        }
        const std::vector<double> perf = average_ranks(neg_means);
        const std::vector<double> stab = average_ranks(stds);
        for (std::size_t i = 0; i < keys.size(); ++i) ranks[keys[i]] = {perf[i], stab[i]};
    }

    {
        std::ofstream f(fs::path(cfg.output_dir) / "summary.csv");
        f << "task,strategy,p,n_seeds,test_metric_mean,test_metric_std,perf_rank,stability_rank,"
             "train_loss_mean,train_loss_std,dev_loss_mean,test_loss_mean\n";
        for (const auto& [key, g] : groups) {
            const auto& [task, p, strategy] = key;
            f << task << "," << strategy << "," << format_g6(p) << "," << g.test_metric.size() << ","
              << format_g6(mean(g.test_metric)) << "," << format_g6(sample_std(g.test_metric)) << ","
              << format_g6(ranks[key].first) << "," << format_g6(ranks[key].second) << ","
              << format_g6(mean(g.train_loss)) << "," << format_g6(sample_std(g.train_loss)) << ","
              << format_g6(mean(g.dev_loss)) << "," << format_g6(mean(g.test_loss)) << "\n";
        }
    }

    {
        std::ofstream f(fs::path(cfg.output_dir) / "sweep.csv");
        f << "task,strategy,p,test_mean,test_std,train_mean,train_std,n_seeds\n";
        std::map<std::tuple<std::string, std::string, double>, const GroupStats*> by_p;
        for (const auto& [key, g] : groups) {
            by_p[{std::get<0>(key), std::get<2>(key), std::get<1>(key)}] = &g;
        }
        for (const auto& [key, g] : by_p) {
            f << std::get<0>(key) << "," << std::get<1>(key) << "," << format_g6(std::get<2>(key))
              << "," << format_g6(mean(g->test_metric)) << "," << format_g6(sample_std(g->test_metric))
              << "," << format_g6(mean(g->train_loss)) << "," << format_g6(sample_std(g->train_loss))
              << "," << g->test_metric.size() << "\n";
        }
    }

    write_series(outcomes, cfg);

    nlohmann::json stats;
    {
        std::vector<double> perf, stab;
        for (const auto& [key, r] : ranks) {
            perf.push_back(r.first);
            stab.push_back(r.second);
        }
        if (perf.size() >= 3) {
            const SpearmanResult sp = spearman(stab, perf);
            stats["spearman_stability_performance"] = {
                {"rho", sp.rho}, {"p_value", sp.p_value}, {"pairs", perf.size()}};
        } else {
            stats["spearman_stability_performance"] = nullptr;
        }
    }
    if (cfg.pooled_ranks) {
        // alternative: one rank per strategy from scores pooled over tasks
        std::map<std::string, std::vector<double>> pooled_means, pooled_stds;
        for (const auto& [key, g] : groups) {
            pooled_means[std::get<2>(key)].push_back(mean(g.test_metric));
            pooled_stds[std::get<2>(key)].push_back(sample_std(g.test_metric));
        }
        std::vector<double> neg_means, stds;
        for (const auto& [strategy, ms] : pooled_means) {
            neg_means.push_back(-mean(ms));
            stds.push_back(mean(pooled_stds[strategy]));
        }
        if (neg_means.size() >= 3) {
            const SpearmanResult sp = spearman(average_ranks(stds), average_ranks(neg_means));
            stats["spearman_pooled"] = {{"rho", sp.rho}, {"p_value", sp.p_value}};
        } else {
            stats["spearman_pooled"] = nullptr;
        }
    }
    {
        nlohmann::json welch = nlohmann::json::array();
        for (const auto& [col, keys] : columns) {
            const GroupKey sam_key{col.first, col.second, "sam"};
            auto it = groups.find(sam_key);
            if (it == groups.end() || it->second.test_metric.size() < 2) continue;
            for (const auto& k : keys) {
                if (std::get<2>(k) == "sam") continue;
                const auto& other = groups[k];
                if (other.test_metric.size() < 2) continue;
                const TTestResult t = welch_ttest(it->second.test_metric, other.test_metric);
                welch.push_back({{"task", col.first},
                                 {"p", col.second},
                                 {"strategy", std::get<2>(k)},
                                 {"t", t.t},
                                 {"p_value", t.p_value}});
            }
        }
        stats["welch_vs_sam"] = welch;
    }
    std::ofstream sf(fs::path(cfg.output_dir) / "stats.json");
    sf << stats.dump(2) << "\n";
}

ExperimentConfig reference_config() {
    ExperimentConfig cfg;
    TaskSpec task;
    task.name = "ref";
    task.input_dim = 8;
    task.classes = 3;
    task.n_pretrain = 1200;
    task.n_train = 240;
    task.n_test = 800;
    task.shift = 2.2;
    task.label_noise = 0.12;
    task.separation = 4.0;
    task.seed = 1;
    cfg.tasks = {task};

    cfg.model.input_dim = task.input_dim;
    cfg.model.hidden_dims = {64, 64};
    cfg.model.activation = Activation::tanh;
    cfg.model.head = HeadKind::classification;
    cfg.model.head_dim = task.classes;

    cfg.strategies = {StrategyKind::random,    StrategyKind::mixout,     StrategyKind::bitfit,
                      StrategyKind::magprune,  StrategyKind::adapter,    StrategyKind::lora,
                      StrategyKind::diffprune, StrategyKind::childprune, StrategyKind::sam};
    cfg.seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    cfg.sparsities = {0.005};

    cfg.train.optimizer = OptimizerKind::sgd;
    cfg.train.lr = 0.25;
    cfg.train.batch_size = 32;
    cfg.train.max_epochs = 120;
    cfg.train.early_stop_tolerance = 40;
    cfg.train.eval_every = 0;

    cfg.strategy_defaults.burn_in = 30;
    cfg.strategy_defaults.reproject_every = 60;
    cfg.strategy_defaults.full_steps = 120;
    cfg.strategy_defaults.adapter_bottleneck = 4;
    cfg.strategy_defaults.lora_rank = 2;

    cfg.workers = 2;
    return cfg;
}

}  // namespace sparseft
