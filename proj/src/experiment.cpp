#include "uavafl/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "uavafl/errors.hpp"

namespace uavafl {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Hierarchical gradient aggregation: partial over-the-air sums are buffered
// while the UAV tours; the global model updates only once every device has
// contributed, then everyone receives the new model.
TrainingHistory run_hga_trial(const Scenario& scenario, const LearningTask& task,
                              const StrategyResult& strategy, const BoundParams& params,
                              std::uint64_t seed, bool record_models) {
    RunOptions options;
    options.params = params;
    options.seed = seed;
    TrainingEngine engine(scenario, task, options);

    const int m_count = scenario.device_count();
    const int k_count = scenario.num_slots;
    const int dim = task.dimension();
    const std::optional<double> f_star = task.optimal_value();

    TrainingHistory history;
    if (record_models) history.model_path.push_back(engine.model());
    std::vector<bool> contributed(m_count, false);
    std::vector<double> buffer(dim, 0.0);
    int contributed_count = 0;
    double nmse_sum = 0.0;
    int nmse_slots = 0;

    std::vector<int> everyone(m_count);
    for (int m = 0; m < m_count; ++m) everyone[m] = m;

    for (int k = 1; k <= k_count; ++k) {
        const Vec3 q = strategy.schedule.trajectory.positions[k];
        HistoryRow row;
        row.slot = k;
        row.loss = task.global_loss(engine.model());
        row.gap = f_star ? row.loss - *f_star : kNan;
        row.test_accuracy = task.test_accuracy(engine.model());
        row.nmse_db = kNan;

        std::vector<int> subset;
        for (int m = 0; m < m_count; ++m) {
            if (contributed[m] || !engine.ready(m)) continue;
            if (distance(q, scenario.devices[m].position) <= strategy.hga_threshold) {
                subset.push_back(m);
            }
        }
        if (!subset.empty()) {
            std::vector<double> amps(subset.size());
            for (std::size_t i = 0; i < subset.size(); ++i) {
                amps[i] = strategy.schedule.amplitudes[subset[i]][k - 1];
            }
            const AggregationResult agg = engine.transmit(subset, q, amps);
            const double weight = static_cast<double>(subset.size()) / m_count;
            for (int i = 0; i < dim; ++i) buffer[i] += weight * agg.estimate[i];
            for (int m : subset) {
                contributed[m] = true;
                ++contributed_count;
            }
            double truth = 0.0;
            for (double v : agg.true_mean) truth += v * v;
            if (truth > 0.0) {
                row.nmse_db = nmse_db(agg.estimate, agg.true_mean);
                nmse_sum += row.nmse_db;
                ++nmse_slots;
            }
        }
        row.n_selected = static_cast<int>(subset.size());

        if (contributed_count == m_count) {
            engine.apply_update(buffer, everyone);
            std::fill(contributed.begin(), contributed.end(), false);
            std::fill(buffer.begin(), buffer.end(), 0.0);
            contributed_count = 0;
        }
        engine.advance_slot();
        row.max_staleness = engine.max_staleness_seen();
        history.rows.push_back(row);
        if (record_models) history.model_path.push_back(engine.model());
    }

    HistoryRow last;
    last.slot = k_count + 1;
    last.loss = task.global_loss(engine.model());
    last.gap = f_star ? last.loss - *f_star : kNan;
    last.test_accuracy = task.test_accuracy(engine.model());
    last.nmse_db = kNan;
    last.max_staleness = engine.max_staleness_seen();
    last.n_selected = 0;
    history.rows.push_back(last);
    history.final_model = engine.model();
    history.final_loss = last.loss;
    history.final_gap = last.gap;
    history.max_staleness = engine.max_staleness_seen();
    history.mean_nmse_db = nmse_slots > 0 ? nmse_sum / nmse_slots : kNan;
    return history;
}

}  // namespace

std::unique_ptr<LearningTask> make_task(const ExperimentConfig& config) {
    const std::uint64_t task_seed = substream_seed(config.seed, "task");
    if (config.task == "quadratic") {
        return std::make_unique<QuadraticTask>(QuadraticTask::synthesize(
            config.devices, config.dimension, config.params.mu, config.params.lipschitz,
            config.heterogeneity, task_seed));
    }
    return std::make_unique<LogisticTask>(LogisticTask::synthesize(
        config.devices, config.dimension, config.samples_per_device, config.test_samples,
        config.class_margin, config.ridge, task_seed));
}

TrainingHistory run_strategy_trial(const Scenario& scenario, const LearningTask& task,
                                   const StrategyResult& strategy, const BoundParams& params,
                                   std::uint64_t seed, bool record_models) {
    if (strategy.hga_deferred) {
        return run_hga_trial(scenario, task, strategy, params, seed, record_models);
    }
    RunOptions options;
    options.params = params;
    options.params.staleness_bound = strategy.declared_staleness_bound > 0
                                         ? strategy.declared_staleness_bound
                                         : params.staleness_bound;
    options.seed = seed;
    options.error_free = strategy.error_free;
    options.enforce_staleness = !strategy.relaxed_staleness;
    options.record_models = record_models;
    return run_training(scenario, strategy.schedule, task, options);
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
    const auto start = std::chrono::steady_clock::now();
    const Scenario scenario = config.make_scenario();
    const std::unique_ptr<LearningTask> task = make_task(config);

    std::vector<StrategyKind> kinds;
    for (const std::string& name : config.strategies) kinds.push_back(strategy_from_name(name));
    const std::vector<StrategyResult> strategies = build_strategies(kinds, scenario, config);

    ExperimentReport report;
    report.sigma_w = sigma_w(scenario);
    const std::uint64_t trial_seed_base = substream_seed(config.seed, "trials");
    for (int t = 0; t < config.trials; ++t) {
        report.trial_seeds.push_back(hash_combine(trial_seed_base, t));
    }

    for (const StrategyResult& strategy : strategies) {
        std::vector<TrainingHistory> histories(config.trials);
        std::string failure;
#pragma omp parallel for schedule(dynamic)
        for (int t = 0; t < config.trials; ++t) {
            try {
                histories[t] = run_strategy_trial(scenario, *task, strategy, config.params,
                                                  report.trial_seeds[t]);
            } catch (const std::exception& e) {
#pragma omp critical
                failure = e.what();
            }
        }
        if (!failure.empty()) {
            throw InfeasibleError(strategy_name(strategy.kind) + ": " + failure);
        }

        StrategySummary summary;
        summary.name = strategy_name(strategy.kind);
        summary.error_free = strategy.error_free;
        summary.relaxed_staleness = strategy.relaxed_staleness;
        summary.declared_staleness_bound = strategy.declared_staleness_bound;
        summary.objective = strategy.objective;

        const std::size_t row_count = histories[0].rows.size();
        std::vector<HistoryRow> mean_rows(row_count);
        for (std::size_t r = 0; r < row_count; ++r) {
            HistoryRow mean;
            mean.slot = histories[0].rows[r].slot;
            double nmse_total = 0.0;
            int nmse_count = 0;
            int selected_total = 0;
            for (const TrainingHistory& h : histories) {
                mean.loss += h.rows[r].loss;
                mean.gap += h.rows[r].gap;
                mean.test_accuracy += h.rows[r].test_accuracy;
                mean.max_staleness = std::max(mean.max_staleness, h.rows[r].max_staleness);
                selected_total += h.rows[r].n_selected;
                if (std::isfinite(h.rows[r].nmse_db)) {
                    nmse_total += h.rows[r].nmse_db;
                    ++nmse_count;
                }
            }
            mean.loss /= config.trials;
            mean.gap /= config.trials;
            mean.test_accuracy /= config.trials;
            mean.nmse_db = nmse_count > 0 ? nmse_total / nmse_count : kNan;
            mean.n_selected = selected_total / config.trials;
            mean_rows[r] = mean;
        }

        double nmse_mean = 0.0;
        int nmse_runs = 0;
        for (const TrainingHistory& h : histories) {
            summary.final_loss += h.final_loss;
            summary.final_gap += h.final_gap;
            summary.final_accuracy += h.rows.back().test_accuracy;
            summary.max_staleness = std::max(summary.max_staleness, h.max_staleness);
            if (std::isfinite(h.mean_nmse_db)) {
                nmse_mean += h.mean_nmse_db;
                ++nmse_runs;
            }
        }
        summary.final_loss /= config.trials;
        summary.final_gap /= config.trials;
        summary.final_accuracy /= config.trials;
        summary.mean_nmse_db =
            nmse_runs > 0 ? nmse_mean / nmse_runs
                          : (strategy.error_free ? -std::numeric_limits<double>::infinity()
                                                 : kNan);

        report.summaries.push_back(std::move(summary));
        report.mean_histories.push_back(std::move(mean_rows));
    }

    report.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

void write_history_csv(const std::string& path, const std::vector<HistoryRow>& rows) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << "k,loss,gap,test_acc,nmse_db,max_staleness,n_selected\n";
    for (const HistoryRow& r : rows) {
        out << r.slot << ',' << fmt(r.loss) << ',' << fmt(r.gap) << ','
            << fmt(r.test_accuracy) << ',' << fmt(r.nmse_db) << ',' << r.max_staleness << ','
            << r.n_selected << '\n';
    }
}

void write_schedule_csv(const std::string& path, const Schedule& schedule) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    const int m_count = schedule.device_count();
    out << "k,x,y,z";
    for (int m = 1; m <= m_count; ++m) out << ",a_" << m;
    for (int m = 1; m <= m_count; ++m) out << ",b_" << m;
    out << ",zeta\n";
    for (int k = 1; k <= schedule.slot_count(); ++k) {
        const Vec3& q = schedule.trajectory.positions[k];
        out << k << ',' << fmt(q.x) << ',' << fmt(q.y) << ',' << fmt(q.z);
        for (int m = 0; m < m_count; ++m) out << ',' << int(schedule.selection[m][k - 1]);
        for (int m = 0; m < m_count; ++m) out << ',' << fmt(schedule.amplitudes[m][k - 1]);
        out << ',' << fmt(schedule.zeta[k - 1]) << '\n';
    }
}

Schedule read_schedule_csv(const std::string& path, const Scenario& scenario) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open schedule '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty schedule file");
    const int m_count = scenario.device_count();
    Schedule s;
    s.selection.assign(m_count, {});
    s.amplitudes.assign(m_count, {});
    s.trajectory.positions.push_back(scenario.dispatch_point);  // q(0) = q_F
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::vector<std::string> cells;
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (static_cast<int>(cells.size()) != 4 + 2 * m_count + 1) {
            throw ShapeError("schedule row has wrong column count");
        }
        s.trajectory.positions.push_back(
            {std::stod(cells[1]), std::stod(cells[2]), std::stod(cells[3])});
        for (int m = 0; m < m_count; ++m) {
            s.selection[m].push_back(static_cast<std::uint8_t>(std::stoi(cells[4 + m]) != 0));
            s.amplitudes[m].push_back(std::stod(cells[4 + m_count + m]));
        }
        s.zeta.push_back(std::stod(cells[4 + 2 * m_count]));
    }
    return s;
}

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << "outer,inner,objective,binary_violation,binary_max_dev\n";
    for (const TraceRow& r : trace) {
        out << r.outer << ',' << r.inner << ',' << fmt(r.objective) << ','
            << fmt(r.binary_violation) << ',' << fmt(r.binary_max_dev) << '\n';
    }
}

void write_summary_csv(const std::string& path, const ExperimentReport& report) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << "strategy,final_loss,final_gap,final_acc,mean_nmse_db,max_staleness,objective,"
           "error_free,relaxed_staleness,declared_S,sigma_w\n";
    for (const StrategySummary& s : report.summaries) {
        out << s.name << ',' << fmt(s.final_loss) << ',' << fmt(s.final_gap) << ','
            << fmt(s.final_accuracy) << ',' << fmt(s.mean_nmse_db) << ',' << s.max_staleness
            << ',' << fmt(s.objective) << ',' << (s.error_free ? 1 : 0) << ','
            << (s.relaxed_staleness ? 1 : 0) << ',' << s.declared_staleness_bound << ','
            << fmt(report.sigma_w) << '\n';
    }
}

void write_plot_script(const std::string& path, const std::vector<std::string>& strategies) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << "#!/usr/bin/env python3\n"
           "\"\"\"Plots the benchmark curves from the CSVs in this directory.\"\"\"\n"
           "import csv\n"
           "import math\n"
           "import os\n"
           "\n"
           "import matplotlib\n"
           "matplotlib.use(\"Agg\")\n"
           "import matplotlib.pyplot as plt\n"
           "\n"
           "HERE = os.path.dirname(os.path.abspath(__file__))\n"
           "STRATEGIES = [\n";
    for (const std::string& s : strategies) out << "    \"" << s << "\",\n";
    out << "]\n"
           "\n"
           "def load(name):\n"
           "    rows = []\n"
           "    with open(os.path.join(HERE, f\"history_{name}.csv\")) as fh:\n"
           "        for row in csv.DictReader(fh):\n"
           "            rows.append({k: float(v) for k, v in row.items()})\n"
           "    return rows\n"
           "\n"
           "fig, axes = plt.subplots(1, 3, figsize=(16, 4.5))\n"
           "for name in STRATEGIES:\n"
           "    rows = load(name)\n"
           "    ks = [r[\"k\"] for r in rows]\n"
           "    axes[0].plot(ks, [r[\"loss\"] for r in rows], label=name)\n"
           "    gaps = [(k, r[\"gap\"]) for k, r in zip(ks, rows)\n"
           "            if not math.isnan(r[\"gap\"]) and r[\"gap\"] > 0]\n"
           "    if gaps:\n"
           "        axes[1].semilogy([g[0] for g in gaps], [g[1] for g in gaps], label=name)\n"
           "    accs = [(k, r[\"test_acc\"]) for k, r in zip(ks, rows)\n"
           "            if not math.isnan(r[\"test_acc\"])]\n"
           "    if accs:\n"
           "        axes[1].plot([a[0] for a in accs], [a[1] for a in accs], label=name)\n"
           "    nmses = [(k, r[\"nmse_db\"]) for k, r in zip(ks, rows)\n"
           "             if not math.isnan(r[\"nmse_db\"]) and math.isfinite(r[\"nmse_db\"])]\n"
           "    if nmses:\n"
           "        axes[2].plot([n[0] for n in nmses], [n[1] for n in nmses],\n"
           "                     \".\", markersize=2, label=name)\n"
           "axes[0].set_title(\"training loss\")\n"
           "axes[1].set_title(\"optimality gap / test accuracy\")\n"
           "axes[2].set_title(\"per-slot NMSE (dB)\")\n"
           "for ax in axes:\n"
           "    ax.set_xlabel(\"slot k\")\n"
           "    ax.legend(fontsize=7)\n"
           "fig.tight_layout()\n"
           "fig.savefig(os.path.join(HERE, \"report.png\"), dpi=130)\n"
           "print(\"wrote\", os.path.join(HERE, \"report.png\"))\n";
}

void write_experiment_outputs(const ExperimentConfig& config, const ExperimentReport& report) {
    std::filesystem::create_directories(config.out_dir);
    for (std::size_t i = 0; i < report.summaries.size(); ++i) {
        write_history_csv(config.out_dir + "/history_" + report.summaries[i].name + ".csv",
                          report.mean_histories[i]);
    }
    write_summary_csv(config.out_dir + "/summary.csv", report);
    std::vector<std::string> names;
    for (const StrategySummary& s : report.summaries) names.push_back(s.name);
    write_plot_script(config.out_dir + "/plot_report.py", names);
}

}  // namespace uavafl
