#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "uavafl/errors.hpp"
#include "uavafl/experiment.hpp"
#include "uavafl/optimizer.hpp"

namespace {

int cmd_optimize(const std::string& config_path, const std::string& schedule_out,
                 const std::string& trace_out) {
    using namespace uavafl;
    const ExperimentConfig config = load_config(config_path);
    const Scenario scenario = config.make_scenario();

    Scenario cycle = scenario;
    cycle.num_slots = config.cycle_slots;
    const ProblemSpec spec =
        build_problem(cycle, config.params, config.cycle_slots, /*periodic=*/true);
    TwoLayerOptions opts;
    opts.eps1 = config.eps1;
    opts.eps2 = config.eps2;
    opts.eta0 = config.eta0;
    opts.eta_scale = config.eta_scale;
    opts.max_inner = config.max_inner;
    opts.max_outer = config.max_outer;

    const TwoLayerResult result = two_layer_solve(spec, opts);
    write_schedule_csv(schedule_out, result.schedule);
    write_trace_csv(trace_out, result.trace);
    std::printf("objective %.10g  binary-violation %.3g  repaired %d\n", result.objective,
                result.binary_violation, result.repaired ? 1 : 0);
    std::printf("wrote %s and %s\n", schedule_out.c_str(), trace_out.c_str());
    return 0;
}

int cmd_simulate(const std::string& config_path, const std::string& schedule_path,
                 const std::string& history_out) {
    using namespace uavafl;
    const ExperimentConfig config = load_config(config_path);
    Scenario scenario = config.make_scenario();
    Schedule schedule = read_schedule_csv(schedule_path, scenario);
    scenario.num_slots = schedule.slot_count();  // run exactly the given horizon

    const auto task = make_task(config);
    RunOptions options;
    options.params = config.params;
    options.seed = substream_seed(config.seed, "trials");
    const TrainingHistory history = run_training(scenario, schedule, *task, options);
    write_history_csv(history_out, history.rows);
    std::printf("final loss %.10g  gap %.10g  MS %d  mean NMSE %.4g dB\n", history.final_loss,
                history.final_gap, history.max_staleness, history.mean_nmse_db);
    std::printf("wrote %s\n", history_out.c_str());
    return 0;
}

int cmd_benchmark(const std::string& config_path) {
    using namespace uavafl;
    const ExperimentConfig config = load_config(config_path);
    const ExperimentReport report = run_experiment(config);
    write_experiment_outputs(config, report);
    std::printf("sigma(w) = %.4f m, %d trial(s), runtime %.1f s\n", report.sigma_w,
                static_cast<int>(report.trial_seeds.size()), report.runtime_seconds);
    std::printf("%-12s %14s %14s %10s %12s %6s\n", "strategy", "final_loss", "final_gap",
                "final_acc", "nmse_db", "MS");
    for (const StrategySummary& s : report.summaries) {
        std::printf("%-12s %14.6g %14.6g %10.4g %12.4g %6d\n", s.name.c_str(), s.final_loss,
                    s.final_gap, s.final_accuracy, s.mean_nmse_db, s.max_staleness);
    }
    std::printf("outputs under %s/\n", config.out_dir.c_str());
    return 0;
}

int cmd_report(const std::string& dir) {
    const std::string summary = dir + "/summary.csv";
    std::ifstream in(summary);
    if (!in) throw uavafl::IoError("no summary.csv under '" + dir + "'");
    std::string line;
    while (std::getline(in, line)) std::printf("%s\n", line.c_str());

    std::vector<std::string> names;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("history_", 0) == 0 && name.size() > 12) {
            names.push_back(name.substr(8, name.size() - 12));
        }
    }
    std::sort(names.begin(), names.end());
    uavafl::write_plot_script(dir + "/plot_report.py", names);
    std::printf("refreshed %s/plot_report.py\n", dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"UAV-assisted asynchronous federated learning simulator and optimizer"};
    app.require_subcommand(1);

    std::string config_path;
    std::string schedule_path = "schedule.csv";
    std::string trace_path = "trace.csv";
    std::string history_path = "history.csv";
    std::string report_dir;

    CLI::App* optimize = app.add_subcommand("optimize", "solve the cycle design problem");
    optimize->add_option("config", config_path, "configuration file")->required();
    optimize->add_option("--schedule", schedule_path, "schedule CSV output");
    optimize->add_option("--trace", trace_path, "convergence trace CSV output");

    CLI::App* simulate = app.add_subcommand("simulate", "run training under a schedule");
    simulate->add_option("config", config_path, "configuration file")->required();
    simulate->add_option("schedule", schedule_path, "schedule CSV to execute")->required();
    simulate->add_option("--history", history_path, "history CSV output");

    CLI::App* benchmark = app.add_subcommand("benchmark", "run all strategies and report");
    benchmark->add_option("config", config_path, "configuration file")->required();

    CLI::App* report = app.add_subcommand("report", "summarize an output directory");
    report->add_option("dir", report_dir, "experiment output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (optimize->parsed()) return cmd_optimize(config_path, schedule_path, trace_path);
        if (simulate->parsed()) return cmd_simulate(config_path, schedule_path, history_path);
        if (benchmark->parsed()) return cmd_benchmark(config_path);
        if (report->parsed()) return cmd_report(report_dir);
    } catch (const uavafl::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: internal: %s\n", e.what());
        return 1;
    }
    return 0;
}
