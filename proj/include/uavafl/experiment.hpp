#pragma once

#include <string>
#include <vector>

#include "uavafl/config.hpp"
#include "uavafl/strategies.hpp"
#include "uavafl/task.hpp"

namespace uavafl {

struct StrategySummary {
    std::string name;
    double final_loss = 0.0;
    double final_gap = 0.0;
    double final_accuracy = 0.0;
    double mean_nmse_db = 0.0;
    int max_staleness = 0;
    double objective = 0.0;
    bool error_free = false;
    bool relaxed_staleness = false;
    int declared_staleness_bound = 0;
};

struct ExperimentReport {
    double sigma_w = 0.0;
    std::vector<StrategySummary> summaries;
    std::vector<std::vector<HistoryRow>> mean_histories;  // parallel to summaries
    std::vector<std::uint64_t> trial_seeds;
    double runtime_seconds = 0.0;  // console only; never serialized
};

std::unique_ptr<LearningTask> make_task(const ExperimentConfig& config);

// One seeded run of a realized strategy; dispatches to the hierarchical
// deferred-update loop for HGA, plain Algorithm-1 execution otherwise.
TrainingHistory run_strategy_trial(const Scenario& scenario, const LearningTask& task,
                                   const StrategyResult& strategy, const BoundParams& params,
                                   std::uint64_t seed, bool record_models = false);

ExperimentReport run_experiment(const ExperimentConfig& config);
void write_experiment_outputs(const ExperimentConfig& config, const ExperimentReport& report);

// Schedule / history / trace persistence (deterministic byte-for-byte).
void write_schedule_csv(const std::string& path, const Schedule& schedule);
Schedule read_schedule_csv(const std::string& path, const Scenario& scenario);
void write_history_csv(const std::string& path, const std::vector<HistoryRow>& rows);
void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace);
void write_summary_csv(const std::string& path, const ExperimentReport& report);
void write_plot_script(const std::string& path, const std::vector<std::string>& strategies);

}  // namespace uavafl
