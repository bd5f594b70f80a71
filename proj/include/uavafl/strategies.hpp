#pragma once

#include <optional>
#include <string>
#include <vector>

#include "uavafl/afl.hpp"
#include "uavafl/config.hpp"
#include "uavafl/optimizer.hpp"
#include "uavafl/scenario.hpp"

namespace uavafl {

enum class StrategyKind { UavAfl, ErrorFree, Cf, Sfhf, Hga, Fafl, RoundRobin };

StrategyKind strategy_from_name(const std::string& name);
std::string strategy_name(StrategyKind kind);

// A realized benchmark policy over the full horizon. Strategies either
// satisfy the staleness windows of the configured S, or declare their own
// constraint set: SFHF declares the effective bound implied by its rounds,
// FAFL and HGA run with the staleness windows relaxed entirely.
struct StrategyResult {
    StrategyKind kind = StrategyKind::UavAfl;
    Schedule schedule;
    bool error_free = false;
    bool relaxed_staleness = false;
    int declared_staleness_bound = 0;
    bool hga_deferred = false;              // updates buffered until epoch end
    double hga_threshold = 0.0;
    double objective = 0.0;                 // asymptotic objective of the schedule
    std::vector<TraceRow> trace;            // optimizer strategies only
    bool repaired = false;
};

// Circular-flight trajectory: least-squares radius around the area center,
// planned under the mechanics constraints, tiled from cycles.
Trajectory cf_trajectory(const Scenario& scenario, int cycle_slots);

// Fly-hover-fly point: grid search at 50 m pitch plus pattern refinement of
// the synchronous-aggregation MSE surrogate; returns position and amplitudes.
std::pair<Vec3, std::vector<double>> sfhf_point(const Scenario& scenario);

StrategyResult build_strategy(StrategyKind kind, const Scenario& scenario,
                              const ExperimentConfig& config);

// The error-free benchmark reuses the uav_afl schedule; building both at
// once avoids running the optimizer twice.
std::vector<StrategyResult> build_strategies(const std::vector<StrategyKind>& kinds,
                                             const Scenario& scenario,
                                             const ExperimentConfig& config);

}  // namespace uavafl
