#include "uavafl/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "uavafl/errors.hpp"
#include "uavafl/pathing.hpp"

namespace uavafl {

StrategyKind strategy_from_name(const std::string& name) {
    if (name == "uav_afl") return StrategyKind::UavAfl;
    if (name == "error_free") return StrategyKind::ErrorFree;
    if (name == "cf") return StrategyKind::Cf;
    if (name == "sfhf") return StrategyKind::Sfhf;
    if (name == "hga") return StrategyKind::Hga;
    if (name == "fafl") return StrategyKind::Fafl;
    if (name == "round_robin") return StrategyKind::RoundRobin;
    throw ConfigError("unknown strategy '" + name + "'");
}

std::string strategy_name(StrategyKind kind) {
    switch (kind) {
        case StrategyKind::UavAfl: return "uav_afl";
        case StrategyKind::ErrorFree: return "error_free";
        case StrategyKind::Cf: return "cf";
        case StrategyKind::Sfhf: return "sfhf";
        case StrategyKind::Hga: return "hga";
        case StrategyKind::Fafl: return "fafl";
        case StrategyKind::RoundRobin: return "round_robin";
    }
    return "?";
}

namespace {

Schedule empty_schedule(const Scenario& scenario) {
    Schedule s;
    s.selection.assign(scenario.device_count(),
                       std::vector<std::uint8_t>(scenario.num_slots, 0));
    s.amplitudes.assign(scenario.device_count(),
                        std::vector<double>(scenario.num_slots, scenario.amplitude_cap()));
    s.zeta.assign(scenario.num_slots, 0.0);
    return s;
}

// Tiles a cycle schedule over the full horizon; requires K % K_c == 0.
Schedule tile_cycle(const Scenario& scenario, const Schedule& cycle) {
    const int k_total = scenario.num_slots;
    const int k_cycle = cycle.slot_count();
    if (k_total % k_cycle != 0) throw ConfigError("K must be a multiple of the cycle length");
    Schedule out = empty_schedule(scenario);
    out.trajectory.positions.resize(k_total + 1);
    out.trajectory.positions[0] = cycle.trajectory.positions[0];
    for (int t = 1; t <= k_total; ++t) {
        const int src = (t - 1) % k_cycle + 1;
        out.trajectory.positions[t] = cycle.trajectory.positions[src];
        for (int m = 0; m < scenario.device_count(); ++m) {
            out.selection[m][t - 1] = cycle.selection[m][src - 1];
            out.amplitudes[m][t - 1] = cycle.amplitudes[m][src - 1];
        }
        out.zeta[t - 1] = cycle.zeta[src - 1];
    }
    return out;
}

TwoLayerOptions optimizer_options(const ExperimentConfig& config) {
    TwoLayerOptions o;
    o.eps1 = config.eps1;
    o.eps2 = config.eps2;
    o.eta0 = config.eta0;
    o.eta_scale = config.eta_scale;
    o.max_inner = config.max_inner;
    o.max_outer = config.max_outer;
    return o;
}

StrategyResult optimize_cycle(const Scenario& scenario, const ExperimentConfig& config,
                              bool optimize_trajectory,
                              std::optional<Trajectory> fixed_cycle_trajectory) {
    Scenario cycle_scenario = scenario;
    cycle_scenario.num_slots = config.cycle_slots;
    const ProblemSpec spec =
        build_problem(cycle_scenario, config.params, config.cycle_slots, /*periodic=*/true);

    TwoLayerOptions opts = optimizer_options(config);
    opts.optimize_trajectory = optimize_trajectory;
    OptimizerState init = default_initialization(spec);
    if (fixed_cycle_trajectory) init.q = fixed_cycle_trajectory->positions;

    const TwoLayerResult solved = two_layer_solve(spec, init, opts);

    StrategyResult out;
    out.schedule = tile_cycle(scenario, solved.schedule);
    out.trace = solved.trace;
    out.objective = solved.objective;
    out.repaired = solved.repaired;
    out.declared_staleness_bound = config.params.staleness_bound;
    return out;
}

}  // namespace

Trajectory cf_trajectory(const Scenario& scenario, int cycle_slots) {
    Trajectory hover;
    hover.positions.assign(cycle_slots + 1, scenario.dispatch_point);
    if (cycle_slots < 2) return hover;

    const Vec3 center{scenario.area_side / 2.0, scenario.area_side / 2.0, scenario.altitude};
    double radius = least_squares_radius(scenario, center);
    radius = std::min(radius, scenario.area_side / 2.0 - 1.0);
    PlanOptions plan;
    plan.speed_fraction = 0.9;
    // Prefer a fine polygon; coarsen (or shrink) until the loop fits the
    // cycle. One hover slot is reserved at the end so the tiled seam is
    // crossed at rest.
    for (int vertices : {16, 12, 8, 6, 4, 3}) {
        for (double shrink : {1.0, 0.75, 0.5, 0.25}) {
            try {
                Trajectory loop = plan_waypoint_path(
                    scenario, circle_loop_waypoints(scenario, center, radius * shrink, vertices),
                    cycle_slots - 1, plan);
                loop.positions.push_back(scenario.dispatch_point);
                return loop;
            } catch (const InfeasibleError&) {
            }
        }
    }
    return hover;
}

std::pair<Vec3, std::vector<double>> sfhf_point(const Scenario& scenario) {
    const int m_count = scenario.device_count();
    const double cap = scenario.amplitude_cap();
    std::vector<double> amp(m_count, cap);

    const auto objective = [&](Vec3 q, const std::vector<double>& b) {
        double num = 0.0;
        double den = scenario.noise_power / 2.0;
        for (int m = 0; m < m_count; ++m) {
            const double t = channel_magnitude(scenario, q, m) * b[m];
            num += t;
            den += t * t;
        }
        return static_cast<double>(m_count) - num * num / den;
    };

    Vec3 best{scenario.area_side / 2.0, scenario.area_side / 2.0, scenario.altitude};
    double best_val = objective(best, amp);
    for (double x = 0.0; x <= scenario.area_side; x += 50.0) {
        for (double y = 0.0; y <= scenario.area_side; y += 50.0) {
            const Vec3 q{x, y, scenario.altitude};
            const double v = objective(q, amp);
            if (v < best_val) {
                best_val = v;
                best = q;
            }
        }
    }
    // Pattern-search refinement of the hover point.
    for (double step = 25.0; step > 0.5; step *= 0.5) {
        bool moved = true;
        while (moved) {
            moved = false;
            for (const Vec3 dir : {Vec3{step, 0.0, 0.0}, Vec3{-step, 0.0, 0.0},
                                   Vec3{0.0, step, 0.0}, Vec3{0.0, -step, 0.0}}) {
                Vec3 cand = best + dir;
                cand.x = std::clamp(cand.x, 0.0, scenario.area_side);
                cand.y = std::clamp(cand.y, 0.0, scenario.area_side);
                const double v = objective(cand, amp);
                if (v < best_val - 1e-12) {
                    best_val = v;
                    best = cand;
                    moved = true;
                }
            }
        }
    }
    // Per-device amplitude refinement, kept only where it helps.
    for (int round = 0; round < 3; ++round) {
        for (int m = 0; m < m_count; ++m) {
            for (double scale : {0.25, 0.5, 0.75, 1.0}) {
                std::vector<double> trial = amp;
                trial[m] = scale * cap;
                const double v = objective(best, trial);
                if (v < best_val - 1e-15) {
                    best_val = v;
                    amp = trial;
                }
            }
        }
    }
    return {best, amp};
}

namespace {

StrategyResult build_uav_afl(const Scenario& scenario, const ExperimentConfig& config) {
    StrategyResult out = optimize_cycle(scenario, config, /*optimize_trajectory=*/true,
                                        std::nullopt);
    out.kind = StrategyKind::UavAfl;
    return out;
}

StrategyResult build_cf(const Scenario& scenario, const ExperimentConfig& config) {
    const Trajectory circle = cf_trajectory(scenario, config.cycle_slots);
    StrategyResult out =
        optimize_cycle(scenario, config, /*optimize_trajectory=*/false, circle);
    out.kind = StrategyKind::Cf;
    return out;
}

StrategyResult build_round_robin(const Scenario& scenario, const ExperimentConfig& config) {
    StrategyResult out;
    out.kind = StrategyKind::RoundRobin;
    Scenario cycle_scenario = scenario;
    cycle_scenario.num_slots = config.cycle_slots;
    const ProblemSpec spec =
        build_problem(cycle_scenario, config.params, config.cycle_slots, true);
    OptimizerState state = default_initialization(spec);
    for (auto& row : state.a) {
        for (double& v : row) v = v > 0.5 ? 1.0 : 0.0;
    }
    for (auto& row : state.b) {
        for (double& v : row) v = scenario.amplitude_cap();
    }
    state.q = cf_trajectory(scenario, config.cycle_slots).positions;
    auto [cycle, repaired] = round_and_repair(spec, state);
    out.repaired = repaired;
    out.schedule = tile_cycle(scenario, cycle);
    out.objective = asymptotic_objective(cycle_scenario, cycle, config.params, true);
    out.declared_staleness_bound = config.params.staleness_bound;
    return out;
}

StrategyResult build_sfhf(const Scenario& scenario, const ExperimentConfig& config) {
    StrategyResult out;
    out.kind = StrategyKind::Sfhf;
    const auto [hover, amp] = sfhf_point(scenario);

    const std::vector<Vec3> legs = {scenario.dispatch_point, hover, scenario.dispatch_point};
    const int travel = minimal_plan_slots(scenario, legs);
    if (travel > scenario.num_slots) throw InfeasibleError("horizon too short for SFHF");
    std::vector<int> dwell = {0, scenario.num_slots - travel, 0};
    std::vector<int> arrivals;
    out.schedule = empty_schedule(scenario);
    out.schedule.trajectory =
        plan_waypoint_path(scenario, legs, scenario.num_slots, {}, &dwell, &arrivals);

    // Synchronous rounds while hovering: every device transmits, then
    // recomputes; the next round waits for the slowest device.
    int c_max = 0;
    for (const DeviceSpec& d : scenario.devices) c_max = std::max(c_max, d.compute_slots);
    const int period = c_max + 1;
    const int first = arrivals[1] + 1;           // first slot at the hover point
    const int last = first + dwell[1] - 1;       // last hover slot
    for (int k = first; k <= last; k += period) {
        for (int m = 0; m < scenario.device_count(); ++m) {
            out.schedule.selection[m][k - 1] = 1;
            out.schedule.amplitudes[m][k - 1] = amp[m];
        }
    }
    for (int k = 1; k <= scenario.num_slots; ++k) {
        std::vector<DeviceGain> gains;
        for (int m = 0; m < scenario.device_count(); ++m) {
            if (!out.schedule.selection[m][k - 1]) continue;
            gains.push_back({channel_magnitude(scenario, out.schedule.trajectory.positions[k], m),
                             out.schedule.amplitudes[m][k - 1], 1.0});
        }
        out.schedule.zeta[k - 1] =
            gains.empty() ? 0.0
                          : optimal_zeta(gains, scenario.noise_power,
                                         static_cast<int>(gains.size()));
    }
    // SFHF declares the staleness bound its fly-in and round period imply.
    out.declared_staleness_bound =
        std::max({config.params.staleness_bound, first, period,
                  scenario.num_slots - last + period});
    return out;
}

StrategyResult build_fafl(const Scenario& scenario, const ExperimentConfig& config) {
    StrategyResult out;
    out.kind = StrategyKind::Fafl;
    out.error_free = true;
    out.relaxed_staleness = true;
    out.declared_staleness_bound = scenario.num_slots;

    const std::vector<int> tour = two_opt(scenario, nearest_neighbor_tour(scenario));
    std::vector<Vec3> waypoints = {scenario.dispatch_point};
    for (int m : tour) {
        waypoints.push_back({scenario.devices[m].position.x, scenario.devices[m].position.y,
                             scenario.altitude});
    }
    waypoints.push_back(scenario.dispatch_point);

    PlanOptions plan;
    std::vector<int> dwell(waypoints.size(), 0);
    // Each visited device is served for one slot while the UAV rests overhead.
    for (std::size_t i = 1; i + 1 < waypoints.size(); ++i) dwell[i] = 1;
    int loop_slots = minimal_plan_slots(scenario, waypoints, plan) +
                     static_cast<int>(tour.size()) + 1;
    std::vector<int> arrivals;
    Trajectory loop;
    while (true) {
        if (loop_slots > scenario.num_slots) {
            throw InfeasibleError("horizon too short for a FAFL tour");
        }
        try {
            loop = plan_waypoint_path(scenario, waypoints, loop_slots, plan, &dwell, &arrivals);
        } catch (const InfeasibleError&) {
            ++loop_slots;
            continue;
        }
        // The tiled seam must be crossed at rest.
        if (!(loop.positions[loop_slots] == loop.positions[loop_slots - 1])) {
            ++loop_slots;
            continue;
        }
        break;
    }

    out.schedule = empty_schedule(scenario);
    out.schedule.trajectory.positions.resize(scenario.num_slots + 1);
    out.schedule.trajectory.positions[0] = scenario.dispatch_point;
    for (int t = 1; t <= scenario.num_slots; ++t) {
        out.schedule.trajectory.positions[t] = loop.positions[(t - 1) % loop_slots + 1];
    }
    // Trailing partial loop would break the return-to-dispatch constraint;
    // keep complete loops and hover at the dispatch point afterwards.
    const int full_loops = scenario.num_slots / loop_slots;
    for (int t = full_loops * loop_slots + 1; t <= scenario.num_slots; ++t) {
        out.schedule.trajectory.positions[t] = scenario.dispatch_point;
    }
    for (int loop_idx = 0; loop_idx < full_loops; ++loop_idx) {
        for (std::size_t i = 0; i < tour.size(); ++i) {
            const int service = loop_idx * loop_slots + arrivals[i + 1] + 1;  // dwell slot
            if (service <= scenario.num_slots) {
                out.schedule.selection[tour[i]][service - 1] = 1;
            }
        }
    }
    return out;
}

StrategyResult build_hga(const Scenario& scenario, const ExperimentConfig& config) {
    StrategyResult out;
    out.kind = StrategyKind::Hga;
    out.relaxed_staleness = true;
    out.declared_staleness_bound = scenario.num_slots;
    out.hga_deferred = true;
    out.hga_threshold = config.hga_threshold_m;

    // Reuse the CF tour; extend it toward any device outside the threshold.
    const double reach =
        std::sqrt(std::max(config.hga_threshold_m * config.hga_threshold_m -
                               scenario.altitude * scenario.altitude,
                           1.0));
    const Vec3 center{scenario.area_side / 2.0, scenario.area_side / 2.0, scenario.altitude};
    const double radius = std::min(least_squares_radius(scenario, center),
                                   scenario.area_side / 2.0 - 1.0);
    std::vector<Vec3> waypoints = circle_loop_waypoints(scenario, center, radius, 12);
    for (const DeviceSpec& d : scenario.devices) {
        const Vec3 overhead{d.position.x, d.position.y, scenario.altitude};
        double nearest = 1e300;
        std::size_t at = 1;
        for (std::size_t i = 1; i + 1 < waypoints.size(); ++i) {
            const double dist = distance(waypoints[i], overhead);
            if (dist < nearest) {
                nearest = dist;
                at = i;
            }
        }
        if (nearest > reach) waypoints.insert(waypoints.begin() + at + 1, overhead);
    }

    // One extra slot rests at the dispatch point so the tiled seam is safe.
    int loop_slots = std::max(minimal_plan_slots(scenario, waypoints), 1) + 1;
    if (loop_slots > scenario.num_slots) throw InfeasibleError("horizon too short for HGA");
    const Trajectory loop = plan_waypoint_path(scenario, waypoints, loop_slots, {});

    out.schedule = empty_schedule(scenario);
    out.schedule.trajectory.positions.resize(scenario.num_slots + 1);
    out.schedule.trajectory.positions[0] = scenario.dispatch_point;
    const int full_loops = scenario.num_slots / loop_slots;
    for (int t = 1; t <= scenario.num_slots; ++t) {
        out.schedule.trajectory.positions[t] = t <= full_loops * loop_slots
                                                   ? loop.positions[(t - 1) % loop_slots + 1]
                                                   : scenario.dispatch_point;
    }
    // Selection happens at runtime (ready devices within the threshold); the
    // schedule records the flight path and amplitudes only.
    return out;
}

}  // namespace

StrategyResult build_strategy(StrategyKind kind, const Scenario& scenario,
                              const ExperimentConfig& config) {
    switch (kind) {
        case StrategyKind::UavAfl: return build_uav_afl(scenario, config);
        case StrategyKind::ErrorFree: {
            StrategyResult out = build_uav_afl(scenario, config);
            out.kind = StrategyKind::ErrorFree;
            out.error_free = true;
            return out;
        }
        case StrategyKind::Cf: return build_cf(scenario, config);
        case StrategyKind::Sfhf: return build_sfhf(scenario, config);
        case StrategyKind::Hga: return build_hga(scenario, config);
        case StrategyKind::Fafl: return build_fafl(scenario, config);
        case StrategyKind::RoundRobin: return build_round_robin(scenario, config);
    }
    throw ConfigError("unsupported strategy");
}

std::vector<StrategyResult> build_strategies(const std::vector<StrategyKind>& kinds,
                                             const Scenario& scenario,
                                             const ExperimentConfig& config) {
    std::vector<StrategyResult> out;
    std::optional<StrategyResult> uav;
    for (StrategyKind kind : kinds) {
        if (kind == StrategyKind::UavAfl || kind == StrategyKind::ErrorFree) {
            if (!uav) uav = build_uav_afl(scenario, config);
            StrategyResult r = *uav;
            r.kind = kind;
            r.error_free = kind == StrategyKind::ErrorFree;
            out.push_back(std::move(r));
        } else {
            out.push_back(build_strategy(kind, scenario, config));
        }
    }
    return out;
}

}  // namespace uavafl
