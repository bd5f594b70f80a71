#include "uavafl/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "uavafl/errors.hpp"
#include "uavafl/pathing.hpp"

namespace uavafl {

namespace {

int wrap_slot(int slot, int horizon) { return ((slot - 1) % horizon + horizon) % horizon + 1; }

}  // namespace

ProblemSpec build_problem(const Scenario& scenario, const BoundParams& params, int horizon,
                          bool periodic) {
    if (horizon < params.staleness_bound) throw ConfigError("need K >= S");
    ProblemSpec spec;
    spec.scenario = scenario;
    spec.scenario.num_slots = horizon;
    spec.params = params;
    spec.horizon = horizon;
    spec.periodic = periodic;

    const int s = params.staleness_bound;
    for (int m = 0; m < scenario.device_count(); ++m) {
        const int c = scenario.devices[m].compute_slots;
        if (horizon <= c) throw ConfigError("need K > max compute time");
        // Greedy probe: a device busy for c slots after each selection can
        // appear in every length-S window only if c + 1 <= S.
        if (c + 1 > s) {
            std::ostringstream os;
            os << "device " << m << " with compute time " << c
               << " cannot satisfy staleness windows of S=" << s;
            throw InfeasibleError(os.str());
        }
        const int stale_window_last = periodic ? horizon : horizon - s + 1;
        for (int k0 = 1; k0 <= stale_window_last; ++k0) {
            ProblemSpec::Window w;
            w.device = m;
            for (int i = 0; i < s; ++i) {
                w.slots.push_back(periodic ? wrap_slot(k0 + i, horizon) : k0 + i);
            }
            spec.staleness_windows.push_back(std::move(w));
        }
        if (c >= 1) {
            const int busy_window_last = periodic ? horizon : horizon - c;
            for (int k0 = 1; k0 <= busy_window_last; ++k0) {
                ProblemSpec::Window w;
                w.device = m;
                for (int i = 0; i <= c; ++i) {
                    w.slots.push_back(periodic ? wrap_slot(k0 + i, horizon) : k0 + i);
                }
                spec.busy_windows.push_back(std::move(w));
            }
        }
    }
    return spec;
}

double slack_update_scalar(double a) { return (a * a + a) / (1.0 + a * a); }

std::vector<std::vector<double>> slack_update(const std::vector<std::vector<double>>& a) {
    std::vector<std::vector<double>> abar(a.size());
    for (std::size_t m = 0; m < a.size(); ++m) {
        abar[m].resize(a[m].size());
        for (std::size_t k = 0; k < a[m].size(); ++k) abar[m][k] = slack_update_scalar(a[m][k]);
    }
    return abar;
}

double binary_penalty(const std::vector<std::vector<double>>& a,
                      const std::vector<std::vector<double>>& abar) {
    double total = 0.0;
    for (std::size_t m = 0; m < a.size(); ++m) {
        for (std::size_t k = 0; k < a[m].size(); ++k) {
            const double va = a[m][k];
            const double vb = abar[m][k];
            total += va * (1.0 - vb) * va * (1.0 - vb) + (va - vb) * (va - vb);
        }
    }
    return total;
}

double max_binary_deviation(const std::vector<std::vector<double>>& a) {
    double worst = 0.0;
    for (const auto& row : a) {
        for (double v : row) worst = std::max(worst, std::min(std::abs(v), std::abs(1.0 - v)));
    }
    return worst;
}

std::vector<double> tight_p(const std::vector<SlotCost>& costs) {
    const int k = static_cast<int>(costs.size());
    std::vector<double> p(2 * k);
    for (int i = 0; i < k; ++i) {
        p[i] = costs[i].additive;
        p[k + i] = costs[i].contraction;
    }
    return p;
}

std::vector<double> tight_y(const std::vector<double>& p) {
    std::vector<double> y(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) y[i] = std::log(std::max(p[i], 1e-300));
    return y;
}

double gp_objective(const std::vector<double>& y, int horizon) {
    std::vector<double> suffix(horizon + 1, 0.0);
    for (int j = horizon - 1; j >= 1; --j) suffix[j] = suffix[j + 1] + y[horizon + j];
    double peak = -std::numeric_limits<double>::infinity();
    std::vector<double> terms(horizon);
    for (int t = 0; t < horizon; ++t) {
        terms[t] = y[t] + suffix[t + 1];
        peak = std::max(peak, terms[t]);
    }
    double sum = 0.0;
    for (double t : terms) sum += std::exp(t - peak);
    return peak + std::log(sum);
}

double penalized_objective(const ProblemSpec& spec, const std::vector<Vec3>& q,
                           const std::vector<std::vector<double>>& a,
                           const std::vector<std::vector<double>>& b,
                           const std::vector<std::vector<double>>& abar, double eta) {
    std::vector<Vec3> q_slots(q.begin() + 1, q.end());
    const std::vector<SlotCost> costs =
        schedule_costs(spec.scenario, q_slots, a, b, spec.params, spec.periodic);
    const double log_objective = gp_objective(tight_y(tight_p(costs)), spec.horizon);
    return log_objective + binary_penalty(a, abar) / eta;
}

OptimizerState default_initialization(const ProblemSpec& spec) {
    const Scenario& sc = spec.scenario;
    const int m_count = sc.device_count();
    const int k_count = spec.horizon;
    const int s = spec.params.staleness_bound;
    OptimizerState state;

    // CF-style circular loop flown conservatively, which keeps the start
    // strictly inside the mechanics constraints (including the tiling seam:
    // the last slot rests at the dispatch point).
    const Vec3 center{sc.area_side / 2.0, sc.area_side / 2.0, sc.altitude};
    double radius = least_squares_radius(sc, center);
    radius = std::min(radius, sc.area_side / 2.0 - 1.0);
    PlanOptions plan;
    plan.speed_fraction = 0.8;
    plan.accel_fraction = 0.6;
    Trajectory traj;
    traj.positions.assign(k_count + 1, sc.dispatch_point);  // hover fallback
    if (k_count >= 2) {
        for (int vertices = 12; vertices >= 3; vertices -= 3) {
            try {
                Trajectory loop = plan_waypoint_path(
                    sc, circle_loop_waypoints(sc, center, radius, vertices), k_count - 1, plan);
                loop.positions.push_back(sc.dispatch_point);
                traj = std::move(loop);
                break;
            } catch (const InfeasibleError&) {
            }
        }
    }
    state.q = traj.positions;

    // Soft round-robin selection: the comb marks the round-robin phase but
    // stays fractional enough that early inner rounds can still re-phase
    // devices. Strictly interior for every window as long as c_m + 1 < S.
    state.a.assign(m_count, std::vector<double>(k_count, 0.0));
    const double high = 0.55;
    for (int m = 0; m < m_count; ++m) {
        const int c = sc.devices[m].compute_slots;
        int period = std::clamp(m_count, c + 1, std::max(1, s));
        if (spec.periodic) {
            // Prefer a period dividing K so the comb tiles cleanly.
            for (int p = period; p >= c + 1; --p) {
                if (k_count % p == 0) {
                    period = p;
                    break;
                }
            }
        }
        const double low =
            (c + 1 >= s) ? 0.0 : std::min(2.0 * (1.0 - high) / (c + s - 1), 0.9 * high);
        for (int k = 0; k < k_count; ++k) state.a[m][k] = low;
        for (int k = 1 + (m % period); k <= k_count; k += period) state.a[m][k - 1] = high;
    }
    state.abar = slack_update(state.a);

    state.b.assign(m_count, std::vector<double>(k_count, 0.95 * sc.amplitude_cap()));
    state.eta = 10.0;
    return state;
}

namespace {

// Feasibility of one binary row under the spec windows.
bool row_feasible(const ProblemSpec& spec, int device, const std::vector<std::uint8_t>& row) {
    const int k_count = spec.horizon;
    const int c = spec.scenario.devices[device].compute_slots;
    const int s = spec.params.staleness_bound;
    std::vector<int> picks;
    for (int k = 1; k <= k_count; ++k) {
        if (row[k - 1]) picks.push_back(k);
    }
    if (picks.empty()) return false;
    int prev = 0;  // bootstrap
    for (int k : picks) {
        if (prev > 0 && k - prev <= c) return false;
        if (k - prev > s) return false;
        prev = k;
    }
    if (!spec.periodic) return prev >= k_count - s + 1;
    const int wrap_gap = picks.front() + k_count - picks.back();
    return wrap_gap <= s && wrap_gap > c;
}

std::vector<std::uint8_t> greedy_row(const ProblemSpec& spec, int device,
                                     const std::vector<double>& fractional) {
    const int k_count = spec.horizon;
    const int c = spec.scenario.devices[device].compute_slots;
    const int s = spec.params.staleness_bound;
    std::vector<std::uint8_t> row(k_count, 0);
    int prev = 0;
    while (true) {
        if (!spec.periodic && prev >= k_count - s + 1) break;
        if (spec.periodic && prev > 0 && prev + s >= k_count + 1) break;
        const int lo = prev + c + 1;
        const int hi = std::min(prev + s, k_count);
        if (lo > hi) throw InfeasibleError("schedule repair ran out of feasible slots");
        int best = lo;
        for (int k = lo; k <= hi; ++k) {
            if (fractional[k - 1] > fractional[best - 1]) best = k;
        }
        row[best - 1] = 1;
        prev = best;
    }
    if (spec.periodic) {
        // Fix the wrap: the seam gap first + K - last must itself look like a
        // legal inter-selection gap, i.e. lie in (c, S].
        std::vector<int> picks;
        for (int k = 1; k <= k_count; ++k) {
            if (row[k - 1]) picks.push_back(k);
        }
        while (!picks.empty() && picks.front() + k_count - picks.back() > s) {
            const int lo = picks.back() + c + 1;
            const int hi = std::min(picks.back() + s, k_count);
            if (lo > hi) throw InfeasibleError("schedule repair ran out of feasible slots");
            int best = lo;
            for (int k = lo; k <= hi; ++k) {
                if (fractional[k - 1] > fractional[best - 1]) best = k;
            }
            row[best - 1] = 1;
            picks.push_back(best);
        }
        if (picks.size() >= 2 && picks.front() + k_count - picks.back() <= c) {
            // Move the final selection earlier so both the seam gap and the
            // in-cycle gap to its predecessor stay within (c, S].
            const int first = picks.front();
            const int prev = picks[picks.size() - 2];
            const int lo = std::max(prev + c + 1, first + k_count - s);
            const int hi = std::min(prev + s, first + k_count - c - 1);
            if (lo > hi) throw InfeasibleError("schedule repair cannot resolve the seam");
            int best = lo;
            for (int k = lo; k <= hi; ++k) {
                if (fractional[k - 1] > fractional[best - 1]) best = k;
            }
            row[picks.back() - 1] = 0;
            row[best - 1] = 1;
        }
    }
    return row;
}

}  // namespace

std::pair<Schedule, bool> round_and_repair(const ProblemSpec& spec, const OptimizerState& state) {
    const Scenario& sc = spec.scenario;
    const int m_count = sc.device_count();
    const int k_count = spec.horizon;
    Schedule sched;
    sched.trajectory.positions = state.q;
    sched.selection.assign(m_count, std::vector<std::uint8_t>(k_count, 0));
    sched.amplitudes = state.b;
    sched.zeta.assign(k_count, 0.0);

    bool repaired = false;
    for (int m = 0; m < m_count; ++m) {
        for (int k = 0; k < k_count; ++k) sched.selection[m][k] = state.a[m][k] > 0.5 ? 1 : 0;
        if (!row_feasible(spec, m, sched.selection[m])) {
            sched.selection[m] = greedy_row(spec, m, state.a[m]);
            repaired = true;
            if (!row_feasible(spec, m, sched.selection[m])) {
                throw InfeasibleError("repair produced an infeasible row for device " +
                                      std::to_string(m));
            }
        }
    }

    // Audit denoising factors under the unit-variance gradient model.
    for (int k = 1; k <= k_count; ++k) {
        std::vector<DeviceGain> gains;
        for (int m = 0; m < m_count; ++m) {
            if (!sched.selection[m][k - 1]) continue;
            gains.push_back({channel_magnitude(sc, state.q[k], m),
                             state.b[m][k - 1], 1.0});
        }
        sched.zeta[k - 1] = gains.empty() ? 0.0
                                          : optimal_zeta(gains, sc.noise_power,
                                                         static_cast<int>(gains.size()));
    }
    return {sched, repaired};
}

TwoLayerResult two_layer_solve(const ProblemSpec& spec, const TwoLayerOptions& options) {
    return two_layer_solve(spec, default_initialization(spec), options);
}

TwoLayerResult two_layer_solve(const ProblemSpec& spec, const OptimizerState& init,
                               const TwoLayerOptions& options) {
    if (!(spec.params.delta > 0.0)) throw ConfigError("the GP transform needs delta > 0");
    if (!(spec.params.mu < spec.params.lipschitz)) throw ConfigError("need mu < L");
    if (!(options.eta_scale > 0.0 && options.eta_scale < 1.0)) {
        throw ConfigError("need 0 < s < 1");
    }

    TwoLayerResult result;
    OptimizerState& state = result.state;
    state = init;
    state.eta = options.eta0;

    for (int outer = 0; outer < options.max_outer; ++outer) {
        state.outer = outer;
        double prev_l = std::numeric_limits<double>::infinity();
        for (int inner = 0; inner < options.max_inner; ++inner) {
            state.abar = slack_update(state.a);
            result.solves.push_back(selection_subproblem(spec, state, options));
            result.solves.push_back(trajectory_power_subproblem(spec, state, options));
            const double l_now =
                penalized_objective(spec, state.q, state.a, state.b, state.abar, state.eta);

            TraceRow row;
            row.outer = outer;
            row.inner = inner;
            row.objective = l_now;
            row.binary_violation = binary_penalty(state.a, state.abar);
            row.binary_max_dev = max_binary_deviation(state.a);
            result.trace.push_back(row);
            ++state.inner_total;

            if (std::isfinite(prev_l) &&
                std::abs((l_now - prev_l) / std::max(std::abs(prev_l), 1e-12)) <= options.eps1) {
                prev_l = l_now;
                break;
            }
            prev_l = l_now;
        }
        state.abar = slack_update(state.a);
        result.binary_violation = binary_penalty(state.a, state.abar);
        if (result.binary_violation <= options.eps2) break;
        state.eta *= options.eta_scale;
    }

    auto [schedule, repaired] = round_and_repair(spec, state);
    result.schedule = std::move(schedule);
    result.repaired = repaired;

    // Post-hoc verification of the full constraint set.
    const auto mech = validate_trajectory(spec.scenario, result.schedule.trajectory);
    if (!mech.empty()) throw SolverError("optimized trajectory violates mechanics: " +
                                         mech.front().describe());
    if (const auto bad = check_schedule(spec.scenario, result.schedule,
                                        spec.params.staleness_bound, true)) {
        throw SolverError("rounded schedule infeasible: " + *bad);
    }
    result.objective =
        asymptotic_objective(spec.scenario, result.schedule, spec.params, spec.periodic);
    return result;
}

}  // namespace uavafl
