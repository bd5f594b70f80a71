#include "uavafl/bound.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "uavafl/errors.hpp"

namespace uavafl {

SlotCost slot_cost(double g_value, const BoundParams& params) {
    if (!(params.mu > 0.0 && params.mu <= params.lipschitz)) {
        throw ConfigError("need 0 < mu <= L");
    }
    SlotCost c;
    c.g_value = g_value;
    const double ratio = params.mu / params.lipschitz;
    c.contraction = 1.0 - ratio * (1.0 - g_value * params.alpha2);
    c.additive = (g_value * (params.delta * params.delta + params.alpha1) +
                  6.0 * params.delta * params.delta) /
                 (2.0 * params.lipschitz);
    c.convergent = c.contraction <= 1.0;
    return c;
}

double g_bracket(const std::vector<double>& distances, const std::vector<double>& a_col,
                 const std::vector<double>& b_col, double g0, double noise_power) {
    double a_sum = 0.0;
    double num = 0.0;
    double den = noise_power / 2.0;
    const double root_g0 = std::sqrt(g0);
    for (std::size_t m = 0; m < distances.size(); ++m) {
        if (distances[m] <= 0.0) throw SingularityError("UAV coincides with a device");
        a_sum += a_col[m];
        const double t = root_g0 / distances[m] * b_col[m];
        num += a_col[m] * t;
        den += a_col[m] * t * t;
    }
    return a_sum - num * num / den;
}

namespace {

double g_at(const Scenario& scenario, const std::vector<Vec3>& q_slots,
            const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b,
            int slot, int staleness_bound, bool periodic) {
    const int m_count = scenario.device_count();
    const int k_count = static_cast<int>(q_slots.size());
    const double m_d = static_cast<double>(m_count);

    double a_sum_k = 0.0;
    for (int m = 0; m < m_count; ++m) a_sum_k += a[m][slot - 1];
    double g = 18.0 * staleness_bound * staleness_bound +
               24.0 * ((m_d - a_sum_k) / m_d) * ((m_d - a_sum_k) / m_d);

    std::vector<double> dist(m_count), a_col(m_count), b_col(m_count);
    double window_sum = 0.0;
    for (int j = slot - staleness_bound; j <= slot; ++j) {
        int jj = j;
        if (periodic) {
            jj = ((j - 1) % k_count + k_count) % k_count + 1;
        } else if (j < 1) {
            continue;  // no pre-history before the horizon start
        }
        for (int m = 0; m < m_count; ++m) {
            dist[m] = distance(q_slots[jj - 1], scenario.devices[m].position);
            a_col[m] = a[m][jj - 1];
            b_col[m] = b[m][jj - 1];
        }
        window_sum += g_bracket(dist, a_col, b_col, scenario.g0, scenario.noise_power);
    }
    return g + 18.0 * staleness_bound * window_sum;
}

}  // namespace

double g_value(const Scenario& scenario, const std::vector<Vec3>& q_slots,
               const std::vector<std::vector<double>>& a,
               const std::vector<std::vector<double>>& b, int slot, int staleness_bound,
               bool periodic) {
    return g_at(scenario, q_slots, a, b, slot, staleness_bound, periodic);
}

std::vector<double> g_series_serial(const Scenario& scenario, const std::vector<Vec3>& q_slots,
                                    const std::vector<std::vector<double>>& a,
                                    const std::vector<std::vector<double>>& b,
                                    int staleness_bound, bool periodic) {
    const int k_count = static_cast<int>(q_slots.size());
    std::vector<double> out(k_count);
    for (int k = 1; k <= k_count; ++k) {
        out[k - 1] = g_at(scenario, q_slots, a, b, k, staleness_bound, periodic);
    }
    return out;
}

std::vector<double> g_series(const Scenario& scenario, const std::vector<Vec3>& q_slots,
                             const std::vector<std::vector<double>>& a,
                             const std::vector<std::vector<double>>& b, int staleness_bound,
                             bool periodic) {
    const int k_count = static_cast<int>(q_slots.size());
    std::vector<double> out(k_count);
#pragma omp parallel for schedule(static)
    for (int k = 1; k <= k_count; ++k) {
        out[k - 1] = g_at(scenario, q_slots, a, b, k, staleness_bound, periodic);
    }
    return out;
}

double e_d_bound(double theta, int device_count, int selected_count) {
    const double frac =
        static_cast<double>(device_count - selected_count) / static_cast<double>(device_count);
    return 8.0 * theta * frac * frac;
}

double e_a_bound(double theta, int staleness_bound, double window_comm_mse_sum, double delta) {
    const double s = static_cast<double>(staleness_bound);
    return 6.0 * s * s * theta + 6.0 * s * window_comm_mse_sum + 2.0 * delta * delta;
}

double theta_value(const BoundParams& params, double grad_norm_sq) {
    return params.delta * params.delta + params.alpha1 + params.alpha2 * grad_norm_sq;
}

BoundBreakdown finite_horizon_breakdown(const std::vector<SlotCost>& costs, double initial_gap) {
    const int k_count = static_cast<int>(costs.size());
    BoundBreakdown out;

    // Suffix log-products of the contraction factors; a zero factor
    // annihilates everything before it, tracked separately.
    std::vector<double> suffix_log(k_count + 1, 0.0);
    std::vector<int> suffix_zeros(k_count + 1, 0);
    for (int k = k_count - 1; k >= 0; --k) {
        const double c = costs[k].contraction;
        if (c < 0.0) throw ConfigError("negative contraction factor; check mu <= L");
        out.all_convergent = out.all_convergent && costs[k].convergent;
        suffix_log[k] = suffix_log[k + 1] + (c > 0.0 ? std::log(c) : 0.0);
        suffix_zeros[k] = suffix_zeros[k + 1] + (c == 0.0 ? 1 : 0);
    }

    std::vector<double> log_terms;
    log_terms.reserve(k_count + 1);
    double initial_log = -std::numeric_limits<double>::infinity();
    if (initial_gap > 0.0 && suffix_zeros[0] == 0) {
        initial_log = std::log(initial_gap) + suffix_log[0];
    }
    for (int k = 0; k < k_count; ++k) {
        if (costs[k].additive <= 0.0 || suffix_zeros[k + 1] > 0) continue;
        log_terms.push_back(std::log(costs[k].additive) + suffix_log[k + 1]);
    }

    const auto logsumexp = [](const std::vector<double>& v) {
        if (v.empty()) return -std::numeric_limits<double>::infinity();
        const double peak = *std::max_element(v.begin(), v.end());
        if (std::isinf(peak)) return peak;
        double s = 0.0;
        for (double x : v) s += std::exp(x - peak);
        return peak + std::log(s);
    };

    const double tail_log = logsumexp(log_terms);
    out.initial_term = std::isinf(initial_log) ? 0.0 : std::exp(initial_log);
    out.tail_term = std::isinf(tail_log) ? 0.0 : std::exp(tail_log);
    out.total = out.initial_term + out.tail_term;
    return out;
}

double finite_horizon_bound(const std::vector<SlotCost>& costs, double initial_gap) {
    return finite_horizon_breakdown(costs, initial_gap).total;
}

double asymptotic_objective(const std::vector<SlotCost>& costs) {
    return finite_horizon_breakdown(costs, 0.0).tail_term;
}

std::vector<SlotCost> schedule_costs(const Scenario& scenario, const std::vector<Vec3>& q_slots,
                                     const std::vector<std::vector<double>>& a,
                                     const std::vector<std::vector<double>>& b,
                                     const BoundParams& params, bool periodic) {
    const std::vector<double> g = g_series(scenario, q_slots, a, b, params.staleness_bound,
                                           periodic);
    std::vector<SlotCost> costs(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) costs[k] = slot_cost(g[k], params);
    return costs;
}

std::vector<SlotCost> schedule_costs(const Scenario& scenario, const Schedule& schedule,
                                     const BoundParams& params, bool periodic) {
    const int m_count = schedule.device_count();
    const int k_count = schedule.slot_count();
    std::vector<std::vector<double>> a(m_count, std::vector<double>(k_count, 0.0));
    for (int m = 0; m < m_count; ++m) {
        for (int k = 0; k < k_count; ++k) a[m][k] = schedule.selection[m][k] ? 1.0 : 0.0;
    }
    std::vector<Vec3> q_slots(schedule.trajectory.positions.begin() + 1,
                              schedule.trajectory.positions.end());
    return schedule_costs(scenario, q_slots, a, schedule.amplitudes, params, periodic);
}

double asymptotic_objective(const Scenario& scenario, const Schedule& schedule,
                            const BoundParams& params, bool periodic) {
    return asymptotic_objective(schedule_costs(scenario, schedule, params, periodic));
}

}  // namespace uavafl
