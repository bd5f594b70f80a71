#pragma once

#include <vector>

#include "uavafl/afl.hpp"
#include "uavafl/scenario.hpp"

namespace uavafl {

// Per-slot convergence cost derived from g(q_k, a_k, b_k).
struct SlotCost {
    double g_value = 0.0;
    double contraction = 0.0;  // 1 - (mu/L)(1 - g * alpha2)
    double additive = 0.0;     // (1/2L)(g (delta^2 + alpha1) + 6 delta^2)
    bool convergent = true;    // contraction <= 1
};

SlotCost slot_cost(double g_value, const BoundParams& params);

// Bracket term of g for one slot: sum_m a_m - (sum_m a_m sqrt(g0)/d_m b_m)^2
// / (sum_m a_m g0/d_m^2 b_m^2 + noise/2). Non-negative for a in [0,1]^M.
double g_bracket(const std::vector<double>& distances, const std::vector<double>& a_col,
                 const std::vector<double>& b_col, double g0, double noise_power);

// g over the window j = k-S..k (clamped at the horizon start, or wrapped when
// the schedule is a periodic cycle). Slots are 1-based; q_slots[j-1] = q(j).
double g_value(const Scenario& scenario, const std::vector<Vec3>& q_slots,
               const std::vector<std::vector<double>>& a,
               const std::vector<std::vector<double>>& b, int slot, int staleness_bound,
               bool periodic = false);

std::vector<double> g_series_serial(const Scenario& scenario, const std::vector<Vec3>& q_slots,
                                    const std::vector<std::vector<double>>& a,
                                    const std::vector<std::vector<double>>& b,
                                    int staleness_bound, bool periodic = false);
std::vector<double> g_series(const Scenario& scenario, const std::vector<Vec3>& q_slots,
                             const std::vector<std::vector<double>>& a,
                             const std::vector<std::vector<double>>& b, int staleness_bound,
                             bool periodic = false);

// Device-selection MSE bound, Theta(k) * 8 ((M - n)/M)^2.
double e_d_bound(double theta, int device_count, int selected_count);

// Model-asynchrony MSE bound, 6 S^2 Theta + 6 S sum_window E||e_c||^2 + 2 delta^2.
double e_a_bound(double theta, int staleness_bound, double window_comm_mse_sum, double delta);

double theta_value(const BoundParams& params, double grad_norm_sq);

// Finite-horizon bound split into the initial-gap term and the additive tail;
// evaluated with log-space suffix products so K = 10^4 cannot underflow.
struct BoundBreakdown {
    double initial_term = 0.0;
    double tail_term = 0.0;
    double total = 0.0;
    bool all_convergent = true;
};

BoundBreakdown finite_horizon_breakdown(const std::vector<SlotCost>& costs, double initial_gap);
double finite_horizon_bound(const std::vector<SlotCost>& costs, double initial_gap);

// The optimizer objective: the additive tail alone.
double asymptotic_objective(const std::vector<SlotCost>& costs);

std::vector<SlotCost> schedule_costs(const Scenario& scenario, const std::vector<Vec3>& q_slots,
                                     const std::vector<std::vector<double>>& a,
                                     const std::vector<std::vector<double>>& b,
                                     const BoundParams& params, bool periodic = false);
std::vector<SlotCost> schedule_costs(const Scenario& scenario, const Schedule& schedule,
                                     const BoundParams& params, bool periodic = false);

double asymptotic_objective(const Scenario& scenario, const Schedule& schedule,
                            const BoundParams& params, bool periodic = false);

}  // namespace uavafl
