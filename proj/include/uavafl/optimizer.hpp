#pragma once

#include <cstdint>
#include <vector>

#include "uavafl/afl.hpp"
#include "uavafl/bound.hpp"
#include "uavafl/scenario.hpp"
#include "uavafl/solver.hpp"

namespace uavafl {

// Materialized constraint system of the joint design problem: staleness
// windows (sum >= 1), busy windows (sum <= 1), binary selection, power box
// and the mechanics set. `periodic` wraps windows and the seam acceleration
// so an optimized cycle can be tiled over a long horizon.
struct ProblemSpec {
    Scenario scenario;  // num_slots equals the optimization horizon K
    BoundParams params;
    int horizon = 0;
    bool periodic = false;

    struct Window {
        int device = 0;
        std::vector<int> slots;  // 1-based slot indices
    };
    std::vector<Window> staleness_windows;  // sum a >= 1
    std::vector<Window> busy_windows;       // sum a <= 1
};

ProblemSpec build_problem(const Scenario& scenario, const BoundParams& params, int horizon,
                          bool periodic = false);

// Elementwise optimal slack: abar* = (a^2 + a) / (1 + a^2).
double slack_update_scalar(double a);
std::vector<std::vector<double>> slack_update(const std::vector<std::vector<double>>& a);

// Penalty P(A, Abar) = sum_{m,k} [a(1-abar)]^2 + [a-abar]^2 (unweighted).
double binary_penalty(const std::vector<std::vector<double>>& a,
                      const std::vector<std::vector<double>>& abar);
// max_{m,k} min(a, 1-a): how far the iterate is from a binary matrix.
double max_binary_deviation(const std::vector<std::vector<double>>& a);

// GP-transform auxiliaries: p = (additive_1..K, contraction_1..K) and
// y = log p; the transformed objective log sum_k exp(c_k^T y) then equals
// the log of the product-form objective.
std::vector<double> tight_p(const std::vector<SlotCost>& costs);
std::vector<double> tight_y(const std::vector<double>& p);
double gp_objective(const std::vector<double>& y, int horizon);

struct OptimizerState {
    std::vector<Vec3> q;                  // q(0..K), meters
    std::vector<std::vector<double>> a;   // M x K in [0,1]
    std::vector<std::vector<double>> abar;
    std::vector<std::vector<double>> b;   // M x K amplitudes
    std::vector<double> p, y, f, d;       // auxiliaries of the last solve
    double eta = 10.0;
    int outer = 0;
    int inner_total = 0;
};

struct SubproblemSolution {
    double objective = 0.0;
    double stationarity_residual = 0.0;
    double max_violation = 0.0;
    bool converged = false;
    int newton_iterations = 0;
};

struct TraceRow {
    int outer = 0;
    int inner = 0;
    double objective = 0.0;         // penalized objective L of (Q, A, B, Abar)
    double binary_violation = 0.0;  // P(A, Abar)
    double binary_max_dev = 0.0;    // max min(a, 1-a)
};

struct TwoLayerOptions {
    double eps1 = 1e-2;       // inner relative-improvement stop
    double eps2 = 1.0;        // outer stop on the penalty value P(A, Abar)
    double eta0 = 10.0;
    double eta_scale = 0.5;   // 0 < s < 1
    int max_inner = 10;
    int max_outer = 20;
    bool optimize_trajectory = true;
    bool optimize_amplitudes = true;
    solver::Options solver;
};

struct TwoLayerResult {
    Schedule schedule;  // rounded binary schedule with audit Z
    OptimizerState state;
    std::vector<TraceRow> trace;
    double objective = 0.0;         // asymptotic objective of the schedule
    double binary_violation = 0.0;  // final P(A, Abar)
    bool repaired = false;
    std::vector<SubproblemSolution> solves;
};

// Penalized objective of the relaxation at tight auxiliaries:
// log(asymptotic objective) + P(A, Abar) / eta.
double penalized_objective(const ProblemSpec& spec, const std::vector<Vec3>& q,
                           const std::vector<std::vector<double>>& a,
                           const std::vector<std::vector<double>>& b,
                           const std::vector<std::vector<double>>& abar, double eta);

// One convex A-step: optimizes (A, p, y, f, d) against the SCA surrogate at
// the current iterate. Updates state in place on success.
SubproblemSolution selection_subproblem(const ProblemSpec& spec, OptimizerState& state,
                                        const TwoLayerOptions& options);

// One convex (Q, B)-step over (q, b, u, v, p, y, f, d).
SubproblemSolution trajectory_power_subproblem(const ProblemSpec& spec, OptimizerState& state,
                                               const TwoLayerOptions& options);

OptimizerState default_initialization(const ProblemSpec& spec);

// Threshold rounding at 0.5 plus a per-device greedy repair of staleness
// windows; repair is a safety net and reports whether it fired.
std::pair<Schedule, bool> round_and_repair(const ProblemSpec& spec, const OptimizerState& state);

TwoLayerResult two_layer_solve(const ProblemSpec& spec, const TwoLayerOptions& options = {});
TwoLayerResult two_layer_solve(const ProblemSpec& spec, const OptimizerState& init,
                               const TwoLayerOptions& options);

}  // namespace uavafl
