#include <algorithm>
#include <cmath>
#include <limits>

#include "uavafl/errors.hpp"
#include "uavafl/optimizer.hpp"

namespace uavafl {

namespace {

constexpr double kMarginRel = 1e-5;

// ---------------------------------------------------------------------------
// Shared pieces between the two SCA blocks.
// ---------------------------------------------------------------------------

// Scaled per-slot gains: v = |h| b / sigma_ref with sigma_ref^2 = noise/2.
// In these units the epsilon fraction is (a.v)^2 / (a.(v o v) + 1).
double sigma_ref(const Scenario& s) { return std::sqrt(s.noise_power / 2.0); }

std::vector<std::vector<double>> scaled_gains(const ProblemSpec& spec,
                                              const std::vector<Vec3>& q,
                                              const std::vector<std::vector<double>>& b) {
    const Scenario& sc = spec.scenario;
    const int m_count = sc.device_count();
    const int k_count = spec.horizon;
    const double root_g0 = std::sqrt(sc.g0);
    const double sref = sigma_ref(sc);
    std::vector<std::vector<double>> v(m_count, std::vector<double>(k_count));
    for (int m = 0; m < m_count; ++m) {
        for (int k = 1; k <= k_count; ++k) {
            const double dist = distance(q[k], sc.devices[m].position);
            if (dist <= 0.0) throw SingularityError("UAV coincides with a device");
            v[m][k - 1] = root_g0 * b[m][k - 1] / (dist * sref);
        }
    }
    return v;
}

double epsilon_fraction(const std::vector<double>& a_col, const std::vector<double>& v_col) {
    double num = 0.0;
    double den = 1.0;
    for (std::size_t m = 0; m < a_col.size(); ++m) {
        num += a_col[m] * v_col[m];
        den += a_col[m] * v_col[m] * v_col[m];
    }
    return num * num / den;
}

// Gradient of the fraction with respect to a at fixed gains.
std::vector<double> epsilon_gradient_a(const std::vector<double>& a_col,
                                       const std::vector<double>& v_col) {
    double num = 0.0;
    double den = 1.0;
    for (std::size_t m = 0; m < a_col.size(); ++m) {
        num += a_col[m] * v_col[m];
        den += a_col[m] * v_col[m] * v_col[m];
    }
    std::vector<double> g(a_col.size());
    for (std::size_t m = 0; m < a_col.size(); ++m) {
        g[m] = (2.0 * v_col[m] * num * den - num * num * v_col[m] * v_col[m]) / (den * den);
    }
    return g;
}

// Window of g at slot k: j = k-S..k clamped or wrapped, 1-based.
std::vector<int> g_window(const ProblemSpec& spec, int k) {
    std::vector<int> w;
    for (int j = k - spec.params.staleness_bound; j <= k; ++j) {
        if (spec.periodic) {
            w.push_back(((j - 1) % spec.horizon + spec.horizon) % spec.horizon + 1);
        } else if (j >= 1) {
            w.push_back(j);
        }
    }
    return w;
}

// Variable layout of the auxiliary block (p, y, f, d). The tail entry
// p_{K+1} / y_{K+1} never appears in the objective and is pinned to its
// tight value instead of being a variable.
struct AuxLayout {
    int k_count = 0;
    int off_p = 0;  // 2K slots, index K (tail j=0) unused as a variable
    int off_y = 0;
    int off_f = 0;
    int off_d = 0;
    double pinned_p = 0.0;  // tight contraction of slot 1
    double pinned_y = 0.0;

    bool pinned(int i) const { return i == k_count; }
    int p_var(int i) const { return off_p + (i < k_count ? i : i - 1); }
    int y_var(int i) const { return off_y + (i < k_count ? i : i - 1); }
    int vars() const { return 6 * k_count - 2; }  // within the aux block
};

// Objective: log sum_k exp(c_k^T y) plus the quadratic binary penalty on the
// free selection variables.
class BlockObjective : public solver::Objective {
public:
    struct PenaltyEntry {
        int var = 0;
        double abar = 0.0;
    };

    BlockObjective(AuxLayout layout, std::vector<PenaltyEntry> penalty, double inv_eta)
        : layout_(layout), penalty_(std::move(penalty)), inv_eta_(inv_eta) {}

    // Terms T_t = y_t + sum_{j=t+1..K-1} z_j with z_j the contraction logs
    // (z_0 pinned). Returns softmax weights as a side effect.
    double terms(const Eigen::VectorXd& x, std::vector<double>& weights) const {
        const int k = layout_.k_count;
        std::vector<double> z(k);
        z[0] = layout_.pinned_y;
        for (int j = 1; j < k; ++j) z[j] = x[layout_.y_var(k + j)];
        std::vector<double> suffix(k + 1, 0.0);
        for (int j = k - 1; j >= 0; --j) suffix[j] = suffix[j + 1] + z[j];
        double peak = -std::numeric_limits<double>::infinity();
        std::vector<double> t(k);
        for (int i = 0; i < k; ++i) {
            t[i] = x[layout_.y_var(i)] + suffix[i + 1];
            peak = std::max(peak, t[i]);
        }
        double sum = 0.0;
        weights.resize(k);
        for (int i = 0; i < k; ++i) {
            weights[i] = std::exp(t[i] - peak);
            sum += weights[i];
        }
        for (double& w : weights) w /= sum;
        return peak + std::log(sum);
    }

    double value(const Eigen::VectorXd& x) const override {
        std::vector<double> w;
        double v = terms(x, w);
        for (const PenaltyEntry& e : penalty_) {
            const double a = x[e.var];
            const double s = 1.0 - e.abar;
            v += inv_eta_ * (s * s * a * a + (a - e.abar) * (a - e.abar));
        }
        return v;
    }

    void add_gradient(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const override {
        const int k = layout_.k_count;
        std::vector<double> w;
        terms(x, w);
        std::vector<double> prefix(k + 1, 0.0);  // prefix[j] = sum_{t<j} w_t
        for (int j = 0; j < k; ++j) prefix[j + 1] = prefix[j] + w[j];
        for (int i = 0; i < k; ++i) grad[layout_.y_var(i)] += w[i];
        for (int j = 1; j < k; ++j) grad[layout_.y_var(k + j)] += prefix[j];
        for (const PenaltyEntry& e : penalty_) {
            const double a = x[e.var];
            const double s = 1.0 - e.abar;
            grad[e.var] += inv_eta_ * (2.0 * s * s * a + 2.0 * (a - e.abar));
        }
    }

    void add_hessian(const Eigen::VectorXd& x, solver::Triplets& out) const override {
        const int k = layout_.k_count;
        std::vector<double> w;
        terms(x, w);
        std::vector<double> prefix(k + 1, 0.0);
        for (int j = 0; j < k; ++j) prefix[j + 1] = prefix[j] + w[j];

        // First part: sum_t w_t c_t c_t^T.
        for (int i = 0; i < k; ++i) {
            out.emplace_back(layout_.y_var(i), layout_.y_var(i), w[i]);
            for (int j = i + 1; j < k; ++j) {  // head i with tail j
                out.emplace_back(layout_.y_var(i), layout_.y_var(k + j), w[i]);
                out.emplace_back(layout_.y_var(k + j), layout_.y_var(i), w[i]);
            }
        }
        for (int i = 1; i < k; ++i) {
            for (int j = 1; j < k; ++j) {
                out.emplace_back(layout_.y_var(k + i), layout_.y_var(k + j),
                                 prefix[std::min(i, j)]);
            }
        }
        // Minus the rank-one softmax-mean term.
        std::vector<std::pair<int, double>> u;
        for (int i = 0; i < k; ++i) {
            if (w[i] > 0.0) u.emplace_back(layout_.y_var(i), w[i]);
        }
        for (int j = 1; j < k; ++j) {
            if (prefix[j] > 0.0) u.emplace_back(layout_.y_var(k + j), prefix[j]);
        }
        for (const auto& [i, wi] : u) {
            for (const auto& [j, wj] : u) out.emplace_back(i, j, -wi * wj);
        }
        for (const PenaltyEntry& e : penalty_) {
            const double s = 1.0 - e.abar;
            out.emplace_back(e.var, e.var, inv_eta_ * (2.0 * s * s + 2.0));
        }
    }

private:
    AuxLayout layout_;
    std::vector<PenaltyEntry> penalty_;
    double inv_eta_;
};

// Links between f, p and y:
//   p_k      >= ((d^2+a1) f_k + 6 d^2) / (2L)
//   p_{K+k}  >= 1 - mu/L + (mu/L) a2 f_k
//   p_i      <= e^{yt_i} (1 + y_i - yt_i)
void add_aux_links(solver::Problem& prob, const AuxLayout& lay, const BoundParams& bp,
                   const std::vector<double>& y_t) {
    const int k_count = lay.k_count;
    const double dd = bp.delta * bp.delta;
    const double ratio = bp.mu / bp.lipschitz;
    for (int k = 0; k < k_count; ++k) {
        // additive link
        {
            solver::Constraint c;
            c.lin.emplace_back(lay.off_f + k, (dd + bp.alpha1) / (2.0 * bp.lipschitz));
            c.lin.emplace_back(lay.p_var(k), -1.0);
            c.offset = 3.0 * dd / bp.lipschitz;
            prob.constraints.push_back(std::move(c));
        }
        // contraction link; the pinned tail (k == 0) never reaches the
        // objective, so its link is vacuous and dropped with the variable
        if (!lay.pinned(k_count + k)) {
            solver::Constraint c;
            c.lin.emplace_back(lay.off_f + k, ratio * bp.alpha2);
            c.lin.emplace_back(lay.p_var(k_count + k), -1.0);
            c.offset = 1.0 - ratio;
            prob.constraints.push_back(std::move(c));
        }
    }
    for (int i = 0; i < 2 * k_count; ++i) {
        if (lay.pinned(i)) continue;
        const double e = std::exp(y_t[i]);
        solver::Constraint c;
        c.lin.emplace_back(lay.p_var(i), 1.0);
        c.lin.emplace_back(lay.y_var(i), -e);
        c.offset = e * (y_t[i] - 1.0);
        prob.constraints.push_back(std::move(c));
    }
}

// Strictly feasible auxiliary start given f-floor values and linearization
// point y_t; writes into x.
void seed_auxiliaries(const AuxLayout& lay, const BoundParams& bp,
                      const std::vector<double>& floor_values,
                      const std::vector<double>& y_t, Eigen::VectorXd& x) {
    const int k_count = lay.k_count;
    const double dd = bp.delta * bp.delta;
    const double ratio = bp.mu / bp.lipschitz;
    for (int k = 0; k < k_count; ++k) {
        const double f = floor_values[k] * (1.0 + kMarginRel) + kMarginRel;
        x[lay.off_f + k] = f;
        const double p_add = ((dd + bp.alpha1) * f + 6.0 * dd) / (2.0 * bp.lipschitz);
        x[lay.p_var(k)] = p_add * (1.0 + kMarginRel);
        if (!lay.pinned(k_count + k)) {
            const double p_con = 1.0 - ratio + ratio * bp.alpha2 * f;
            x[lay.p_var(k_count + k)] = p_con * (1.0 + kMarginRel);
        }
    }
    for (int i = 0; i < 2 * k_count; ++i) {
        if (lay.pinned(i)) continue;
        const double p = x[lay.p_var(i)];
        x[lay.y_var(i)] = y_t[i] - 1.0 + p * std::exp(-y_t[i]) + kMarginRel;
    }
}

// Tight y used as the exp-linearization point at the current iterate.
std::vector<double> tight_y_at(const ProblemSpec& spec, const std::vector<Vec3>& q,
                               const std::vector<std::vector<double>>& a,
                               const std::vector<std::vector<double>>& b) {
    std::vector<Vec3> q_slots(q.begin() + 1, q.end());
    const std::vector<SlotCost> costs =
        schedule_costs(spec.scenario, q_slots, a, b, spec.params, spec.periodic);
    return tight_y(tight_p(costs));
}

// Forced-selection propagation: staleness windows of one slot force a 1,
// busy windows holding a forced 1 force the rest to 0, and a staleness
// window whose other slots are all 0 forces its last free slot to 1.
// Devices whose compute time saturates the staleness bound (c+1 == S) have
// no continuous interior; their rows are pinned to an exact period-S comb.
std::vector<std::vector<int>> propagate_forced(const ProblemSpec& spec,
                                               const std::vector<std::vector<double>>& hint) {
    const int m_count = spec.scenario.device_count();
    const int k_count = spec.horizon;
    std::vector<std::vector<int>> forced(m_count, std::vector<int>(k_count, -1));

    for (int m = 0; m < m_count; ++m) {
        const int c = spec.scenario.devices[m].compute_slots;
        if (c + 1 != spec.params.staleness_bound) continue;
        const int period = spec.params.staleness_bound;
        int best_phase = 1;
        double best_score = -1.0;
        for (int phase = 1; phase <= period; ++phase) {
            double score = 0.0;
            for (int k = phase; k <= k_count; k += period) score += hint[m][k - 1];
            if (score > best_score) {
                best_score = score;
                best_phase = phase;
            }
        }
        for (int k = 1; k <= k_count; ++k) {
            forced[m][k - 1] = ((k - best_phase) % period == 0 && k >= best_phase) ? 1 : 0;
        }
    }

    bool changed = true;
    while (changed) {
        changed = false;
        for (const ProblemSpec::Window& w : spec.staleness_windows) {
            int ones = 0;
            std::vector<int> free_slots;
            for (int slot : w.slots) {
                const int f = forced[w.device][slot - 1];
                if (f == 1) ++ones;
                if (f == -1) free_slots.push_back(slot);
            }
            if (ones >= 1) continue;
            if (free_slots.empty()) throw InfeasibleError("staleness window cannot be covered");
            if (free_slots.size() == 1) {
                forced[w.device][free_slots[0] - 1] = 1;
                changed = true;
            }
        }
        for (const ProblemSpec::Window& w : spec.busy_windows) {
            int ones = 0;
            for (int slot : w.slots) {
                if (forced[w.device][slot - 1] == 1) ++ones;
            }
            if (ones > 1) throw InfeasibleError("busy window holds two forced selections");
            if (ones == 1) {
                for (int slot : w.slots) {
                    if (forced[w.device][slot - 1] == -1) {
                        forced[w.device][slot - 1] = 0;
                        changed = true;
                    }
                }
            }
        }
    }
    return forced;
}

// Runs the barrier solver; if the constructed start turns out not to be
// strictly interior, a phase-I pass recovers one first.
solver::Solution solve_with_recovery(const solver::Problem& prob, const Eigen::VectorXd& x0,
                                     const solver::Options& options) {
    try {
        return solver::minimize(prob, x0, options);
    } catch (const InfeasibleError&) {
        const solver::InteriorResult interior = solver::find_interior(prob, x0, options);
        if (!interior.point) {
            throw InfeasibleError("subproblem has no strict interior (certificate " +
                                  std::to_string(interior.certificate) + ")");
        }
        return solver::minimize(prob, *interior.point, options);
    }
}

double blend_accept(const ProblemSpec& spec, OptimizerState& state,
                    const std::vector<std::vector<double>>& a_new,
                    const std::vector<Vec3>& q_new,
                    const std::vector<std::vector<double>>& b_new) {
    // Keep the step only if the exact penalized objective improves,
    // backtracking along the segment to the previous iterate (the feasible
    // set of the relaxation is convex, so blends stay feasible).
    const double base =
        penalized_objective(spec, state.q, state.a, state.b, state.abar, state.eta);
    const int m_count = spec.scenario.device_count();
    const int k_count = spec.horizon;
    double theta = 1.0;
    for (int attempt = 0; attempt < 6; ++attempt) {
        std::vector<std::vector<double>> a_try(m_count, std::vector<double>(k_count));
        std::vector<std::vector<double>> b_try(m_count, std::vector<double>(k_count));
        std::vector<Vec3> q_try(state.q.size());
        for (int m = 0; m < m_count; ++m) {
            for (int k = 0; k < k_count; ++k) {
                a_try[m][k] = (1.0 - theta) * state.a[m][k] + theta * a_new[m][k];
                b_try[m][k] = (1.0 - theta) * state.b[m][k] + theta * b_new[m][k];
            }
        }
        for (std::size_t i = 0; i < q_try.size(); ++i) {
            q_try[i] = (1.0 - theta) * state.q[i] + theta * q_new[i];
        }
        const double value =
            penalized_objective(spec, q_try, a_try, b_try, state.abar, state.eta);
        if (value <= base + 1e-12 * std::max(1.0, std::abs(base))) {
            state.a = std::move(a_try);
            state.b = std::move(b_try);
            state.q = std::move(q_try);
            return value;
        }
        theta *= 0.5;
    }
    return base;  // keep the previous iterate
}

}  // namespace

// ---------------------------------------------------------------------------
// Selection block.
// ---------------------------------------------------------------------------

SubproblemSolution selection_subproblem(const ProblemSpec& spec, OptimizerState& state,
                                        const TwoLayerOptions& options) {
    const Scenario& sc = spec.scenario;
    const int m_count = sc.device_count();
    const int k_count = spec.horizon;
    const int s_bound = spec.params.staleness_bound;

    const std::vector<std::vector<double>> gains = scaled_gains(spec, state.q, state.b);
    const std::vector<std::vector<int>> forced = propagate_forced(spec, state.a);

    // Pin forced entries into the iterate so expansion points line up.
    for (int m = 0; m < m_count; ++m) {
        for (int k = 0; k < k_count; ++k) {
            if (forced[m][k] >= 0) state.a[m][k] = forced[m][k];
        }
    }

    // Index map for free selection variables.
    std::vector<std::vector<int>> a_var(m_count, std::vector<int>(k_count, -1));
    int n_a = 0;
    for (int m = 0; m < m_count; ++m) {
        for (int k = 0; k < k_count; ++k) {
            if (forced[m][k] == -1) a_var[m][k] = n_a++;
        }
    }

    AuxLayout lay;
    lay.k_count = k_count;
    lay.off_p = n_a;
    lay.off_y = n_a + 2 * k_count - 1;
    lay.off_f = n_a + 4 * k_count - 2;
    lay.off_d = n_a + 5 * k_count - 2;
    const int n = n_a + lay.vars();

    const std::vector<double> y_t = tight_y_at(spec, state.q, state.a, state.b);
    {
        std::vector<Vec3> q_slots(state.q.begin() + 1, state.q.end());
        const std::vector<SlotCost> costs =
            schedule_costs(sc, q_slots, state.a, state.b, spec.params, spec.periodic);
        lay.pinned_p = costs[0].contraction;
        lay.pinned_y = std::log(lay.pinned_p);
    }

    std::vector<BlockObjective::PenaltyEntry> penalty;
    penalty.reserve(n_a);
    for (int m = 0; m < m_count; ++m) {
        for (int k = 0; k < k_count; ++k) {
            if (a_var[m][k] >= 0) penalty.push_back({a_var[m][k], state.abar[m][k]});
        }
    }
    const BlockObjective objective(lay, std::move(penalty), 1.0 / state.eta);

    solver::Problem prob;
    prob.dimension = n;
    prob.objective = &objective;

    // Box on free selections.
    for (int m = 0; m < m_count; ++m) {
        for (int k = 0; k < k_count; ++k) {
            if (a_var[m][k] < 0) continue;
            prob.constraints.push_back(solver::Constraint::linear({{a_var[m][k], -1.0}}, 0.0));
            prob.constraints.push_back(solver::Constraint::linear({{a_var[m][k], 1.0}}, 1.0));
        }
    }
    // Staleness and busy windows over free variables.
    for (const ProblemSpec::Window& w : spec.staleness_windows) {
        double fixed = 0.0;
        std::vector<std::pair<int, double>> coeffs;
        for (int slot : w.slots) {
            if (a_var[w.device][slot - 1] >= 0) {
                coeffs.emplace_back(a_var[w.device][slot - 1], -1.0);
            } else {
                fixed += forced[w.device][slot - 1];
            }
        }
        if (fixed >= 1.0 || coeffs.empty()) continue;
        prob.constraints.push_back(solver::Constraint::linear(coeffs, -(1.0 - fixed)));
    }
    for (const ProblemSpec::Window& w : spec.busy_windows) {
        double fixed = 0.0;
        std::vector<std::pair<int, double>> coeffs;
        for (int slot : w.slots) {
            if (a_var[w.device][slot - 1] >= 0) {
                coeffs.emplace_back(a_var[w.device][slot - 1], 1.0);
            } else {
                fixed += forced[w.device][slot - 1];
            }
        }
        if (coeffs.empty()) continue;
        prob.constraints.push_back(solver::Constraint::linear(coeffs, 1.0 - fixed));
    }

    // f-floor: 18S^2 + 24((M-u_k)/M)^2 + 18S sum_W (u_j - d_j) <= f_k.
    const double m_d = static_cast<double>(m_count);
    std::vector<double> floor_at_start(k_count, 0.0);
    for (int k = 1; k <= k_count; ++k) {
        solver::Constraint c;
        double offset = 18.0 * s_bound * s_bound + 24.0;
        double u_fixed = 0.0;
        std::vector<int> free_col;
        for (int m = 0; m < m_count; ++m) {
            if (a_var[m][k - 1] >= 0) {
                free_col.push_back(a_var[m][k - 1]);
            } else {
                u_fixed += forced[m][k - 1];
            }
        }
        offset += -48.0 / m_d * u_fixed + 24.0 / (m_d * m_d) * u_fixed * u_fixed;
        for (int i : free_col) {
            c.lin.emplace_back(i, -48.0 / m_d + 48.0 / (m_d * m_d) * u_fixed);
            for (int j : free_col) c.quad.emplace_back(i, j, 48.0 / (m_d * m_d));
        }
        for (int j : g_window(spec, k)) {
            for (int m = 0; m < m_count; ++m) {
                if (a_var[m][j - 1] >= 0) {
                    c.lin.emplace_back(a_var[m][j - 1], 18.0 * s_bound);
                } else {
                    offset += 18.0 * s_bound * forced[m][j - 1];
                }
            }
            c.lin.emplace_back(lay.off_d + j - 1, -18.0 * s_bound);
        }
        c.lin.emplace_back(lay.off_f + k - 1, -1.0);
        c.offset = offset;
        prob.constraints.push_back(std::move(c));
    }

    // d-cap: d_k <= eps(a^t) + grad_eps^T (a_k - a^t).
    std::vector<double> r_values(k_count);
    std::vector<std::vector<double>> eps_grad(k_count);
    for (int k = 0; k < k_count; ++k) {
        std::vector<double> a_col(m_count), v_col(m_count);
        for (int m = 0; m < m_count; ++m) {
            a_col[m] = state.a[m][k];
            v_col[m] = gains[m][k];
        }
        r_values[k] = epsilon_fraction(a_col, v_col);
        eps_grad[k] = epsilon_gradient_a(a_col, v_col);
        solver::Constraint c;
        c.lin.emplace_back(lay.off_d + k, 1.0);
        double offset = -r_values[k];
        for (int m = 0; m < m_count; ++m) {
            if (a_var[m][k] >= 0) {
                c.lin.emplace_back(a_var[m][k], -eps_grad[k][m]);
                offset += eps_grad[k][m] * state.a[m][k];
            }
        }
        c.offset = offset;
        prob.constraints.push_back(std::move(c));
    }

    add_aux_links(prob, lay, spec.params, y_t);

    // Start near the iterate, pulled slightly toward the box midpoint so a
    // boundary iterate still yields a strict interior.
    Eigen::VectorXd x0 = Eigen::VectorXd::Zero(n);
    const double pull = 1e-3;
    for (int m = 0; m < m_count; ++m) {
        for (int k = 0; k < k_count; ++k) {
            if (a_var[m][k] >= 0) {
                x0[a_var[m][k]] = (1.0 - pull) * state.a[m][k] + pull * 0.5;
            }
        }
    }
    for (int k = 0; k < k_count; ++k) {
        double cap = r_values[k];
        for (int m = 0; m < m_count; ++m) {
            if (a_var[m][k] >= 0) cap += eps_grad[k][m] * (x0[a_var[m][k]] - state.a[m][k]);
        }
        x0[lay.off_d + k] = cap - std::max(1e-8, kMarginRel * std::abs(cap));
    }
    for (int k = 1; k <= k_count; ++k) {
        double u_k = 0.0;
        for (int m = 0; m < m_count; ++m) {
            u_k += a_var[m][k - 1] >= 0 ? x0[a_var[m][k - 1]] : state.a[m][k - 1];
        }
        double value = 18.0 * s_bound * s_bound + 24.0 * std::pow((m_d - u_k) / m_d, 2.0);
        for (int j : g_window(spec, k)) {
            double u_j = 0.0;
            for (int m = 0; m < m_count; ++m) {
                u_j += a_var[m][j - 1] >= 0 ? x0[a_var[m][j - 1]] : state.a[m][j - 1];
            }
            value += 18.0 * s_bound * (u_j - x0[lay.off_d + j - 1]);
        }
        floor_at_start[k - 1] = value;
    }
    seed_auxiliaries(lay, spec.params, floor_at_start, y_t, x0);

    const solver::Solution sol = solve_with_recovery(prob, x0, options.solver);

    std::vector<std::vector<double>> a_new = state.a;
    for (int m = 0; m < m_count; ++m) {
        for (int k = 0; k < k_count; ++k) {
            if (a_var[m][k] >= 0) a_new[m][k] = std::clamp(sol.x[a_var[m][k]], 0.0, 1.0);
        }
    }
    blend_accept(spec, state, a_new, state.q, state.b);

    state.p.assign(2 * k_count, 0.0);
    state.y.assign(2 * k_count, 0.0);
    state.f.assign(k_count, 0.0);
    state.d.assign(k_count, 0.0);
    for (int i = 0; i < 2 * k_count; ++i) {
        state.p[i] = lay.pinned(i) ? lay.pinned_p : sol.x[lay.p_var(i)];
        state.y[i] = lay.pinned(i) ? lay.pinned_y : sol.x[lay.y_var(i)];
    }
    for (int k = 0; k < k_count; ++k) {
        state.f[k] = sol.x[lay.off_f + k];
        state.d[k] = sol.x[lay.off_d + k];
    }

    SubproblemSolution out;
    out.objective = sol.objective_value;
    out.stationarity_residual = sol.stationarity_residual;
    out.max_violation = sol.max_violation;
    out.converged = sol.converged;
    out.newton_iterations = sol.newton_iterations;
    return out;
}

// ---------------------------------------------------------------------------
// Trajectory and transmit-power block.
// ---------------------------------------------------------------------------

SubproblemSolution trajectory_power_subproblem(const ProblemSpec& spec, OptimizerState& state,
                                               const TwoLayerOptions& options) {
    const Scenario& sc = spec.scenario;
    const int m_count = sc.device_count();
    const int k_count = spec.horizon;
    const int s_bound = spec.params.staleness_bound;
    const double h = sc.altitude;
    const double sref = sigma_ref(sc);
    const double kappa = std::sqrt(sc.g0) / (sref * h);
    const double cap = sc.amplitude_cap();
    const bool free_q = options.optimize_trajectory;
    const bool free_b = options.optimize_amplitudes;

    if (!free_q && !free_b) {
        SubproblemSolution trivial;
        trivial.converged = true;
        return trivial;
    }

    // Layout: [qx qy per interior slot][b][u][v][aux].
    const int nq = free_q ? k_count - 1 : 0;  // slots 1..K-1
    const int nb = free_b ? m_count * k_count : 0;
    const int off_b = 2 * nq;
    const int off_u = off_b + nb;
    const int off_v = off_u + m_count * k_count;
    AuxLayout lay;
    lay.k_count = k_count;
    lay.off_p = off_v + m_count * k_count;
    lay.off_y = lay.off_p + 2 * k_count - 1;
    lay.off_f = lay.off_p + 4 * k_count - 2;
    lay.off_d = lay.off_p + 5 * k_count - 2;
    const int n = lay.off_p + lay.vars();

    const auto qx_var = [&](int slot) { return free_q ? 2 * (slot - 1) : -1; };  // slot 1..K-1
    const auto qy_var = [&](int slot) { return free_q ? 2 * (slot - 1) + 1 : -1; };
    const auto b_var = [&](int m, int k) { return free_b ? off_b + m * k_count + k : -1; };
    const auto u_var = [&](int m, int k) { return off_u + m * k_count + k; };
    const auto v_var = [&](int m, int k) { return off_v + m * k_count + k; };

    const std::vector<double> y_t = tight_y_at(spec, state.q, state.a, state.b);
    {
        std::vector<Vec3> q_slots(state.q.begin() + 1, state.q.end());
        const std::vector<SlotCost> costs =
            schedule_costs(sc, q_slots, state.a, state.b, spec.params, spec.periodic);
        lay.pinned_p = costs[0].contraction;
        lay.pinned_y = std::log(lay.pinned_p);
    }

    const BlockObjective objective(lay, {}, 0.0);
    solver::Problem prob;
    prob.dimension = n;
    prob.objective = &objective;

    const double qf_x = sc.dispatch_point.x / h;
    const double qf_y = sc.dispatch_point.y / h;
    const auto q_coeff = [&](int slot, bool is_y) -> std::pair<int, double> {
        // Returns (variable index or -1, fixed value) for q(slot)/H.
        if (slot == 0 || slot == k_count || !free_q) {
            const Vec3& fixed = (slot == 0 || slot == k_count)
                                    ? sc.dispatch_point
                                    : state.q[slot];
            return {-1, (is_y ? fixed.y : fixed.x) / h};
        }
        return {is_y ? qy_var(slot) : qx_var(slot), 0.0};
    };

    if (free_q) {
        const double v_cap = sc.v_max * sc.slot_duration / h;
        const double a_cap = sc.a_max * sc.slot_duration * sc.slot_duration / h;
        // Speed balls: ||q(k+1) - q(k)||^2 <= v_cap^2.
        for (int k = 0; k < k_count; ++k) {
            solver::Constraint c;
            c.offset = -v_cap * v_cap;
            for (bool is_y : {false, true}) {
                const auto [i1, f1] = q_coeff(k + 1, is_y);
                const auto [i0, f0] = q_coeff(k, is_y);
                // (x1 - x0)^2 with either side possibly fixed
                if (i1 >= 0 && i0 >= 0) {
                    c.quad.emplace_back(i1, i1, 2.0);
                    c.quad.emplace_back(i0, i0, 2.0);
                    c.quad.emplace_back(i1, i0, -2.0);
                    c.quad.emplace_back(i0, i1, -2.0);
                } else if (i1 >= 0) {
                    c.quad.emplace_back(i1, i1, 2.0);
                    c.lin.emplace_back(i1, -2.0 * f0);
                    c.offset += f0 * f0;
                } else if (i0 >= 0) {
                    c.quad.emplace_back(i0, i0, 2.0);
                    c.lin.emplace_back(i0, -2.0 * f1);
                    c.offset += f1 * f1;
                } else {
                    c.offset += (f1 - f0) * (f1 - f0);
                }
            }
            prob.constraints.push_back(std::move(c));
        }
        // Acceleration balls on interior triples, plus the periodic seam.
        std::vector<std::array<int, 3>> triples;
        for (int k = 1; k < k_count; ++k) triples.push_back({k - 1, k, k + 1});
        for (const auto& tr : triples) {
            solver::Constraint c;
            c.offset = -a_cap * a_cap;
            for (bool is_y : {false, true}) {
                // q(k+1) - 2 q(k) + q(k-1)
                std::vector<std::pair<int, double>> combo;
                double fixed = 0.0;
                const double weights[3] = {1.0, -2.0, 1.0};
                for (int t = 0; t < 3; ++t) {
                    const auto [idx, val] = q_coeff(tr[t], is_y);
                    if (idx >= 0) {
                        combo.emplace_back(idx, weights[t]);
                    } else {
                        fixed += weights[t] * val;
                    }
                }
                for (const auto& [i, wi] : combo) {
                    for (const auto& [j, wj] : combo) c.quad.emplace_back(i, j, 2.0 * wi * wj);
                    c.lin.emplace_back(i, 2.0 * wi * fixed);
                }
                c.offset += fixed * fixed;
            }
            prob.constraints.push_back(std::move(c));
        }
        if (spec.periodic) {
            // Seam: ||(q(1) - qF) - (qF - q(K-1))||^2 = ||q(1) + q(K-1) - 2 qF||^2.
            solver::Constraint c;
            c.offset = -a_cap * a_cap;
            for (bool is_y : {false, true}) {
                const auto [i1, f1] = q_coeff(1, is_y);
                const auto [i2, f2] = q_coeff(k_count - 1, is_y);
                const double qf = is_y ? qf_y : qf_x;
                std::vector<std::pair<int, double>> combo;
                double fixed = -2.0 * qf;
                if (i1 >= 0) combo.emplace_back(i1, 1.0); else fixed += f1;
                if (i2 >= 0) combo.emplace_back(i2, 1.0); else fixed += f2;
                // merge duplicate variable (K=2 edge: slot 1 == slot K-1)
                if (combo.size() == 2 && combo[0].first == combo[1].first) {
                    combo = {{combo[0].first, 2.0}};
                }
                for (const auto& [i, wi] : combo) {
                    for (const auto& [j, wj] : combo) c.quad.emplace_back(i, j, 2.0 * wi * wj);
                    c.lin.emplace_back(i, 2.0 * wi * fixed);
                }
                c.offset += fixed * fixed;
            }
            prob.constraints.push_back(std::move(c));
        }
    }

    // Distance cones, gain products and bounds per (m, k).
    std::vector<std::vector<double>> u_start(m_count, std::vector<double>(k_count));
    std::vector<std::vector<double>> v_start(m_count, std::vector<double>(k_count));
    for (int m = 0; m < m_count; ++m) {
        const double wx = sc.devices[m].position.x / h;
        const double wy = sc.devices[m].position.y / h;
        for (int k = 0; k < k_count; ++k) {
            const int slot = k + 1;
            const double dist = distance(state.q[slot], sc.devices[m].position) / h;
            u_start[m][k] = dist * (1.0 + 1e-4);
            const double b0 = free_b ? state.b[m][k] : state.b[m][k];
            v_start[m][k] = kappa * b0 / u_start[m][k] * (1.0 - 1e-4);

            // u >= distance: (qx - wx)^2 + (qy - wy)^2 + 1 - u^2 <= 0, u > 0.
            {
                solver::Constraint c;
                c.offset = 1.0;
                const auto [ix, fx] = q_coeff(slot, false);
                const auto [iy, fy] = q_coeff(slot, true);
                if (ix >= 0) {
                    c.quad.emplace_back(ix, ix, 2.0);
                    c.lin.emplace_back(ix, -2.0 * wx);
                    c.offset += wx * wx;
                } else {
                    c.offset += (fx - wx) * (fx - wx);
                }
                if (iy >= 0) {
                    c.quad.emplace_back(iy, iy, 2.0);
                    c.lin.emplace_back(iy, -2.0 * wy);
                    c.offset += wy * wy;
                } else {
                    c.offset += (fy - wy) * (fy - wy);
                }
                c.quad.emplace_back(u_var(m, k), u_var(m, k), -2.0);
                c.positivity.emplace_back(u_var(m, k), 1.0);
                prob.constraints.push_back(std::move(c));
            }
            // v u <= kappa b via the DC upper bound of the product.
            {
                const double delta_t = v_start[m][k] - u_start[m][k];
                solver::Constraint c;
                c.quad.emplace_back(v_var(m, k), v_var(m, k), 0.5);
                c.quad.emplace_back(u_var(m, k), u_var(m, k), 0.5);
                c.quad.emplace_back(v_var(m, k), u_var(m, k), 0.5);
                c.quad.emplace_back(u_var(m, k), v_var(m, k), 0.5);
                c.lin.emplace_back(v_var(m, k), -0.5 * delta_t);
                c.lin.emplace_back(u_var(m, k), 0.5 * delta_t);
                c.offset = 0.25 * delta_t * delta_t;
                if (free_b) {
                    c.lin.emplace_back(b_var(m, k), -kappa);
                } else {
                    c.offset -= kappa * state.b[m][k];
                }
                prob.constraints.push_back(std::move(c));
            }
            // v >= 0.
            prob.constraints.push_back(solver::Constraint::linear({{v_var(m, k), -1.0}}, 0.0));
            if (free_b) {
                prob.constraints.push_back(
                    solver::Constraint::linear({{b_var(m, k), -1.0}}, 0.0));
                prob.constraints.push_back(
                    solver::Constraint::linear({{b_var(m, k), 1.0}}, cap));
            }
        }
    }

    // d-cap via the quadratic-over-linear lower bound of the fraction:
    // eps(v) >= 2 rho (a.v) - rho^2 (a.(v o v) + 1), rho = eps^t / (a.v^t).
    std::vector<double> r_values(k_count, 0.0);
    for (int k = 0; k < k_count; ++k) {
        double num_t = 0.0;
        double den_t = 1.0;
        for (int m = 0; m < m_count; ++m) {
            num_t += state.a[m][k] * v_start[m][k];
            den_t += state.a[m][k] * v_start[m][k] * v_start[m][k];
        }
        const double rho = num_t / den_t;
        r_values[k] = num_t * num_t / den_t;
        solver::Constraint c;
        c.lin.emplace_back(lay.off_d + k, 1.0);
        c.offset = rho * rho;
        for (int m = 0; m < m_count; ++m) {
            const double am = state.a[m][k];
            if (am <= 0.0) continue;
            c.lin.emplace_back(v_var(m, k), -2.0 * rho * am);
            c.quad.emplace_back(v_var(m, k), v_var(m, k), 2.0 * rho * rho * am);
        }
        prob.constraints.push_back(std::move(c));
    }

    // Affine f-floor (selection column sums are constants here).
    const double m_d = static_cast<double>(m_count);
    std::vector<double> floor_const(k_count, 0.0);
    for (int k = 1; k <= k_count; ++k) {
        double u_k = 0.0;
        for (int m = 0; m < m_count; ++m) u_k += state.a[m][k - 1];
        double offset = 18.0 * s_bound * s_bound + 24.0 * std::pow((m_d - u_k) / m_d, 2.0);
        solver::Constraint c;
        for (int j : g_window(spec, k)) {
            double u_j = 0.0;
            for (int m = 0; m < m_count; ++m) u_j += state.a[m][j - 1];
            offset += 18.0 * s_bound * u_j;
            c.lin.emplace_back(lay.off_d + j - 1, -18.0 * s_bound);
        }
        c.lin.emplace_back(lay.off_f + k - 1, -1.0);
        c.offset = offset;
        floor_const[k - 1] = offset;
        prob.constraints.push_back(std::move(c));
    }

    add_aux_links(prob, lay, spec.params, y_t);

    // Start point.
    Eigen::VectorXd x0 = Eigen::VectorXd::Zero(n);
    if (free_q) {
        for (int slot = 1; slot < k_count; ++slot) {
            x0[qx_var(slot)] = state.q[slot].x / h;
            x0[qy_var(slot)] = state.q[slot].y / h;
        }
    }
    for (int m = 0; m < m_count; ++m) {
        for (int k = 0; k < k_count; ++k) {
            if (free_b) x0[b_var(m, k)] = std::clamp(state.b[m][k], 1e-6 * cap, cap * (1.0 - 1e-9));
            x0[u_var(m, k)] = u_start[m][k];
            x0[v_var(m, k)] = v_start[m][k];
        }
    }
    std::vector<double> floor_values(k_count);
    for (int k = 0; k < k_count; ++k) {
        const double d0 = r_values[k] - std::max(1e-8, kMarginRel * std::abs(r_values[k]));
        x0[lay.off_d + k] = d0;
    }
    for (int k = 0; k < k_count; ++k) {
        double value = floor_const[k];
        for (int j : g_window(spec, k + 1)) value -= 18.0 * s_bound * x0[lay.off_d + j - 1];
        floor_values[k] = value;
    }
    seed_auxiliaries(lay, spec.params, floor_values, y_t, x0);

    const solver::Solution sol = solve_with_recovery(prob, x0, options.solver);

    std::vector<Vec3> q_new = state.q;
    if (free_q) {
        for (int slot = 1; slot < k_count; ++slot) {
            q_new[slot] = {sol.x[qx_var(slot)] * h, sol.x[qy_var(slot)] * h, sc.altitude};
        }
    }
    std::vector<std::vector<double>> b_new = state.b;
    if (free_b) {
        for (int m = 0; m < m_count; ++m) {
            for (int k = 0; k < k_count; ++k) {
                b_new[m][k] = std::clamp(sol.x[b_var(m, k)], 0.0, cap);
            }
        }
    }
    blend_accept(spec, state, state.a, q_new, b_new);

    state.p.assign(2 * k_count, 0.0);
    state.y.assign(2 * k_count, 0.0);
    state.f.assign(k_count, 0.0);
    state.d.assign(k_count, 0.0);
    for (int i = 0; i < 2 * k_count; ++i) {
        state.p[i] = lay.pinned(i) ? lay.pinned_p : sol.x[lay.p_var(i)];
        state.y[i] = lay.pinned(i) ? lay.pinned_y : sol.x[lay.y_var(i)];
    }
    for (int k = 0; k < k_count; ++k) {
        state.f[k] = sol.x[lay.off_f + k];
        state.d[k] = sol.x[lay.off_d + k];
    }

    SubproblemSolution out;
    out.objective = sol.objective_value;
    out.stationarity_residual = sol.stationarity_residual;
    out.max_violation = sol.max_violation;
    out.converged = sol.converged;
    out.newton_iterations = sol.newton_iterations;
    return out;
}

}  // namespace uavafl
