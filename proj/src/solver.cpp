#include "uavafl/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "uavafl/errors.hpp"

namespace uavafl::solver {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

double Constraint::value(const Eigen::VectorXd& x) const {
    double v = offset;
    for (const auto& [i, c] : lin) v += c * x[i];
    for (const auto& t : quad) v += 0.5 * t.value() * x[t.row()] * x[t.col()];
    return v;
}

double Constraint::witness(const Eigen::VectorXd& x) const {
    if (positivity.empty()) return 1.0;
    double v = positivity_offset;
    for (const auto& [i, c] : positivity) v += c * x[i];
    return v;
}

void Constraint::add_gradient(const Eigen::VectorXd& x, double scale,
                              Eigen::VectorXd& grad) const {
    for (const auto& [i, c] : lin) grad[i] += scale * c;
    for (const auto& t : quad) grad[t.row()] += scale * 0.5 * t.value() * x[t.col()];
    for (const auto& t : quad) grad[t.col()] += scale * 0.5 * t.value() * x[t.row()];
}

Eigen::VectorXd Constraint::dense_gradient(const Eigen::VectorXd& x) const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(x.size());
    add_gradient(x, 1.0, g);
    return g;
}

void Constraint::add_barrier_hessian(const Eigen::VectorXd& x, double s, Triplets& out) const {
    // grad c grad c^T / s^2: dense on the constraint's support.
    std::vector<std::pair<int, double>> g;
    {
        // Accumulate the sparse gradient on the support.
        std::vector<std::pair<int, double>> parts;
        parts.reserve(lin.size() + 2 * quad.size());
        for (const auto& [i, c] : lin) parts.emplace_back(i, c);
        for (const auto& t : quad) {
            parts.emplace_back(t.row(), 0.5 * t.value() * x[t.col()]);
            parts.emplace_back(t.col(), 0.5 * t.value() * x[t.row()]);
        }
        std::sort(parts.begin(), parts.end());
        for (const auto& [i, c] : parts) {
            if (!g.empty() && g.back().first == i) {
                g.back().second += c;
            } else {
                g.emplace_back(i, c);
            }
        }
    }
    const double inv_s2 = 1.0 / (s * s);
    for (const auto& [i, gi] : g) {
        for (const auto& [j, gj] : g) out.emplace_back(i, j, gi * gj * inv_s2);
    }
    const double inv_s = 1.0 / s;
    for (const auto& t : quad) out.emplace_back(t.row(), t.col(), t.value() * inv_s);
}

Constraint Constraint::linear(const std::vector<std::pair<int, double>>& coeffs, double rhs) {
    Constraint c;
    c.lin = coeffs;
    c.offset = -rhs;
    return c;
}

namespace {

struct EqSystem {
    Eigen::MatrixXd mat;  // dense; equality systems stay small
    Eigen::VectorXd rhs;
    int rows = 0;
};

EqSystem build_equalities(const Problem& p) {
    EqSystem eq;
    eq.rows = static_cast<int>(p.eq_rows.size());
    if (eq.rows == 0) return eq;
    eq.mat = Eigen::MatrixXd::Zero(eq.rows, p.dimension);
    eq.rhs = Eigen::VectorXd::Zero(eq.rows);
    for (int r = 0; r < eq.rows; ++r) {
        for (const auto& [i, c] : p.eq_rows[r]) eq.mat(r, i) += c;
        eq.rhs[r] = p.eq_rhs[r];
    }
    return eq;
}

bool strictly_feasible(const Problem& p, const Eigen::VectorXd& x, double margin) {
    for (const Constraint& c : p.constraints) {
        if (!(c.value(x) < -margin)) return false;
        if (!(c.witness(x) > margin)) return false;
    }
    return true;
}

// psi = t f0 + phi.
double merit(const Problem& p, const Eigen::VectorXd& x, double t) {
    double v = t * p.objective->value(x);
    for (const Constraint& c : p.constraints) {
        const double s = -c.value(x);
        if (s <= 0.0 || c.witness(x) <= 0.0) return kInf;
        v -= std::log(s);
    }
    return v;
}

}  // namespace

Solution minimize(const Problem& problem, const Eigen::VectorXd& start,
                  const Options& options) {
    const int n = problem.dimension;
    if (start.size() != n) throw ShapeError("solver start has wrong dimension");
    const EqSystem eq = build_equalities(problem);

    Eigen::VectorXd x = start;
    if (eq.rows > 0) {
        // Project onto the affine set; an inconsistent system is detected by
        // the least-squares residual.
        const Eigen::VectorXd delta =
            eq.mat.colPivHouseholderQr().solve(eq.rhs - eq.mat * x);
        x += delta;
        const double resid = (eq.mat * x - eq.rhs).norm();
        if (resid > 1e-6 * std::max(1.0, eq.rhs.norm())) {
            throw InfeasibleError("inconsistent equality system, residual " +
                                  std::to_string(resid));
        }
    }
    if (!strictly_feasible(problem, x, 0.0)) {
        throw InfeasibleError("solver start is not strictly feasible");
    }

    Solution sol;
    const int m = static_cast<int>(problem.constraints.size());
    double t = options.barrier_t0;
    int total_newton = 0;

    for (int round = 0; round < options.max_barrier_rounds; ++round) {
        // Centering: damped Newton on t f0 + phi.
        for (int it = 0; it < options.max_newton; ++it) {
            Eigen::VectorXd grad = Eigen::VectorXd::Zero(n);
            problem.objective->add_gradient(x, grad);
            grad *= t;
            Triplets h_trip;
            {
                Triplets obj_h;
                problem.objective->add_hessian(x, obj_h);
                h_trip.reserve(obj_h.size() * 2);
                for (const auto& tr : obj_h) {
                    h_trip.emplace_back(tr.row(), tr.col(), t * tr.value());
                }
            }
            for (const Constraint& c : problem.constraints) {
                const double s = -c.value(x);
                c.add_gradient(x, 1.0 / s, grad);
                c.add_barrier_hessian(x, s, h_trip);
            }

            Eigen::VectorXd dx(n);
            double max_diag = 1e-12;
            for (const auto& tr : h_trip) {
                if (tr.row() == tr.col()) max_diag = std::max(max_diag, std::abs(tr.value()));
            }
            double ridge = 0.0;
            bool solved = false;
            for (int attempt = 0; attempt < 8 && !solved; ++attempt) {
                Triplets trial = h_trip;
                if (ridge > 0.0) {
                    for (int i = 0; i < n; ++i) trial.emplace_back(i, i, ridge);
                }
                if (eq.rows == 0) {
                    Eigen::SparseMatrix<double> h(n, n);
                    h.setFromTriplets(trial.begin(), trial.end());
                    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(h);
                    if (ldlt.info() == Eigen::Success) {
                        dx = ldlt.solve(-grad);
                        solved = dx.allFinite() && (-grad.dot(dx)) >= -1e-9 * grad.norm();
                    }
                } else {
                    const int nt = n + eq.rows;
                    Triplets kkt = trial;
                    for (int r = 0; r < eq.rows; ++r) {
                        for (int i = 0; i < n; ++i) {
                            if (eq.mat(r, i) != 0.0) {
                                kkt.emplace_back(n + r, i, eq.mat(r, i));
                                kkt.emplace_back(i, n + r, eq.mat(r, i));
                            }
                        }
                    }
                    Eigen::SparseMatrix<double> km(nt, nt);
                    km.setFromTriplets(kkt.begin(), kkt.end());
                    Eigen::VectorXd rhs(nt);
                    rhs.head(n) = -grad;
                    rhs.tail(eq.rows) = eq.rhs - eq.mat * x;
                    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(km);
                    if (lu.info() == Eigen::Success) {
                        const Eigen::VectorXd full = lu.solve(rhs);
                        dx = full.head(n);
                        solved = dx.allFinite();
                    }
                }
                if (!solved) ridge = (ridge == 0.0) ? 1e-10 * max_diag : ridge * 100.0;
            }
            if (!solved) {
                sol.message = "newton system could not be factorized";
                break;
            }

            const double decrement_sq = -grad.dot(dx);
            ++total_newton;
            if (decrement_sq * 0.5 < options.newton_tol && it > 0) break;
            if (decrement_sq <= 0.0) break;

            // Backtrack into the strictly feasible region, then Armijo.
            const double psi0 = merit(problem, x, t);
            double alpha = 1.0;
            bool stepped = false;
            for (int ls = 0; ls < 60; ++ls) {
                const Eigen::VectorXd cand = x + alpha * dx;
                const double psi = merit(problem, cand, t);
                if (psi < psi0 - 0.01 * alpha * decrement_sq + 1e-14 * std::abs(psi0)) {
                    x = cand;
                    stepped = true;
                    break;
                }
                alpha *= 0.5;
            }
            if (!stepped) break;
        }

        const double scale = std::max(1.0, std::abs(problem.objective->value(x)));
        if (m == 0 || static_cast<double>(m) / t < options.gap_tol * scale) {
            sol.converged = true;
            break;
        }
        t *= options.barrier_mult;
    }

    sol.x = x;
    sol.objective_value = problem.objective->value(x);
    sol.newton_iterations = total_newton;

    Eigen::VectorXd grad_f = Eigen::VectorXd::Zero(n);
    problem.objective->add_gradient(x, grad_f);
    double violation = 0.0;

    // Stationarity is evaluated at refitted multipliers: barrier multipliers
    // seed the active set, then a least-squares fit (clipped at zero) sharpens
    // them. This reports the KKT residual of the best available certificate.
    std::vector<int> active;
    std::vector<double> barrier_lambda(problem.constraints.size(), 0.0);
    const double grad_scale = std::max(1.0, grad_f.lpNorm<Eigen::Infinity>());
    for (std::size_t i = 0; i < problem.constraints.size(); ++i) {
        const double cv = problem.constraints[i].value(x);
        violation = std::max(violation, cv);
        barrier_lambda[i] = 1.0 / std::max(t * (-cv), 1e-300);
        if (barrier_lambda[i] > 1e-10 * grad_scale) active.push_back(static_cast<int>(i));
    }

    const auto residual_at = [&](const std::vector<double>& lambda) {
        Eigen::VectorXd r = grad_f;
        for (std::size_t i = 0; i < problem.constraints.size(); ++i) {
            if (lambda[i] != 0.0) problem.constraints[i].add_gradient(x, lambda[i], r);
        }
        if (eq.rows > 0) {
            const Eigen::VectorXd nu = eq.mat.transpose().colPivHouseholderQr().solve(-r);
            r += eq.mat.transpose() * nu;
        }
        return r;
    };

    std::vector<double> refined = barrier_lambda;
    if (!active.empty()) {
        Eigen::MatrixXd jac(n, active.size());
        for (std::size_t a = 0; a < active.size(); ++a) {
            jac.col(a) = problem.constraints[active[a]].dense_gradient(x);
        }
        const Eigen::VectorXd fit = jac.colPivHouseholderQr().solve(-grad_f);
        for (std::size_t a = 0; a < active.size(); ++a) {
            refined[active[a]] = std::max(fit[a], 0.0);
        }
    }
    const double res_barrier = residual_at(barrier_lambda).lpNorm<Eigen::Infinity>();
    const double res_refined = residual_at(refined).lpNorm<Eigen::Infinity>();
    sol.stationarity_residual = std::min(res_barrier, res_refined);
    if (eq.rows > 0) {
        violation = std::max(violation, (eq.mat * x - eq.rhs).lpNorm<Eigen::Infinity>());
    }
    sol.max_violation = std::max(violation, 0.0);
    if (sol.message.empty() && !sol.converged) sol.message = "barrier round cap reached";
    return sol;
}

InteriorResult find_interior(const Problem& problem, const Eigen::VectorXd& start,
                             const Options& options) {
    const int n = problem.dimension;
    Problem aug;
    aug.dimension = n + 1;
    aug.eq_rows = problem.eq_rows;
    aug.eq_rhs = problem.eq_rhs;
    for (const Constraint& c : problem.constraints) {
        Constraint shifted = c;
        shifted.lin.emplace_back(n, -1.0);
        aug.constraints.push_back(std::move(shifted));
    }
    Eigen::VectorXd q = Eigen::VectorXd::Zero(n + 1);
    q[n] = 1.0;
    const LinearObjective obj(q);
    aug.objective = &obj;

    Eigen::VectorXd x0(n + 1);
    x0.head(n) = start;
    double worst = -kInf;
    for (const Constraint& c : problem.constraints) {
        worst = std::max(worst, c.value(start));
        if (!(c.witness(start) > 0.0)) {
            throw InfeasibleError("phase-I start must satisfy cone witnesses");
        }
    }
    x0[n] = worst + std::max(1.0, std::abs(worst));

    Options o = options;
    o.gap_tol = std::max(options.gap_tol, 1e-10);
    const Solution sol = minimize(aug, x0, o);

    InteriorResult out;
    out.certificate = sol.x[n];
    if (sol.x[n] < 0.0) out.point = sol.x.head(n);
    return out;
}

}  // namespace uavafl::solver
