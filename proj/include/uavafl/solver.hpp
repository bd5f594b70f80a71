#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace uavafl::solver {

using Triplets = std::vector<Eigen::Triplet<double>>;

// Smooth convex objective over the full variable vector.
class Objective {
public:
    virtual ~Objective() = default;
    virtual double value(const Eigen::VectorXd& x) const = 0;
    virtual void add_gradient(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const = 0;
    virtual void add_hessian(const Eigen::VectorXd& x, Triplets& out) const = 0;
};

class QuadraticObjective : public Objective {
public:
    QuadraticObjective(Eigen::SparseMatrix<double> p, Eigen::VectorXd q, double r = 0.0)
        : p_(std::move(p)), q_(std::move(q)), r_(r) {}
    double value(const Eigen::VectorXd& x) const override {
        return 0.5 * x.dot(p_ * x) + q_.dot(x) + r_;
    }
    void add_gradient(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const override {
        grad += p_ * x + q_;
    }
    void add_hessian(const Eigen::VectorXd&, Triplets& out) const override {
        for (int k = 0; k < p_.outerSize(); ++k) {
            for (Eigen::SparseMatrix<double>::InnerIterator it(p_, k); it; ++it) {
                out.emplace_back(it.row(), it.col(), it.value());
            }
        }
    }

private:
    Eigen::SparseMatrix<double> p_;
    Eigen::VectorXd q_;
    double r_;
};

class LinearObjective : public Objective {
public:
    explicit LinearObjective(Eigen::VectorXd q) : q_(std::move(q)) {}
    double value(const Eigen::VectorXd& x) const override { return q_.dot(x); }
    void add_gradient(const Eigen::VectorXd&, Eigen::VectorXd& grad) const override {
        grad += q_;
    }
    void add_hessian(const Eigen::VectorXd&, Triplets&) const override {}

private:
    Eigen::VectorXd q_;
};

// Inequality atom c(x) = 0.5 x^T P x + q^T x + r <= 0, with P sparse and
// possibly indefinite (second-order-cone atoms carry a -t^2 term together
// with a positivity witness t(x) > 0, which the line search enforces).
struct Constraint {
    Triplets quad;                // entries of P (symmetric, both halves)
    std::vector<std::pair<int, double>> lin;  // entries of q
    double offset = 0.0;          // r
    std::vector<std::pair<int, double>> positivity;  // affine witness
    double positivity_offset = 0.0;

    double value(const Eigen::VectorXd& x) const;
    double witness(const Eigen::VectorXd& x) const;
    void add_gradient(const Eigen::VectorXd& x, double scale, Eigen::VectorXd& grad) const;
    // Barrier Hessian: (grad c grad c^T)/s^2 + Hess c / s with s = -c(x).
    void add_barrier_hessian(const Eigen::VectorXd& x, double s, Triplets& out) const;
    Eigen::VectorXd dense_gradient(const Eigen::VectorXd& x) const;

    static Constraint linear(const std::vector<std::pair<int, double>>& coeffs, double rhs);
    // sum 0.5*pij terms given directly
};

struct Problem {
    int dimension = 0;
    const Objective* objective = nullptr;
    std::vector<Constraint> constraints;
    // Optional affine equalities: eq_rows x = eq_rhs.
    std::vector<std::vector<std::pair<int, double>>> eq_rows;
    std::vector<double> eq_rhs;
};

struct Options {
    double barrier_t0 = 1.0;
    double barrier_mult = 12.0;
    double gap_tol = 1e-9;       // relative duality-gap target m/(t*scale)
    double newton_tol = 1e-11;   // decrement^2 / 2
    int max_newton = 80;
    int max_barrier_rounds = 40;
    double feasibility_margin = 1e-10;
};

struct Solution {
    Eigen::VectorXd x;
    double objective_value = 0.0;
    double stationarity_residual = 0.0;  // inf-norm of the KKT residual
    double max_violation = 0.0;          // max over inequalities and equalities
    int newton_iterations = 0;
    bool converged = false;
    std::string message;
};

// Barrier method with damped Newton centering. The start must satisfy every
// inequality strictly (and equalities exactly up to least squares); an
// inconsistent equality system raises InfeasibleError with the residual.
Solution minimize(const Problem& problem, const Eigen::VectorXd& start,
                  const Options& options = {});

// Phase-I: minimizes the worst violation s over (x, s). Returns a strictly
// feasible point, or nullopt with the certificate value (min achievable s)
// when the inequality system is infeasible.
struct InteriorResult {
    std::optional<Eigen::VectorXd> point;
    double certificate = 0.0;
};
InteriorResult find_interior(const Problem& problem, const Eigen::VectorXd& start,
                             const Options& options = {});

}  // namespace uavafl::solver
