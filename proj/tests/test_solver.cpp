#include <Eigen/Dense>
#include <cmath>

#include "doctest.h"
#include "uavafl/errors.hpp"
#include "uavafl/rng.hpp"
#include "uavafl/solver.hpp"

using namespace uavafl;
using namespace uavafl::solver;

namespace {

// log(exp(x0) + exp(x1)) objective used by the box test.
class LseObjective : public Objective {
public:
    double value(const Eigen::VectorXd& x) const override {
        const double m = std::max(x[0], x[1]);
        return m + std::log(std::exp(x[0] - m) + std::exp(x[1] - m));
    }
    void add_gradient(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const override {
        const double m = std::max(x[0], x[1]);
        const double e0 = std::exp(x[0] - m);
        const double e1 = std::exp(x[1] - m);
        grad[0] += e0 / (e0 + e1);
        grad[1] += e1 / (e0 + e1);
    }
    void add_hessian(const Eigen::VectorXd& x, Triplets& out) const override {
        const double m = std::max(x[0], x[1]);
        const double e0 = std::exp(x[0] - m);
        const double e1 = std::exp(x[1] - m);
        const double w0 = e0 / (e0 + e1);
        const double w1 = e1 / (e0 + e1);
        out.emplace_back(0, 0, w0 - w0 * w0);
        out.emplace_back(1, 1, w1 - w1 * w1);
        out.emplace_back(0, 1, -w0 * w1);
        out.emplace_back(1, 0, -w0 * w1);
    }
};

}  // namespace

TEST_CASE("unconstrained quadratic reaches the exact minimizer") {
    const int n = 6;
    Rng rng(1);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) a(i, j) = rng.gaussian();
    }
    Eigen::MatrixXd p_dense = a.transpose() * a + Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd q(n);
    for (int i = 0; i < n; ++i) q[i] = rng.gaussian();
    const Eigen::VectorXd expected = p_dense.ldlt().solve(-q);

    Eigen::SparseMatrix<double> p = p_dense.sparseView();
    const QuadraticObjective obj(p, q);
    Problem prob;
    prob.dimension = n;
    prob.objective = &obj;

    const Solution sol = minimize(prob, Eigen::VectorXd::Zero(n));
    CHECK(sol.converged);
    CHECK((sol.x - expected).lpNorm<Eigen::Infinity>() < 1e-8);
    CHECK(sol.stationarity_residual < 1e-6);
}

TEST_CASE("log-sum-exp over a box matches a fine grid search") {
    const LseObjective obj;
    Problem prob;
    prob.dimension = 2;
    prob.objective = &obj;
    // Box [-1, 2] x [0.5, 3].
    prob.constraints.push_back(Constraint::linear({{0, -1.0}}, 1.0));   // -x0 <= 1
    prob.constraints.push_back(Constraint::linear({{0, 1.0}}, 2.0));    // x0 <= 2
    prob.constraints.push_back(Constraint::linear({{1, -1.0}}, -0.5));  // -x1 <= -0.5
    prob.constraints.push_back(Constraint::linear({{1, 1.0}}, 3.0));    // x1 <= 3

    Eigen::VectorXd x0(2);
    x0 << 0.0, 1.0;
    const Solution sol = minimize(prob, x0);
    CHECK(sol.converged);
    CHECK(sol.max_violation <= 1e-8);

    double best = 1e300;
    Eigen::VectorXd probe(2);
    for (int i = 0; i <= 600; ++i) {
        for (int j = 0; j <= 500; ++j) {
            probe[0] = -1.0 + 3.0 * i / 600.0;
            probe[1] = 0.5 + 2.5 * j / 500.0;
            best = std::min(best, obj.value(probe));
        }
    }
    CHECK(sol.objective_value == doctest::Approx(best).epsilon(1e-4));
    CHECK(sol.x[0] == doctest::Approx(-1.0).epsilon(1e-4));
    CHECK(sol.x[1] == doctest::Approx(0.5).epsilon(1e-4));
}

TEST_CASE("quadratic constraints and cone atoms are honored") {
    // minimize x + y subject to x^2 + y^2 <= 1: optimum at (-r2, -r2).
    Eigen::VectorXd q(2);
    q << 1.0, 1.0;
    const LinearObjective obj(q);
    Problem prob;
    prob.dimension = 2;
    prob.objective = &obj;
    Constraint ball;
    ball.quad.emplace_back(0, 0, 2.0);
    ball.quad.emplace_back(1, 1, 2.0);
    ball.offset = -1.0;
    prob.constraints.push_back(ball);

    const Solution sol = minimize(prob, Eigen::VectorXd::Zero(2));
    const double r2 = std::sqrt(0.5);
    CHECK(sol.x[0] == doctest::Approx(-r2).epsilon(1e-6));
    CHECK(sol.x[1] == doctest::Approx(-r2).epsilon(1e-6));

    // Second-order-cone atom: minimize t s.t. t >= ||(x-3, 4)||, i.e.
    // c = (x-3)^2 + 16 - t^2 <= 0 with witness t > 0; at x = 3, t = 4.
    Eigen::VectorXd q2(2);
    q2 << 0.0, 1.0;  // vars (x, t)
    const LinearObjective obj2(q2);
    Problem socp;
    socp.dimension = 2;
    socp.objective = &obj2;
    Constraint cone;
    cone.quad.emplace_back(0, 0, 2.0);
    cone.quad.emplace_back(1, 1, -2.0);
    cone.lin.emplace_back(0, -6.0);
    cone.offset = 9.0 + 16.0;
    cone.positivity.emplace_back(1, 1.0);
    socp.constraints.push_back(cone);

    Eigen::VectorXd start(2);
    start << 0.0, 8.0;
    const Solution s2 = minimize(socp, start);
    CHECK(s2.x[0] == doctest::Approx(3.0).epsilon(1e-5));
    CHECK(s2.x[1] == doctest::Approx(4.0).epsilon(1e-5));
}

TEST_CASE("inconsistent equality system raises an infeasibility report") {
    Eigen::VectorXd q = Eigen::VectorXd::Ones(2);
    const LinearObjective obj(q);
    Problem prob;
    prob.dimension = 2;
    prob.objective = &obj;
    prob.eq_rows = {{{0, 1.0}, {1, 1.0}}, {{0, 1.0}, {1, 1.0}}};
    prob.eq_rhs = {1.0, 2.0};  // x+y = 1 and x+y = 2
    CHECK_THROWS_AS(minimize(prob, Eigen::VectorXd::Zero(2)), InfeasibleError);
}

TEST_CASE("phase-I finds interiors and certifies empty sets") {
    Problem prob;
    prob.dimension = 1;
    Eigen::VectorXd q = Eigen::VectorXd::Zero(1);
    const LinearObjective obj(q);
    prob.objective = &obj;
    prob.constraints.push_back(Constraint::linear({{0, 1.0}}, 2.0));    // x <= 2
    prob.constraints.push_back(Constraint::linear({{0, -1.0}}, -1.0));  // x >= 1

    Eigen::VectorXd start(1);
    start << 10.0;
    const InteriorResult found = find_interior(prob, start);
    REQUIRE(found.point.has_value());
    CHECK((*found.point)[0] > 1.0);
    CHECK((*found.point)[0] < 2.0);

    Problem empty = prob;
    empty.constraints[0] = Constraint::linear({{0, 1.0}}, 0.5);  // x <= 0.5 and x >= 1
    const InteriorResult missing = find_interior(empty, start);
    CHECK(!missing.point.has_value());
    CHECK(missing.certificate > 0.0);
}

TEST_CASE("solver is deterministic") {
    Eigen::SparseMatrix<double> p(3, 3);
    p.setIdentity();
    Eigen::VectorXd q(3);
    q << 1.0, -2.0, 0.5;
    const QuadraticObjective obj(p, q);
    Problem prob;
    prob.dimension = 3;
    prob.objective = &obj;
    prob.constraints.push_back(Constraint::linear({{0, 1.0}, {1, 1.0}, {2, 1.0}}, 0.5));
    const Solution a = minimize(prob, Eigen::VectorXd::Zero(3));
    const Solution b = minimize(prob, Eigen::VectorXd::Zero(3));
    CHECK(a.x == b.x);
    CHECK(a.objective_value == b.objective_value);
}

TEST_CASE("active-constraint KKT residuals meet the contract") {
    // minimize ||x - (2,2)||^2 s.t. x0 + x1 <= 1; optimum on the boundary.
    Eigen::SparseMatrix<double> p(2, 2);
    p.setIdentity();
    p *= 2.0;
    Eigen::VectorXd q(2);
    q << -4.0, -4.0;
    const QuadraticObjective obj(p, q, 8.0);
    Problem prob;
    prob.dimension = 2;
    prob.objective = &obj;
    prob.constraints.push_back(Constraint::linear({{0, 1.0}, {1, 1.0}}, 1.0));
    const Solution sol = minimize(prob, Eigen::VectorXd::Zero(2));
    CHECK(sol.converged);
    CHECK(sol.x[0] == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(sol.x[1] == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(sol.stationarity_residual < 1e-6);
    CHECK(sol.max_violation < 1e-8);
}
