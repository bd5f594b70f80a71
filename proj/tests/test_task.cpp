#include <Eigen/Dense>
#include <cmath>

#include "doctest.h"
#include "uavafl/rng.hpp"
#include "uavafl/task.hpp"

using namespace uavafl;

namespace {

// Central-difference oracle for gradients.
std::vector<double> fd_gradient(const LearningTask& task, int device, std::vector<double> x,
                                double eps) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + eps;
        const double hi = task.local_loss(device, x);
        x[i] = keep - eps;
        const double lo = task.local_loss(device, x);
        x[i] = keep;
        g[i] = (hi - lo) / (2.0 * eps);
    }
    return g;
}

}  // namespace

TEST_CASE("quadratic task hits the requested spectrum exactly") {
    const QuadraticTask task = QuadraticTask::synthesize(6, 16, 0.2, 10.0, 1.0, 42);
    CHECK(*task.exact_mu() == doctest::Approx(0.2));
    CHECK(*task.exact_lipschitz() == doctest::Approx(10.0));

    // Gradient of F at the closed-form optimum vanishes.
    std::vector<double> xs(task.optimum().data(), task.optimum().data() + 16);
    const std::vector<double> g = task.global_gradient(xs);
    for (double v : g) CHECK(std::abs(v) < 1e-9);

    // F is mu-strongly convex around the optimum: F(x) - F* >= mu/2 ||x-x*||^2.
    Rng rng(1);
    for (int t = 0; t < 10; ++t) {
        std::vector<double> x = xs;
        double dist_sq = 0.0;
        for (double& v : x) {
            const double d = rng.gaussian();
            v += d;
            dist_sq += d * d;
        }
        const double gap = task.global_loss(x) - *task.optimal_value();
        CHECK(gap >= 0.5 * 0.2 * dist_sq - 1e-9);
        CHECK(gap <= 0.5 * 10.0 * dist_sq + 1e-9);
    }
}

TEST_CASE("quadratic local gradient matches finite differences") {
    const QuadraticTask task = QuadraticTask::synthesize(4, 8, 0.5, 5.0, 2.0, 7);
    Rng rng(3);
    std::vector<double> x(8);
    for (double& v : x) v = rng.gaussian(0.0, 2.0);
    for (int m = 0; m < 4; ++m) {
        const std::vector<double> g = task.local_gradient(m, x);
        const std::vector<double> fd = fd_gradient(task, m, x, 1e-6);
        for (int i = 0; i < 8; ++i) CHECK(g[i] == doctest::Approx(fd[i]).epsilon(1e-5));
    }
}

TEST_CASE("quadratic device gradient vanishes at its own stationary point") {
    const QuadraticTask task = QuadraticTask::synthesize(3, 6, 0.2, 10.0, 1.5, 11);
    // Solve (A_0^T A_0 + rho I) x = A_0^T b_0 via finite differences on the
    // local loss gradient itself: Newton step from the origin.
    std::vector<double> x(6, 0.0);
    Eigen::MatrixXd h(6, 6);
    const std::vector<double> g0 = task.local_gradient(0, x);
    for (int j = 0; j < 6; ++j) {
        std::vector<double> xp = x;
        xp[j] += 1e-6;
        const std::vector<double> gp = task.local_gradient(0, xp);
        for (int i = 0; i < 6; ++i) h(i, j) = (gp[i] - g0[i]) / 1e-6;
    }
    const Eigen::VectorXd rhs = -Eigen::Map<const Eigen::VectorXd>(g0.data(), 6);
    const Eigen::VectorXd step = h.partialPivLu().solve(rhs);
    for (int i = 0; i < 6; ++i) x[i] += step[i];
    const std::vector<double> g = task.local_gradient(0, x);
    for (double v : g) CHECK(std::abs(v) < 1e-6);
}

TEST_CASE("logistic gradient at the origin equals the class-imbalance form") {
    const LogisticTask task = LogisticTask::synthesize(3, 6, 40, 64, 1.5, 0.01, 5);
    const std::vector<double> zero(6, 0.0);
    for (int m = 0; m < 3; ++m) {
        const std::vector<double> g = task.local_gradient(m, zero);
        const std::vector<double> fd = fd_gradient(task, m, zero, 1e-6);
        for (int i = 0; i < 6; ++i) CHECK(g[i] == doctest::Approx(fd[i]).epsilon(1e-5));
    }
    // sigma(0) = 1/2, so grad f_m(0) = -(1/(2 S_d)) sum y_i phi_i; the bias
    // coordinate reduces to minus half the label mean (balanced labels -> 0).
    const std::vector<double> g0 = task.local_gradient(0, zero);
    CHECK(g0.back() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("logistic full gradient matches finite differences away from zero") {
    const LogisticTask task = LogisticTask::synthesize(2, 5, 30, 32, 2.0, 0.05, 9);
    Rng rng(17);
    std::vector<double> x(5);
    for (double& v : x) v = rng.gaussian(0.0, 0.5);
    for (int m = 0; m < 2; ++m) {
        const std::vector<double> g = task.local_gradient(m, x);
        const std::vector<double> fd = fd_gradient(task, m, x, 1e-6);
        for (int i = 0; i < 5; ++i) CHECK(g[i] == doctest::Approx(fd[i]).epsilon(1e-5));
    }
}

TEST_CASE("logistic accuracy improves with gradient descent") {
    const LogisticTask task = LogisticTask::synthesize(4, 8, 50, 200, 2.0, 0.01, 23);
    std::vector<double> x(8, 0.0);
    const double acc0 = task.test_accuracy(x);
    for (int it = 0; it < 200; ++it) {
        const std::vector<double> g = task.global_gradient(x);
        for (int i = 0; i < 8; ++i) x[i] -= 0.5 * g[i];
    }
    CHECK(task.test_accuracy(x) > acc0);
    CHECK(task.test_accuracy(x) > 0.8);
}

TEST_CASE("task synthesis is deterministic") {
    const QuadraticTask a = QuadraticTask::synthesize(3, 6, 0.2, 10.0, 1.0, 77);
    const QuadraticTask b = QuadraticTask::synthesize(3, 6, 0.2, 10.0, 1.0, 77);
    std::vector<double> x(6, 1.0);
    CHECK(a.global_loss(x) == b.global_loss(x));
    const LogisticTask c = LogisticTask::synthesize(2, 4, 10, 16, 1.0, 0.01, 3);
    const LogisticTask d = LogisticTask::synthesize(2, 4, 10, 16, 1.0, 0.01, 3);
    std::vector<double> y(4, 0.5);
    CHECK(c.global_loss(y) == d.global_loss(y));
}
