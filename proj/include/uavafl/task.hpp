#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

namespace uavafl {

// Desk-scale learning problem split across M devices with disjoint local
// datasets. Gradients are full-batch, so runs are deterministic given the
// schedule and noise seed.
class LearningTask {
public:
    virtual ~LearningTask() = default;

    virtual int dimension() const = 0;
    virtual int device_count() const = 0;

    virtual double local_loss(int device, const std::vector<double>& x) const = 0;
    virtual std::vector<double> local_gradient(int device, const std::vector<double>& x) const = 0;

    double global_loss(const std::vector<double>& x) const;
    std::vector<double> global_gradient(const std::vector<double>& x) const;

    // Closed-form optimum where one exists (quadratic task).
    virtual std::optional<double> optimal_value() const { return std::nullopt; }
    // Exact curvature extremes where available.
    virtual std::optional<double> exact_mu() const { return std::nullopt; }
    virtual std::optional<double> exact_lipschitz() const { return std::nullopt; }
    // Classification accuracy on a held-out set; NaN for regression-style tasks.
    virtual double test_accuracy(const std::vector<double>&) const;
};

// F(x) = (1/M) sum_m [ 1/2 ||A_m x - b_m||^2 + rho/2 ||x||^2 ] with the
// average Hessian spectrum mapped exactly onto [mu, L].
class QuadraticTask : public LearningTask {
public:
    static QuadraticTask synthesize(int devices, int dimension, double mu, double lipschitz,
                                    double heterogeneity, std::uint64_t seed);

    int dimension() const override { return static_cast<int>(dim_); }
    int device_count() const override { return static_cast<int>(design_.size()); }
    double local_loss(int device, const std::vector<double>& x) const override;
    std::vector<double> local_gradient(int device, const std::vector<double>& x) const override;
    std::optional<double> optimal_value() const override { return optimal_value_; }
    std::optional<double> exact_mu() const override { return mu_; }
    std::optional<double> exact_lipschitz() const override { return lipschitz_; }

    const Eigen::VectorXd& optimum() const { return optimum_; }
    double ridge() const { return ridge_; }

private:
    std::vector<Eigen::MatrixXd> design_;   // A_m
    std::vector<Eigen::VectorXd> offsets_;  // b_m
    double ridge_ = 0.0;
    long dim_ = 0;
    double mu_ = 0.0;
    double lipschitz_ = 0.0;
    Eigen::VectorXd optimum_;
    double optimal_value_ = 0.0;
};

// l2-regularized logistic regression on synthetic two-class Gaussians; the
// last feature coordinate is a bias term.
class LogisticTask : public LearningTask {
public:
    static LogisticTask synthesize(int devices, int dimension, int samples_per_device,
                                   int test_samples, double class_margin, double ridge,
                                   std::uint64_t seed);

    int dimension() const override { return dim_; }
    int device_count() const override { return static_cast<int>(features_.size()); }
    double local_loss(int device, const std::vector<double>& x) const override;
    std::vector<double> local_gradient(int device, const std::vector<double>& x) const override;
    double test_accuracy(const std::vector<double>& x) const override;

    double ridge() const { return ridge_; }

private:
    std::vector<Eigen::MatrixXd> features_;        // per device: S_d x D
    std::vector<Eigen::VectorXd> labels_;          // per device: +-1
    Eigen::MatrixXd test_features_;
    Eigen::VectorXd test_labels_;
    double ridge_ = 0.0;
    int dim_ = 0;
};

}  // namespace uavafl
