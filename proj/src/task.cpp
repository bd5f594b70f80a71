#include "uavafl/task.hpp"

#include <cmath>
#include <limits>

#include "uavafl/errors.hpp"
#include "uavafl/rng.hpp"

namespace uavafl {

namespace {

Eigen::VectorXd to_eigen(const std::vector<double>& x) {
    return Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<long>(x.size()));
}

std::vector<double> from_eigen(const Eigen::VectorXd& v) {
    return {v.data(), v.data() + v.size()};
}

}  // namespace

double LearningTask::global_loss(const std::vector<double>& x) const {
    double total = 0.0;
    for (int m = 0; m < device_count(); ++m) total += local_loss(m, x);
    return total / device_count();
}

std::vector<double> LearningTask::global_gradient(const std::vector<double>& x) const {
    std::vector<double> g(x.size(), 0.0);
    for (int m = 0; m < device_count(); ++m) {
        const std::vector<double> gm = local_gradient(m, x);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gm[i];
    }
    for (double& v : g) v /= device_count();
    return g;
}

double LearningTask::test_accuracy(const std::vector<double>&) const {
    return std::numeric_limits<double>::quiet_NaN();
}

QuadraticTask QuadraticTask::synthesize(int devices, int dimension, double mu, double lipschitz,
                                        double heterogeneity, std::uint64_t seed) {
    if (devices < 1 || dimension < 2) throw ConfigError("quadratic task needs M >= 1, D >= 2");
    if (!(0.0 < mu && mu <= lipschitz)) throw ConfigError("need 0 < mu <= L");
    Rng rng(substream_seed(seed, "quadratic-task"));

    QuadraticTask task;
    task.dim_ = dimension;
    task.design_.reserve(devices);
    task.offsets_.reserve(devices);

    // All devices share an eigenbasis; heterogeneity jitters the per-device
    // spectra multiplicatively within a bounded band, so local Hessian norms
    // stay comparable to L and single-subset updates at lambda = 1/L remain
    // stable. The average Hessian spectrum is then mapped exactly onto
    // [mu, L] by an affine stretch.
    Eigen::MatrixXd gauss(dimension, dimension);
    for (long r = 0; r < dimension; ++r) {
        for (long c = 0; c < dimension; ++c) gauss(r, c) = rng.gaussian();
    }
    const Eigen::MatrixXd basis =
        Eigen::HouseholderQR<Eigen::MatrixXd>(gauss).householderQ();

    const double ratio = lipschitz / mu;
    Eigen::VectorXd base_spectrum(dimension);
    base_spectrum[0] = 1.0;
    base_spectrum[1] = ratio;
    for (long i = 2; i < dimension; ++i) {
        base_spectrum[i] = std::exp(rng.uniform(0.0, std::log(ratio)));
    }
    const double jitter = 0.4 * std::min(std::abs(heterogeneity), 1.0);
    std::vector<Eigen::VectorXd> spectra(devices, Eigen::VectorXd(dimension));
    Eigen::VectorXd mean_spectrum = Eigen::VectorXd::Zero(dimension);
    for (int m = 0; m < devices; ++m) {
        for (long i = 0; i < dimension; ++i) {
            spectra[m][i] = base_spectrum[i] * std::exp2(jitter * rng.uniform(-1.0, 1.0));
        }
        mean_spectrum += spectra[m];
    }
    mean_spectrum /= devices;

    const double lo = mean_spectrum.minCoeff();
    const double hi = mean_spectrum.maxCoeff();
    if (hi - lo < 1e-12) throw ConfigError("degenerate raw spectrum; pick a larger dimension");
    const double stretch = (lipschitz - mu) / (hi - lo);
    task.ridge_ = mu - stretch * lo;

    std::vector<Eigen::VectorXd> targets;
    Eigen::VectorXd base_target(dimension);
    for (long i = 0; i < dimension; ++i) base_target[i] = rng.gaussian();
    for (int m = 0; m < devices; ++m) {
        task.design_.push_back((stretch * spectra[m]).cwiseSqrt().asDiagonal() *
                               basis.transpose());
        Eigen::VectorXd z = base_target;
        for (long i = 0; i < dimension; ++i) z[i] += heterogeneity * rng.gaussian();
        targets.push_back(z);
        task.offsets_.push_back(task.design_[m] * targets[m]);
    }
    task.mu_ = mu;
    task.lipschitz_ = lipschitz;

    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dimension, dimension);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dimension);
    for (int m = 0; m < devices; ++m) {
        h += task.design_[m].transpose() * task.design_[m];
        rhs += task.design_[m].transpose() * task.offsets_[m];
    }
    h /= devices;
    rhs /= devices;
    h += task.ridge_ * Eigen::MatrixXd::Identity(dimension, dimension);
    task.optimum_ = h.ldlt().solve(rhs);
    task.optimal_value_ = task.global_loss(from_eigen(task.optimum_));
    return task;
}

double QuadraticTask::local_loss(int device, const std::vector<double>& x) const {
    const Eigen::VectorXd v = to_eigen(x);
    const Eigen::VectorXd r = design_.at(device) * v - offsets_.at(device);
    return 0.5 * r.squaredNorm() + 0.5 * ridge_ * v.squaredNorm();
}

std::vector<double> QuadraticTask::local_gradient(int device, const std::vector<double>& x) const {
    const Eigen::VectorXd v = to_eigen(x);
    const Eigen::VectorXd g =
        design_.at(device).transpose() * (design_.at(device) * v - offsets_.at(device)) +
        ridge_ * v;
    return from_eigen(g);
}

LogisticTask LogisticTask::synthesize(int devices, int dimension, int samples_per_device,
                                      int test_samples, double class_margin, double ridge,
                                      std::uint64_t seed) {
    if (devices < 1 || dimension < 2) throw ConfigError("logistic task needs M >= 1, D >= 2");
    Rng rng(substream_seed(seed, "logistic-task"));

    LogisticTask task;
    task.dim_ = dimension;
    task.ridge_ = ridge;

    Eigen::VectorXd direction(dimension - 1);
    for (long i = 0; i < dimension - 1; ++i) direction[i] = rng.gaussian();
    direction.normalize();

    const auto draw = [&](Eigen::MatrixXd& phi, Eigen::VectorXd& y, int n) {
        phi.resize(n, dimension);
        y.resize(n);
        for (int i = 0; i < n; ++i) {
            const double label = (i % 2 == 0) ? 1.0 : -1.0;
            for (long j = 0; j < dimension - 1; ++j) {
                phi(i, j) = label * class_margin * direction[j] + rng.gaussian();
            }
            phi(i, dimension - 1) = 1.0;  // bias
            y[i] = label;
        }
    };

    task.features_.resize(devices);
    task.labels_.resize(devices);
    for (int m = 0; m < devices; ++m) draw(task.features_[m], task.labels_[m], samples_per_device);
    draw(task.test_features_, task.test_labels_, test_samples);
    return task;
}

double LogisticTask::local_loss(int device, const std::vector<double>& x) const {
    const Eigen::VectorXd v = to_eigen(x);
    const Eigen::MatrixXd& phi = features_.at(device);
    const Eigen::VectorXd& y = labels_.at(device);
    const Eigen::VectorXd margins = (phi * v).cwiseProduct(y);
    double loss = 0.0;
    for (long i = 0; i < margins.size(); ++i) {
        // log(1 + exp(-t)) evaluated stably.
        const double t = margins[i];
        loss += (t > 0.0) ? std::log1p(std::exp(-t)) : -t + std::log1p(std::exp(t));
    }
    return loss / margins.size() + 0.5 * ridge_ * v.squaredNorm();
}

std::vector<double> LogisticTask::local_gradient(int device, const std::vector<double>& x) const {
    const Eigen::VectorXd v = to_eigen(x);
    const Eigen::MatrixXd& phi = features_.at(device);
    const Eigen::VectorXd& y = labels_.at(device);
    const Eigen::VectorXd margins = (phi * v).cwiseProduct(y);
    Eigen::VectorXd weights(margins.size());
    for (long i = 0; i < margins.size(); ++i) {
        weights[i] = -y[i] / (1.0 + std::exp(margins[i]));  // -y * sigmoid(-y x phi)
    }
    Eigen::VectorXd g = phi.transpose() * weights / margins.size() + ridge_ * v;
    return from_eigen(g);
}

double LogisticTask::test_accuracy(const std::vector<double>& x) const {
    const Eigen::VectorXd v = to_eigen(x);
    const Eigen::VectorXd scores = test_features_ * v;
    long correct = 0;
    for (long i = 0; i < scores.size(); ++i) {
        const double predicted = scores[i] > 0.0 ? 1.0 : -1.0;
        if (predicted == test_labels_[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(scores.size());
}

}  // namespace uavafl
