#include "uavafl/aircomp.hpp"

#include <cmath>
#include <limits>

#include "uavafl/errors.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace uavafl {

namespace {

void require_even_dimension(std::size_t d) {
    if (d < 2 || d % 2 != 0) throw ShapeError("gradient dimension must be even and >= 2");
}

}  // namespace

NormalizedGradient normalize(const std::vector<double>& gradient) {
    require_even_dimension(gradient.size());
    const double d = static_cast<double>(gradient.size());
    NormalizedGradient out;
    double mean = 0.0;
    for (double v : gradient) mean += v;
    mean /= d;
    double var = 0.0;
    for (double v : gradient) var += (v - mean) * (v - mean);
    var /= d;
    out.mean = mean;
    out.variance = var;
    out.tilde.assign(gradient.size(), 0.0);
    if (var > 0.0) {
        const double inv_std = 1.0 / std::sqrt(var);
        for (std::size_t i = 0; i < gradient.size(); ++i) {
            out.tilde[i] = (gradient[i] - mean) * inv_std;
        }
    } else {
        out.degenerate = true;
    }
    return out;
}

std::vector<double> reconstruct(const NormalizedGradient& n) {
    std::vector<double> g(n.tilde.size(), n.mean);
    if (!n.degenerate) {
        const double s = std::sqrt(n.variance);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = n.tilde[i] * s + n.mean;
    }
    return g;
}

std::vector<std::complex<double>> modulate(const std::vector<double>& tilde) {
    require_even_dimension(tilde.size());
    const std::size_t c = tilde.size() / 2;
    std::vector<std::complex<double>> symbols(c);
    for (std::size_t i = 0; i < c; ++i) symbols[i] = {tilde[i], tilde[c + i]};
    return symbols;
}

std::vector<double> demodulate(const std::vector<std::complex<double>>& symbols) {
    const std::size_t c = symbols.size();
    std::vector<double> tilde(2 * c);
    for (std::size_t i = 0; i < c; ++i) {
        tilde[i] = symbols[i].real();
        tilde[c + i] = symbols[i].imag();
    }
    return tilde;
}

double optimal_zeta(const std::vector<DeviceGain>& devices, double noise_power,
                    int selected_count) {
    if (devices.empty() || selected_count < 1) {
        throw ConfigError("optimal_zeta undefined for an empty selection");
    }
    double num = 0.0;
    double den = noise_power / 2.0;
    for (const DeviceGain& d : devices) {
        if (d.variance <= 0.0) continue;  // silent device
        const double t = d.channel_mag * d.amplitude;
        num += std::sqrt(d.variance) / static_cast<double>(selected_count) * t;
        den += t * t;
    }
    if (den <= 0.0) throw ConfigError("optimal_zeta denominator is zero");
    return num / den;
}

double analytic_comm_mse(const std::vector<DeviceGain>& devices, double zeta,
                         double noise_power, int selected_count, int dimension) {
    if (devices.empty() || selected_count < 1) return 0.0;
    require_even_dimension(static_cast<std::size_t>(dimension));
    double sum = zeta * zeta * noise_power;
    for (const DeviceGain& d : devices) {
        if (d.variance <= 0.0) continue;
        const double delta = std::sqrt(d.variance) / static_cast<double>(selected_count) -
                             zeta * d.channel_mag * d.amplitude;
        sum += 2.0 * delta * delta;
    }
    return static_cast<double>(dimension / 2) * sum;
}

double comm_mse_bound(double theta, const std::vector<DeviceGain>& devices,
                      double noise_power) {
    if (devices.empty()) return 0.0;
    double lin = 0.0;
    double quad = noise_power / 2.0;
    for (const DeviceGain& d : devices) {
        const double t = d.channel_mag * d.amplitude;
        lin += t;
        quad += t * t;
    }
    return theta * (static_cast<double>(devices.size()) - lin * lin / quad);
}

AggregationResult transmit_and_aggregate(const std::vector<std::vector<double>>& gradients,
                                         const std::vector<ChannelRealization>& channels,
                                         const TransceiverConfig& config, double noise_power,
                                         Rng& noise_rng) {
    const std::size_t n = gradients.size();
    if (channels.size() != n || config.amplitudes.size() != n) {
        throw ShapeError("per-device inputs must have matching lengths");
    }
    if (n == 0) throw ShapeError("transmit_and_aggregate needs at least one device");
    const std::size_t dim = gradients[0].size();
    require_even_dimension(dim);
    const std::size_t c = dim / 2;

    AggregationResult out;
    out.zeta = config.zeta;
    out.true_mean.assign(dim, 0.0);
    out.deltas.assign(n, 0.0);
    std::vector<DeviceGain> gains(n);

    std::vector<std::complex<double>> received(c, {0.0, 0.0});
    double mean_of_means = 0.0;
    for (std::size_t m = 0; m < n; ++m) {
        if (gradients[m].size() != dim) throw ShapeError("gradient dimensions differ");
        const NormalizedGradient norm = normalize(gradients[m]);
        mean_of_means += norm.mean;
        for (std::size_t i = 0; i < dim; ++i) out.true_mean[i] += gradients[m][i];
        gains[m] = {channels[m].magnitude, config.amplitudes[m], norm.variance};
        if (norm.degenerate) continue;  // transmits nothing; mean carries it

        const double b = config.amplitudes[m];
        const std::complex<double> precode =
            b * std::exp(std::complex<double>(0.0, -channels[m].phase));
        const std::complex<double> gain =
            channels[m].magnitude * std::exp(std::complex<double>(0.0, channels[m].phase));
        const std::vector<std::complex<double>> symbols = modulate(norm.tilde);
        const std::complex<double> through = gain * precode;
        for (std::size_t i = 0; i < c; ++i) received[i] += through * symbols[i];

        out.deltas[m] = std::sqrt(norm.variance) / static_cast<double>(n) -
                        config.zeta * channels[m].magnitude * b;
    }
    mean_of_means /= static_cast<double>(n);
    for (double& v : out.true_mean) v /= static_cast<double>(n);

    const double noise_std = std::sqrt(noise_power / 2.0);
    for (std::size_t i = 0; i < c; ++i) {
        received[i] += std::complex<double>(noise_rng.gaussian(0.0, noise_std),
                                            noise_rng.gaussian(0.0, noise_std));
    }

    std::vector<std::complex<double>> denoised(c);
    for (std::size_t i = 0; i < c; ++i) denoised[i] = config.zeta * received[i];

    out.estimate = demodulate(denoised);
    for (double& v : out.estimate) v += mean_of_means;

    out.comm_error.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) out.comm_error[i] = out.true_mean[i] - out.estimate[i];

    out.analytic_mse = analytic_comm_mse(gains, config.zeta, noise_power,
                                         static_cast<int>(n), static_cast<int>(dim));
    return out;
}

double nmse_db(const std::vector<double>& estimate, const std::vector<double>& truth) {
    if (estimate.size() != truth.size()) throw ShapeError("nmse_db dimensions differ");
    double err = 0.0;
    double ref = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double d = estimate[i] - truth[i];
        err += d * d;
        ref += truth[i] * truth[i];
    }
    if (ref <= 0.0) throw ConfigError("nmse_db undefined for a zero true gradient");
    if (err == 0.0) return -std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(err / ref);
}

namespace {

double mc_trial(const McSlotConfig& cfg, std::uint64_t trial_seed) {
    Rng rng(trial_seed);
    const std::size_t n = cfg.devices.size();
    std::vector<std::vector<double>> gradients(n);
    std::vector<ChannelRealization> channels(n);
    TransceiverConfig tc;
    tc.zeta = cfg.zeta;
    tc.amplitudes.resize(n);
    for (std::size_t m = 0; m < n; ++m) {
        // Draw a direction and rescale to the exact slot variance, so the
        // realized v_m matches the configured one; the i.i.d. model is about
        // the normalized symbols.
        std::vector<double> raw(cfg.dimension);
        for (double& v : raw) v = rng.gaussian();
        const NormalizedGradient shape = normalize(raw);
        const double std_dev = std::sqrt(cfg.devices[m].variance);
        const double mean = rng.gaussian(0.0, 2.0);
        gradients[m].resize(cfg.dimension);
        for (int i = 0; i < cfg.dimension; ++i) {
            gradients[m][i] = shape.tilde[i] * std_dev + mean;
        }
        channels[m] = {cfg.devices[m].channel_mag, rng.uniform(0.0, 6.283185307179586)};
        tc.amplitudes[m] = cfg.devices[m].amplitude;
    }
    const AggregationResult r =
        transmit_and_aggregate(gradients, channels, tc, cfg.noise_power, rng);
    double sq = 0.0;
    for (double v : r.comm_error) sq += v * v;
    return sq;
}

}  // namespace

double mc_comm_mse_serial(const McSlotConfig& cfg, int trials, std::uint64_t seed) {
    std::vector<double> per_trial(trials);
    for (int t = 0; t < trials; ++t) per_trial[t] = mc_trial(cfg, hash_combine(seed, t));
    double sum = 0.0;
    for (double v : per_trial) sum += v;
    return sum / static_cast<double>(trials);
}

double mc_comm_mse(const McSlotConfig& cfg, int trials, std::uint64_t seed) {
    std::vector<double> per_trial(trials);
#pragma omp parallel for schedule(static)
    for (int t = 0; t < trials; ++t) per_trial[t] = mc_trial(cfg, hash_combine(seed, t));
    double sum = 0.0;
    for (double v : per_trial) sum += v;
    return sum / static_cast<double>(trials);
}

double mc_comm_mse_fixed_gradients(const std::vector<std::complex<double>>& superposed_signal,
                                   double zeta, double noise_power, int dimension, int trials,
                                   std::uint64_t seed) {
    require_even_dimension(static_cast<std::size_t>(dimension));
    const std::size_t c = static_cast<std::size_t>(dimension) / 2;
    if (superposed_signal.size() != c) throw ShapeError("signal length must be D/2");
    const double noise_std = std::sqrt(noise_power / 2.0);
    std::vector<double> per_trial(trials);
#pragma omp parallel for schedule(static)
    for (int t = 0; t < trials; ++t) {
        Rng rng(hash_combine(seed, t));
        double sq = 0.0;
        for (std::size_t i = 0; i < c; ++i) {
            const double re = superposed_signal[i].real() - zeta * rng.gaussian(0.0, noise_std);
            const double im = superposed_signal[i].imag() - zeta * rng.gaussian(0.0, noise_std);
            sq += re * re + im * im;
        }
        per_trial[t] = sq;
    }
    double sum = 0.0;
    for (double v : per_trial) sum += v;
    return sum / static_cast<double>(trials);
}

}  // namespace uavafl
