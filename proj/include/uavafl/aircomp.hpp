#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "uavafl/rng.hpp"
#include "uavafl/scenario.hpp"

namespace uavafl {

// Zero-mean unit-variance form of a gradient plus the statistics needed to
// invert it. A constant gradient is flagged degenerate: the device transmits
// nothing and the receiver reconstructs from the shared mean alone.
struct NormalizedGradient {
    std::vector<double> tilde;
    double mean = 0.0;
    double variance = 0.0;
    bool degenerate = false;
};

struct TransceiverConfig {
    std::vector<double> amplitudes;  // b_m(k) per selected device, >= 0
    double zeta = 0.0;               // denoising factor
    int slot = 0;
};

// Per-device quantities entering the MSE analytics for one slot.
struct DeviceGain {
    double channel_mag = 0.0;  // |h_m(k)|
    double amplitude = 0.0;    // b_m(k)
    double variance = 1.0;     // v_m(k)
};

struct AggregationResult {
    std::vector<double> estimate;    // g_hat(k)
    std::vector<double> true_mean;   // g(k)
    std::vector<double> comm_error;  // e_c(k) = g(k) - g_hat(k)
    double analytic_mse = 0.0;
    double zeta = 0.0;
    std::vector<double> deltas;  // Delta_m(k) per device, 0 for degenerate
};

NormalizedGradient normalize(const std::vector<double>& gradient);
std::vector<double> reconstruct(const NormalizedGradient& n);

std::vector<std::complex<double>> modulate(const std::vector<double>& tilde);
std::vector<double> demodulate(const std::vector<std::complex<double>>& symbols);

// zeta(k) = sum_m (sqrt(v_m)/|M_k|)|h_m|b_m / (sum_m |h_m|^2 b_m^2 + dn2/2),
// the unique minimizer of the analytic communication MSE. Devices with zero
// variance are silent and drop out of both sums.
double optimal_zeta(const std::vector<DeviceGain>& devices, double noise_power,
                    int selected_count);

// Exact per-slot communication MSE under the i.i.d. unit-variance gradient
// model: C * (sum_m 2 Delta_m^2 + zeta^2 dn2).
double analytic_comm_mse(const std::vector<DeviceGain>& devices, double zeta,
                         double noise_power, int selected_count, int dimension);

// Upper bound on the slot MSE given Theta(k) = delta^2 + alpha1 + alpha2 *
// ||grad F(x(k))||^2 (takes one representative variance for all devices).
double comm_mse_bound(double theta, const std::vector<DeviceGain>& devices,
                      double noise_power);

// Full transceiver chain: normalize, modulate, precode with phase
// compensation, superpose over the channel with complex AWGN, denoise,
// demodulate and re-add the shared mean.
AggregationResult transmit_and_aggregate(const std::vector<std::vector<double>>& gradients,
                                         const std::vector<ChannelRealization>& channels,
                                         const TransceiverConfig& config, double noise_power,
                                         Rng& noise_rng);

double nmse_db(const std::vector<double>& estimate, const std::vector<double>& truth);

// Monte-Carlo estimate of E||e_c||^2 with fresh i.i.d. Gaussian gradients and
// fresh noise per trial. Trials use independent counter-derived streams and a
// fixed-order reduction, so the parallel kernel is bit-identical to the
// serial reference.
struct McSlotConfig {
    int dimension = 0;
    std::vector<DeviceGain> devices;  // variance field is the draw variance
    double zeta = 0.0;
    double noise_power = 0.0;
};

double mc_comm_mse_serial(const McSlotConfig& cfg, int trials, std::uint64_t seed);
double mc_comm_mse(const McSlotConfig& cfg, int trials, std::uint64_t seed);

// Noise-only Monte-Carlo around a realized slot: gradients stay fixed, the
// AWGN is redrawn. Used when auditing the e_a window bound.
double mc_comm_mse_fixed_gradients(const std::vector<std::complex<double>>& superposed_signal,
                                   double zeta, double noise_power, int dimension, int trials,
                                   std::uint64_t seed);

}  // namespace uavafl
