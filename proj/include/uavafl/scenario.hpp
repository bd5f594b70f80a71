#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "uavafl/vec3.hpp"

namespace uavafl {

struct DeviceSpec {
    int id = 0;
    Vec3 position;        // ground position, z == 0
    int compute_slots = 0;  // c_m: slots of local computation after selection
    int cluster_id = -1;
};

// Physical world: device placement, UAV mechanics limits, channel constants.
// Immutable after construction; safe to share read-only across workers.
struct Scenario {
    std::vector<DeviceSpec> devices;
    double area_side = 1000.0;   // m
    double altitude = 100.0;     // H, m
    double v_max = 50.0;         // m/s
    double a_max = 15.0;         // m/s^2
    Vec3 dispatch_point{0.0, 0.0, 100.0};  // q_F
    double g0 = 1e-6;            // linear power gain at 1 m
    double noise_power = 1e-11;  // delta_n^2, W
    double tx_power_max = 0.1;   // P0, W
    double slot_duration = 1.0;  // delta_t, s
    int num_slots = 10000;       // K

    int device_count() const { return static_cast<int>(devices.size()); }
    double amplitude_cap() const;  // sqrt(P0 / 2)
    void check() const;            // throws ConfigError on invariant violation
};

struct LayoutSpec {
    enum class Kind { Uniform, Clusters };
    Kind kind = Kind::Uniform;
    int cluster_count = 0;
    double cluster_radius = 0.0;  // m
};

// UAV path over one horizon: positions q(0..K), constant altitude.
struct Trajectory {
    std::vector<Vec3> positions;

    int slot_count() const { return static_cast<int>(positions.size()) - 1; }
};

struct TrajectoryViolation {
    enum class Kind { Speed, Acceleration, Endpoint, Altitude };
    Kind kind;
    int slot;      // slot index the violation is attached to
    double value;  // measured quantity
    double bound;  // allowed bound
    std::string describe() const;
};

struct ChannelRealization {
    double magnitude = 0.0;  // sqrt(g0) / d
    double phase = 0.0;      // radians in [0, 2pi)
};

Scenario generate_scenario(std::uint64_t seed, const LayoutSpec& layout, int device_count,
                           const Scenario& params);

// sigma(w) = sum_m ||w_m - mean(w)||, a dispersion metric in meters.
double sigma_w(const Scenario& scenario);

// Checks mechanics constraints: per-slot speed, per-slot acceleration,
// dispatch endpoints and constant altitude. Empty result means feasible.
std::vector<TrajectoryViolation> validate_trajectory(const Scenario& scenario,
                                                     const Trajectory& trajectory);

double channel_magnitude(const Scenario& scenario, Vec3 uav_position, int device);

// LoS free-space channel; the phase is i.i.d. uniform per (device, slot),
// drawn from a dedicated counter-based stream so realizations are
// order-independent. All devices are line-of-sight at every slot.
class ChannelModel {
public:
    ChannelModel(const Scenario& scenario, std::uint64_t phase_seed)
        : scenario_(&scenario), phase_seed_(phase_seed) {}

    ChannelRealization realize(Vec3 uav_position, int device, int slot) const;

private:
    const Scenario* scenario_;
    std::uint64_t phase_seed_;
};

}  // namespace uavafl
