#include "uavafl/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "uavafl/errors.hpp"
#include "uavafl/rng.hpp"

namespace uavafl {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
// Mechanics constraints are exact norms on finite-precision positions, so a
// tight relative tolerance is enough.
constexpr double kMechTol = 1e-9;
}  // namespace

double Scenario::amplitude_cap() const { return std::sqrt(tx_power_max / 2.0); }

void Scenario::check() const {
    if (devices.empty()) throw ConfigError("scenario has no devices");
    if (altitude <= 0.0) throw ConfigError("altitude must be positive");
    if (v_max <= 0.0 || a_max <= 0.0) throw ConfigError("v_max and a_max must be positive");
    if (tx_power_max <= 0.0) throw ConfigError("P0 must be positive");
    if (noise_power <= 0.0) throw ConfigError("noise power must be positive");
    if (g0 <= 0.0) throw ConfigError("g0 must be positive");
    if (slot_duration <= 0.0) throw ConfigError("slot duration must be positive");
    if (num_slots < 1) throw ConfigError("K must be at least 1");
    for (const DeviceSpec& d : devices) {
        if (d.position.z != 0.0) throw ConfigError("device z-coordinate must be 0");
        if (d.position.x < 0.0 || d.position.x > area_side || d.position.y < 0.0 ||
            d.position.y > area_side) {
            throw ConfigError("device outside area");
        }
        if (d.compute_slots < 0) throw ConfigError("compute time must be non-negative");
    }
}

Scenario generate_scenario(std::uint64_t seed, const LayoutSpec& layout, int device_count,
                           const Scenario& params) {
    if (device_count < 1) throw ConfigError("device count must be at least 1");
    Scenario s = params;
    s.devices.clear();
    s.devices.reserve(device_count);
    Rng rng(substream_seed(seed, "scenario"));

    if (layout.kind == LayoutSpec::Kind::Uniform) {
        for (int m = 0; m < device_count; ++m) {
            DeviceSpec d;
            d.id = m;
            d.position = {rng.uniform(0.0, s.area_side), rng.uniform(0.0, s.area_side), 0.0};
            s.devices.push_back(d);
        }
    } else {
        if (layout.cluster_count < 1) throw ConfigError("cluster count must be at least 1");
        if (layout.cluster_radius <= 0.0 || 2.0 * layout.cluster_radius > s.area_side) {
            throw ConfigError("cluster radius does not fit within area");
        }
        std::vector<Vec3> centers(layout.cluster_count);
        for (Vec3& c : centers) {
            c = {rng.uniform(layout.cluster_radius, s.area_side - layout.cluster_radius),
                 rng.uniform(layout.cluster_radius, s.area_side - layout.cluster_radius), 0.0};
        }
        for (int m = 0; m < device_count; ++m) {
            const int cluster = m % layout.cluster_count;
            // Uniform over the disk around the cluster center.
            const double r = layout.cluster_radius * std::sqrt(rng.uniform01());
            const double a = rng.uniform(0.0, kTwoPi);
            DeviceSpec d;
            d.id = m;
            d.cluster_id = cluster;
            d.position = centers[cluster] + Vec3{r * std::cos(a), r * std::sin(a), 0.0};
            d.position.x = std::clamp(d.position.x, 0.0, s.area_side);
            d.position.y = std::clamp(d.position.y, 0.0, s.area_side);
            s.devices.push_back(d);
        }
    }
    s.check();
    return s;
}

double sigma_w(const Scenario& scenario) {
    if (scenario.devices.empty()) throw ConfigError("sigma_w needs at least one device");
    Vec3 mean{0.0, 0.0, 0.0};
    for (const DeviceSpec& d : scenario.devices) mean += d.position;
    mean = mean / static_cast<double>(scenario.devices.size());
    double total = 0.0;
    for (const DeviceSpec& d : scenario.devices) total += distance(d.position, mean);
    return total;
}

std::string TrajectoryViolation::describe() const {
    std::ostringstream os;
    switch (kind) {
        case Kind::Speed: os << "speed"; break;
        case Kind::Acceleration: os << "acceleration"; break;
        case Kind::Endpoint: os << "endpoint"; break;
        case Kind::Altitude: os << "altitude"; break;
    }
    os << " violation at slot " << slot << ": " << value << " exceeds " << bound;
    return os.str();
}

std::vector<TrajectoryViolation> validate_trajectory(const Scenario& scenario,
                                                     const Trajectory& trajectory) {
    const int K = scenario.num_slots;
    if (static_cast<int>(trajectory.positions.size()) != K + 1) {
        throw ShapeError("trajectory must have K+1 positions");
    }
    std::vector<TrajectoryViolation> out;
    const double dt = scenario.slot_duration;
    const double v_cap = scenario.v_max * (1.0 + kMechTol);
    const double a_cap = scenario.a_max * (1.0 + kMechTol);

    const auto& q = trajectory.positions;
    for (int k = 0; k <= K; ++k) {
        if (std::abs(q[k].z - scenario.altitude) > kMechTol * std::max(1.0, scenario.altitude)) {
            out.push_back({TrajectoryViolation::Kind::Altitude, k, q[k].z, scenario.altitude});
        }
    }
    for (int k = 0; k < K; ++k) {
        const double speed = distance(q[k + 1], q[k]) / dt;
        if (speed > v_cap) {
            out.push_back({TrajectoryViolation::Kind::Speed, k, speed, scenario.v_max});
        }
    }
    for (int k = 0; k + 2 <= K; ++k) {
        const Vec3 acc = (q[k + 2] - 2.0 * q[k + 1] + q[k]) / (dt * dt);
        if (acc.norm() > a_cap) {
            out.push_back(
                {TrajectoryViolation::Kind::Acceleration, k, acc.norm(), scenario.a_max});
        }
    }
    const double end_tol = kMechTol * std::max(1.0, scenario.area_side);
    if (distance(q[0], scenario.dispatch_point) > end_tol) {
        out.push_back({TrajectoryViolation::Kind::Endpoint, 0,
                       distance(q[0], scenario.dispatch_point), 0.0});
    }
    if (distance(q[K], scenario.dispatch_point) > end_tol) {
        out.push_back({TrajectoryViolation::Kind::Endpoint, K,
                       distance(q[K], scenario.dispatch_point), 0.0});
    }
    return out;
}

double channel_magnitude(const Scenario& scenario, Vec3 uav_position, int device) {
    const double d = distance(uav_position, scenario.devices.at(device).position);
    if (d <= 0.0) throw SingularityError("UAV position coincides with device");
    return std::sqrt(scenario.g0) / d;
}

ChannelRealization ChannelModel::realize(Vec3 uav_position, int device, int slot) const {
    ChannelRealization h;
    h.magnitude = channel_magnitude(*scenario_, uav_position, device);
    const std::uint64_t word =
        mix64(hash_combine(phase_seed_, (static_cast<std::uint64_t>(device) << 32) ^
                                            static_cast<std::uint64_t>(slot)));
    h.phase = (static_cast<double>(word >> 11) + 0.5) * 0x1.0p-53 * kTwoPi;
    return h;
}

}  // namespace uavafl
