#include "uavafl/pathing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "uavafl/errors.hpp"

namespace uavafl {

namespace {

// Discrete ramp profile for one segment: per-slot speeds start at v_in, end
// at v_out, change by at most `a` per slot and stay below `vc`. The smallest
// slot count whose distance reaches L is used, then speeds are scaled down
// uniformly so the distance is exactly L.
std::vector<double> segment_speeds(double length, double v_in, double v_out, double vc,
                                   double a, int max_slots) {
    for (int n = 1; n <= max_slots; ++n) {
        std::vector<double> v(n);
        double dist = 0.0;
        for (int i = 0; i < n; ++i) {
            const double fwd = v_in + (i + 1) * a;
            const double bwd = v_out + (n - i) * a;
            v[i] = std::min({vc, fwd, bwd});
            dist += v[i];
        }
        if (dist >= length) {
            const double scale = length / dist;
            for (double& s : v) s *= scale;
            return v;
        }
    }
    throw InfeasibleError("waypoint segment does not fit into the slot budget");
}

}  // namespace

Trajectory plan_waypoint_path(const Scenario& scenario, const std::vector<Vec3>& waypoints,
                              int slots, const PlanOptions& options,
                              const std::vector<int>* dwell, std::vector<int>* arrivals) {
    if (waypoints.size() < 2) throw ConfigError("need at least two waypoints");
    if (dwell && dwell->size() != waypoints.size()) throw ShapeError("dwell length mismatch");
    const double dt = scenario.slot_duration;
    const double vc = options.speed_fraction * scenario.v_max * dt;   // per-slot distance
    const double a = options.accel_fraction * scenario.a_max * dt * dt;

    std::vector<Vec3> pts;
    for (const Vec3& w : waypoints) pts.push_back({w.x, w.y, scenario.altitude});

    // Corner speed caps: crossing a vertex with turn angle theta at speed s
    // produces a velocity change of 2 s sin(theta/2). Dwelled waypoints are
    // crossed at rest.
    std::vector<double> corner_cap(pts.size(), 0.0);  // rest at both ends
    for (std::size_t i = 1; i + 1 < pts.size(); ++i) {
        if (dwell && (*dwell)[i] > 0) continue;
        const Vec3 din = pts[i] - pts[i - 1];
        const Vec3 dout = pts[i + 1] - pts[i];
        if (din.norm() < 1e-12 || dout.norm() < 1e-12) {
            corner_cap[i] = vc;  // duplicate point, no real corner
            continue;
        }
        double cosang = (din.x * dout.x + din.y * dout.y + din.z * dout.z) /
                        (din.norm() * dout.norm());
        cosang = std::clamp(cosang, -1.0, 1.0);
        const double half_sin = std::sqrt(std::max(0.0, (1.0 - cosang) / 2.0));
        // The ramp may add one step of acceleration on top of the boundary
        // speed, so the cap passed to the profile leaves room for it.
        const double cap = half_sin < 1e-9 ? vc : std::min(vc, a / (2.0 * half_sin));
        corner_cap[i] = std::max(0.0, cap - a);
    }

    Trajectory out;
    out.positions.push_back(pts.front());
    if (arrivals) arrivals->assign(pts.size(), 0);
    for (int i = 0; dwell && i < (*dwell)[0]; ++i) out.positions.push_back(pts.front());
    for (std::size_t seg = 0; seg + 1 < pts.size(); ++seg) {
        const Vec3 delta = pts[seg + 1] - pts[seg];
        const double len = delta.norm();
        if (len >= 1e-12) {
            const Vec3 dir = delta / len;
            const int budget = slots - static_cast<int>(out.positions.size()) + 1;
            if (budget <= 0) throw InfeasibleError("path exceeds the slot budget");
            const std::vector<double> speeds =
                segment_speeds(len, corner_cap[seg], corner_cap[seg + 1], vc, a, budget);
            double run = 0.0;
            for (double s : speeds) {
                run += s;
                out.positions.push_back(pts[seg] + std::min(run, len) * dir);
            }
            out.positions.back() = pts[seg + 1];
        }
        if (arrivals) (*arrivals)[seg + 1] = static_cast<int>(out.positions.size()) - 1;
        if (dwell) {
            for (int i = 0; i < (*dwell)[seg + 1]; ++i) out.positions.push_back(pts[seg + 1]);
        }
    }
    if (static_cast<int>(out.positions.size()) > slots + 1) {
        throw InfeasibleError("path exceeds the slot budget");
    }
    while (static_cast<int>(out.positions.size()) < slots + 1) {
        out.positions.push_back(pts.back());  // hover padding
    }

    Scenario sized = scenario;
    sized.num_slots = slots;
    const auto violations = validate_trajectory(sized, out);
    if (!violations.empty()) throw InfeasibleError(violations.front().describe());
    return out;
}

int minimal_plan_slots(const Scenario& scenario, const std::vector<Vec3>& waypoints,
                       const PlanOptions& options) {
    int lo = 1;
    int hi = 2;
    const auto fits = [&](int slots) {
        Scenario trial = scenario;
        trial.num_slots = slots;
        try {
            plan_waypoint_path(trial, waypoints, slots, options);
            return true;
        } catch (const InfeasibleError&) {
            return false;
        }
    };
    while (!fits(hi)) {
        hi *= 2;
        if (hi > 1 << 22) throw InfeasibleError("path cannot be planned at any horizon");
    }
    while (lo < hi) {
        const int mid = (lo + hi) / 2;
        if (fits(mid)) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    return hi;
}

double least_squares_radius(const Scenario& scenario, Vec3 center) {
    double sum = 0.0;
    for (const DeviceSpec& d : scenario.devices) {
        sum += distance({d.position.x, d.position.y, 0.0}, {center.x, center.y, 0.0});
    }
    return sum / static_cast<double>(scenario.devices.size());
}

std::vector<Vec3> circle_loop_waypoints(const Scenario& scenario, Vec3 center, double radius,
                                        int vertex_count) {
    std::vector<Vec3> pts;
    pts.push_back(scenario.dispatch_point);
    if (radius < 1e-9) {
        pts.push_back({center.x, center.y, scenario.altitude});
        pts.push_back(scenario.dispatch_point);
        return pts;
    }
    // Enter at the circle point nearest the dispatch position.
    const double phase = std::atan2(scenario.dispatch_point.y - center.y,
                                    scenario.dispatch_point.x - center.x);
    for (int i = 0; i <= vertex_count; ++i) {
        const double ang = phase + 2.0 * M_PI * i / vertex_count;
        pts.push_back({center.x + radius * std::cos(ang), center.y + radius * std::sin(ang),
                       scenario.altitude});
    }
    pts.push_back(scenario.dispatch_point);
    return pts;
}

std::vector<int> nearest_neighbor_tour(const Scenario& scenario) {
    const int m = scenario.device_count();
    std::vector<int> tour;
    std::vector<bool> used(m, false);
    Vec3 at = scenario.dispatch_point;
    for (int step = 0; step < m; ++step) {
        int best = -1;
        double best_d = 0.0;
        for (int i = 0; i < m; ++i) {
            if (used[i]) continue;
            const double d = distance(at, {scenario.devices[i].position.x,
                                           scenario.devices[i].position.y, at.z});
            if (best < 0 || d < best_d) {
                best = i;
                best_d = d;
            }
        }
        used[best] = true;
        tour.push_back(best);
        at = {scenario.devices[best].position.x, scenario.devices[best].position.y, at.z};
    }
    return tour;
}

double tour_length(const Scenario& scenario, const std::vector<int>& tour) {
    const auto at = [&](int device) {
        return Vec3{scenario.devices[device].position.x, scenario.devices[device].position.y,
                    scenario.altitude};
    };
    double len = 0.0;
    Vec3 prev = scenario.dispatch_point;
    for (int d : tour) {
        len += distance(prev, at(d));
        prev = at(d);
    }
    return len + distance(prev, scenario.dispatch_point);
}

std::vector<int> two_opt(const Scenario& scenario, std::vector<int> tour) {
    bool improved = true;
    while (improved) {
        improved = false;
        for (std::size_t i = 0; i + 1 < tour.size(); ++i) {
            for (std::size_t j = i + 1; j < tour.size(); ++j) {
                std::vector<int> candidate = tour;
                std::reverse(candidate.begin() + i, candidate.begin() + j + 1);
                if (tour_length(scenario, candidate) < tour_length(scenario, tour) - 1e-9) {
                    tour = std::move(candidate);
                    improved = true;
                }
            }
        }
    }
    return tour;
}

}  // namespace uavafl
