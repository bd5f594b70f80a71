#pragma once

#include <vector>

#include "uavafl/scenario.hpp"

namespace uavafl {

// Discrete path planning under the mechanics constraints. Waypoint paths are
// traversed with per-segment ramp profiles; corners are crossed at a speed
// capped by the turn angle so second differences stay within a_max. The
// first and last waypoints are at rest.
struct PlanOptions {
    double speed_fraction = 0.9;  // share of v_max available for cruising
    double accel_fraction = 0.9;  // share of a_max used by ramps
};

// Positions q(0..K); pads with hover at the final waypoint when the path
// finishes early. Throws InfeasibleError when the path cannot fit into K
// slots. The result always passes validate_trajectory.
//
// dwell: optional per-waypoint hover slots (the waypoint is then crossed at
// rest). arrivals: optional out-slot of the first sample at each waypoint.
Trajectory plan_waypoint_path(const Scenario& scenario, const std::vector<Vec3>& waypoints,
                              int slots, const PlanOptions& options = {},
                              const std::vector<int>* dwell = nullptr,
                              std::vector<int>* arrivals = nullptr);

// Smallest slot count the path fits into (without padding).
int minimal_plan_slots(const Scenario& scenario, const std::vector<Vec3>& waypoints,
                       const PlanOptions& options = {});

// Least-squares circle radius: mean radial distance of devices from center.
double least_squares_radius(const Scenario& scenario, Vec3 center);

// Closed polygonal loop approximating the CF circle, dispatch point to
// dispatch point. vertex_count controls the polygon resolution.
std::vector<Vec3> circle_loop_waypoints(const Scenario& scenario, Vec3 center, double radius,
                                        int vertex_count);

// Tour heuristics over device positions (at altitude H), dispatch to dispatch.
std::vector<int> nearest_neighbor_tour(const Scenario& scenario);
// 2-opt improvement until no swap shortens the tour; returns the same
// device-index permutation format.
std::vector<int> two_opt(const Scenario& scenario, std::vector<int> tour);
double tour_length(const Scenario& scenario, const std::vector<int>& tour);

}  // namespace uavafl
