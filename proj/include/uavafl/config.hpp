#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uavafl/afl.hpp"
#include "uavafl/scenario.hpp"

namespace uavafl {

// Plain-text key=value experiment configuration. dB / dBm values are
// accepted only here and converted to linear units on load.
struct ExperimentConfig {
    // scenario keys
    double area_side_m = 1000.0;
    int devices = 20;  // M
    LayoutSpec layout;
    double altitude_m = 100.0;       // H_m
    double v_max_mps = 50.0;
    double a_max_mps2 = 15.0;
    double qf_x = 0.0, qf_y = 0.0;   // qF_xy
    double g0_db = -60.0;
    double noise_dbm = -80.0;
    double p0_w = 0.1;
    double delta_t_s = 1.0;
    int total_slots = 10000;         // K
    std::uint64_t seed = 1;
    std::vector<int> compute_slots;  // scalar broadcast or per-device list

    // learning / bounds
    BoundParams params;              // S = 50 etc., paper defaults
    std::string task = "quadratic";  // quadratic | logistic
    int dimension = 16;
    double heterogeneity = 1.0;      // quadratic target spread
    int samples_per_device = 40;     // logistic
    int test_samples = 256;
    double class_margin = 1.5;
    double ridge = 0.01;

    // optimization / experiment
    int cycle_slots = 250;
    int trials = 1;
    std::vector<std::string> strategies = {"uav_afl", "error_free", "cf",
                                           "sfhf",    "hga",        "fafl"};
    double eps1 = 1e-2;
    double eps2 = 1.0;
    double eta0 = 10.0;
    double eta_scale = 0.5;
    int max_inner = 10;
    int max_outer = 20;
    double hga_threshold_m = 250.0;
    std::string out_dir = "out";

    Scenario scenario_params() const;  // without devices
    Scenario make_scenario() const;    // generated and validated
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

double db_to_linear(double db);
double dbm_to_watts(double dbm);

}  // namespace uavafl
