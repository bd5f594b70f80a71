#include "doctest.h"
#include "uavafl/afl.hpp"
#include "uavafl/aircomp.hpp"
#include "uavafl/bound.hpp"
#include "uavafl/rng.hpp"

using namespace uavafl;

// The OpenMP kernels must be bit-identical to the serial references: trials
// derive independent streams from their index and reduce in index order.

TEST_CASE("monte-carlo MSE kernel: parallel == serial") {
    McSlotConfig cfg;
    cfg.dimension = 16;
    cfg.noise_power = 1e-11;
    cfg.devices = {{5e-6, 0.2, 1.0}, {2e-6, 0.15, 2.0}, {8e-6, 0.22, 0.5}};
    cfg.zeta = optimal_zeta(cfg.devices, cfg.noise_power, 3);
    const double serial = mc_comm_mse_serial(cfg, 5000, 42);
    const double parallel = mc_comm_mse(cfg, 5000, 42);
    CHECK(serial == parallel);
}

TEST_CASE("multi-seed training kernel: parallel == serial") {
    Scenario s;
    s.num_slots = 30;
    s.dispatch_point = {0.0, 0.0, 100.0};
    Rng rng(7);
    for (int m = 0; m < 3; ++m) {
        s.devices.push_back({m, {rng.uniform(100.0, 900.0), rng.uniform(100.0, 900.0), 0.0}, 0, -1});
    }
    const QuadraticTask task = QuadraticTask::synthesize(3, 8, 0.2, 10.0, 1.0, 9);

    Schedule sched;
    sched.trajectory.positions.assign(s.num_slots + 1, s.dispatch_point);
    sched.selection.assign(3, std::vector<std::uint8_t>(s.num_slots, 0));
    sched.amplitudes.assign(3, std::vector<double>(s.num_slots, s.amplitude_cap()));
    sched.zeta.assign(s.num_slots, 0.0);
    for (int k = 0; k < s.num_slots; ++k) sched.selection[k % 3][k] = 1;

    RunOptions o;
    o.params.staleness_bound = 3;
    o.params.learning_rate = 0.1;

    const auto serial = run_trials_serial(s, sched, task, o, 8, 1234);
    const auto parallel = run_trials(s, sched, task, o, 8, 1234);
    REQUIRE(serial.size() == parallel.size());
    for (std::size_t t = 0; t < serial.size(); ++t) {
        CHECK(serial[t].final_model == parallel[t].final_model);
        CHECK(serial[t].final_loss == parallel[t].final_loss);
        CHECK(serial[t].max_staleness == parallel[t].max_staleness);
    }
}

TEST_CASE("g-series kernel: parallel == serial") {
    Scenario s;
    s.num_slots = 400;
    s.dispatch_point = {0.0, 0.0, 100.0};
    Rng rng(3);
    for (int m = 0; m < 6; ++m) {
        s.devices.push_back({m, {rng.uniform(0.0, 1000.0), rng.uniform(0.0, 1000.0), 0.0}, 0, -1});
    }
    std::vector<Vec3> q(s.num_slots);
    for (auto& p : q) p = {rng.uniform(0.0, 1000.0), rng.uniform(0.0, 1000.0), 100.0};
    std::vector<std::vector<double>> a(6, std::vector<double>(s.num_slots));
    std::vector<std::vector<double>> b(6, std::vector<double>(s.num_slots));
    for (int m = 0; m < 6; ++m) {
        for (int k = 0; k < s.num_slots; ++k) {
            a[m][k] = rng.uniform(0.0, 1.0);
            b[m][k] = rng.uniform(0.01, 0.22);
        }
    }
    const auto serial = g_series_serial(s, q, a, b, 10);
    const auto parallel = g_series(s, q, a, b, 10);
    CHECK(serial == parallel);
}
