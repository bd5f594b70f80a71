// Compares the serial reference kernels against their OpenMP variants and
// checks that the results agree bit for bit.
#include <cstdio>
#include <string>

#include "uavafl/afl.hpp"
#include "uavafl/aircomp.hpp"
#include "uavafl/bound.hpp"
#include "uavafl/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
static double now() { return omp_get_wtime(); }
#else
#include <chrono>
static double now() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}
#endif

namespace {

using namespace uavafl;

struct Timing {
    double serial = 0.0;
    double parallel = 0.0;
    bool identical = false;
};

void row(const std::string& name, const Timing& t) {
    std::printf("%-28s %10.3f s %10.3f s %8.2fx  %s\n", name.c_str(), t.serial, t.parallel,
                t.serial / t.parallel, t.identical ? "bit-identical" : "MISMATCH");
}

Timing bench_mc() {
    McSlotConfig cfg;
    cfg.dimension = 32;
    cfg.noise_power = 1e-11;
    cfg.devices = {{5e-6, 0.2, 1.0}, {2e-6, 0.15, 2.0}, {8e-6, 0.22, 0.5}, {4e-6, 0.1, 1.5}};
    cfg.zeta = optimal_zeta(cfg.devices, cfg.noise_power, 4);
    const int trials = 100000;
    Timing t;
    double t0 = now();
    const double serial = mc_comm_mse_serial(cfg, trials, 99);
    t.serial = now() - t0;
    t0 = now();
    const double parallel = mc_comm_mse(cfg, trials, 99);
    t.parallel = now() - t0;
    t.identical = serial == parallel;
    return t;
}

Timing bench_trials() {
    Scenario s;
    s.num_slots = 400;
    s.dispatch_point = {0.0, 0.0, 100.0};
    Rng rng(7);
    for (int m = 0; m < 6; ++m) {
        s.devices.push_back(
            {m, {rng.uniform(100.0, 900.0), rng.uniform(100.0, 900.0), 0.0}, 0, -1});
    }
    const QuadraticTask task = QuadraticTask::synthesize(6, 16, 0.2, 10.0, 1.0, 5);
    Schedule sched;
    sched.trajectory.positions.assign(s.num_slots + 1, s.dispatch_point);
    sched.selection.assign(6, std::vector<std::uint8_t>(s.num_slots, 0));
    sched.amplitudes.assign(6, std::vector<double>(s.num_slots, s.amplitude_cap()));
    sched.zeta.assign(s.num_slots, 0.0);
    for (int k = 0; k < s.num_slots; ++k) sched.selection[k % 6][k] = 1;
    RunOptions o;
    o.params.staleness_bound = 6;

    const int trials = 24;
    Timing t;
    double t0 = now();
    const auto serial = run_trials_serial(s, sched, task, o, trials, 321);
    t.serial = now() - t0;
    t0 = now();
    const auto parallel = run_trials(s, sched, task, o, trials, 321);
    t.parallel = now() - t0;
    t.identical = true;
    for (int i = 0; i < trials; ++i) {
        t.identical = t.identical && serial[i].final_model == parallel[i].final_model;
    }
    return t;
}

Timing bench_g_series() {
    Scenario s;
    s.num_slots = 10000;
    s.dispatch_point = {0.0, 0.0, 100.0};
    Rng rng(3);
    for (int m = 0; m < 20; ++m) {
        s.devices.push_back(
            {m, {rng.uniform(0.0, 1000.0), rng.uniform(0.0, 1000.0), 0.0}, 0, -1});
    }
    std::vector<Vec3> q(s.num_slots);
    for (auto& p : q) p = {rng.uniform(0.0, 1000.0), rng.uniform(0.0, 1000.0), 100.0};
    std::vector<std::vector<double>> a(20, std::vector<double>(s.num_slots));
    std::vector<std::vector<double>> b(20, std::vector<double>(s.num_slots));
    for (int m = 0; m < 20; ++m) {
        for (int k = 0; k < s.num_slots; ++k) {
            a[m][k] = rng.uniform(0.0, 1.0);
            b[m][k] = rng.uniform(0.01, 0.22);
        }
    }
    Timing t;
    double t0 = now();
    const auto serial = g_series_serial(s, q, a, b, 50);
    t.serial = now() - t0;
    t0 = now();
    const auto parallel = g_series(s, q, a, b, 50);
    t.parallel = now() - t0;
    t.identical = serial == parallel;
    return t;
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
    std::printf("built without OpenMP; both columns run serially\n");
#endif
    std::printf("%-28s %12s %12s %9s\n", "kernel", "serial", "parallel", "speedup");
    row("mc_comm_mse (1e5 trials)", bench_mc());
    row("run_trials (24 seeds)", bench_trials());
    row("g_series (K=1e4, M=20)", bench_g_series());
    return 0;
}
