#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "uavafl/bound.hpp"
#include "uavafl/errors.hpp"
#include "uavafl/rng.hpp"

using namespace uavafl;

namespace {

Scenario two_device_scenario() {
    Scenario s;
    s.area_side = 1000.0;
    s.altitude = 100.0;
    s.dispatch_point = {0.0, 0.0, 100.0};
    s.num_slots = 6;
    s.devices = {{0, {200.0, 300.0, 0.0}, 0, -1}, {1, {700.0, 600.0, 0.0}, 0, -1}};
    return s;
}

// Straight-line transcription of the g formula, kept deliberately separate
// from the library implementation.
double g_transcription(const Scenario& sc, const std::vector<Vec3>& q,
                       const std::vector<std::vector<double>>& a,
                       const std::vector<std::vector<double>>& b, int k, int S) {
    const int M = sc.device_count();
    double sum_a_k = 0.0;
    for (int m = 0; m < M; ++m) sum_a_k += a[m][k - 1];
    double g = 18.0 * S * S;
    g += 24.0 * std::pow((M - sum_a_k) / M, 2.0);
    double acc = 0.0;
    for (int j = k - S; j <= k; ++j) {
        if (j < 1) continue;
        double sa = 0.0, num = 0.0, den = sc.noise_power / 2.0;
        for (int m = 0; m < M; ++m) {
            const double d = (q[j - 1] - sc.devices[m].position).norm();
            sa += a[m][j - 1];
            num += a[m][j - 1] * std::sqrt(sc.g0) * (1.0 / d) * b[m][j - 1];
            den += a[m][j - 1] * sc.g0 * (1.0 / (d * d)) * b[m][j - 1] * b[m][j - 1];
        }
        acc += sa - num * num / den;
    }
    return g + 18.0 * S * acc;
}

BoundParams desk_params() {
    BoundParams p;
    p.mu = 0.2;
    p.lipschitz = 10.0;
    p.delta = 20.0;
    p.alpha1 = 100.0;
    p.alpha2 = 0.1;
    p.staleness_bound = 1;
    return p;
}

// Direct recursion oracle for the finite-horizon bound.
double recursion_oracle(const std::vector<SlotCost>& costs, double gap0) {
    double gap = gap0;
    for (const SlotCost& c : costs) gap = c.contraction * gap + c.additive;
    return gap;
}

}  // namespace

TEST_CASE("g at S=0: full participation gives zero, none gives 24") {
    Scenario sc = two_device_scenario();
    std::vector<Vec3> q(sc.num_slots, Vec3{500.0, 500.0, 100.0});
    std::vector<std::vector<double>> ones(2, std::vector<double>(sc.num_slots, 1.0));
    std::vector<std::vector<double>> zeros(2, std::vector<double>(sc.num_slots, 0.0));
    std::vector<std::vector<double>> b(2, std::vector<double>(sc.num_slots, 0.2));
    CHECK(g_value(sc, q, ones, b, 3, 0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(g_value(sc, q, zeros, b, 3, 0) == doctest::Approx(24.0));
}

TEST_CASE("g matches an independent transcription on random instances") {
    Scenario sc = two_device_scenario();
    Rng rng(6);
    for (int trial = 0; trial < 25; ++trial) {
        std::vector<Vec3> q(sc.num_slots);
        for (auto& p : q) p = {rng.uniform(0.0, 1000.0), rng.uniform(0.0, 1000.0), 100.0};
        std::vector<std::vector<double>> a(2, std::vector<double>(sc.num_slots));
        std::vector<std::vector<double>> b(2, std::vector<double>(sc.num_slots));
        for (int m = 0; m < 2; ++m) {
            for (int k = 0; k < sc.num_slots; ++k) {
                a[m][k] = rng.uniform(0.0, 1.0);
                b[m][k] = rng.uniform(0.01, 0.22);
            }
        }
        for (int k = 1; k <= sc.num_slots; ++k) {
            CHECK(g_value(sc, q, a, b, k, 1) ==
                  doctest::Approx(g_transcription(sc, q, a, b, k, 1)).epsilon(1e-12));
        }
    }
}

TEST_CASE("g is invariant under device permutation and non-negative") {
    Scenario sc = two_device_scenario();
    Rng rng(8);
    std::vector<Vec3> q(sc.num_slots);
    for (auto& p : q) p = {rng.uniform(0.0, 1000.0), rng.uniform(0.0, 1000.0), 100.0};
    std::vector<std::vector<double>> a(2, std::vector<double>(sc.num_slots));
    std::vector<std::vector<double>> b(2, std::vector<double>(sc.num_slots));
    for (int m = 0; m < 2; ++m) {
        for (int k = 0; k < sc.num_slots; ++k) {
            a[m][k] = rng.uniform(0.0, 1.0);
            b[m][k] = rng.uniform(0.01, 0.22);
        }
    }
    Scenario swapped = sc;
    std::swap(swapped.devices[0], swapped.devices[1]);
    std::vector<std::vector<double>> a2 = {a[1], a[0]};
    std::vector<std::vector<double>> b2 = {b[1], b[0]};
    for (int k = 1; k <= sc.num_slots; ++k) {
        const double g1 = g_value(sc, q, a, b, k, 2);
        const double g2 = g_value(swapped, q, a2, b2, k, 2);
        CHECK(g1 == doctest::Approx(g2).epsilon(1e-12));
        CHECK(g1 >= 0.0);
        double sum_a = 0.0;
        for (int m = 0; m < 2; ++m) sum_a += a[m][k - 1];
        CHECK(g1 >= 24.0 * std::pow((2.0 - sum_a) / 2.0, 2.0) - 1e-12);
    }
}

TEST_CASE("shrinking every distance in a slot lowers the bracket") {
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        const int m = 4;
        std::vector<double> dist(m), a(m), b(m);
        for (int i = 0; i < m; ++i) {
            dist[i] = rng.uniform(100.0, 1000.0);
            a[i] = rng.uniform(0.0, 1.0);
            b[i] = rng.uniform(0.01, 0.22);
        }
        const double base = g_bracket(dist, a, b, 1e-6, 1e-11);
        std::vector<double> closer = dist;
        for (double& d : closer) d *= 0.9;
        CHECK(g_bracket(closer, a, b, 1e-6, 1e-11) <= base + 1e-12);
    }
}

TEST_CASE("e_d bound vanishes at full selection") {
    CHECK(e_d_bound(123.0, 8, 8) == 0.0);
    CHECK(e_d_bound(1.0, 8, 4) == doctest::Approx(8.0 * 0.25));
}

TEST_CASE("e_a bound term elimination") {
    // Zero comm window and delta = 0 leaves 6 S^2 (alpha1 + alpha2 ||gF||^2).
    BoundParams p = desk_params();
    p.delta = 0.0;
    p.staleness_bound = 3;
    const double theta = theta_value(p, 2.5);
    CHECK(e_a_bound(theta, 3, 0.0, 0.0) ==
          doctest::Approx(6.0 * 9.0 * (100.0 + 0.1 * 2.5)));
}

TEST_CASE("pure contraction: bound reduces to the geometric decay") {
    BoundParams p = desk_params();
    p.delta = 0.0;
    std::vector<SlotCost> costs(50, slot_cost(0.0, p));
    const double bound = finite_horizon_bound(costs, 3.0);
    CHECK(bound == doctest::Approx(std::pow(1.0 - 0.02, 50) * 3.0).epsilon(1e-12));
}

TEST_CASE("zero g with positive delta yields the geometric series form") {
    BoundParams p = desk_params();
    std::vector<SlotCost> costs(20, slot_cost(0.0, p));
    const double rho = 1.0 - p.mu / p.lipschitz;
    const double add = 3.0 * p.delta * p.delta / p.lipschitz;
    double expected = std::pow(rho, 20) * 5.0;
    for (int k = 1; k <= 20; ++k) expected += add * std::pow(rho, 20 - k);
    CHECK(finite_horizon_bound(costs, 5.0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("log-space evaluation matches the direct recursion") {
    Rng rng(10);
    BoundParams p = desk_params();
    SUBCASE("short random horizon") {
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<SlotCost> costs;
            for (int k = 0; k < 5; ++k) costs.push_back(slot_cost(rng.uniform(0.0, 8.0), p));
            const double gap0 = rng.uniform(0.1, 10.0);
            CHECK(finite_horizon_bound(costs, gap0) ==
                  doctest::Approx(recursion_oracle(costs, gap0)).epsilon(1e-9));
        }
    }
    SUBCASE("long strongly-contracting horizon would underflow naive products") {
        BoundParams strong = p;
        strong.mu = 2.0;
        strong.delta = 1e-3;
        strong.alpha2 = 0.0;
        std::vector<SlotCost> costs(10000, slot_cost(0.0, strong));
        CHECK(costs[0].contraction == doctest::Approx(0.8));
        const double bound = finite_horizon_bound(costs, 1.0);
        CHECK(bound == doctest::Approx(recursion_oracle(costs, 1.0)).epsilon(1e-9));
    }
}

TEST_CASE("asymptotic objective: closed form and bit-identical tail") {
    BoundParams p = desk_params();
    p.alpha2 = 0.0;  // keep the contraction below one
    std::vector<SlotCost> costs(30, slot_cost(2.0, p));
    const double rho = costs[0].contraction;
    const double add = costs[0].additive;
    const double closed = add * (1.0 - std::pow(rho, 30)) / (1.0 - rho);
    CHECK(asymptotic_objective(costs) == doctest::Approx(closed).epsilon(1e-10));

    const BoundBreakdown bd = finite_horizon_breakdown(costs, 7.0);
    CHECK(asymptotic_objective(costs) == bd.tail_term);  // bit-identical
    CHECK(bd.total == bd.initial_term + bd.tail_term);
}

TEST_CASE("objective is monotone in every slot's g") {
    Rng rng(12);
    BoundParams p = desk_params();
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> g(12);
        for (double& v : g) v = rng.uniform(0.0, 10.0);
        std::vector<SlotCost> costs;
        for (double v : g) costs.push_back(slot_cost(v, p));
        const double base = asymptotic_objective(costs);
        const int j = rng.uniform_int(0, 11);
        std::vector<SlotCost> bumped = costs;
        bumped[j] = slot_cost(g[j] + rng.uniform(0.1, 2.0), p);
        CHECK(asymptotic_objective(bumped) >= base * (1.0 - 1e-12));
    }
}

TEST_CASE("contraction flag and parameter validation") {
    BoundParams p = desk_params();
    const SlotCost ok = slot_cost(0.0, p);
    CHECK(ok.convergent);
    const SlotCost bad = slot_cost(1000.0, p);  // g alpha2 >> 1
    CHECK(!bad.convergent);
    BoundParams broken = p;
    broken.mu = 20.0;  // mu > L
    CHECK_THROWS_AS(slot_cost(1.0, broken), ConfigError);
}
