#include <catch2/catch.hpp>

#include <cmath>

#include "aflsim/convergence.hpp"
#include "aflsim/profile.hpp"
#include "aflsim/rng.hpp"

using namespace aflsim;

namespace {

// straight-line reference for the convergence factor, kept deliberately
// separate from the library implementation
double phi_reference(double k, double delta, double alpha, double beta, double t) {
    return (std::pow(k * alpha + delta * beta, 2.0) * (2.0 - delta) + t * t) /
           (t * t * k * std::sqrt(delta));
}

struct DenseArgmin {
    int k;
    double delta;
    double value;
};

DenseArgmin dense_oracle(double alpha, double beta, const OptimizerBounds& b, int delta_factor) {
    DenseArgmin best{0, 0.0, 0.0};
    const int points = b.delta_grid_points * delta_factor;
    bool found = false;
    for (int k = b.k_min; k <= b.k_max; ++k) {
        for (int j = 0; j < points; ++j) {
            const double f = points == 1 ? 0.0 : static_cast<double>(j) / (points - 1);
            const double d = b.delta_min * std::pow(b.delta_max / b.delta_min, f);
            const double v = phi_reference(k, d, alpha, beta, b.round_duration);
            if (!found || v < best.value) {
                best = {k, d, v};
                found = true;
            }
        }
    }
    return best;
}

}  // namespace

TEST_CASE("phi evaluates the closed form") {
    REQUIRE(phi(1, 1.0, 0.0, 0.0, 1.0) == Approx(1.0).epsilon(1e-15));
    REQUIRE(phi(1, 1.0, 1.0, 0.0, 1.0) == Approx(2.0).epsilon(1e-15));
    REQUIRE(phi(2, 0.25, 1.0, 4.0, 3.0) == Approx(2.75).epsilon(1e-15));
}

TEST_CASE("phi rejects out-of-domain inputs") {
    REQUIRE_THROWS_AS(phi(0, 0.5, 1.0, 1.0, 1.0), ArgumentError);
    REQUIRE_THROWS_AS(phi(1, 0.0, 1.0, 1.0, 1.0), ArgumentError);
    REQUIRE_THROWS_AS(phi(1, 1.1, 1.0, 1.0, 1.0), ArgumentError);
    REQUIRE_THROWS_AS(phi(1, 0.5, 1.0, 1.0, 0.0), ArgumentError);
}

TEST_CASE("phi agrees with an independent straight-line evaluation") {
    Rng rng(123);
    for (int trial = 0; trial < 2000; ++trial) {
        const int k = 1 + static_cast<int>(rng.below(200));
        const double delta = 1e-4 + (1.0 - 1e-4) * rng.uniform();
        const double alpha = rng.uniform() * 3.0;
        const double beta = rng.uniform() * 300.0;
        const double t = 0.01 + rng.uniform() * 20.0;
        const double lib = phi(k, delta, alpha, beta, t);
        const double ref = phi_reference(k, delta, alpha, beta, t);
        REQUIRE(lib == Approx(ref).epsilon(1e-12));
        REQUIRE(lib > 0.0);
        REQUIRE(std::isfinite(lib));
    }
}

TEST_CASE("collapsed bounds return the single point") {
    OptimizerBounds b;
    b.k_min = b.k_max = 5;
    b.delta_min = b.delta_max = 0.1;
    b.round_duration = 2.0;
    const ChosenParams c = optimize_params(1.0, 10.0, b);
    REQUIRE(c.k == 5);
    REQUIRE(c.delta == 0.1);
}

TEST_CASE("with alpha 0 the numerator no longer depends on k, so k_max wins") {
    OptimizerBounds b;
    b.k_min = 3;
    b.k_max = 40;
    b.delta_min = 0.01;
    b.delta_max = 0.7;
    b.round_duration = 2.5;
    const ChosenParams c = optimize_params(0.0, 50.0, b);
    REQUIRE(c.k == 40);
}

TEST_CASE("grid argmin beats every point of its own grid and tracks the dense oracle") {
    Rng rng(31);
    for (int trial = 0; trial < 30; ++trial) {
        OptimizerBounds b;
        b.k_min = 1 + static_cast<int>(rng.below(10));
        b.k_max = b.k_min + 10 + static_cast<int>(rng.below(60));
        b.delta_min = 5e-4 + rng.uniform() * 0.01;
        b.delta_max = b.delta_min * (2.0 + rng.uniform() * 400.0);
        if (b.delta_max > 1.0) b.delta_max = 1.0;
        b.round_duration = 0.05 + rng.uniform() * 10.0;
        const double alpha = rng.uniform() * 0.5;
        const double beta = rng.uniform() * 100.0;

        const ChosenParams c = optimize_params(alpha, beta, b);
        for (int k = b.k_min; k <= b.k_max; k += b.k_grid_step) {
            for (double d : delta_grid(b)) {
                REQUIRE(c.phi_value <= phi(k, d, alpha, beta, b.round_duration) * (1.0 + 1e-12));
            }
        }

        const DenseArgmin oracle = dense_oracle(alpha, beta, b, 10);
        REQUIRE(c.phi_value <= oracle.value * 1.05);  // within 5% of the dense minimum
        // within one coarse cell: k exact (unit step), delta within one
        // coarse log-step of the fine argmin
        REQUIRE(std::abs(c.k - oracle.k) <= b.k_grid_step);
        const double log_step =
            (std::log(b.delta_max) - std::log(b.delta_min)) / (b.delta_grid_points - 1);
        REQUIRE(std::fabs(std::log(c.delta) - std::log(oracle.delta)) <= log_step * 1.0001);
    }
}

TEST_CASE("scaling alpha, beta and the round duration together keeps the argmin") {
    OptimizerBounds b;
    b.k_min = 10;
    b.k_max = 60;
    b.delta_min = 0.001;
    b.delta_max = 0.5;
    b.round_duration = 3.0;
    const ChosenParams base = optimize_params(0.5, 20.0, b);
    for (double scale : {0.01, 0.5, 7.0, 1000.0}) {
        OptimizerBounds scaled = b;
        scaled.round_duration = b.round_duration * scale;
        const ChosenParams c = optimize_params(0.5 * scale, 20.0 * scale, scaled);
        REQUIRE(c.k == base.k);
        REQUIRE(c.delta == base.delta);
    }
}

TEST_CASE("costlier communication weakly pushes the chosen rate down") {
    Rng rng(77);
    int held = 0;
    const int trials = 100;
    for (int trial = 0; trial < trials; ++trial) {
        OptimizerBounds b;
        b.k_min = 5;
        b.k_max = 60;
        b.delta_min = 0.001;
        b.delta_max = 0.9;
        b.round_duration = 0.2 + rng.uniform() * 5.0;
        const double alpha = 0.001 + rng.uniform() * 0.2;
        const double beta = 0.1 + rng.uniform() * 30.0;
        const double d1 = optimize_params(alpha, beta, b).delta;
        const double d2 = optimize_params(alpha, beta * (1.5 + rng.uniform() * 4.0), b).delta;
        if (d2 <= d1 * (1.0 + 1e-12)) ++held;
    }
    REQUIRE(held >= trials * 9 / 10);
}

TEST_CASE("device cycle time follows k*alpha + delta*beta") {
    REQUIRE(device_round_duration({0.5, 20.0, 10, 0.1}) == Approx(7.0).epsilon(1e-15));
    REQUIRE(device_round_duration({1.0, 1e-9, 1, 1.0}) == Approx(1.0).margin(1e-8));
    REQUIRE(device_round_duration({0.2, 400.0, 60, 0.005}) == Approx(14.0).epsilon(1e-15));
    REQUIRE_THROWS_AS(device_round_duration({-1.0, 1.0, 1, 1.0}), ConfigError);
    REQUIRE_THROWS_AS(device_round_duration({1.0, 1.0, 0, 1.0}), ConfigError);
}

TEST_CASE("noise-free profiling recovers the ground truth exactly") {
    const ProfileEstimate e = estimate_profile(0.37, 55.0, 5, {0.1, 0.5});
    REQUIRE(e.alpha == Approx(0.37).epsilon(1e-15));
    REQUIRE(e.beta == Approx(55.0).epsilon(1e-12));
}

TEST_CASE("beta is the through-origin slope of the probe points") {
    // hand-made probe pair: (0.1, 2s) and (0.5, 10s) lie on t = 20 * delta
    const double beta = (2.0 * 0.1 + 10.0 * 0.5) / (0.1 * 0.1 + 0.5 * 0.5);
    REQUIRE(beta == Approx(20.0).epsilon(1e-15));
    const ProfileEstimate e = estimate_profile(1.0, 20.0, 1, {0.1, 0.5});
    REQUIRE(e.beta == Approx(20.0).epsilon(1e-12));
}

TEST_CASE("profiling under 5% noise lands within 10% most of the time") {
    std::vector<double> probes;
    for (int i = 0; i < 10; ++i) probes.push_back(0.1 + 0.09 * i);
    int good = 0;
    const int seeds = 200;
    for (int s = 0; s < seeds; ++s) {
        const ProfileEstimate e =
            estimate_profile(0.8, 40.0, 10, probes, 0.05, static_cast<std::uint64_t>(s));
        if (std::fabs(e.beta - 40.0) <= 4.0 && std::fabs(e.alpha - 0.8) <= 0.08) ++good;
    }
    REQUIRE(good >= seeds * 95 / 100);
}

TEST_CASE("degenerate probes are an estimation error") {
    REQUIRE_THROWS_AS(estimate_profile(1.0, 1.0, 3, {0.2, 0.2, 0.2}), EstimationError);
    REQUIRE_THROWS_AS(estimate_profile(1.0, 1.0, 0, {0.1, 0.5}), ArgumentError);
}

TEST_CASE("heterogeneity draw respects the documented formulas") {
    HeterogeneitySpec spec;
    spec.alpha_base = 0.01;
    spec.alpha_range_multiplier = 4.0;

    // pin the bandwidth to its endpoints to check beta exactly:
    // 1e6 f32 parameters = 4 MB; at 2 Mb/s that is 32e6 / 2e6 = 16 s
    spec.bandwidth_min_mbps = spec.bandwidth_max_mbps = 2.0;
    auto profiles = sample_heterogeneity(spec, 3, 4000000, 1);
    for (const auto& p : profiles) REQUIRE(p.beta == Approx(16.0).epsilon(1e-12));

    spec.bandwidth_min_mbps = spec.bandwidth_max_mbps = 0.25;
    profiles = sample_heterogeneity(spec, 3, 4000000, 1);
    for (const auto& p : profiles) REQUIRE(p.beta == Approx(128.0).epsilon(1e-12));

    spec.bandwidth_min_mbps = 0.25;
    spec.bandwidth_max_mbps = 2.0;
    profiles = sample_heterogeneity(spec, 200, 4000000, 7);
    for (const auto& p : profiles) {
        REQUIRE(p.alpha >= 0.01);
        REQUIRE(p.alpha <= 0.04);
        REQUIRE(p.beta >= 16.0);
        REQUIRE(p.beta <= 128.0);
    }

    REQUIRE(sample_heterogeneity(spec, 5, 1000, 3) == sample_heterogeneity(spec, 5, 1000, 3));
}

TEST_CASE("auto round duration is the median cycle at the grid midpoints") {
    OptimizerBounds b;
    b.k_min = 10;
    b.k_max = 60;
    b.delta_min = 0.01;
    b.delta_max = 0.25;
    b.round_duration = 1.0;
    // k_mid = 35, delta_mid = sqrt(0.01 * 0.25) = 0.05
    std::vector<DeviceProfile> profiles = {
        {0.1, 10.0, 1, 1.0},  // 35*0.1 + 0.05*10 = 4.0
        {0.2, 20.0, 1, 1.0},  // 7 + 1 = 8.0
        {0.3, 40.0, 1, 1.0},  // 10.5 + 2 = 12.5
    };
    REQUIRE(auto_round_duration(profiles, b) == Approx(8.0).epsilon(1e-12));

    profiles.push_back({0.5, 40.0, 1, 1.0});  // 17.5 + 2 = 19.5
    REQUIRE(auto_round_duration(profiles, b) == Approx((8.0 + 12.5) / 2.0).epsilon(1e-12));
}
