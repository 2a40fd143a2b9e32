// Tests for the quadratic control model: hand-checked free-energy values,
// the precision-equals-Hessian contract against finite differences, and the
// entropy/confidence behaviour of the control channel.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "support/oracles.hpp"
#include "toolforge/controller.hpp"
#include "toolforge/rng.hpp"

using namespace toolforge;
using Catch::Approx;
using ctrl::ControllerParams;
using ctrl::ControlSignal;
using world::Segment;
using world::ToolSpec;
using world::Vec2;

namespace {

ToolSpec tool_of(std::initializer_list<Segment> segments) {
    ToolSpec t;
    t.id = "t";
    t.segments = segments;
    return t;
}

ControllerParams random_params(rng::Stream& r) {
    ControllerParams p;
    p.sigma_0 = r.uniform(0.3, 2.0);
    p.actuation_noise = r.uniform(0.0, 1.0);
    // Random SPD prior: A^T A plus a diagonal bump.
    ctrl::Mat3 a{};
    for (auto& row : a) {
        for (double& v : row) v = r.uniform(-1.0, 1.0);
    }
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            double sum = 0.0;
            for (std::size_t k = 0; k < 3; ++k) sum += a[k][i] * a[k][j];
            p.prior_precision[i][j] = sum + (i == j ? 0.1 : 0.0);
        }
    }
    return p;
}

ToolSpec random_tool(rng::Stream& r) {
    const world::ToolBounds bounds;
    ToolSpec t;
    t.id = "rand";
    const std::size_t n = 1 + static_cast<std::size_t>(r.below(bounds.max_segments));
    double budget = bounds.length_budget;
    for (std::size_t i = 0; i < n; ++i) {
        const double len = r.uniform(0.0, std::min(bounds.max_segment_length, budget));
        budget -= len;
        t.segments.push_back({len, r.uniform(-bounds.max_bend, bounds.max_bend)});
    }
    return t;
}

} // namespace

TEST_CASE("free energy on hand-checkable inputs", "[controller]") {
    ControllerParams params; // sigma_0 = 1, identity prior
    const ToolSpec bare = tool_of({Segment{0.0, 0.0}});

    SECTION("zero control with zero error costs nothing") {
        REQUIRE(ctrl::free_energy(ControlSignal{}, Vec2{}, bare, params) == 0.0);
    }
    SECTION("unit translation with zero lever arm") {
        const double f = ctrl::free_energy(ControlSignal{1.0, 0.0, 0.0}, Vec2{}, bare, params);
        REQUIRE(f == Approx(1.0).epsilon(1e-12));
    }
    SECTION("non-negative everywhere") {
        rng::Stream r(301);
        for (int rep = 0; rep < 300; ++rep) {
            const ToolSpec t = random_tool(r);
            const ControllerParams p = random_params(r);
            const ControlSignal u{r.uniform(-2, 2), r.uniform(-2, 2), r.uniform(-2, 2)};
            const Vec2 e{r.uniform(-2, 2), r.uniform(-2, 2)};
            REQUIRE(ctrl::free_energy(u, e, t, p) >= 0.0);
        }
    }
}

TEST_CASE("control precision is the exact free-energy Hessian", "[controller][oracle]") {
    SECTION("bare hand under defaults gives diag(2,2,1)") {
        ControllerParams params;
        const auto precision = ctrl::control_precision(tool_of({Segment{0.0, 0.0}}), params);
        REQUIRE(precision.pi[0][0] == Approx(2.0).margin(1e-12));
        REQUIRE(precision.pi[1][1] == Approx(2.0).margin(1e-12));
        REQUIRE(precision.pi[2][2] == Approx(1.0).margin(1e-12));
        REQUIRE(precision.pi[0][1] == Approx(0.0).margin(1e-12));
        REQUIRE(precision.pi[0][2] == Approx(0.0).margin(1e-12));
    }
    SECTION("matches central finite differences on 100 random instances") {
        rng::Stream r(302);
        for (int rep = 0; rep < 100; ++rep) {
            const ToolSpec t = random_tool(r);
            const ControllerParams p = random_params(r);
            const Vec2 e{r.uniform(-1, 1), r.uniform(-1, 1)};
            const auto exact = ctrl::control_precision(t, p);
            const auto fd = oracle::fd_hessian(
                [&](const std::vector<double>& v) {
                    return ctrl::free_energy(ControlSignal{v[0], v[1], v[2]}, e, t, p);
                },
                {r.uniform(-1, 1), r.uniform(-1, 1), r.uniform(-1, 1)}, 1e-4);
            for (std::size_t i = 0; i < 3; ++i) {
                for (std::size_t j = 0; j < 3; ++j) {
                    const double tol = 1e-6 * std::max(1.0, std::abs(exact.pi[i][j]));
                    REQUIRE(std::abs(fd[i][j] - exact.pi[i][j]) <= tol);
                }
            }
            REQUIRE(ctrl::is_symmetric(exact.pi));
            REQUIRE(ctrl::is_positive_definite(exact.pi));
        }
    }
    SECTION("rejects a non-SPD prior") {
        ControllerParams bad;
        bad.prior_precision[2][2] = -1.0;
        REQUIRE_THROWS_AS(ctrl::control_precision(tool_of({Segment{0.1, 0.0}}), bad),
                          ValidationError);
    }
}

TEST_CASE("control confidence follows the Gaussian entropy", "[controller]") {
    const double h_ref = ctrl::default_control_entropy_reference();

    SECTION("bare hand sits exactly at the squash midpoint") {
        ControllerParams params;
        const auto precision = ctrl::control_precision(tool_of({Segment{0.0, 0.0}}), params);
        const auto score = ctrl::control_confidence(precision, h_ref, 1.0);
        REQUIRE(score.value == Approx(0.5).margin(1e-12));
        REQUIRE(score.channel == conf::Channel::control);
    }
    SECTION("scaling the precision by e^2 drops entropy by exactly 3 nats") {
        ctrl::ControlPrecision eye;
        ctrl::ControlPrecision scaled;
        const double k = std::numbers::e * std::numbers::e;
        for (std::size_t i = 0; i < 3; ++i) scaled.pi[i][i] = k;
        REQUIRE(ctrl::gaussian_entropy(eye) - ctrl::gaussian_entropy(scaled)
                == Approx(3.0).epsilon(1e-12));
    }
    SECTION("raising any diagonal prior precision never lowers confidence") {
        rng::Stream r(303);
        for (int rep = 0; rep < 100; ++rep) {
            const ToolSpec t = random_tool(r);
            ControllerParams p = random_params(r);
            const auto base = ctrl::control_confidence(ctrl::control_precision(t, p), h_ref, 1.0);
            const std::size_t axis = static_cast<std::size_t>(r.below(3));
            p.prior_precision[axis][axis] += r.uniform(0.0, 5.0);
            const auto bumped = ctrl::control_confidence(ctrl::control_precision(t, p), h_ref, 1.0);
            REQUIRE(bumped.value >= base.value - 1e-12);
        }
    }
    SECTION("tools with the same lever length score identically under an isotropic prior") {
        ControllerParams params;
        params.actuation_noise = 0.3;
        const ToolSpec east = tool_of({Segment{0.6, 0.0}});
        const ToolSpec north = tool_of({Segment{0.6, std::numbers::pi / 2}});
        const auto a = ctrl::control_confidence(ctrl::control_precision(east, params), h_ref, 1.0);
        const auto b = ctrl::control_confidence(ctrl::control_precision(north, params), h_ref, 1.0);
        REQUIRE(a.value == Approx(b.value).margin(1e-12));
    }
    SECTION("lever length sweep: helpful without execution noise, harmful with it") {
        ControllerParams quiet;  // actuation_noise = 0
        ControllerParams noisy;
        noisy.actuation_noise = 2.0;
        double prev_quiet = -1e300;
        double last_noisy = 1e300;
        bool noisy_decreasing_tail = true;
        for (int i = 0; i <= 16; ++i) {
            const double len = 0.1 * static_cast<double>(i);
            ToolSpec t;
            t.id = "sweep";
            // Split the length across two segments to stay within bounds.
            t.segments = {Segment{std::min(len, 0.8), 0.0},
                          Segment{std::max(0.0, len - 0.8), 0.0}};
            const double hq = ctrl::gaussian_entropy(ctrl::control_precision(t, quiet));
            REQUIRE(-hq >= prev_quiet - 1e-12); // half-log-det non-decreasing
            prev_quiet = -hq;
            const double hn = ctrl::gaussian_entropy(ctrl::control_precision(t, noisy));
            if (i >= 8) {
                noisy_decreasing_tail = noisy_decreasing_tail && (-hn <= last_noisy + 1e-12);
                last_noisy = -hn;
            } else {
                last_noisy = -hn;
            }
        }
        REQUIRE(noisy_decreasing_tail);
    }
    SECTION("degenerate precision is rejected") {
        ctrl::ControlPrecision zero;
        zero.pi = ctrl::Mat3{{{0, 0, 0}, {0, 0, 0}, {0, 0, 0}}};
        REQUIRE_THROWS_AS(ctrl::gaussian_entropy(zero), ValidationError);
        REQUIRE_THROWS_AS(zero.validate(), ValidationError);
    }
}
