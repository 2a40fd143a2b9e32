// Tests for the 2-D environment: kinematics, grid-scored performance, and
// the seeded robustness protocol. A naive pose-by-pose reimplementation of
// the grid search acts as the oracle for the optimized scorer.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <numbers>

#include "toolforge/rng.hpp"
#include "toolforge/toyworld.hpp"

using namespace toolforge;
using Catch::Approx;
using world::Pose;
using world::Segment;
using world::TaskKind;
using world::TaskSpec;
using world::ToolSpec;
using world::Vec2;

namespace {

ToolSpec straight_tool(double length, std::string id = "t") {
    ToolSpec t;
    t.id = std::move(id);
    t.segments = {Segment{length, 0.0}};
    return t;
}

ToolSpec random_tool(rng::Stream& r, const world::ToolBounds& bounds) {
    ToolSpec t;
    t.id = "random";
    const std::size_t n = 1 + static_cast<std::size_t>(r.below(bounds.max_segments));
    double budget = bounds.length_budget;
    for (std::size_t i = 0; i < n; ++i) {
        const double len = r.uniform(0.0, std::min(bounds.max_segment_length, budget));
        budget -= len;
        t.segments.push_back({len, r.uniform(-bounds.max_bend, bounds.max_bend)});
    }
    return t;
}

// Reference scorer: iterates every pose and runs full forward kinematics,
// with no shared geometry precomputation.
world::PerfResult naive_performance(const ToolSpec& tool, const TaskSpec& task,
                                    const Vec2& object, const world::PoseGridSpec& grid) {
    double best_d2 = std::numeric_limits<double>::infinity();
    Pose best{};
    const double step = 2.0 * task.reach_radius / static_cast<double>(grid.positions_per_axis - 1);
    for (std::size_t k = 0; k < grid.orientations; ++k) {
        const double psi =
            2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(grid.orientations);
        for (std::size_t ix = 0; ix < grid.positions_per_axis; ++ix) {
            for (std::size_t iy = 0; iy < grid.positions_per_axis; ++iy) {
                const Pose hand{-task.reach_radius + step * static_cast<double>(ix),
                                -task.reach_radius + step * static_cast<double>(iy), psi};
                if (hand.x * hand.x + hand.y * hand.y > task.reach_radius * task.reach_radius + 1e-9) {
                    continue;
                }
                const Vec2 tip = world::forward_kinematics(tool, hand);
                const double d2 = (tip - object).norm2();
                if (d2 < best_d2) {
                    best_d2 = d2;
                    best = hand;
                }
            }
        }
    }
    world::PerfResult out;
    out.score = std::exp(-best_d2 / (2.0 * task.score_width * task.score_width));
    out.best_distance = std::sqrt(best_d2);
    out.best_pose = best;
    const bool reached = out.best_distance <= task.success_radius;
    const bool hooked = task.kind != TaskKind::pull || tool.total_bend() >= task.hook_threshold;
    out.success = reached && hooked;
    return out;
}

} // namespace

TEST_CASE("forward kinematics on hand-checkable chains", "[toyworld]") {
    ToolSpec rod = straight_tool(1.0);
    const Vec2 tip = world::forward_kinematics(rod, Pose{0, 0, 0});
    REQUIRE(tip.x == Approx(1.0).margin(1e-12));
    REQUIRE(tip.y == Approx(0.0).margin(1e-12));

    ToolSpec elbow;
    elbow.segments = {Segment{1.0, 0.0}, Segment{1.0, std::numbers::pi / 2}};
    const Vec2 corner = world::forward_kinematics(elbow, Pose{0, 0, 0});
    REQUIRE(corner.x == Approx(1.0).margin(1e-12));
    REQUIRE(corner.y == Approx(1.0).margin(1e-12));

    const Vec2 flipped = world::forward_kinematics(rod, Pose{0, 0, std::numbers::pi});
    REQUIRE(flipped.x == Approx(-1.0).margin(1e-12));
    REQUIRE(flipped.y == Approx(0.0).margin(1e-12));
}

TEST_CASE("forward kinematics is rotation-equivariant", "[toyworld][property]") {
    rng::Stream r(201);
    const world::ToolBounds bounds;
    for (int rep = 0; rep < 200; ++rep) {
        ToolSpec tool = random_tool(r, bounds);
        const Pose hand{r.uniform(-1, 1), r.uniform(-1, 1), r.uniform(0, 2 * std::numbers::pi)};
        const double theta = r.uniform(0, 2 * std::numbers::pi);
        const Vec2 base = world::forward_kinematics(tool, hand) - Vec2{hand.x, hand.y};
        const Vec2 rotated =
            world::forward_kinematics(tool, Pose{hand.x, hand.y, hand.psi + theta})
            - Vec2{hand.x, hand.y};
        const double c = std::cos(theta), s = std::sin(theta);
        REQUIRE(rotated.x == Approx(c * base.x - s * base.y).margin(1e-9));
        REQUIRE(rotated.y == Approx(s * base.x + c * base.y).margin(1e-9));
    }
}

TEST_CASE("performance matches hand-derived cases", "[toyworld]") {
    TaskSpec reach;
    reach.kind = TaskKind::reach;
    reach.object = {1.5, 0.0};

    SECTION("half-meter rod lands exactly on the object") {
        const auto res = world::performance(straight_tool(0.5), reach, reach.object);
        REQUIRE(res.score == Approx(1.0).margin(1e-9));
        REQUIRE(res.success);
        REQUIRE(res.best_distance == Approx(0.0).margin(1e-9));
    }
    SECTION("zero-length tool scores the bare-hand gap") {
        const auto res = world::performance(straight_tool(0.0), reach, reach.object);
        REQUIRE(res.score == Approx(std::exp(-12.5)).epsilon(1e-6));
        REQUIRE_FALSE(res.success);
        REQUIRE(res.best_distance == Approx(0.5).margin(1e-9));
    }
    SECTION("pull success requires the hook no matter the score") {
        TaskSpec pull = reach;
        pull.kind = TaskKind::pull;
        pull.object = {1.3, 0.0};
        const auto res = world::performance(straight_tool(0.5), pull, pull.object);
        REQUIRE(res.score == Approx(1.0).margin(1e-9));
        REQUIRE_FALSE(res.success); // total bend 0 < hook threshold

        ToolSpec hooked;
        hooked.segments = {Segment{0.5, 0.0}, Segment{0.2, std::numbers::pi / 3}};
        const auto res2 = world::performance(hooked, pull, pull.object);
        REQUIRE(res2.success);
    }
    SECTION("score ignores id and affordance tags") {
        ToolSpec a = straight_tool(0.5, "a");
        ToolSpec b = straight_tool(0.5, "zzz");
        b.affordances = {"extend", "hook"};
        const auto ra = world::performance(a, reach, reach.object);
        const auto rb = world::performance(b, reach, reach.object);
        REQUIRE(ra.score == rb.score);
        REQUIRE(ra.success == rb.success);
    }
}

TEST_CASE("performance equals the naive pose-grid oracle", "[toyworld][oracle]") {
    rng::Stream r(202);
    const world::ToolBounds bounds;
    const world::PoseGridSpec grid;
    for (int rep = 0; rep < 25; ++rep) {
        ToolSpec tool = random_tool(r, bounds);
        TaskSpec task;
        task.kind = rep % 2 == 0 ? TaskKind::reach : TaskKind::pull;
        task.object = {r.uniform(-2.0, 2.0), r.uniform(-2.0, 2.0)};
        const auto fast = world::performance(tool, task, task.object, grid);
        const auto slow = naive_performance(tool, task, task.object, grid);
        REQUIRE(fast.score == Approx(slow.score).margin(1e-12));
        REQUIRE(fast.best_distance == Approx(slow.best_distance).margin(1e-12));
        REQUIRE(fast.success == slow.success);
    }
}

TEST_CASE("robust evaluation protocol", "[toyworld]") {
    TaskSpec reach;
    reach.object = {1.4, 0.0};
    const ToolSpec rod = straight_tool(0.5);

    SECTION("no noise on a deterministic success gives rate one") {
        world::EnvSpec env;
        env.trials = 10;
        const auto res = world::evaluate_robust(rod, reach, env);
        REQUIRE(res.success_rate == 1.0);
        REQUIRE(res.mean_perf == Approx(1.0).margin(1e-9));
    }
    SECTION("identical seeds give bit-identical trial sequences") {
        world::EnvSpec env;
        env.object_noise = 0.25;
        env.actuation_noise = 0.1;
        env.trials = 50;
        env.seed = 99;
        const auto a = world::evaluate_robust(rod, reach, env);
        const auto b = world::evaluate_robust(rod, reach, env);
        REQUIRE(a.success_rate == b.success_rate);
        REQUIRE(a.mean_perf == b.mean_perf);
        for (std::size_t i = 0; i < a.trials.size(); ++i) {
            REQUIRE(a.trials[i].perf == b.trials[i].perf);
            REQUIRE(a.trials[i].object_draw.x == b.trials[i].object_draw.x);
            REQUIRE(a.trials[i].object_draw.y == b.trials[i].object_draw.y);
        }
    }
    SECTION("extreme object noise ruins the success rate") {
        world::EnvSpec env;
        env.object_noise = 10.0; // ten times the reach radius
        env.trials = 200;
        env.seed = 0;
        const auto res = world::evaluate_robust(rod, reach, env);
        REQUIRE(res.success_rate < 0.2);
    }
    SECTION("success rate decays monotonically with object noise") {
        const double levels[] = {0.0, 0.1, 0.2, 0.4};
        double previous = 1.1;
        for (double sigma : levels) {
            double mean_rate = 0.0;
            for (std::uint64_t seed = 1; seed <= 5; ++seed) {
                world::EnvSpec env;
                env.object_noise = sigma;
                env.trials = 500;
                env.seed = seed;
                mean_rate += world::evaluate_robust(rod, reach, env).success_rate;
            }
            mean_rate /= 5.0;
            REQUIRE(mean_rate <= previous + 1e-12);
            previous = mean_rate;
        }
    }
}

TEST_CASE("tool validation enforces bounds", "[toyworld]") {
    const world::ToolBounds bounds;
    ToolSpec ok;
    ok.id = "ok";
    ok.segments = {Segment{0.8, 0.0}, Segment{0.8, 0.5}};
    REQUIRE_NOTHROW(ok.validate(bounds));

    ToolSpec empty;
    REQUIRE_THROWS_AS(empty.validate(bounds), ValidationError);

    ToolSpec too_long;
    too_long.segments = {Segment{0.9, 0.0}};
    REQUIRE_THROWS_AS(too_long.validate(bounds), ValidationError);

    ToolSpec over_budget;
    over_budget.segments = {Segment{0.8, 0.0}, Segment{0.8, 0.0}, Segment{0.8, 0.0}};
    REQUIRE_THROWS_AS(over_budget.validate(bounds), ValidationError);

    ToolSpec over_bend;
    over_bend.segments = {Segment{0.5, 2.0}};
    REQUIRE_THROWS_AS(over_bend.validate(bounds), ValidationError);

    ToolSpec five;
    five.segments.assign(5, Segment{0.1, 0.0});
    REQUIRE_THROWS_AS(five.validate(bounds), ValidationError);

    ToolSpec tagged;
    tagged.segments = {Segment{0.5, 0.0}};
    tagged.affordances = {"lever"};
    REQUIRE_THROWS_AS(tagged.validate(bounds), ValidationError);

    REQUIRE(world::combo_key({"hook", "extend"}) == "extend+hook");
    REQUIRE(world::combo_key({}) == "");
}
