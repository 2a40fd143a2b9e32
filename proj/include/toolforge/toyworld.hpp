#pragma once
// Deterministic 2-D tool-use environment: polyline tools described by
// segment lengths and bends, reach/pull tasks scored over a fixed grid of
// hand poses, and a seeded perturbation protocol for robustness estimates.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "toolforge/errors.hpp"
#include "toolforge/rng.hpp"

namespace toolforge::world {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    double norm2() const { return x * x + y * y; }
    double norm() const { return std::sqrt(norm2()); }
};

struct Pose {
    double x = 0.0;
    double y = 0.0;
    double psi = 0.0; // hand orientation, radians
};

inline constexpr std::array<std::string_view, 4> kAffordanceVocabulary{
    "extend", "hook", "push", "wedge"};

inline bool is_known_affordance(std::string_view tag) {
    for (auto known : kAffordanceVocabulary) {
        if (known == tag) return true;
    }
    return false;
}

// Canonical key for an affordance set: sorted tags joined by '+'.
inline std::string combo_key(const std::set<std::string>& affordances) {
    std::string key;
    for (const auto& tag : affordances) {
        if (!key.empty()) key += '+';
        key += tag;
    }
    return key;
}

// Geometric and budget limits every tool must respect.
struct ToolBounds {
    std::size_t max_segments = 4;
    double max_segment_length = 0.8;          // meters
    double max_bend = std::numbers::pi / 2.0; // radians
    double length_budget = 1.6;               // meters, total over segments

    void validate() const {
        if (max_segments < 1) throw ValidationError("ToolBounds: max_segments must be >= 1");
        if (!(max_segment_length > 0.0)) {
            throw ValidationError("ToolBounds: max_segment_length must be > 0");
        }
        if (!(max_bend > 0.0)) throw ValidationError("ToolBounds: max_bend must be > 0");
        if (!(length_budget > 0.0)) throw ValidationError("ToolBounds: length_budget must be > 0");
    }
};

struct Segment {
    double length = 0.0; // meters
    double bend = 0.0;   // radians, relative to the previous segment
};

struct ToolSpec {
    std::string id;
    std::vector<Segment> segments;
    std::set<std::string> affordances;

    double total_length() const {
        double sum = 0.0;
        for (const auto& s : segments) sum += s.length;
        return sum;
    }

    double total_bend() const {
        double sum = 0.0;
        for (const auto& s : segments) sum += s.bend;
        return sum;
    }

    void validate(const ToolBounds& bounds) const {
        bounds.validate();
        if (segments.empty() || segments.size() > bounds.max_segments) {
            throw ValidationError("ToolSpec '" + id + "': segment count out of range");
        }
        for (const auto& s : segments) {
            if (!(s.length >= 0.0) || s.length > bounds.max_segment_length + 1e-9) {
                throw ValidationError("ToolSpec '" + id + "': segment length out of range");
            }
            if (std::abs(s.bend) > bounds.max_bend + 1e-9) {
                throw ValidationError("ToolSpec '" + id + "': segment bend out of range");
            }
        }
        if (total_length() > bounds.length_budget + 1e-9) {
            throw ValidationError("ToolSpec '" + id + "': length budget exceeded");
        }
        for (const auto& tag : affordances) {
            if (!is_known_affordance(tag)) {
                throw ValidationError("ToolSpec '" + id + "': unknown affordance tag '" + tag + "'");
            }
        }
    }
};

enum class TaskKind : std::uint8_t { reach, pull };

inline constexpr std::string_view task_kind_name(TaskKind k) {
    return k == TaskKind::reach ? "reach" : "pull";
}

struct TaskSpec {
    TaskKind kind = TaskKind::reach;
    Vec2 object{1.4, 0.0};                          // nominal object position
    double reach_radius = 1.0;                      // R: hand may move in this disk
    double score_width = 0.1;                       // sigma_task of the score kernel
    double success_radius = 0.05;                   // tip must come this close
    double hook_threshold = std::numbers::pi / 4.0; // pull only: required total bend

    void validate() const {
        if (!(reach_radius > 0.0)) throw ValidationError("TaskSpec: reach_radius must be > 0");
        if (!(score_width > 0.0)) throw ValidationError("TaskSpec: score_width must be > 0");
        if (!(success_radius > 0.0)) throw ValidationError("TaskSpec: success_radius must be > 0");
        if (kind == TaskKind::pull && !(hook_threshold > 0.0)) {
            throw ValidationError("TaskSpec: hook_threshold must be > 0 for pull tasks");
        }
    }
};

struct EnvSpec {
    double object_noise = 0.0;    // std of the object-position perturbation, meters
    double actuation_noise = 0.0; // std of the per-segment bend perturbation, radians
    std::size_t trials = 1;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(object_noise >= 0.0)) throw ValidationError("EnvSpec: object_noise must be >= 0");
        if (!(actuation_noise >= 0.0)) {
            throw ValidationError("EnvSpec: actuation_noise must be >= 0");
        }
        if (trials < 1) throw ValidationError("EnvSpec: trials must be >= 1");
    }
};

// Fixed search grid over hand poses: positions on an axis-aligned lattice
// clipped to the reach disk, orientations evenly spaced on the circle.
struct PoseGridSpec {
    std::size_t positions_per_axis = 21;
    std::size_t orientations = 24;

    void validate() const {
        if (positions_per_axis < 2 || orientations < 1) {
            throw ValidationError("PoseGridSpec: need >= 2 positions per axis and >= 1 orientation");
        }
    }
};

// Tip position with the hand at `hand`: segment i points at the hand angle
// plus the cumulative bend through segment i.
inline Vec2 forward_kinematics(const ToolSpec& tool, const Pose& hand) {
    double angle = hand.psi;
    Vec2 tip{hand.x, hand.y};
    for (const auto& s : tool.segments) {
        angle += s.bend;
        tip.x += s.length * std::cos(angle);
        tip.y += s.length * std::sin(angle);
    }
    return tip;
}

struct PerfResult {
    double score = 0.0;         // exp(-d^2 / (2 sigma^2)) at the best pose
    bool success = false;
    double best_distance = 0.0; // tip-to-object distance at the best pose
    Pose best_pose{};
};

// Best achievable score over the pose grid for a given (possibly perturbed)
// object position. Pure geometry: affordance tags and ids are ignored, except
// that pull success additionally requires the tool's cumulative bend to clear
// the hook threshold.
inline PerfResult performance(const ToolSpec& tool, const TaskSpec& task, const Vec2& object,
                              const PoseGridSpec& grid = {}) {
    task.validate();
    grid.validate();

    // Tip offset with the hand at the origin, rotated per orientation below.
    const Vec2 local = forward_kinematics(tool, Pose{0.0, 0.0, 0.0});

    const double r = task.reach_radius;
    const std::size_t n = grid.positions_per_axis;
    const double step = 2.0 * r / static_cast<double>(n - 1);

    double best_d2 = std::numeric_limits<double>::infinity();
    Pose best{};
    for (std::size_t k = 0; k < grid.orientations; ++k) {
        const double psi = 2.0 * std::numbers::pi * static_cast<double>(k)
            / static_cast<double>(grid.orientations);
        const double c = std::cos(psi), s = std::sin(psi);
        const Vec2 offset{c * local.x - s * local.y, s * local.x + c * local.y};
        for (std::size_t ix = 0; ix < n; ++ix) {
            const double x = -r + step * static_cast<double>(ix);
            for (std::size_t iy = 0; iy < n; ++iy) {
                const double y = -r + step * static_cast<double>(iy);
                if (x * x + y * y > r * r + 1e-9) continue;
                const double dx = x + offset.x - object.x;
                const double dy = y + offset.y - object.y;
                const double d2 = dx * dx + dy * dy;
                if (d2 < best_d2) {
                    best_d2 = d2;
                    best = Pose{x, y, psi};
                }
            }
        }
    }

    PerfResult out;
    out.score = std::exp(-best_d2 / (2.0 * task.score_width * task.score_width));
    out.best_distance = std::sqrt(best_d2);
    out.best_pose = best;
    const bool reached = out.best_distance <= task.success_radius;
    const bool hooked = task.kind != TaskKind::pull || tool.total_bend() >= task.hook_threshold;
    out.success = reached && hooked;
    return out;
}

struct TrialOutcome {
    bool success = false;
    double perf = 0.0;
    Vec2 object_draw{};               // perturbed object position
    std::vector<double> bend_draws;   // perturbed per-segment bends
};

struct RobustResult {
    double success_rate = 0.0;
    double mean_perf = 0.0;
    std::vector<TrialOutcome> trials;
};

// Runs env.trials perturbed episodes. Trial t draws its noise from a stream
// keyed by (seed, "trial", t), so outcomes do not depend on evaluation order.
inline RobustResult evaluate_robust(const ToolSpec& tool, const TaskSpec& task,
                                    const EnvSpec& env, const PoseGridSpec& grid = {}) {
    task.validate();
    env.validate();

    RobustResult out;
    out.trials.reserve(env.trials);
    double perf_sum = 0.0;
    std::size_t successes = 0;
    for (std::size_t t = 0; t < env.trials; ++t) {
        rng::Stream draw = rng::Stream::keyed(env.seed, "trial", t);
        TrialOutcome trial;
        trial.object_draw = Vec2{task.object.x + draw.gaussian(0.0, env.object_noise),
                                 task.object.y + draw.gaussian(0.0, env.object_noise)};
        ToolSpec executed = tool;
        trial.bend_draws.reserve(executed.segments.size());
        for (auto& seg : executed.segments) {
            seg.bend += draw.gaussian(0.0, env.actuation_noise);
            trial.bend_draws.push_back(seg.bend);
        }
        const PerfResult perf = performance(executed, task, trial.object_draw, grid);
        trial.perf = perf.score;
        trial.success = perf.success;
        perf_sum += trial.perf;
        successes += trial.success ? 1 : 0;
        out.trials.push_back(std::move(trial));
    }
    out.mean_perf = perf_sum / static_cast<double>(env.trials);
    out.success_rate = static_cast<double>(successes) / static_cast<double>(env.trials);
    return out;
}

} // namespace toolforge::world
