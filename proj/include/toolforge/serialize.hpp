#pragma once
// JSON conversions for the domain types that cross the process boundary:
// tools, tasks, world models, confidence reports, calibration fits. Used by
// the report writers and the CLI. Conversions are lossless for round-tripped
// types and stable in key order (nlohmann::json sorts object keys), which the
// byte-identical-output contract relies on.

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "toolforge/confidence.hpp"
#include "toolforge/controller.hpp"
#include "toolforge/designer.hpp"
#include "toolforge/errors.hpp"
#include "toolforge/pomdp.hpp"
#include "toolforge/toyworld.hpp"

namespace toolforge::io {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Tools and tasks
// ---------------------------------------------------------------------------

inline json to_json(const world::ToolSpec& tool) {
    json segments = json::array();
    for (const auto& s : tool.segments) {
        segments.push_back(json{{"length", s.length}, {"bend", s.bend}});
    }
    return json{{"id", tool.id},
                {"segments", std::move(segments)},
                {"affordances", tool.affordances}};
}

inline world::ToolSpec tool_from_json(const json& j) {
    world::ToolSpec tool;
    tool.id = j.at("id").get<std::string>();
    for (const auto& s : j.at("segments")) {
        tool.segments.push_back(
            {s.at("length").get<double>(), s.value("bend", 0.0)});
    }
    if (j.contains("affordances")) {
        for (const auto& a : j.at("affordances")) {
            tool.affordances.insert(a.get<std::string>());
        }
    }
    return tool;
}

inline json to_json(const world::TaskSpec& task) {
    return json{{"kind", std::string(world::task_kind_name(task.kind))},
                {"object", {task.object.x, task.object.y}},
                {"reach_radius", task.reach_radius},
                {"score_width", task.score_width},
                {"success_radius", task.success_radius},
                {"hook_threshold", task.hook_threshold}};
}

inline json to_json(const world::EnvSpec& env) {
    return json{{"object_noise", env.object_noise},
                {"actuation_noise", env.actuation_noise},
                {"trials", env.trials},
                {"seed", env.seed}};
}

// ---------------------------------------------------------------------------
// Confidence reports
// ---------------------------------------------------------------------------

// A report serializes with all five channels present: a filled channel is an
// object with its value and raw entropy, an absent one is null with its
// reason recorded next to it.
inline json to_json(const conf::ConfidenceReport& report) {
    json channels = json::object();
    json missing = json::object();
    for (conf::Channel ch : conf::kAllChannels) {
        const std::string name{conf::channel_name(ch)};
        if (report.has(ch)) {
            const auto& score = *report.get(ch);
            channels[name] = json{{"value", score.value}, {"entropy", score.raw_entropy}};
        } else {
            channels[name] = nullptr;
            missing[name] = report.missing_reason[static_cast<std::size_t>(ch)];
        }
    }
    return json{{"episode", report.episode},
                {"channels", std::move(channels)},
                {"missing", std::move(missing)}};
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

inline json to_json(const conf::CalibrationModel& cal) {
    return json{{"temperature", cal.temperature},
                {"holdout_nll_before", cal.holdout_nll_before},
                {"holdout_nll_after", cal.holdout_nll_after},
                {"degenerate", cal.degenerate}};
}

inline json to_json(const design::GenerativeDesignModel& g) {
    return json{{"mu", g.mu}, {"sigma", g.sigma}};
}

inline json to_json(const pomdp::WorldModel& model) {
    json counts = json::object();
    for (const auto& [combo, cells] : model.counts) {
        json per_state = json::array();
        for (const auto& cell : cells) per_state.push_back(cell.alpha);
        counts[combo] = std::move(per_state);
    }
    return json{{"states", model.states},
                {"outcomes", model.outcomes},
                {"prior_count", model.prior_count},
                {"counts", std::move(counts)}};
}

inline json to_json(const design::DesignCandidate& c) {
    return json{{"tool", to_json(c.tool)},
                {"theta", c.theta},
                {"predicted_reward", c.predicted_reward},
                {"confidence", c.confidence},
                {"epistemic", c.epistemic},
                {"measured_reward", c.measured_reward},
                {"measured_success", c.measured_success},
                {"evaluated", c.evaluated},
                {"valid", c.valid},
                {"violation", c.violation}};
}

} // namespace toolforge::io
