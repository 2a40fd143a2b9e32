// Tests for the monitoring layer: report assembly across the five channels,
// confidence-weighted tool selection with the evaluation-skip gate, candidate
// filtering and ranking, and learning-weight adaptation.
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "toolforge/evaluator.hpp"

namespace tf = toolforge;
using tf::conf::Channel;
using tf::evaluator::EvaluatorConfig;
using tf::evaluator::ReportInputs;

TEST_CASE("report assembly", "[evaluator][report]") {
    EvaluatorConfig cfg;

    SECTION("uniform action posterior zeroes the decision channel") {
        ReportInputs in;
        in.decision = tf::conf::ProbVec::uniform(4);
        const auto report = tf::evaluator::assemble_report(1, in, cfg);
        REQUIRE(report.get(Channel::decision)->value == Catch::Approx(0.0).margin(1e-12));
        REQUIRE_FALSE(report.has(Channel::perceptual));
        REQUIRE(report.missing_reason[static_cast<std::size_t>(Channel::perceptual)]
                == "not-provided");
    }

    SECTION("a delta belief saturates the perceptual channel") {
        ReportInputs in;
        in.perceptual = tf::pomdp::Belief::delta(3, 1);
        const auto report = tf::evaluator::assemble_report(2, in, cfg);
        REQUIRE(report.get(Channel::perceptual)->value == Catch::Approx(1.0).margin(1e-12));
    }

    SECTION("an untrained utility posterior sits at the squash midpoint") {
        ReportInputs in;
        in.utility = tf::conf::DirichletParams::symmetric(8, 1.0);
        const auto report = tf::evaluator::assemble_report(3, in, cfg);
        REQUIRE(report.get(Channel::utility)->value == Catch::Approx(0.5).margin(1e-12));
    }

    SECTION("an untrained world-model scope sits at the squash midpoint") {
        tf::evaluator::ModelChannelInput m;
        m.model = tf::pomdp::WorldModel::create({"near", "far"}, {"success", "fail"});
        m.model.ensure_combo({"extend"});
        m.scope = {{"extend"}};
        ReportInputs in;
        in.model = m;
        const auto report = tf::evaluator::assemble_report(4, in, cfg);
        REQUIRE(report.get(Channel::model)->value == Catch::Approx(0.5).margin(1e-12));
    }

    SECTION("control channel mirrors the control-confidence map") {
        ReportInputs in;
        in.control = tf::ctrl::ControlPrecision{tf::ctrl::kIdentity3};
        const auto report = tf::evaluator::assemble_report(5, in, cfg);
        const double h_ref = tf::ctrl::default_control_entropy_reference();
        const double expected =
            tf::ctrl::control_confidence(tf::ctrl::ControlPrecision{tf::ctrl::kIdentity3}, h_ref,
                                         cfg.control_scale)
                .value;
        REQUIRE(report.get(Channel::control)->value == expected);
    }

    SECTION("identical inputs yield identical reports") {
        ReportInputs in;
        in.perceptual = tf::conf::ProbVec::normalized({0.3, 0.5, 0.2});
        in.decision = tf::conf::ProbVec::normalized({1.0, 3.0});
        const auto a = tf::evaluator::assemble_report(7, in, cfg);
        const auto b = tf::evaluator::assemble_report(7, in, cfg);
        for (const auto channel : tf::conf::kAllChannels) {
            REQUIRE(a.has(channel) == b.has(channel));
            if (a.has(channel)) {
                REQUIRE(a.get(channel)->value == b.get(channel)->value);
                REQUIRE(a.get(channel)->raw_entropy == b.get(channel)->raw_entropy);
            }
        }
    }

    SECTION("a report needs at least one channel input") {
        REQUIRE_THROWS_AS(tf::evaluator::assemble_report(0, ReportInputs{}, cfg),
                          tf::ValidationError);
    }
}

namespace {

tf::world::ToolSpec straight_tool(std::string id, std::vector<double> lengths) {
    tf::world::ToolSpec tool;
    tool.id = std::move(id);
    for (double l : lengths) tool.segments.push_back({l, 0.0});
    return tool;
}

} // namespace

TEST_CASE("tool selection", "[evaluator][select]") {
    tf::world::TaskSpec task;
    task.object = {1.25, 0.0};
    tf::world::EnvSpec env;
    env.object_noise = 0.1;
    env.trials = 50;
    env.seed = 77;

    SECTION("a single-tool toolbox returns it and gates the designer on its confidence") {
        const std::vector<tf::world::ToolSpec> toolbox{straight_tool("only", {0.8, 0.8})};
        tf::ctrl::ControllerParams noisy;
        noisy.actuation_noise = 2.0;
        EvaluatorConfig cfg;
        const auto low = tf::evaluator::select_tool(toolbox, task, env, noisy, cfg);
        REQUIRE(low.choice == 0);
        REQUIRE(low.control_confidences[0] < cfg.tau_skip);
        REQUIRE(low.trigger_designer);
        REQUIRE_FALSE(low.bypassed_evaluation);

        tf::ctrl::ControllerParams quiet; // no actuation noise: long levers help
        EvaluatorConfig wide = cfg;
        wide.control_scale = 0.5;
        const auto high = tf::evaluator::select_tool(toolbox, task, env, quiet, wide);
        REQUIRE(high.choice == 0);
        REQUIRE(high.control_confidences[0] >= wide.tau_skip);
        REQUIRE_FALSE(high.trigger_designer);
        REQUIRE(high.bypassed_evaluation);
    }

    SECTION("identical tools fall back to the lexicographically smaller id") {
        const std::vector<tf::world::ToolSpec> toolbox{straight_tool("zeta", {0.5}),
                                                       straight_tool("alpha", {0.5})};
        const auto res =
            tf::evaluator::select_tool(toolbox, task, env, {}, EvaluatorConfig{});
        REQUIRE(toolbox[res.choice].id == "alpha");
    }

    SECTION("confidence weighting flips the choice toward the steadier tool") {
        // Short tool: small lever, high control confidence, slightly lower
        // performance. Long tool: big lever under actuation noise, low
        // confidence, higher performance.
        const std::vector<tf::world::ToolSpec> toolbox{straight_tool("a-short", {0.3}),
                                                       straight_tool("b-long", {0.8, 0.8})};
        tf::ctrl::ControllerParams noisy;
        noisy.actuation_noise = 2.0;
        EvaluatorConfig cfg;
        cfg.beta_select = 0.5;
        // Conservative skip gate so the perturbed evaluation always runs here.
        cfg.tau_skip = 0.92;
        // Reference and scale place the two tools near confidence 0.9 / 0.2.
        cfg.control_entropy_reference = 3.9260;
        cfg.control_scale = 0.1088;

        const auto res = tf::evaluator::select_tool(toolbox, task, env, noisy, cfg);
        REQUIRE_FALSE(res.bypassed_evaluation);
        REQUIRE(res.control_confidences[0] == Catch::Approx(0.90).margin(0.01));
        REQUIRE(res.control_confidences[1] == Catch::Approx(0.20).margin(0.01));
        // Reward-shaped robust perf: the short tool misses more under object
        // noise (success rate ~0.64) so its near-miss trials are discounted.
        REQUIRE(res.predicted_perf[0] == Catch::Approx(0.67).margin(0.03));
        REQUIRE(res.predicted_perf[1] == Catch::Approx(0.96).margin(0.03));
        REQUIRE(res.predicted_perf[0] < res.predicted_perf[1]);
        // Hand-evaluated J: 0.67 + 0.5*0.90 = 1.12 beats 0.96 + 0.5*0.20 = 1.06.
        REQUIRE(toolbox[res.choice].id == "a-short");
        // Neither tool clears the conservative gate, so designing is on the table.
        REQUIRE(res.trigger_designer);

        // Without the confidence term the raw performer wins.
        EvaluatorConfig plain = cfg;
        plain.beta_select = 0.0;
        const auto raw = tf::evaluator::select_tool(toolbox, task, env, noisy, plain);
        REQUIRE(toolbox[raw.choice].id == "b-long");
        REQUIRE_FALSE(raw.bypassed_evaluation);
        REQUIRE(raw.trigger_designer == res.trigger_designer);
    }

    SECTION("the chosen index matches the argmax of the reported scores") {
        const std::vector<tf::world::ToolSpec> toolbox{straight_tool("a", {0.3}),
                                                       straight_tool("b", {0.6}),
                                                       straight_tool("c", {0.5, 0.4})};
        const auto res = tf::evaluator::select_tool(toolbox, task, env, {}, EvaluatorConfig{});
        std::size_t argmax = 0;
        for (std::size_t i = 1; i < res.scores.size(); ++i) {
            if (res.scores[i] > res.scores[argmax]) argmax = i;
        }
        REQUIRE(res.choice == argmax);
        // Rescaling every score by a common positive constant keeps the
        // argmax, so the choice is scale-invariant.
        std::size_t scaled_argmax = 0;
        for (std::size_t i = 1; i < res.scores.size(); ++i) {
            if (3.7 * res.scores[i] > 3.7 * res.scores[scaled_argmax]) scaled_argmax = i;
        }
        REQUIRE(scaled_argmax == argmax);
    }

    SECTION("an empty toolbox is rejected") {
        REQUIRE_THROWS_AS(
            tf::evaluator::select_tool({}, task, env, {}, EvaluatorConfig{}),
            tf::ValidationError);
    }
}

namespace {

tf::design::DesignCandidate candidate(std::string id, double raw_confidence, double length,
                                      bool valid = true) {
    tf::design::DesignCandidate c;
    c.tool.id = std::move(id);
    c.tool.segments = {{length, 0.0}};
    c.raw_confidence = raw_confidence;
    c.valid = valid;
    if (!valid) c.violation = "bounds";
    return c;
}

} // namespace

TEST_CASE("candidate filtering and ranking", "[evaluator][rank]") {
    const tf::conf::CalibrationModel identity_cal;

    SECTION("all-invalid input yields an empty list") {
        const auto ranked = tf::evaluator::filter_rank(
            {candidate("a", 0.9, 0.5, false), candidate("b", 0.8, 0.5, false)}, identity_cal, 3);
        REQUIRE(ranked.empty());
    }

    SECTION("identity calibration preserves the raw-confidence order") {
        const auto ranked = tf::evaluator::filter_rank(
            {candidate("a", 0.3, 0.5), candidate("b", 0.9, 0.5), candidate("c", 0.6, 0.5)},
            identity_cal, 3);
        REQUIRE(ranked.size() == 3);
        REQUIRE(ranked[0].tool.id == "b");
        REQUIRE(ranked[1].tool.id == "c");
        REQUIRE(ranked[2].tool.id == "a");
        for (const auto& c : ranked) REQUIRE(c.confidence == identity_cal.apply(c.raw_confidence));
    }

    SECTION("confidence ties break toward the shorter tool") {
        const auto ranked = tf::evaluator::filter_rank(
            {candidate("x", 0.9, 0.6, false), candidate("long", 0.6, 1.2),
             candidate("short", 0.6, 0.8)},
            identity_cal, 3);
        REQUIRE(ranked.size() == 2);
        REQUIRE(ranked[0].tool.id == "short");
        REQUIRE(ranked[1].tool.id == "long");
    }

    SECTION("length ties break toward the smaller id") {
        const auto ranked = tf::evaluator::filter_rank(
            {candidate("beta", 0.6, 0.8), candidate("alpha", 0.6, 0.8)}, identity_cal, 2);
        REQUIRE(ranked[0].tool.id == "alpha");
        REQUIRE(ranked[1].tool.id == "beta");
    }

    SECTION("top_k truncates and must be positive") {
        const auto ranked = tf::evaluator::filter_rank(
            {candidate("a", 0.3, 0.5), candidate("b", 0.9, 0.5), candidate("c", 0.6, 0.5)},
            identity_cal, 2);
        REQUIRE(ranked.size() == 2);
        REQUIRE(ranked[0].tool.id == "b");
        REQUIRE_THROWS_AS(tf::evaluator::filter_rank({candidate("a", 0.3, 0.5)}, identity_cal, 0),
                          tf::ValidationError);
    }

    SECTION("a recalibrated ranking still reflects the monotone map") {
        tf::conf::CalibrationModel cooled;
        cooled.temperature = 2.0;
        const auto ranked = tf::evaluator::filter_rank(
            {candidate("a", 0.9, 0.5), candidate("b", 0.7, 0.5)}, cooled, 2);
        REQUIRE(ranked[0].tool.id == "a");
        REQUIRE(ranked[0].confidence == cooled.apply(0.9));
        REQUIRE(ranked[0].confidence < 0.9); // cooled toward one half
    }
}

TEST_CASE("learning-weight adaptation", "[evaluator][learning]") {
    EvaluatorConfig cfg;
    cfg.lr_min = 0.5;
    cfg.lr_max = 2.0;

    const auto report_with_decision = [](double c_dec) {
        tf::conf::ConfidenceReport report;
        tf::conf::ConfidenceScore s;
        s.channel = Channel::decision;
        s.raw_entropy = 0.0;
        s.value = c_dec;
        report.set(s);
        return report;
    };

    SECTION("the endpoints map to the bounds") {
        REQUIRE(tf::evaluator::adapt_learning_weight(report_with_decision(1.0), cfg)
                == Catch::Approx(0.5));
        REQUIRE(tf::evaluator::adapt_learning_weight(report_with_decision(0.0), cfg)
                == Catch::Approx(2.0));
    }

    SECTION("the midpoint lands at the interpolated weight") {
        REQUIRE(tf::evaluator::adapt_learning_weight(report_with_decision(0.5), cfg)
                == Catch::Approx(1.25));
    }

    SECTION("a missing decision channel is rejected") {
        tf::conf::ConfidenceReport report;
        report.set_missing(Channel::decision, "not-computed");
        REQUIRE_THROWS_AS(tf::evaluator::adapt_learning_weight(report, cfg), tf::ValidationError);
    }
}
