#pragma once
// Metacognitive monitoring layer: assembles per-episode confidence reports
// across the five channels, selects tools by blending predicted performance
// with control confidence (skipping expensive evaluation when confidence is
// high), gates the designer, ranks design candidates by calibrated
// confidence, and turns decision confidence into a learning weight.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "toolforge/confidence.hpp"
#include "toolforge/controller.hpp"
#include "toolforge/designer.hpp"
#include "toolforge/errors.hpp"
#include "toolforge/pomdp.hpp"
#include "toolforge/toyworld.hpp"

namespace toolforge::evaluator {

struct EvaluatorConfig {
    double beta_select = 0.5;      // weight of control confidence in selection
    double tau_skip = 0.6;         // resource-allocator gate on control confidence
    double lr_min = 0.5;           // learning-weight bounds
    double lr_max = 2.0;
    double checkpoint_floor = 0.05; // early-discard optimistic-score floor
    double shaping = 0.25;          // reward fraction kept when a trial misses
    double value_scale = 0.35;      // squash scale for utility and model channels
    double control_scale = 1.0;     // squash scale for the control channel
    double utility_prior_count = 1.0;
    std::optional<double> control_entropy_reference;
    conf::CalibrationModel calibration;

    void validate() const {
        if (!(beta_select >= 0.0)) throw ConfigError("EvaluatorConfig: beta_select must be >= 0");
        if (!(tau_skip > 0.0 && tau_skip < 1.0)) {
            throw ConfigError("EvaluatorConfig: tau_skip must lie in (0,1)");
        }
        if (!(lr_min > 0.0 && lr_min <= lr_max && lr_max <= 10.0)) {
            throw ConfigError("EvaluatorConfig: need 0 < lr_min <= lr_max <= 10");
        }
        if (!(checkpoint_floor >= 0.0 && checkpoint_floor <= 1.0)) {
            throw ConfigError("EvaluatorConfig: checkpoint_floor must lie in [0,1]");
        }
        if (!(shaping >= 0.0 && shaping <= 1.0)) {
            throw ConfigError("EvaluatorConfig: shaping must lie in [0,1]");
        }
        if (!(value_scale > 0.0) || !(control_scale > 0.0)) {
            throw ConfigError("EvaluatorConfig: squash scales must be > 0");
        }
        if (!(utility_prior_count > 0.0)) {
            throw ConfigError("EvaluatorConfig: utility_prior_count must be > 0");
        }
        calibration.validate();
    }
};

// ---------------------------------------------------------------------------
// Report assembly
// ---------------------------------------------------------------------------

struct ModelChannelInput {
    pomdp::WorldModel model;
    std::vector<std::set<std::string>> scope; // combos whose cells are averaged
};

struct ReportInputs {
    std::optional<pomdp::Belief> perceptual;         // belief over world states
    std::optional<conf::DirichletParams> utility;    // posterior over reward bins
    std::optional<ModelChannelInput> model;
    std::optional<ctrl::ControlPrecision> control;
    std::optional<conf::ProbVec> decision;           // posterior over actions
};

// Fills exactly the channels whose inputs are present; absent channels carry
// a missing-reason instead of a score.
inline conf::ConfidenceReport assemble_report(std::uint64_t episode, const ReportInputs& in,
                                              const EvaluatorConfig& cfg) {
    cfg.validate();
    if (!in.perceptual && !in.utility && !in.model && !in.control && !in.decision) {
        throw ValidationError("assemble_report: at least one channel input is required");
    }

    conf::ConfidenceReport report;
    report.episode = episode;

    if (in.perceptual) {
        conf::ConfidenceScore s;
        s.channel = conf::Channel::perceptual;
        s.raw_entropy = conf::entropy_categorical(*in.perceptual);
        s.value = conf::confidence_from_entropy(s.raw_entropy, in.perceptual->size());
        report.set(s);
    } else {
        report.set_missing(conf::Channel::perceptual, "not-provided");
    }

    if (in.utility) {
        conf::ConfidenceScore s;
        s.channel = conf::Channel::utility;
        s.raw_entropy = conf::dirichlet_entropy(*in.utility);
        const double reference = conf::dirichlet_entropy(
            conf::DirichletParams::symmetric(in.utility->size(), cfg.utility_prior_count));
        s.value = conf::squash_to_confidence(s.raw_entropy, reference, cfg.value_scale);
        report.set(s);
    } else {
        report.set_missing(conf::Channel::utility, "not-provided");
    }

    if (in.model) {
        report.set(pomdp::model_confidence(in.model->model, in.model->scope,
                                           pomdp::EntropySquash{std::nullopt, cfg.value_scale}));
    } else {
        report.set_missing(conf::Channel::model, "not-provided");
    }

    if (in.control) {
        const double h_ref =
            cfg.control_entropy_reference.value_or(ctrl::default_control_entropy_reference());
        report.set(ctrl::control_confidence(*in.control, h_ref, cfg.control_scale));
    } else {
        report.set_missing(conf::Channel::control, "not-provided");
    }

    if (in.decision) {
        conf::ConfidenceScore s;
        s.channel = conf::Channel::decision;
        s.raw_entropy = conf::entropy_categorical(*in.decision);
        s.value = conf::confidence_from_entropy(s.raw_entropy, in.decision->size());
        report.set(s);
    } else {
        report.set_missing(conf::Channel::decision, "not-provided");
    }

    return report;
}

// ---------------------------------------------------------------------------
// Tool selection with the resource-allocator gate
// ---------------------------------------------------------------------------

struct SelectionResult {
    std::size_t choice = 0;
    conf::ConfidenceReport report;
    bool trigger_designer = false; // every tool's control confidence below the gate
    bool bypassed_evaluation = false; // cheap predictor only, no robust trials
    std::vector<double> scores;               // J per tool
    std::vector<double> predicted_perf;       // perf term actually used in J
    std::vector<double> control_confidences;
};

// Scores each tool J = predicted perf + beta_select * control confidence.
// Predicted perf is a task-reward proxy: an evaluation that meets the task's
// success criterion earns its full geometric score, a near-miss (e.g. a
// straight tool on a pull task) earns only the shaped fraction. The perf term
// starts from the cheap nominal-geometry predictor; only when the provisional
// winner's control confidence falls below tau_skip is the expensive perturbed
// evaluation run (for every tool) and the choice redone.
// The designer trigger fires when no tool clears the gate. Ties break toward
// the lexicographically smaller tool id.
inline SelectionResult select_tool(const std::vector<world::ToolSpec>& toolbox,
                                   const world::TaskSpec& task, const world::EnvSpec& env,
                                   const ctrl::ControllerParams& ctrl_params,
                                   const EvaluatorConfig& cfg) {
    if (toolbox.empty()) throw ValidationError("select_tool: toolbox must be non-empty");
    task.validate();
    env.validate();
    ctrl_params.validate();
    cfg.validate();

    const std::size_t n = toolbox.size();
    const double h_ref =
        cfg.control_entropy_reference.value_or(ctrl::default_control_entropy_reference());

    SelectionResult out;
    out.control_confidences.resize(n);
    out.predicted_perf.resize(n);
    out.scores.resize(n);
    std::vector<ctrl::ControlPrecision> precisions(n);
    for (std::size_t i = 0; i < n; ++i) {
        precisions[i] = ctrl::control_precision(toolbox[i], ctrl_params);
        out.control_confidences[i] =
            ctrl::control_confidence(precisions[i], h_ref, cfg.control_scale).value;
        const auto nominal = world::performance(toolbox[i], task, task.object);
        out.predicted_perf[i] = nominal.success ? nominal.score : cfg.shaping * nominal.score;
    }

    const auto best_of = [&](const std::vector<double>& scores) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < scores.size(); ++i) {
            if (scores[i] > scores[best]
                || (scores[i] == scores[best] && toolbox[i].id < toolbox[best].id)) {
                best = i;
            }
        }
        return best;
    };

    for (std::size_t i = 0; i < n; ++i) {
        out.scores[i] = out.predicted_perf[i] + cfg.beta_select * out.control_confidences[i];
    }
    out.choice = best_of(out.scores);
    out.bypassed_evaluation = out.control_confidences[out.choice] >= cfg.tau_skip;

    if (!out.bypassed_evaluation) {
        for (std::size_t i = 0; i < n; ++i) {
            const auto robust = world::evaluate_robust(toolbox[i], task, env);
            out.predicted_perf[i] = design::shaped_reward(robust, cfg.shaping);
            out.scores[i] = out.predicted_perf[i] + cfg.beta_select * out.control_confidences[i];
        }
        out.choice = best_of(out.scores);
    }

    out.trigger_designer = std::all_of(out.control_confidences.begin(),
                                       out.control_confidences.end(),
                                       [&](double c) { return c < cfg.tau_skip; });

    // Decision channel over the tool choice: scores normalized to a posterior.
    ReportInputs inputs;
    inputs.control = precisions[out.choice];
    const double score_sum = std::accumulate(out.scores.begin(), out.scores.end(), 0.0);
    inputs.decision = score_sum > 0.0 ? conf::ProbVec::normalized(out.scores)
                                      : conf::ProbVec::uniform(n);
    out.report = assemble_report(0, inputs, cfg);
    return out;
}

// ---------------------------------------------------------------------------
// Candidate filtering and ranking
// ---------------------------------------------------------------------------

// Drops invalid candidates, recomputes calibrated confidence, and returns the
// top_k ranked descending; ties go to the shorter tool, then the smaller id.
inline std::vector<design::DesignCandidate> filter_rank(
    std::vector<design::DesignCandidate> candidates, const conf::CalibrationModel& calibration,
    std::size_t top_k) {
    if (top_k < 1) throw ValidationError("filter_rank: top_k must be >= 1");
    calibration.validate();

    std::erase_if(candidates, [](const design::DesignCandidate& c) { return !c.valid; });
    for (auto& c : candidates) c.confidence = calibration.apply(c.raw_confidence);
    std::sort(candidates.begin(), candidates.end(),
              [](const design::DesignCandidate& a, const design::DesignCandidate& b) {
                  if (a.confidence != b.confidence) return a.confidence > b.confidence;
                  const double la = a.tool.total_length();
                  const double lb = b.tool.total_length();
                  if (la != lb) return la < lb;
                  return a.tool.id < b.tool.id;
              });
    if (candidates.size() > top_k) candidates.resize(top_k);
    return candidates;
}

// ---------------------------------------------------------------------------
// Learning-weight adaptation
// ---------------------------------------------------------------------------

// Low decision confidence raises the learning weight toward lr_max so new
// evidence counts more; full confidence keeps it at lr_min.
inline double adapt_learning_weight(const conf::ConfidenceReport& report,
                                    const EvaluatorConfig& cfg) {
    cfg.validate();
    if (!report.has(conf::Channel::decision)) {
        throw ValidationError("adapt_learning_weight: decision channel is missing");
    }
    const double c_dec = report.get(conf::Channel::decision)->value;
    return cfg.lr_min + (cfg.lr_max - cfg.lr_min) * (1.0 - c_dec);
}

} // namespace toolforge::evaluator
