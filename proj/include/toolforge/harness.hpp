#pragma once
// The closed loop and the packaged experiments. run_episode wires the
// components together — select a tool, act under perturbation, update the
// world model and belief, assemble the confidence report, and invent a new
// tool when an impasse is detected. run_experiment drives one of the five
// canned studies across a seed list and writes the report artifacts.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "toolforge/config.hpp"
#include "toolforge/designer.hpp"
#include "toolforge/errors.hpp"
#include "toolforge/evaluator.hpp"
#include "toolforge/pomdp.hpp"
#include "toolforge/report_io.hpp"
#include "toolforge/rng.hpp"
#include "toolforge/toyworld.hpp"

namespace toolforge::harness {

// ---------------------------------------------------------------------------
// Loop state
// ---------------------------------------------------------------------------

struct LoopState {
    std::vector<world::ToolSpec> toolbox;
    pomdp::WorldModel model;
    design::GenerativeDesignModel generative;
    pomdp::Belief belief{std::vector<double>{1.0}};
    conf::DirichletParams utility;                // posterior over reward bins
    std::vector<conf::ConfidenceReport> history;  // most recent reports
    std::uint64_t episode = 0;                    // episodes completed
    std::uint64_t episodes_since_invention = 0;   // impasse window anchor
};

inline std::vector<std::string> affordance_vocabulary() {
    std::vector<std::string> out;
    for (const auto& [tag, tmpl] : design::affordance_templates()) out.push_back(tag);
    return out;
}

// Index of the state label matching the task kind ("<kind>-ctx" when
// present, otherwise the first state).
inline std::size_t context_state(const std::vector<std::string>& states,
                                 const world::TaskSpec& task) {
    const std::string wanted = std::string(world::task_kind_name(task.kind)) + "-ctx";
    for (std::size_t i = 0; i < states.size(); ++i) {
        if (states[i] == wanted) return i;
    }
    return 0;
}

// Fresh loop state: a bare extend-template stick in the toolbox, a prior
// world model, a broad design sampler, and a belief leaning toward the
// task's context without being certain of it.
inline LoopState make_loop_state(const io::AppConfig& cfg, const world::TaskSpec& task) {
    LoopState state;
    state.toolbox = {design::instantiate_combo({"extend"})};
    state.model = pomdp::WorldModel::create(cfg.harness.states, cfg.harness.outcomes);
    const design::ParamSpace space{cfg.design.segments, cfg.bounds};
    state.generative = design::GenerativeDesignModel::broad(space);

    const std::size_t ctx = context_state(cfg.harness.states, task);
    std::vector<double> b(cfg.harness.states.size(),
                          0.1 / static_cast<double>(cfg.harness.states.size() - 1));
    b[ctx] = 0.9;
    state.belief = pomdp::Belief(std::move(b));

    state.utility = conf::DirichletParams::symmetric(cfg.harness.reward_bins,
                                                     cfg.evaluator.utility_prior_count);
    return state;
}

// ---------------------------------------------------------------------------
// Episode step
// ---------------------------------------------------------------------------

namespace detail {

inline std::string label_outcome(const world::RobustResult& rr, const io::HarnessConfig& cfg) {
    if (rr.success_rate >= cfg.success_rate_threshold) return "success";
    if (rr.mean_perf >= cfg.touch_score_threshold) return "touch";
    return "miss";
}

inline std::size_t reward_bin(double reward, std::size_t bins) {
    const double clamped = std::clamp(reward, 0.0, 1.0);
    const auto b = static_cast<std::size_t>(clamped * static_cast<double>(bins));
    return std::min(b, bins - 1);
}

inline std::vector<std::set<std::string>> toolbox_combos(
    const std::vector<world::ToolSpec>& toolbox) {
    std::vector<std::set<std::string>> out;
    for (const auto& tool : toolbox) {
        if (!tool.affordances.empty()) out.push_back(tool.affordances);
    }
    return out;
}

// Embeds a tool's geometry as the center of a tight sampler, used to refine
// a discovered template locally without abandoning its character.
inline design::GenerativeDesignModel around_tool(const world::ToolSpec& tool, double sigma) {
    design::GenerativeDesignModel g;
    const std::size_t n = tool.segments.size();
    g.mu.resize(2 * n);
    g.sigma.assign(2 * n, sigma);
    for (std::size_t i = 0; i < n; ++i) {
        g.mu[i] = tool.segments[i].length;
        g.mu[n + i] = tool.segments[i].bend;
    }
    return g;
}

} // namespace detail

inline conf::ConfidenceReport missing_report(std::uint64_t episode, const std::string& reason) {
    conf::ConfidenceReport report;
    report.episode = episode;
    for (conf::Channel ch : conf::kAllChannels) report.set_missing(ch, reason);
    return report;
}

// Runs one loop episode and appends the outcome to the state. The order
// follows the loop contract: select -> act -> model update -> report ->
// impasse check -> invention.
inline io::EpisodeRecord run_episode(LoopState& state, const world::TaskSpec& task,
                                     const io::AppConfig& cfg, std::uint64_t seed) {
    const std::uint64_t ep = state.episode + 1;
    io::EpisodeRecord record;
    record.episode = ep;
    record.x = static_cast<double>(ep);

    try {
        // Selection: predictions use their own noise stream.
        world::EnvSpec select_env = cfg.env;
        select_env.trials = cfg.harness.trials_per_episode;
        select_env.seed = rng::derive_seed(seed, "episode-select", ep);
        const auto sel = evaluator::select_tool(state.toolbox, task, select_env, cfg.controller,
                                                cfg.evaluator);
        const world::ToolSpec& chosen = state.toolbox[sel.choice];
        record.tool = chosen.id;

        // Acting: one perturbed trial batch.
        world::EnvSpec act_env = cfg.env;
        act_env.trials = cfg.harness.trials_per_episode;
        act_env.seed = rng::derive_seed(seed, "episode-act", ep);
        const world::RobustResult rr = world::evaluate_robust(chosen, task, act_env);
        const double reward = design::shaped_reward(rr, cfg.evaluator.shaping);
        record.outcome = detail::label_outcome(rr, cfg.harness);
        record.success = record.outcome == "success";
        record.success_rate = rr.success_rate;
        record.perf = rr.mean_perf;
        record.reward = reward;

        // Learning weight from the previous report's decision confidence.
        const double lr = state.history.empty()
                              ? 0.5 * (cfg.evaluator.lr_min + cfg.evaluator.lr_max)
                              : evaluator::adapt_learning_weight(state.history.back(),
                                                                 cfg.evaluator);
        record.lr = lr;

        // Model and belief update. The combo of an affordance-free tool (not
        // part of this scenario) would fall back to the bare-extend bundle.
        const std::set<std::string> combo =
            chosen.affordances.empty() ? std::set<std::string>{"extend"} : chosen.affordances;
        state.model.ensure_combo(combo);
        const auto filtered = pomdp::belief_update(state.belief, combo, record.outcome,
                                                   state.model);
        state.belief = filtered.belief;
        pomdp::record_outcome(state.model, combo, state.belief, record.outcome, lr);
        state.utility.alpha[detail::reward_bin(reward, cfg.harness.reward_bins)] += 1.0;

        // Report: decision scope is every bundle buildable from the
        // vocabulary (scored against prior cells where unseen), model scope
        // is the bundle just exercised.
        const auto all_combos =
            design::enumerate_combos(affordance_vocabulary(), cfg.harness.max_combo_size);
        pomdp::WorldModel scored = state.model;
        for (const auto& c : all_combos) scored.ensure_combo(c);
        const auto policy = pomdp::policy_posterior(state.belief, all_combos, scored, cfg.policy);
        evaluator::ReportInputs inputs;
        inputs.perceptual = state.belief;
        inputs.utility = state.utility;
        inputs.model = evaluator::ModelChannelInput{state.model, {combo}};
        inputs.control = ctrl::control_precision(chosen, cfg.controller);
        inputs.decision = policy.q;
        conf::ConfidenceReport report = evaluator::assemble_report(ep, inputs, cfg.evaluator);
        state.history.push_back(report);
        if (state.history.size() > cfg.harness.history_retention) {
            state.history.erase(state.history.begin());
        }
        record.report = std::move(report);

        state.episode = ep;
        state.episodes_since_invention += 1;

        // Impasse check over the window since the last invention.
        if (state.episodes_since_invention >= cfg.impasse.window &&
            state.history.size() >= cfg.impasse.window) {
            const std::vector<conf::ConfidenceReport> window(
                state.history.end() - static_cast<std::ptrdiff_t>(cfg.impasse.window),
                state.history.end());
            const auto impasse = pomdp::impasse_detect(window, cfg.impasse);
            record.impasse = impasse.impasse;
            record.impasse_reason = impasse.reason;

            if (impasse.impasse) {
                const auto disc = design::discover_tool(
                    affordance_vocabulary(), state.belief, state.model, cfg.policy,
                    cfg.harness.max_combo_size, detail::toolbox_combos(state.toolbox));
                world::ToolSpec invented = disc.tool;

                // Low confidence in the discovered bundle: refine its
                // geometry locally with a short CEM pass before adoption.
                if (disc.decision.value < cfg.impasse.decision_threshold) {
                    design::DesignConfig rcfg = cfg.design;
                    rcfg.population = cfg.harness.refine_population;
                    rcfg.iterations = cfg.harness.refine_iterations;
                    rcfg.segments = invented.segments.size();
                    const auto init = detail::around_tool(invented, cfg.harness.refine_sigma);
                    world::EnvSpec refine_env = cfg.env;
                    refine_env.trials = cfg.harness.trials_per_episode;
                    refine_env.seed = rng::derive_seed(seed, "invent-env", ep);
                    const auto refined =
                        design::cem_design(task, refine_env, cfg.controller, rcfg,
                                           rng::derive_seed(seed, "invent", ep), &init);
                    invented.segments = refined.best_tool.segments;
                }

                state.toolbox.push_back(invented);
                state.episodes_since_invention = 0;
                record.invented = true;
                record.invented_tool = invented.id;
            }
        }
    } catch (const std::exception& e) {
        throw std::runtime_error("episode " + std::to_string(ep) + ": " + e.what());
    }
    return record;
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

// e1: design under beta = 0 and beta = 0.5, then sweep execution noise.
// Performance-only designs tend to pick long levers whose pose coverage is
// sparse, so they fail more as the noise grows.
inline std::vector<io::EpisodeRecord> run_e1_seed(const io::AppConfig& cfg, std::uint64_t seed) {
    std::vector<io::EpisodeRecord> records;
    const std::array<std::pair<const char*, double>, 2> arms{
        {{"beta0", 0.0}, {"beta0.5", 0.5}}};

    std::uint64_t episode = 0;
    for (std::size_t a = 0; a < arms.size(); ++a) {
        design::DesignConfig dcfg = cfg.design;
        dcfg.beta = arms[a].second;
        world::EnvSpec design_env; // design-time evaluation is noiseless
        design_env.trials = 1;
        design_env.seed = rng::derive_seed(seed, "e1-design-env", a);
        const auto cem = design::cem_design(cfg.reach_task, design_env, cfg.controller, dcfg,
                                            rng::derive_seed(seed, "e1-design", a));
        world::ToolSpec tool = cem.best_tool;
        tool.id = arms[a].first;

        for (std::size_t i = 0; i < cfg.experiment.noise_grid.size(); ++i) {
            const double sigma = cfg.experiment.noise_grid[i];
            world::EnvSpec env;
            env.object_noise = sigma;
            env.actuation_noise = sigma;
            env.trials = cfg.experiment.sweep_trials;
            env.seed = rng::derive_seed(seed, "e1-eval", a * cfg.experiment.noise_grid.size() + i);
            const auto rr = world::evaluate_robust(tool, cfg.reach_task, env);

            io::EpisodeRecord r;
            r.seed = seed;
            r.episode = ++episode;
            r.arm = arms[a].first;
            r.x = sigma;
            r.tool = tool.id;
            r.outcome = detail::label_outcome(rr, cfg.harness);
            r.success = r.outcome == "success";
            r.success_rate = rr.success_rate;
            r.perf = rr.mean_perf;
            r.reward = design::shaped_reward(rr, cfg.evaluator.shaping);
            evaluator::ReportInputs inputs;
            inputs.control = ctrl::control_precision(tool, cfg.controller);
            r.report = evaluator::assemble_report(r.episode, inputs, cfg.evaluator);
            records.push_back(std::move(r));
        }
    }
    return records;
}

// e2: the impasse-to-invention loop on the pull task.
inline std::vector<io::EpisodeRecord> run_e2_seed(const io::AppConfig& cfg, std::uint64_t seed) {
    std::vector<io::EpisodeRecord> records;
    LoopState state = make_loop_state(cfg, cfg.pull_task);
    for (std::uint64_t ep = 0; ep < cfg.harness.episodes; ++ep) {
        io::EpisodeRecord r = run_episode(state, cfg.pull_task, cfg, seed);
        r.seed = seed;
        r.arm = "loop";
        records.push_back(std::move(r));
    }
    return records;
}

// e3: screen a fixed candidate pool in generation order versus ranked by
// calibrated surrogate confidence; both orders share one measurement per
// candidate so the comparison is exact.
inline std::vector<io::EpisodeRecord> run_e3_seed(const io::AppConfig& cfg, std::uint64_t seed) {
    const design::ParamSpace space{cfg.finetune.segments, cfg.bounds};
    const auto broad = design::GenerativeDesignModel::broad(space);

    world::EnvSpec screen_env = cfg.env;
    screen_env.object_noise = std::max(screen_env.object_noise, cfg.experiment.screen_noise);
    screen_env.actuation_noise =
        std::max(screen_env.actuation_noise, cfg.experiment.screen_noise);
    screen_env.trials = cfg.harness.trials_per_episode;

    // Warm-up: chart the design space with broad samples so the surrogate
    // has evidence in the same region the screening pool is drawn from.
    design::SurrogateGrid surrogate =
        design::SurrogateGrid::create(space, cfg.experiment.screen_bins);
    rng::Stream warm_stream = rng::Stream::keyed(seed, "e3-warm", 0);
    for (std::size_t i = 0; i < cfg.experiment.warmup_budget; ++i) {
        const auto theta = space.clamp(broad.sample(warm_stream));
        const auto tool = space.to_tool(theta, "warm");
        world::EnvSpec env = screen_env;
        env.seed = rng::derive_seed(seed, "e3-warm-env", i);
        const auto rr = world::evaluate_robust(tool, cfg.pull_task, env);
        surrogate.observe(theta, design::shaped_reward(rr, cfg.evaluator.shaping));
    }

    // Fixed pool from the broad sampler, ids padded so ranking ties resolve
    // in generation order.
    std::vector<design::DesignCandidate> pool;
    rng::Stream pool_stream = rng::Stream::keyed(seed, "e3-pool", 0);
    for (std::size_t i = 0; i < cfg.experiment.pool_size; ++i) {
        design::DesignCandidate cand;
        cand.theta = space.clamp(broad.sample(pool_stream));
        std::string id = std::to_string(i);
        while (id.size() < 4) id.insert(id.begin(), '0');
        cand.tool = space.to_tool(cand.theta, "pool-" + id);
        cand.raw_confidence = surrogate.confidence_mass(cand.theta);
        cand.confidence = cfg.finetune.calibration.apply(cand.raw_confidence);
        cand.epistemic = surrogate.epistemic(cand.theta);
        cand.predicted_reward = surrogate.predicted_reward(cand.theta);
        cand.sample_index = i;
        pool.push_back(std::move(cand));
    }

    const auto ranked =
        evaluator::filter_rank(pool, cfg.finetune.calibration, cfg.experiment.pool_size);
    std::map<std::string, std::size_t> rank_of;
    for (std::size_t r = 0; r < ranked.size(); ++r) rank_of[ranked[r].tool.id] = r + 1;

    // One shared measurement per candidate.
    std::vector<io::EpisodeRecord> records;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        world::EnvSpec env = screen_env;
        env.seed = rng::derive_seed(seed, "e3-eval", i);
        const auto rr = world::evaluate_robust(pool[i].tool, cfg.pull_task, env);

        io::EpisodeRecord r;
        r.seed = seed;
        r.episode = i + 1; // generation (exhaustive) order
        r.arm = "pool";
        r.x = static_cast<double>(rank_of.at(pool[i].tool.id)); // ranked order
        r.tool = pool[i].tool.id;
        r.outcome = rr.success_rate >= cfg.harness.success_rate_threshold ? "success" : "miss";
        r.success = r.outcome == "success";
        r.success_rate = rr.success_rate;
        r.perf = rr.mean_perf;
        r.reward = pool[i].confidence; // calibrated screening confidence
        r.report = missing_report(r.episode, "not-applicable");
        records.push_back(std::move(r));
    }
    return records;
}

// First-success position pair (ranked, exhaustive) for one e3 seed's rows.
struct ScreeningCounts {
    std::size_t ranked = 0;     // 0 when no candidate succeeded
    std::size_t exhaustive = 0;
};

inline ScreeningCounts screening_counts(const std::vector<io::EpisodeRecord>& seed_records) {
    ScreeningCounts out;
    for (const auto& r : seed_records) {
        if (!r.success) continue;
        const auto rank = static_cast<std::size_t>(r.x);
        if (out.ranked == 0 || rank < out.ranked) out.ranked = rank;
        if (out.exhaustive == 0 || r.episode < out.exhaustive) {
            out.exhaustive = static_cast<std::size_t>(r.episode);
        }
    }
    return out;
}

// e4: a surrogate warmed on a noiseless world states its confidence about
// candidates that are then tested under execution noise — systematically
// overconfident, which temperature fitting corrects on held-out samples.
inline std::vector<io::EpisodeRecord> run_e4_seed(const io::AppConfig& cfg, std::uint64_t seed) {
    const design::ParamSpace space{cfg.finetune.segments, cfg.bounds};

    world::EnvSpec clean_env; // noiseless warm-up
    clean_env.trials = 1;
    clean_env.seed = rng::derive_seed(seed, "e4-warm-env", 0);
    const auto warm = design::finetune_generative(
        design::GenerativeDesignModel::broad(space), design::SurrogateGrid::create(space),
        cfg.pull_task, clean_env, cfg.controller, cfg.experiment.warmup_budget, cfg.finetune,
        rng::derive_seed(seed, "e4-warmup", 0));

    std::vector<io::EpisodeRecord> records;
    rng::Stream sample_stream = rng::Stream::keyed(seed, "e4-sample", 0);
    for (std::size_t i = 0; i < cfg.experiment.calibration_samples; ++i) {
        design::DesignCandidate cand;
        cand.theta = space.clamp(warm.model.sample(sample_stream));
        std::string id = std::to_string(i);
        while (id.size() < 4) id.insert(id.begin(), '0');
        cand.tool = space.to_tool(cand.theta, "cal-" + id);

        world::EnvSpec noisy = cfg.env;
        noisy.object_noise = std::max(noisy.object_noise, 0.15);
        noisy.actuation_noise = std::max(noisy.actuation_noise, 0.15);
        noisy.trials = cfg.experiment.calibration_trials;
        noisy.seed = rng::derive_seed(seed, "e4-eval", i);
        const auto rr = world::evaluate_robust(cand.tool, cfg.pull_task, noisy);

        io::EpisodeRecord r;
        r.seed = seed;
        r.episode = i + 1;
        r.arm = "calibration";
        r.x = warm.surrogate.confidence_mass(cand.theta); // stated confidence
        r.tool = cand.tool.id;
        r.outcome = rr.success_rate >= cfg.harness.success_rate_threshold ? "success" : "miss";
        r.success = r.outcome == "success";
        r.success_rate = rr.success_rate;
        r.perf = rr.mean_perf;
        r.reward = design::shaped_reward(rr, cfg.evaluator.shaping);
        r.report = missing_report(r.episode, "not-applicable");
        records.push_back(std::move(r));
    }
    return records;
}

// Holdout ECE before/after temperature fitting for one e4 seed's rows.
// fit_temperature trains on even-indexed samples; the odd half is held out.
struct CalibrationOutcome {
    conf::CalibrationModel model;
    double ece_before = 0.0;
    double ece_after = 0.0;
};

inline CalibrationOutcome calibration_outcome(const std::vector<io::EpisodeRecord>& seed_records,
                                              std::size_t bins = 10) {
    std::vector<conf::CalibrationSample> samples;
    samples.reserve(seed_records.size());
    for (const auto& r : seed_records) samples.push_back({r.x, r.success});

    CalibrationOutcome out;
    out.model = conf::fit_temperature(samples);
    std::vector<conf::CalibrationSample> holdout_raw;
    std::vector<conf::CalibrationSample> holdout_cal;
    for (std::size_t i = 1; i < samples.size(); i += 2) {
        holdout_raw.push_back(samples[i]);
        holdout_cal.push_back({out.model.apply(samples[i].confidence), samples[i].success});
    }
    out.ece_before = conf::ece(holdout_raw, bins);
    out.ece_after = conf::ece(holdout_cal, bins);
    return out;
}

// e5: budgeted fine-tuning with the epistemic acquisition term versus the
// eta_e = 0 ablation; rows log every evaluation in order.
inline std::vector<io::EpisodeRecord> run_e5_seed(const io::AppConfig& cfg, std::uint64_t seed) {
    const design::ParamSpace space{cfg.finetune.segments, cfg.bounds};
    std::vector<io::EpisodeRecord> records;
    const std::array<std::pair<const char*, double>, 2> arms{
        {{"acquisition", cfg.finetune.eta_epistemic}, {"ablation", 0.0}}};

    for (std::size_t a = 0; a < arms.size(); ++a) {
        design::FinetuneConfig fcfg = cfg.finetune;
        fcfg.eta_epistemic = arms[a].second;
        world::EnvSpec env = cfg.env;
        env.trials = cfg.harness.trials_per_episode;
        env.seed = rng::derive_seed(seed, "e5-env", a);
        const auto res = design::finetune_generative(
            design::GenerativeDesignModel::broad(space), design::SurrogateGrid::create(space),
            cfg.pull_task, env, cfg.controller, cfg.experiment.finetune_budget, fcfg,
            rng::derive_seed(seed, "e5", a));

        double best_rate = 0.0;
        for (std::size_t i = 0; i < res.evaluated.size(); ++i) {
            const auto& cand = res.evaluated[i];
            best_rate = std::max(best_rate, cand.measured_success);
            io::EpisodeRecord r;
            r.seed = seed;
            r.episode = a * cfg.experiment.finetune_budget + i + 1;
            r.arm = arms[a].first;
            r.x = static_cast<double>(i + 1); // evaluation index within the arm
            r.tool = cand.tool.id;
            r.success = cand.measured_success >= cfg.experiment.target_success;
            r.outcome = r.success ? "success" : "miss";
            r.success_rate = cand.measured_success;
            r.perf = best_rate; // best robust success rate so far
            r.reward = cand.measured_reward;
            r.report = missing_report(r.episode, "not-applicable");
            records.push_back(std::move(r));
        }
    }
    return records;
}

// Evaluations needed until a candidate first reaches the target success
// rate, per arm (0 = never reached within budget).
inline std::map<std::string, std::size_t> evaluations_to_target(
    const std::vector<io::EpisodeRecord>& seed_records) {
    std::map<std::string, std::size_t> out;
    for (const auto& r : seed_records) {
        auto [it, inserted] = out.try_emplace(r.arm, 0);
        if (it->second == 0 && r.success) it->second = static_cast<std::size_t>(r.x);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Experiment driver
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names{"e1", "e2", "e3", "e4", "e5"};
    return names;
}

inline std::vector<io::EpisodeRecord> run_experiment_seed(const std::string& experiment,
                                                          const io::AppConfig& cfg,
                                                          std::uint64_t seed) {
    if (experiment == "e1") return run_e1_seed(cfg, seed);
    if (experiment == "e2") return run_e2_seed(cfg, seed);
    if (experiment == "e3") return run_e3_seed(cfg, seed);
    if (experiment == "e4") return run_e4_seed(cfg, seed);
    if (experiment == "e5") return run_e5_seed(cfg, seed);
    throw ConfigError("experiment: unknown id '" + experiment + "' (expected e1..e5)");
}

namespace detail {

// Mean of y grouped by (arm, x), ordered by x — the generic chart reduction.
inline std::vector<io::PlotSeries> mean_by_arm_x(const std::vector<io::EpisodeRecord>& records,
                                                 double (*y_of)(const io::EpisodeRecord&)) {
    std::map<std::string, std::map<double, std::pair<double, std::size_t>>> acc;
    for (const auto& r : records) {
        auto& cell = acc[r.arm][r.x];
        cell.first += y_of(r);
        cell.second += 1;
    }
    std::vector<io::PlotSeries> series;
    for (const auto& [arm, by_x] : acc) {
        io::PlotSeries s;
        s.name = arm;
        for (const auto& [x, cell] : by_x) {
            s.points.emplace_back(x, cell.first / static_cast<double>(cell.second));
        }
        series.push_back(std::move(s));
    }
    return series;
}

inline std::vector<io::EpisodeRecord> records_of_seed(const std::vector<io::EpisodeRecord>& all,
                                                      std::uint64_t seed) {
    std::vector<io::EpisodeRecord> out;
    for (const auto& r : all) {
        if (r.seed == seed) out.push_back(r);
    }
    return out;
}

} // namespace detail

// Builds the per-experiment summary chart from the merged records.
inline std::string render_experiment_plot(const std::string& experiment,
                                          const io::AppConfig& cfg,
                                          const std::vector<io::EpisodeRecord>& records) {
    const auto rate = [](const io::EpisodeRecord& r) { return r.success_rate; };

    if (experiment == "e1") {
        return io::render_plot_svg("Robustness sweep: success rate vs execution noise",
                                   "noise sigma", "success rate",
                                   detail::mean_by_arm_x(records, rate));
    }
    if (experiment == "e2") {
        auto series = detail::mean_by_arm_x(
            records, [](const io::EpisodeRecord& r) { return r.success ? 1.0 : 0.0; });
        io::PlotSeries impasses;
        impasses.name = "impasse";
        auto by_x = detail::mean_by_arm_x(
            records, [](const io::EpisodeRecord& r) { return r.impasse ? 1.0 : 0.0; });
        if (!by_x.empty()) {
            impasses.points = by_x.front().points;
            series.push_back(std::move(impasses));
        }
        return io::render_plot_svg("Impasse-driven invention: success by episode", "episode",
                                   "rate over seeds", series);
    }
    if (experiment == "e3") {
        io::PlotSeries ranked{"ranked", {}};
        io::PlotSeries exhaustive{"exhaustive", {}};
        for (std::uint64_t seed : cfg.experiment.seeds) {
            const auto counts = harness::screening_counts(detail::records_of_seed(records, seed));
            ranked.points.emplace_back(static_cast<double>(seed),
                                       static_cast<double>(counts.ranked));
            exhaustive.points.emplace_back(static_cast<double>(seed),
                                           static_cast<double>(counts.exhaustive));
        }
        return io::render_plot_svg("Screening: evaluations to first success", "seed",
                                   "evaluations", {ranked, exhaustive});
    }
    if (experiment == "e4") {
        // Reliability diagram on the held-out half, before vs after fitting.
        io::PlotSeries before{"before", {}};
        io::PlotSeries after{"after", {}};
        constexpr std::size_t bins = 10;
        std::array<std::pair<double, std::size_t>, bins> raw{};
        std::array<std::pair<double, std::size_t>, bins> cal{};
        std::array<std::pair<double, double>, bins> conf_sum{};
        for (std::uint64_t seed : cfg.experiment.seeds) {
            const auto seed_records = detail::records_of_seed(records, seed);
            const auto fit = harness::calibration_outcome(seed_records);
            for (std::size_t i = 1; i < seed_records.size(); i += 2) {
                const auto& r = seed_records[i];
                const double c_raw = r.x;
                const double c_cal = fit.model.apply(r.x);
                const auto b_raw = std::min(bins - 1, static_cast<std::size_t>(c_raw * bins));
                const auto b_cal = std::min(bins - 1, static_cast<std::size_t>(c_cal * bins));
                raw[b_raw].first += r.success ? 1.0 : 0.0;
                raw[b_raw].second += 1;
                conf_sum[b_raw].first += c_raw;
                cal[b_cal].first += r.success ? 1.0 : 0.0;
                cal[b_cal].second += 1;
                conf_sum[b_cal].second += c_cal;
            }
        }
        for (std::size_t b = 0; b < bins; ++b) {
            if (raw[b].second > 0) {
                before.points.emplace_back(conf_sum[b].first / raw[b].second,
                                           raw[b].first / raw[b].second);
            }
            if (cal[b].second > 0) {
                after.points.emplace_back(conf_sum[b].second / cal[b].second,
                                          cal[b].first / cal[b].second);
            }
        }
        return io::render_plot_svg("Reliability on held-out samples", "stated confidence",
                                   "empirical success", {before, after});
    }
    // e5: best success rate so far vs evaluations spent.
    return io::render_plot_svg("Acquisition ablation: best design vs budget", "evaluations",
                               "best robust success",
                               detail::mean_by_arm_x(records, [](const io::EpisodeRecord& r) {
                                   return r.perf;
                               }));
}

struct ExperimentResult {
    std::string experiment;
    std::vector<io::EpisodeRecord> records;
    std::filesystem::path episodes_path;
    std::filesystem::path summary_path;
    std::filesystem::path plot_path;
};

// Runs every seed, merges the per-seed buffers in seed order, and writes the
// three artifacts. The output directory is validated before any computation.
inline ExperimentResult run_experiment(const std::string& experiment, const io::AppConfig& cfg,
                                       const std::filesystem::path& out_dir) {
    cfg.validate();
    if (std::find(experiment_names().begin(), experiment_names().end(), experiment) ==
        experiment_names().end()) {
        throw ConfigError("experiment: unknown id '" + experiment + "' (expected e1..e5)");
    }
    io::ensure_writable_dir(out_dir);

    ExperimentResult result;
    result.experiment = experiment;
    for (std::uint64_t seed : cfg.experiment.seeds) {
        auto seed_records = run_experiment_seed(experiment, cfg, seed);
        for (auto& r : seed_records) r.seed = seed;
        result.records.insert(result.records.end(),
                              std::make_move_iterator(seed_records.begin()),
                              std::make_move_iterator(seed_records.end()));
    }

    result.episodes_path = out_dir / "episodes.jsonl";
    result.summary_path = out_dir / "summary.csv";
    result.plot_path = out_dir / "plot.svg";
    io::write_episodes_jsonl(result.episodes_path, result.records);
    io::write_summary_csv(result.summary_path, result.records);
    io::write_text_file(result.plot_path, render_experiment_plot(experiment, cfg, result.records));
    return result;
}

} // namespace toolforge::harness
