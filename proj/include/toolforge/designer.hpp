#pragma once
// Generative side of the loop: population-based tool design over a bounded
// parameter box, Bayesian structure learning over affordance features,
// discovery of affordance bundles from the world model, and fine-tuning of
// a diagonal-Gaussian design sampler under a confidence-modulated trust
// region with a hard symmetric-KL cap.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "toolforge/confidence.hpp"
#include "toolforge/controller.hpp"
#include "toolforge/errors.hpp"
#include "toolforge/pomdp.hpp"
#include "toolforge/rng.hpp"
#include "toolforge/toyworld.hpp"

namespace toolforge::design {

// ---------------------------------------------------------------------------
// Affordance templates: the fixed geometry each tag contributes when a
// discovered bundle is instantiated as a tool. Segments are concatenated in
// canonical (alphabetical) tag order; all four together exactly fill the
// default length budget.
// ---------------------------------------------------------------------------

struct AffordanceTemplate {
    double length = 0.0;
    double bend = 0.0;
};

inline const std::map<std::string, AffordanceTemplate>& affordance_templates() {
    static const std::map<std::string, AffordanceTemplate> table{
        {"extend", {0.8, 0.0}},
        {"hook", {0.2, std::numbers::pi / 3.0}},
        {"push", {0.4, 0.0}},
        {"wedge", {0.2, -std::numbers::pi / 4.0}},
    };
    return table;
}

inline world::ToolSpec instantiate_combo(const std::set<std::string>& combo) {
    if (combo.empty()) throw ValidationError("instantiate_combo: combo must be non-empty");
    world::ToolSpec tool;
    tool.id = world::combo_key(combo);
    tool.affordances = combo;
    for (const auto& tag : combo) {
        const auto it = affordance_templates().find(tag);
        if (it == affordance_templates().end()) {
            throw ValidationError("instantiate_combo: no template for affordance '" + tag + "'");
        }
        tool.segments.push_back({it->second.length, it->second.bend});
    }
    return tool;
}

// ---------------------------------------------------------------------------
// Parameter space: tools with a fixed segment count N are points
// theta = (L_1..L_N, phi_1..phi_N) in a bounded box.
// ---------------------------------------------------------------------------

struct ParamSpace {
    std::size_t segments = 2;
    world::ToolBounds bounds;

    std::size_t dim() const { return 2 * segments; }

    void validate() const {
        bounds.validate();
        if (segments < 1 || segments > bounds.max_segments) {
            throw ValidationError("ParamSpace: segment count out of range");
        }
    }

    // Clamps lengths and bends to their boxes, then rescales lengths to the
    // budget, so every clamped point is a valid tool.
    std::vector<double> clamp(std::vector<double> theta) const {
        if (theta.size() != dim()) throw ValidationError("ParamSpace: wrong parameter dimension");
        double total = 0.0;
        for (std::size_t i = 0; i < segments; ++i) {
            theta[i] = std::clamp(theta[i], 0.0, bounds.max_segment_length);
            total += theta[i];
        }
        if (total > bounds.length_budget) {
            const double scale = bounds.length_budget / total;
            for (std::size_t i = 0; i < segments; ++i) theta[i] *= scale;
        }
        for (std::size_t i = segments; i < dim(); ++i) {
            theta[i] = std::clamp(theta[i], -bounds.max_bend, bounds.max_bend);
        }
        return theta;
    }

    world::ToolSpec to_tool(const std::vector<double>& theta, std::string id) const {
        if (theta.size() != dim()) throw ValidationError("ParamSpace: wrong parameter dimension");
        world::ToolSpec tool;
        tool.id = std::move(id);
        for (std::size_t i = 0; i < segments; ++i) {
            tool.segments.push_back({theta[i], theta[segments + i]});
        }
        tool.validate(bounds);
        return tool;
    }
};

// Diagonal-Gaussian sampler over the parameter box.
struct GenerativeDesignModel {
    std::vector<double> mu;
    std::vector<double> sigma;

    void validate(std::size_t dim) const {
        if (mu.size() != dim || sigma.size() != dim) {
            throw ValidationError("GenerativeDesignModel: dimension mismatch");
        }
        for (double s : sigma) {
            if (!(s > 0.0)) throw ValidationError("GenerativeDesignModel: sigma entries must be > 0");
        }
    }

    std::vector<double> sample(rng::Stream& stream) const {
        std::vector<double> theta(mu.size());
        for (std::size_t i = 0; i < mu.size(); ++i) {
            theta[i] = mu[i] + sigma[i] * stream.gaussian();
        }
        return theta;
    }

    // A broad starting distribution centered on mid-box straight tools.
    static GenerativeDesignModel broad(const ParamSpace& space) {
        space.validate();
        GenerativeDesignModel g;
        g.mu.assign(space.dim(), 0.0);
        g.sigma.assign(space.dim(), 0.0);
        for (std::size_t i = 0; i < space.segments; ++i) {
            g.mu[i] = space.bounds.max_segment_length / 2.0;
            g.sigma[i] = space.bounds.max_segment_length / 2.0;
            g.mu[space.segments + i] = 0.0;
            g.sigma[space.segments + i] = space.bounds.max_bend / 2.0;
        }
        return g;
    }
};

// Symmetric KL divergence between diagonal Gaussians.
inline double symmetric_kl(const GenerativeDesignModel& a, const GenerativeDesignModel& b) {
    if (a.mu.size() != b.mu.size()) throw ValidationError("symmetric_kl: dimension mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < a.mu.size(); ++i) {
        const double va = a.sigma[i] * a.sigma[i];
        const double vb = b.sigma[i] * b.sigma[i];
        const double d2 = (a.mu[i] - b.mu[i]) * (a.mu[i] - b.mu[i]);
        total += 0.5 * ((va + d2) / vb + (vb + d2) / va) - 1.0;
    }
    return total;
}

// ---------------------------------------------------------------------------
// Cross-entropy-method design
// ---------------------------------------------------------------------------

struct DesignConfig {
    double beta = 0.0;        // weight of the control-confidence term in J
    std::size_t population = 32;
    double elite_frac = 0.25;
    std::size_t iterations = 15;
    double noise_floor = 0.02; // per-dimension lower bound on sigma
    std::size_t segments = 2;
    world::ToolBounds bounds;
    double control_scale = 1.0; // squash scale of the control channel
    std::optional<double> control_entropy_reference;

    std::size_t elite_count() const {
        return static_cast<std::size_t>(
            std::ceil(elite_frac * static_cast<double>(population)));
    }

    void validate() const {
        if (population < 2) throw ConfigError("DesignConfig: population must be >= 2");
        if (!(elite_frac > 0.0)) throw ConfigError("DesignConfig: elite_frac must be > 0");
        if (elite_count() > population) {
            throw ConfigError("DesignConfig: elite count exceeds population");
        }
        if (iterations < 1) throw ConfigError("DesignConfig: iterations must be >= 1");
        if (!(noise_floor >= 0.0)) throw ConfigError("DesignConfig: noise_floor must be >= 0");
        if (!(beta >= 0.0)) throw ConfigError("DesignConfig: beta must be >= 0");
        ParamSpace{segments, bounds}.validate();
    }
};

struct CemIterationStats {
    std::size_t iteration = 0;
    double best_j = 0.0; // best-ever after this iteration
    double mean_j = 0.0; // population mean this iteration
};

struct CemResult {
    world::ToolSpec best_tool;
    std::vector<double> best_theta;
    double best_j = 0.0;
    double best_perf = 0.0;
    double best_control_confidence = 0.0;
    std::vector<CemIterationStats> trace;
    GenerativeDesignModel final_model;
};

// J(theta) = mean perf under the perturbation protocol + beta * control
// confidence. Fully deterministic for a fixed seed. An explicit initial
// sampler narrows the search to a local refinement (e.g. around a template).
inline CemResult cem_design(const world::TaskSpec& task, const world::EnvSpec& env,
                            const ctrl::ControllerParams& ctrl_params, const DesignConfig& cfg,
                            std::uint64_t seed,
                            const GenerativeDesignModel* initial = nullptr) {
    cfg.validate();
    task.validate();
    env.validate();
    ctrl_params.validate();
    const ParamSpace space{cfg.segments, cfg.bounds};
    const double h_ref =
        cfg.control_entropy_reference.value_or(ctrl::default_control_entropy_reference());

    GenerativeDesignModel g = initial ? *initial : GenerativeDesignModel::broad(space);
    g.validate(space.dim());
    CemResult out;
    out.best_j = -std::numeric_limits<double>::infinity();

    const std::size_t n_elite = cfg.elite_count();
    for (std::size_t iter = 0; iter < cfg.iterations; ++iter) {
        rng::Stream stream = rng::Stream::keyed(seed, "cem-iter", iter);
        std::vector<std::vector<double>> thetas(cfg.population);
        std::vector<double> scores(cfg.population);
        double mean_j = 0.0;
        for (std::size_t k = 0; k < cfg.population; ++k) {
            thetas[k] = space.clamp(g.sample(stream));
            const world::ToolSpec tool = space.to_tool(thetas[k], "cem");
            world::EnvSpec trial_env = env;
            trial_env.seed = rng::derive_seed(seed, "cem-eval", iter * cfg.population + k);
            const double perf = world::evaluate_robust(tool, task, trial_env).mean_perf;
            const double confidence =
                ctrl::control_confidence(ctrl::control_precision(tool, ctrl_params), h_ref,
                                         cfg.control_scale)
                    .value;
            scores[k] = perf + cfg.beta * confidence;
            mean_j += scores[k];
            if (scores[k] > out.best_j) {
                out.best_j = scores[k];
                out.best_theta = thetas[k];
                out.best_perf = perf;
                out.best_control_confidence = confidence;
            }
        }
        mean_j /= static_cast<double>(cfg.population);

        // Refit to the elite set (stable order: score descending, then index).
        std::vector<std::size_t> order(cfg.population);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
        for (std::size_t d = 0; d < space.dim(); ++d) {
            double mean = 0.0;
            for (std::size_t e = 0; e < n_elite; ++e) mean += thetas[order[e]][d];
            mean /= static_cast<double>(n_elite);
            double var = 0.0;
            for (std::size_t e = 0; e < n_elite; ++e) {
                const double diff = thetas[order[e]][d] - mean;
                var += diff * diff;
            }
            var /= static_cast<double>(n_elite);
            g.mu[d] = mean;
            g.sigma[d] = std::max(std::sqrt(var), cfg.noise_floor);
        }
        out.trace.push_back({iter, out.best_j, mean_j});
    }

    out.best_tool = space.to_tool(out.best_theta, "cem-best");
    out.final_model = g;
    return out;
}

// ---------------------------------------------------------------------------
// Structure learning: does an affordance feature earn its keep?
// ---------------------------------------------------------------------------

namespace detail {

inline double log_multivariate_beta(const std::vector<double>& alpha) {
    double sum = 0.0, total = 0.0;
    for (double a : alpha) {
        sum += std::lgamma(a);
        total += a;
    }
    return sum - std::lgamma(total);
}

// Dirichlet-multinomial log marginal likelihood of observed counts n under a
// symmetric prior: ln B(prior + n) - ln B(prior).
inline double log_evidence(const std::vector<double>& observed, double prior_count) {
    std::vector<double> posterior(observed.size());
    for (std::size_t i = 0; i < observed.size(); ++i) posterior[i] = prior_count + observed[i];
    const std::vector<double> prior(observed.size(), prior_count);
    return log_multivariate_beta(posterior) - log_multivariate_beta(prior);
}

} // namespace detail

struct PruneDecision {
    bool keep = false;
    double delta = 0.0; // split-model evidence minus pooled-model evidence, nats
};

// Compares two explanations of the recorded outcomes: one outcome table per
// (feature present?, state) versus one per state. The feature is kept only
// when splitting by it gains at least `threshold` nats of log evidence.
inline PruneDecision prune_affordance_feature(const pomdp::WorldModel& model,
                                              const std::string& feature, double threshold) {
    if (!world::is_known_affordance(feature)) {
        throw ValidationError("prune_affordance_feature: unknown affordance '" + feature + "'");
    }
    bool seen = false;
    for (const auto& [key, cells] : model.counts) {
        (void)cells;
        const std::string needle = feature;
        // Combo keys are '+'-joined sorted tags; match the whole tag.
        std::size_t pos = 0;
        while ((pos = key.find(needle, pos)) != std::string::npos) {
            const bool starts = pos == 0 || key[pos - 1] == '+';
            const bool ends = pos + needle.size() == key.size() || key[pos + needle.size()] == '+';
            if (starts && ends) {
                seen = true;
                break;
            }
            pos += 1;
        }
        if (seen) break;
    }
    if (!seen) {
        throw ValidationError("prune_affordance_feature: feature '" + feature
                              + "' occurs in no recorded combo");
    }

    const std::size_t n_outcomes = model.outcomes.size();
    const std::size_t n_states = model.states.size();
    // Observed counts pooled by (group, state): group 0 = feature absent,
    // group 1 = feature present, group 2 = everything (pooled model).
    std::vector<std::vector<double>> grouped(3 * n_states,
                                             std::vector<double>(n_outcomes, 0.0));
    for (const auto& [key, cells] : model.counts) {
        bool has_feature = false;
        std::size_t pos = 0;
        while ((pos = key.find(feature, pos)) != std::string::npos) {
            const bool starts = pos == 0 || key[pos - 1] == '+';
            const bool ends = pos + feature.size() == key.size() || key[pos + feature.size()] == '+';
            if (starts && ends) {
                has_feature = true;
                break;
            }
            pos += 1;
        }
        for (std::size_t s = 0; s < n_states; ++s) {
            for (std::size_t o = 0; o < n_outcomes; ++o) {
                const double observed = cells[s].alpha[o] - model.prior_count;
                if (observed <= 0.0) continue;
                grouped[(has_feature ? 1 : 0) * n_states + s][o] += observed;
                grouped[2 * n_states + s][o] += observed;
            }
        }
    }

    double split = 0.0, pooled = 0.0;
    for (std::size_t s = 0; s < n_states; ++s) {
        split += detail::log_evidence(grouped[s], model.prior_count);
        split += detail::log_evidence(grouped[n_states + s], model.prior_count);
        pooled += detail::log_evidence(grouped[2 * n_states + s], model.prior_count);
    }

    PruneDecision out;
    out.delta = split - pooled;
    out.keep = out.delta >= threshold;
    return out;
}

// ---------------------------------------------------------------------------
// Discovery: pick the affordance bundle the world model expects to pay off.
// ---------------------------------------------------------------------------

struct DiscoveryResult {
    std::set<std::string> combo;
    world::ToolSpec tool;
    conf::ConfidenceScore decision; // confidence of the choice among all bundles
    std::vector<std::set<std::string>> candidates; // canonical enumeration order
    std::vector<double> values;                    // Q per candidate
};

// Enumerates every non-empty subset of the library with size <= max_size in
// canonical order (smaller first, then lexicographic).
inline std::vector<std::set<std::string>> enumerate_combos(std::vector<std::string> library,
                                                           std::size_t max_size) {
    if (library.empty()) throw ValidationError("enumerate_combos: library must be non-empty");
    if (max_size < 1) throw ValidationError("enumerate_combos: max_size must be >= 1");
    std::sort(library.begin(), library.end());
    if (std::adjacent_find(library.begin(), library.end()) != library.end()) {
        throw ValidationError("enumerate_combos: duplicate affordance in library");
    }
    std::vector<std::set<std::string>> out;
    const std::size_t n = library.size();
    for (std::size_t size = 1; size <= std::min(max_size, n); ++size) {
        // Lexicographic combinations of `size` indices out of n.
        std::vector<std::size_t> idx(size);
        std::iota(idx.begin(), idx.end(), 0);
        for (;;) {
            std::set<std::string> combo;
            for (std::size_t i : idx) combo.insert(library[i]);
            out.push_back(std::move(combo));
            std::size_t k = size;
            while (k > 0 && idx[k - 1] == n - size + k - 1) --k;
            if (k == 0) break;
            idx[k - 1] += 1;
            for (std::size_t j = k; j < size; ++j) idx[j] = idx[j - 1] + 1;
        }
    }
    return out;
}

// Scores every candidate bundle by expected reward under the belief, using
// prior cells for bundles the model has not seen. Bundles listed in
// `exclude` (e.g. tools already in the toolbox) are skipped so discovery
// proposes something new.
inline DiscoveryResult discover_tool(const std::vector<std::string>& library,
                                     const pomdp::Belief& belief, const pomdp::WorldModel& model,
                                     const pomdp::PolicyConfig& cfg, std::size_t max_size,
                                     const std::vector<std::set<std::string>>& exclude = {}) {
    std::vector<std::set<std::string>> combos = enumerate_combos(library, max_size);
    if (!exclude.empty()) {
        std::erase_if(combos, [&](const std::set<std::string>& c) {
            return std::find(exclude.begin(), exclude.end(), c) != exclude.end();
        });
    }
    if (combos.empty()) {
        throw ValidationError("discover_tool: every candidate bundle is excluded");
    }

    pomdp::WorldModel scored = model;
    for (const auto& combo : combos) scored.ensure_combo(combo);
    const pomdp::PolicyResult policy = pomdp::policy_posterior(belief, combos, scored, cfg);

    DiscoveryResult out;
    out.combo = combos[policy.best];
    out.tool = instantiate_combo(out.combo);
    out.decision = policy.decision;
    out.candidates = std::move(combos);
    out.values = policy.values;
    return out;
}

// ---------------------------------------------------------------------------
// Surrogate grid: binned-reward Dirichlets over a projection of the box.
// ---------------------------------------------------------------------------

struct SurrogateGrid {
    ParamSpace space;
    std::size_t bins_per_dim = 6;
    std::size_t reward_bins = 8;
    double prior_count = 1.0;
    std::size_t projected_segments = 2; // cells live over the first segments
    std::vector<conf::DirichletParams> cells;

    static SurrogateGrid create(const ParamSpace& space, std::size_t bins_per_dim = 6,
                                std::size_t reward_bins = 8, double prior_count = 1.0) {
        space.validate();
        if (bins_per_dim < 1 || reward_bins < 2) {
            throw ConfigError("SurrogateGrid: need >= 1 bin per dimension and >= 2 reward bins");
        }
        if (!(prior_count > 0.0)) throw ConfigError("SurrogateGrid: prior_count must be > 0");
        SurrogateGrid g;
        g.space = space;
        g.bins_per_dim = bins_per_dim;
        g.reward_bins = reward_bins;
        g.prior_count = prior_count;
        g.projected_segments = std::min<std::size_t>(2, space.segments);
        std::size_t n_cells = 1;
        for (std::size_t d = 0; d < 2 * g.projected_segments; ++d) n_cells *= bins_per_dim;
        g.cells.assign(n_cells, conf::DirichletParams::symmetric(reward_bins, prior_count));
        return g;
    }

    std::size_t projected_dim() const { return 2 * projected_segments; }

    std::size_t cell_index(const std::vector<double>& theta) const {
        if (theta.size() != space.dim()) {
            throw ValidationError("SurrogateGrid: wrong parameter dimension");
        }
        std::size_t index = 0;
        for (std::size_t d = 0; d < projected_dim(); ++d) {
            const bool is_length = d < projected_segments;
            const std::size_t source = is_length ? d : space.segments + (d - projected_segments);
            const double lo = is_length ? 0.0 : -space.bounds.max_bend;
            const double hi = is_length ? space.bounds.max_segment_length : space.bounds.max_bend;
            const double t = std::clamp((theta[source] - lo) / (hi - lo), 0.0, 1.0);
            std::size_t bin = static_cast<std::size_t>(t * static_cast<double>(bins_per_dim));
            bin = std::min(bin, bins_per_dim - 1);
            index = index * bins_per_dim + bin;
        }
        return index;
    }

    double reward_bin_center(std::size_t b) const {
        return (static_cast<double>(b) + 0.5) / static_cast<double>(reward_bins);
    }

    // Expected reward under the cell's predictive distribution over bins.
    double predicted_reward(const std::vector<double>& theta) const {
        const conf::ProbVec mean = cells[cell_index(theta)].mean();
        double expected = 0.0;
        for (std::size_t b = 0; b < reward_bins; ++b) expected += mean.p[b] * reward_bin_center(b);
        return expected;
    }

    double epistemic(const std::vector<double>& theta) const {
        return conf::epistemic_aleatoric_decompose(cells[cell_index(theta)]).epistemic;
    }

    // Raw success confidence: predictive mass on reward bins whose center
    // clears the floor. An untrained cell with floor 0.5 scores exactly 0.5.
    double confidence_mass(const std::vector<double>& theta, double floor = 0.5) const {
        const conf::ProbVec mean = cells[cell_index(theta)].mean();
        double mass = 0.0;
        for (std::size_t b = 0; b < reward_bins; ++b) {
            if (reward_bin_center(b) >= floor) mass += mean.p[b];
        }
        return mass;
    }

    void observe(const std::vector<double>& theta, double reward, double weight = 1.0) {
        if (!(weight > 0.0)) throw ValidationError("SurrogateGrid: weight must be > 0");
        const double r = std::clamp(reward, 0.0, 1.0);
        std::size_t bin = static_cast<std::size_t>(r * static_cast<double>(reward_bins));
        bin = std::min(bin, reward_bins - 1);
        cells[cell_index(theta)].alpha[bin] += weight;
    }
};

// ---------------------------------------------------------------------------
// Candidate records and early discard
// ---------------------------------------------------------------------------

struct DesignCandidate {
    world::ToolSpec tool;
    std::vector<double> theta;
    double predicted_reward = 0.0;
    double raw_confidence = 0.0; // surrogate success mass before calibration
    double confidence = 0.0;     // calibrated
    double epistemic = 0.0;
    double measured_reward = 0.0;  // filled when actually evaluated
    double measured_success = 0.0; // robust success rate, likewise
    bool evaluated = false;
    bool valid = true;
    std::string violation; // non-empty iff invalid
    std::size_t iteration = 0;
    std::size_t sample_index = 0;
};

struct DiscardDecision {
    bool abort = false;
    std::string code; // "budget", "bounds", or "reach"; empty means continue
};

// Cheap per-segment checkpoint while a tool is being built: abort when the
// prefix is already invalid or when even a straight-line completion cannot
// bring the optimistic score above the floor.
inline DiscardDecision early_discard(const world::ToolSpec& prefix, const world::TaskSpec& task,
                                     const world::ToolBounds& bounds, double checkpoint_floor) {
    task.validate();
    bounds.validate();
    DiscardDecision out;
    if (prefix.total_length() > bounds.length_budget + 1e-9) {
        out.abort = true;
        out.code = "budget";
        return out;
    }
    for (const auto& seg : prefix.segments) {
        if (seg.length < 0.0 || seg.length > bounds.max_segment_length + 1e-9
            || std::abs(seg.bend) > bounds.max_bend + 1e-9) {
            out.abort = true;
            out.code = "bounds";
            return out;
        }
    }
    const double remaining = bounds.length_budget - prefix.total_length();
    const double tip_reach =
        world::forward_kinematics(prefix, world::Pose{0.0, 0.0, 0.0}).norm();
    const double attainable = task.reach_radius + tip_reach + remaining;
    const double gap = std::max(0.0, task.object.norm() - attainable);
    const double optimistic_score =
        std::exp(-gap * gap / (2.0 * task.score_width * task.score_width));
    if (optimistic_score < checkpoint_floor) {
        out.abort = true;
        out.code = "reach";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Confidence-modulated generative fine-tuning
// ---------------------------------------------------------------------------

struct FinetuneConfig {
    std::size_t population = 16; // candidates sampled per iteration
    double eval_frac = 0.5;      // fraction of the batch actually evaluated
    double eta_min = 0.1;
    double eta_max = 0.9;
    double kl_max = 0.5;         // per-iteration symmetric-KL cap
    double eta_epistemic = 1.0;  // acquisition weight on epistemic uncertainty
    double weight_temp = 0.2;    // refit weights are exp(reward / weight_temp)
    double shaping = 0.25;       // reward multiplier for unsuccessful trials
    double sigma_floor = 0.01;
    std::size_t segments = 2;
    world::ToolBounds bounds;
    conf::CalibrationModel calibration;      // applied to the incumbent's confidence
    std::optional<double> fixed_confidence;  // test override for c_eval

    std::size_t evals_per_iteration() const {
        const auto n = static_cast<std::size_t>(
            std::llround(eval_frac * static_cast<double>(population)));
        return std::max<std::size_t>(1, std::min(n, population));
    }

    void validate() const {
        if (population < 1) throw ConfigError("FinetuneConfig: population must be >= 1");
        if (!(eval_frac > 0.0 && eval_frac <= 1.0)) {
            throw ConfigError("FinetuneConfig: eval_frac must lie in (0,1]");
        }
        if (!(eta_min >= 0.0 && eta_max <= 1.0 && eta_min <= eta_max)) {
            throw ConfigError("FinetuneConfig: need 0 <= eta_min <= eta_max <= 1");
        }
        if (!(kl_max >= 0.0)) throw ConfigError("FinetuneConfig: kl_max must be >= 0");
        if (!(eta_epistemic >= 0.0)) throw ConfigError("FinetuneConfig: eta_epistemic must be >= 0");
        if (!(weight_temp > 0.0)) throw ConfigError("FinetuneConfig: weight_temp must be > 0");
        if (!(shaping >= 0.0 && shaping <= 1.0)) {
            throw ConfigError("FinetuneConfig: shaping must lie in [0,1]");
        }
        if (!(sigma_floor > 0.0)) throw ConfigError("FinetuneConfig: sigma_floor must be > 0");
        ParamSpace{segments, bounds}.validate();
        calibration.validate();
    }
};

struct FinetuneIterationStats {
    std::size_t iteration = 0;
    double best_reward = 0.0; // best-ever after this iteration
    double mean_reward = 0.0; // mean over the evaluated subset
    double kl_step = 0.0;     // symmetric KL actually taken
    double c_eval = 0.0;      // calibrated confidence driving the step size
    std::size_t evaluations_used = 0;
};

struct FinetuneResult {
    GenerativeDesignModel model;
    SurrogateGrid surrogate;
    DesignCandidate best;
    std::vector<FinetuneIterationStats> trace;
    std::vector<DesignCandidate> evaluated; // in evaluation order
    std::size_t evaluations_used = 0;
};

// Design reward of a robust evaluation: successful trials earn their perf,
// failed trials a shaped fraction of it.
inline double shaped_reward(const world::RobustResult& result, double shaping) {
    double sum = 0.0;
    for (const auto& trial : result.trials) {
        sum += trial.success ? trial.perf : shaping * trial.perf;
    }
    return result.trials.empty() ? 0.0 : sum / static_cast<double>(result.trials.size());
}

inline FinetuneResult finetune_generative(const GenerativeDesignModel& initial,
                                          const SurrogateGrid& surrogate_in,
                                          const world::TaskSpec& task, const world::EnvSpec& env,
                                          const ctrl::ControllerParams& ctrl_params,
                                          std::size_t budget, const FinetuneConfig& cfg,
                                          std::uint64_t seed) {
    cfg.validate();
    task.validate();
    env.validate();
    ctrl_params.validate();
    if (budget < cfg.population) {
        throw ConfigError("finetune_generative: budget must cover at least one population");
    }
    const ParamSpace space{cfg.segments, cfg.bounds};
    initial.validate(space.dim());

    FinetuneResult out;
    out.model = initial;
    out.surrogate = surrogate_in;
    out.best.measured_reward = -1.0;

    const std::size_t per_iter = cfg.evals_per_iteration();
    std::size_t eval_counter = 0;
    for (std::size_t iter = 0; out.evaluations_used < budget; ++iter) {
        rng::Stream stream = rng::Stream::keyed(seed, "finetune-iter", iter);

        // (1) sample a batch from G; (2) rank by acquisition = predicted
        // reward + eta_e * epistemic, so uncertain cells are tried sooner.
        std::vector<DesignCandidate> batch(cfg.population);
        for (std::size_t k = 0; k < cfg.population; ++k) {
            DesignCandidate& cand = batch[k];
            cand.theta = space.clamp(out.model.sample(stream));
            cand.tool = space.to_tool(cand.theta,
                                      "ft-" + std::to_string(iter) + "-" + std::to_string(k));
            cand.iteration = iter;
            cand.sample_index = k;
            cand.predicted_reward = out.surrogate.predicted_reward(cand.theta);
            cand.epistemic = out.surrogate.epistemic(cand.theta);
        }
        std::vector<std::size_t> order(cfg.population);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const double score_a =
                batch[a].predicted_reward + cfg.eta_epistemic * batch[a].epistemic;
            const double score_b =
                batch[b].predicted_reward + cfg.eta_epistemic * batch[b].epistemic;
            return score_a > score_b;
        });

        const std::size_t n_eval = std::min(per_iter, budget - out.evaluations_used);

        // (3) evaluate the selected candidates and update the surrogate.
        std::vector<std::size_t> evaluated;
        double mean_reward = 0.0;
        for (std::size_t e = 0; e < n_eval; ++e) {
            DesignCandidate& cand = batch[order[e]];
            world::EnvSpec trial_env = env;
            trial_env.seed = rng::derive_seed(seed, "finetune-eval", eval_counter++);
            const world::RobustResult rr = world::evaluate_robust(cand.tool, task, trial_env);
            cand.measured_reward = shaped_reward(rr, cfg.shaping);
            cand.measured_success = rr.success_rate;
            cand.evaluated = true;
            out.surrogate.observe(cand.theta, cand.measured_reward);
            mean_reward += cand.measured_reward;
            evaluated.push_back(order[e]);
            out.evaluated.push_back(cand);
            out.evaluations_used += 1;
            if (cand.measured_reward > out.best.measured_reward) {
                out.best = cand;
            }
        }
        mean_reward /= static_cast<double>(n_eval);

        // Incumbent confidence after this round's surrogate updates.
        out.best.raw_confidence = out.surrogate.confidence_mass(out.best.theta);
        out.best.confidence = cfg.calibration.apply(out.best.raw_confidence);
        const double c_eval = cfg.fixed_confidence.value_or(out.best.confidence);

        // (4) reward-weighted refit over the evaluated subset.
        GenerativeDesignModel refit = out.model;
        double weight_sum = 0.0;
        std::vector<double> weights(evaluated.size());
        for (std::size_t i = 0; i < evaluated.size(); ++i) {
            weights[i] = std::exp(batch[evaluated[i]].measured_reward / cfg.weight_temp);
            weight_sum += weights[i];
        }
        for (std::size_t d = 0; d < space.dim(); ++d) {
            double mean = 0.0;
            for (std::size_t i = 0; i < evaluated.size(); ++i) {
                mean += weights[i] * batch[evaluated[i]].theta[d];
            }
            mean /= weight_sum;
            double var = 0.0;
            for (std::size_t i = 0; i < evaluated.size(); ++i) {
                const double diff = batch[evaluated[i]].theta[d] - mean;
                var += weights[i] * diff * diff;
            }
            var /= weight_sum;
            refit.mu[d] = mean;
            refit.sigma[d] = std::max(std::sqrt(var), cfg.sigma_floor);
        }

        // (5) confidence-interpolated step toward the refit.
        const double eta = cfg.eta_min + (cfg.eta_max - cfg.eta_min) * c_eval;
        GenerativeDesignModel proposed = out.model;
        for (std::size_t d = 0; d < space.dim(); ++d) {
            proposed.mu[d] = (1.0 - eta) * out.model.mu[d] + eta * refit.mu[d];
            proposed.sigma[d] = std::max(
                (1.0 - eta) * out.model.sigma[d] + eta * refit.sigma[d], cfg.sigma_floor);
        }

        // (6) hard symmetric-KL cap, enforced by shrinking the blend. A zero
        // cap freezes the sampler exactly rather than chasing rounding noise.
        double t_ok = 0.0, t_hi = 1.0;
        if (cfg.kl_max == 0.0) {
            t_ok = 0.0;
        } else if (symmetric_kl(out.model, proposed) <= cfg.kl_max) {
            t_ok = 1.0;
        } else {
            for (int step = 0; step < 40; ++step) {
                const double t = 0.5 * (t_ok + t_hi);
                GenerativeDesignModel blend = out.model;
                for (std::size_t d = 0; d < space.dim(); ++d) {
                    blend.mu[d] = (1.0 - t) * out.model.mu[d] + t * proposed.mu[d];
                    blend.sigma[d] = std::max(
                        (1.0 - t) * out.model.sigma[d] + t * proposed.sigma[d], cfg.sigma_floor);
                }
                if (symmetric_kl(out.model, blend) <= cfg.kl_max) {
                    t_ok = t;
                } else {
                    t_hi = t;
                }
            }
        }
        GenerativeDesignModel next = out.model;
        for (std::size_t d = 0; d < space.dim(); ++d) {
            next.mu[d] = (1.0 - t_ok) * out.model.mu[d] + t_ok * proposed.mu[d];
            next.sigma[d] = std::max(
                (1.0 - t_ok) * out.model.sigma[d] + t_ok * proposed.sigma[d], cfg.sigma_floor);
        }
        const double kl_step = symmetric_kl(out.model, next);
        out.model = next;

        out.trace.push_back({iter, out.best.measured_reward, mean_reward, kl_step, c_eval,
                             out.evaluations_used});
    }
    return out;
}

} // namespace toolforge::design
