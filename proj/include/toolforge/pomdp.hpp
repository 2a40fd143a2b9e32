#pragma once
// Single-step belief-state world model: each episode applies one tool
// (an affordance bundle) and observes one outcome. Dirichlet counts per
// (affordance combo, hidden state) cell model the outcome distribution;
// the policy over combos is a softmax of expected reward under the belief.
// Decision and model-parameter confidences, plus the impasse rule that
// triggers tool invention, are derived from these posteriors.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "toolforge/confidence.hpp"
#include "toolforge/errors.hpp"
#include "toolforge/toyworld.hpp"

namespace toolforge::pomdp {

using Belief = conf::ProbVec;

inline constexpr double kLikelihoodFloor = 1e-12;

// Canonical ordering of affordance sets: smaller bundles first, then
// lexicographic on the canonical key. Used for every tie-break.
inline bool canonical_less(const std::set<std::string>& a, const std::set<std::string>& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    return world::combo_key(a) < world::combo_key(b);
}

struct WorldModel {
    std::vector<std::string> states;
    std::vector<std::string> outcomes;
    double prior_count = 1.0;
    // Canonical combo key -> one Dirichlet over outcomes per state
    // (aligned with the states vector).
    std::map<std::string, std::vector<conf::DirichletParams>> counts;

    static WorldModel create(std::vector<std::string> states_, std::vector<std::string> outcomes_,
                             double prior_count_ = 1.0) {
        WorldModel m;
        m.states = std::move(states_);
        m.outcomes = std::move(outcomes_);
        m.prior_count = prior_count_;
        m.validate();
        return m;
    }

    void validate() const {
        if (states.size() < 2) throw ValidationError("WorldModel: need at least two states");
        if (outcomes.size() < 2) throw ValidationError("WorldModel: need at least two outcomes");
        if (std::find(outcomes.begin(), outcomes.end(), "success") == outcomes.end()) {
            throw ValidationError("WorldModel: outcomes must include 'success'");
        }
        if (!(prior_count > 0.0)) throw ValidationError("WorldModel: prior_count must be > 0");
        for (const auto& [key, cells] : counts) {
            if (cells.size() != states.size()) {
                throw ValidationError("WorldModel: cell row for '" + key + "' has wrong state count");
            }
            for (const auto& cell : cells) {
                cell.validate();
                if (cell.size() != outcomes.size()) {
                    throw ValidationError("WorldModel: cell for '" + key + "' has wrong outcome count");
                }
            }
        }
    }

    std::size_t state_index(const std::string& label) const {
        for (std::size_t i = 0; i < states.size(); ++i) {
            if (states[i] == label) return i;
        }
        throw ValidationError("WorldModel: unknown state '" + label + "'");
    }

    std::size_t outcome_index(const std::string& label) const {
        for (std::size_t i = 0; i < outcomes.size(); ++i) {
            if (outcomes[i] == label) return i;
        }
        throw ValidationError("WorldModel: unknown outcome '" + label + "'");
    }

    bool has_combo(const std::set<std::string>& combo) const {
        return counts.count(world::combo_key(combo)) > 0;
    }

    conf::DirichletParams prior_cell() const {
        return conf::DirichletParams::symmetric(outcomes.size(), prior_count);
    }

    // Inserts prior cells for a combo if absent; tags must be known.
    void ensure_combo(const std::set<std::string>& combo) {
        if (combo.empty()) throw ValidationError("WorldModel: combo must be non-empty");
        for (const auto& tag : combo) {
            if (!world::is_known_affordance(tag)) {
                throw ValidationError("WorldModel: unknown affordance tag '" + tag + "'");
            }
        }
        const std::string key = world::combo_key(combo);
        if (counts.count(key) == 0) {
            counts.emplace(key, std::vector<conf::DirichletParams>(states.size(), prior_cell()));
        }
    }

    const std::vector<conf::DirichletParams>& cells(const std::set<std::string>& combo) const {
        const auto it = counts.find(world::combo_key(combo));
        if (it == counts.end()) {
            throw ValidationError("WorldModel: unknown combo '" + world::combo_key(combo) + "'");
        }
        return it->second;
    }

    // Posterior predictive outcome distribution for one (combo, state) cell.
    conf::ProbVec predictive(const std::set<std::string>& combo, std::size_t state) const {
        const auto& row = cells(combo);
        if (state >= row.size()) throw ValidationError("WorldModel: state index out of range");
        return row[state].mean();
    }
};

struct BeliefUpdateResult {
    Belief belief;
    bool uninformative = false; // all likelihoods hit the floor; belief returned unchanged
};

inline BeliefUpdateResult belief_update(const Belief& b, const std::set<std::string>& combo,
                                        const std::string& outcome, const WorldModel& model) {
    b.validate();
    if (b.size() != model.states.size()) {
        throw ValidationError("belief_update: belief dimension does not match model states");
    }
    const std::size_t o = model.outcome_index(outcome);
    const auto& row = model.cells(combo);

    std::vector<double> weighted(b.size());
    double sum = 0.0;
    for (std::size_t s = 0; s < b.size(); ++s) {
        const double lik = std::max(row[s].mean().p[o], kLikelihoodFloor);
        weighted[s] = b.p[s] * lik;
        sum += weighted[s];
    }
    BeliefUpdateResult out;
    if (sum <= kLikelihoodFloor * kLikelihoodFloor) {
        out.belief = b;
        out.uninformative = true;
        return out;
    }
    for (double& w : weighted) w /= sum;
    out.belief = Belief(std::move(weighted));
    return out;
}

struct PolicyConfig {
    double gamma = 20.0;                   // inverse temperature of the action softmax
    std::map<std::string, double> rewards; // outcome label -> utility

    void validate(const WorldModel& model) const {
        if (!(gamma >= 0.0)) throw ValidationError("PolicyConfig: gamma must be >= 0");
        for (const auto& outcome : model.outcomes) {
            if (rewards.count(outcome) == 0) {
                throw ValidationError("PolicyConfig: reward map missing outcome '" + outcome + "'");
            }
        }
    }
};

struct PolicyResult {
    conf::ProbVec q;              // action posterior over the given combos
    std::vector<double> values;   // expected reward Q per combo
    std::size_t best = 0;         // argmax index, canonical-order tie-break
    conf::ConfidenceScore decision;
};

inline PolicyResult policy_posterior(const Belief& b, const std::vector<std::set<std::string>>& combos,
                                     const WorldModel& model, const PolicyConfig& cfg) {
    if (combos.empty()) throw ValidationError("policy_posterior: need at least one combo");
    b.validate();
    cfg.validate(model);
    if (b.size() != model.states.size()) {
        throw ValidationError("policy_posterior: belief dimension does not match model states");
    }

    std::vector<double> reward_of(model.outcomes.size());
    for (std::size_t o = 0; o < model.outcomes.size(); ++o) {
        reward_of[o] = cfg.rewards.at(model.outcomes[o]);
    }

    PolicyResult out;
    out.values.resize(combos.size());
    for (std::size_t a = 0; a < combos.size(); ++a) {
        const auto& row = model.cells(combos[a]);
        double q_value = 0.0;
        for (std::size_t s = 0; s < b.size(); ++s) {
            if (b.p[s] == 0.0) continue;
            const conf::ProbVec pred = row[s].mean();
            double expected = 0.0;
            for (std::size_t o = 0; o < pred.size(); ++o) expected += pred.p[o] * reward_of[o];
            q_value += b.p[s] * expected;
        }
        out.values[a] = q_value;
    }

    // Stable softmax of gamma * Q.
    double max_q = out.values[0];
    for (double v : out.values) max_q = std::max(max_q, v);
    std::vector<double> weights(combos.size());
    double norm = 0.0;
    for (std::size_t a = 0; a < combos.size(); ++a) {
        weights[a] = std::exp(cfg.gamma * (out.values[a] - max_q));
        norm += weights[a];
    }
    for (double& w : weights) w /= norm;
    out.q = conf::ProbVec(std::move(weights));

    out.best = 0;
    for (std::size_t a = 1; a < combos.size(); ++a) {
        if (out.values[a] > out.values[out.best]
            || (out.values[a] == out.values[out.best]
                && canonical_less(combos[a], combos[out.best]))) {
            out.best = a;
        }
    }

    out.decision.channel = conf::Channel::decision;
    out.decision.raw_entropy = conf::entropy_categorical(out.q);
    out.decision.value = conf::confidence_from_entropy(out.decision.raw_entropy, combos.size());
    return out;
}

// Sigmoid-squash parameters for a differential-entropy channel. A reference
// left unset defaults to the entropy of an untrained (prior) cell, which
// maps a fresh model to confidence 0.5 exactly.
struct EntropySquash {
    std::optional<double> entropy_reference;
    double scale = 0.35;
};

inline conf::ConfidenceScore model_confidence(const WorldModel& model,
                                              const std::vector<std::set<std::string>>& scope,
                                              const EntropySquash& squash = {}) {
    if (scope.empty()) throw ValidationError("model_confidence: scope must be non-empty");
    double total = 0.0;
    std::size_t n_cells = 0;
    for (const auto& combo : scope) {
        for (const auto& cell : model.cells(combo)) {
            total += conf::dirichlet_entropy(cell);
            n_cells += 1;
        }
    }
    const double mean_entropy = total / static_cast<double>(n_cells);
    const double reference =
        squash.entropy_reference.value_or(conf::dirichlet_entropy(model.prior_cell()));

    conf::ConfidenceScore out;
    out.channel = conf::Channel::model;
    out.raw_entropy = mean_entropy;
    out.value = conf::squash_to_confidence(mean_entropy, reference, squash.scale);
    return out;
}

struct ImpasseConfig {
    double decision_threshold = 0.3; // tau_d
    double model_threshold = 0.7;    // tau_m
    std::size_t window = 5;          // W consecutive episodes

    void validate() const {
        if (!(decision_threshold > 0.0 && decision_threshold < 1.0)) {
            throw ValidationError("ImpasseConfig: decision_threshold must lie in (0,1)");
        }
        if (!(model_threshold > 0.0 && model_threshold < 1.0)) {
            throw ValidationError("ImpasseConfig: model_threshold must lie in (0,1)");
        }
        if (window < 1) throw ValidationError("ImpasseConfig: window must be >= 1");
    }
};

struct ImpasseResult {
    bool impasse = false;
    // "impasse": persistent low decision confidence with a trusted model;
    // "explore-more": decision confidence is persistently low but the model
    // is not trusted enough to blame the toolbox; "none" otherwise.
    std::string reason = "none";
};

// Examines the last W reports. Both channels must be present in each.
inline ImpasseResult impasse_detect(const std::vector<conf::ConfidenceReport>& history,
                                    const ImpasseConfig& cfg) {
    cfg.validate();
    if (history.size() < cfg.window) {
        throw ValidationError("impasse_detect: history shorter than the window");
    }
    bool decision_low = true;
    bool model_high = true;
    for (std::size_t i = history.size() - cfg.window; i < history.size(); ++i) {
        const auto& report = history[i];
        const auto& dec = report.get(conf::Channel::decision);
        const auto& mod = report.get(conf::Channel::model);
        if (!dec || !mod) {
            throw ValidationError("impasse_detect: report missing decision or model channel");
        }
        decision_low = decision_low && dec->value < cfg.decision_threshold;
        model_high = model_high && mod->value > cfg.model_threshold;
    }
    ImpasseResult out;
    if (decision_low && model_high) {
        out.impasse = true;
        out.reason = "impasse";
    } else if (decision_low) {
        out.reason = "explore-more";
    }
    return out;
}

// Adds lr * b_s pseudo-counts to the observed outcome in every state cell.
// Creates prior cells for a first-seen combo.
inline void record_outcome(WorldModel& model, const std::set<std::string>& combo,
                           const Belief& belief, const std::string& outcome, double lr) {
    if (!(lr > 0.0) || lr > 10.0) {
        throw ValidationError("record_outcome: learning weight must lie in (0, 10]");
    }
    belief.validate();
    if (belief.size() != model.states.size()) {
        throw ValidationError("record_outcome: belief dimension does not match model states");
    }
    const std::size_t o = model.outcome_index(outcome);
    model.ensure_combo(combo);
    auto& row = model.counts.at(world::combo_key(combo));
    for (std::size_t s = 0; s < belief.size(); ++s) {
        row[s].alpha[o] += lr * belief.p[s];
    }
}

inline void record_outcome(WorldModel& model, const std::set<std::string>& combo,
                           const std::string& state, const std::string& outcome, double lr) {
    record_outcome(model, combo, Belief::delta(model.states.size(), model.state_index(state)),
                   outcome, lr);
}

} // namespace toolforge::pomdp
