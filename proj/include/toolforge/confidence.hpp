#pragma once
// Entropy and confidence substrate: categorical and Dirichlet entropies,
// normalization of entropies into [0,1] confidence values, the
// epistemic/aleatoric split of a Dirichlet posterior, temperature-scaling
// calibration, and expected calibration error.
//
// All entropies are in nats. Discrete posteriors map to confidence through
// 1 - H/ln(n); differential (Dirichlet, Gaussian) entropies have no natural
// maximum and map through a sigmoid squash around a reference entropy.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "toolforge/errors.hpp"

namespace toolforge::conf {

inline constexpr double kProbFloor = 1e-12;       // floor applied before logs
inline constexpr double kSumTolerance = 1e-9;     // normalization tolerance

namespace detail {

// Digamma via upward recurrence into the asymptotic regime. Accurate to
// ~1e-12 for x > 0, which is ample for entropy bookkeeping.
inline double digamma(double x) {
    if (!(x > 0.0)) {
        throw ValidationError("digamma: argument must be > 0");
    }
    double result = 0.0;
    while (x < 6.0) {
        result -= 1.0 / x;
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    result += std::log(x) - 0.5 * inv
        - inv2 * (1.0 / 12.0
        - inv2 * (1.0 / 120.0
        - inv2 * (1.0 / 252.0
        - inv2 * (1.0 / 240.0
        - inv2 * (1.0 / 132.0)))));
    return result;
}

inline double xlogx(double p) {
    return p > 0.0 ? p * std::log(std::max(p, kProbFloor)) : 0.0;
}

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

inline double logit(double p) {
    const double c = std::clamp(p, 1e-6, 1.0 - 1e-6);
    return std::log(c / (1.0 - c));
}

inline double sigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

} // namespace detail

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

// Normalized categorical distribution over n >= 1 outcomes.
struct ProbVec {
    std::vector<double> p;

    ProbVec() = default;
    explicit ProbVec(std::vector<double> values) : p(std::move(values)) { validate(); }

    std::size_t size() const { return p.size(); }

    void validate() const {
        if (p.empty()) {
            throw ValidationError("ProbVec: must have at least one category");
        }
        double sum = 0.0;
        for (double v : p) {
            if (!(v >= 0.0) || !std::isfinite(v)) {
                throw ValidationError("ProbVec: entries must be finite and >= 0");
            }
            sum += v;
        }
        if (std::abs(sum - 1.0) > kSumTolerance) {
            throw ValidationError("ProbVec: entries must sum to 1 (got " + std::to_string(sum) + ")");
        }
    }

    static ProbVec uniform(std::size_t n) {
        if (n == 0) throw ValidationError("ProbVec::uniform: n must be >= 1");
        return ProbVec(std::vector<double>(n, 1.0 / static_cast<double>(n)));
    }

    static ProbVec delta(std::size_t n, std::size_t index) {
        if (index >= n) throw ValidationError("ProbVec::delta: index out of range");
        std::vector<double> v(n, 0.0);
        v[index] = 1.0;
        return ProbVec(std::move(v));
    }

    // Rescales non-negative weights to a distribution.
    static ProbVec normalized(std::vector<double> weights) {
        double sum = 0.0;
        for (double w : weights) {
            if (!(w >= 0.0) || !std::isfinite(w)) {
                throw ValidationError("ProbVec::normalized: weights must be finite and >= 0");
            }
            sum += w;
        }
        if (sum <= 0.0) {
            throw ValidationError("ProbVec::normalized: weights sum to zero");
        }
        for (double& w : weights) w /= sum;
        return ProbVec(std::move(weights));
    }
};

// Dirichlet concentration parameters (pseudo-counts), one per category.
struct DirichletParams {
    std::vector<double> alpha;

    DirichletParams() = default;
    explicit DirichletParams(std::vector<double> a) : alpha(std::move(a)) { validate(); }

    std::size_t size() const { return alpha.size(); }

    double total() const {
        double t = 0.0;
        for (double a : alpha) t += a;
        return t;
    }

    void validate() const {
        if (alpha.size() < 2) {
            throw ValidationError("DirichletParams: need at least two categories");
        }
        for (double a : alpha) {
            if (!(a > 0.0) || !std::isfinite(a)) {
                throw ValidationError("DirichletParams: every concentration must be finite and > 0");
            }
        }
    }

    ProbVec mean() const {
        const double t = total();
        std::vector<double> m(alpha.size());
        for (std::size_t i = 0; i < alpha.size(); ++i) m[i] = alpha[i] / t;
        return ProbVec(std::move(m));
    }

    static DirichletParams symmetric(std::size_t n, double count) {
        return DirichletParams(std::vector<double>(n, count));
    }
};

enum class Channel : std::uint8_t { perceptual = 0, utility, model, control, decision };

inline constexpr std::array<Channel, 5> kAllChannels{
    Channel::perceptual, Channel::utility, Channel::model, Channel::control, Channel::decision};

inline constexpr std::string_view channel_name(Channel c) {
    switch (c) {
        case Channel::perceptual: return "perceptual";
        case Channel::utility:    return "utility";
        case Channel::model:      return "model";
        case Channel::control:    return "control";
        case Channel::decision:   return "decision";
    }
    return "unknown";
}

inline std::optional<Channel> channel_from_name(std::string_view name) {
    for (Channel c : kAllChannels) {
        if (channel_name(c) == name) return c;
    }
    return std::nullopt;
}

// One channel's confidence: the entropy it came from plus the normalized value.
struct ConfidenceScore {
    Channel channel = Channel::decision;
    double raw_entropy = 0.0; // nats
    double value = 0.0;       // in [0, 1]

    void validate() const {
        if (!(value >= 0.0 && value <= 1.0)) {
            throw ValidationError("ConfidenceScore: value must lie in [0,1]");
        }
    }
};

// At most one score per channel, stamped with the episode it belongs to.
struct ConfidenceReport {
    std::uint64_t episode = 0;
    std::array<std::optional<ConfidenceScore>, 5> scores{};
    std::array<std::string, 5> missing_reason{};

    bool has(Channel c) const { return scores[static_cast<std::size_t>(c)].has_value(); }

    const std::optional<ConfidenceScore>& get(Channel c) const {
        return scores[static_cast<std::size_t>(c)];
    }

    void set(const ConfidenceScore& score) {
        score.validate();
        scores[static_cast<std::size_t>(score.channel)] = score;
        missing_reason[static_cast<std::size_t>(score.channel)].clear();
    }

    void set_missing(Channel c, std::string reason) {
        scores[static_cast<std::size_t>(c)] = std::nullopt;
        missing_reason[static_cast<std::size_t>(c)] = std::move(reason);
    }

    double value_or(Channel c, double fallback) const {
        const auto& s = get(c);
        return s ? s->value : fallback;
    }
};

// ---------------------------------------------------------------------------
// Entropies and confidence maps
// ---------------------------------------------------------------------------

// Shannon entropy of a categorical distribution, in nats; 0*ln 0 := 0.
inline double entropy_categorical(const ProbVec& dist) {
    dist.validate();
    double h = 0.0;
    for (double v : dist.p) h -= detail::xlogx(v);
    return std::max(h, 0.0);
}

// Normalizes a discrete entropy against its maximum ln(n). n == 1 has zero
// entropy by construction and maps to full confidence.
inline double confidence_from_entropy(double entropy_nats, std::size_t n) {
    if (n == 0) throw ValidationError("confidence_from_entropy: n must be >= 1");
    if (entropy_nats < -kSumTolerance) {
        throw ValidationError("confidence_from_entropy: entropy must be >= 0");
    }
    if (n == 1) return 1.0;
    const double h_max = std::log(static_cast<double>(n));
    if (entropy_nats > h_max + kSumTolerance) {
        throw ValidationError("confidence_from_entropy: entropy exceeds ln(n)");
    }
    return detail::clamp01(1.0 - entropy_nats / h_max);
}

// Differential entropy of a Dirichlet posterior, in nats:
//   H = ln B(alpha) + (a0 - K) psi(a0) - sum_j (a_j - 1) psi(a_j).
inline double dirichlet_entropy(const DirichletParams& d) {
    d.validate();
    const double a0 = d.total();
    const std::size_t k = d.size();
    double log_beta = -std::lgamma(a0);
    double corr = 0.0;
    for (double a : d.alpha) {
        log_beta += std::lgamma(a);
        corr += (a - 1.0) * detail::digamma(a);
    }
    return log_beta + (a0 - static_cast<double>(k)) * detail::digamma(a0) - corr;
}

// Maps an unbounded (differential) entropy to [0,1]: 0.5 at the reference,
// strictly decreasing in H, saturating at 0/1.
inline double squash_to_confidence(double entropy_nats, double reference_nats, double scale_nats) {
    if (!(scale_nats > 0.0)) {
        throw ValidationError("squash_to_confidence: scale must be > 0");
    }
    return detail::sigmoid(-(entropy_nats - reference_nats) / scale_nats);
}

// Total predictive uncertainty of a Dirichlet split into expected outcome
// noise (aleatoric) and uncertainty about the parameters themselves
// (epistemic). The identity total = aleatoric + epistemic holds exactly.
struct Decomposition {
    double total = 0.0;
    double aleatoric = 0.0;
    double epistemic = 0.0;
};

inline Decomposition epistemic_aleatoric_decompose(const DirichletParams& d) {
    d.validate();
    const double a0 = d.total();
    Decomposition out;
    out.total = entropy_categorical(d.mean());
    const double psi_tot = detail::digamma(a0 + 1.0);
    double aleatoric = 0.0;
    for (double a : d.alpha) {
        aleatoric += (a / a0) * (psi_tot - detail::digamma(a + 1.0));
    }
    out.aleatoric = aleatoric;
    out.epistemic = out.total - out.aleatoric;
    return out;
}

// ---------------------------------------------------------------------------
// Calibration
// ---------------------------------------------------------------------------

struct CalibrationSample {
    double confidence = 0.5; // stated confidence in (0, 1)
    bool success = false;
};

// Scalar temperature on the log-odds scale. apply() re-maps a raw confidence
// through sigmoid(logit(c)/T).
struct CalibrationModel {
    double temperature = 1.0;
    double holdout_nll_before = 0.0;
    double holdout_nll_after = 0.0;
    bool degenerate = false;

    void validate() const {
        if (!(temperature > 0.0)) {
            throw ValidationError("CalibrationModel: temperature must be > 0");
        }
        if (holdout_nll_after > holdout_nll_before + kSumTolerance) {
            throw ValidationError("CalibrationModel: fit may not worsen held-out NLL");
        }
    }

    double apply(double raw_confidence) const {
        return detail::sigmoid(detail::logit(raw_confidence) / temperature);
    }
};

namespace detail {

inline double mean_nll(const std::vector<CalibrationSample>& samples, double temperature) {
    double nll = 0.0;
    for (const auto& s : samples) {
        const double p = sigmoid(logit(s.confidence) / temperature);
        const double q = std::clamp(p, kProbFloor, 1.0 - kProbFloor);
        nll -= s.success ? std::log(q) : std::log(1.0 - q);
    }
    return samples.empty() ? 0.0 : nll / static_cast<double>(samples.size());
}

} // namespace detail

// Fits the temperature by a coarse doubling grid followed by ternary
// refinement; entirely deterministic. Samples split even/odd into train and
// held-out halves; if the fitted temperature does not help on the held-out
// half the identity temperature is kept, so the held-out NLL never worsens.
inline CalibrationModel fit_temperature(const std::vector<CalibrationSample>& samples) {
    if (samples.size() < 10) {
        throw ValidationError("fit_temperature: need at least 10 samples");
    }
    std::size_t successes = 0;
    bool all_logits_zero = true;
    for (const auto& s : samples) {
        if (!(s.confidence > 0.0 && s.confidence < 1.0)) {
            throw ValidationError("fit_temperature: confidences must lie strictly in (0,1)");
        }
        successes += s.success ? 1 : 0;
        if (std::abs(detail::logit(s.confidence)) > 1e-12) all_logits_zero = false;
    }

    std::vector<CalibrationSample> train, holdout;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        (i % 2 == 0 ? train : holdout).push_back(samples[i]);
    }

    CalibrationModel model;
    model.holdout_nll_before = detail::mean_nll(holdout, 1.0);

    // Constant-zero logits are invariant under temperature, so no fit exists.
    if (successes == 0 || successes == samples.size() || all_logits_zero) {
        model.degenerate = true;
        model.holdout_nll_after = model.holdout_nll_before;
        return model;
    }

    double best_t = 1.0;
    double best_nll = detail::mean_nll(train, 1.0);
    std::vector<double> grid;
    for (int k = 0; k <= 12; ++k) grid.push_back(0.05 * std::pow(2.0, k));
    std::size_t best_idx = 0;
    bool grid_improves = false;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double nll = detail::mean_nll(train, grid[i]);
        if (nll < best_nll) {
            best_nll = nll;
            best_t = grid[i];
            best_idx = i;
            grid_improves = true;
        }
    }
    if (grid_improves) {
        double lo = grid[best_idx == 0 ? 0 : best_idx - 1];
        double hi = grid[std::min(best_idx + 1, grid.size() - 1)];
        for (int iter = 0; iter < 30; ++iter) {
            const double m1 = lo + (hi - lo) / 3.0;
            const double m2 = hi - (hi - lo) / 3.0;
            if (detail::mean_nll(train, m1) <= detail::mean_nll(train, m2)) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        const double refined = 0.5 * (lo + hi);
        if (detail::mean_nll(train, refined) < best_nll) best_t = refined;
    }

    const double after = detail::mean_nll(holdout, best_t);
    if (after <= model.holdout_nll_before) {
        model.temperature = best_t;
        model.holdout_nll_after = after;
    } else {
        model.temperature = 1.0;
        model.holdout_nll_after = model.holdout_nll_before;
    }
    return model;
}

// Expected calibration error over equal-width bins; empty bins contribute 0.
inline double ece(const std::vector<CalibrationSample>& samples, std::size_t bins) {
    if (bins == 0) throw ValidationError("ece: need at least one bin");
    if (samples.empty()) throw ValidationError("ece: need at least one sample");
    std::vector<double> conf_sum(bins, 0.0), acc_sum(bins, 0.0);
    std::vector<std::size_t> count(bins, 0);
    for (const auto& s : samples) {
        if (!(s.confidence >= 0.0 && s.confidence <= 1.0)) {
            throw ValidationError("ece: confidences must lie in [0,1]");
        }
        const auto b = std::min(static_cast<std::size_t>(s.confidence * static_cast<double>(bins)), bins - 1);
        conf_sum[b] += s.confidence;
        acc_sum[b] += s.success ? 1.0 : 0.0;
        count[b] += 1;
    }
    double err = 0.0;
    const double n = static_cast<double>(samples.size());
    for (std::size_t b = 0; b < bins; ++b) {
        if (count[b] == 0) continue;
        const double c = conf_sum[b] / static_cast<double>(count[b]);
        const double a = acc_sum[b] / static_cast<double>(count[b]);
        err += (static_cast<double>(count[b]) / n) * std::abs(a - c);
    }
    return err;
}

} // namespace toolforge::conf
