#pragma once
// One-step quadratic control model for the hand+tool system. The cost of a
// control signal u = (dx, dy, dpsi) is a data term — how well the induced tip
// motion G u explains the desired tip correction — plus a quadratic prior.
// Its Hessian is the control precision; the entropy of the corresponding
// Gaussian posterior yields the control-confidence channel.
//
// The lever arm r is the tool tip offset with the hand at the canonical
// origin pose, so precision depends on tool geometry but not on any task.

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>

#include "toolforge/confidence.hpp"
#include "toolforge/errors.hpp"
#include "toolforge/toyworld.hpp"

namespace toolforge::ctrl {

using Mat3 = std::array<std::array<double, 3>, 3>;

inline constexpr Mat3 kIdentity3{{{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}}};

inline double det3(const Mat3& m) {
    return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
         - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
         + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

inline bool is_symmetric(const Mat3& m, double tol = 1e-9) {
    return std::abs(m[0][1] - m[1][0]) <= tol && std::abs(m[0][2] - m[2][0]) <= tol
        && std::abs(m[1][2] - m[2][1]) <= tol;
}

// Sylvester's criterion on the leading principal minors.
inline bool is_positive_definite(const Mat3& m) {
    const double m1 = m[0][0];
    const double m2 = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    return m1 > 0.0 && m2 > 0.0 && det3(m) > 0.0;
}

struct ControlSignal {
    double dx = 0.0;   // meters
    double dy = 0.0;   // meters
    double dpsi = 0.0; // radians
};

struct ControllerParams {
    double sigma_0 = 1.0;          // baseline tip-observation noise std, meters
    double actuation_noise = 0.0;  // execution noise std, radians (shared with EnvSpec)
    Mat3 prior_precision = kIdentity3;

    void validate() const {
        if (!(sigma_0 > 0.0)) throw ValidationError("ControllerParams: sigma_0 must be > 0");
        if (!(actuation_noise >= 0.0)) {
            throw ValidationError("ControllerParams: actuation_noise must be >= 0");
        }
        if (!is_symmetric(prior_precision) || !is_positive_definite(prior_precision)) {
            throw ValidationError("ControllerParams: prior precision must be symmetric positive definite");
        }
    }
};

struct ControlPrecision {
    Mat3 pi = kIdentity3;

    void validate() const {
        if (!is_symmetric(pi)) throw ValidationError("ControlPrecision: matrix must be symmetric");
        if (!is_positive_definite(pi)) {
            throw ValidationError("ControlPrecision: matrix must be positive definite");
        }
    }
};

namespace detail {

// Lever arm of the tool: tip offset at the canonical hand pose.
inline world::Vec2 lever_arm(const world::ToolSpec& tool) {
    return world::forward_kinematics(tool, world::Pose{0.0, 0.0, 0.0});
}

inline double effective_variance(const world::Vec2& r, const ControllerParams& p) {
    return p.sigma_0 * p.sigma_0 + p.actuation_noise * p.actuation_noise * r.norm2();
}

// Tip motion induced by u: translation plus rotation acting through the
// lever arm, G = [ I2 | rot90(r) ].
inline world::Vec2 tip_motion(const ControlSignal& u, const world::Vec2& r) {
    return {u.dx - r.y * u.dpsi, u.dy + r.x * u.dpsi};
}

} // namespace detail

inline double free_energy(const ControlSignal& u, const world::Vec2& tip_error,
                          const world::ToolSpec& tool, const ControllerParams& params) {
    params.validate();
    const world::Vec2 r = detail::lever_arm(tool);
    const world::Vec2 residual = detail::tip_motion(u, r) - tip_error;
    const double data_term = residual.norm2() / (2.0 * detail::effective_variance(r, params));

    const std::array<double, 3> v{u.dx, u.dy, u.dpsi};
    double prior_term = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            prior_term += v[i] * params.prior_precision[i][j] * v[j];
        }
    }
    return data_term + 0.5 * prior_term;
}

// Exact Hessian of free_energy in u; independent of u and of the tip error.
inline ControlPrecision control_precision(const world::ToolSpec& tool,
                                          const ControllerParams& params) {
    params.validate();
    const world::Vec2 r = detail::lever_arm(tool);
    const double inv_var = 1.0 / detail::effective_variance(r, params);

    // G^T G with G = [ I2 | rot90(r) ], rot90(r) = (-r_y, r_x).
    Mat3 gtg{{{1.0, 0.0, -r.y}, {0.0, 1.0, r.x}, {-r.y, r.x, r.norm2()}}};
    ControlPrecision out;
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            out.pi[i][j] = gtg[i][j] * inv_var + params.prior_precision[i][j];
        }
    }
    out.validate();
    return out;
}

// Differential entropy of the Gaussian with precision pi (3 dof).
inline double gaussian_entropy(const ControlPrecision& precision) {
    const double det = det3(precision.pi);
    if (!(det > 0.0)) {
        throw ValidationError("gaussian_entropy: precision determinant must be > 0");
    }
    return 1.5 * (1.0 + std::log(2.0 * std::numbers::pi)) - 0.5 * std::log(det);
}

// Entropy reference that maps the bare hand under default parameters
// (precision diag(2,2,1)) to confidence 0.5.
inline double default_control_entropy_reference() {
    ControlPrecision bare;
    bare.pi = Mat3{{{2.0, 0.0, 0.0}, {0.0, 2.0, 0.0}, {0.0, 0.0, 1.0}}};
    return gaussian_entropy(bare);
}

inline conf::ConfidenceScore control_confidence(const ControlPrecision& precision,
                                                double entropy_reference, double scale) {
    const double h = gaussian_entropy(precision);
    conf::ConfidenceScore score;
    score.channel = conf::Channel::control;
    score.raw_entropy = h;
    score.value = conf::squash_to_confidence(h, entropy_reference, scale);
    return score;
}

} // namespace toolforge::ctrl
