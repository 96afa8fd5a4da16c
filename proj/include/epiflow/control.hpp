/* Flow-restriction controllers and the vaccine roll-out rule.
 *
 * A controller produces one global penalty theta in [0,1] per step; the
 * dynamics scale all outflow fractions and infected travel probabilities by
 * it. theta is deliberately a single scalar: a common factor preserves
 * per-node flow balance, per-node penalties would not.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "epiflow/compartments.hpp"
#include "epiflow/errors.hpp"

namespace epiflow {

enum class RestrictionKind { none, proportional, binary };

enum class ReopenRule { threshold, zero };

/// On-off restriction: theta = 1 before shutdown_step, 0 afterwards until the
/// reopen rule fires, then 1 forever. `level` is the x-bar comparison point
/// (tau for threshold reopening, the numerical-zero epsilon otherwise).
struct BinaryRestriction {
    int shutdown_step = 0;
    ReopenRule rule = ReopenRule::threshold;
    double level = 1e-3;
};

/// Moves rate * s_i from susceptible to recovered each step from start_step
/// on, while the network mean of s is still above s_bar_floor.
struct VaccinePolicy {
    int start_step = 0;
    double rate = 0.0;
    double s_bar_floor = 0.0;
};

struct ControlPolicy {
    RestrictionKind kind = RestrictionKind::none;
    double eta = 0.0; // proportional sensitivity; eta == 0 is the "no control" sentinel
    BinaryRestriction binary{};
    std::optional<VaccinePolicy> vaccine{};

    static ControlPolicy none() { return {}; }

    static ControlPolicy proportional(double eta) {
        ControlPolicy p;
        p.kind = RestrictionKind::proportional;
        p.eta = eta;
        return p;
    }

    static ControlPolicy on_off(int shutdown_step, ReopenRule rule, double level) {
        ControlPolicy p;
        p.kind = RestrictionKind::binary;
        p.binary = BinaryRestriction{shutdown_step, rule, level};
        return p;
    }
};

/// theta = 1 - x_bar^(1/eta). Larger eta restricts harder at the same
/// infection level.
inline double proportional_theta(double x_bar, double eta) {
    if (!(eta > 0.0)) throw ScenarioError("proportional controller requires eta > 0");
    if (x_bar < 0.0 || x_bar > 1.0)
        throw ScenarioError("x_bar must lie in [0,1]");
    const double theta = 1.0 - std::pow(x_bar, 1.0 / eta);
    return std::clamp(theta, 0.0, 1.0);
}

/// Latches to true once the reopen rule fires; reopening is one-way.
struct BinaryFlags {
    bool reopened = false;
};

inline double binary_theta(const BinaryRestriction& policy, int k, double x_bar,
                           BinaryFlags& flags) {
    if (flags.reopened || k < policy.shutdown_step) return 1.0;
    if (x_bar < policy.level) {
        flags.reopened = true;
        return 1.0;
    }
    return 0.0;
}

/// Scales outflow fractions and infected travel probabilities by theta.
inline std::pair<std::vector<double>, std::vector<double>> apply_restriction(
    const std::vector<double>& gamma, const std::vector<double>& p_x, double theta) {
    if (!(theta >= 0.0 && theta <= 1.0)) throw ScenarioError("theta must lie in [0,1]");
    std::vector<double> gamma_eff(gamma.size()), p_x_eff(p_x.size());
    for (std::size_t i = 0; i < gamma.size(); ++i) gamma_eff[i] = theta * gamma[i];
    for (std::size_t i = 0; i < p_x.size(); ++i) p_x_eff[i] = theta * p_x[i];
    return {std::move(gamma_eff), std::move(p_x_eff)};
}

/// Per-node s -> r transfer for this step; zero before start_step and once
/// the network mean of s has reached the floor (evaluated pre-transfer).
inline std::vector<double> vaccine_move(const CompartmentState& state, const VaccinePolicy& policy,
                                        int k) {
    std::vector<double> transfer(state.size(), 0.0);
    if (k < policy.start_step) return transfer;
    if (!(state.mean_s() > policy.s_bar_floor)) return transfer;
    for (std::size_t i = 0; i < state.size(); ++i)
        transfer[i] = std::min(policy.rate * state.s[i], state.s[i]);
    return transfer;
}

struct ControlOutput {
    double theta = 1.0;
    std::vector<double> vaccine;
    bool reopened = false;
};

/// Advances the policy one step against the current state.
inline ControlOutput evaluate_policy(const ControlPolicy& policy, int k,
                                     const CompartmentState& state, BinaryFlags& flags) {
    ControlOutput out;
    const double x_bar = state.mean_x();
    switch (policy.kind) {
        case RestrictionKind::none:
            out.theta = 1.0;
            break;
        case RestrictionKind::proportional:
            out.theta = policy.eta == 0.0 ? 1.0 : proportional_theta(x_bar, policy.eta);
            break;
        case RestrictionKind::binary:
            out.theta = binary_theta(policy.binary, k, x_bar, flags);
            break;
    }
    out.reopened = flags.reopened;
    if (policy.vaccine) out.vaccine = vaccine_move(state, *policy.vaccine, k);
    return out;
}

} // namespace epiflow
