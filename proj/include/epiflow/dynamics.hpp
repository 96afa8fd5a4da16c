/* Discrete-time networked SEIR dynamics with traveler flows.
 *
 * One step advances every node synchronously:
 *
 *   s' = s + h*( -(beta*x + pT)*s                     + sum_j (Nj/Ni) w(i,j) pT_j s_j )
 *   e' = e + h*( beta*x*s       - (sigma + pT)*e      + sum_j (Nj/Ni) w(i,j) pT_j e_j )
 *   x' = x + h*( sigma*e        - (delta + pxEff)*x   + sum_j (Nj/Ni) w(i,j) pxEff_j x_j )
 *   r' = r + h*( delta*x        - pT*r                + sum_j (Nj/Ni) w(i,j) pT_j r_j )
 *
 * where pT is the travel probability of non-infected individuals, derived so
 * that total travel matches the (possibly restricted) outflow fraction
 * gamma_eff = theta * gamma, and pxEff = theta * p_x is the infected travel
 * probability. Control therefore only rescales flows; balanced flows stay
 * balanced and each node's four proportions keep summing to 1.
 *
 * Probability degeneracies (no non-infected individuals left to travel,
 * declared infected travel exceeding total travel, pT above 1) either abort
 * the run (strict mode) or are clamped to the nearest consistent value with a
 * warning event (permissive mode).
 */
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "epiflow/compartments.hpp"
#include "epiflow/control.hpp"
#include "epiflow/errors.hpp"
#include "epiflow/flow_network.hpp"

namespace epiflow {

/// Per-node sums drifting further than this from 1 abort the run.
inline constexpr double kSimplexDriftError = 1e-6;

/// Everything needed to run one scenario. Immutable once built.
struct Scenario {
    std::vector<std::string> labels;
    std::vector<double> populations;
    FlowSchedule flows;
    SpreadParams params;
    CompartmentState initial;

    std::size_t size() const { return populations.size(); }
};

enum class ProbabilityMode { strict, permissive };

struct StepOptions {
    ProbabilityMode mode = ProbabilityMode::strict;
};

enum class EventKind { warning, shutdown, reopen, vaccine_start, vaccine_stop, early_stop };

inline const char* to_string(EventKind kind) {
    switch (kind) {
        case EventKind::warning: return "warning";
        case EventKind::shutdown: return "shutdown";
        case EventKind::reopen: return "reopen";
        case EventKind::vaccine_start: return "vaccine_start";
        case EventKind::vaccine_stop: return "vaccine_stop";
        case EventKind::early_stop: return "early_stop";
    }
    return "unknown";
}

struct Event {
    int step = 0;
    EventKind kind = EventKind::warning;
    std::string message;
};

/// Travel probabilities after control scaling and degeneracy handling. For
/// every node, p_travel*(s+e+r) + p_x_effective*x equals the effective
/// outflow fraction.
struct TravelProbabilities {
    std::vector<double> p_travel;
    std::vector<double> p_x_effective;
};

/// Probability that a non-infected individual travels, from the outflow
/// fraction and the infected travel probability:
///
///   pT = (gamma - p_x * x) / (s + e + r)
///
/// Strict semantics: throws on a negative numerator, a zero denominator with
/// travel left over, or pT exceeding 1. A node with nobody non-infected and
/// no residual travel gets pT = 0.
inline double travel_prob(double gamma, double p_x, double s, double e, double x, double r) {
    const double denom = s + e + r;
    const double numer = gamma - p_x * x;
    const double rounding = 1e-12 * (gamma + p_x * x) + 1e-300;
    if (numer < -rounding)
        throw ScenarioError("infected travel exceeds total travel (gamma = " +
                            std::to_string(gamma) + ", p_x*x = " + std::to_string(p_x * x) + ")");
    if (denom <= 0.0) {
        if (numer <= rounding) return 0.0;
        throw ScenarioError("no non-infected individuals but residual travel " +
                            std::to_string(numer));
    }
    const double p = std::max(numer, 0.0) / denom;
    if (p > 1.0 + 1e-12)
        throw ScenarioError("travel probability " + std::to_string(p) + " exceeds 1");
    return std::min(p, 1.0);
}

/// Vector form used by step(). A node with no outflow at all sends nobody:
/// both probabilities are 0 there regardless of the declared p_x (this is
/// what makes a full shutdown identical to a zero flow matrix). For the
/// remaining degeneracies, permissive mode clamps to the nearest values that
/// keep total travel equal to gamma_eff and records a warning; strict mode
/// throws a ModelViolation naming node and step.
inline TravelProbabilities compute_travel_probabilities(
    const CompartmentState& state, const std::vector<double>& gamma_eff,
    const std::vector<double>& p_x_eff, ProbabilityMode mode, int step_index,
    std::vector<Event>* events) {
    const std::size_t n = state.size();
    TravelProbabilities probs{std::vector<double>(n, 0.0), p_x_eff};

    auto fail_or_warn = [&](std::size_t node, const std::string& what) {
        if (mode == ProbabilityMode::strict)
            throw ModelViolation(step_index, static_cast<int>(node), what);
        if (events)
            events->push_back(
                {step_index, EventKind::warning, "node " + std::to_string(node) + ": " + what});
    };

    for (std::size_t i = 0; i < n; ++i) {
        if (gamma_eff[i] == 0.0) {
            probs.p_travel[i] = 0.0;
            probs.p_x_effective[i] = 0.0;
            continue;
        }
        const double denom = state.s[i] + state.e[i] + state.r[i];
        const double infected_travel = p_x_eff[i] * state.x[i];
        const double numer = gamma_eff[i] - infected_travel;
        const double rounding = 1e-12 * (gamma_eff[i] + infected_travel) + 1e-300;

        if (numer < -rounding) {
            fail_or_warn(i, "infected travel " + std::to_string(infected_travel) +
                                " exceeds total travel " + std::to_string(gamma_eff[i]) +
                                "; clamping p_T to 0");
            probs.p_travel[i] = 0.0;
            // All of gamma_eff is carried by infected travelers.
            probs.p_x_effective[i] = state.x[i] > 0.0 ? gamma_eff[i] / state.x[i] : 0.0;
            continue;
        }
        if (denom <= 0.0) {
            if (numer > rounding)
                fail_or_warn(i, "no non-infected individuals but residual travel " +
                                    std::to_string(numer) + "; clamping p_T to 0");
            probs.p_travel[i] = 0.0;
            probs.p_x_effective[i] = state.x[i] > 0.0 ? gamma_eff[i] / state.x[i] : 0.0;
            continue;
        }
        double p = std::max(numer, 0.0) / denom;
        if (p > 1.0 + 1e-12) {
            fail_or_warn(i, "travel probability " + std::to_string(p) +
                                " exceeds 1; clamping to 1");
            p = 1.0;
            // Infected travelers absorb the remainder of gamma_eff.
            probs.p_x_effective[i] =
                state.x[i] > 0.0 ? std::min((gamma_eff[i] - denom) / state.x[i], 1.0) : 0.0;
        }
        probs.p_travel[i] = std::min(p, 1.0);
    }
    return probs;
}

struct StepResult {
    CompartmentState state;
    TravelProbabilities probs;
    std::vector<double> gamma_effective;
};

/// One synchronous update of every node. `vaccine` may be empty (no
/// roll-out) or hold per-node s -> r transfers applied after the update.
inline StepResult step(const CompartmentState& state, const SpreadParams& params,
                       const std::vector<double>& populations, const FlowMatrix& flow,
                       double theta, const std::vector<double>& vaccine,
                       const StepOptions& opts = {}, int step_index = 0,
                       std::vector<Event>* events = nullptr) {
    const std::size_t n = state.size();
    if (params.size() != n || populations.size() != n || flow.size() != n)
        throw ScenarioError("step: dimension mismatch");
    if (!(theta >= 0.0 && theta <= 1.0)) throw ScenarioError("theta must lie in [0,1]");
    if (!vaccine.empty() && vaccine.size() != n)
        throw ScenarioError("vaccine transfer vector has wrong length");

    const std::vector<double> gamma = outflow_fraction(flow, populations);
    auto [gamma_eff, p_x_scaled] = apply_restriction(gamma, params.p_x, theta);
    const WeightMatrix weights = normalize_flows(flow);
    TravelProbabilities probs =
        compute_travel_probabilities(state, gamma_eff, p_x_scaled, opts.mode, step_index, events);

    const double h = params.h;
    for (std::size_t i = 0; i < n; ++i) {
        const double infect_out = h * (params.beta[i] * state.x[i] + probs.p_travel[i]);
        const double expose_out = h * (params.sigma[i] + probs.p_travel[i]);
        const double heal_out = h * (params.delta[i] + probs.p_x_effective[i]);
        if (infect_out > 1.0 + 1e-12)
            throw ModelViolation(step_index, static_cast<int>(i),
                                 "h*(beta*x + p_T) = " + std::to_string(infect_out) +
                                     " exceeds 1");
        if (expose_out > 1.0 + 1e-12)
            throw ModelViolation(step_index, static_cast<int>(i),
                                 "h*(sigma + p_T) = " + std::to_string(expose_out) +
                                     " exceeds 1");
        if (heal_out > 1.0 + 1e-12)
            throw ModelViolation(step_index, static_cast<int>(i),
                                 "h*(delta + p_x) = " + std::to_string(heal_out) + " exceeds 1");
    }

    CompartmentState next{std::vector<double>(n), std::vector<double>(n), std::vector<double>(n),
                          std::vector<double>(n)};
    for (std::size_t i = 0; i < n; ++i) {
        double in_s = 0.0, in_e = 0.0, in_x = 0.0, in_r = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double w = weights.at(i, j);
            if (j == i || w <= 0.0) continue;
            const double coupling = (populations[j] / populations[i]) * w;
            in_s += coupling * probs.p_travel[j] * state.s[j];
            in_e += coupling * probs.p_travel[j] * state.e[j];
            in_x += coupling * probs.p_x_effective[j] * state.x[j];
            in_r += coupling * probs.p_travel[j] * state.r[j];
        }
        const double exposure = params.beta[i] * state.x[i] * state.s[i];
        next.s[i] = state.s[i] +
                    h * (-(params.beta[i] * state.x[i] + probs.p_travel[i]) * state.s[i] + in_s);
        next.e[i] = state.e[i] +
                    h * (exposure - (params.sigma[i] + probs.p_travel[i]) * state.e[i] + in_e);
        next.x[i] = state.x[i] + h * (params.sigma[i] * state.e[i] -
                                      (params.delta[i] + probs.p_x_effective[i]) * state.x[i] +
                                      in_x);
        next.r[i] = state.r[i] +
                    h * (params.delta[i] * state.x[i] - probs.p_travel[i] * state.r[i] + in_r);
    }

    if (!vaccine.empty()) {
        for (std::size_t i = 0; i < n; ++i) {
            const double requested = vaccine[i];
            if (requested < 0.0 || requested > state.s[i] + kSimplexRangeSlack)
                throw ScenarioError("vaccine transfer out of [0, s] at node " +
                                    std::to_string(i));
            const double applied = std::min(requested, std::max(next.s[i], 0.0));
            if (applied < requested && events)
                events->push_back({step_index, EventKind::warning,
                                   "node " + std::to_string(i) +
                                       ": vaccine transfer clamped to remaining susceptibles"});
            next.s[i] -= applied;
            next.r[i] += applied;
        }
    }

    for (std::size_t i = 0; i < n; ++i) {
        const double total = next.node_sum(i);
        if (std::abs(total - 1.0) > kSimplexDriftError)
            throw ModelViolation(step_index, static_cast<int>(i),
                                 "compartment sum drifted to " + std::to_string(total));
        for (double q : {next.s[i], next.e[i], next.x[i], next.r[i]}) {
            if (q < -kSimplexRangeSlack || q > 1.0 + kSimplexRangeSlack)
                throw ModelViolation(step_index, static_cast<int>(i),
                                     "compartment proportion left [0,1]: " + std::to_string(q));
        }
    }

    return {std::move(next), std::move(probs), std::move(gamma_eff)};
}

struct ValidationIssue {
    std::string check;
    std::string message;
    int step = -1; // -1: applies to the default matrix / all steps
    int node = -1;
};

struct ValidationReport {
    std::vector<ValidationIssue> errors;
    std::vector<ValidationIssue> notes;

    bool passed() const { return errors.empty(); }

    std::string summary() const {
        std::string out;
        for (const auto& issue : errors) {
            out += "error [" + issue.check + "]";
            if (issue.node >= 0) out += " node " + std::to_string(issue.node);
            if (issue.step >= 0) out += " step " + std::to_string(issue.step);
            out += ": " + issue.message + "\n";
        }
        for (const auto& issue : notes) {
            out += "note  [" + issue.check + "]";
            if (issue.node >= 0) out += " node " + std::to_string(issue.node);
            if (issue.step >= 0) out += " step " + std::to_string(issue.step);
            out += ": " + issue.message + "\n";
        }
        return out;
    }
};

struct ValidateOptions {
    double balance_tol = 1e-6;
    int connectivity_max_k = 8;
};

/// Static validation: parameter bounds, initial state, flow invariants,
/// per-matrix balance, and K-strong connectivity over the horizon. The
/// travel-probability bounds are checked with gamma standing in for p_T; the
/// exact state-dependent conditions are re-checked while stepping, which a
/// note points out.
inline ValidationReport validate_params(const Scenario& scenario, int horizon,
                                        const ValidateOptions& opts = {}) {
    ValidationReport report;
    const std::size_t n = scenario.size();
    auto error = [&](std::string check, std::string message, int step = -1, int node = -1) {
        report.errors.push_back({std::move(check), std::move(message), step, node});
    };

    if (n == 0) {
        error("dimensions", "scenario has no nodes");
        return report;
    }
    if (scenario.labels.size() != n || scenario.params.size() != n ||
        scenario.initial.size() != n || scenario.flows.size() != n) {
        error("dimensions", "component sizes disagree");
        return report;
    }

    for (std::size_t i = 0; i < n; ++i)
        if (!(scenario.populations[i] > 0.0))
            error("population", "population must be strictly positive", -1, static_cast<int>(i));

    const SpreadParams& p = scenario.params;
    if (!(p.h > 0.0)) error("params", "sampling parameter h must be strictly positive");
    for (std::size_t i = 0; i < n; ++i) {
        const int node = static_cast<int>(i);
        const std::array<std::pair<const char*, double>, 3> rates{
            {{"beta", p.beta[i]}, {"sigma", p.sigma[i]}, {"delta", p.delta[i]}}};
        for (const auto& [name, value] : rates) {
            if (!(value > 0.0))
                error("params", std::string(name) + " must be strictly positive", -1, node);
            else if (p.h > 0.0 && (p.h * value <= 0.0 || p.h * value > 1.0))
                error("params",
                      "h*" + std::string(name) + " = " + std::to_string(p.h * value) +
                          " outside (0,1]",
                      -1, node);
        }
        if (p.p_x[i] < 0.0 || p.p_x[i] > 1.0)
            error("params", "p_x must lie in [0,1]", -1, node);
    }

    try {
        check_simplex(scenario.initial);
    } catch (const ScenarioError& e) {
        error("initial-state", e.what());
    }

    // Every matrix the horizon can reach: the default plus overrides.
    std::vector<std::pair<int, const FlowMatrix*>> matrices;
    matrices.emplace_back(-1, &scenario.flows.default_matrix);
    for (const auto& [step, matrix] : scenario.flows.overrides) {
        if (step >= 0 && (horizon <= 0 || step < horizon)) matrices.emplace_back(step, &matrix);
    }

    for (const auto& [step, matrix] : matrices) {
        std::vector<double> gamma;
        try {
            gamma = outflow_fraction(*matrix, scenario.populations);
        } catch (const ScenarioError& e) {
            error("outflow", e.what(), step);
            continue;
        }
        if (p.h > 0.0) {
            for (std::size_t i = 0; i < n; ++i) {
                const int node = static_cast<int>(i);
                const std::array<std::pair<const char*, double>, 3> rates{
                    {{"beta", p.beta[i]}, {"sigma", p.sigma[i]}, {"delta", p.delta[i]}}};
                for (const auto& [name, value] : rates) {
                    const double bound = p.h * (value + gamma[i]);
                    if (value > 0.0 && bound > 1.0)
                        error("travel-bound",
                              "h*(" + std::string(name) + " + gamma) = " + std::to_string(bound) +
                                  " exceeds 1",
                              step, node);
                }
            }
        }
        const BalanceReport balance = check_balance(*matrix, opts.balance_tol);
        if (!balance.balanced)
            error("flow-balance",
                  "inflow and outflow differ by " + std::to_string(balance.max_residual),
                  step, static_cast<int>(balance.worst_node));
    }

    report.notes.push_back({"travel-bound",
                            "static checks use gamma as a proxy for p_T; the exact state-dependent "
                            "bounds are re-checked at every step",
                            -1, -1});

    if (horizon >= 1) {
        const int max_k = std::min(opts.connectivity_max_k, horizon);
        const ConnectivityReport connectivity =
            check_k_strong_connectivity(scenario.flows, horizon, max_k);
        if (connectivity.connected())
            report.notes.push_back({"connectivity",
                                    "routing graph is K-strongly connected with K = " +
                                        std::to_string(*connectivity.k_bound),
                                    -1, -1});
        else
            report.notes.push_back({"connectivity",
                                    "routing graph is not K-strongly connected for any K <= " +
                                        std::to_string(max_k) +
                                        "; susceptible consensus is not guaranteed",
                                    -1, -1});
    }

    return report;
}

/// Optional early-out: stop once the mean infected proportion has stayed
/// below the threshold for `consecutive` steps.
struct StopRule {
    double x_bar_below = 0.0;
    int consecutive = 1;
};

struct SimulateOptions {
    StepOptions step{};
    std::optional<StopRule> stop{};
};

/// Full record of one run: states[k] for k = 0..steps, the applied theta and
/// effective outflow fractions per step, vaccine transfers per step (empty
/// vectors when no roll-out is configured), and noteworthy events.
struct Trajectory {
    std::vector<std::string> labels;
    std::vector<double> populations;
    double h = 1.0;
    std::vector<CompartmentState> states;
    std::vector<double> thetas;
    std::vector<std::vector<double>> gammas_effective;
    std::vector<std::vector<double>> vaccine_moves;
    std::vector<Event> events;

    int steps() const { return static_cast<int>(thetas.size()); }
    std::size_t nodes() const { return populations.size(); }
};

/// Runs the scenario for `horizon` steps (or until the stop rule fires),
/// evaluating the policy before each step. Identical inputs produce
/// bit-identical trajectories.
inline Trajectory simulate(const Scenario& scenario, const ControlPolicy& policy, int horizon,
                           const SimulateOptions& opts = {}) {
    if (horizon < 0) throw ScenarioError("horizon must be non-negative");
    check_simplex(scenario.initial);
    if (scenario.params.size() != scenario.size() || scenario.flows.size() != scenario.size() ||
        scenario.initial.size() != scenario.size())
        throw ScenarioError("simulate: dimension mismatch");

    Trajectory traj;
    traj.labels = scenario.labels;
    traj.populations = scenario.populations;
    traj.h = scenario.params.h;
    traj.states.reserve(static_cast<std::size_t>(horizon) + 1);

    CompartmentState state = scenario.initial;
    traj.states.push_back(state);

    BinaryFlags flags;
    double previous_theta = 1.0;
    bool reopen_reported = false;
    bool vaccine_started = false;
    bool vaccine_stop_reported = false;
    int below_count = 0;

    for (int k = 0; k < horizon; ++k) {
        const FlowMatrix& flow = scenario.flows.at(k);
        ControlOutput control = evaluate_policy(policy, k, state, flags);

        if (policy.kind == RestrictionKind::binary) {
            if (control.theta == 0.0 && previous_theta > 0.0)
                traj.events.push_back({k, EventKind::shutdown, "travel shut down"});
            if (flags.reopened && !reopen_reported) {
                traj.events.push_back({k, EventKind::reopen, "travel reopened"});
                reopen_reported = true;
            }
        }
        if (policy.vaccine) {
            bool any_transfer = false;
            for (double v : control.vaccine) any_transfer = any_transfer || v > 0.0;
            if (any_transfer && !vaccine_started) {
                vaccine_started = true;
                traj.events.push_back({k, EventKind::vaccine_start, "vaccine roll-out started"});
            }
            if (!any_transfer && vaccine_started && !vaccine_stop_reported &&
                k >= policy.vaccine->start_step) {
                vaccine_stop_reported = true;
                traj.events.push_back(
                    {k, EventKind::vaccine_stop, "vaccine roll-out stopped at floor"});
            }
        }

        StepResult result = step(state, scenario.params, scenario.populations, flow,
                                 control.theta, control.vaccine, opts.step, k, &traj.events);

        traj.thetas.push_back(control.theta);
        traj.gammas_effective.push_back(std::move(result.gamma_effective));
        traj.vaccine_moves.push_back(policy.vaccine ? std::move(control.vaccine)
                                                    : std::vector<double>{});
        state = std::move(result.state);
        traj.states.push_back(state);
        previous_theta = control.theta;

        if (opts.stop) {
            if (state.mean_x() < opts.stop->x_bar_below) {
                if (++below_count >= opts.stop->consecutive) {
                    traj.events.push_back({k, EventKind::early_stop,
                                           "mean infected proportion stayed below " +
                                               std::to_string(opts.stop->x_bar_below)});
                    break;
                }
            } else {
                below_count = 0;
            }
        }
    }
    return traj;
}

} // namespace epiflow
