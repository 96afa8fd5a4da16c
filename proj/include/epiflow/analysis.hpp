/* Post-hoc verification of a run: the consensus transition matrix and its
 * row-sum property, aggregate cross-checks, extinction detection, consensus
 * error, and infection burden.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include "epiflow/dynamics.hpp"
#include "epiflow/errors.hpp"
#include "epiflow/flow_network.hpp"
#include "epiflow/matrix.hpp"

namespace epiflow {

/// Healthy-regime susceptible transition matrix
///   L = I + h*(-Gamma + N^-1 W Gamma N),
/// entry-wise L(i,i) = 1 - h*gamma_i and L(i,j) = h*(Nj/Ni)*w(i,j)*gamma_j.
/// Rows sum to 1 exactly when flows are balanced.
using ConsensusMatrix = Matrix;

inline ConsensusMatrix build_consensus_matrix(double h, const std::vector<double>& gamma,
                                              const WeightMatrix& weights,
                                              const std::vector<double>& populations) {
    const std::size_t n = weights.size();
    if (gamma.size() != n || populations.size() != n)
        throw ScenarioError("build_consensus_matrix: dimension mismatch");
    Matrix transition(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        transition(i, i) = 1.0 - h * gamma[i];
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            transition(i, j) = h * (populations[j] / populations[i]) * weights.at(i, j) * gamma[j];
        }
    }
    return transition;
}

struct RowStochasticReport {
    bool passed = true;
    double max_row_deviation = 0.0;
    double min_entry = 0.0;
    /// Smallest strictly positive entry; the empirical stand-in for the
    /// uniform lower bound a consensus argument would want.
    double min_positive_entry = 0.0;
};

inline RowStochasticReport check_row_stochastic(const Matrix& transition, double tol) {
    RowStochasticReport report;
    report.min_entry = std::numeric_limits<double>::infinity();
    report.min_positive_entry = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < transition.rows(); ++i) {
        report.max_row_deviation =
            std::max(report.max_row_deviation, std::abs(transition.row_sum(i) - 1.0));
        for (std::size_t j = 0; j < transition.cols(); ++j) {
            const double entry = transition(i, j);
            report.min_entry = std::min(report.min_entry, entry);
            if (entry > 0.0) report.min_positive_entry = std::min(report.min_positive_entry, entry);
        }
    }
    report.passed = report.max_row_deviation <= tol && report.min_entry >= -tol;
    return report;
}

/// Network totals per step, by two routes: summing the recorded states, and
/// recursing aggregate update equations seeded from the initial state.
///
/// The plain (unweighted) recursion
///   S' = S - h*sum_i beta_i x_i s_i       (minus any vaccine transfers)
///   E' = E + h*(sum_i beta_i x_i s_i - sum_i sigma_i e_i)
///   X' = X + h*(sum_i sigma_i e_i - sum_i delta_i x_i)
/// drops the travel terms. Those cancel exactly only when all populations
/// are equal: summing the per-node update weights inflows by the destination
/// population and outflows by the origin population, so with unequal N the
/// unweighted flow terms leave a residual on heterogeneous states. The
/// population-weighted totals (weights N_i, normalized to mean 1 so both
/// scales match) cancel the flow terms identically for any balanced network,
/// so `max_weighted_discrepancy` is the exact conservation check.
struct AggregateSeries {
    std::vector<double> sum_s, sum_e, sum_x;
    std::vector<double> rec_s, rec_e, rec_x;
    double max_discrepancy = 0.0;

    std::vector<double> weighted_sum_s, weighted_sum_e, weighted_sum_x;
    std::vector<double> weighted_rec_s, weighted_rec_e, weighted_rec_x;
    double max_weighted_discrepancy = 0.0;
};

inline AggregateSeries aggregate_totals(const Trajectory& traj, const SpreadParams& params) {
    const std::size_t n = traj.nodes();
    const int steps = traj.steps();
    if (params.size() != n) throw ScenarioError("aggregate_totals: dimension mismatch");

    std::vector<double> weight(n, 1.0);
    double population_total = 0.0;
    for (double p : traj.populations) population_total += p;
    for (std::size_t i = 0; i < n; ++i)
        weight[i] = traj.populations[i] * static_cast<double>(n) / population_total;

    AggregateSeries series;
    auto sum_with = [&](const std::vector<double>& values, const std::vector<double>& w) {
        double total = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) total += w[i] * values[i];
        return total;
    };
    const std::vector<double> ones(n, 1.0);

    for (int k = 0; k <= steps; ++k) {
        const CompartmentState& state = traj.states[static_cast<std::size_t>(k)];
        series.sum_s.push_back(sum_with(state.s, ones));
        series.sum_e.push_back(sum_with(state.e, ones));
        series.sum_x.push_back(sum_with(state.x, ones));
        series.weighted_sum_s.push_back(sum_with(state.s, weight));
        series.weighted_sum_e.push_back(sum_with(state.e, weight));
        series.weighted_sum_x.push_back(sum_with(state.x, weight));
    }

    series.rec_s.push_back(series.sum_s.front());
    series.rec_e.push_back(series.sum_e.front());
    series.rec_x.push_back(series.sum_x.front());
    series.weighted_rec_s.push_back(series.weighted_sum_s.front());
    series.weighted_rec_e.push_back(series.weighted_sum_e.front());
    series.weighted_rec_x.push_back(series.weighted_sum_x.front());

    for (int k = 0; k < steps; ++k) {
        const CompartmentState& state = traj.states[static_cast<std::size_t>(k)];
        double exposure = 0.0, transition = 0.0, healing = 0.0;
        double w_exposure = 0.0, w_transition = 0.0, w_healing = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double node_exposure = params.beta[i] * state.x[i] * state.s[i];
            const double node_transition = params.sigma[i] * state.e[i];
            const double node_healing = params.delta[i] * state.x[i];
            exposure += node_exposure;
            transition += node_transition;
            healing += node_healing;
            w_exposure += weight[i] * node_exposure;
            w_transition += weight[i] * node_transition;
            w_healing += weight[i] * node_healing;
        }
        double vaccinated = 0.0, w_vaccinated = 0.0;
        const auto& moves = traj.vaccine_moves[static_cast<std::size_t>(k)];
        for (std::size_t i = 0; i < moves.size(); ++i) {
            vaccinated += moves[i];
            w_vaccinated += weight[i] * moves[i];
        }
        const double h = params.h;
        series.rec_s.push_back(series.rec_s.back() - h * exposure - vaccinated);
        series.rec_e.push_back(series.rec_e.back() + h * (exposure - transition));
        series.rec_x.push_back(series.rec_x.back() + h * (transition - healing));
        series.weighted_rec_s.push_back(series.weighted_rec_s.back() - h * w_exposure -
                                        w_vaccinated);
        series.weighted_rec_e.push_back(series.weighted_rec_e.back() +
                                        h * (w_exposure - w_transition));
        series.weighted_rec_x.push_back(series.weighted_rec_x.back() +
                                        h * (w_transition - w_healing));
    }

    for (int k = 0; k <= steps; ++k) {
        const auto at = static_cast<std::size_t>(k);
        series.max_discrepancy = std::max(
            {series.max_discrepancy, std::abs(series.sum_s[at] - series.rec_s[at]),
             std::abs(series.sum_e[at] - series.rec_e[at]),
             std::abs(series.sum_x[at] - series.rec_x[at])});
        series.max_weighted_discrepancy =
            std::max({series.max_weighted_discrepancy,
                      std::abs(series.weighted_sum_s[at] - series.weighted_rec_s[at]),
                      std::abs(series.weighted_sum_e[at] - series.weighted_rec_e[at]),
                      std::abs(series.weighted_sum_x[at] - series.weighted_rec_x[at])});
    }
    return series;
}

/// First step index where the mean infected proportion is at or below the
/// threshold, scanning from the initial state.
inline std::optional<int> detect_extinction(const Trajectory& traj, double threshold = 1e-4) {
    if (!(threshold > 0.0)) throw ScenarioError("extinction threshold must be strictly positive");
    for (int k = 0; k <= traj.steps(); ++k)
        if (traj.states[static_cast<std::size_t>(k)].mean_x() <= threshold) return k;
    return std::nullopt;
}

/// max_i |s_i - mean(s)|; zero exactly when the susceptibles agree.
inline double consensus_error(const CompartmentState& state) {
    const double average = state.mean_s();
    double worst = 0.0;
    for (double v : state.s) worst = std::max(worst, std::abs(v - average));
    return worst;
}

/// Cumulative infections expressed as recovered mass:
///   burden = (h/n) * sum_k sum_i delta_i x_i^k
/// summed over applied steps (the final state contributes no step). The h
/// factor matches the recovery accrual of the update equations, so without a
/// vaccine the burden of a run carried to equilibrium equals the final mean
/// recovered proportion.
inline double infection_burden(const Trajectory& traj, const SpreadParams& params) {
    const std::size_t n = traj.nodes();
    if (params.size() != n) throw ScenarioError("infection_burden: dimension mismatch");
    double total = 0.0;
    for (int k = 0; k < traj.steps(); ++k) {
        const CompartmentState& state = traj.states[static_cast<std::size_t>(k)];
        for (std::size_t i = 0; i < n; ++i) total += params.delta[i] * state.x[i];
    }
    return params.h * total / static_cast<double>(n);
}

struct EquilibriumReport {
    std::optional<int> extinction_step;
    double alpha = 0.0; // common susceptible level, reported as mean(s) at the final step
    double consensus_error = 0.0;
    double burden = 0.0;
    double final_mean_s = 0.0, final_mean_e = 0.0, final_mean_x = 0.0, final_mean_r = 0.0;
};

inline EquilibriumReport analyze(const Trajectory& traj, const SpreadParams& params,
                                 double extinction_threshold = 1e-4) {
    EquilibriumReport report;
    report.extinction_step = detect_extinction(traj, extinction_threshold);
    const CompartmentState& final_state = traj.states.back();
    report.alpha = final_state.mean_s();
    report.consensus_error = consensus_error(final_state);
    report.burden = infection_burden(traj, params);
    report.final_mean_s = final_state.mean_s();
    report.final_mean_e = final_state.mean_e();
    report.final_mean_x = final_state.mean_x();
    report.final_mean_r = final_state.mean_r();
    return report;
}

} // namespace epiflow
