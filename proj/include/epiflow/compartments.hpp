/* Per-node compartment proportions and spread parameters. */
#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "epiflow/errors.hpp"

namespace epiflow {

/// Per-node sums may drift from 1 by at most this much before a state stops
/// being considered on the simplex.
inline constexpr double kSimplexSumTol = 1e-9;

/// Individual proportions may undershoot 0 / overshoot 1 by at most this.
inline constexpr double kSimplexRangeSlack = 1e-12;

inline double mean(const std::vector<double>& values) {
    if (values.empty()) return 0.0;
    double total = 0.0;
    for (double v : values) total += v;
    return total / static_cast<double>(values.size());
}

/// Proportions of each sub-population that are susceptible, exposed,
/// infected, and recovered. Every node's four entries sum to 1.
struct CompartmentState {
    std::vector<double> s, e, x, r;

    std::size_t size() const { return s.size(); }

    double node_sum(std::size_t i) const { return s[i] + e[i] + x[i] + r[i]; }

    double mean_s() const { return mean(s); }
    double mean_e() const { return mean(e); }
    double mean_x() const { return mean(x); }
    double mean_r() const { return mean(r); }

    static CompartmentState healthy(std::size_t n) {
        return CompartmentState{std::vector<double>(n, 1.0), std::vector<double>(n, 0.0),
                                std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
    }

    bool operator==(const CompartmentState&) const = default;
};

/// Throws when any node is off the unit simplex.
inline void check_simplex(const CompartmentState& state, double sum_tol = kSimplexSumTol,
                          double range_slack = kSimplexRangeSlack) {
    const std::size_t n = state.size();
    if (state.e.size() != n || state.x.size() != n || state.r.size() != n)
        throw ScenarioError("compartment vectors have unequal lengths");
    for (std::size_t i = 0; i < n; ++i) {
        for (double q : {state.s[i], state.e[i], state.x[i], state.r[i]}) {
            if (!std::isfinite(q) || q < -range_slack || q > 1.0 + range_slack)
                throw ScenarioError("compartment proportion out of [0,1] at node " +
                                    std::to_string(i) + " (value " + std::to_string(q) + ")");
        }
        const double total = state.node_sum(i);
        if (std::abs(total - 1.0) > sum_tol)
            throw ScenarioError("compartments do not sum to 1 at node " + std::to_string(i) +
                                " (sum " + std::to_string(total) + ")");
    }
}

/// Spread rates per node plus the global sampling parameter h. beta is the
/// infection rate, sigma the exposed-to-infected rate, delta the healing
/// rate, and p_x the probability an infected individual travels.
struct SpreadParams {
    std::vector<double> beta, sigma, delta, p_x;
    double h = 1.0;

    std::size_t size() const { return beta.size(); }

    static SpreadParams homogeneous(std::size_t n, double beta, double sigma, double delta,
                                    double p_x, double h) {
        return SpreadParams{std::vector<double>(n, beta), std::vector<double>(n, sigma),
                            std::vector<double>(n, delta), std::vector<double>(n, p_x), h};
    }
};

} // namespace epiflow
