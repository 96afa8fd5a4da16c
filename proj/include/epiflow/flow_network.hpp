/* Traveler-flow networks between sub-populations.
 *
 * Index convention, used everywhere in this library and in the scenario file
 * format: a flow matrix entry (i, j) is the number of individuals moving from
 * node j INTO node i per time step.  Column j therefore holds node j's
 * outflows and row i holds node i's inflows.
 *
 * Derived quantities:
 *   - outflow fractions gamma[j] = (column sum j) / population[j]
 *   - routing weights   w(i, j)  = share of travelers leaving j that go to i
 *
 * Structural checks:
 *   - per-node flow balance (inflow == outflow within a tolerance)
 *   - K-strong connectivity of the time-varying routing graph
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "epiflow/errors.hpp"
#include "epiflow/matrix.hpp"

namespace epiflow {

/// Routing weights below this are treated as no edge at all.
inline constexpr double kEdgeThreshold = 1e-12;

/// Allowed deviation of a nonzero weight column from summing to 1.
inline constexpr double kWeightColumnTol = 1e-12;

/// Per-node traveler counts, entry (into, from). Validated on construction:
/// square, zero diagonal, no negative entries. Column sums are checked
/// against populations by outflow_fraction / validate_params, which know N.
class FlowMatrix {
public:
    /// Empty placeholder; scenario assembly fills in a real matrix.
    FlowMatrix() = default;

    explicit FlowMatrix(Matrix counts) : counts_(std::move(counts)) {
        if (counts_.rows() != counts_.cols())
            throw ScenarioError("flow matrix must be square");
        for (std::size_t i = 0; i < counts_.rows(); ++i) {
            for (std::size_t j = 0; j < counts_.cols(); ++j) {
                const double f = counts_(i, j);
                if (i == j && f != 0.0)
                    throw ScenarioError("flow matrix diagonal must be zero (node " +
                                        std::to_string(i) + ")");
                if (!(f >= 0.0) || !std::isfinite(f))
                    throw ScenarioError("flow matrix entries must be finite and non-negative (" +
                                        std::to_string(i) + "," + std::to_string(j) + ")");
            }
        }
    }

    static FlowMatrix zero(std::size_t n) { return FlowMatrix(Matrix(n, n, 0.0)); }

    std::size_t size() const { return counts_.rows(); }

    /// Travelers moving from `from` into `into` per step.
    double flow(std::size_t into, std::size_t from) const { return counts_(into, from); }

    double inflow(std::size_t node) const { return counts_.row_sum(node); }
    double outflow(std::size_t node) const { return counts_.col_sum(node); }

    FlowMatrix scaled(double factor) const {
        if (!(factor >= 0.0) || !std::isfinite(factor))
            throw ScenarioError("flow scale factor must be finite and non-negative");
        Matrix m(size(), size());
        for (std::size_t i = 0; i < size(); ++i)
            for (std::size_t j = 0; j < size(); ++j) m(i, j) = factor * counts_(i, j);
        return FlowMatrix(std::move(m));
    }

    const Matrix& raw() const { return counts_; }

    bool operator==(const FlowMatrix&) const = default;

private:
    Matrix counts_;
};

/// Routing proportions, entry (i, j) = fraction of travelers leaving j that
/// head to i. Columns of nodes with any outflow sum to 1; nodes without
/// outflow have an all-zero column.
class WeightMatrix {
public:
    explicit WeightMatrix(Matrix weights) : weights_(std::move(weights)) {
        if (weights_.rows() != weights_.cols())
            throw ScenarioError("weight matrix must be square");
        for (std::size_t j = 0; j < weights_.cols(); ++j) {
            double column = 0.0;
            for (std::size_t i = 0; i < weights_.rows(); ++i) {
                const double w = weights_(i, j);
                if (i == j && w != 0.0)
                    throw ScenarioError("weight matrix diagonal must be zero (node " +
                                        std::to_string(i) + ")");
                if (!(w >= 0.0) || w > 1.0 + kWeightColumnTol)
                    throw ScenarioError("weight entries must lie in [0,1] (" + std::to_string(i) +
                                        "," + std::to_string(j) + ")");
                column += w;
            }
            if (column != 0.0 && std::abs(column - 1.0) > kWeightColumnTol)
                throw ScenarioError("weight column " + std::to_string(j) +
                                    " must sum to 0 or 1, got " + std::to_string(column));
        }
    }

    std::size_t size() const { return weights_.rows(); }
    double at(std::size_t into, std::size_t from) const { return weights_(into, from); }
    const Matrix& raw() const { return weights_; }

private:
    Matrix weights_;
};

/// Per-step flow matrices: a default used everywhere plus sparse per-step
/// overrides. Step k uses the override for k when present, else the default.
struct FlowSchedule {
    FlowMatrix default_matrix;
    std::map<int, FlowMatrix> overrides;

    const FlowMatrix& at(int step) const {
        auto it = overrides.find(step);
        return it == overrides.end() ? default_matrix : it->second;
    }

    std::size_t size() const { return default_matrix.size(); }
};

/// Fraction of each node's population that leaves per step:
/// gamma[j] = outflow(j) / population[j]. Errors if any gamma exceeds 1,
/// since more travelers than residents is not a meaningful scenario.
inline std::vector<double> outflow_fraction(const FlowMatrix& flow,
                                            const std::vector<double>& populations) {
    const std::size_t n = flow.size();
    if (populations.size() != n)
        throw ScenarioError("population vector length " + std::to_string(populations.size()) +
                            " does not match flow matrix size " + std::to_string(n));
    std::vector<double> gamma(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        if (!(populations[j] > 0.0))
            throw ScenarioError("population must be strictly positive (node " + std::to_string(j) +
                                ")");
        gamma[j] = flow.outflow(j) / populations[j];
        if (gamma[j] > 1.0 + 1e-12)
            throw ScenarioError("outflow exceeds population at node " + std::to_string(j) +
                                " (gamma = " + std::to_string(gamma[j]) + ")");
    }
    return gamma;
}

/// Columns are normalized to routing proportions. A node with no outflow
/// keeps an all-zero column rather than producing 0/0.
inline WeightMatrix normalize_flows(const FlowMatrix& flow) {
    const std::size_t n = flow.size();
    Matrix w(n, n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        const double total = flow.outflow(j);
        if (total > 0.0) {
            for (std::size_t i = 0; i < n; ++i)
                if (i != j) w(i, j) = flow.flow(i, j) / total;
        }
    }
    return WeightMatrix(std::move(w));
}

/// Rebuilds traveler counts from fractions and routing weights:
/// F(i, j) = gamma[j] * w(i, j) * population[j].
inline FlowMatrix flows_from_weights(const std::vector<double>& gamma, const WeightMatrix& weights,
                                     const std::vector<double>& populations) {
    const std::size_t n = weights.size();
    if (gamma.size() != n || populations.size() != n)
        throw ScenarioError("flows_from_weights: dimension mismatch");
    Matrix f(n, n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        if (gamma[j] < 0.0 || gamma[j] > 1.0 + 1e-12)
            throw ScenarioError("outflow fraction out of [0,1] at node " + std::to_string(j));
        for (std::size_t i = 0; i < n; ++i)
            if (i != j) f(i, j) = gamma[j] * weights.at(i, j) * populations[j];
    }
    return FlowMatrix(std::move(f));
}

struct BalanceReport {
    bool balanced = true;
    double max_residual = 0.0;
    std::size_t worst_node = 0;
};

/// Per-node |inflow - outflow| against a tolerance in individuals/step.
inline BalanceReport check_balance(const FlowMatrix& flow, double tol) {
    if (!(tol >= 0.0)) throw ScenarioError("balance tolerance must be non-negative");
    BalanceReport report;
    for (std::size_t i = 0; i < flow.size(); ++i) {
        const double residual = std::abs(flow.inflow(i) - flow.outflow(i));
        if (residual > report.max_residual) {
            report.max_residual = residual;
            report.worst_node = i;
        }
    }
    report.balanced = report.max_residual <= tol;
    return report;
}

namespace detail {

// Tarjan's algorithm; we only need the component count.
inline void scc_visit(const std::vector<std::vector<int>>& graph, int vertex,
                      std::vector<int>& index, std::vector<int>& lowlink,
                      std::vector<bool>& on_stack, std::vector<int>& stack, int& next_index,
                      int& components) {
    index[vertex] = lowlink[vertex] = next_index++;
    stack.push_back(vertex);
    on_stack[vertex] = true;
    for (int succ : graph[vertex]) {
        if (index[succ] < 0) {
            scc_visit(graph, succ, index, lowlink, on_stack, stack, next_index, components);
            lowlink[vertex] = std::min(lowlink[vertex], lowlink[succ]);
        } else if (on_stack[succ]) {
            lowlink[vertex] = std::min(lowlink[vertex], index[succ]);
        }
    }
    if (lowlink[vertex] == index[vertex]) {
        ++components;
        int popped;
        do {
            popped = stack.back();
            stack.pop_back();
            on_stack[popped] = false;
        } while (popped != vertex);
    }
}

inline int count_sccs(const std::vector<std::vector<int>>& graph) {
    const int n = static_cast<int>(graph.size());
    std::vector<int> index(n, -1), lowlink(n, 0), stack;
    std::vector<bool> on_stack(n, false);
    int next_index = 0, components = 0;
    for (int v = 0; v < n; ++v)
        if (index[v] < 0)
            scc_visit(graph, v, index, lowlink, on_stack, stack, next_index, components);
    return components;
}

// Adjacency of the routing graph: edge j -> i wherever w(i, j) clears the
// edge threshold.
inline std::vector<std::vector<bool>> edge_set(const FlowMatrix& flow) {
    const std::size_t n = flow.size();
    WeightMatrix w = normalize_flows(flow);
    std::vector<std::vector<bool>> edges(n, std::vector<bool>(n, false));
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i)
            if (i != j && w.at(i, j) > kEdgeThreshold) edges[j][i] = true;
    return edges;
}

} // namespace detail

inline bool strongly_connected(const std::vector<std::vector<int>>& adjacency) {
    if (adjacency.empty()) return true;
    return detail::count_sccs(adjacency) == 1;
}

struct ConnectivityReport {
    /// Smallest K such that every K-step union of routing edges over the
    /// checked horizon is strongly connected; empty if none up to max_k.
    std::optional<int> k_bound;
    /// Per window-start result for the reported K (for max_k on failure).
    std::vector<bool> window_results;

    bool connected() const { return k_bound.has_value(); }
};

/// Scans window lengths K = 1..max_k over steps [0, horizon) and reports the
/// smallest K whose every edge-union window is strongly connected.
inline ConnectivityReport check_k_strong_connectivity(const FlowSchedule& schedule, int horizon,
                                                      int max_k) {
    if (max_k < 1 || horizon < max_k)
        throw ScenarioError("check_k_strong_connectivity requires horizon >= max_k >= 1");
    const std::size_t n = schedule.size();

    // One edge set per distinct matrix; steps map onto them.
    std::vector<std::vector<std::vector<bool>>> unique_edges;
    unique_edges.push_back(detail::edge_set(schedule.default_matrix));
    std::vector<int> step_edges(static_cast<std::size_t>(horizon), 0);
    for (const auto& [step, matrix] : schedule.overrides) {
        if (step < 0 || step >= horizon) continue;
        unique_edges.push_back(detail::edge_set(matrix));
        step_edges[static_cast<std::size_t>(step)] = static_cast<int>(unique_edges.size()) - 1;
    }

    const bool static_schedule = unique_edges.size() == 1;
    ConnectivityReport report;
    for (int k_bound = 1; k_bound <= max_k; ++k_bound) {
        const int window_count = horizon - k_bound + 1;
        // All windows of a static schedule share one edge union.
        const int distinct_windows = static_schedule ? 1 : window_count;
        std::vector<bool> results(static_cast<std::size_t>(window_count), false);
        bool all_connected = true;
        for (int start = 0; start < distinct_windows; ++start) {
            std::vector<std::vector<bool>> merged(n, std::vector<bool>(n, false));
            for (int offset = 0; offset < k_bound; ++offset) {
                const auto& edges = unique_edges[static_cast<std::size_t>(
                    step_edges[static_cast<std::size_t>(start + offset)])];
                for (std::size_t a = 0; a < n; ++a)
                    for (std::size_t b = 0; b < n; ++b)
                        if (edges[a][b]) merged[a][b] = true;
            }
            std::vector<std::vector<int>> adjacency(n);
            for (std::size_t a = 0; a < n; ++a)
                for (std::size_t b = 0; b < n; ++b)
                    if (merged[a][b]) adjacency[a].push_back(static_cast<int>(b));
            results[static_cast<std::size_t>(start)] = strongly_connected(adjacency);
            all_connected = all_connected && results[static_cast<std::size_t>(start)];
        }
        if (static_schedule)
            std::fill(results.begin() + 1, results.end(), results.front());
        report.window_results = std::move(results);
        if (all_connected) {
            report.k_bound = k_bound;
            return report;
        }
    }
    return report;
}

} // namespace epiflow
