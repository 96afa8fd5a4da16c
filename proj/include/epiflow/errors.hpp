/* Error taxonomy for the epiflow library.
 *
 * ScenarioError: the scenario description itself is invalid (bad dimensions,
 *   parameter bounds, unbalanced flows).  ParseError adds a field path for
 *   document-level diagnostics.
 * ModelViolation: a well-definedness condition failed while stepping the
 *   model; carries the step and node it happened at.
 * IoError: filesystem and output failures.
 */
#pragma once

#include <stdexcept>
#include <string>

namespace epiflow {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class ScenarioError : public Error {
public:
    explicit ScenarioError(const std::string& what) : Error(what) {}
};

class ParseError : public ScenarioError {
public:
    ParseError(std::string field, const std::string& what)
        : ScenarioError(field + ": " + what), field_(std::move(field)) {}

    const std::string& field() const { return field_; }

private:
    std::string field_;
};

class ModelViolation : public Error {
public:
    ModelViolation(int step, int node, const std::string& what)
        : Error("step " + std::to_string(step) +
                (node >= 0 ? ", node " + std::to_string(node) : std::string()) + ": " + what),
          step_(step),
          node_(node) {}

    int step() const { return step_; }
    /// -1 when the violation is not tied to a single node.
    int node() const { return node_; }

private:
    int step_;
    int node_;
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(what) {}
};

} // namespace epiflow
