#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace pumpsched {

// Argument outside the documented domain of an operation.
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Operation called in the wrong lifecycle state (step before reset, ...).
class StateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Inconsistent configuration (bad coefficients, pump producing no power, ...).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input file is missing required structure.
class SchemaError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input data violates an invariant. Carries every offending line.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(std::vector<std::string> issues);

    const std::vector<std::string>& issues() const noexcept { return issues_; }

private:
    std::vector<std::string> issues_;
};

// Optimization diverged (non-finite loss, ...).
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace pumpsched
