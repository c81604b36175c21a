#pragma once

#include <stdexcept>
#include <string>

namespace facet {

// Base of every error raised by the library. The CLI maps the two branches
// below onto its exit codes (1 = validation, 2 = runtime).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad caller input: non-finite parameters, unknown ids, malformed rows.
class InputError : public Error {
public:
    using Error::Error;
};

// Inconsistent configuration (collapse maps, policies, plan settings).
class ConfigError : public InputError {
public:
    using InputError::InputError;
};

// A required observation or distribution is absent.
class MissingDataError : public InputError {
public:
    using InputError::InputError;
};

// Train/test split would leak a cluster across folds.
class SplitError : public InputError {
public:
    using InputError::InputError;
};

// Estimation refused because the response network has disjoint subsets.
class DisconnectedError : public Error {
public:
    DisconnectedError(std::string message, std::string component_report)
        : Error(std::move(message)), report_(std::move(component_report)) {}
    const std::string& component_report() const noexcept { return report_; }

private:
    std::string report_;
};

// Judging-plan constraints cannot be met.
class PlanError : public Error {
public:
    using Error::Error;
};

// Multi-step pipeline failure (e.g. every rater excluded).
class PipelineError : public Error {
public:
    using Error::Error;
};

}  // namespace facet
