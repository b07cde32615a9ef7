#pragma once

#include <stdexcept>
#include <string>

namespace mutualsim {

// Error categories map one-to-one onto CLI exit codes (see tools/).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when an input makes a closed-form expression undefined
/// (q0 = 1, p_idle = 0, mu <= lambda_eff, ...).
class DegenerateInputError : public SolverError {
public:
    using SolverError::SolverError;
};

class SimulationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Parse failure with the offending line (1-based) and, when known, the field.
class ParseError : public ConfigError {
public:
    ParseError(const std::string& what, int line = 0, std::string field = {})
        : ConfigError(format(what, line, field)), line_(line), field_(std::move(field)) {}

    int line() const noexcept { return line_; }
    const std::string& field() const noexcept { return field_; }

private:
    static std::string format(const std::string& what, int line, const std::string& field) {
        std::string msg;
        if (line > 0) msg += "line " + std::to_string(line) + ": ";
        if (!field.empty()) msg += "field '" + field + "': ";
        return msg + what;
    }

    int line_;
    std::string field_;
};

}  // namespace mutualsim
