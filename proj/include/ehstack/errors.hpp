#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ehstack {

/// Input text could not be parsed. Carries the 1-based line number.
class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// A value violates a domain invariant.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Configuration is inconsistent (bad dt, missing file, unknown preset...).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Sampling-frequency scaling would make active tasks overlap.
class ScheduleError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Power profile cannot be scaled (idle power dominates, too short, ...).
class ProfileError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Energy bookkeeping failed to close. Never silently absorbed.
class ConsistencyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace ehstack
