#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rrsim {

/// Invalid generator or run parameter. `field()` names the offending input.
class ParamError : public std::invalid_argument {
public:
    ParamError(std::string field, const std::string& what)
        : std::invalid_argument(field + ": " + what), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// Malformed trace syntax; carries the 1-based line number.
class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Well-formed trace that violates a data-model invariant.
class ValidationError : public std::runtime_error {
public:
    ValidationError(long long object_id, const std::string& what)
        : std::runtime_error("object " + std::to_string(object_id) + ": " + what),
          object_id_(object_id) {}
    long long object_id() const noexcept { return object_id_; }

private:
    long long object_id_;
};

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class CalibrationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class StateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Bug trap for traffic and pixel accounting.
class AccountingError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace rrsim
