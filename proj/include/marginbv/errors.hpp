#pragma once

#include <stdexcept>
#include <string>

namespace marginbv {

// Base for every error raised by the library. The CLI maps these onto exit
// codes: ConfigError and its relatives give 2, everything else is a failure.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Unknown loss name in the catalogue.
class CatalogueError : public Error {
public:
    using Error::Error;
};

// Out-of-range or malformed parameter (e.g. smooth hinge t <= 0).
class ParameterError : public Error {
public:
    using Error::Error;
};

// A function evaluated to a non-finite value, or an iterative solver failed.
class NumericError : public Error {
public:
    using Error::Error;
};

// A decomposition was requested for a loss outside its class
// (e.g. the label-free variance for a non gradient-symmetric loss).
class InapplicableError : public Error {
public:
    using Error::Error;
};

// The optimal link could not be bracketed for an extreme probability.
class LinkDomainError : public NumericError {
public:
    using NumericError::NumericError;
};

// A margin fell outside the invertible range of the link beyond the clamping budget.
class RangeError : public NumericError {
public:
    using NumericError::NumericError;
};

// Limit of the Bregman representation did not settle before the truncation cap.
class TruncationError : public NumericError {
public:
    TruncationError(const std::string& what, double last_value, double last_level)
        : NumericError(what), last_value_(last_value), last_level_(last_level) {}
    double last_value() const { return last_value_; }
    double last_level() const { return last_level_; }

private:
    double last_value_;
    double last_level_;
};

// A mathematical invariant failed by more than rounding can explain.
class InvariantViolation : public Error {
public:
    using Error::Error;
};

// Training produced a non-finite loss or gradient.
class DivergenceError : public NumericError {
public:
    DivergenceError(const std::string& what, int iteration)
        : NumericError(what), iteration_(iteration) {}
    int iteration() const { return iteration_; }

private:
    int iteration_;
};

// Malformed user input: bad CSV, bad flag combination, invalid synthetic spec.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace marginbv
