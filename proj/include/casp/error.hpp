#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace casp {

/// Base class for every error raised by the library. The CLI maps the
/// derived categories onto process exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file (bad header, unparsable date, duplicate rows).
class FormatError : public Error {
public:
    using Error::Error;
};

/// Not enough usable observations for the requested computation.
class InsufficientDataError : public Error {
public:
    using Error::Error;
};

/// Caller passed an argument outside the documented domain.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// The constraint set admits no feasible portfolio (k*lower > 1 or k*upper < 1).
class InfeasibleConstraintsError : public Error {
public:
    using Error::Error;
};

/// A metric is undefined for the given input (zero variance, constant ranks).
class UndefinedMetricError : public Error {
public:
    using Error::Error;
};

/// Experiment configuration could not be parsed or validated.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// File could not be read or written.
class IoError : public Error {
public:
    using Error::Error;
};

/// The QP solver ran out of iterations. Carries the best iterate found.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, std::vector<double> best_iterate, double residual)
        : Error(what), best_iterate_(std::move(best_iterate)), residual_(residual) {}

    const std::vector<double>& best_iterate() const noexcept { return best_iterate_; }
    double residual() const noexcept { return residual_; }

private:
    std::vector<double> best_iterate_;
    double residual_;
};

}  // namespace casp
