#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace wpcausal {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input data or file contents (missing cell, duplicate column, ...).
class DataError : public Error {
public:
    using Error::Error;
};

/// Inconsistent or unsupported configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Too few time points or parameters that no observation informs.
class IdentificationError : public Error {
public:
    using Error::Error;
};

/// A matrix that has to be inverted (or raised to a negative power) is singular.
class SingularityError : public Error {
public:
    SingularityError(const std::string& what, double eigenvalue)
        : Error(what), eigenvalue_(eigenvalue) {}
    double eigenvalue() const noexcept { return eigenvalue_; }

private:
    double eigenvalue_;
};

/// Regression design with linearly dependent columns.
class CollinearityError : public Error {
public:
    CollinearityError(const std::string& what, std::vector<std::string> columns)
        : Error(what), columns_(std::move(columns)) {}
    const std::vector<std::string>& columns() const noexcept { return columns_; }

private:
    std::vector<std::string> columns_;
};

/// Treatment density underflow in the weighting model.
class PositivityError : public Error {
public:
    using Error::Error;
};

/// Iterative solver did not converge; carries a printable trace.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, std::string trace)
        : Error(what), trace_(std::move(trace)) {}
    const std::string& trace() const noexcept { return trace_; }

private:
    std::string trace_;
};

}  // namespace wpcausal
