#pragma once

#include <stdexcept>
#include <string>

namespace sfcausal {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid distribution or model parameters, non-finite scalar inputs.
class DomainError : public Error {
public:
    using Error::Error;
};

/// A required column is missing from a dataset.
class SchemaError : public Error {
public:
    SchemaError(const std::string& column, const std::string& what)
        : Error(what), column_(column) {}
    const std::string& column() const noexcept { return column_; }

private:
    std::string column_;
};

/// Malformed data or arguments (non-binary treatment, too few rows, ...).
class InputError : public Error {
public:
    using Error::Error;
};

/// The data cannot identify the requested quantity (empty group, empty cell, weak jump).
class IdentificationError : public Error {
public:
    using Error::Error;
};

/// Rank deficiency and other linear-algebra failures.
class LinAlgError : public Error {
public:
    using Error::Error;
};

/// Objective or likelihood evaluation returned a non-finite value.
class EvaluationError : public Error {
public:
    EvaluationError(long coordinate, const std::string& what)
        : Error(what), coordinate_(coordinate) {}
    long coordinate() const noexcept { return coordinate_; }

private:
    long coordinate_;
};

/// An optimizer produced an inconsistent or unusable solution.
class OptimizationError : public Error {
public:
    using Error::Error;
};

}  // namespace sfcausal
