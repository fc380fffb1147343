#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace probe_router {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A file is missing, unreadable, or malformed at the byte/syntax level.
class LoadError : public Error {
public:
    using Error::Error;
};

/// Data parsed but violates a type invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Caller passed something outside an operation's precondition.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Rollouts or labels are missing for some questions.
class MissingDataError : public Error {
public:
    MissingDataError(const std::string& what, std::vector<std::string> ids)
        : Error(what), question_ids(std::move(ids)) {}
    std::vector<std::string> question_ids;
};

/// An iterative solver stopped before its gradient certificate held.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double norm)
        : Error(what), gradient_norm(norm) {}
    double gradient_norm;
};

/// Spearman/AUROC is undefined for the given input (constant or single-class).
class MetricUndefinedError : public Error {
public:
    using Error::Error;
};

class CalibrationError : public Error {
public:
    using Error::Error;
};

class PricingError : public Error {
public:
    using Error::Error;
};

class RoutingError : public Error {
public:
    using Error::Error;
};

}  // namespace probe_router
