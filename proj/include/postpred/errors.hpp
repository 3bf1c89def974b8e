#pragma once

#include <stdexcept>
#include <string>

namespace postpred {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Incompatible tensor shapes / axes.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Input outside an operation's mathematical domain (e.g. log of a non-positive value).
class DomainError : public Error {
public:
    using Error::Error;
};

// A caller broke an API precondition.
class ContractError : public Error {
public:
    using Error::Error;
};

// NaN/inf where a finite value is required.
class NumericError : public Error {
public:
    using Error::Error;
};

// Malformed input file (CSV, config).
class IngestionError : public Error {
public:
    using Error::Error;
};

// Invalid experiment configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Metric undefined for the given data (e.g. MAPE with all-zero targets).
class MetricError : public Error {
public:
    using Error::Error;
};

} // namespace postpred
