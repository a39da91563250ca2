#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tablebench {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input data (ragged CSV rows, empty input, bad schema).
class StructuralError : public Error {
public:
    using Error::Error;
};

/// Unrecoverable failure while parsing a serialized table.
/// Carries the byte offset where parsing gave up.
class ParseError : public Error {
public:
    ParseError(std::size_t position, std::string reason)
        : Error("parse error at offset " + std::to_string(position) + ": " + reason),
          position_(position),
          reason_(std::move(reason)) {}

    std::size_t position() const noexcept { return position_; }
    const std::string& reason() const noexcept { return reason_; }

private:
    std::size_t position_;
    std::string reason_;
};

/// An operator cannot be applied to this table (e.g. merging columns of a
/// one-column table).
class NotApplicableError : public Error {
public:
    using Error::Error;
};

/// Even a single table row does not fit the token budget.
class BudgetError : public Error {
public:
    using Error::Error;
};

/// Task generation is impossible for the given table.
class GenerationError : public Error {
public:
    using Error::Error;
};

/// Scoring preconditions violated (e.g. zero completions).
class ScoringError : public Error {
public:
    using Error::Error;
};

/// Both sample vectors have zero pooled variance; the t statistic is undefined.
class DegenerateVarianceError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration: unknown ids, missing fields, bad credentials.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Remote endpoint failure after the retry budget is exhausted.
class TransportError : public Error {
public:
    TransportError(int status, const std::string& what)
        : Error(what), status_(status) {}

    int status() const noexcept { return status_; }

private:
    int status_;
};

/// Replay backend was asked for a prompt that was never recorded.
class CacheMissError : public Error {
public:
    using Error::Error;
};

}  // namespace tablebench
