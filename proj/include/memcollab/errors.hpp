#pragma once

#include <optional>
#include <stdexcept>
#include <string>

namespace memcollab {

// Base class for every error raised by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A domain-type invariant was violated (empty required field, per-task entry
// cap exceeded, inconsistent labels, ...).
struct InvariantViolation : Error {
    using Error::Error;
};

// Filesystem problem: unreadable/unwritable path.
struct IoError : Error {
    using Error::Error;
};

// Malformed record in a line-delimited file. `line` is 1-based.
struct SchemaError : Error {
    int line;
    SchemaError(int line_no, const std::string& what)
        : Error("line " + std::to_string(line_no) + ": " + what), line(line_no) {}
};

// Any failure surfaced by a model backend.
struct BackendError : Error {
    using Error::Error;
};

// Mock backend: no rule matched the last user message.
struct NoRuleMatched : BackendError {
    using BackendError::BackendError;
};

// Live backend: HTTP-level failure. Retryable.
struct TransportError : BackendError {
    std::optional<double> retry_after_seconds;
    explicit TransportError(const std::string& what,
                            std::optional<double> retry_after = std::nullopt)
        : BackendError(what), retry_after_seconds(retry_after) {}
};

struct RateLimited : TransportError {
    using TransportError::TransportError;
};

// Live backend replied but the body does not carry a completion.
struct MalformedResponse : BackendError {
    using BackendError::BackendError;
};

// Sandbox could not be set up or driven. Distinct from a test failure or a
// timeout, which are ordinary (passed=false) verification outcomes.
struct SandboxError : Error {
    using Error::Error;
};

// select_preference was handed a trajectory whose `correct` field is unset.
struct UnverifiedTrajectory : Error {
    using Error::Error;
};

// parse_constraints found zero lines matching the constraint grammar.
struct NoConstraintsFound : Error {
    using Error::Error;
};

struct EmptyBank : Error {
    using Error::Error;
};

// Evaluation dataset shares task ids with the bank's source tasks.
struct OverlapError : Error {
    using Error::Error;
};

struct DimensionMismatch : Error {
    using Error::Error;
};

struct NotNormalized : Error {
    using Error::Error;
};

struct DomainError : Error {
    using Error::Error;
};

// More than half of the tasks in a batch run failed outright.
struct RunFailure : Error {
    using Error::Error;
};

}  // namespace memcollab
