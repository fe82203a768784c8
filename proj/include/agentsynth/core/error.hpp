#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace agentsynth {

enum class ErrorKind {
    InvalidArgument,
    // tool catalog
    MissingName,
    DuplicateParameter,
    DuplicateTool,
    MalformedSchema,
    EmptyGraph,
    // backends
    BackendFailure,
    MalformedGeneration,
    // plan composition
    IncompatibleInputs,
    NothingToMask,
    // quality control
    EmptyText,
    InsufficientCandidates,
    // scheduling
    ExhaustedRetries,
    TooLargeForExhaustive,
    // workflows / trajectories
    PoolTooSmall,
    CycleDetected,
    ParseError,
    ConsistencyFailure,
    UnresolvableCondition,
    GenerationRejected,
    // objective math
    GroupTooSmall,
    ShapeMismatch,
    EmptySeries,
    BadAlphaOrdering,
    LambdaOutOfRange,
    NotNormalized,
    ZeroLoad,
    // pipeline
    ConfigError,
    StageError,
};

constexpr std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::MissingName: return "MissingName";
        case ErrorKind::DuplicateParameter: return "DuplicateParameter";
        case ErrorKind::DuplicateTool: return "DuplicateTool";
        case ErrorKind::MalformedSchema: return "MalformedSchema";
        case ErrorKind::EmptyGraph: return "EmptyGraph";
        case ErrorKind::BackendFailure: return "BackendFailure";
        case ErrorKind::MalformedGeneration: return "MalformedGeneration";
        case ErrorKind::IncompatibleInputs: return "IncompatibleInputs";
        case ErrorKind::NothingToMask: return "NothingToMask";
        case ErrorKind::EmptyText: return "EmptyText";
        case ErrorKind::InsufficientCandidates: return "InsufficientCandidates";
        case ErrorKind::ExhaustedRetries: return "ExhaustedRetries";
        case ErrorKind::TooLargeForExhaustive: return "TooLargeForExhaustive";
        case ErrorKind::PoolTooSmall: return "PoolTooSmall";
        case ErrorKind::CycleDetected: return "CycleDetected";
        case ErrorKind::ParseError: return "ParseError";
        case ErrorKind::ConsistencyFailure: return "ConsistencyFailure";
        case ErrorKind::UnresolvableCondition: return "UnresolvableCondition";
        case ErrorKind::GenerationRejected: return "GenerationRejected";
        case ErrorKind::GroupTooSmall: return "GroupTooSmall";
        case ErrorKind::ShapeMismatch: return "ShapeMismatch";
        case ErrorKind::EmptySeries: return "EmptySeries";
        case ErrorKind::BadAlphaOrdering: return "BadAlphaOrdering";
        case ErrorKind::LambdaOutOfRange: return "LambdaOutOfRange";
        case ErrorKind::NotNormalized: return "NotNormalized";
        case ErrorKind::ZeroLoad: return "ZeroLoad";
        case ErrorKind::ConfigError: return "ConfigError";
        case ErrorKind::StageError: return "StageError";
    }
    return "Unknown";
}

/// Every failure raised by the library. `detail()` carries the offending
/// field, tool, or reason so callers can report it without parsing what().
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string detail)
        : std::runtime_error(std::string(to_string(kind)) + ": " + detail),
          kind_(kind),
          detail_(std::move(detail)) {}

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorKind kind_;
    std::string detail_;
};

/// Backend errors additionally carry the transport status and whether a
/// retry could succeed.
class BackendError : public Error {
public:
    BackendError(int status, bool retriable, std::string detail)
        : Error(ErrorKind::BackendFailure, std::move(detail)),
          status_(status),
          retriable_(retriable) {}

    int status() const noexcept { return status_; }
    bool retriable() const noexcept { return retriable_; }

private:
    int status_;
    bool retriable_;
};

/// Grammar failures carry the byte offset where parsing stopped and what was
/// expected there.
class ParseFailure : public Error {
public:
    ParseFailure(std::size_t position, std::string expectation)
        : Error(ErrorKind::ParseError, "at " + std::to_string(position) + ": " + expectation),
          position_(position),
          expectation_(std::move(expectation)) {}

    std::size_t position() const noexcept { return position_; }
    const std::string& expectation() const noexcept { return expectation_; }

private:
    std::size_t position_;
    std::string expectation_;
};

[[noreturn]] inline void fail(ErrorKind kind, std::string detail) {
    throw Error(kind, std::move(detail));
}

inline void require(bool condition, ErrorKind kind, std::string_view detail) {
    if (!condition) throw Error(kind, std::string(detail));
}

}  // namespace agentsynth
