#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace subliminal {

enum class ErrorCode {
    ParseError,
    SchemaViolation,
    LineageViolation,
    DuplicateCheckpoint,
    StorageUnreadable,
    UnknownCheckpoint,
    MissingReference,
    DuplicateId,
    CorpusTooSmall,
    EmptyDataset,
    BackendFailure,
    NonFiniteLoss,
    InvalidRequest,
    EmptyTestSet,
    YieldTooLow,
    PoolExhausted,
    JudgeUnavailable,
    EmptyProbeSet,
    EmptyBenchmark,
    EmptyCurve,
    NoSharedBudgets,
    InsufficientTail,
    EmptySelection,
    ShapeMismatch,
    EmptyFamily,
    TooFewCheckpoints,
    DegenerateVariance,
    MissingAnalysis,
    StageFailure,
};

std::string_view to_string(ErrorCode code);

/// Every failure the library reports carries one of the codes above so
/// callers (and tests) can branch on the kind without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

}  // namespace subliminal
