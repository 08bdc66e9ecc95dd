#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace zoosight {

enum class ErrorCode {
    Precondition,
    InvalidConfig,
    IoError,
    // article / knowledge base
    NotFound,
    EmptySummary,
    InconsistentTaxonomy,
    UnknownParent,
    DeadEnd,
    // model gateway
    TransportError,
    RateLimited,
    MalformedResponse,
    ScriptExhausted,
    // captioning / augmentation
    PartialCaptions,
    DecodeError,
    DuplicateId,
    EmptyFeatureList,
    NoVisibleFeatures,
    // matching
    EmptyKnowledgeBase,
    OffListAnswer,
    AmbiguousAnswer,
    EmptyVoteSet,
    AllMatchesFailed,
    // evaluation
    MissingTruth,
    Empty,
    MissingTimestamp,
    EmptyVotes,
    // scoring
    UnparseableScore,
    OutOfRange,
    // review service
    InvalidLog,
    UnknownRun,
    UnknownItem,
    OffListLabel,
    ConflictingLabel,
    Unauthorized,
};

std::string_view code_name(ErrorCode code) noexcept;

/// True for failures raised by a model backend (transport, throttling, bad payloads, script exhaustion).
bool is_backend_error(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

inline void require(bool condition, const std::string& message) {
    if (!condition) fail(ErrorCode::Precondition, message);
}

}  // namespace zoosight
