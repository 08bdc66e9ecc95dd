#include "zoosight/error.hpp"

namespace zoosight {

std::string_view code_name(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::Precondition: return "Precondition";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::NotFound: return "NotFound";
        case ErrorCode::EmptySummary: return "EmptySummary";
        case ErrorCode::InconsistentTaxonomy: return "InconsistentTaxonomy";
        case ErrorCode::UnknownParent: return "UnknownParent";
        case ErrorCode::DeadEnd: return "DeadEnd";
        case ErrorCode::TransportError: return "TransportError";
        case ErrorCode::RateLimited: return "RateLimited";
        case ErrorCode::MalformedResponse: return "MalformedResponse";
        case ErrorCode::ScriptExhausted: return "ScriptExhausted";
        case ErrorCode::PartialCaptions: return "PartialCaptions";
        case ErrorCode::DecodeError: return "DecodeError";
        case ErrorCode::DuplicateId: return "DuplicateId";
        case ErrorCode::EmptyFeatureList: return "EmptyFeatureList";
        case ErrorCode::NoVisibleFeatures: return "NoVisibleFeatures";
        case ErrorCode::EmptyKnowledgeBase: return "EmptyKnowledgeBase";
        case ErrorCode::OffListAnswer: return "OffListAnswer";
        case ErrorCode::AmbiguousAnswer: return "AmbiguousAnswer";
        case ErrorCode::EmptyVoteSet: return "EmptyVoteSet";
        case ErrorCode::AllMatchesFailed: return "AllMatchesFailed";
        case ErrorCode::MissingTruth: return "MissingTruth";
        case ErrorCode::Empty: return "Empty";
        case ErrorCode::MissingTimestamp: return "MissingTimestamp";
        case ErrorCode::EmptyVotes: return "EmptyVotes";
        case ErrorCode::UnparseableScore: return "UnparseableScore";
        case ErrorCode::OutOfRange: return "OutOfRange";
        case ErrorCode::InvalidLog: return "InvalidLog";
        case ErrorCode::UnknownRun: return "UnknownRun";
        case ErrorCode::UnknownItem: return "UnknownItem";
        case ErrorCode::OffListLabel: return "OffListLabel";
        case ErrorCode::ConflictingLabel: return "ConflictingLabel";
        case ErrorCode::Unauthorized: return "Unauthorized";
    }
    return "Unknown";
}

bool is_backend_error(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::TransportError:
        case ErrorCode::RateLimited:
        case ErrorCode::MalformedResponse:
        case ErrorCode::ScriptExhausted:
            return true;
        default:
            return false;
    }
}

}  // namespace zoosight
