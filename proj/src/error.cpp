#include "erc/error.hpp"

namespace erc {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::MalformedRecord: return "MalformedRecord";
        case ErrorCode::UnknownLabel: return "UnknownLabel";
        case ErrorCode::DuplicateTurn: return "DuplicateTurn";
        case ErrorCode::GapError: return "GapError";
        case ErrorCode::UnknownDataset: return "UnknownDataset";
        case ErrorCode::UnmappedLabel: return "UnmappedLabel";
        case ErrorCode::InvalidLabelSpace: return "InvalidLabelSpace";
        case ErrorCode::EmptyCorpus: return "EmptyCorpus";
        case ErrorCode::MissingVector: return "MissingVector";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::EmptyPool: return "EmptyPool";
        case ErrorCode::UnknownExample: return "UnknownExample";
        case ErrorCode::NoEligibleExamples: return "NoEligibleExamples";
        case ErrorCode::MissingEmbedding: return "MissingEmbedding";
        case ErrorCode::CorruptHeader: return "CorruptHeader";
        case ErrorCode::TruncatedPayload: return "TruncatedPayload";
        case ErrorCode::BudgetTooSmall: return "BudgetTooSmall";
        case ErrorCode::MissingCompletion: return "MissingCompletion";
        case ErrorCode::QueryMismatch: return "QueryMismatch";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::DialogueIdCollision: return "DialogueIdCollision";
        case ErrorCode::EmptyHits: return "EmptyHits";
        case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace erc
