#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace erc {

enum class ErrorCode {
    // corpus
    MalformedRecord,
    UnknownLabel,
    DuplicateTurn,
    GapError,
    UnknownDataset,
    UnmappedLabel,
    InvalidLabelSpace,
    // pool
    EmptyCorpus,
    MissingVector,
    DimensionMismatch,
    // retrieval
    EmptyPool,
    UnknownExample,
    NoEligibleExamples,
    MissingEmbedding,
    CorruptHeader,
    TruncatedPayload,
    // prompting
    BudgetTooSmall,
    MissingCompletion,
    // evaluation
    QueryMismatch,
    // experiments
    InvalidConfig,
    DialogueIdCollision,
    // mock predictor
    EmptyHits,
    Io,
};

std::string_view to_string(ErrorCode code);

/// Every failure surfaced by the library carries one of the codes above so
/// callers (and the CLI's machine-readable error record) can branch on it.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace erc
