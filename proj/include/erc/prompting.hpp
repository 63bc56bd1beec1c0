#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "erc/corpus.hpp"
#include "erc/pool.hpp"
#include "erc/retrieval.hpp"

namespace erc {

inline constexpr std::string_view kExamplesHeader = "Here are some examples:";
inline constexpr std::string_view kHistoryMarker = "[History]";
inline constexpr std::string_view kUtteranceMarker = "[Utterance]";
inline constexpr std::string_view kLabelMarker = "[Label]";

enum class OrderingKind { SimilarFirst, SimilarLast, Random };

struct OrderingStrategy {
    OrderingKind kind = OrderingKind::SimilarFirst;
    std::uint64_t seed = 0;
};

/// Accepts "similar-first" and "similar_first" spellings.
OrderingKind parse_ordering(std::string_view name);
std::string_view to_string(OrderingKind kind);

/// Instruction text with the candidate labels listed as "{a, b, c}".
std::string render_task_description(const LabelSpace& space);

/// "[History]\n<speaker: text lines>\n[Utterance]\n<speaker: text>\n[Label]",
/// followed by " <label>" for demonstration blocks.
std::string render_block(std::span<const Turn> context, std::string_view speaker, std::string_view text,
                         std::optional<std::string_view> label = std::nullopt);

std::vector<RetrievalHit> order_examples(std::vector<RetrievalHit> hits, const OrderingStrategy& strategy);

using TokenCounter = std::function<std::size_t(std::string_view)>;

/// Whitespace-delimited unit count; the default counter.
std::size_t whitespace_token_count(std::string_view text);

struct TokenBudget {
    std::size_t max_tokens = 2048;
    double safety_factor = 1.0;  // e.g. 0.9 to leave headroom for a real tokenizer

    std::size_t effective() const;
};

/// The unlabelled block being classified.
struct TargetInput {
    std::span<const Turn> context;
    std::string_view speaker;
    std::string_view text;
};

struct AssembledPrompt {
    std::string text;
    std::size_t examples_rendered = 0;
    std::size_t history_turns_dropped = 0;
    std::size_t token_estimate = 0;
};

/// Joins task, examples header, example blocks and the target block. When the
/// budget is exceeded, trailing example blocks are dropped first, then the
/// target's history is cut oldest-turn-first. Throws BudgetTooSmall when the
/// task plus a history-free target does not fit.
AssembledPrompt assemble_prompt(std::string_view task, std::span<const std::string> example_blocks,
                                const TargetInput& target, const TokenBudget& budget,
                                const TokenCounter& counter = whitespace_token_count);

struct PromptMetadata {
    std::string strategy;
    std::size_t k_requested = 0;
    std::size_t k_rendered = 0;
    std::string ordering;
    std::size_t token_estimate = 0;
    std::size_t history_turns_dropped = 0;
    std::vector<std::size_t> example_ids;  // rendered order

    bool operator==(const PromptMetadata&) const = default;
};

struct PromptRecord {
    std::string query_id;
    std::string prompt;
    std::optional<std::string> completion;
    PromptMetadata metadata;

    bool operator==(const PromptRecord&) const = default;
};

struct RenderOptions {
    Strategy strategy = Strategy::Dense;
    std::size_t k_requested = 5;
    OrderingStrategy ordering;
    TokenBudget budget;
    TokenCounter counter = whitespace_token_count;
};

struct RenderedPrompt {
    PromptRecord record;
    std::vector<RetrievalHit> rendered_hits;  // the examples that survived the budget, in prompt order
};

/// Orders `hits`, renders the example blocks from `pool` and assembles the
/// prompt for `query`. Random ordering is seeded per query.
RenderedPrompt render_prompt(const Query& query, std::vector<RetrievalHit> hits, const DemonstrationPool& pool,
                             const LabelSpace& space, const RenderOptions& options,
                             std::optional<std::string> completion = std::nullopt);

enum class ExportMode { Train, Infer };

ExportMode parse_export_mode(std::string_view name);

/// One line per record: {query_id, prompt, completion?, meta}. Train mode
/// requires every completion; infer mode omits them.
void export_records(std::span<const PromptRecord> records, ExportMode mode, std::ostream& out);
void export_records(std::span<const PromptRecord> records, ExportMode mode, const std::filesystem::path& path);
std::vector<PromptRecord> read_records(const std::filesystem::path& path);

}  // namespace erc
