#include "erc/prompting.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "erc/error.hpp"
#include "erc/random.hpp"
#include "erc/text.hpp"

namespace erc {

using nlohmann::json;

OrderingKind parse_ordering(std::string_view name) {
    if (name == "similar-first" || name == "similar_first") return OrderingKind::SimilarFirst;
    if (name == "similar-last" || name == "similar_last") return OrderingKind::SimilarLast;
    if (name == "random") return OrderingKind::Random;
    throw Error(ErrorCode::InvalidConfig, "unknown ordering '" + std::string(name) + "'");
}

std::string_view to_string(OrderingKind kind) {
    switch (kind) {
        case OrderingKind::SimilarFirst: return "similar_first";
        case OrderingKind::SimilarLast: return "similar_last";
        case OrderingKind::Random: return "random";
    }
    return "similar_first";
}

std::string render_task_description(const LabelSpace& space) {
    std::string candidates;
    for (std::size_t i = 0; i < space.labels().size(); ++i) {
        if (i > 0) candidates += ", ";
        candidates += space.labels()[i];
    }
    return "You are an expert in emotion recognition in conversations. Given an utterance and its "
           "conversation history (if available), classify the emotion of the utterance based on the "
           "history. Your output must be exactly one of the following categories: {" +
           candidates + "}. Please output only the label without any other text.";
}

std::string render_block(std::span<const Turn> context, std::string_view speaker, std::string_view text,
                         std::optional<std::string_view> label) {
    std::string out(kHistoryMarker);
    out += '\n';
    for (const auto& turn : context) {
        out += turn.speaker;
        out += ": ";
        out += turn.text;
        out += '\n';
    }
    out += kUtteranceMarker;
    out += '\n';
    out += speaker;
    out += ": ";
    out += text;
    out += '\n';
    out += kLabelMarker;
    if (label) {
        out += ' ';
        out += *label;
    }
    return out;
}

std::vector<RetrievalHit> order_examples(std::vector<RetrievalHit> hits, const OrderingStrategy& strategy) {
    switch (strategy.kind) {
        case OrderingKind::SimilarFirst: break;
        case OrderingKind::SimilarLast: std::reverse(hits.begin(), hits.end()); break;
        case OrderingKind::Random: {
            Rng rng(strategy.seed);
            rng.shuffle(std::span<RetrievalHit>(hits));
            break;
        }
    }
    return hits;
}

std::size_t whitespace_token_count(std::string_view text) { return text::whitespace_unit_count(text); }

std::size_t TokenBudget::effective() const {
    return static_cast<std::size_t>(std::floor(static_cast<double>(max_tokens) * safety_factor));
}

namespace {

std::string join_prompt(std::string_view task, std::span<const std::string> blocks, std::size_t n_blocks,
                        const std::string& target_block) {
    std::string out(task);
    out += "\n\n";
    if (n_blocks > 0) {
        out += kExamplesHeader;
        out += '\n';
        for (std::size_t i = 0; i < n_blocks; ++i) {
            out += blocks[i];
            out += "\n\n";
        }
    }
    out += target_block;
    return out;
}

}  // namespace

AssembledPrompt assemble_prompt(std::string_view task, std::span<const std::string> example_blocks,
                                const TargetInput& target, const TokenBudget& budget, const TokenCounter& counter) {
    const std::size_t limit = budget.effective();
    const std::size_t history = target.context.size();
    auto target_block = [&](std::size_t dropped) {
        return render_block(target.context.subspan(dropped), target.speaker, target.text);
    };

    const std::string bare = join_prompt(task, {}, 0, target_block(history));
    if (const std::size_t floor_tokens = counter(bare); floor_tokens > limit) {
        throw Error(ErrorCode::BudgetTooSmall, "task and target utterance need " + std::to_string(floor_tokens) +
                                                   " tokens, budget is " + std::to_string(limit));
    }

    const std::string full_target = target_block(0);
    for (std::size_t n = example_blocks.size() + 1; n-- > 0;) {
        std::string candidate = join_prompt(task, example_blocks, n, full_target);
        const std::size_t tokens = counter(candidate);
        if (tokens <= limit) return AssembledPrompt{std::move(candidate), n, 0, tokens};
    }

    // No examples left to drop: keep the newest history turns that fit.
    // Dropping more turns never adds tokens, so the smallest fitting cut is
    // found by bisection over [1, history].
    std::size_t lo = 1;
    std::size_t hi = history;
    while (lo < hi) {
        const std::size_t mid = lo + (hi - lo) / 2;
        if (counter(join_prompt(task, {}, 0, target_block(mid))) <= limit) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    std::string text = join_prompt(task, {}, 0, target_block(lo));
    const std::size_t tokens = counter(text);
    return AssembledPrompt{std::move(text), 0, lo, tokens};
}

RenderedPrompt render_prompt(const Query& query, std::vector<RetrievalHit> hits, const DemonstrationPool& pool,
                             const LabelSpace& space, const RenderOptions& options,
                             std::optional<std::string> completion) {
    if (completion && !space.contains(*completion)) {
        throw Error(ErrorCode::UnknownLabel, "completion '" + *completion + "' for " + query.query_id);
    }
    OrderingStrategy ordering = options.ordering;
    ordering.seed = mix_seed(options.ordering.seed, query.query_id);
    auto ordered = order_examples(std::move(hits), ordering);

    std::vector<std::string> blocks;
    blocks.reserve(ordered.size());
    for (const auto& hit : ordered) {
        const auto& ex = pool.at(hit.example_id);
        blocks.push_back(render_block(ex.context, ex.target_speaker, ex.target_text, ex.label));
    }
    const auto task = render_task_description(space);
    auto assembled = assemble_prompt(task, blocks, TargetInput{query.context, query.target_speaker, query.target_text},
                                     options.budget, options.counter);

    ordered.resize(assembled.examples_rendered);
    RenderedPrompt out;
    out.record.query_id = query.query_id;
    out.record.prompt = std::move(assembled.text);
    out.record.completion = std::move(completion);
    auto& meta = out.record.metadata;
    meta.strategy = std::string(to_string(options.strategy));
    meta.k_requested = options.k_requested;
    meta.k_rendered = assembled.examples_rendered;
    meta.ordering = std::string(to_string(options.ordering.kind));
    meta.token_estimate = assembled.token_estimate;
    meta.history_turns_dropped = assembled.history_turns_dropped;
    for (const auto& hit : ordered) meta.example_ids.push_back(hit.example_id);
    out.rendered_hits = std::move(ordered);
    return out;
}

ExportMode parse_export_mode(std::string_view name) {
    if (name == "train") return ExportMode::Train;
    if (name == "infer") return ExportMode::Infer;
    throw Error(ErrorCode::InvalidConfig, "unknown export mode '" + std::string(name) + "'");
}

namespace {

json metadata_to_json(const PromptMetadata& m) {
    return json{{"strategy", m.strategy},
                {"k_requested", m.k_requested},
                {"k_rendered", m.k_rendered},
                {"ordering", m.ordering},
                {"token_estimate", m.token_estimate},
                {"history_turns_dropped", m.history_turns_dropped},
                {"example_ids", m.example_ids}};
}

PromptMetadata metadata_from_json(const json& j) {
    PromptMetadata m;
    m.strategy = j.value("strategy", std::string());
    m.k_requested = j.value("k_requested", std::size_t{0});
    m.k_rendered = j.value("k_rendered", std::size_t{0});
    m.ordering = j.value("ordering", std::string());
    m.token_estimate = j.value("token_estimate", std::size_t{0});
    m.history_turns_dropped = j.value("history_turns_dropped", std::size_t{0});
    m.example_ids = j.value("example_ids", std::vector<std::size_t>{});
    return m;
}

}  // namespace

void export_records(std::span<const PromptRecord> records, ExportMode mode, std::ostream& out) {
    if (mode == ExportMode::Train) {
        for (const auto& r : records) {
            if (!r.completion) throw Error(ErrorCode::MissingCompletion, r.query_id);
        }
    }
    for (const auto& r : records) {
        json j{{"query_id", r.query_id}, {"prompt", r.prompt}, {"meta", metadata_to_json(r.metadata)}};
        if (mode == ExportMode::Train) j["completion"] = *r.completion;
        out << j.dump() << '\n';
    }
}

void export_records(std::span<const PromptRecord> records, ExportMode mode, const std::filesystem::path& path) {
    // Validate before touching the destination.
    if (mode == ExportMode::Train) {
        for (const auto& r : records) {
            if (!r.completion) throw Error(ErrorCode::MissingCompletion, r.query_id);
        }
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    export_records(records, mode, out);
}

std::vector<PromptRecord> read_records(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::vector<PromptRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        try {
            auto j = json::parse(line);
            PromptRecord r;
            r.query_id = j.at("query_id").get<std::string>();
            r.prompt = j.at("prompt").get<std::string>();
            if (j.contains("completion")) r.completion = j["completion"].get<std::string>();
            if (j.contains("meta")) r.metadata = metadata_from_json(j["meta"]);
            records.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw Error(ErrorCode::MalformedRecord, path.string() + " line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return records;
}

}  // namespace erc
