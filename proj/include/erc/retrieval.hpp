#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "erc/corpus.hpp"
#include "erc/embedding_store.hpp"
#include "erc/pool.hpp"

namespace erc {

/// The retrieval key for one target utterance. There is deliberately no label
/// field: nothing reachable from a Query can leak the gold emotion.
struct Query {
    std::string query_id;
    std::string dialogue_id;
    std::vector<Turn> context;
    std::string target_speaker;
    std::string target_text;
    std::vector<float> embedding;  // empty when not supplied
};

/// "<dialogue_id>#<turn_index>"
std::string make_query_id(std::string_view dialogue_id, std::size_t turn_index);

/// One query per utterance, enumerated in (dialogue order, turn_index) order,
/// which is also the row order expected in a query embedding store.
std::vector<Query> queries_from_corpus(const Corpus& corpus);

/// Fills each query's embedding from row i of `store` (i = position in `queries`).
void attach_query_embeddings(std::vector<Query>& queries, const EmbeddingStore& store);

struct RetrievalHit {
    std::size_t example_id = 0;
    double score = 0.0;
    std::size_t rank = 0;  // 1-based

    bool operator==(const RetrievalHit&) const = default;
};

/// "speaker: text" lines joined by '\n', history first, target last.
std::string flatten(std::span<const Turn> context, std::string_view speaker, std::string_view text);
std::string flatten_query(const Query& query);
std::string flatten_example(const DemonstrationExample& example);

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

/// Okapi BM25 over an inverted index. Per-posting term weights are
/// precomputed at build time so a query costs one pass over its terms'
/// posting lists.
class Bm25Index {
public:
    struct Posting {
        std::size_t example_id;
        std::uint32_t frequency;
    };

    static Bm25Index build(const DemonstrationPool& pool, Bm25Params params = {});
    /// Index over already-flattened documents; doc i gets id i.
    static Bm25Index build(std::span<const std::string> documents, Bm25Params params = {});

    std::size_t doc_count() const { return doc_lengths_.size(); }
    double avg_doc_length() const { return avg_doc_length_; }
    std::size_t doc_length(std::size_t example_id) const;
    const Bm25Params& params() const { return params_; }
    std::size_t vocabulary_size() const { return postings_.size(); }

    /// Postings for a term, ascending by example id; empty if unseen.
    std::span<const Posting> postings(std::string_view term) const;

    /// ln((N - n + 0.5) / (n + 0.5) + 1)
    double idf(std::string_view term) const;

    /// Sum over the query token list (repeats count) for one document.
    double score(std::span<const std::string> query_tokens, std::size_t example_id) const;

    /// Scores for every document at once; entry i is doc i.
    std::vector<double> score_all(std::span<const std::string> query_tokens) const;

private:
    Bm25Index() = default;
    void finalize();

    Bm25Params params_;
    std::unordered_map<std::string, std::size_t> term_ids_;
    std::vector<std::vector<Posting>> postings_;
    std::vector<std::vector<double>> weights_;  // parallel to postings_
    std::vector<double> idf_;
    std::vector<std::size_t> doc_lengths_;
    double avg_doc_length_ = 0.0;
};

enum class Strategy { Random, Bm25, Dense };

Strategy parse_strategy(std::string_view name);
std::string_view to_string(Strategy strategy);

/// Exact top-k demonstration selection with same-dialogue exclusion. Ranking
/// is by descending score with ascending example_id breaking ties; the random
/// strategy draws uniformly without replacement and reports score 0.
class Retriever {
public:
    /// Builds the BM25 index when needed; dense requires pool embeddings.
    Retriever(const DemonstrationPool& pool, Strategy strategy, Bm25Params params = {});

    Strategy strategy() const { return strategy_; }
    const DemonstrationPool& pool() const { return *pool_; }
    const Bm25Index* bm25_index() const { return index_ ? &*index_ : nullptr; }

    std::vector<RetrievalHit> retrieve(const Query& query, std::size_t k, std::uint64_t seed) const;

    /// Data-parallel over queries; output order matches input order and is
    /// independent of the thread count.
    std::vector<std::vector<RetrievalHit>> retrieve_batch(std::span<const Query> queries, std::size_t k,
                                                          std::uint64_t seed, unsigned threads = 1) const;

private:
    const DemonstrationPool* pool_;
    Strategy strategy_;
    std::optional<Bm25Index> index_;
};

/// Free-function form; `index` may be null unless strategy is bm25.
std::vector<RetrievalHit> retrieve(Strategy strategy, const Query& query, const DemonstrationPool& pool,
                                   const Bm25Index* index, std::size_t k, std::uint64_t seed);

struct QueryHits {
    std::string query_id;
    std::vector<RetrievalHit> hits;

    bool operator==(const QueryHits&) const = default;
};

/// Line-delimited {query_id, example_id, score, rank}, one line per hit.
void write_hits(const std::vector<QueryHits>& hits, const std::filesystem::path& path);
std::vector<QueryHits> read_hits(const std::filesystem::path& path);

}  // namespace erc
