#include "erc/retrieval.hpp"

#include <algorithm>
#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "erc/error.hpp"
#include "erc/random.hpp"
#include "erc/text.hpp"

namespace erc {

using nlohmann::json;

std::string make_query_id(std::string_view dialogue_id, std::size_t turn_index) {
    return std::string(dialogue_id) + "#" + std::to_string(turn_index);
}

std::vector<Query> queries_from_corpus(const Corpus& corpus) {
    std::vector<Query> queries;
    queries.reserve(corpus.utterance_count());
    for (const auto& dialogue : corpus.dialogues()) {
        std::vector<Turn> history;
        for (const auto& u : dialogue.turns) {
            Query q;
            q.query_id = make_query_id(dialogue.id, u.turn_index);
            q.dialogue_id = dialogue.id;
            q.context = history;
            q.target_speaker = u.speaker;
            q.target_text = u.text;
            queries.push_back(std::move(q));
            history.push_back(Turn{u.speaker, u.text});
        }
    }
    return queries;
}

void attach_query_embeddings(std::vector<Query>& queries, const EmbeddingStore& store) {
    for (std::size_t i = 0; i < queries.size(); ++i) {
        if (!store.contains(i)) {
            throw Error(ErrorCode::MissingEmbedding, "no query vector for row " + std::to_string(i) + " (" +
                                                         queries[i].query_id + ")");
        }
        auto row = store.at(i);
        queries[i].embedding.assign(row.begin(), row.end());
    }
}

std::string flatten(std::span<const Turn> context, std::string_view speaker, std::string_view text) {
    std::string out;
    for (const auto& turn : context) {
        out += turn.speaker;
        out += ": ";
        out += turn.text;
        out += '\n';
    }
    out += speaker;
    out += ": ";
    out += text;
    return out;
}

std::string flatten_query(const Query& query) {
    return flatten(query.context, query.target_speaker, query.target_text);
}

std::string flatten_example(const DemonstrationExample& example) {
    return flatten(example.context, example.target_speaker, example.target_text);
}

Strategy parse_strategy(std::string_view name) {
    if (name == "random") return Strategy::Random;
    if (name == "bm25") return Strategy::Bm25;
    if (name == "dense") return Strategy::Dense;
    throw Error(ErrorCode::InvalidConfig, "unknown retrieval strategy '" + std::string(name) + "'");
}

std::string_view to_string(Strategy strategy) {
    switch (strategy) {
        case Strategy::Random: return "random";
        case Strategy::Bm25: return "bm25";
        case Strategy::Dense: return "dense";
    }
    return "random";
}

namespace {

struct Candidate {
    double score;
    std::size_t example_id;
};

// Total order: higher score first, then lower id.
bool ranks_before(const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.example_id < b.example_id;
}

// Keeps the k best candidates in a heap whose front is the current worst.
class TopK {
public:
    explicit TopK(std::size_t k) : k_(k) { heap_.reserve(k); }

    void offer(Candidate c) {
        if (heap_.size() < k_) {
            heap_.push_back(c);
            std::push_heap(heap_.begin(), heap_.end(), ranks_before);
        } else if (ranks_before(c, heap_.front())) {
            std::pop_heap(heap_.begin(), heap_.end(), ranks_before);
            heap_.back() = c;
            std::push_heap(heap_.begin(), heap_.end(), ranks_before);
        }
    }

    std::vector<RetrievalHit> finish() {
        std::sort_heap(heap_.begin(), heap_.end(), ranks_before);
        std::vector<RetrievalHit> hits;
        hits.reserve(heap_.size());
        for (std::size_t i = 0; i < heap_.size(); ++i) {
            hits.push_back(RetrievalHit{heap_[i].example_id, heap_[i].score, i + 1});
        }
        return hits;
    }

private:
    std::size_t k_;
    std::vector<Candidate> heap_;
};

// Marks examples from the query's own dialogue. Returns the eligible count.
std::size_t exclusion_mask(const DemonstrationPool& pool, const Query& query, std::vector<char>& excluded) {
    excluded.assign(pool.size(), 0);
    const auto own = pool.ids_in_dialogue(query.dialogue_id);
    for (std::size_t id : own) excluded[id] = 1;
    const std::size_t eligible = pool.size() - own.size();
    if (eligible == 0) {
        throw Error(ErrorCode::NoEligibleExamples,
                    "every pool example comes from dialogue '" + query.dialogue_id + "'");
    }
    return eligible;
}

std::vector<RetrievalHit> retrieve_random(const Query& query, const DemonstrationPool& pool,
                                          const std::vector<char>& excluded, std::size_t k, std::uint64_t seed) {
    std::vector<std::size_t> eligible;
    eligible.reserve(pool.size());
    for (std::size_t id = 0; id < pool.size(); ++id) {
        if (!excluded[id]) eligible.push_back(id);
    }
    const std::size_t n = std::min(k, eligible.size());
    Rng rng(mix_seed(seed, query.query_id));
    rng.partial_shuffle(std::span<std::size_t>(eligible), n);
    std::vector<RetrievalHit> hits;
    hits.reserve(n);
    for (std::size_t i = 0; i < n; ++i) hits.push_back(RetrievalHit{eligible[i], 0.0, i + 1});
    return hits;
}

std::vector<RetrievalHit> retrieve_bm25(const Query& query, const Bm25Index& index,
                                        const std::vector<char>& excluded, std::size_t k) {
    const auto tokens = text::tokenize(flatten_query(query));
    const auto scores = index.score_all(tokens);
    TopK top(k);
    for (std::size_t id = 0; id < scores.size(); ++id) {
        if (!excluded[id]) top.offer(Candidate{scores[id], id});
    }
    return top.finish();
}

std::vector<RetrievalHit> retrieve_dense(const Query& query, const DemonstrationPool& pool,
                                         const std::vector<char>& excluded, std::size_t k) {
    if (query.embedding.empty()) {
        throw Error(ErrorCode::MissingEmbedding, "query '" + query.query_id + "' has no vector");
    }
    if (!pool.has_embeddings()) {
        throw Error(ErrorCode::MissingEmbedding, "pool '" + pool.dataset_id() + "' has no vectors");
    }
    const auto& matrix = pool.embeddings();
    if (matrix.dim() != query.embedding.size()) {
        throw Error(ErrorCode::DimensionMismatch, "query dim " + std::to_string(query.embedding.size()) +
                                                      " vs pool dim " + std::to_string(matrix.dim()));
    }
    TopK top(k);
    for (std::size_t id = 0; id < matrix.rows(); ++id) {
        if (!excluded[id]) top.offer(Candidate{dot(query.embedding, matrix.row(id)), id});
    }
    return top.finish();
}

}  // namespace

std::vector<RetrievalHit> retrieve(Strategy strategy, const Query& query, const DemonstrationPool& pool,
                                   const Bm25Index* index, std::size_t k, std::uint64_t seed) {
    std::vector<char> excluded;
    exclusion_mask(pool, query, excluded);
    if (k == 0) return {};
    switch (strategy) {
        case Strategy::Random: return retrieve_random(query, pool, excluded, k, seed);
        case Strategy::Bm25:
            if (index == nullptr) throw Error(ErrorCode::InvalidConfig, "bm25 retrieval needs an index");
            if (index->doc_count() != pool.size()) {
                throw Error(ErrorCode::InvalidConfig, "bm25 index was built over a different pool");
            }
            return retrieve_bm25(query, *index, excluded, k);
        case Strategy::Dense: return retrieve_dense(query, pool, excluded, k);
    }
    return {};
}

Retriever::Retriever(const DemonstrationPool& pool, Strategy strategy, Bm25Params params)
    : pool_(&pool), strategy_(strategy) {
    if (pool.size() == 0) throw Error(ErrorCode::EmptyPool, "retriever over an empty pool");
    if (strategy == Strategy::Bm25) index_ = Bm25Index::build(pool, params);
    if (strategy == Strategy::Dense && !pool.has_embeddings()) {
        throw Error(ErrorCode::MissingEmbedding, "dense retrieval needs pool embeddings");
    }
}

std::vector<RetrievalHit> Retriever::retrieve(const Query& query, std::size_t k, std::uint64_t seed) const {
    return erc::retrieve(strategy_, query, *pool_, bm25_index(), k, seed);
}

std::vector<std::vector<RetrievalHit>> Retriever::retrieve_batch(std::span<const Query> queries, std::size_t k,
                                                                 std::uint64_t seed, unsigned threads) const {
    std::vector<std::vector<RetrievalHit>> results(queries.size());
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(queries.size())));
    if (threads <= 1) {
        for (std::size_t i = 0; i < queries.size(); ++i) results[i] = retrieve(queries[i], k, seed);
        return results;
    }
    std::vector<std::exception_ptr> errors(threads);
    {
        std::vector<std::jthread> workers;
        for (unsigned t = 0; t < threads; ++t) {
            workers.emplace_back([&, t] {
                try {
                    for (std::size_t i = t; i < queries.size(); i += threads) {
                        results[i] = retrieve(queries[i], k, seed);
                    }
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        }
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return results;
}

void write_hits(const std::vector<QueryHits>& hits, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    for (const auto& q : hits) {
        for (const auto& h : q.hits) {
            out << json{{"query_id", q.query_id}, {"example_id", h.example_id}, {"score", h.score}, {"rank", h.rank}}
                       .dump()
                << '\n';
        }
    }
}

std::vector<QueryHits> read_hits(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::vector<QueryHits> out;
    std::unordered_map<std::string, std::size_t> slot;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        try {
            auto j = json::parse(line);
            auto query_id = j.at("query_id").get<std::string>();
            auto [it, inserted] = slot.try_emplace(query_id, out.size());
            if (inserted) out.push_back(QueryHits{query_id, {}});
            out[it->second].hits.push_back(RetrievalHit{j.at("example_id").get<std::size_t>(),
                                                        j.at("score").get<double>(), j.at("rank").get<std::size_t>()});
        } catch (const json::exception& e) {
            throw Error(ErrorCode::MalformedRecord, path.string() + " line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace erc
