#include "erc/mock_predictor.hpp"

#include <limits>

#include "erc/error.hpp"

namespace erc {

MockPrediction predict_knn(std::string query_id, std::span<const RetrievalHit> hits, const DemonstrationPool& pool) {
    if (hits.empty()) throw Error(ErrorCode::EmptyHits, "no hits for " + query_id);
    struct Tally {
        std::size_t votes = 0;
        std::size_t best_rank = std::numeric_limits<std::size_t>::max();
        double best_score = 0.0;
    };
    std::map<std::string, Tally> tallies;
    for (const auto& hit : hits) {
        auto& t = tallies[pool.at(hit.example_id).label];
        ++t.votes;
        if (hit.rank < t.best_rank) {
            t.best_rank = hit.rank;
            t.best_score = hit.score;
        }
    }
    MockPrediction out;
    out.query_id = std::move(query_id);
    const Tally* winner = nullptr;
    for (const auto& [label, t] : tallies) {
        out.votes.emplace(label, t.votes);
        if (winner == nullptr || t.votes > winner->votes ||
            (t.votes == winner->votes && t.best_rank < winner->best_rank)) {
            winner = &t;
            out.label = label;
        }
    }
    out.winner_score = winner->best_score;
    return out;
}

MockRun run_mock(const Corpus& test, const Retriever& retriever, std::size_t k, std::uint64_t seed,
                 const EmbeddingStore* query_vectors) {
    auto queries = queries_from_corpus(test);
    if (query_vectors != nullptr) attach_query_embeddings(queries, *query_vectors);
    const auto& space = retriever.pool().label_space();
    MockRun run;
    run.predictions.reserve(queries.size());
    for (const auto& query : queries) {
        const auto hits = retriever.retrieve(query, k, seed);
        auto prediction = predict_knn(query.query_id, hits, retriever.pool());
        run.predictions.push_back(make_prediction(query.query_id, prediction.label, space));
    }
    run.report = evaluate(golds_from_corpus(test), run.predictions, space);
    return run;
}

}  // namespace erc
