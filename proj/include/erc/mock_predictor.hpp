#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>

#include "erc/corpus.hpp"
#include "erc/evaluation.hpp"
#include "erc/pool.hpp"
#include "erc/retrieval.hpp"

namespace erc {

/// Majority vote over the labels of retrieved demonstrations.
struct MockPrediction {
    std::string query_id;
    std::string label;
    std::map<std::string, std::size_t> votes;
    double winner_score = 0.0;  // score of the best-ranked hit carrying `label`
};

/// Ties go to the label whose best-ranked supporting hit has the smallest rank.
MockPrediction predict_knn(std::string query_id, std::span<const RetrievalHit> hits, const DemonstrationPool& pool);

struct MockRun {
    std::vector<Prediction> predictions;
    EvalReport report;
};

/// retrieve -> predict_knn -> evaluate for every utterance of `test`. Dense
/// retrieval reads query vectors from `query_vectors` (row = query position).
MockRun run_mock(const Corpus& test, const Retriever& retriever, std::size_t k, std::uint64_t seed,
                 const EmbeddingStore* query_vectors = nullptr);

}  // namespace erc
