#include <algorithm>
#include <cmath>

#include "erc/error.hpp"
#include "erc/retrieval.hpp"
#include "erc/text.hpp"

namespace erc {

Bm25Index Bm25Index::build(const DemonstrationPool& pool, Bm25Params params) {
    if (pool.size() == 0) throw Error(ErrorCode::EmptyPool, "cannot index an empty pool");
    std::vector<std::string> documents;
    documents.reserve(pool.size());
    for (const auto& ex : pool.examples()) documents.push_back(flatten_example(ex));
    return build(documents, params);
}

Bm25Index Bm25Index::build(std::span<const std::string> documents, Bm25Params params) {
    if (documents.empty()) throw Error(ErrorCode::EmptyPool, "cannot index an empty pool");
    Bm25Index index;
    index.params_ = params;
    index.doc_lengths_.reserve(documents.size());
    std::unordered_map<std::size_t, std::uint32_t> counts;
    std::vector<std::size_t> order;  // term ids in first-occurrence order within the doc
    for (std::size_t doc = 0; doc < documents.size(); ++doc) {
        const auto tokens = text::tokenize(documents[doc]);
        index.doc_lengths_.push_back(tokens.size());
        counts.clear();
        order.clear();
        for (const auto& token : tokens) {
            auto [it, inserted] = index.term_ids_.try_emplace(token, index.postings_.size());
            if (inserted) index.postings_.emplace_back();
            if (counts[it->second]++ == 0) order.push_back(it->second);
        }
        for (std::size_t term : order) index.postings_[term].push_back(Posting{doc, counts[term]});
    }
    index.finalize();
    return index;
}

void Bm25Index::finalize() {
    double total = 0.0;
    for (std::size_t len : doc_lengths_) total += static_cast<double>(len);
    const double n_docs = static_cast<double>(doc_lengths_.size());
    avg_doc_length_ = total / n_docs;

    idf_.resize(postings_.size());
    weights_.resize(postings_.size());
    const double k1 = params_.k1;
    const double b = params_.b;
    for (std::size_t term = 0; term < postings_.size(); ++term) {
        const double df = static_cast<double>(postings_[term].size());
        idf_[term] = std::log((n_docs - df + 0.5) / (df + 0.5) + 1.0);
        auto& w = weights_[term];
        w.resize(postings_[term].size());
        for (std::size_t i = 0; i < w.size(); ++i) {
            const auto& p = postings_[term][i];
            const double f = p.frequency;
            const double rel_len =
                avg_doc_length_ > 0.0 ? static_cast<double>(doc_lengths_[p.example_id]) / avg_doc_length_ : 0.0;
            w[i] = idf_[term] * f * (k1 + 1.0) / (f + k1 * (1.0 - b + b * rel_len));
        }
    }
}

std::size_t Bm25Index::doc_length(std::size_t example_id) const {
    if (example_id >= doc_lengths_.size()) throw Error(ErrorCode::UnknownExample, std::to_string(example_id));
    return doc_lengths_[example_id];
}

std::span<const Bm25Index::Posting> Bm25Index::postings(std::string_view term) const {
    auto it = term_ids_.find(std::string(term));
    if (it == term_ids_.end()) return {};
    return postings_[it->second];
}

double Bm25Index::idf(std::string_view term) const {
    auto it = term_ids_.find(std::string(term));
    if (it != term_ids_.end()) return idf_[it->second];
    const double n = static_cast<double>(doc_lengths_.size());
    return std::log((n + 0.5) / 0.5 + 1.0);
}

double Bm25Index::score(std::span<const std::string> query_tokens, std::size_t example_id) const {
    if (example_id >= doc_lengths_.size()) throw Error(ErrorCode::UnknownExample, std::to_string(example_id));
    double sum = 0.0;
    for (const auto& token : query_tokens) {
        auto it = term_ids_.find(token);
        if (it == term_ids_.end()) continue;
        const auto& list = postings_[it->second];
        auto pos = std::lower_bound(list.begin(), list.end(), example_id,
                                    [](const Posting& p, std::size_t id) { return p.example_id < id; });
        if (pos == list.end() || pos->example_id != example_id) continue;
        sum += weights_[it->second][static_cast<std::size_t>(pos - list.begin())];
    }
    return sum;
}

std::vector<double> Bm25Index::score_all(std::span<const std::string> query_tokens) const {
    // Collapse repeated query terms into a multiplicity so each posting list is
    // walked once.
    std::vector<std::pair<std::size_t, double>> terms;
    std::unordered_map<std::size_t, std::size_t> slot;
    for (const auto& token : query_tokens) {
        auto it = term_ids_.find(token);
        if (it == term_ids_.end()) continue;
        auto [s, inserted] = slot.try_emplace(it->second, terms.size());
        if (inserted) {
            terms.emplace_back(it->second, 1.0);
        } else {
            terms[s->second].second += 1.0;
        }
    }
    std::vector<double> scores(doc_lengths_.size(), 0.0);
    for (const auto& [term, multiplicity] : terms) {
        const auto& list = postings_[term];
        const auto& w = weights_[term];
        for (std::size_t i = 0; i < list.size(); ++i) scores[list[i].example_id] += multiplicity * w[i];
    }
    return scores;
}

}  // namespace erc
