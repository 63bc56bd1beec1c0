#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "erc/corpus.hpp"
#include "erc/embedding_store.hpp"

namespace erc {

struct Turn {
    std::string speaker;
    std::string text;

    bool operator==(const Turn&) const = default;
};

/// A labelled training utterance together with its full preceding history.
struct DemonstrationExample {
    std::size_t example_id = 0;
    std::string dialogue_id;
    std::vector<Turn> context;
    std::string target_speaker;
    std::string target_text;
    std::string label;

    bool operator==(const DemonstrationExample&) const = default;
};

/// Candidate set for in-context example selection, one example per training
/// utterance. Immutable once built; attach_embeddings returns a new pool.
class DemonstrationPool {
public:
    DemonstrationPool(std::string dataset_id, LabelSpace label_space, std::vector<DemonstrationExample> examples);

    const std::string& dataset_id() const { return dataset_id_; }
    const LabelSpace& label_space() const { return label_space_; }
    const std::vector<DemonstrationExample>& examples() const { return examples_; }
    std::size_t size() const { return examples_.size(); }
    const DemonstrationExample& at(std::size_t example_id) const;

    /// Example ids belonging to a dialogue, ascending; empty if unknown.
    std::span<const std::size_t> ids_in_dialogue(const std::string& dialogue_id) const;
    const std::map<std::string, std::vector<std::size_t>>& by_dialogue() const { return by_dialogue_; }

    bool has_embeddings() const { return embeddings_.has_value(); }
    std::optional<std::size_t> embedding_dim() const;
    const DenseMatrix& embeddings() const;

    friend DemonstrationPool attach_embeddings(const DemonstrationPool& pool, const EmbeddingStore& store);

private:
    std::string dataset_id_;
    LabelSpace label_space_;
    std::vector<DemonstrationExample> examples_;
    std::map<std::string, std::vector<std::size_t>> by_dialogue_;
    std::optional<DenseMatrix> embeddings_;
};

/// Enumerates (dialogue file order, turn_index); example_id is the position.
DemonstrationPool build_pool(const Corpus& train);

DemonstrationPool attach_embeddings(const DemonstrationPool& pool, const EmbeddingStore& store);

/// Directory layout: pool.json (dataset id + label space), examples.jsonl,
/// and embeddings.bin when vectors are attached.
void save_pool(const DemonstrationPool& pool, const std::filesystem::path& dir);
DemonstrationPool load_pool(const std::filesystem::path& dir);

}  // namespace erc
