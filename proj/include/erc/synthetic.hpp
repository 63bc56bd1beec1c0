#pragma once

#include <cstddef>

#include "erc/corpus.hpp"
#include "erc/embedding_store.hpp"

namespace erc {

// Stand-in encoders for runs without a real sentence encoder. Rows follow the
// corpus enumeration order (dialogue order, turn), one per utterance.

/// One-hot over the corpus label space, keyed by the gold label. Only useful
/// as an upper-bound retriever in experiments.
EmbeddingStore label_onehot_vectors(const Corpus& corpus);

/// Hashed one-hot over `dim` buckets keyed by dialogue id.
EmbeddingStore dialogue_onehot_vectors(const Corpus& corpus, std::size_t dim);

/// L2-normalized hashed bag of words over speaker-free utterance text.
EmbeddingStore hashed_bow_vectors(const Corpus& corpus, std::size_t dim);

}  // namespace erc
