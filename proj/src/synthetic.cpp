#include "erc/synthetic.hpp"

#include <cmath>

#include "erc/error.hpp"
#include "erc/random.hpp"
#include "erc/text.hpp"

namespace erc {

namespace {

template <typename Fn>
EmbeddingStore build(const Corpus& corpus, std::size_t dim, Fn&& fill) {
    if (dim == 0) throw Error(ErrorCode::InvalidConfig, "vector dimension must be positive");
    std::vector<float> values(corpus.utterance_count() * dim, 0.0f);
    std::size_t row = 0;
    for (const auto& dialogue : corpus.dialogues()) {
        for (const auto& u : dialogue.turns) {
            fill(u, std::span<float>(values.data() + row * dim, dim));
            ++row;
        }
    }
    return EmbeddingStore(corpus.utterance_count(), dim, std::move(values));
}

}  // namespace

EmbeddingStore label_onehot_vectors(const Corpus& corpus) {
    const auto& space = corpus.label_space();
    return build(corpus, space.size(), [&](const Utterance& u, std::span<float> v) { v[*space.index_of(u.label)] = 1.0f; });
}

EmbeddingStore dialogue_onehot_vectors(const Corpus& corpus, std::size_t dim) {
    return build(corpus, dim, [&](const Utterance& u, std::span<float> v) { v[fnv1a64(u.dialogue_id) % dim] = 1.0f; });
}

EmbeddingStore hashed_bow_vectors(const Corpus& corpus, std::size_t dim) {
    return build(corpus, dim, [&](const Utterance& u, std::span<float> v) {
        for (const auto& token : text::tokenize(u.text)) v[fnv1a64(token) % dim] += 1.0f;
        double norm = 0.0;
        for (float x : v) norm += static_cast<double>(x) * x;
        if (norm > 0.0) {
            const auto inv = static_cast<float>(1.0 / std::sqrt(norm));
            for (float& x : v) x *= inv;
        }
    });
}

}  // namespace erc
