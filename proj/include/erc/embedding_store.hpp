#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace erc {

/// "ERCVEC01" read as a little-endian 64-bit integer.
inline constexpr std::uint64_t kEmbeddingMagic = 0x3130434556435245ULL;

/// Precomputed dense vectors keyed by dense integer id (example_id for pools,
/// query position for query stores). Rows may be missing or have differing
/// lengths while the store is being assembled; consumers validate.
class EmbeddingStore {
public:
    EmbeddingStore() = default;

    /// Uniform row-major matrix: row i is id i.
    EmbeddingStore(std::size_t count, std::size_t dim, std::vector<float> values);

    void set(std::size_t id, std::vector<float> vector);
    bool contains(std::size_t id) const { return id < rows_.size() && rows_[id].has_value(); }
    std::span<const float> at(std::size_t id) const;

    /// One past the largest id ever set.
    std::size_t size() const { return rows_.size(); }

    /// Common dimension of all present rows; throws DimensionMismatch when
    /// rows disagree, nullopt when the store is empty.
    std::optional<std::size_t> uniform_dim() const;

private:
    std::vector<std::optional<std::vector<float>>> rows_;
};

/// Binary format: magic, count, dim (each u64 LE) then count*dim f32 LE.
EmbeddingStore load_embedding_store(const std::filesystem::path& path);
void write_embedding_store(const EmbeddingStore& store, const std::filesystem::path& path);

/// Contiguous copy of a complete store, used for exact dot-product search.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t dim, std::vector<float> values);

    std::size_t rows() const { return rows_; }
    std::size_t dim() const { return dim_; }
    std::span<const float> row(std::size_t i) const {
        return {values_.data() + i * dim_, dim_};
    }

private:
    std::size_t rows_ = 0;
    std::size_t dim_ = 0;
    std::vector<float> values_;
};

double dot(std::span<const float> a, std::span<const float> b);

}  // namespace erc
