#include "erc/embedding_store.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "erc/error.hpp"

namespace erc {

static_assert(std::endian::native == std::endian::little,
              "embedding files are little-endian; add byte swapping for big-endian hosts");
static_assert(sizeof(float) == 4);

EmbeddingStore::EmbeddingStore(std::size_t count, std::size_t dim, std::vector<float> values) {
    if (values.size() != count * dim) {
        throw Error(ErrorCode::DimensionMismatch, "matrix payload does not match count*dim");
    }
    rows_.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        rows_.emplace_back(std::vector<float>(values.begin() + static_cast<std::ptrdiff_t>(i * dim),
                                              values.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim)));
    }
}

void EmbeddingStore::set(std::size_t id, std::vector<float> vector) {
    if (id >= rows_.size()) rows_.resize(id + 1);
    rows_[id] = std::move(vector);
}

std::span<const float> EmbeddingStore::at(std::size_t id) const {
    if (!contains(id)) throw Error(ErrorCode::MissingVector, "no vector for id " + std::to_string(id));
    return *rows_[id];
}

std::optional<std::size_t> EmbeddingStore::uniform_dim() const {
    std::optional<std::size_t> dim;
    for (std::size_t id = 0; id < rows_.size(); ++id) {
        if (!rows_[id]) continue;
        if (!dim) {
            dim = rows_[id]->size();
        } else if (*dim != rows_[id]->size()) {
            throw Error(ErrorCode::DimensionMismatch, "id " + std::to_string(id) + " has dim " +
                                                          std::to_string(rows_[id]->size()) + ", expected " +
                                                          std::to_string(*dim));
        }
    }
    return dim;
}

EmbeddingStore load_embedding_store(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::array<std::uint64_t, 3> header{};
    in.read(reinterpret_cast<char*>(header.data()), sizeof(header));
    if (in.gcount() != static_cast<std::streamsize>(sizeof(header))) {
        throw Error(ErrorCode::CorruptHeader, path.string() + ": header shorter than 24 bytes");
    }
    const auto [magic, count, dim] = header;
    if (magic != kEmbeddingMagic) throw Error(ErrorCode::CorruptHeader, path.string() + ": bad magic");
    if (dim == 0 || (count != 0 && dim > (UINT64_MAX / 4) / count)) {
        throw Error(ErrorCode::CorruptHeader, path.string() + ": implausible count/dim");
    }
    const auto expected = static_cast<std::streamsize>(count * dim * sizeof(float));
    in.seekg(0, std::ios::end);
    const auto payload = static_cast<std::streamsize>(in.tellg()) - static_cast<std::streamsize>(sizeof(header));
    if (payload < expected) {
        throw Error(ErrorCode::TruncatedPayload, path.string() + ": payload has " + std::to_string(payload) +
                                                     " bytes, header promises " + std::to_string(expected));
    }
    if (payload > expected) {
        throw Error(ErrorCode::CorruptHeader, path.string() + ": " + std::to_string(payload - expected) +
                                                  " trailing bytes after count*dim floats");
    }
    in.seekg(static_cast<std::streamoff>(sizeof(header)));
    std::vector<float> values(count * dim);
    in.read(reinterpret_cast<char*>(values.data()), expected);
    return EmbeddingStore(count, dim, std::move(values));
}

void write_embedding_store(const EmbeddingStore& store, const std::filesystem::path& path) {
    const std::size_t dim = store.uniform_dim().value_or(0);
    if (dim == 0) throw Error(ErrorCode::DimensionMismatch, "cannot write an empty store");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    const std::array<std::uint64_t, 3> header{kEmbeddingMagic, store.size(), dim};
    out.write(reinterpret_cast<const char*>(header.data()), sizeof(header));
    for (std::size_t id = 0; id < store.size(); ++id) {
        auto row = store.at(id);
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size_bytes()));
    }
}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t dim, std::vector<float> values)
    : rows_(rows), dim_(dim), values_(std::move(values)) {
    if (values_.size() != rows_ * dim_) throw Error(ErrorCode::DimensionMismatch, "matrix size mismatch");
}

double dot(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) {
        throw Error(ErrorCode::DimensionMismatch,
                    "dot of dims " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return sum;
}

}  // namespace erc
