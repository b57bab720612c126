#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "modbind/matrix.hpp"

namespace modbind {

class ByteWriter;
class ByteReader;

// Materialized joint-space embeddings for one modality, keyed by caller
// ids. Rows are stored normalized at single precision, the same values the
// evaluator ranks with.
struct EmbeddingStore {
    std::string modality;
    std::vector<uint64_t> ids;
    Matrix embeddings; // ids.size() x dim

    size_t count() const noexcept { return ids.size(); }
    size_t dim() const noexcept { return embeddings.cols(); }

    void validate() const;

    // File format "GBES": magic, version u32, modality tag, count u64,
    // dim u32, then all ids as u64 followed by f32 row-major rows.
    void serialize(ByteWriter& w) const;
    static EmbeddingStore deserialize(ByteReader& r);
    void save(const std::filesystem::path& path) const;
    static EmbeddingStore load(const std::filesystem::path& path);

    bool operator==(const EmbeddingStore&) const = default;
};

} // namespace modbind
