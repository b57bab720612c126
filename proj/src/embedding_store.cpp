#include "modbind/embedding_store.hpp"

#include "modbind/errors.hpp"
#include "modbind/io_util.hpp"

namespace modbind {

void EmbeddingStore::validate() const {
    if (modality.empty()) throw ContractError("embedding store: empty modality tag");
    if (ids.size() != embeddings.rows()) {
        throw ContractError("embedding store: " + std::to_string(ids.size()) + " ids but " +
                            std::to_string(embeddings.rows()) + " rows");
    }
    if (embeddings.cols() < 1) throw ContractError("embedding store: zero dim");
}

void EmbeddingStore::serialize(ByteWriter& w) const {
    validate();
    w.raw("GBES", 4);
    w.u32(1); // version
    w.str(modality);
    w.u64(ids.size());
    w.u32(static_cast<uint32_t>(embeddings.cols()));
    for (uint64_t id : ids) w.u64(id);
    w.matrix_f32(embeddings);
}

EmbeddingStore EmbeddingStore::deserialize(ByteReader& r) {
    r.magic("GBES");
    const uint32_t version = r.u32();
    if (version != 1) r.fail("unsupported GBES version " + std::to_string(version));
    EmbeddingStore store;
    store.modality = r.str(64);
    if (store.modality.empty()) r.fail("empty modality tag");
    const uint64_t count = r.u64();
    if (count > (1ULL << 31)) r.fail("implausible embedding count " + std::to_string(count));
    const uint32_t dim = r.u32();
    if (dim < 1 || dim > (1u << 20)) r.fail("implausible dim " + std::to_string(dim));
    if (count * 8 > r.remaining()) {
        r.fail("id table of " + std::to_string(count) + " entries exceeds remaining bytes");
    }
    store.ids.reserve(count);
    for (uint64_t i = 0; i < count; ++i) store.ids.push_back(r.u64());
    store.embeddings = r.matrix_f32(count, dim);
    r.expect_eof();
    return store;
}

void EmbeddingStore::save(const std::filesystem::path& path) const {
    ByteWriter w;
    serialize(w);
    write_file_bytes(path, w.bytes());
}

EmbeddingStore EmbeddingStore::load(const std::filesystem::path& path) {
    const std::vector<uint8_t> bytes = read_file_bytes(path);
    ByteReader r(bytes, path.string());
    return deserialize(r);
}

} // namespace modbind
