#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "modbind/matrix.hpp"

namespace modbind {

// Little-endian byte packing for the binary formats. All multi-byte fields
// in GBDS/GBEC/GBPL/GBES are little-endian regardless of host.
class ByteWriter {
public:
    void u8(uint8_t v) { buf_.push_back(v); }
    void u32(uint32_t v);
    void u64(uint64_t v);
    void f32(float v);
    void f64(double v);
    void str(std::string_view s); // u32 length + bytes
    void raw(const void* data, size_t len);

    // Row-major single-precision matrix payload.
    void matrix_f32(const Matrix& m);
    // Full-precision payload for live training state.
    void matrix_f64(const Matrix& m);

    const std::vector<uint8_t>& bytes() const noexcept { return buf_; }
    std::vector<uint8_t> take() { return std::move(buf_); }
    size_t size() const noexcept { return buf_.size(); }

private:
    std::vector<uint8_t> buf_;
};

// Bounds-checked reader. Every underrun or malformed field throws
// FormatError naming the byte offset.
class ByteReader {
public:
    ByteReader(const uint8_t* data, size_t len, std::string source)
        : data_(data), len_(len), source_(std::move(source)) {}
    explicit ByteReader(const std::vector<uint8_t>& bytes, std::string source = "buffer")
        : ByteReader(bytes.data(), bytes.size(), std::move(source)) {}

    uint8_t u8();
    uint32_t u32();
    uint64_t u64();
    float f32();
    double f64();
    std::string str(size_t max_len = 4096);
    std::vector<uint8_t> raw(size_t n);
    void magic(const char expect[4]);

    Matrix matrix_f32(size_t rows, size_t cols);
    Matrix matrix_f64(size_t rows, size_t cols);

    size_t offset() const noexcept { return pos_; }
    size_t remaining() const noexcept { return len_ - pos_; }
    // Rejects trailing garbage.
    void expect_eof();

    [[noreturn]] void fail(const std::string& what) const;

private:
    void need(size_t n, const char* what);

    const uint8_t* data_;
    size_t len_;
    size_t pos_ = 0;
    std::string source_;
};

std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<uint8_t>& bytes);
uint64_t file_fnv64(const std::filesystem::path& path);

} // namespace modbind
