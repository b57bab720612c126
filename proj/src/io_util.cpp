#include "modbind/io_util.hpp"

#include <cstring>
#include <fstream>

#include "modbind/errors.hpp"
#include "modbind/rng.hpp"

namespace modbind {

void ByteWriter::u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xFF));
}

void ByteWriter::u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xFF));
}

void ByteWriter::f32(float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
}

void ByteWriter::f64(double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
}

void ByteWriter::str(std::string_view s) {
    u32(static_cast<uint32_t>(s.size()));
    raw(s.data(), s.size());
}

void ByteWriter::raw(const void* data, size_t len) {
    const auto* p = static_cast<const uint8_t*>(data);
    buf_.insert(buf_.end(), p, p + len);
}

void ByteWriter::matrix_f32(const Matrix& m) {
    for (double x : m.data()) f32(static_cast<float>(x));
}

void ByteWriter::matrix_f64(const Matrix& m) {
    for (double x : m.data()) f64(x);
}

void ByteReader::fail(const std::string& what) const {
    throw FormatError(source_ + ": " + what + " at byte offset " + std::to_string(pos_));
}

void ByteReader::need(size_t n, const char* what) {
    if (len_ - pos_ < n) {
        fail(std::string("truncated: need ") + std::to_string(n) + " bytes for " + what);
    }
}

uint8_t ByteReader::u8() {
    need(1, "u8");
    return data_[pos_++];
}

uint32_t ByteReader::u32() {
    need(4, "u32");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(data_[pos_ + static_cast<size_t>(i)]) << (8 * i);
    pos_ += 4;
    return v;
}

uint64_t ByteReader::u64() {
    need(8, "u64");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(data_[pos_ + static_cast<size_t>(i)]) << (8 * i);
    pos_ += 8;
    return v;
}

float ByteReader::f32() {
    uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

double ByteReader::f64() {
    uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

std::string ByteReader::str(size_t max_len) {
    uint32_t n = u32();
    if (n > max_len) fail("string length " + std::to_string(n) + " exceeds limit");
    need(n, "string bytes");
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
}

std::vector<uint8_t> ByteReader::raw(size_t n) {
    need(n, "raw bytes");
    std::vector<uint8_t> out(data_ + pos_, data_ + pos_ + n);
    pos_ += n;
    return out;
}

void ByteReader::magic(const char expect[4]) {
    need(4, "magic");
    if (std::memcmp(data_ + pos_, expect, 4) != 0) {
        fail(std::string("bad magic, expected \"") + std::string(expect, 4) + "\"");
    }
    pos_ += 4;
}

Matrix ByteReader::matrix_f32(size_t rows, size_t cols) {
    need(rows * cols * 4, "f32 matrix payload");
    std::vector<double> data(rows * cols);
    for (double& x : data) x = static_cast<double>(f32());
    return Matrix::from_data(rows, cols, std::move(data));
}

Matrix ByteReader::matrix_f64(size_t rows, size_t cols) {
    need(rows * cols * 8, "f64 matrix payload");
    std::vector<double> data(rows * cols);
    for (double& x : data) x = f64();
    return Matrix::from_data(rows, cols, std::move(data));
}

void ByteReader::expect_eof() {
    if (pos_ != len_) {
        fail("trailing garbage: " + std::to_string(len_ - pos_) + " unread bytes");
    }
}

std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open file: " + path.string());
    f.seekg(0, std::ios::end);
    std::streamoff len = f.tellg();
    f.seekg(0, std::ios::beg);
    std::vector<uint8_t> bytes(static_cast<size_t>(len));
    if (len > 0) f.read(reinterpret_cast<char*>(bytes.data()), len);
    if (!f) throw FormatError("failed reading file: " + path.string());
    return bytes;
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ConfigError("cannot open for writing: " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw ConfigError("failed writing file: " + path.string());
}

uint64_t file_fnv64(const std::filesystem::path& path) {
    auto bytes = read_file_bytes(path);
    return fnv1a64(bytes.data(), bytes.size());
}

} // namespace modbind
