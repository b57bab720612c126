#pragma once

#include <cstddef>
#include <vector>

#include "modbind/rng.hpp"

namespace modbind {

// Dense row-major matrix of doubles, the universal value carrier. Batches
// are one row per sample. Every public operation leaves all entries finite
// or throws NumericError.
class Matrix {
public:
    Matrix() = default;
    Matrix(size_t rows, size_t cols); // zero-filled

    static Matrix from_data(size_t rows, size_t cols, std::vector<double> data);
    static Matrix identity(size_t n);
    static Matrix scalar(double value); // 1x1
    static Matrix randn(size_t rows, size_t cols, SplitMix64& rng);
    static Matrix randu(size_t rows, size_t cols, double lo, double hi, SplitMix64& rng);

    size_t rows() const noexcept { return rows_; }
    size_t cols() const noexcept { return cols_; }
    size_t size() const noexcept { return data_.size(); }

    double& at(size_t r, size_t c) { return data_[r * cols_ + c]; }
    double at(size_t r, size_t c) const { return data_[r * cols_ + c]; }

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    bool same_shape(const Matrix& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    static Matrix matmul(const Matrix& a, const Matrix& b);
    static Matrix add(const Matrix& a, const Matrix& b);
    static Matrix sub(const Matrix& a, const Matrix& b);
    static Matrix hadamard(const Matrix& a, const Matrix& b);
    static Matrix relu(const Matrix& m);
    static Matrix tanh(const Matrix& m);

    // Adds a 1xd row vector to every row of an kxd matrix.
    static Matrix add_row_vector(const Matrix& m, const Matrix& row);
    static Matrix colsum(const Matrix& m); // 1 x cols

    Matrix scaled(double factor) const;
    Matrix transposed() const;

    // Per-row Euclidean norms.
    std::vector<double> row_norms() const;

    // Rescales every row to unit Euclidean norm. Rows with norm < 1e-12
    // raise DegenerateInputError naming the row.
    Matrix l2_normalized_rows() const;

    double mean_all() const;

    // Rounds every entry through IEEE-754 single precision. Persisted
    // artifacts are single precision; quantizing at creation keeps the
    // in-memory and on-disk code paths bit-identical.
    Matrix quantized_f32() const;

    Matrix gather_rows(const std::vector<uint32_t>& indices) const;

    void ensure_finite(const char* context) const;

    bool operator==(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_ && data_ == other.data_;
    }

private:
    size_t rows_ = 0;
    size_t cols_ = 0;
    std::vector<double> data_;
};

std::string shape_string(const Matrix& m);

} // namespace modbind
