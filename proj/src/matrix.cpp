#include "modbind/matrix.hpp"

#include <cmath>
#include <string>

#include "modbind/errors.hpp"

namespace modbind {

std::string shape_string(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

Matrix::Matrix(size_t rows, size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix Matrix::from_data(size_t rows, size_t cols, std::vector<double> data) {
    if (data.size() != rows * cols) {
        throw ContractError("matrix data length " + std::to_string(data.size()) +
                            " does not match shape " + std::to_string(rows) + "x" +
                            std::to_string(cols));
    }
    Matrix m;
    m.rows_ = rows;
    m.cols_ = cols;
    m.data_ = std::move(data);
    m.ensure_finite("from_data");
    return m;
}

Matrix Matrix::identity(size_t n) {
    Matrix m(n, n);
    for (size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

Matrix Matrix::scalar(double value) {
    return from_data(1, 1, {value});
}

Matrix Matrix::randn(size_t rows, size_t cols, SplitMix64& rng) {
    Matrix m(rows, cols);
    for (double& x : m.data_) x = rng.normal();
    return m;
}

Matrix Matrix::randu(size_t rows, size_t cols, double lo, double hi, SplitMix64& rng) {
    Matrix m(rows, cols);
    for (double& x : m.data_) x = rng.uniform(lo, hi);
    return m;
}

void Matrix::ensure_finite(const char* context) const {
    for (double x : data_) {
        if (!std::isfinite(x)) {
            throw NumericError(std::string(context) + ": non-finite entry in " +
                               shape_string(*this) + " matrix");
        }
    }
}

Matrix Matrix::matmul(const Matrix& a, const Matrix& b) {
    if (a.cols_ != b.rows_) {
        throw DimensionError("matmul: inner dimensions disagree: " + shape_string(a) +
                             " * " + shape_string(b));
    }
    Matrix c(a.rows_, b.cols_);
    const size_t n = b.cols_;
    // i-k-j order: row-major friendly, accumulation over k is left-to-right.
    for (size_t i = 0; i < a.rows_; ++i) {
        const double* arow = a.data_.data() + i * a.cols_;
        double* crow = c.data_.data() + i * n;
        for (size_t k = 0; k < a.cols_; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = b.data_.data() + k * n;
            for (size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
    c.ensure_finite("matmul");
    return c;
}

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(op) + ": shapes disagree: " + shape_string(a) +
                             " vs " + shape_string(b));
    }
}

} // namespace

Matrix Matrix::add(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add");
    Matrix c = a;
    for (size_t i = 0; i < c.data_.size(); ++i) c.data_[i] += b.data_[i];
    c.ensure_finite("add");
    return c;
}

Matrix Matrix::sub(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "sub");
    Matrix c = a;
    for (size_t i = 0; i < c.data_.size(); ++i) c.data_[i] -= b.data_[i];
    c.ensure_finite("sub");
    return c;
}

Matrix Matrix::hadamard(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "hadamard");
    Matrix c = a;
    for (size_t i = 0; i < c.data_.size(); ++i) c.data_[i] *= b.data_[i];
    c.ensure_finite("hadamard");
    return c;
}

Matrix Matrix::relu(const Matrix& m) {
    Matrix c = m;
    for (double& x : c.data_) x = x > 0.0 ? x : 0.0;
    return c;
}

Matrix Matrix::tanh(const Matrix& m) {
    Matrix c = m;
    for (double& x : c.data_) x = std::tanh(x);
    return c;
}

Matrix Matrix::add_row_vector(const Matrix& m, const Matrix& row) {
    if (row.rows_ != 1 || row.cols_ != m.cols_) {
        throw DimensionError("add_row_vector: row shape " + shape_string(row) +
                             " does not broadcast over " + shape_string(m));
    }
    Matrix c = m;
    for (size_t i = 0; i < m.rows_; ++i) {
        for (size_t j = 0; j < m.cols_; ++j) c.at(i, j) += row.at(0, j);
    }
    c.ensure_finite("add_row_vector");
    return c;
}

Matrix Matrix::colsum(const Matrix& m) {
    Matrix c(1, m.cols_);
    for (size_t i = 0; i < m.rows_; ++i) {
        for (size_t j = 0; j < m.cols_; ++j) c.at(0, j) += m.at(i, j);
    }
    c.ensure_finite("colsum");
    return c;
}

Matrix Matrix::scaled(double factor) const {
    Matrix c = *this;
    for (double& x : c.data_) x *= factor;
    c.ensure_finite("scaled");
    return c;
}

Matrix Matrix::transposed() const {
    Matrix c(cols_, rows_);
    for (size_t i = 0; i < rows_; ++i) {
        for (size_t j = 0; j < cols_; ++j) c.at(j, i) = at(i, j);
    }
    return c;
}

std::vector<double> Matrix::row_norms() const {
    std::vector<double> norms(rows_, 0.0);
    for (size_t i = 0; i < rows_; ++i) {
        double sq = 0.0;
        for (size_t j = 0; j < cols_; ++j) {
            double x = at(i, j);
            sq += x * x;
        }
        norms[i] = std::sqrt(sq);
    }
    return norms;
}

Matrix Matrix::l2_normalized_rows() const {
    Matrix c = *this;
    for (size_t i = 0; i < rows_; ++i) {
        double sq = 0.0;
        for (size_t j = 0; j < cols_; ++j) sq += at(i, j) * at(i, j);
        double norm = std::sqrt(sq);
        if (norm < 1e-12) {
            throw DegenerateInputError("l2_normalize_rows: row " + std::to_string(i) +
                                       " has near-zero norm " + std::to_string(norm));
        }
        double inv = 1.0 / norm;
        for (size_t j = 0; j < cols_; ++j) c.at(i, j) *= inv;
    }
    c.ensure_finite("l2_normalize_rows");
    return c;
}

double Matrix::mean_all() const {
    if (data_.empty()) throw ContractError("mean_all: empty matrix");
    double sum = 0.0;
    for (double x : data_) sum += x;
    return sum / static_cast<double>(data_.size());
}

Matrix Matrix::quantized_f32() const {
    Matrix c = *this;
    for (double& x : c.data_) x = static_cast<double>(static_cast<float>(x));
    c.ensure_finite("quantized_f32");
    return c;
}

Matrix Matrix::gather_rows(const std::vector<uint32_t>& indices) const {
    Matrix c(indices.size(), cols_);
    for (size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= rows_) {
            throw ContractError("gather_rows: index " + std::to_string(indices[i]) +
                                " out of range for " + std::to_string(rows_) + " rows");
        }
        for (size_t j = 0; j < cols_; ++j) c.at(i, j) = at(indices[i], j);
    }
    return c;
}

} // namespace modbind
