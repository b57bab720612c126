#include "modbind/encoder.hpp"

#include <cmath>

#include "modbind/errors.hpp"
#include "modbind/io_util.hpp"

namespace modbind {

namespace {
constexpr uint32_t kEncoderFormatVersion = 1;
constexpr uint32_t kMaxLayers = 64;
constexpr uint64_t kMaxParams = 1ULL << 31;
} // namespace

Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    throw ConfigError("unknown activation '" + s + "' (expected relu or tanh)");
}

std::string activation_to_string(Activation a) {
    return a == Activation::relu ? "relu" : "tanh";
}

MlpEncoder MlpEncoder::init(const std::vector<size_t>& dims, Activation act, uint64_t seed) {
    if (dims.size() < 2) {
        throw ConfigError("encoder needs at least input and output dimensions");
    }
    for (size_t d : dims) {
        if (d < 1) throw ConfigError("encoder layer dimension must be >= 1");
    }
    MlpEncoder enc;
    enc.dims_ = dims;
    enc.act_ = act;
    enc.init_seed_ = seed;
    SplitMix64 rng(seed);
    for (size_t i = 0; i + 1 < dims.size(); ++i) {
        const double bound = std::sqrt(6.0 / static_cast<double>(dims[i] + dims[i + 1]));
        enc.weights_.push_back(
            Matrix::randu(dims[i], dims[i + 1], -bound, bound, rng).quantized_f32());
        enc.biases_.push_back(Matrix(1, dims[i + 1]));
    }
    return enc;
}

MlpEncoder MlpEncoder::from_weights(std::vector<Matrix> weights, std::vector<Matrix> biases,
                                    Activation act, uint64_t seed, bool reference) {
    if (weights.empty() || weights.size() != biases.size()) {
        throw ConfigError("from_weights: need matching non-empty weight/bias lists");
    }
    MlpEncoder enc;
    enc.act_ = act;
    enc.init_seed_ = seed;
    enc.reference_ = reference;
    enc.frozen_ = reference;
    enc.dims_.push_back(weights[0].rows());
    for (size_t i = 0; i < weights.size(); ++i) {
        if (weights[i].rows() != enc.dims_.back()) {
            throw ConfigError("from_weights: layer " + std::to_string(i) +
                              " input dim mismatch");
        }
        if (biases[i].rows() != 1 || biases[i].cols() != weights[i].cols()) {
            throw ConfigError("from_weights: bias " + std::to_string(i) + " shape mismatch");
        }
        enc.dims_.push_back(weights[i].cols());
        enc.weights_.push_back(weights[i].quantized_f32());
        enc.biases_.push_back(biases[i].quantized_f32());
    }
    return enc;
}

MlpEncoder MlpEncoder::restore(std::vector<Matrix> weights, std::vector<Matrix> biases,
                               Activation act, bool frozen, bool reference, uint64_t seed) {
    if (weights.empty() || weights.size() != biases.size()) {
        throw ConfigError("restore: need matching non-empty weight/bias lists");
    }
    MlpEncoder enc;
    enc.act_ = act;
    enc.init_seed_ = seed;
    enc.frozen_ = frozen;
    enc.reference_ = reference;
    enc.dims_.push_back(weights[0].rows());
    for (size_t i = 0; i < weights.size(); ++i) {
        if (weights[i].rows() != enc.dims_.back()) {
            throw ConfigError("restore: layer " + std::to_string(i) + " input dim mismatch");
        }
        if (biases[i].rows() != 1 || biases[i].cols() != weights[i].cols()) {
            throw ConfigError("restore: bias " + std::to_string(i) + " shape mismatch");
        }
        enc.dims_.push_back(weights[i].cols());
        enc.weights_.push_back(std::move(weights[i]));
        enc.biases_.push_back(std::move(biases[i]));
    }
    return enc;
}

MlpEncoder MlpEncoder::init_from(const MlpEncoder& src, const std::vector<size_t>& dst_dims) {
    if (dst_dims != src.dims_) {
        std::string want, have;
        for (size_t d : dst_dims) want += (want.empty() ? "" : "x") + std::to_string(d);
        for (size_t d : src.dims_) have += (have.empty() ? "" : "x") + std::to_string(d);
        throw ConfigError("init_from: requested layer dims " + want +
                          " do not match source dims " + have);
    }
    MlpEncoder enc = src;
    enc.frozen_ = false;
    enc.reference_ = false;
    return enc;
}

Matrix MlpEncoder::forward(const Matrix& batch) const {
    if (batch.cols() != input_dim()) {
        throw DimensionError("encoder forward: batch has " + std::to_string(batch.cols()) +
                             " columns, encoder expects " + std::to_string(input_dim()));
    }
    Matrix h = batch;
    for (size_t i = 0; i < weights_.size(); ++i) {
        h = Matrix::add_row_vector(Matrix::matmul(h, weights_[i]), biases_[i]);
        h = act_ == Activation::relu ? Matrix::relu(h) : Matrix::tanh(h);
    }
    return h;
}

TapeForward MlpEncoder::forward_tape(Tape& tape, Var input) const {
    if (tape.value(input).cols() != input_dim()) {
        throw DimensionError("encoder forward: batch has " +
                             std::to_string(tape.value(input).cols()) +
                             " columns, encoder expects " + std::to_string(input_dim()));
    }
    TapeForward fw;
    Var h = input;
    for (size_t i = 0; i < weights_.size(); ++i) {
        Var w = tape.leaf(weights_[i]);
        Var b = tape.leaf(biases_[i]);
        fw.param_leaves.push_back(w);
        fw.param_leaves.push_back(b);
        h = tape.add_row(tape.matmul(h, w), b);
        h = act_ == Activation::relu ? tape.relu(h) : tape.tanh(h);
    }
    fw.output = h;
    return fw;
}

std::vector<Matrix*> MlpEncoder::param_views() {
    std::vector<Matrix*> views;
    for (size_t i = 0; i < weights_.size(); ++i) {
        views.push_back(&weights_[i]);
        views.push_back(&biases_[i]);
    }
    return views;
}

std::vector<const Matrix*> MlpEncoder::param_views() const {
    std::vector<const Matrix*> views;
    for (size_t i = 0; i < weights_.size(); ++i) {
        views.push_back(&weights_[i]);
        views.push_back(&biases_[i]);
    }
    return views;
}

size_t MlpEncoder::param_count() const {
    size_t n = 0;
    for (const auto& w : weights_) n += w.size();
    for (const auto& b : biases_) n += b.size();
    return n;
}

bool MlpEncoder::same_layer_shapes(const MlpEncoder& other) const {
    return dims_ == other.dims_;
}

std::vector<uint8_t> MlpEncoder::serialize() const {
    ByteWriter w;
    w.raw("GBEC", 4);
    w.u32(kEncoderFormatVersion);
    w.u8(static_cast<uint8_t>(act_));
    w.u32(static_cast<uint32_t>(weights_.size()));
    for (size_t d : dims_) w.u32(static_cast<uint32_t>(d));
    for (size_t i = 0; i < weights_.size(); ++i) {
        w.matrix_f32(weights_[i]);
        w.matrix_f32(biases_[i]);
    }
    return w.take();
}

MlpEncoder MlpEncoder::deserialize(const std::vector<uint8_t>& bytes, const std::string& source) {
    ByteReader r(bytes, source);
    r.magic("GBEC");
    const uint32_t version = r.u32();
    if (version != kEncoderFormatVersion) {
        r.fail("unsupported version " + std::to_string(version));
    }
    const uint8_t act_tag = r.u8();
    if (act_tag > 1) r.fail("unknown activation tag " + std::to_string(act_tag));
    const uint32_t layers = r.u32();
    if (layers < 1 || layers > kMaxLayers) {
        r.fail("implausible layer count " + std::to_string(layers));
    }
    std::vector<size_t> dims(layers + 1);
    uint64_t total = 0;
    for (auto& d : dims) {
        d = r.u32();
        if (d < 1) r.fail("zero layer dimension");
    }
    for (size_t i = 0; i < layers; ++i) {
        total += static_cast<uint64_t>(dims[i]) * dims[i + 1] + dims[i + 1];
        if (total > kMaxParams) r.fail("parameter count exceeds limit");
    }
    std::vector<Matrix> weights, biases;
    for (size_t i = 0; i < layers; ++i) {
        weights.push_back(r.matrix_f32(dims[i], dims[i + 1]));
        biases.push_back(r.matrix_f32(1, dims[i + 1]));
    }
    r.expect_eof();
    MlpEncoder enc;
    enc.dims_ = std::move(dims);
    enc.weights_ = std::move(weights);
    enc.biases_ = std::move(biases);
    enc.act_ = static_cast<Activation>(act_tag);
    return enc;
}

} // namespace modbind
