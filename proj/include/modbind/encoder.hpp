#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "modbind/matrix.hpp"
#include "modbind/tape.hpp"

namespace modbind {

enum class Activation : uint8_t { relu = 0, tanh = 1 };

Activation activation_from_string(const std::string& s);
std::string activation_to_string(Activation a);

// Result of putting an encoder's forward pass on a tape: the output node
// plus one leaf per parameter, ordered as param_views().
struct TapeForward {
    Var output;
    std::vector<Var> param_leaves;
};

// Feed-forward modality encoder. The activation follows every layer, so a
// single-layer tanh encoder is exactly the frozen reference construction
// and can seed a trainable clone with identical outputs.
class MlpEncoder {
public:
    MlpEncoder() = default;

    // Xavier-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases,
    // deterministic in seed. Weights are quantized through f32 at init so
    // the checkpoint formats round-trip without loss.
    static MlpEncoder init(const std::vector<size_t>& dims, Activation act, uint64_t seed);

    // Wraps externally constructed weights (used for the frozen reference
    // encoders). Quantizes through f32.
    static MlpEncoder from_weights(std::vector<Matrix> weights, std::vector<Matrix> biases,
                                   Activation act, uint64_t seed, bool reference);

    // Trainable copy of src: same weights, frozen flag cleared. dst_dims
    // must match the source layer shapes (warm start never reshapes).
    static MlpEncoder init_from(const MlpEncoder& src, const std::vector<size_t>& dst_dims);

    // Reassembles an encoder from pipeline-checkpoint records without
    // quantizing: live training state is double precision.
    static MlpEncoder restore(std::vector<Matrix> weights, std::vector<Matrix> biases,
                              Activation act, bool frozen, bool reference, uint64_t seed);

    Matrix forward(const Matrix& batch) const;
    TapeForward forward_tape(Tape& tape, Var input) const;

    void freeze() { frozen_ = true; }
    bool frozen() const noexcept { return frozen_; }
    bool reference() const noexcept { return reference_; }
    uint64_t init_seed() const noexcept { return init_seed_; }
    Activation activation() const noexcept { return act_; }

    const std::vector<size_t>& dims() const noexcept { return dims_; }
    size_t input_dim() const { return dims_.front(); }
    size_t output_dim() const { return dims_.back(); }
    size_t layer_count() const { return weights_.size(); }

    const Matrix& weight(size_t layer) const { return weights_[layer]; }
    const Matrix& bias(size_t layer) const { return biases_[layer]; }

    // Parameter storage in fixed order [W0, b0, W1, b1, ...], matching the
    // leaf order of forward_tape. Mutable access is for optimizer updates.
    std::vector<Matrix*> param_views();
    std::vector<const Matrix*> param_views() const;
    size_t param_count() const; // total scalar parameters across all layers

    // Checkpoint format "GBEC": magic, version u32, activation byte, layer
    // count, per-layer dims, then f32 weights (row-major) and biases per
    // layer. serialize(deserialize(bytes)) is byte-identical.
    std::vector<uint8_t> serialize() const;
    static MlpEncoder deserialize(const std::vector<uint8_t>& bytes,
                                  const std::string& source = "GBEC");

    bool same_layer_shapes(const MlpEncoder& other) const;

private:
    std::vector<size_t> dims_;
    std::vector<Matrix> weights_; // [dims[i] x dims[i+1]]
    std::vector<Matrix> biases_;  // [1 x dims[i+1]]
    Activation act_ = Activation::tanh;
    bool frozen_ = false;
    bool reference_ = false;
    uint64_t init_seed_ = 0;
};

} // namespace modbind
