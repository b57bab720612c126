#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "modbind/encoder.hpp"
#include "modbind/matrix.hpp"

namespace modbind {

class ByteWriter;
class ByteReader;

struct ExtraModality {
    std::string tag;
    uint32_t dim = 16;
    uint32_t pairs = 2000;

    bool operator==(const ExtraModality&) const = default;
};

// Generator parameters for the synthetic multimodal world. Observations of
// modality m are tanh(z W_m + b_m) + noise for a shared latent location z,
// so every modality carries the same co-location signal through its own
// nonlinear projection.
struct WorldConfig {
    uint32_t d_z = 8;
    uint32_t d_satellite = 24;
    uint32_t d_ground = 24;
    uint32_t d_audio = 16;
    uint32_t d_text = 16;
    uint32_t joint_dim = 32;
    double sigma = 0.05;
    // Column scale of the W_m projections. Controls how far tanh bends the
    // observation map: big enough that a linear encoder cannot invert the
    // world, small enough that the closed-form reference encoders stay
    // nearly exact on matched ground/text pairs.
    double proj_scale = 0.8;
    uint32_t n1 = 10000; // satellite<->ground pairs
    uint32_t n2 = 2000;  // satellite<->audio pairs
    uint32_t n_eval = 1000;
    double heldout_fraction = 0.1;
    uint64_t master_seed = 42;
    std::vector<ExtraModality> extras;

    void validate() const;
    uint32_t dim_of(const std::string& tag) const;
    // satellite, ground, audio, text, then extras in declared order.
    std::vector<std::string> all_tags() const;

    bool operator==(const WorldConfig&) const = default;
};

// Co-located observation columns over one block of latent locations: row i
// of every column derives from the same latent. Training sets carry the two
// contrastive columns; the eval bundle carries one column per modality and
// an empty train mask.
struct Dataset {
    std::vector<std::string> tags;
    std::vector<Matrix> obs;         // obs[m] is n x dim(tags[m])
    std::vector<uint8_t> train_mask; // per row, 1 = train, 0 = held out

    size_t n() const noexcept { return train_mask.size(); }
    size_t modality_index(const std::string& tag) const;
    bool has_modality(const std::string& tag) const;
    const Matrix& column(const std::string& tag) const;
    std::vector<uint32_t> train_indices() const;
    std::vector<uint32_t> heldout_indices() const;

    void validate() const;

    // File format "GBDS": magic, version u32, modality count u32, row count
    // u64, per modality tag + dim, train mask packed 8 rows per byte, then
    // per-modality f32 row-major observation matrices.
    void serialize(ByteWriter& w) const;
    static Dataset deserialize(ByteReader& r);
    void save(const std::filesystem::path& path) const;
    static Dataset load(const std::filesystem::path& path);

    bool operator==(const Dataset&) const = default;
};

struct World {
    WorldConfig cfg;
    Dataset stage1;                  // satellite + ground
    Dataset stage2;                  // satellite + audio
    std::vector<Dataset> extra_sets; // satellite + extra tag, cfg.extras order
    Dataset eval;                    // all modalities, no train rows

    // Generator internals, kept so tests can regenerate observations and so
    // reference encoders can be constructed without re-deriving seeds.
    Matrix latents;                       // total x d_z, blocks in the order below
    std::map<std::string, uint32_t> latent_offsets; // "stage1", "stage2", "extra:<tag>", "eval"
    std::map<std::string, Matrix> proj_w; // tag -> d_z x dim
    std::map<std::string, Matrix> proj_b; // tag -> 1 x dim
    Matrix joint_map;                     // d_z x joint_dim
};

// Deterministic in cfg: latents are standard normal, drawn as one stream in
// blocks (stage1, stage2, extras, eval) so the blocks are disjoint by
// construction. Observations are quantized through f32 at creation, making
// the in-memory world bit-identical to its GBDS files.
World generate_world(const WorldConfig& cfg);

// Frozen single-layer tanh encoder mapping observations of `tag` into the
// joint space. Built from the generator's own projection: R is the right
// pseudo-inverse of W composed with the joint map, so on noiseless, weakly
// bent observations the encoder recovers tanh(z Q). Ground and text share
// the same Q, which is what places matched ground/text pairs close together
// before any training happens.
MlpEncoder make_reference_encoder(const World& world, const std::string& tag);

// Gauss-Jordan inverse with partial pivoting, for the tiny d_z x d_z
// systems of the reference construction. Pivot < 1e-12 raises
// DegenerateInputError.
Matrix invert_small(const Matrix& m);

} // namespace modbind
