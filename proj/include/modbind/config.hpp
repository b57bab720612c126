#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "modbind/encoder.hpp"
#include "modbind/pipeline.hpp"
#include "modbind/synthworld.hpp"

namespace modbind {

// Architecture of one trainable encoder. Input dim comes from the world's
// modality dims, output dim from world.joint_dim.
struct EncoderConfig {
    std::vector<uint32_t> hidden = {64};
    Activation activation = Activation::tanh;

    bool operator==(const EncoderConfig&) const = default;
};

// One experiment, fully determined by this structure: dataset generation,
// encoder construction, stage order, and evaluation all derive their seeds
// from master_seed through fixed labels.
struct RunConfig {
    uint32_t version = 1;
    uint64_t master_seed = 42;
    std::filesystem::path output_dir = "out";
    WorldConfig world;
    std::map<std::string, EncoderConfig> encoders; // keyed by trainable modality
    std::vector<StageSpec> stages;                 // seeds derived, not stored
    std::vector<uint32_t> eval_k = {1, 5, 10};

    // The canonical two-stage experiment: satellite bound to the ground
    // reference, audio bound to the frozen satellite encoder.
    static RunConfig defaults();

    static RunConfig from_json_text(const std::string& text, const std::string& source);
    static RunConfig load(const std::filesystem::path& path);
    std::string to_json_text() const;

    void validate() const;

    // Dataset ids in generation order: stage1, stage2, extra:<tag>...
    std::vector<std::string> dataset_ids() const;
    // File layout under output_dir; ':' in ids maps to '-'.
    std::filesystem::path dataset_path(const std::string& dataset_id) const;
    std::filesystem::path eval_bundle_path() const;
    std::filesystem::path manifest_path() const;
    std::filesystem::path checkpoint_path() const;
    std::filesystem::path metrics_path() const;
    std::filesystem::path encoder_path(const std::string& id) const;

    // Layer dims for a trainable encoder id, [input, hidden..., joint].
    std::vector<size_t> encoder_dims(const std::string& id) const;
    EncoderConfig encoder_config(const std::string& id) const; // default when absent

    uint64_t encoder_seed(const std::string& id) const;
    uint64_t stage_seed(const std::string& stage_name) const;
    uint64_t eval_baseline_seed() const;
};

} // namespace modbind
