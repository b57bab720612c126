#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "modbind/encoder.hpp"
#include "modbind/loss.hpp"
#include "modbind/optim.hpp"
#include "modbind/synthworld.hpp"
#include "modbind/tape.hpp"

namespace modbind {

enum class LossVariant : uint8_t { directional = 0, symmetric = 1 };

LossVariant loss_variant_from_string(const std::string& s);
std::string loss_variant_to_string(LossVariant v);

// One binding stage: train `trainable` against the frozen `frozen_target`
// on the paired dataset whose columns carry those two modality tags.
struct StageSpec {
    std::string name;
    std::string trainable;
    std::string frozen_target;
    LossVariant loss = LossVariant::directional;
    std::string dataset;
    uint32_t epochs = 30;
    uint32_t batch_size = 128;
    AdamWConfig adamw;
    ScheduleConfig schedule;
    uint64_t seed = 0;
    // Embed the frozen side once per stage instead of per batch. Pure
    // speedup: rows are embedded independently, so gathered cached rows are
    // bit-identical to per-batch forward passes.
    bool cache_frozen_targets = false;

    void validate() const;
};

struct MetricsRow {
    std::string stage;
    uint64_t step = 0; // per-stage step index, counts batches across epochs
    uint32_t epoch = 0;
    double loss = 0.0;
    double lr = 0.0;
    double tau = 0.0; // temperature the step's loss was computed with

    bool operator==(const MetricsRow&) const = default;
};

struct HeldoutSummary {
    std::string stage;
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

// Mid-stage training state. Present only while a stage is underway, so a
// checkpoint taken between steps can finish the run bit-identically.
struct ActiveStage {
    std::string name;
    uint32_t epoch = 0;         // epoch the next step belongs to
    uint32_t step_in_epoch = 0; // batches already consumed in that epoch
    uint64_t stage_step = 0;    // total steps taken this stage
    AdamWState optimizer;
    bool has_heldout = false;
    double heldout_initial = 0.0;
};

struct RunControl {
    uint64_t max_steps = UINT64_MAX; // budget for this process invocation
    uint64_t steps_taken = 0;

    bool exhausted() const noexcept { return steps_taken >= max_steps; }
};

struct PipelineState {
    std::map<std::string, MlpEncoder> encoders;
    std::map<std::string, Temperature> stage_temperature; // keyed by stage name
    std::vector<MetricsRow> metrics;
    std::vector<std::string> completed_stages;
    std::vector<HeldoutSummary> heldout;
    std::optional<ActiveStage> active;
    std::map<std::string, uint64_t> dataset_hashes; // dataset id -> GBDS fnv64
    uint64_t master_seed = 0;

    bool stage_completed(const std::string& name) const;
    const MlpEncoder& encoder(const std::string& id) const;
    std::map<std::string, const MlpEncoder*> encoder_views() const;

    // Checkpoint format "GBPL": magic, version, then tagged records with
    // u64 length prefixes (encoders in f64, optimizer state, metrics,
    // dataset references), closed by an explicit end record.
    void serialize(ByteWriter& w) const;
    static PipelineState deserialize(ByteReader& r);
    void save(const std::filesystem::path& path) const;
    static PipelineState load(const std::filesystem::path& path);
};

// The per-batch computation, exposed so the gradient-isolation property is
// testable structurally: the frozen side enters as a constant matrix, so
// the tape holds leaves only for the trainable encoder and the temperature.
struct BatchLoss {
    Var loss;
    TapeForward trainable_fwd;
    Var temperature_leaf;
};

BatchLoss build_batch_loss(Tape& tape, const MlpEncoder& trainable, const Matrix& query_rows,
                           const Matrix& target_embeddings, double log_inv_tau,
                           LossVariant variant);

// Runs (or resumes) one stage in place: per epoch, shuffle the train split
// with a seed derived from (stage seed, epoch), walk batches, optimize the
// trainable encoder and the stage temperature under the lr schedule. On
// completion the trainable encoder is quantized to artifact precision and
// frozen. Returns false when `control` ran out of budget first.
bool run_stage(const StageSpec& spec, const Dataset& data, PipelineState& state,
               RunControl* control = nullptr);

// Validates the whole stage list against the registry and datasets before
// any training starts, then runs stages in order, skipping the ones the
// state has already completed.
bool run_pipeline(const std::vector<StageSpec>& stages,
                  const std::map<std::string, const Dataset*>& datasets, PipelineState& state,
                  RunControl* control = nullptr);

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::filesystem::path& path);

} // namespace modbind
