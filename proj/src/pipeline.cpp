#include "modbind/pipeline.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <set>

#include "modbind/errors.hpp"
#include "modbind/io_util.hpp"
#include "modbind/rng.hpp"

namespace modbind {

LossVariant loss_variant_from_string(const std::string& s) {
    if (s == "directional") return LossVariant::directional;
    if (s == "symmetric") return LossVariant::symmetric;
    throw ConfigError("unknown loss variant '" + s + "' (expected directional or symmetric)");
}

std::string loss_variant_to_string(LossVariant v) {
    return v == LossVariant::directional ? "directional" : "symmetric";
}

void StageSpec::validate() const {
    if (name.empty()) throw ConfigError("stage: empty name");
    if (trainable.empty()) throw ConfigError("stage '" + name + "': empty trainable encoder id");
    if (frozen_target.empty()) throw ConfigError("stage '" + name + "': empty target encoder id");
    if (dataset.empty()) throw ConfigError("stage '" + name + "': empty dataset id");
    if (trainable == frozen_target) {
        throw ConfigError("stage '" + name + "': trainable and frozen target are both '" +
                          trainable + "'");
    }
    if (batch_size < 2) {
        throw ConfigError("stage '" + name + "': batch_size must be >= 2 (pair-vs-batch "
                          "contrast needs at least one negative)");
    }
    schedule.validate();
    if (adamw.lr < 0.0) throw ConfigError("stage '" + name + "': lr must be >= 0");
    if (adamw.beta1 < 0.0 || adamw.beta1 >= 1.0 || adamw.beta2 < 0.0 || adamw.beta2 >= 1.0) {
        throw ConfigError("stage '" + name + "': betas must lie in [0, 1)");
    }
    if (!(adamw.eps > 0.0)) throw ConfigError("stage '" + name + "': eps must be > 0");
    if (adamw.weight_decay < 0.0) {
        throw ConfigError("stage '" + name + "': weight_decay must be >= 0");
    }
}

bool PipelineState::stage_completed(const std::string& name) const {
    return std::find(completed_stages.begin(), completed_stages.end(), name) !=
           completed_stages.end();
}

const MlpEncoder& PipelineState::encoder(const std::string& id) const {
    auto it = encoders.find(id);
    if (it == encoders.end()) throw ConfigError("no encoder '" + id + "' in the registry");
    return it->second;
}

std::map<std::string, const MlpEncoder*> PipelineState::encoder_views() const {
    std::map<std::string, const MlpEncoder*> views;
    for (const auto& [id, enc] : encoders) views[id] = &enc;
    return views;
}

namespace {

// GBPL record types. Length-prefixed so a reader can verify every record
// consumes exactly its declared payload.
enum RecordType : uint32_t {
    kRecEnd = 0,
    kRecMeta = 1,
    kRecEncoder = 2,
    kRecTemperature = 3,
    kRecCompleted = 4,
    kRecMetrics = 5,
    kRecDatasetRef = 6,
    kRecHeldout = 7,
    kRecActive = 8,
};

void put_record(ByteWriter& w, uint32_t type, const ByteWriter& payload) {
    w.u32(type);
    w.u64(payload.size());
    w.raw(payload.bytes().data(), payload.size());
}

void put_encoder(ByteWriter& w, const std::string& id, const MlpEncoder& enc) {
    ByteWriter p;
    p.str(id);
    p.u8(static_cast<uint8_t>((enc.frozen() ? 1 : 0) | (enc.reference() ? 2 : 0)));
    p.u64(enc.init_seed());
    p.u8(static_cast<uint8_t>(enc.activation()));
    p.u32(static_cast<uint32_t>(enc.layer_count()));
    for (size_t d : enc.dims()) p.u32(static_cast<uint32_t>(d));
    for (size_t l = 0; l < enc.layer_count(); ++l) {
        p.matrix_f64(enc.weight(l));
        p.matrix_f64(enc.bias(l));
    }
    put_record(w, kRecEncoder, p);
}

std::pair<std::string, MlpEncoder> take_encoder(ByteReader& p) {
    std::string id = p.str(256);
    const uint8_t flags = p.u8();
    if (flags > 3) p.fail("bad encoder flags " + std::to_string(flags));
    const uint64_t seed = p.u64();
    const uint8_t act_byte = p.u8();
    if (act_byte > 1) p.fail("bad activation byte " + std::to_string(act_byte));
    const uint32_t layers = p.u32();
    if (layers < 1 || layers > 64) p.fail("implausible layer count " + std::to_string(layers));
    std::vector<uint32_t> dims(layers + 1);
    for (uint32_t& d : dims) {
        d = p.u32();
        if (d < 1 || d > (1u << 20)) p.fail("implausible layer dim " + std::to_string(d));
    }
    std::vector<Matrix> weights, biases;
    for (uint32_t l = 0; l < layers; ++l) {
        weights.push_back(p.matrix_f64(dims[l], dims[l + 1]));
        biases.push_back(p.matrix_f64(1, dims[l + 1]));
    }
    MlpEncoder enc = MlpEncoder::restore(std::move(weights), std::move(biases),
                                         static_cast<Activation>(act_byte), (flags & 1) != 0,
                                         (flags & 2) != 0, seed);
    return {std::move(id), std::move(enc)};
}

} // namespace

void PipelineState::serialize(ByteWriter& w) const {
    w.raw("GBPL", 4);
    w.u32(1); // version
    {
        ByteWriter p;
        p.u64(master_seed);
        put_record(w, kRecMeta, p);
    }
    for (const auto& [id, enc] : encoders) put_encoder(w, id, enc);
    for (const auto& [stage, temp] : stage_temperature) {
        ByteWriter p;
        p.str(stage);
        p.f64(temp.log_inv_tau);
        put_record(w, kRecTemperature, p);
    }
    for (const std::string& stage : completed_stages) {
        ByteWriter p;
        p.str(stage);
        put_record(w, kRecCompleted, p);
    }
    {
        ByteWriter p;
        p.u64(metrics.size());
        for (const MetricsRow& r : metrics) {
            p.str(r.stage);
            p.u64(r.step);
            p.u32(r.epoch);
            p.f64(r.loss);
            p.f64(r.lr);
            p.f64(r.tau);
        }
        put_record(w, kRecMetrics, p);
    }
    for (const auto& [id, hash] : dataset_hashes) {
        ByteWriter p;
        p.str(id);
        p.u64(hash);
        put_record(w, kRecDatasetRef, p);
    }
    for (const HeldoutSummary& h : heldout) {
        ByteWriter p;
        p.str(h.stage);
        p.f64(h.initial_loss);
        p.f64(h.final_loss);
        put_record(w, kRecHeldout, p);
    }
    if (active.has_value()) {
        ByteWriter p;
        p.str(active->name);
        p.u32(active->epoch);
        p.u32(active->step_in_epoch);
        p.u64(active->stage_step);
        p.u8(active->has_heldout ? 1 : 0);
        p.f64(active->heldout_initial);
        active->optimizer.serialize(p);
        put_record(w, kRecActive, p);
    }
    put_record(w, kRecEnd, ByteWriter());
}

PipelineState PipelineState::deserialize(ByteReader& r) {
    r.magic("GBPL");
    const uint32_t version = r.u32();
    if (version != 1) r.fail("unsupported GBPL version " + std::to_string(version));

    PipelineState st;
    bool saw_meta = false;
    bool saw_metrics = false;
    for (;;) {
        const uint32_t type = r.u32();
        const uint64_t len = r.u64();
        if (len > r.remaining()) {
            r.fail("record of type " + std::to_string(type) + " declares " +
                   std::to_string(len) + " bytes, only " + std::to_string(r.remaining()) +
                   " remain");
        }
        const std::vector<uint8_t> payload = r.raw(len);
        ByteReader p(payload, "GBPL record type " + std::to_string(type));
        if (type == kRecEnd) {
            if (len != 0) p.fail("end record carries payload");
            break;
        }
        switch (type) {
            case kRecMeta:
                if (saw_meta) p.fail("duplicate meta record");
                saw_meta = true;
                st.master_seed = p.u64();
                break;
            case kRecEncoder: {
                auto [id, enc] = take_encoder(p);
                if (!st.encoders.emplace(id, std::move(enc)).second) {
                    p.fail("duplicate encoder '" + id + "'");
                }
                break;
            }
            case kRecTemperature: {
                const std::string stage = p.str(256);
                Temperature t;
                t.log_inv_tau = p.f64();
                if (!st.stage_temperature.emplace(stage, t).second) {
                    p.fail("duplicate temperature for stage '" + stage + "'");
                }
                break;
            }
            case kRecCompleted:
                st.completed_stages.push_back(p.str(256));
                break;
            case kRecMetrics: {
                if (saw_metrics) p.fail("duplicate metrics record");
                saw_metrics = true;
                const uint64_t count = p.u64();
                // A row is at least 40 payload bytes; reject counts the
                // record cannot possibly hold before reserving.
                if (count > payload.size() / 40 + 1) {
                    p.fail("metrics row count " + std::to_string(count) +
                           " inconsistent with record size");
                }
                st.metrics.reserve(count);
                for (uint64_t i = 0; i < count; ++i) {
                    MetricsRow row;
                    row.stage = p.str(256);
                    row.step = p.u64();
                    row.epoch = p.u32();
                    row.loss = p.f64();
                    row.lr = p.f64();
                    row.tau = p.f64();
                    st.metrics.push_back(std::move(row));
                }
                break;
            }
            case kRecDatasetRef: {
                const std::string id = p.str(256);
                const uint64_t hash = p.u64();
                if (!st.dataset_hashes.emplace(id, hash).second) {
                    p.fail("duplicate dataset reference '" + id + "'");
                }
                break;
            }
            case kRecHeldout: {
                HeldoutSummary h;
                h.stage = p.str(256);
                h.initial_loss = p.f64();
                h.final_loss = p.f64();
                st.heldout.push_back(std::move(h));
                break;
            }
            case kRecActive: {
                if (st.active.has_value()) p.fail("duplicate active-stage record");
                ActiveStage act;
                act.name = p.str(256);
                act.epoch = p.u32();
                act.step_in_epoch = p.u32();
                act.stage_step = p.u64();
                act.has_heldout = p.u8() != 0;
                act.heldout_initial = p.f64();
                act.optimizer = AdamWState::deserialize(p);
                st.active = std::move(act);
                break;
            }
            default:
                r.fail("unknown GBPL record type " + std::to_string(type));
        }
        p.expect_eof();
    }
    r.expect_eof();
    if (!saw_meta) r.fail("checkpoint lacks the meta record");
    return st;
}

void PipelineState::save(const std::filesystem::path& path) const {
    ByteWriter w;
    serialize(w);
    write_file_bytes(path, w.bytes());
}

PipelineState PipelineState::load(const std::filesystem::path& path) {
    const std::vector<uint8_t> bytes = read_file_bytes(path);
    ByteReader r(bytes, path.string());
    return deserialize(r);
}

BatchLoss build_batch_loss(Tape& tape, const MlpEncoder& trainable, const Matrix& query_rows,
                           const Matrix& target_embeddings, double log_inv_tau,
                           LossVariant variant) {
    if (query_rows.rows() != target_embeddings.rows()) {
        throw DimensionError("batch loss: " + std::to_string(query_rows.rows()) +
                             " query rows vs " + std::to_string(target_embeddings.rows()) +
                             " target rows");
    }
    if (trainable.output_dim() != target_embeddings.cols()) {
        throw DimensionError("batch loss: trainable joint dim " +
                             std::to_string(trainable.output_dim()) + " vs target dim " +
                             std::to_string(target_embeddings.cols()));
    }
    BatchLoss out;
    Var input = tape.constant(query_rows);
    out.trainable_fwd = trainable.forward_tape(tape, input);
    // The frozen side enters as a constant: gradient isolation is structural,
    // not a masking convention.
    Var targets = tape.constant(target_embeddings);
    out.temperature_leaf = tape.leaf(Matrix::scalar(log_inv_tau));
    LossOutput lo = variant == LossVariant::directional
                        ? infonce_directional(tape, out.trainable_fwd.output, targets,
                                              out.temperature_leaf)
                        : infonce_symmetric(tape, out.trainable_fwd.output, targets,
                                            out.temperature_leaf);
    out.loss = lo.loss;
    return out;
}

namespace {

double heldout_loss_value(const StageSpec& spec, const Dataset& data,
                          const MlpEncoder& trainable, const MlpEncoder& target,
                          const std::vector<uint32_t>& heldout_idx, const Temperature& temp) {
    const Matrix q = trainable.forward(data.column(spec.trainable).gather_rows(heldout_idx));
    const Matrix t = target.forward(data.column(spec.frozen_target).gather_rows(heldout_idx));
    return spec.loss == LossVariant::directional ? infonce_directional_value(q, t, temp)
                                                 : infonce_symmetric_value(q, t, temp);
}

struct EpochChunks {
    std::vector<uint32_t> perm;
    std::vector<std::pair<size_t, size_t>> chunks; // [begin, end) into perm
};

EpochChunks epoch_plan(const std::vector<uint32_t>& train_idx, const StageSpec& spec,
                       uint32_t epoch) {
    EpochChunks plan;
    plan.perm = train_idx;
    SplitMix64 rng(derive_seed(spec.seed, "epoch:" + std::to_string(epoch)));
    shuffle(plan.perm, rng);
    const size_t n = plan.perm.size();
    for (size_t begin = 0; begin < n; begin += spec.batch_size) {
        const size_t end = std::min(n, begin + spec.batch_size);
        if (end - begin >= 2) plan.chunks.emplace_back(begin, end);
    }
    return plan;
}

} // namespace

bool run_stage(const StageSpec& spec, const Dataset& data, PipelineState& state,
               RunControl* control) {
    spec.validate();
    data.validate();

    auto it_train = state.encoders.find(spec.trainable);
    if (it_train == state.encoders.end()) {
        throw ConfigError("stage '" + spec.name + "': unknown trainable encoder '" +
                          spec.trainable + "'");
    }
    auto it_target = state.encoders.find(spec.frozen_target);
    if (it_target == state.encoders.end()) {
        throw ConfigError("stage '" + spec.name + "': unknown target encoder '" +
                          spec.frozen_target + "'");
    }
    MlpEncoder& trainable = it_train->second;
    const MlpEncoder& target = it_target->second;
    if (!target.frozen()) {
        throw ContractError("stage '" + spec.name + "': target encoder '" + spec.frozen_target +
                            "' is not frozen");
    }
    if (trainable.frozen()) {
        throw ContractError("stage '" + spec.name + "': trainable encoder '" + spec.trainable +
                            "' is frozen");
    }
    const Matrix& q_col = data.column(spec.trainable);
    const Matrix& t_col = data.column(spec.frozen_target);
    if (q_col.cols() != trainable.input_dim()) {
        throw DimensionError("stage '" + spec.name + "': '" + spec.trainable + "' column dim " +
                             std::to_string(q_col.cols()) + " vs encoder input " +
                             std::to_string(trainable.input_dim()));
    }
    if (t_col.cols() != target.input_dim()) {
        throw DimensionError("stage '" + spec.name + "': '" + spec.frozen_target +
                             "' column dim " + std::to_string(t_col.cols()) +
                             " vs encoder input " + std::to_string(target.input_dim()));
    }
    if (trainable.output_dim() != target.output_dim()) {
        throw DimensionError("stage '" + spec.name + "': joint dims differ (" +
                             std::to_string(trainable.output_dim()) + " vs " +
                             std::to_string(target.output_dim()) + ")");
    }

    const std::vector<uint32_t> train_idx = data.train_indices();
    const std::vector<uint32_t> heldout_idx = data.heldout_indices();
    if (spec.epochs > 0 && train_idx.size() < 2) {
        throw ConfigError("stage '" + spec.name + "': dataset has " +
                          std::to_string(train_idx.size()) + " training rows, need >= 2");
    }

    const bool resuming = state.active.has_value() && state.active->name == spec.name;
    if (!resuming) {
        if (state.active.has_value()) {
            throw ContractError("stage '" + spec.name + "' cannot start while stage '" +
                                state.active->name + "' is mid-flight");
        }
        state.stage_temperature[spec.name] = Temperature::init();
        ActiveStage act;
        act.name = spec.name;
        std::vector<Matrix*> mut = trainable.param_views();
        std::vector<const Matrix*> views(mut.begin(), mut.end());
        const Matrix temp_shape = Matrix::scalar(0.0);
        views.push_back(&temp_shape);
        std::vector<bool> decay(views.size(), true);
        decay.back() = false; // temperature is not a weight
        act.optimizer = AdamWState(views, decay, spec.adamw);
        act.has_heldout = !heldout_idx.empty();
        if (act.has_heldout) {
            act.heldout_initial = heldout_loss_value(spec, data, trainable, target, heldout_idx,
                                                     state.stage_temperature[spec.name]);
        }
        state.active = std::move(act);
    } else if (state.stage_temperature.find(spec.name) == state.stage_temperature.end()) {
        throw ContractError("resume: checkpoint lacks the temperature of stage '" + spec.name +
                            "'");
    }
    ActiveStage& act = *state.active;
    Temperature& temp = state.stage_temperature.at(spec.name);

    Matrix cached_targets;
    if (spec.cache_frozen_targets) cached_targets = target.forward(t_col);

    while (act.epoch < spec.epochs) {
        const EpochChunks plan = epoch_plan(train_idx, spec, act.epoch);
        if (act.step_in_epoch > plan.chunks.size()) {
            throw ContractError("resume: stage '" + spec.name + "' step_in_epoch " +
                                std::to_string(act.step_in_epoch) + " exceeds the " +
                                std::to_string(plan.chunks.size()) + " batches of an epoch");
        }
        for (size_t ci = act.step_in_epoch; ci < plan.chunks.size(); ++ci) {
            if (control != nullptr && control->exhausted()) return false;
            const auto [begin, end] = plan.chunks[ci];
            const std::vector<uint32_t> rows(plan.perm.begin() + static_cast<long>(begin),
                                             plan.perm.begin() + static_cast<long>(end));
            const Matrix q_rows = q_col.gather_rows(rows);
            const Matrix t_emb = spec.cache_frozen_targets
                                     ? cached_targets.gather_rows(rows)
                                     : target.forward(t_col.gather_rows(rows));
            const double tau_used = temp.tau();

            Tape tape;
            BatchLoss bl =
                build_batch_loss(tape, trainable, q_rows, t_emb, temp.log_inv_tau, spec.loss);
            const double loss_value = tape.value(bl.loss).at(0, 0);
            if (!std::isfinite(loss_value)) {
                throw NumericError("stage '" + spec.name + "' step " +
                                   std::to_string(act.stage_step) + " (epoch " +
                                   std::to_string(act.epoch) + "): non-finite loss");
            }
            tape.backward(bl.loss);

            std::vector<Matrix*> params = trainable.param_views();
            Matrix temp_param = Matrix::scalar(temp.log_inv_tau);
            params.push_back(&temp_param);
            std::vector<const Matrix*> grads;
            grads.reserve(params.size());
            for (Var leaf : bl.trainable_fwd.param_leaves) grads.push_back(&tape.adjoint(leaf));
            grads.push_back(&tape.adjoint(bl.temperature_leaf));

            const double lr = spec.schedule.lr_at(act.stage_step);
            try {
                act.optimizer.step(params, grads, lr);
            } catch (const NumericError& e) {
                throw NumericError("stage '" + spec.name + "' step " +
                                   std::to_string(act.stage_step) + ": " + e.what());
            }
            temp.log_inv_tau = temp_param.at(0, 0);
            temp.clamp();

            state.metrics.push_back(
                {spec.name, act.stage_step, act.epoch, loss_value, lr, tau_used});
            act.step_in_epoch = static_cast<uint32_t>(ci) + 1;
            ++act.stage_step;
            if (control != nullptr) ++control->steps_taken;
        }
        ++act.epoch;
        act.step_in_epoch = 0;
    }

    // Completion: quantize to the precision the encoder artifacts persist,
    // then freeze. Later stages and exported files see identical weights.
    for (Matrix* p : trainable.param_views()) *p = p->quantized_f32();
    if (act.has_heldout) {
        const double final_loss =
            heldout_loss_value(spec, data, trainable, target, heldout_idx, temp);
        state.heldout.push_back({spec.name, act.heldout_initial, final_loss});
    }
    trainable.freeze();
    state.completed_stages.push_back(spec.name);
    state.active.reset();
    return true;
}

bool run_pipeline(const std::vector<StageSpec>& stages,
                  const std::map<std::string, const Dataset*>& datasets, PipelineState& state,
                  RunControl* control) {
    // Resume consistency first: the checkpointed progress must be a prefix
    // of the configured stage list before the plan below can be replayed.
    if (state.completed_stages.size() > stages.size()) {
        throw ConfigError("checkpoint has " + std::to_string(state.completed_stages.size()) +
                          " completed stages, config defines only " +
                          std::to_string(stages.size()));
    }
    for (size_t i = 0; i < state.completed_stages.size(); ++i) {
        if (state.completed_stages[i] != stages[i].name) {
            throw ConfigError("checkpoint stage order mismatch at position " +
                              std::to_string(i) + ": '" + state.completed_stages[i] +
                              "' vs configured '" + stages[i].name + "'");
        }
    }
    if (state.active.has_value()) {
        const size_t next = state.completed_stages.size();
        if (next >= stages.size() || stages[next].name != state.active->name) {
            throw ConfigError("checkpoint is mid-stage '" + state.active->name +
                              "', which is not the next configured stage");
        }
    }

    // Validate everything up front: a run that starts must have a fully
    // consistent plan. Completed stages froze their trainables after the
    // original run validated this same plan, so replay from the original
    // frozen set rather than the current one.
    std::set<std::string> frozen_now;
    std::set<std::string> trainable_seen;
    std::set<std::string> names;
    for (const auto& [id, enc] : state.encoders) {
        if (enc.frozen()) frozen_now.insert(id);
    }
    for (size_t i = 0; i < state.completed_stages.size(); ++i) {
        frozen_now.erase(stages[i].trainable);
    }
    for (const StageSpec& spec : stages) {
        spec.validate();
        if (!names.insert(spec.name).second) {
            throw ConfigError("duplicate stage name '" + spec.name + "'");
        }
        if (state.encoders.find(spec.trainable) == state.encoders.end()) {
            throw ConfigError("stage '" + spec.name + "': unknown trainable encoder '" +
                              spec.trainable + "'");
        }
        if (state.encoders.find(spec.frozen_target) == state.encoders.end()) {
            throw ConfigError("stage '" + spec.name + "': unknown target encoder '" +
                              spec.frozen_target + "'");
        }
        auto ds_it = datasets.find(spec.dataset);
        if (ds_it == datasets.end() || ds_it->second == nullptr) {
            throw ConfigError("stage '" + spec.name + "': unknown dataset '" + spec.dataset +
                              "'");
        }
        const Dataset& ds = *ds_it->second;
        for (const std::string& id : {spec.trainable, spec.frozen_target}) {
            if (!ds.has_modality(id)) {
                throw ConfigError("stage '" + spec.name + "': dataset '" + spec.dataset +
                                  "' has no column for '" + id + "'");
            }
            const MlpEncoder& enc = state.encoders.at(id);
            if (ds.column(id).cols() != enc.input_dim()) {
                throw DimensionError("stage '" + spec.name + "': '" + id + "' column dim " +
                                     std::to_string(ds.column(id).cols()) +
                                     " vs encoder input " + std::to_string(enc.input_dim()));
            }
        }
        if (state.encoders.at(spec.trainable).output_dim() !=
            state.encoders.at(spec.frozen_target).output_dim()) {
            throw DimensionError("stage '" + spec.name + "': joint dims differ");
        }
        if (frozen_now.count(spec.frozen_target) == 0) {
            throw ConfigError("stage '" + spec.name + "': target '" + spec.frozen_target +
                              "' is neither frozen initially nor trained by an earlier stage");
        }
        if (frozen_now.count(spec.trainable) != 0) {
            throw ConfigError("stage '" + spec.name + "': trainable '" + spec.trainable +
                              "' is already frozen by then");
        }
        if (!trainable_seen.insert(spec.trainable).second) {
            throw ConfigError("stage '" + spec.name + "': encoder '" + spec.trainable +
                              "' is trained by two stages");
        }
        frozen_now.insert(spec.trainable);
    }
    for (const auto& [id, enc] : state.encoders) {
        if (!enc.frozen() && trainable_seen.count(id) == 0) {
            throw ConfigError("encoder '" + id + "' is neither frozen nor trained by any stage");
        }
    }

    // Bind dataset content hashes: a resumed run must see the bytes the
    // original run saw.
    for (const auto& [id, ds] : datasets) {
        ByteWriter w;
        ds->serialize(w);
        const uint64_t h = fnv1a64(w.bytes().data(), w.size());
        auto it = state.dataset_hashes.find(id);
        if (it != state.dataset_hashes.end() && it->second != h) {
            throw ConfigError("dataset '" + id + "' differs from the checkpointed run");
        }
        state.dataset_hashes[id] = h;
    }

    for (size_t i = state.completed_stages.size(); i < stages.size(); ++i) {
        if (control != nullptr && control->exhausted()) return false;
        if (!run_stage(stages[i], *datasets.at(stages[i].dataset), state, control)) {
            return false;
        }
    }
    return true;
}

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::filesystem::path& path) {
    std::string out = "stage,step,epoch,loss,lr,tau\n";
    char buf[200];
    for (const MetricsRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%" PRIu64 ",%u,%.17g,%.17g,%.17g\n",
                      r.stage.c_str(), r.step, r.epoch, r.loss, r.lr, r.tau);
        out += buf;
    }
    write_file_bytes(path, std::vector<uint8_t>(out.begin(), out.end()));
}

} // namespace modbind
