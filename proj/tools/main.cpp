#include <algorithm>
#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "modbind/config.hpp"
#include "modbind/embedding_store.hpp"
#include "modbind/errors.hpp"
#include "modbind/io_util.hpp"
#include "modbind/pipeline.hpp"
#include "modbind/retrieval.hpp"
#include "modbind/rng.hpp"
#include "modbind/synthworld.hpp"

namespace {

using namespace modbind;
namespace fs = std::filesystem;

std::string hex64(uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016" PRIx64, v);
    return buf;
}

std::vector<uint8_t> dataset_bytes(const Dataset& ds) {
    ByteWriter w;
    ds.serialize(w);
    return w.take();
}

// The world datasets in manifest order: the stage sets, extras, then the
// eval bundle under its fixed file name.
std::vector<std::pair<std::string, const Dataset*>> world_datasets(const RunConfig& cfg,
                                                                   const World& world) {
    std::vector<std::pair<std::string, const Dataset*>> out;
    out.emplace_back("stage1", &world.stage1);
    out.emplace_back("stage2", &world.stage2);
    for (size_t i = 0; i < world.extra_sets.size(); ++i) {
        out.emplace_back("extra:" + cfg.world.extras[i].tag, &world.extra_sets[i]);
    }
    return out;
}

void cmd_gen_data(const std::string& config_path) {
    const RunConfig cfg = RunConfig::load(config_path);
    const World world = generate_world(cfg.world);
    fs::create_directories(cfg.output_dir);

    nlohmann::json files;
    auto emit = [&](const fs::path& path, const Dataset& ds) {
        const std::vector<uint8_t> bytes = dataset_bytes(ds);
        write_file_bytes(path, bytes);
        files[path.filename().string()] = {
            {"fnv64", hex64(fnv1a64(bytes.data(), bytes.size()))},
            {"rows", ds.n()},
            {"modalities", ds.tags},
        };
        std::printf("wrote %s (%zu rows, %zu modalities)\n", path.string().c_str(), ds.n(),
                    ds.tags.size());
    };
    for (const auto& [id, ds] : world_datasets(cfg, world)) emit(cfg.dataset_path(id), *ds);
    emit(cfg.eval_bundle_path(), world.eval);

    nlohmann::json manifest;
    manifest["master_seed"] = cfg.master_seed;
    manifest["files"] = std::move(files);
    const std::string text = manifest.dump(2) + "\n";
    write_file_bytes(cfg.manifest_path(), std::vector<uint8_t>(text.begin(), text.end()));
    std::printf("wrote %s\n", cfg.manifest_path().string().c_str());
}

void cmd_train(const std::string& config_path, const std::string& resume_path,
               uint64_t stop_after_steps) {
    const RunConfig cfg = RunConfig::load(config_path);
    const World world = generate_world(cfg.world);

    // Load the stage datasets and pin them to this config: training pairs
    // reference encoders built from the generator's own projections, so a
    // dataset file from some other config would silently mistrain.
    std::map<std::string, const Dataset*> world_by_id;
    for (const auto& [id, ds] : world_datasets(cfg, world)) world_by_id[id] = ds;
    std::set<std::string> needed;
    for (const StageSpec& s : cfg.stages) needed.insert(s.dataset);
    std::map<std::string, Dataset> loaded;
    std::map<std::string, const Dataset*> datasets;
    for (const std::string& id : needed) {
        const fs::path path = cfg.dataset_path(id);
        Dataset ds = Dataset::load(path);
        const std::vector<uint8_t> got = dataset_bytes(ds);
        const std::vector<uint8_t> want = dataset_bytes(*world_by_id.at(id));
        if (fnv1a64(got.data(), got.size()) != fnv1a64(want.data(), want.size())) {
            throw ConfigError("dataset " + path.string() +
                              " was not generated from this config; rerun gen-data");
        }
        datasets[id] = &loaded.emplace(id, std::move(ds)).first->second;
    }

    PipelineState state;
    if (!resume_path.empty()) {
        state = PipelineState::load(resume_path);
        if (state.master_seed != cfg.master_seed) {
            throw ConfigError("checkpoint master seed " + std::to_string(state.master_seed) +
                              " does not match config master seed " +
                              std::to_string(cfg.master_seed));
        }
    } else {
        state.master_seed = cfg.master_seed;
        for (const char* tag : {"ground", "text"}) {
            state.encoders.emplace(tag, make_reference_encoder(world, tag));
        }
        for (const StageSpec& s : cfg.stages) {
            if (state.encoders.count(s.trainable) != 0) continue;
            const std::vector<size_t> dims = cfg.encoder_dims(s.trainable);
            const Activation act = cfg.encoder_config(s.trainable).activation;
            auto target = state.encoders.find(s.frozen_target);
            // Warm start from a reference target when the architectures
            // agree; targets trained by earlier stages don't exist in final
            // form yet, so those trainables start from their own seed.
            if (target != state.encoders.end() && target->second.reference() &&
                target->second.dims() == dims && target->second.activation() == act) {
                state.encoders.emplace(s.trainable, MlpEncoder::init_from(target->second, dims));
            } else {
                state.encoders.emplace(
                    s.trainable, MlpEncoder::init(dims, act, cfg.encoder_seed(s.trainable)));
            }
        }
    }

    RunControl control;
    if (stop_after_steps > 0) control.max_steps = stop_after_steps;
    const bool finished = run_pipeline(cfg.stages, datasets, state, &control);

    fs::create_directories(cfg.output_dir);
    state.save(cfg.checkpoint_path());
    write_metrics_csv(state.metrics, cfg.metrics_path());
    for (const auto& [id, enc] : state.encoders) {
        write_file_bytes(cfg.encoder_path(id), enc.serialize());
    }

    for (const HeldoutSummary& h : state.heldout) {
        std::printf("stage %s: held-out loss %.6f -> %.6f\n", h.stage.c_str(), h.initial_loss,
                    h.final_loss);
    }
    if (finished) {
        std::printf("training complete: %zu stages, %zu metric rows\n",
                    state.completed_stages.size(), state.metrics.size());
    } else {
        std::printf("stopped after %" PRIu64 " steps; resume with --resume %s\n",
                    control.steps_taken, cfg.checkpoint_path().string().c_str());
    }
    std::printf("checkpoint: %s\n", cfg.checkpoint_path().string().c_str());
}

void cmd_eval(const std::string& ckpt_path, const std::string& bundle_path,
              std::vector<uint32_t> ks, const std::string& out_dir) {
    if (ks.empty()) throw ConfigError("eval: --k list must not be empty");
    std::sort(ks.begin(), ks.end());
    ks.erase(std::unique(ks.begin(), ks.end()), ks.end());

    const PipelineState state = PipelineState::load(ckpt_path);
    const Dataset bundle = Dataset::load(bundle_path);
    const std::map<std::string, const MlpEncoder*> views = state.encoder_views();

    // Rank only the modalities the checkpoint can embed.
    Dataset scoped;
    for (size_t m = 0; m < bundle.tags.size(); ++m) {
        if (views.count(bundle.tags[m]) != 0) {
            scoped.tags.push_back(bundle.tags[m]);
            scoped.obs.push_back(bundle.obs[m]);
        } else {
            std::printf("skipping modality '%s': no encoder in checkpoint\n",
                        bundle.tags[m].c_str());
        }
    }
    scoped.train_mask = bundle.train_mask;
    if (scoped.tags.size() < 2) {
        throw ConfigError("eval: bundle and checkpoint share fewer than two modalities");
    }

    const uint64_t baseline_seed = derive_seed(state.master_seed, "eval:baseline");
    const std::vector<RetrievalReport> reports =
        evaluate_all_pairs(views, scoped, ks, baseline_seed);

    const fs::path out = out_dir.empty() ? fs::path(ckpt_path).parent_path() : fs::path(out_dir);
    fs::create_directories(out.empty() ? fs::path(".") : out);
    write_report_csv(reports, out / "report.csv");
    write_rank_dump_csv(reports, out / "ranks.csv");

    for (const RetrievalReport& r : reports) {
        if (r.baseline) continue;
        std::string recalls;
        for (size_t i = 0; i < r.k_values.size(); ++i) {
            char buf[48];
            std::snprintf(buf, sizeof(buf), " R@%u %.1f%%", r.k_values[i], r.recall[i]);
            recalls += buf;
        }
        const RetrievalReport* base = nullptr;
        for (const RetrievalReport& b : reports) {
            if (b.baseline && b.query_modality == r.query_modality &&
                b.gallery_modality == r.gallery_modality) {
                base = &b;
                break;
            }
        }
        std::printf("%s->%s N=%u%s median %.1f | random R@%u %.2f%%\n", r.query_modality.c_str(),
                    r.gallery_modality.c_str(), r.gallery_size, recalls.c_str(), r.median,
                    ks.back(), base ? base->recall_at(ks.back()) : 0.0);
    }
    std::printf("reports: %s, %s\n", (out / "report.csv").string().c_str(),
                (out / "ranks.csv").string().c_str());
}

void cmd_embed(const std::string& ckpt_path, const std::string& data_path,
               const std::string& modality, const std::string& out_path) {
    const PipelineState state = PipelineState::load(ckpt_path);
    const Dataset data = Dataset::load(data_path);
    const MlpEncoder& enc = state.encoder(modality);
    const Matrix& col = data.column(modality);
    if (col.cols() != enc.input_dim()) {
        throw DimensionError("embed: modality '" + modality + "' rows have dim " +
                             std::to_string(col.cols()) + " but the encoder expects " +
                             std::to_string(enc.input_dim()));
    }
    EmbeddingStore store;
    store.modality = modality;
    store.ids.resize(col.rows());
    std::iota(store.ids.begin(), store.ids.end(), uint64_t{0});
    store.embeddings = enc.forward(col).l2_normalized_rows().quantized_f32();
    store.validate();
    store.save(out_path);
    std::printf("wrote %zu %zu-dim '%s' embeddings to %s\n", store.count(), store.dim(),
                modality.c_str(), out_path.c_str());
}

void cmd_retrieve(const std::string& queries_path, const std::string& gallery_path, uint32_t k,
                  const std::string& out_path) {
    const EmbeddingStore queries = EmbeddingStore::load(queries_path);
    const EmbeddingStore gallery = EmbeddingStore::load(gallery_path);
    if (queries.dim() != gallery.dim()) {
        throw ConfigError("retrieve: query dim " + std::to_string(queries.dim()) +
                          " vs gallery dim " + std::to_string(gallery.dim()));
    }
    if (k < 1) throw ConfigError("retrieve: k must be >= 1");
    if (k > gallery.count()) {
        throw ConfigError("retrieve: k = " + std::to_string(k) + " exceeds gallery size " +
                          std::to_string(gallery.count()));
    }

    const Matrix sim = similarity_matrix(queries.embeddings, gallery.embeddings);
    std::string csv = "query_id,rank,gallery_id,similarity\n";
    std::vector<uint32_t> order(gallery.count());
    for (size_t q = 0; q < queries.count(); ++q) {
        std::iota(order.begin(), order.end(), 0u);
        std::partial_sort(order.begin(), order.begin() + k, order.end(),
                          [&](uint32_t a, uint32_t b) {
                              if (sim.at(q, a) != sim.at(q, b)) return sim.at(q, a) > sim.at(q, b);
                              return a < b;
                          });
        for (uint32_t r = 0; r < k; ++r) {
            char buf[96];
            std::snprintf(buf, sizeof(buf), "%" PRIu64 ",%u,%" PRIu64 ",%.10g\n", queries.ids[q],
                          r + 1, gallery.ids[order[r]], sim.at(q, order[r]));
            csv += buf;
        }
    }
    if (out_path.empty()) {
        std::fwrite(csv.data(), 1, csv.size(), stdout);
    } else {
        write_file_bytes(out_path, std::vector<uint8_t>(csv.begin(), csv.end()));
        std::printf("wrote top-%u of %zu queries to %s\n", k, queries.count(),
                    out_path.c_str());
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-stage contrastive binding on a synthetic multimodal world"};
    app.require_subcommand(1);

    std::string config_path;
    std::string resume_path;
    uint64_t stop_after_steps = 0;
    std::string ckpt_path, bundle_path, data_path, modality, out_path, out_dir;
    std::string queries_path, gallery_path;
    std::vector<uint32_t> ks = {1, 5, 10};
    uint32_t k = 10;

    CLI::App* gen = app.add_subcommand("gen-data", "generate dataset files and a manifest");
    gen->add_option("--config", config_path, "run config JSON")->required();

    CLI::App* train = app.add_subcommand("train", "run the binding stages");
    train->add_option("--config", config_path, "run config JSON")->required();
    train->add_option("--resume", resume_path, "checkpoint to continue from");
    train->add_option("--stop-after-steps", stop_after_steps,
                      "checkpoint and exit after this many optimizer steps (0 = run all)");

    CLI::App* eval = app.add_subcommand("eval", "all-pairs retrieval reports on an eval bundle");
    eval->add_option("--ckpt", ckpt_path, "pipeline checkpoint")->required();
    eval->add_option("--bundle", bundle_path, "eval bundle dataset")->required();
    eval->add_option("--k", ks, "recall cutoffs")->delimiter(',');
    eval->add_option("--out-dir", out_dir, "report directory (default: checkpoint's)");

    CLI::App* embed = app.add_subcommand("embed", "embed one modality into a store file");
    embed->add_option("--ckpt", ckpt_path, "pipeline checkpoint")->required();
    embed->add_option("--data", data_path, "dataset file")->required();
    embed->add_option("--modality", modality, "modality tag to embed")->required();
    embed->add_option("--out", out_path, "output store path")->required();

    CLI::App* retrieve = app.add_subcommand("retrieve", "top-k cosine retrieval between stores");
    retrieve->add_option("--queries", queries_path, "query store")->required();
    retrieve->add_option("--gallery", gallery_path, "gallery store")->required();
    retrieve->add_option("--k", k, "results per query")->required();
    retrieve->add_option("--out", out_path, "output CSV (default: stdout)");

    try {
        try {
            app.parse(argc, argv);
        } catch (const CLI::ParseError& e) {
            const int code = app.exit(e);
            return code == 0 ? 0 : 2;
        }
        if (gen->parsed()) cmd_gen_data(config_path);
        if (train->parsed()) cmd_train(config_path, resume_path, stop_after_steps);
        if (eval->parsed()) cmd_eval(ckpt_path, bundle_path, ks, out_dir);
        if (embed->parsed()) cmd_embed(ckpt_path, data_path, modality, out_path);
        if (retrieve->parsed()) cmd_retrieve(queries_path, gallery_path, k, out_path);
        return 0;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return e.exit_code();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
