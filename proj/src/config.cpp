#include "modbind/config.hpp"

#include <algorithm>
#include <set>

#include <json.hpp>

#include "modbind/errors.hpp"
#include "modbind/io_util.hpp"
#include "modbind/rng.hpp"

namespace modbind {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& where, const std::string& what) {
    throw ConfigError("config: " + where + " " + what);
}

void check_keys(const json& obj, const std::string& ctx,
                std::initializer_list<const char*> keys) {
    for (const auto& item : obj.items()) {
        if (std::none_of(keys.begin(), keys.end(),
                         [&](const char* k) { return item.key() == k; })) {
            bad(ctx, "has unknown key '" + item.key() + "'");
        }
    }
}

const json& need_object(const json& obj, const char* key, const std::string& ctx) {
    const json& v = obj.at(key);
    if (!v.is_object()) bad(ctx + "." + key, "must be an object");
    return v;
}

double get_num(const json& obj, const char* key, double def, const std::string& ctx) {
    if (!obj.contains(key)) return def;
    const json& v = obj.at(key);
    if (!v.is_number()) bad(ctx + "." + key, "must be a number");
    return v.get<double>();
}

uint64_t get_uint(const json& obj, const char* key, uint64_t def, const std::string& ctx) {
    if (!obj.contains(key)) return def;
    const json& v = obj.at(key);
    if (!v.is_number_unsigned()) bad(ctx + "." + key, "must be a non-negative integer");
    return v.get<uint64_t>();
}

std::string get_str(const json& obj, const char* key, const std::string& def,
                    const std::string& ctx) {
    if (!obj.contains(key)) return def;
    const json& v = obj.at(key);
    if (!v.is_string()) bad(ctx + "." + key, "must be a string");
    return v.get<std::string>();
}

bool get_bool(const json& obj, const char* key, bool def, const std::string& ctx) {
    if (!obj.contains(key)) return def;
    const json& v = obj.at(key);
    if (!v.is_boolean()) bad(ctx + "." + key, "must be a boolean");
    return v.get<bool>();
}

WorldConfig parse_world(const json& obj, const WorldConfig& def) {
    const std::string ctx = "world";
    check_keys(obj, ctx,
               {"d_z", "d_satellite", "d_ground", "d_audio", "d_text", "joint_dim", "sigma",
                "proj_scale", "n1", "n2", "n_eval", "heldout_fraction", "extras"});
    WorldConfig w = def;
    w.d_z = static_cast<uint32_t>(get_uint(obj, "d_z", def.d_z, ctx));
    w.d_satellite = static_cast<uint32_t>(get_uint(obj, "d_satellite", def.d_satellite, ctx));
    w.d_ground = static_cast<uint32_t>(get_uint(obj, "d_ground", def.d_ground, ctx));
    w.d_audio = static_cast<uint32_t>(get_uint(obj, "d_audio", def.d_audio, ctx));
    w.d_text = static_cast<uint32_t>(get_uint(obj, "d_text", def.d_text, ctx));
    w.joint_dim = static_cast<uint32_t>(get_uint(obj, "joint_dim", def.joint_dim, ctx));
    w.sigma = get_num(obj, "sigma", def.sigma, ctx);
    w.proj_scale = get_num(obj, "proj_scale", def.proj_scale, ctx);
    w.n1 = static_cast<uint32_t>(get_uint(obj, "n1", def.n1, ctx));
    w.n2 = static_cast<uint32_t>(get_uint(obj, "n2", def.n2, ctx));
    w.n_eval = static_cast<uint32_t>(get_uint(obj, "n_eval", def.n_eval, ctx));
    w.heldout_fraction = get_num(obj, "heldout_fraction", def.heldout_fraction, ctx);
    if (obj.contains("extras")) {
        const json& arr = obj.at("extras");
        if (!arr.is_array()) bad("world.extras", "must be an array");
        w.extras.clear();
        for (size_t i = 0; i < arr.size(); ++i) {
            const json& e = arr.at(i);
            const std::string ectx = "world.extras[" + std::to_string(i) + "]";
            if (!e.is_object()) bad(ectx, "must be an object");
            check_keys(e, ectx, {"tag", "dim", "pairs"});
            ExtraModality extra;
            extra.tag = get_str(e, "tag", "", ectx);
            extra.dim = static_cast<uint32_t>(get_uint(e, "dim", extra.dim, ectx));
            extra.pairs = static_cast<uint32_t>(get_uint(e, "pairs", extra.pairs, ectx));
            w.extras.push_back(std::move(extra));
        }
    }
    return w;
}

EncoderConfig parse_encoder(const json& obj, const std::string& ctx) {
    check_keys(obj, ctx, {"hidden", "activation"});
    EncoderConfig e;
    if (obj.contains("hidden")) {
        const json& arr = obj.at("hidden");
        if (!arr.is_array()) bad(ctx + ".hidden", "must be an array of layer widths");
        e.hidden.clear();
        for (const json& v : arr) {
            if (!v.is_number_unsigned()) bad(ctx + ".hidden", "entries must be integers");
            e.hidden.push_back(v.get<uint32_t>());
        }
    }
    e.activation = activation_from_string(get_str(obj, "activation", "tanh", ctx));
    return e;
}

StageSpec parse_stage(const json& obj, size_t index) {
    const std::string ctx = "stages[" + std::to_string(index) + "]";
    if (!obj.is_object()) bad(ctx, "must be an object");
    check_keys(obj, ctx,
               {"name", "trainable", "frozen_target", "loss", "dataset", "epochs", "batch_size",
                "adamw", "schedule", "cache_frozen_targets"});
    StageSpec s;
    s.name = get_str(obj, "name", "", ctx);
    s.trainable = get_str(obj, "trainable", "", ctx);
    s.frozen_target = get_str(obj, "frozen_target", "", ctx);
    s.loss = loss_variant_from_string(get_str(obj, "loss", "directional", ctx));
    s.dataset = get_str(obj, "dataset", "", ctx);
    s.epochs = static_cast<uint32_t>(get_uint(obj, "epochs", s.epochs, ctx));
    s.batch_size = static_cast<uint32_t>(get_uint(obj, "batch_size", s.batch_size, ctx));
    if (obj.contains("adamw")) {
        const json& a = need_object(obj, "adamw", ctx);
        const std::string actx = ctx + ".adamw";
        check_keys(a, actx, {"lr", "beta1", "beta2", "eps", "weight_decay"});
        s.adamw.lr = get_num(a, "lr", s.adamw.lr, actx);
        s.adamw.beta1 = get_num(a, "beta1", s.adamw.beta1, actx);
        s.adamw.beta2 = get_num(a, "beta2", s.adamw.beta2, actx);
        s.adamw.eps = get_num(a, "eps", s.adamw.eps, actx);
        s.adamw.weight_decay = get_num(a, "weight_decay", s.adamw.weight_decay, actx);
    }
    s.schedule.eta_max = s.adamw.lr;
    if (obj.contains("schedule")) {
        const json& c = need_object(obj, "schedule", ctx);
        const std::string sctx = ctx + ".schedule";
        check_keys(c, sctx, {"eta_max", "eta_min", "t0", "t_mult"});
        s.schedule.eta_max = get_num(c, "eta_max", s.schedule.eta_max, sctx);
        s.schedule.eta_min = get_num(c, "eta_min", s.schedule.eta_min, sctx);
        s.schedule.t0 = get_uint(c, "t0", s.schedule.t0, sctx);
        s.schedule.t_mult = get_num(c, "t_mult", s.schedule.t_mult, sctx);
    }
    s.cache_frozen_targets = get_bool(obj, "cache_frozen_targets", s.cache_frozen_targets, ctx);
    return s;
}

} // namespace

RunConfig RunConfig::defaults() {
    RunConfig c;
    c.encoders["satellite"] = EncoderConfig{};
    c.encoders["audio"] = EncoderConfig{};

    StageSpec s1;
    s1.name = "bind-satellite";
    s1.trainable = "satellite";
    s1.frozen_target = "ground";
    s1.loss = LossVariant::directional;
    s1.dataset = "stage1";
    s1.epochs = 30;
    s1.batch_size = 128;
    s1.cache_frozen_targets = true;

    StageSpec s2;
    s2.name = "bind-audio";
    s2.trainable = "audio";
    s2.frozen_target = "satellite";
    s2.loss = LossVariant::symmetric;
    s2.dataset = "stage2";
    s2.epochs = 60;
    s2.batch_size = 128;
    s2.cache_frozen_targets = true;

    c.stages = {std::move(s1), std::move(s2)};
    for (StageSpec& s : c.stages) s.seed = c.stage_seed(s.name);
    c.world.master_seed = c.master_seed;
    return c;
}

RunConfig RunConfig::from_json_text(const std::string& text, const std::string& source) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(source + ": not valid JSON: " + e.what());
    }
    if (!root.is_object()) throw ConfigError(source + ": top level must be an object");
    check_keys(root, "top level",
               {"version", "master_seed", "output_dir", "world", "encoders", "stages",
                "eval_k"});

    RunConfig def = defaults();
    RunConfig c;
    c.version = static_cast<uint32_t>(get_uint(root, "version", 1, "top level"));
    if (c.version != 1) {
        throw ConfigError("config: unsupported version " + std::to_string(c.version));
    }
    c.master_seed = get_uint(root, "master_seed", def.master_seed, "top level");
    c.output_dir = get_str(root, "output_dir", def.output_dir.string(), "top level");

    c.world = root.contains("world")
                  ? parse_world(need_object(root, "world", "top level"), def.world)
                  : def.world;
    c.world.master_seed = c.master_seed;

    if (root.contains("encoders")) {
        const json& encs = need_object(root, "encoders", "top level");
        for (const auto& item : encs.items()) {
            if (!item.value().is_object()) bad("encoders." + item.key(), "must be an object");
            c.encoders[item.key()] = parse_encoder(item.value(), "encoders." + item.key());
        }
    } else {
        c.encoders = def.encoders;
    }

    if (root.contains("stages")) {
        const json& arr = root.at("stages");
        if (!arr.is_array()) bad("stages", "must be an array");
        c.stages.clear();
        for (size_t i = 0; i < arr.size(); ++i) c.stages.push_back(parse_stage(arr.at(i), i));
    } else {
        c.stages = def.stages;
    }
    for (StageSpec& s : c.stages) s.seed = c.stage_seed(s.name);

    if (root.contains("eval_k")) {
        const json& arr = root.at("eval_k");
        if (!arr.is_array()) bad("eval_k", "must be an array");
        c.eval_k.clear();
        for (const json& v : arr) {
            if (!v.is_number_unsigned()) bad("eval_k", "entries must be positive integers");
            c.eval_k.push_back(v.get<uint32_t>());
        }
    }

    c.validate();
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::vector<uint8_t> bytes;
    try {
        bytes = read_file_bytes(path);
    } catch (const FormatError& e) {
        throw ConfigError(e.what()); // a missing config file is a config problem
    }
    return from_json_text(std::string(bytes.begin(), bytes.end()), path.string());
}

std::string RunConfig::to_json_text() const {
    json root;
    root["version"] = version;
    root["master_seed"] = master_seed;
    root["output_dir"] = output_dir.string();
    json w;
    w["d_z"] = world.d_z;
    w["d_satellite"] = world.d_satellite;
    w["d_ground"] = world.d_ground;
    w["d_audio"] = world.d_audio;
    w["d_text"] = world.d_text;
    w["joint_dim"] = world.joint_dim;
    w["sigma"] = world.sigma;
    w["proj_scale"] = world.proj_scale;
    w["n1"] = world.n1;
    w["n2"] = world.n2;
    w["n_eval"] = world.n_eval;
    w["heldout_fraction"] = world.heldout_fraction;
    if (!world.extras.empty()) {
        json arr = json::array();
        for (const ExtraModality& e : world.extras) {
            arr.push_back({{"tag", e.tag}, {"dim", e.dim}, {"pairs", e.pairs}});
        }
        w["extras"] = std::move(arr);
    }
    root["world"] = std::move(w);
    json encs;
    for (const auto& [id, e] : encoders) {
        encs[id] = {{"hidden", e.hidden}, {"activation", activation_to_string(e.activation)}};
    }
    root["encoders"] = std::move(encs);
    json stages_json = json::array();
    for (const StageSpec& s : stages) {
        stages_json.push_back(
            {{"name", s.name},
             {"trainable", s.trainable},
             {"frozen_target", s.frozen_target},
             {"loss", loss_variant_to_string(s.loss)},
             {"dataset", s.dataset},
             {"epochs", s.epochs},
             {"batch_size", s.batch_size},
             {"adamw",
              {{"lr", s.adamw.lr},
               {"beta1", s.adamw.beta1},
               {"beta2", s.adamw.beta2},
               {"eps", s.adamw.eps},
               {"weight_decay", s.adamw.weight_decay}}},
             {"schedule",
              {{"eta_max", s.schedule.eta_max},
               {"eta_min", s.schedule.eta_min},
               {"t0", s.schedule.t0},
               {"t_mult", s.schedule.t_mult}}},
             {"cache_frozen_targets", s.cache_frozen_targets}});
    }
    root["stages"] = std::move(stages_json);
    root["eval_k"] = eval_k;
    return root.dump(2) + "\n";
}

void RunConfig::validate() const {
    if (version != 1) throw ConfigError("config: unsupported version");
    world.validate();
    if (output_dir.empty()) throw ConfigError("config: output_dir must not be empty");
    if (eval_k.empty()) throw ConfigError("config: eval_k must not be empty");
    for (uint32_t k : eval_k) {
        if (k < 1) throw ConfigError("config: eval_k entries must be >= 1");
    }

    const std::vector<std::string> tags = world.all_tags();
    auto is_tag = [&](const std::string& id) {
        return std::find(tags.begin(), tags.end(), id) != tags.end();
    };
    for (const auto& [id, enc] : encoders) {
        if (!is_tag(id)) throw ConfigError("config: encoders." + id + " is not a world modality");
        if (id == "ground" || id == "text") {
            throw ConfigError("config: encoders." + id +
                              " is a frozen reference; configure only trainables");
        }
        for (uint32_t h : enc.hidden) {
            if (h < 1) throw ConfigError("config: encoders." + id + ".hidden widths must be >= 1");
        }
    }

    const std::vector<std::string> ds_ids = dataset_ids();
    std::set<std::string> frozen_now = {"ground", "text"};
    std::set<std::string> trained;
    std::set<std::string> names;
    for (const StageSpec& s : stages) {
        s.validate();
        if (!names.insert(s.name).second) {
            throw ConfigError("config: duplicate stage name '" + s.name + "'");
        }
        for (const std::string& id : {s.trainable, s.frozen_target}) {
            if (!is_tag(id)) {
                throw ConfigError("config: stage '" + s.name + "' references '" + id +
                                  "', which is not a world modality");
            }
        }
        if (std::find(ds_ids.begin(), ds_ids.end(), s.dataset) == ds_ids.end()) {
            throw ConfigError("config: stage '" + s.name + "' references unknown dataset '" +
                              s.dataset + "'");
        }
        if (frozen_now.count(s.frozen_target) == 0) {
            throw ConfigError("config: stage '" + s.name + "' target '" + s.frozen_target +
                              "' is neither a reference encoder nor trained earlier");
        }
        if (frozen_now.count(s.trainable) != 0 || !trained.insert(s.trainable).second) {
            throw ConfigError("config: stage '" + s.name + "' trainable '" + s.trainable +
                              "' is frozen or already trained");
        }
        frozen_now.insert(s.trainable);
    }
}

std::vector<std::string> RunConfig::dataset_ids() const {
    std::vector<std::string> ids = {"stage1", "stage2"};
    for (const ExtraModality& e : world.extras) ids.push_back("extra:" + e.tag);
    return ids;
}

std::filesystem::path RunConfig::dataset_path(const std::string& dataset_id) const {
    std::string name = dataset_id;
    std::replace(name.begin(), name.end(), ':', '-');
    return output_dir / (name + ".gbds");
}

std::filesystem::path RunConfig::eval_bundle_path() const { return output_dir / "eval.gbds"; }
std::filesystem::path RunConfig::manifest_path() const { return output_dir / "manifest.json"; }
std::filesystem::path RunConfig::checkpoint_path() const {
    return output_dir / "checkpoint.gbpl";
}
std::filesystem::path RunConfig::metrics_path() const { return output_dir / "metrics.csv"; }
std::filesystem::path RunConfig::encoder_path(const std::string& id) const {
    return output_dir / ("encoder-" + id + ".gbec");
}

std::vector<size_t> RunConfig::encoder_dims(const std::string& id) const {
    const EncoderConfig e = encoder_config(id);
    std::vector<size_t> dims = {world.dim_of(id)};
    for (uint32_t h : e.hidden) dims.push_back(h);
    dims.push_back(world.joint_dim);
    return dims;
}

EncoderConfig RunConfig::encoder_config(const std::string& id) const {
    auto it = encoders.find(id);
    return it == encoders.end() ? EncoderConfig{} : it->second;
}

uint64_t RunConfig::encoder_seed(const std::string& id) const {
    return derive_seed(master_seed, "init:" + id);
}

uint64_t RunConfig::stage_seed(const std::string& stage_name) const {
    return derive_seed(master_seed, "stage:" + stage_name);
}

uint64_t RunConfig::eval_baseline_seed() const {
    return derive_seed(master_seed, "eval:baseline");
}

} // namespace modbind
