#include "modbind/synthworld.hpp"

#include <algorithm>
#include <cmath>

#include "modbind/errors.hpp"
#include "modbind/io_util.hpp"
#include "modbind/rng.hpp"

namespace modbind {

namespace {

const char* kBaseTags[] = {"satellite", "ground", "audio", "text"};

bool is_base_tag(const std::string& tag) {
    for (const char* t : kBaseTags) {
        if (tag == t) return true;
    }
    return false;
}

} // namespace

void WorldConfig::validate() const {
    auto dim_check = [](const char* name, uint32_t d) {
        if (d < 2) throw ConfigError(std::string("world.") + name + " must be >= 2");
    };
    dim_check("d_z", d_z);
    dim_check("d_satellite", d_satellite);
    dim_check("d_ground", d_ground);
    dim_check("d_audio", d_audio);
    dim_check("d_text", d_text);
    dim_check("joint_dim", joint_dim);
    if (sigma < 0.0) throw ConfigError("world.sigma must be >= 0");
    if (!(proj_scale > 0.0)) throw ConfigError("world.proj_scale must be > 0");
    if (n1 < 1) throw ConfigError("world.n1 must be >= 1");
    if (n2 < 1) throw ConfigError("world.n2 must be >= 1");
    if (heldout_fraction < 0.0 || heldout_fraction >= 1.0) {
        throw ConfigError("world.heldout_fraction must be in [0, 1)");
    }
    for (const ExtraModality& e : extras) {
        if (e.tag.empty()) throw ConfigError("world.extras: empty modality tag");
        if (is_base_tag(e.tag)) {
            throw ConfigError("world.extras: tag '" + e.tag + "' collides with a base modality");
        }
        if (std::count_if(extras.begin(), extras.end(),
                          [&](const ExtraModality& o) { return o.tag == e.tag; }) != 1) {
            throw ConfigError("world.extras: duplicate tag '" + e.tag + "'");
        }
        if (e.dim < 2) throw ConfigError("world.extras." + e.tag + ".dim must be >= 2");
        if (e.pairs < 1) throw ConfigError("world.extras." + e.tag + ".pairs must be >= 1");
    }
}

uint32_t WorldConfig::dim_of(const std::string& tag) const {
    if (tag == "satellite") return d_satellite;
    if (tag == "ground") return d_ground;
    if (tag == "audio") return d_audio;
    if (tag == "text") return d_text;
    for (const ExtraModality& e : extras) {
        if (e.tag == tag) return e.dim;
    }
    throw ConfigError("unknown modality tag '" + tag + "'");
}

std::vector<std::string> WorldConfig::all_tags() const {
    std::vector<std::string> tags(std::begin(kBaseTags), std::end(kBaseTags));
    for (const ExtraModality& e : extras) tags.push_back(e.tag);
    return tags;
}

size_t Dataset::modality_index(const std::string& tag) const {
    for (size_t i = 0; i < tags.size(); ++i) {
        if (tags[i] == tag) return i;
    }
    std::string have;
    for (const std::string& t : tags) {
        if (!have.empty()) have += ", ";
        have += t;
    }
    throw ConfigError("dataset has no modality '" + tag + "' (has: " + have + ")");
}

bool Dataset::has_modality(const std::string& tag) const {
    return std::find(tags.begin(), tags.end(), tag) != tags.end();
}

const Matrix& Dataset::column(const std::string& tag) const {
    return obs[modality_index(tag)];
}

std::vector<uint32_t> Dataset::train_indices() const {
    std::vector<uint32_t> out;
    for (uint32_t i = 0; i < train_mask.size(); ++i) {
        if (train_mask[i]) out.push_back(i);
    }
    return out;
}

std::vector<uint32_t> Dataset::heldout_indices() const {
    std::vector<uint32_t> out;
    for (uint32_t i = 0; i < train_mask.size(); ++i) {
        if (!train_mask[i]) out.push_back(i);
    }
    return out;
}

void Dataset::validate() const {
    if (tags.empty()) throw ContractError("dataset: no modalities");
    if (obs.size() != tags.size()) {
        throw ContractError("dataset: " + std::to_string(tags.size()) + " tags but " +
                            std::to_string(obs.size()) + " observation matrices");
    }
    for (size_t i = 0; i < tags.size(); ++i) {
        if (tags[i].empty()) throw ContractError("dataset: empty modality tag");
        for (size_t j = i + 1; j < tags.size(); ++j) {
            if (tags[i] == tags[j]) {
                throw ContractError("dataset: duplicate modality '" + tags[i] + "'");
            }
        }
        if (obs[i].rows() != train_mask.size()) {
            throw ContractError("dataset: modality '" + tags[i] + "' has " +
                                std::to_string(obs[i].rows()) + " rows, mask has " +
                                std::to_string(train_mask.size()));
        }
    }
}

void Dataset::serialize(ByteWriter& w) const {
    validate();
    w.raw("GBDS", 4);
    w.u32(1); // version
    w.u32(static_cast<uint32_t>(tags.size()));
    w.u64(n());
    for (size_t m = 0; m < tags.size(); ++m) {
        w.str(tags[m]);
        w.u32(static_cast<uint32_t>(obs[m].cols()));
    }
    // Train mask packed 8 rows per byte, row i at bit (i & 7) of byte i >> 3.
    std::vector<uint8_t> packed((n() + 7) / 8, 0);
    for (size_t i = 0; i < n(); ++i) {
        if (train_mask[i]) packed[i >> 3] |= static_cast<uint8_t>(1u << (i & 7));
    }
    w.raw(packed.data(), packed.size());
    for (const Matrix& m : obs) w.matrix_f32(m);
}

Dataset Dataset::deserialize(ByteReader& r) {
    r.magic("GBDS");
    const uint32_t version = r.u32();
    if (version != 1) r.fail("unsupported GBDS version " + std::to_string(version));
    const uint32_t modality_count = r.u32();
    if (modality_count < 1 || modality_count > 32) {
        r.fail("implausible modality count " + std::to_string(modality_count));
    }
    const uint64_t rows = r.u64();
    if (rows > (1ULL << 31)) r.fail("implausible row count " + std::to_string(rows));

    Dataset ds;
    std::vector<uint32_t> dims;
    for (uint32_t m = 0; m < modality_count; ++m) {
        std::string tag = r.str(64);
        if (tag.empty()) r.fail("empty modality tag");
        ds.tags.push_back(std::move(tag));
        const uint32_t dim = r.u32();
        if (dim < 1 || dim > (1u << 20)) r.fail("implausible dim " + std::to_string(dim));
        dims.push_back(dim);
    }
    const size_t mask_bytes = (rows + 7) / 8;
    ds.train_mask.resize(rows);
    for (size_t byte = 0; byte < mask_bytes; ++byte) {
        const uint8_t b = r.u8();
        for (size_t bit = 0; bit < 8; ++bit) {
            const size_t row = byte * 8 + bit;
            if (row < rows) ds.train_mask[row] = (b >> bit) & 1;
        }
    }
    for (uint32_t m = 0; m < modality_count; ++m) {
        ds.obs.push_back(r.matrix_f32(rows, dims[m]));
    }
    r.expect_eof();
    ds.validate();
    return ds;
}

void Dataset::save(const std::filesystem::path& path) const {
    ByteWriter w;
    serialize(w);
    write_file_bytes(path, w.bytes());
}

Dataset Dataset::load(const std::filesystem::path& path) {
    const std::vector<uint8_t> bytes = read_file_bytes(path);
    ByteReader r(bytes, path.string());
    return deserialize(r);
}

Matrix invert_small(const Matrix& m) {
    if (m.rows() != m.cols()) {
        throw DimensionError("invert_small: matrix is " + shape_string(m) + ", not square");
    }
    const size_t n = m.rows();
    Matrix a = m;
    Matrix inv = Matrix::identity(n);
    for (size_t col = 0; col < n; ++col) {
        size_t pivot = col;
        for (size_t r = col + 1; r < n; ++r) {
            if (std::fabs(a.at(r, col)) > std::fabs(a.at(pivot, col))) pivot = r;
        }
        if (std::fabs(a.at(pivot, col)) < 1e-12) {
            throw DegenerateInputError("invert_small: pivot " + std::to_string(col) +
                                       " below 1e-12, matrix is numerically singular");
        }
        if (pivot != col) {
            for (size_t c = 0; c < n; ++c) {
                std::swap(a.at(col, c), a.at(pivot, c));
                std::swap(inv.at(col, c), inv.at(pivot, c));
            }
        }
        const double d = a.at(col, col);
        for (size_t c = 0; c < n; ++c) {
            a.at(col, c) /= d;
            inv.at(col, c) /= d;
        }
        for (size_t r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = a.at(r, col);
            if (f == 0.0) continue;
            for (size_t c = 0; c < n; ++c) {
                a.at(r, c) -= f * a.at(col, c);
                inv.at(r, c) -= f * inv.at(col, c);
            }
        }
    }
    return inv;
}

namespace {

// tanh(z W + b) + sigma * noise for the given latent rows, quantized f32.
Matrix observe(const Matrix& z, const Matrix& w, const Matrix& b, double sigma,
               SplitMix64& noise_rng) {
    Matrix pre = Matrix::add_row_vector(Matrix::matmul(z, w), b);
    Matrix out = Matrix::tanh(pre);
    if (sigma > 0.0) {
        out = Matrix::add(out, Matrix::randn(out.rows(), out.cols(), noise_rng).scaled(sigma));
    }
    return out.quantized_f32();
}

std::vector<uint8_t> make_train_mask(size_t n, double heldout_fraction, uint64_t seed) {
    std::vector<uint8_t> mask(n, 1);
    const size_t heldout = static_cast<size_t>(std::llround(heldout_fraction * static_cast<double>(n)));
    if (heldout == 0) return mask;
    std::vector<uint32_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = static_cast<uint32_t>(i);
    SplitMix64 rng(seed);
    shuffle(idx, rng);
    for (size_t i = 0; i < heldout; ++i) mask[idx[i]] = 0;
    return mask;
}

Dataset make_pair_set(const World& world, const std::string& label, const std::string& tag_a,
                      const std::string& tag_b, uint32_t offset, uint32_t count) {
    const WorldConfig& cfg = world.cfg;
    std::vector<uint32_t> rows(count);
    for (uint32_t i = 0; i < count; ++i) rows[i] = offset + i;
    const Matrix z = world.latents.gather_rows(rows);

    Dataset ds;
    ds.tags = {tag_a, tag_b};
    for (const std::string& tag : ds.tags) {
        SplitMix64 noise(derive_seed(cfg.master_seed, "noise:" + label + ":" + tag));
        ds.obs.push_back(observe(z, world.proj_w.at(tag), world.proj_b.at(tag), cfg.sigma, noise));
    }
    ds.train_mask = make_train_mask(count, cfg.heldout_fraction,
                                    derive_seed(cfg.master_seed, "split:" + label));
    return ds;
}

} // namespace

World generate_world(const WorldConfig& cfg) {
    cfg.validate();
    World world;
    world.cfg = cfg;

    for (const std::string& tag : cfg.all_tags()) {
        SplitMix64 rng(derive_seed(cfg.master_seed, "proj:" + tag));
        const uint32_t dim = cfg.dim_of(tag);
        const double col_scale = cfg.proj_scale / std::sqrt(static_cast<double>(cfg.d_z));
        world.proj_w[tag] = Matrix::randn(cfg.d_z, dim, rng).scaled(col_scale).quantized_f32();
        world.proj_b[tag] = Matrix::randn(1, dim, rng).scaled(0.1).quantized_f32();
    }
    {
        SplitMix64 rng(derive_seed(cfg.master_seed, "joint"));
        world.joint_map = Matrix::randn(cfg.d_z, cfg.joint_dim, rng)
                              .scaled(1.0 / std::sqrt(static_cast<double>(cfg.d_z)))
                              .quantized_f32();
    }

    uint64_t total = static_cast<uint64_t>(cfg.n1) + cfg.n2 + cfg.n_eval;
    for (const ExtraModality& e : cfg.extras) total += e.pairs;
    if (total > (1ULL << 31)) throw ConfigError("world: total latent count exceeds 2^31");

    uint32_t offset = 0;
    world.latent_offsets["stage1"] = offset;
    offset += cfg.n1;
    world.latent_offsets["stage2"] = offset;
    offset += cfg.n2;
    for (const ExtraModality& e : cfg.extras) {
        world.latent_offsets["extra:" + e.tag] = offset;
        offset += e.pairs;
    }
    world.latent_offsets["eval"] = offset;

    SplitMix64 latent_rng(derive_seed(cfg.master_seed, "latent"));
    world.latents = Matrix::randn(static_cast<size_t>(total), cfg.d_z, latent_rng);

    world.stage1 = make_pair_set(world, "stage1", "satellite", "ground",
                                 world.latent_offsets.at("stage1"), cfg.n1);
    world.stage2 = make_pair_set(world, "stage2", "satellite", "audio",
                                 world.latent_offsets.at("stage2"), cfg.n2);
    for (const ExtraModality& e : cfg.extras) {
        world.extra_sets.push_back(make_pair_set(world, "extra:" + e.tag, "satellite", e.tag,
                                                 world.latent_offsets.at("extra:" + e.tag),
                                                 e.pairs));
    }

    // Eval bundle: one column per modality over the final latent block,
    // nothing marked trainable.
    {
        const uint32_t eval_offset = world.latent_offsets.at("eval");
        std::vector<uint32_t> rows(cfg.n_eval);
        for (uint32_t i = 0; i < cfg.n_eval; ++i) rows[i] = eval_offset + i;
        const Matrix z = world.latents.gather_rows(rows);
        world.eval.tags = cfg.all_tags();
        for (const std::string& tag : world.eval.tags) {
            SplitMix64 noise(derive_seed(cfg.master_seed, "noise:eval:" + tag));
            world.eval.obs.push_back(
                observe(z, world.proj_w.at(tag), world.proj_b.at(tag), cfg.sigma, noise));
        }
        world.eval.train_mask.assign(cfg.n_eval, 0);
    }
    return world;
}

MlpEncoder make_reference_encoder(const World& world, const std::string& tag) {
    const Matrix& w = world.proj_w.at(tag);
    const Matrix& b = world.proj_b.at(tag);
    // Right pseudo-inverse of w (d_z x d_m, d_m >= d_z): p = w^T (w w^T)^-1,
    // so w p = I and tanh(obs_noiseless_preimage) composes with the joint map.
    const Matrix gram = Matrix::matmul(w, w.transposed());
    const Matrix p = Matrix::matmul(w.transposed(), invert_small(gram));
    const Matrix r = Matrix::matmul(p, world.joint_map);
    const Matrix c = Matrix::matmul(b, r).scaled(-1.0);
    return MlpEncoder::from_weights({r}, {c}, Activation::tanh,
                                    derive_seed(world.cfg.master_seed, "reference:" + tag),
                                    /*reference=*/true);
}

} // namespace modbind
