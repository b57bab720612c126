#include "modbind/retrieval.hpp"

#include <algorithm>
#include <cstdio>

#include "modbind/encoder.hpp"
#include "modbind/errors.hpp"
#include "modbind/io_util.hpp"
#include "modbind/rng.hpp"
#include "modbind/synthworld.hpp"

namespace modbind {

Matrix similarity_matrix(const Matrix& queries, const Matrix& gallery) {
    if (queries.cols() != gallery.cols()) {
        throw DimensionError("similarity_matrix: query dim " + std::to_string(queries.cols()) +
                             " vs gallery dim " + std::to_string(gallery.cols()));
    }
    const Matrix qn = queries.l2_normalized_rows();
    const Matrix gn = gallery.l2_normalized_rows();
    return Matrix::matmul(qn, gn.transposed());
}

std::vector<uint32_t> rank_of_truth(const Matrix& sim, const std::vector<uint32_t>& truth) {
    if (truth.size() != sim.rows()) {
        throw ContractError("rank_of_truth: " + std::to_string(truth.size()) +
                            " truth indices for " + std::to_string(sim.rows()) + " queries");
    }
    const size_t n_gallery = sim.cols();
    std::vector<uint32_t> ranks(truth.size());
    for (size_t q = 0; q < truth.size(); ++q) {
        const uint32_t t = truth[q];
        if (t >= n_gallery) {
            throw ContractError("rank_of_truth: truth index " + std::to_string(t) +
                                " out of range for gallery of " + std::to_string(n_gallery));
        }
        const double s_true = sim.at(q, t);
        uint32_t rank = 1;
        for (size_t j = 0; j < n_gallery; ++j) {
            const double s = sim.at(q, j);
            if (s > s_true || (s == s_true && j < t)) ++rank;
        }
        ranks[q] = rank;
    }
    return ranks;
}

double recall_at_k(const std::vector<uint32_t>& ranks, uint32_t k) {
    if (ranks.empty()) throw ContractError("recall_at_k: empty rank list");
    size_t hits = 0;
    for (uint32_t r : ranks) {
        if (r <= k) ++hits;
    }
    return 100.0 * static_cast<double>(hits) / static_cast<double>(ranks.size());
}

double median_rank(const std::vector<uint32_t>& ranks) {
    if (ranks.empty()) throw ContractError("median_rank: empty rank list");
    std::vector<uint32_t> sorted = ranks;
    std::sort(sorted.begin(), sorted.end());
    const size_t n = sorted.size();
    if (n % 2 == 1) return sorted[n / 2];
    return 0.5 * (static_cast<double>(sorted[n / 2 - 1]) + static_cast<double>(sorted[n / 2]));
}

double RetrievalReport::recall_at(uint32_t k) const {
    for (size_t i = 0; i < k_values.size(); ++i) {
        if (k_values[i] == k) return recall[i];
    }
    throw ContractError("report has no recall value for k=" + std::to_string(k));
}

namespace {

RetrievalReport make_report(std::string query_tag, std::string gallery_tag, const Matrix& q_emb,
                            const Matrix& g_emb, const std::vector<uint32_t>& k_values,
                            bool baseline) {
    RetrievalReport rep;
    rep.query_modality = std::move(query_tag);
    rep.gallery_modality = std::move(gallery_tag);
    rep.gallery_size = static_cast<uint32_t>(g_emb.rows());
    rep.baseline = baseline;
    std::vector<uint32_t> truth(q_emb.rows());
    for (uint32_t i = 0; i < truth.size(); ++i) truth[i] = i;
    rep.ranks = rank_of_truth(similarity_matrix(q_emb, g_emb), truth);
    rep.k_values = k_values;
    for (uint32_t k : k_values) rep.recall.push_back(recall_at_k(rep.ranks, k));
    rep.median = median_rank(rep.ranks);
    return rep;
}

} // namespace

std::vector<RetrievalReport> evaluate_all_pairs(
    const std::map<std::string, const MlpEncoder*>& encoders, const Dataset& bundle,
    const std::vector<uint32_t>& k_values, uint64_t baseline_seed) {
    bundle.validate();
    if (bundle.n() == 0) throw ContractError("evaluate_all_pairs: eval bundle is empty");
    if (k_values.empty()) throw ContractError("evaluate_all_pairs: no k values");
    for (uint32_t k : k_values) {
        if (k < 1) throw ContractError("evaluate_all_pairs: k values must be >= 1");
    }

    // Embed every modality once. Normalize, then quantize f32: this is the
    // exact representation the GBES store persists, so ranks computed here
    // and ranks computed from a written store cannot drift apart.
    std::map<std::string, Matrix> embedded;
    for (const std::string& tag : bundle.tags) {
        auto it = encoders.find(tag);
        if (it == encoders.end() || it->second == nullptr) {
            throw ConfigError("evaluate_all_pairs: no encoder for modality '" + tag + "'");
        }
        const MlpEncoder& enc = *it->second;
        const Matrix& obs = bundle.column(tag);
        if (enc.input_dim() != obs.cols()) {
            throw DimensionError("evaluate_all_pairs: encoder for '" + tag + "' expects dim " +
                                 std::to_string(enc.input_dim()) + ", bundle has " +
                                 std::to_string(obs.cols()));
        }
        embedded[tag] = enc.forward(obs).l2_normalized_rows().quantized_f32();
    }

    std::vector<RetrievalReport> reports;
    for (const std::string& q_tag : bundle.tags) {
        for (const std::string& g_tag : bundle.tags) {
            if (q_tag == g_tag) continue;
            const Matrix& q_emb = embedded.at(q_tag);
            const Matrix& g_emb = embedded.at(g_tag);
            reports.push_back(make_report(q_tag, g_tag, q_emb, g_emb, k_values, false));

            SplitMix64 rng(derive_seed(baseline_seed, "baseline:" + q_tag + ":" + g_tag));
            const Matrix rq = Matrix::randn(q_emb.rows(), q_emb.cols(), rng)
                                  .l2_normalized_rows()
                                  .quantized_f32();
            const Matrix rg = Matrix::randn(g_emb.rows(), g_emb.cols(), rng)
                                  .l2_normalized_rows()
                                  .quantized_f32();
            reports.push_back(make_report(q_tag, g_tag, rq, rg, k_values, true));
        }
    }
    return reports;
}

void write_report_csv(const std::vector<RetrievalReport>& reports,
                      const std::filesystem::path& path) {
    std::string out = "query_modality,gallery_modality,N,k,recall_percent,median_rank,baseline\n";
    char buf[160];
    for (const RetrievalReport& rep : reports) {
        for (size_t i = 0; i < rep.k_values.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%s,%s,%u,%u,%.10g,%.10g,%s\n",
                          rep.query_modality.c_str(), rep.gallery_modality.c_str(),
                          rep.gallery_size, rep.k_values[i], rep.recall[i], rep.median,
                          rep.baseline ? "random" : "model");
            out += buf;
        }
    }
    write_file_bytes(path, std::vector<uint8_t>(out.begin(), out.end()));
}

void write_rank_dump_csv(const std::vector<RetrievalReport>& reports,
                         const std::filesystem::path& path) {
    std::string out = "query_modality,gallery_modality,baseline,query_index,rank\n";
    char buf[160];
    for (const RetrievalReport& rep : reports) {
        for (size_t q = 0; q < rep.ranks.size(); ++q) {
            std::snprintf(buf, sizeof(buf), "%s,%s,%s,%zu,%u\n", rep.query_modality.c_str(),
                          rep.gallery_modality.c_str(), rep.baseline ? "random" : "model", q,
                          rep.ranks[q]);
            out += buf;
        }
    }
    write_file_bytes(path, std::vector<uint8_t>(out.begin(), out.end()));
}

} // namespace modbind
