#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "modbind/matrix.hpp"

namespace modbind {

class MlpEncoder;
struct Dataset;

// Entry (i, j) = cosine similarity of query row i and gallery row j. Rows
// are normalized here, so pre-normalized inputs are harmless.
Matrix similarity_matrix(const Matrix& queries, const Matrix& gallery);

// 1-based rank of the true gallery item per query under descending
// similarity. Ties broken by ascending gallery index so ranking is total
// and runs stay reproducible.
std::vector<uint32_t> rank_of_truth(const Matrix& sim, const std::vector<uint32_t>& truth);

double recall_at_k(const std::vector<uint32_t>& ranks, uint32_t k); // percent
double median_rank(const std::vector<uint32_t>& ranks);

struct RetrievalReport {
    std::string query_modality;
    std::string gallery_modality;
    uint32_t gallery_size = 0;
    bool baseline = false; // true: seeded random embeddings, not the model
    std::vector<uint32_t> ranks;
    std::vector<uint32_t> k_values;
    std::vector<double> recall; // percent, parallel to k_values
    double median = 0.0;

    double recall_at(uint32_t k) const;
};

// One model report plus one random-baseline report for every ordered
// modality pair in the bundle. Embeddings are normalized then quantized
// through f32, the same path the embedding store uses, so store-based
// retrieval ranks agree exactly with this evaluator.
std::vector<RetrievalReport> evaluate_all_pairs(
    const std::map<std::string, const MlpEncoder*>& encoders, const Dataset& bundle,
    const std::vector<uint32_t>& k_values, uint64_t baseline_seed);

// One row per (pair, k): query_modality,gallery_modality,N,k,recall_percent,
// median_rank,baseline.
void write_report_csv(const std::vector<RetrievalReport>& reports,
                      const std::filesystem::path& path);

// Per-query ranks for plotting, one row per (pair, query).
void write_rank_dump_csv(const std::vector<RetrievalReport>& reports,
                         const std::filesystem::path& path);

} // namespace modbind
