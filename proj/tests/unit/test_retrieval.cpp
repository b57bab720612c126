#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "modbind/encoder.hpp"
#include "modbind/errors.hpp"
#include "modbind/matrix.hpp"
#include "modbind/retrieval.hpp"
#include "modbind/rng.hpp"
#include "modbind/synthworld.hpp"

#include "test_support.hpp"

using namespace modbind;

namespace {

// Rank by an explicit full sort: gallery indices ordered by descending
// similarity with ascending index as tie break, rank = 1 + position.
std::vector<uint32_t> rank_by_sort(const Matrix& sim, const std::vector<uint32_t>& truth) {
    std::vector<uint32_t> ranks(truth.size());
    for (size_t q = 0; q < truth.size(); ++q) {
        std::vector<uint32_t> order(sim.cols());
        std::iota(order.begin(), order.end(), 0u);
        std::stable_sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
            if (sim.at(q, a) != sim.at(q, b)) return sim.at(q, a) > sim.at(q, b);
            return a < b;
        });
        const auto it = std::find(order.begin(), order.end(), truth[q]);
        ranks[q] = static_cast<uint32_t>(it - order.begin()) + 1;
    }
    return ranks;
}

struct TinyEval {
    World world;
    std::map<std::string, MlpEncoder> encoders;
    std::map<std::string, const MlpEncoder*> views;
};

TinyEval make_tiny_eval() {
    WorldConfig cfg;
    cfg.n1 = 50;
    cfg.n2 = 30;
    cfg.n_eval = 60;
    cfg.master_seed = 7;
    TinyEval t;
    t.world = generate_world(cfg);
    for (const std::string& tag : cfg.all_tags()) {
        t.encoders.emplace(tag, make_reference_encoder(t.world, tag));
    }
    for (const auto& [tag, enc] : t.encoders) t.views[tag] = &enc;
    return t;
}

} // namespace

TEST_SUITE("retrieval") {

TEST_CASE("similarity matches a per-pair cosine oracle") {
    SplitMix64 rng(11);
    const Matrix q = Matrix::randn(3, 5, rng);
    const Matrix g = Matrix::randn(4, 5, rng);
    const Matrix sim = similarity_matrix(q, g);
    REQUIRE(sim.rows() == 3);
    REQUIRE(sim.cols() == 4);

    for (size_t i = 0; i < 3; ++i) {
        for (size_t j = 0; j < 4; ++j) {
            double dot = 0.0, nq = 0.0, ng = 0.0;
            for (size_t k = 0; k < 5; ++k) {
                dot += q.at(i, k) * g.at(j, k);
                nq += q.at(i, k) * q.at(i, k);
                ng += g.at(j, k) * g.at(j, k);
            }
            const double want = dot / (std::sqrt(nq) * std::sqrt(ng));
            CHECK(std::fabs(sim.at(i, j) - want) < 1e-12);
            CHECK(sim.at(i, j) <= 1.0 + 1e-12);
            CHECK(sim.at(i, j) >= -1.0 - 1e-12);
        }
    }

    CHECK_THROWS_AS(similarity_matrix(Matrix::randn(2, 4, rng), Matrix::randn(2, 5, rng)),
                    DimensionError);
}

TEST_CASE("similarity is scale invariant per row") {
    SplitMix64 rng(12);
    const Matrix q = Matrix::randn(4, 6, rng);
    const Matrix g = Matrix::randn(5, 6, rng);
    Matrix q_scaled = q;
    Matrix g_scaled = g;
    for (size_t j = 0; j < 6; ++j) {
        q_scaled.at(1, j) *= 7.0;
        g_scaled.at(3, j) *= 0.3;
    }
    const Matrix a = similarity_matrix(q, g);
    const Matrix b = similarity_matrix(q_scaled, g_scaled);
    for (size_t i = 0; i < 4; ++i) {
        for (size_t j = 0; j < 5; ++j) {
            CHECK(std::fabs(a.at(i, j) - b.at(i, j)) < 1e-12);
        }
    }
}

TEST_CASE("rank_of_truth agrees with a full sort across random instances") {
    SplitMix64 rng(13);
    for (int rep = 0; rep < 100; ++rep) {
        const size_t nq = 1 + rng.next_below(8);
        const size_t ng = 2 + rng.next_below(38);
        Matrix sim = Matrix::randu(nq, ng, -1.0, 1.0, rng);
        // Half the instances get coarse quantization so exact ties occur.
        if (rep % 2 == 0) {
            for (size_t i = 0; i < nq; ++i) {
                for (size_t j = 0; j < ng; ++j) {
                    sim.at(i, j) = std::round(sim.at(i, j) * 4.0) / 4.0;
                }
            }
        }
        std::vector<uint32_t> truth(nq);
        for (size_t q = 0; q < nq; ++q) truth[q] = static_cast<uint32_t>(rng.next_below(ng));
        CAPTURE(rep);
        CHECK(rank_of_truth(sim, truth) == rank_by_sort(sim, truth));
    }
}

TEST_CASE("tie ranks count earlier gallery items ahead") {
    const Matrix all_equal = Matrix::from_data(1, 3, {0.5, 0.5, 0.5});
    CHECK(rank_of_truth(all_equal, {0}) == std::vector<uint32_t>{1});
    CHECK(rank_of_truth(all_equal, {1}) == std::vector<uint32_t>{2});
    CHECK(rank_of_truth(all_equal, {2}) == std::vector<uint32_t>{3});

    const Matrix mixed = Matrix::from_data(1, 4, {0.9, 0.5, 0.9, 0.2});
    CHECK(rank_of_truth(mixed, {0}) == std::vector<uint32_t>{1});
    CHECK(rank_of_truth(mixed, {2}) == std::vector<uint32_t>{2}); // index 0 ties and is earlier
    CHECK(rank_of_truth(mixed, {1}) == std::vector<uint32_t>{3});

    CHECK_THROWS_AS(rank_of_truth(mixed, {4}), ContractError);        // truth out of range
    CHECK_THROWS_AS(rank_of_truth(mixed, {0, 1}), ContractError);     // count mismatch
}

TEST_CASE("recall and median on hand lists") {
    const std::vector<uint32_t> ranks = {1, 3, 11, 2};
    CHECK(recall_at_k(ranks, 1) == 25.0);
    CHECK(recall_at_k(ranks, 2) == 50.0);
    CHECK(recall_at_k(ranks, 10) == 75.0);
    CHECK(recall_at_k(ranks, 11) == 100.0);
    CHECK(median_rank(ranks) == 2.5);
    CHECK(median_rank({5, 1, 3}) == 3.0);
    CHECK(median_rank({7}) == 7.0);
    CHECK_THROWS_AS(recall_at_k({}, 5), ContractError);
    CHECK_THROWS_AS(median_rank({}), ContractError);

    RetrievalReport rep;
    rep.k_values = {1, 5};
    rep.recall = {10.0, 40.0};
    CHECK(rep.recall_at(5) == 40.0);
    CHECK_THROWS_AS(rep.recall_at(10), ContractError);
}

TEST_CASE("evaluate_all_pairs emits one model and one baseline report per ordered pair") {
    const TinyEval t = make_tiny_eval();
    const std::vector<uint32_t> ks = {1, 5, 10};
    const auto reports = evaluate_all_pairs(t.views, t.world.eval, ks, 31337);

    // 4 modalities, 12 ordered pairs, model + baseline each.
    REQUIRE(reports.size() == 24);
    const auto& tags = t.world.eval.tags;
    size_t idx = 0;
    for (const std::string& q : tags) {
        for (const std::string& g : tags) {
            if (q == g) continue;
            CHECK(reports[idx].query_modality == q);
            CHECK(reports[idx].gallery_modality == g);
            CHECK_FALSE(reports[idx].baseline);
            CHECK(reports[idx + 1].query_modality == q);
            CHECK(reports[idx + 1].gallery_modality == g);
            CHECK(reports[idx + 1].baseline);
            idx += 2;
        }
    }
    for (const auto& rep : reports) {
        CHECK(rep.gallery_size == 60);
        CHECK(rep.ranks.size() == 60);
        CHECK(rep.k_values == ks);
        CHECK(rep.recall.size() == ks.size());
        for (uint32_t r : rep.ranks) {
            CHECK(r >= 1);
            CHECK(r <= 60);
        }
    }

    // Reference encoders on matched pairs retrieve well; random baselines
    // hover near chance.
    CHECK(reports[0].query_modality == "satellite");
    CHECK(reports[0].gallery_modality == "ground");
    CHECK(reports[0].recall_at(10) > 50.0);
    CHECK(reports[1].recall_at(10) < 60.0);
}

TEST_CASE("baseline reports are deterministic in the baseline seed only") {
    const TinyEval t = make_tiny_eval();
    const std::vector<uint32_t> ks = {5};
    const auto a = evaluate_all_pairs(t.views, t.world.eval, ks, 1000);
    const auto b = evaluate_all_pairs(t.views, t.world.eval, ks, 1000);
    const auto c = evaluate_all_pairs(t.views, t.world.eval, ks, 2000);

    bool any_baseline_differs = false;
    for (size_t i = 0; i < a.size(); ++i) {
        if (a[i].baseline) {
            CHECK(a[i].ranks == b[i].ranks);
            if (a[i].ranks != c[i].ranks) any_baseline_differs = true;
        } else {
            // Model ranks never depend on the baseline seed.
            CHECK(a[i].ranks == c[i].ranks);
        }
    }
    CHECK(any_baseline_differs);
}

TEST_CASE("store-path embeddings reproduce report ranks exactly") {
    const TinyEval t = make_tiny_eval();
    const auto reports = evaluate_all_pairs(t.views, t.world.eval, {1}, 5);

    const Matrix qe = t.encoders.at("satellite")
                          .forward(t.world.eval.column("satellite"))
                          .l2_normalized_rows()
                          .quantized_f32();
    const Matrix ge = t.encoders.at("ground")
                          .forward(t.world.eval.column("ground"))
                          .l2_normalized_rows()
                          .quantized_f32();
    std::vector<uint32_t> truth(qe.rows());
    std::iota(truth.begin(), truth.end(), 0u);
    const auto ranks = rank_of_truth(similarity_matrix(qe, ge), truth);
    CHECK(reports[0].ranks == ranks);
}

TEST_CASE("evaluate_all_pairs rejects missing encoders and bad arguments") {
    const TinyEval t = make_tiny_eval();
    auto views = t.views;
    views.erase("text");
    CHECK_THROWS_WITH_AS(evaluate_all_pairs(views, t.world.eval, {1}, 5),
                         doctest::Contains("text"), ConfigError);

    CHECK_THROWS_AS(evaluate_all_pairs(t.views, t.world.eval, {}, 5), ContractError);
    CHECK_THROWS_AS(evaluate_all_pairs(t.views, t.world.eval, {0}, 5), ContractError);

    Dataset empty;
    empty.tags = {"satellite"};
    empty.obs = {Matrix(0, t.world.cfg.d_satellite)};
    CHECK_THROWS_AS(evaluate_all_pairs(t.views, empty, {1}, 5), ContractError);

    // Encoder input dim must match the bundle column.
    auto wrong = t.views;
    wrong["satellite"] = &t.encoders.at("audio");
    CHECK_THROWS_AS(evaluate_all_pairs(wrong, t.world.eval, {1}, 5), DimensionError);
}

TEST_CASE("csv writers emit the documented schemas") {
    const TinyEval t = make_tiny_eval();
    const std::vector<uint32_t> ks = {1, 5};
    const auto reports = evaluate_all_pairs(t.views, t.world.eval, ks, 77);

    const auto dir = testsup::scratch_dir("retrieval-csv");
    const auto report_path = dir / "report.csv";
    const auto ranks_path = dir / "ranks.csv";
    write_report_csv(reports, report_path);
    write_rank_dump_csv(reports, ranks_path);

    const auto report_lines = testsup::csv_lines(testsup::read_text(report_path));
    REQUIRE(!report_lines.empty());
    CHECK(report_lines[0] ==
          "query_modality,gallery_modality,N,k,recall_percent,median_rank,baseline");
    CHECK(report_lines.size() == 1 + reports.size() * ks.size());
    const auto fields = testsup::csv_fields(report_lines[1]);
    REQUIRE(fields.size() == 7);
    CHECK(fields[0] == "satellite");
    CHECK(fields[1] == "ground");
    CHECK(fields[2] == "60");
    CHECK(fields[3] == "1");
    CHECK(fields[6] == "model");
    CHECK(testsup::csv_fields(report_lines[2])[3] == "5");
    CHECK(testsup::csv_fields(report_lines[3])[6] == "random");

    const auto rank_lines = testsup::csv_lines(testsup::read_text(ranks_path));
    CHECK(rank_lines[0] == "query_modality,gallery_modality,baseline,query_index,rank");
    size_t expected = 1;
    for (const auto& rep : reports) expected += rep.ranks.size();
    CHECK(rank_lines.size() == expected);
    CHECK(testsup::csv_fields(rank_lines[1]).size() == 5);
}

} // TEST_SUITE
