#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "ecoc/evaluation.hpp"

using namespace ecoc;

namespace {

ResultRow make_row(std::int64_t id, bool success, double psnr, double c, double pt_b, double pt_a,
                   double pg_b, double pg_a) {
    ResultRow r;
    r.image_id = id;
    r.true_class = 0;
    r.target_class = 1;
    r.attack = "proposed";
    r.lambda_start = 1e-3;
    r.binary_search_steps = 10;
    r.epsilon = 0.01;
    r.max_iterations = 1000;
    r.confidence = c;
    r.success = success;
    r.l2_norm = success ? 0.5 : 0.0;
    r.psnr = psnr;
    r.prob_true_before = pt_b;
    r.prob_true_after = pt_a;
    r.prob_target_before = pg_b;
    r.prob_target_after = pg_a;
    return r;
}

}  // namespace

TEST_CASE("psnr formula") {
    CHECK(psnr_db(255.0 * std::sqrt(784.0), 784) == doctest::Approx(0.0));
    CHECK(psnr_db(0.0, 784) == std::numeric_limits<double>::infinity());
    // one pixel changed by the full 255 range in a 3072-entry image
    CHECK(psnr_db(255.0, 3072) == doctest::Approx(10.0 * std::log10(3072.0)).epsilon(1e-12));
    CHECK(psnr_db(255.0, 3072) == doctest::Approx(34.8753).epsilon(1e-4));
    CHECK_THROWS_AS(psnr_db(-1.0, 10), std::invalid_argument);

    // strictly decreasing in the norm
    double prev = psnr_db(1.0, 784);
    for (double norm = 2.0; norm < 300.0; norm *= 1.7) {
        const double cur = psnr_db(norm, 784);
        CHECK(cur < prev);
        prev = cur;
    }

    Tensor delta({4}, {0.1, 0.0, 0.0, 0.0});
    CHECK(psnr_of_delta(delta) == doctest::Approx(psnr_db(25.5, 4)));
}

TEST_CASE("attack_success_rate") {
    std::vector<ResultRow> rows;
    CHECK_THROWS_AS(attack_success_rate(rows), std::invalid_argument);
    rows.push_back(make_row(0, true, 40, 0, .9, .2, .01, .6));
    rows.push_back(make_row(1, true, 41, 0, .9, .2, .01, .6));
    rows.push_back(make_row(2, true, 38, 0, .9, .2, .01, .6));
    rows.push_back(make_row(3, false, 30, 0, .9, .8, .01, .1));
    CHECK(attack_success_rate(rows) == doctest::Approx(0.75));
    rows[0].success = rows[1].success = rows[2].success = false;
    CHECK(attack_success_rate(rows) == doctest::Approx(0.0));
    for (ResultRow& r : rows) r.success = true;
    CHECK(attack_success_rate(rows) == doctest::Approx(1.0));
}

TEST_CASE("confidence table columns and footnote semantics") {
    std::vector<ResultRow> rows;
    // c = 0: two successes and one failure; c = 2: one success, one failure
    rows.push_back(make_row(0, true, 40.0, 0.0, 0.9, 0.20, 0.01, 0.50));
    rows.push_back(make_row(1, true, 42.0, 0.0, 0.8, 0.10, 0.02, 0.60));
    rows.push_back(make_row(2, false, 35.0, 0.0, 0.7, 0.70, 0.03, 0.05));
    rows.push_back(make_row(0, true, 37.0, 2.0, 0.9, 0.05, 0.01, 0.95));
    rows.push_back(make_row(1, false, 30.0, 2.0, 0.8, 0.75, 0.02, 0.10));
    rows.push_back(make_row(2, false, 30.0, 2.0, 0.7, 0.70, 0.03, 0.04));

    const std::vector<ConfidenceRow> table = confidence_table(rows, {0.0, 2.0, 5.0});
    REQUIRE(table.size() == 3);

    CHECK(table[0].asr == doctest::Approx(2.0 / 3.0));
    CHECK(table[0].mean_psnr == doctest::Approx(41.0));            // successes only
    CHECK(table[0].prob_true_after == doctest::Approx(0.15));     // successes only
    CHECK(table[0].prob_target_after == doctest::Approx(0.55));   // successes only
    CHECK(table[0].prob_true_before == doctest::Approx(0.8));     // every attacked image
    CHECK(table[0].prob_target_before == doctest::Approx(0.02));

    CHECK(table[1].asr == doctest::Approx(1.0 / 3.0));
    CHECK(table[1].prob_target_after == doctest::Approx(0.95));
    // before-columns are the same clean images in every row
    CHECK(table[1].prob_true_before == doctest::Approx(table[0].prob_true_before));
    CHECK(table[1].prob_target_before == doctest::Approx(table[0].prob_target_before));

    CHECK(table[2].empty);  // no rows at c = 5
}

TEST_CASE("probability histogram") {
    std::vector<double> ones(17, 1.0);
    const auto last_bin = probability_histogram(ones, 20);
    CHECK(last_bin[19] == 17);
    for (std::size_t b = 0; b < 19; ++b) CHECK(last_bin[b] == 0);

    std::vector<double> grid;
    for (int k = 0; k < 100; ++k) grid.push_back(static_cast<double>(k) / 100.0);
    const auto uniform = probability_histogram(grid, 10);
    for (std::size_t b = 0; b < 10; ++b) CHECK(uniform[b] == 10);

    for (std::size_t bins : {1u, 3u, 7u, 20u, 64u}) {
        const auto counts = probability_histogram(grid, bins);
        std::size_t total = 0;
        for (std::size_t c : counts) total += c;
        CHECK(total == grid.size());
    }

    CHECK_THROWS_AS(probability_histogram({1.2}, 10), std::invalid_argument);
    CHECK_THROWS_AS(probability_histogram({-0.1}, 10), std::invalid_argument);
    CHECK_THROWS_AS(probability_histogram({0.5}, 0), std::invalid_argument);
}

TEST_CASE("asr vs psnr curve") {
    std::vector<ResultRow> rows;
    rows.push_back(make_row(0, true, 45.0, 0, .9, .2, .01, .6));
    rows.push_back(make_row(1, true, 35.0, 0, .9, .2, .01, .6));
    rows.push_back(make_row(2, false, 50.0, 0, .9, .9, .01, .01));
    rows.push_back(make_row(3, true, 25.0, 0, .9, .2, .01, .6));

    const auto curve = asr_vs_psnr_curve(
        rows, {-std::numeric_limits<double>::infinity(), 20.0, 30.0, 40.0, 60.0});
    CHECK(curve[0].second == doctest::Approx(attack_success_rate(rows)));  // leftmost point
    CHECK(curve[1].second == doctest::Approx(0.75));
    CHECK(curve[2].second == doctest::Approx(0.5));
    CHECK(curve[3].second == doctest::Approx(0.25));
    CHECK(curve[4].second == doctest::Approx(0.0));
    for (std::size_t i = 1; i < curve.size(); ++i) CHECK(curve[i].second <= curve[i - 1].second);
}

TEST_CASE("results CSV round trip and aggregate recomputation") {
    std::vector<ResultRow> rows;
    rows.push_back(make_row(0, true, 40.5, 0.0, 0.91, 0.21, 0.013, 0.57));
    rows.push_back(make_row(1, false, 31.25, 0.0, 0.85, 0.80, 0.020, 0.10));
    ResultRow zero = make_row(2, true, std::numeric_limits<double>::infinity(), 0.0, 0.5, 0.5, 0.3, 0.3);
    zero.l2_norm = 0.0;
    rows.push_back(zero);  // delta = 0 success carries an infinite psnr

    std::stringstream buf;
    write_results_csv(buf, rows);
    const std::vector<ResultRow> back = read_results_csv(buf);
    REQUIRE(back.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(back[i].image_id == rows[i].image_id);
        CHECK(back[i].attack == rows[i].attack);
        CHECK(back[i].success == rows[i].success);
        CHECK(back[i].l2_norm == rows[i].l2_norm);
        CHECK(back[i].psnr == rows[i].psnr);
        CHECK(back[i].confidence == rows[i].confidence);
        CHECK(back[i].prob_target_after == rows[i].prob_target_after);
    }

    const AggregateStats direct = aggregate(rows);
    const AggregateStats recomputed = aggregate(back);
    CHECK(direct.asr == recomputed.asr);
    CHECK(direct.mean_psnr_successes == recomputed.mean_psnr_successes);
    CHECK(direct.mean_prob_target_after_successes == recomputed.mean_prob_target_after_successes);
    CHECK(direct.successes == 2);
    CHECK(direct.asr == doctest::Approx(2.0 / 3.0));

    std::stringstream bad("not,a,results,file\n");
    CHECK_THROWS_AS(read_results_csv(bad), std::invalid_argument);
}
