#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ecoc/tensor.hpp"

namespace ecoc {

// PSNR = 20*log10(255*sqrt(pixel_count)/l2_255) with the perturbation norm
// measured in 0-255 pixel units. A zero perturbation maps to +infinity.
// (The paper's N in this formula is the image size; it is named pixel_count
// here to keep it apart from the codeword length.)
double psnr_db(double l2_255, std::size_t pixel_count);

// Convenience for perturbations stored in internal [0,1] units.
double psnr_of_delta(const Tensor& delta_unit_range);

// One per-image record of an attack run; the evaluation CSV schema.
struct ResultRow {
    std::int64_t image_id = -1;
    int true_class = -1;
    int target_class = -1;
    std::string attack;  // proposed | cw-ecoc | cw-onehot | lots
    double lambda_start = 0.0;
    int binary_search_steps = 0;
    double epsilon = 0.0;
    int max_iterations = 0;
    double confidence = 0.0;
    bool success = false;
    double l2_norm = 0.0;  // [0,1] pixel units
    double psnr = 0.0;     // dB, 255-scaled formula
    double prob_true_before = 0.0;
    double prob_true_after = 0.0;
    double prob_target_before = 0.0;
    double prob_target_after = 0.0;
};

double attack_success_rate(const std::vector<ResultRow>& rows);

struct AggregateStats {
    std::size_t total = 0;
    std::size_t successes = 0;
    double asr = 0.0;
    double mean_psnr_successes = 0.0;  // NaN when no successes
    double mean_psnr_all = 0.0;
    double mean_l2_successes = 0.0;
    double mean_prob_true_before = 0.0;
    double mean_prob_true_after_successes = 0.0;
    double mean_prob_target_before = 0.0;
    double mean_prob_target_after_successes = 0.0;
};

AggregateStats aggregate(const std::vector<ResultRow>& rows);

// One row per requested confidence value. Only attacks that reached the
// margin (success == true) enter the after-attack and PSNR columns; the
// before columns average over every attacked image.
struct ConfidenceRow {
    double confidence = 0.0;
    bool empty = false;  // no successes at this c
    double asr = 0.0;
    double mean_psnr = 0.0;
    double prob_true_before = 0.0;
    double prob_true_after = 0.0;
    double prob_target_before = 0.0;
    double prob_target_after = 0.0;
};

std::vector<ConfidenceRow> confidence_table(const std::vector<ResultRow>& rows,
                                            const std::vector<double>& c_values);

// Equal-width bins over [0,1]; a value of exactly 1 lands in the last bin.
// Throws std::invalid_argument on values outside [0,1] or bin_count < 1.
std::vector<std::size_t> probability_histogram(const std::vector<double>& probabilities,
                                               std::size_t bin_count);

// For each threshold tau: fraction of rows that succeeded with psnr >= tau.
std::vector<std::pair<double, double>> asr_vs_psnr_curve(const std::vector<ResultRow>& rows,
                                                         const std::vector<double>& thresholds);

// ---- CSV ----------------------------------------------------------------------

extern const char* const kResultCsvHeader;

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows);
void write_results_csv_file(const std::string& path, const std::vector<ResultRow>& rows);
std::vector<ResultRow> read_results_csv(std::istream& in);
std::vector<ResultRow> read_results_csv_file(const std::string& path);

void write_aggregate_csv(std::ostream& out, const AggregateStats& stats);

}  // namespace ecoc
