#include "ecoc/evaluation.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace ecoc {

double psnr_db(double l2_255, std::size_t pixel_count) {
    if (l2_255 < 0.0) throw std::invalid_argument("psnr_db: negative norm");
    if (l2_255 == 0.0) return std::numeric_limits<double>::infinity();
    return 20.0 * std::log10(255.0 * std::sqrt(static_cast<double>(pixel_count)) / l2_255);
}

double psnr_of_delta(const Tensor& delta_unit_range) {
    return psnr_db(255.0 * l2_norm_of(delta_unit_range), delta_unit_range.size());
}

double attack_success_rate(const std::vector<ResultRow>& rows) {
    if (rows.empty()) throw std::invalid_argument("attack_success_rate: no results");
    std::size_t successes = 0;
    for (const ResultRow& r : rows) {
        if (r.success) ++successes;
    }
    return static_cast<double>(successes) / static_cast<double>(rows.size());
}

AggregateStats aggregate(const std::vector<ResultRow>& rows) {
    if (rows.empty()) throw std::invalid_argument("aggregate: no results");
    AggregateStats s;
    s.total = rows.size();
    double psnr_succ = 0.0, psnr_all = 0.0, l2_succ = 0.0;
    double pt_b = 0.0, pt_a = 0.0, pg_b = 0.0, pg_a = 0.0;
    for (const ResultRow& r : rows) {
        psnr_all += r.psnr;
        pt_b += r.prob_true_before;
        pg_b += r.prob_target_before;
        if (r.success) {
            ++s.successes;
            psnr_succ += r.psnr;
            l2_succ += r.l2_norm;
            pt_a += r.prob_true_after;
            pg_a += r.prob_target_after;
        }
    }
    const double n = static_cast<double>(s.total);
    const double ns = static_cast<double>(s.successes);
    s.asr = ns / n;
    s.mean_psnr_all = psnr_all / n;
    s.mean_prob_true_before = pt_b / n;
    s.mean_prob_target_before = pg_b / n;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    s.mean_psnr_successes = s.successes ? psnr_succ / ns : nan;
    s.mean_l2_successes = s.successes ? l2_succ / ns : nan;
    s.mean_prob_true_after_successes = s.successes ? pt_a / ns : nan;
    s.mean_prob_target_after_successes = s.successes ? pg_a / ns : nan;
    return s;
}

std::vector<ConfidenceRow> confidence_table(const std::vector<ResultRow>& rows,
                                            const std::vector<double>& c_values) {
    std::vector<ConfidenceRow> table;
    for (double c : c_values) {
        std::vector<ResultRow> at_c;
        for (const ResultRow& r : rows) {
            if (r.confidence == c) at_c.push_back(r);
        }
        ConfidenceRow row;
        row.confidence = c;
        if (at_c.empty()) {
            row.empty = true;
            table.push_back(row);
            continue;
        }
        const AggregateStats s = aggregate(at_c);
        row.asr = s.asr;
        row.empty = s.successes == 0;
        row.mean_psnr = s.mean_psnr_successes;
        row.prob_true_before = s.mean_prob_true_before;
        row.prob_true_after = s.mean_prob_true_after_successes;
        row.prob_target_before = s.mean_prob_target_before;
        row.prob_target_after = s.mean_prob_target_after_successes;
        table.push_back(row);
    }
    return table;
}

std::vector<std::size_t> probability_histogram(const std::vector<double>& probabilities,
                                               std::size_t bin_count) {
    if (bin_count < 1) throw std::invalid_argument("probability_histogram: need at least one bin");
    std::vector<std::size_t> counts(bin_count, 0);
    for (double p : probabilities) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw std::invalid_argument("probability_histogram: value outside [0,1]");
        }
        const std::size_t bin = std::min(
            bin_count - 1, static_cast<std::size_t>(p * static_cast<double>(bin_count)));
        ++counts[bin];
    }
    return counts;
}

std::vector<std::pair<double, double>> asr_vs_psnr_curve(const std::vector<ResultRow>& rows,
                                                         const std::vector<double>& thresholds) {
    std::vector<std::pair<double, double>> curve;
    if (rows.empty()) return curve;
    for (double tau : thresholds) {
        std::size_t hits = 0;
        for (const ResultRow& r : rows) {
            if (r.success && r.psnr >= tau) ++hits;
        }
        curve.emplace_back(tau, static_cast<double>(hits) / static_cast<double>(rows.size()));
    }
    return curve;
}

// ---- CSV ----------------------------------------------------------------------

const char* const kResultCsvHeader =
    "image_id,true_class,target_class,attack,lambda_start,n,epsilon,m,c,success,l2_norm,psnr_db,"
    "prob_true_before,prob_true_after,prob_target_before,prob_target_after";

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    fields.push_back(cur);
    return fields;
}

double parse_double(const std::string& s) {
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan" || s == "-nan") return std::numeric_limits<double>::quiet_NaN();
    return std::stod(s);
}

}  // namespace

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
    out << kResultCsvHeader << "\n";
    for (const ResultRow& r : rows) {
        out << r.image_id << ',' << r.true_class << ',' << r.target_class << ',' << r.attack << ','
            << fmt(r.lambda_start) << ',' << r.binary_search_steps << ',' << fmt(r.epsilon) << ','
            << r.max_iterations << ',' << fmt(r.confidence) << ',' << (r.success ? 1 : 0) << ','
            << fmt(r.l2_norm) << ',' << fmt(r.psnr) << ',' << fmt(r.prob_true_before) << ','
            << fmt(r.prob_true_after) << ',' << fmt(r.prob_target_before) << ','
            << fmt(r.prob_target_after) << "\n";
    }
}

void write_results_csv_file(const std::string& path, const std::vector<ResultRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    write_results_csv(out, rows);
}

std::vector<ResultRow> read_results_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("results CSV: empty input");
    if (line != kResultCsvHeader) throw std::invalid_argument("results CSV: unexpected header");
    std::vector<ResultRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::vector<std::string> f = split_csv_line(line);
        if (f.size() != 16) throw std::invalid_argument("results CSV: malformed row: " + line);
        ResultRow r;
        r.image_id = std::stoll(f[0]);
        r.true_class = std::stoi(f[1]);
        r.target_class = std::stoi(f[2]);
        r.attack = f[3];
        r.lambda_start = parse_double(f[4]);
        r.binary_search_steps = std::stoi(f[5]);
        r.epsilon = parse_double(f[6]);
        r.max_iterations = std::stoi(f[7]);
        r.confidence = parse_double(f[8]);
        r.success = f[9] == "1";
        r.l2_norm = parse_double(f[10]);
        r.psnr = parse_double(f[11]);
        r.prob_true_before = parse_double(f[12]);
        r.prob_true_after = parse_double(f[13]);
        r.prob_target_before = parse_double(f[14]);
        r.prob_target_after = parse_double(f[15]);
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<ResultRow> read_results_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open " + path);
    return read_results_csv(in);
}

void write_aggregate_csv(std::ostream& out, const AggregateStats& s) {
    out << "metric,value\n";
    out << "total," << s.total << "\n";
    out << "successes," << s.successes << "\n";
    out << "asr," << fmt(s.asr) << "\n";
    out << "mean_psnr_successes," << fmt(s.mean_psnr_successes) << "\n";
    out << "mean_psnr_all," << fmt(s.mean_psnr_all) << "\n";
    out << "mean_l2_successes," << fmt(s.mean_l2_successes) << "\n";
    out << "mean_prob_true_before," << fmt(s.mean_prob_true_before) << "\n";
    out << "mean_prob_true_after_successes," << fmt(s.mean_prob_true_after_successes) << "\n";
    out << "mean_prob_target_before," << fmt(s.mean_prob_target_before) << "\n";
    out << "mean_prob_target_after_successes," << fmt(s.mean_prob_target_after_successes) << "\n";
}

}  // namespace ecoc
