#include "ecoc/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ecoc/attacks.hpp"
#include "ecoc/codes.hpp"
#include "ecoc/data.hpp"
#include "ecoc/evaluation.hpp"
#include "ecoc/model.hpp"
#include "ecoc/selftest.hpp"
#include "ecoc/training.hpp"

namespace ecoc {

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

// ---- run manifests --------------------------------------------------------------

std::string iso_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string file_checksum_hex(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return "missing";
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    char buf[19];
    std::snprintf(buf, sizeof buf, "0x%016llx",
                  static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
    return buf;
}

void write_manifest(const std::string& primary_output, const std::string& command,
                    const std::vector<std::string>& argv, const json& config,
                    const std::vector<std::string>& inputs, const std::vector<std::string>& outputs) {
    json m;
    m["command"] = command;
    m["argv"] = argv;
    m["config"] = config;
    m["inputs"] = inputs;
    json outs = json::object();
    for (const std::string& path : outputs) outs[path] = file_checksum_hex(path);
    m["outputs"] = outs;
    m["timestamp"] = iso_timestamp();
    const std::string path = primary_output + ".manifest.json";
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << m.dump(2) << "\n";
}

void ensure_parent_dir(const std::string& path) {
    const std::filesystem::path parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
}

// ---- dataset options ------------------------------------------------------------

struct DataOptions {
    std::string synthetic_spec;
    std::string idx_images;
    std::string idx_labels;

    void attach(CLI::App* cmd) {
        cmd->add_option("--synthetic", synthetic_spec,
                        "synthetic blob spec: M=..,dims=..,per-class=..,sep=..,seed=..");
        cmd->add_option("--idx-images", idx_images, "IDX image file (MNIST format)");
        cmd->add_option("--idx-labels", idx_labels, "IDX label file (MNIST format)");
    }

    Dataset load() const {
        if (!synthetic_spec.empty()) {
            if (!idx_images.empty() || !idx_labels.empty()) {
                throw std::invalid_argument("pass either --synthetic or --idx-*, not both");
            }
            return load_synthetic(synthetic_spec);
        }
        if (idx_images.empty() || idx_labels.empty()) {
            throw std::invalid_argument("need --synthetic or both --idx-images and --idx-labels");
        }
        return load_idx(idx_images, idx_labels);
    }

    static Dataset load_synthetic(const std::string& spec) {
        std::map<std::string, std::string> kv;
        std::stringstream ss(spec);
        std::string item;
        while (std::getline(ss, item, ',')) {
            const std::size_t eq = item.find('=');
            if (eq == std::string::npos) {
                throw std::invalid_argument("bad synthetic spec item: " + item);
            }
            kv[item.substr(0, eq)] = item.substr(eq + 1);
        }
        auto get = [&](const char* key, const char* fallback) {
            const auto it = kv.find(key);
            return it == kv.end() ? std::string(fallback) : it->second;
        };
        if (!kv.count("M") || !kv.count("dims")) {
            throw std::invalid_argument("synthetic spec needs at least M= and dims=");
        }
        return synthesize_gaussian_blobs(std::stoi(kv["M"]), std::stoi(kv["dims"]),
                                         std::stoi(get("per-class", "100")),
                                         std::stod(get("sep", "6")),
                                         std::stoull(get("seed", "7")));
    }
};

int next_pow2(int v) {
    int p = 1;
    while (p < v) p *= 2;
    return p;
}

// ---- train -----------------------------------------------------------------------

struct TrainOptions {
    DataOptions data;
    std::string out = "ecoc.ckpt";
    std::string base_out;
    std::string log_csv;
    int code_length = 0;  // 0 = next power of two >= M
    std::string bottom = "auto";
    int bottom_hidden = 32;
    int branch_hidden = 16;
    int head_hidden = 32;
    int conv1 = 8;
    int conv2 = 16;
    int epochs = 6;
    int finetune_epochs = 0;  // 0 = same as epochs
    int batch = 32;
    double lr = 0.05;
    double momentum = 0.9;
    double val_frac = 0.1;
    std::uint64_t seed = 1;
    bool shared_bottom = false;
};

int cmd_train(const TrainOptions& opt, const std::vector<std::string>& argv) {
    const Dataset dataset = opt.data.load();

    Architecture arch;
    arch.input_shape = dataset.image_shape;
    if (opt.bottom == "auto") {
        arch.bottom = dataset.image_shape.size() == 3 ? BottomKind::kConv : BottomKind::kDense;
    } else if (opt.bottom == "conv") {
        arch.bottom = BottomKind::kConv;
    } else if (opt.bottom == "dense") {
        arch.bottom = BottomKind::kDense;
    } else if (opt.bottom == "none") {
        arch.bottom = BottomKind::kNone;
    } else {
        throw std::invalid_argument("unknown --bottom: " + opt.bottom);
    }
    arch.bottom_hidden = opt.bottom_hidden;
    arch.branch_hidden = opt.branch_hidden;
    arch.head_hidden = opt.head_hidden;
    arch.conv_channels1 = opt.conv1;
    arch.conv_channels2 = opt.conv2;

    TrainConfig config;
    config.epochs = opt.epochs;
    config.batch_size = opt.batch;
    config.learning_rate = opt.lr;
    config.momentum = opt.momentum;
    config.validation_fraction = opt.val_frac;
    config.seed = opt.seed;
    config.freeze_bottom = !opt.shared_bottom;

    const int code_length = opt.code_length > 0 ? opt.code_length : next_pow2(dataset.class_count);
    const CodewordMatrix codewords = build_codeword_matrix(dataset.class_count, code_length);

    const std::string base_path = opt.base_out.empty() ? opt.out + ".base" : opt.base_out;
    const std::string log_path = opt.log_csv.empty() ? opt.out + ".train.csv" : opt.log_csv;
    ensure_parent_dir(opt.out);
    ensure_parent_dir(base_path);
    ensure_parent_dir(log_path);

    std::ofstream log(log_path);
    if (!log) throw std::runtime_error("cannot write " + log_path);
    log << "epoch,split,loss,error\n";
    std::ostringstream progress;

    std::cout << "training base model (" << dataset.class_count << " classes, "
              << dataset.count() << " samples)\n";
    const BaseTrainResult base = train_base(arch, dataset, config, &progress);
    std::cout << progress.str();
    log << progress.str();
    progress.str("");

    std::cout << "fine-tuning " << code_length << "-branch ensemble\n";
    TrainConfig ft = config;
    if (opt.finetune_epochs > 0) ft.epochs = opt.finetune_epochs;
    const FinetuneResult fine = finetune_ensemble(base.model, dataset, codewords, ft, &progress);
    // tag the second phase so both fit one epoch,split,loss,error file
    std::string tagged = progress.str();
    for (const auto& [from, to] : {std::pair<std::string, std::string>{",train,", ",finetune-train,"},
                                   {",validation,", ",finetune-validation,"}}) {
        std::size_t pos = 0;
        while ((pos = tagged.find(from, pos)) != std::string::npos) {
            tagged.replace(pos, from.size(), to);
            pos += to.size();
        }
    }
    std::cout << tagged;
    log << tagged;

    save_checkpoint(Model(base.model), base_path);
    save_checkpoint(Model(fine.model), opt.out);

    std::cout << "base train/validation error: " << base.train_error << " / "
              << base.validation_error << "\n";
    std::cout << "ensemble train/validation error: " << fine.train_error << " / "
              << fine.validation_error << "\n";
    std::cout << "wrote " << opt.out << ", " << base_path << "\n";

    json config_json = {
        {"synthetic", opt.data.synthetic_spec}, {"idx_images", opt.data.idx_images},
        {"idx_labels", opt.data.idx_labels},    {"code_length", code_length},
        {"bottom", opt.bottom},                 {"bottom_hidden", opt.bottom_hidden},
        {"branch_hidden", opt.branch_hidden},   {"head_hidden", opt.head_hidden},
        {"conv1", opt.conv1},                   {"conv2", opt.conv2},
        {"epochs", opt.epochs},                 {"finetune_epochs", opt.finetune_epochs},
        {"batch", opt.batch},                   {"lr", opt.lr},
        {"momentum", opt.momentum},             {"val_frac", opt.val_frac},
        {"seed", opt.seed},                     {"shared_bottom", opt.shared_bottom},
        {"base_train_error", base.train_error}, {"base_validation_error", base.validation_error},
        {"ensemble_train_error", fine.train_error},
        {"ensemble_validation_error", fine.validation_error},
    };
    write_manifest(opt.out, "train", argv, config_json,
                   {opt.data.idx_images, opt.data.idx_labels},
                   {opt.out, base_path, log_path});
    return kExitOk;
}

// ---- attack ----------------------------------------------------------------------

struct AttackOptions {
    DataOptions data;
    std::string checkpoint;
    std::string kind = "proposed";
    std::string params;  // "lambda1,n,m,c" -- the paper's table convention
    double epsilon = 0.01;
    std::uint64_t seed = 1;
    std::size_t images = 50;
    std::size_t lots_pool = 50;
    int workers = 0;
    std::string out = "results.csv";
    std::string job;  // JSON job spec; overrides the flags above
};

void apply_params_quadruple(AttackConfig& config, const std::string& params) {
    std::stringstream ss(params);
    std::string field;
    std::vector<double> vals;
    while (std::getline(ss, field, ',')) vals.push_back(std::stod(field));
    if (vals.size() != 4) {
        throw std::invalid_argument("--params wants \"lambda1,n,m,c\", got: " + params);
    }
    config.lambda_start = vals[0];
    config.binary_search_steps = static_cast<int>(vals[1]);
    config.max_iterations = static_cast<int>(vals[2]);
    config.confidence = vals[3];
}

CampaignSpec spec_from_job_json(const json& j) {
    CampaignSpec spec;
    spec.config.kind = attack_kind_from_name(j.at("kind").get<std::string>());
    spec.config.lambda_start = j.at("lambda_start").get<double>();
    spec.config.binary_search_steps = j.at("binary_search_steps").get<int>();
    spec.config.max_iterations = j.at("max_iterations").get<int>();
    spec.config.confidence = j.at("confidence").get<double>();
    spec.config.step_size = j.at("epsilon").get<double>();
    spec.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("images")) spec.image_count = j.at("images").get<std::size_t>();
    if (j.contains("image_ids")) spec.image_ids = j.at("image_ids").get<std::vector<std::size_t>>();
    if (!j.contains("images") && spec.image_ids.empty()) {
        throw std::invalid_argument("job spec needs \"images\" or \"image_ids\"");
    }
    if (j.contains("target_policy") && j.at("target_policy") != "uniform-random") {
        throw std::invalid_argument("job spec: only the uniform-random target policy exists");
    }
    if (j.contains("lots_pool")) spec.lots_pool_size = j.at("lots_pool").get<std::size_t>();
    if (j.contains("workers")) spec.workers = j.at("workers").get<int>();
    return spec;
}

json job_json_from_spec(const CampaignSpec& spec) {
    json j{{"kind", attack_kind_name(spec.config.kind)},
           {"lambda_start", spec.config.lambda_start},
           {"binary_search_steps", spec.config.binary_search_steps},
           {"max_iterations", spec.config.max_iterations},
           {"confidence", spec.config.confidence},
           {"epsilon", spec.config.step_size},
           {"seed", spec.seed},
           {"images", spec.image_count},
           {"target_policy", "uniform-random"},
           {"lots_pool", spec.lots_pool_size},
           {"workers", spec.workers}};
    if (!spec.image_ids.empty()) j["image_ids"] = spec.image_ids;
    return j;
}

int cmd_attack(const AttackOptions& opt, const std::vector<std::string>& argv) {
    if (opt.checkpoint.empty()) throw std::invalid_argument("--checkpoint is required");
    const Model model = load_checkpoint(opt.checkpoint);

    CampaignSpec spec;
    if (!opt.job.empty()) {
        std::ifstream in(opt.job);
        if (!in) throw std::invalid_argument("cannot open job spec " + opt.job);
        json j;
        in >> j;
        spec = spec_from_job_json(j);
    } else {
        spec.config.kind = attack_kind_from_name(opt.kind);
        if (!opt.params.empty()) apply_params_quadruple(spec.config, opt.params);
        spec.config.step_size = opt.epsilon;
        spec.seed = opt.seed;
        spec.image_count = opt.images;
        spec.lots_pool_size = opt.lots_pool;
        spec.workers = opt.workers;
    }

    // refuse attack kinds that do not fit the checkpoint kind
    const bool is_ecoc = std::holds_alternative<EcocEnsemble>(model);
    if ((spec.config.kind == AttackKind::kProposed || spec.config.kind == AttackKind::kCwEcoc) && !is_ecoc) {
        throw std::invalid_argument(std::string(attack_kind_name(spec.config.kind)) +
                                    " needs an ECOC checkpoint, got one-hot");
    }
    if (spec.config.kind == AttackKind::kCwOneHot && is_ecoc) {
        throw std::invalid_argument("cw-onehot needs a one-hot checkpoint, got ECOC");
    }

    const Dataset dataset = opt.data.load();
    const std::vector<ResultRow> rows = run_campaign(model, dataset, spec);

    ensure_parent_dir(opt.out);
    write_results_csv_file(opt.out, rows);
    const AggregateStats stats = aggregate(rows);
    const std::string agg_path = opt.out + ".aggregate.csv";
    {
        std::ofstream agg(agg_path);
        if (!agg) throw std::runtime_error("cannot write " + agg_path);
        write_aggregate_csv(agg, stats);
    }
    std::cout << "attacked " << stats.total << " images: ASR " << stats.asr
              << ", mean PSNR over successes " << stats.mean_psnr_successes << " dB\n";
    std::cout << "wrote " << opt.out << ", " << agg_path << "\n";

    json config_json = job_json_from_spec(spec);
    config_json["checkpoint"] = opt.checkpoint;
    config_json["synthetic"] = opt.data.synthetic_spec;
    write_manifest(opt.out, "attack", argv, config_json,
                   {opt.checkpoint, opt.data.idx_images, opt.data.idx_labels},
                   {opt.out, agg_path});
    return kExitOk;
}

// ---- report ----------------------------------------------------------------------

struct ReportOptions {
    std::vector<std::string> results;
    std::string out_prefix = "report";
    std::size_t bins = 20;
    std::string thresholds;  // comma list; default 10..60 step 2.5
};

int cmd_report(const ReportOptions& opt, const std::vector<std::string>& argv) {
    if (opt.results.empty()) throw std::invalid_argument("--results is required");
    std::vector<ResultRow> rows;
    for (const std::string& path : opt.results) {
        const std::vector<ResultRow> part = read_results_csv_file(path);
        rows.insert(rows.end(), part.begin(), part.end());
    }
    if (rows.empty()) throw std::invalid_argument("no result rows in the given files");

    std::vector<double> thresholds;
    if (opt.thresholds.empty()) {
        for (double t = 10.0; t <= 60.0; t += 2.5) thresholds.push_back(t);
    } else {
        std::stringstream ss(opt.thresholds);
        std::string field;
        while (std::getline(ss, field, ',')) thresholds.push_back(std::stod(field));
    }

    std::set<double> c_values;
    for (const ResultRow& r : rows) c_values.insert(r.confidence);

    ensure_parent_dir(opt.out_prefix);
    const std::string conf_path = opt.out_prefix + ".confidence.csv";
    const std::string curve_path = opt.out_prefix + ".curve.csv";
    const std::string hist_adv_path = opt.out_prefix + ".hist-target-prob.csv";
    const std::string hist_clean_path = opt.out_prefix + ".hist-clean-prob.csv";
    const std::string agg_path = opt.out_prefix + ".aggregate.csv";

    {
        std::ofstream out(conf_path);
        out << "c,asr,mean_psnr,prob_true_before,prob_true_after,prob_target_before,prob_target_after,empty\n";
        for (const ConfidenceRow& row :
             confidence_table(rows, std::vector<double>(c_values.begin(), c_values.end()))) {
            out << row.confidence << ',' << row.asr << ',' << row.mean_psnr << ','
                << row.prob_true_before << ',' << row.prob_true_after << ','
                << row.prob_target_before << ',' << row.prob_target_after << ','
                << (row.empty ? 1 : 0) << "\n";
        }
    }
    {
        std::ofstream out(curve_path);
        out << "psnr_threshold,asr\n";
        for (const auto& [tau, asr] : asr_vs_psnr_curve(rows, thresholds)) {
            out << tau << ',' << asr << "\n";
        }
    }
    auto write_histogram = [&](const std::string& path, const std::vector<double>& values) {
        std::ofstream out(path);
        out << "bin_low,count\n";
        if (values.empty()) return;
        const std::vector<std::size_t> counts = probability_histogram(values, opt.bins);
        for (std::size_t b = 0; b < counts.size(); ++b) {
            out << static_cast<double>(b) / static_cast<double>(opt.bins) << ',' << counts[b] << "\n";
        }
    };
    {
        // target-class probability of successful attacks vs clean true-class probability
        std::vector<double> adv, clean;
        for (const ResultRow& r : rows) {
            if (r.success) adv.push_back(std::clamp(r.prob_target_after, 0.0, 1.0));
            clean.push_back(std::clamp(r.prob_true_before, 0.0, 1.0));
        }
        write_histogram(hist_adv_path, adv);
        write_histogram(hist_clean_path, clean);
    }
    {
        std::ofstream out(agg_path);
        write_aggregate_csv(out, aggregate(rows));
    }

    std::cout << "wrote " << conf_path << ", " << curve_path << ", " << hist_adv_path << ", "
              << hist_clean_path << ", " << agg_path << "\n";
    write_manifest(opt.out_prefix, "report", argv,
                   json{{"bins", opt.bins}, {"thresholds", opt.thresholds}}, opt.results,
                   {conf_path, curve_path, hist_adv_path, hist_clean_path, agg_path});
    return kExitOk;
}

// ---- codes -----------------------------------------------------------------------

int cmd_codes(int classes, int length, bool one_hot) {
    const CodewordMatrix codes =
        one_hot ? one_hot_matrix(classes)
                : build_codeword_matrix(classes, length > 0 ? length : next_pow2(classes));
    for (int r = 0; r < codes.class_count; ++r) {
        for (int c = 0; c < codes.code_length; ++c) {
            std::cout << (c ? " " : "") << static_cast<int>(codes.at(r, c));
        }
        std::cout << "\n";
    }
    std::cout << "classes " << codes.class_count << ", length " << codes.code_length
              << ", min Hamming distance " << min_hamming_distance(codes) << "\n";
    return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"error-correcting-output-code classifiers and targeted attacks on them"};
    app.require_subcommand(1);
    const std::vector<std::string> argv_echo(argv, argv + argc);

    TrainOptions train_opt;
    CLI::App* train = app.add_subcommand("train", "train the baseline and fine-tune the ensemble");
    train_opt.data.attach(train);
    train->add_option("--out", train_opt.out, "ECOC checkpoint path");
    train->add_option("--base-out", train_opt.base_out, "baseline checkpoint path (default <out>.base)");
    train->add_option("--log", train_opt.log_csv, "training CSV path (default <out>.train.csv)");
    train->add_option("--code-length", train_opt.code_length, "codeword length N (default: 2^ceil(log2 M))");
    train->add_option("--bottom", train_opt.bottom, "auto|conv|dense|none");
    train->add_option("--bottom-hidden", train_opt.bottom_hidden);
    train->add_option("--branch-hidden", train_opt.branch_hidden);
    train->add_option("--head-hidden", train_opt.head_hidden);
    train->add_option("--conv1", train_opt.conv1);
    train->add_option("--conv2", train_opt.conv2);
    train->add_option("--epochs", train_opt.epochs);
    train->add_option("--finetune-epochs", train_opt.finetune_epochs);
    train->add_option("--batch", train_opt.batch);
    train->add_option("--lr", train_opt.lr);
    train->add_option("--momentum", train_opt.momentum);
    train->add_option("--val-frac", train_opt.val_frac);
    train->add_option("--seed", train_opt.seed);
    train->add_flag("--shared-bottom", train_opt.shared_bottom,
                    "backpropagate into the shared bottom during fine-tuning");

    AttackOptions attack_opt;
    CLI::App* attack = app.add_subcommand("attack", "run a targeted attack campaign");
    attack_opt.data.attach(attack);
    attack->add_option("--checkpoint", attack_opt.checkpoint, "model checkpoint");
    attack->add_option("--kind", attack_opt.kind, "proposed|cw-ecoc|cw-onehot|lots");
    attack->add_option("--params", attack_opt.params, "\"lambda1,n,m,c\" as in the result tables");
    attack->add_option("--epsilon", attack_opt.epsilon, "gradient step size");
    attack->add_option("--seed", attack_opt.seed);
    attack->add_option("--images", attack_opt.images, "number of images to attack");
    attack->add_option("--lots-pool", attack_opt.lots_pool, "target pool size for lots");
    attack->add_option("--workers", attack_opt.workers, "0 = hardware concurrency (ECOC_WORKERS env)");
    attack->add_option("--out", attack_opt.out, "per-image results CSV");
    attack->add_option("--job", attack_opt.job, "JSON job spec replacing the attack flags");

    ReportOptions report_opt;
    CLI::App* report = app.add_subcommand("report", "aggregate result CSVs into tables and curves");
    report->add_option("--results", report_opt.results, "one or more results CSV files");
    report->add_option("--out-prefix", report_opt.out_prefix);
    report->add_option("--bins", report_opt.bins, "histogram bin count");
    report->add_option("--thresholds", report_opt.thresholds, "comma list of PSNR thresholds");

    int codes_classes = 10;
    int codes_length = 0;
    bool codes_one_hot = false;
    CLI::App* codes = app.add_subcommand("codes", "print a codeword matrix and its min distance");
    codes->add_option("--classes", codes_classes);
    codes->add_option("--length", codes_length, "0 = next power of two");
    codes->add_flag("--one-hot", codes_one_hot);

    CLI::App* selftest = app.add_subcommand("selftest", "run the built-in verification suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    } catch (const CLI::ParseError& e) {
        app.exit(e);  // prints the message and usage
        return kExitUsage;
    }

    try {
        if (train->parsed()) return cmd_train(train_opt, argv_echo);
        if (attack->parsed()) return cmd_attack(attack_opt, argv_echo);
        if (report->parsed()) return cmd_report(report_opt, argv_echo);
        if (codes->parsed()) return cmd_codes(codes_classes, codes_length, codes_one_hot);
        if (selftest->parsed()) {
            return run_selftest(std::cout) == 0 ? kExitOk : kExitFailure;
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitUsage;
}

}  // namespace ecoc
