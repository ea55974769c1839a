#include "ecoc/training.hpp"

#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace ecoc {

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (learning_rate <= 0.0) throw std::invalid_argument("TrainConfig: learning_rate must be positive");
    if (validation_fraction <= 0.0 || validation_fraction >= 1.0) {
        throw std::invalid_argument("TrainConfig: validation_fraction must be in (0,1)");
    }
}

double per_bit_loss(double logit, int target_bit) {
    const double margin = static_cast<double>(target_bit) * logit;
    return std::max(-margin, 0.0) + std::log1p(std::exp(-std::abs(margin)));
}

Var per_bit_loss_on_tape(Tape& tape, Var logit_scalar, int target_bit) {
    // softplus(-t*z) == log(1 + exp(-t*z))
    return tape.softplus(tape.scale(logit_scalar, -static_cast<double>(target_bit)));
}

Var cross_entropy_on_tape(Tape& tape, Var logits, int label) {
    const std::size_t m = tape.value(logits).size();
    const Var mx = tape.reduce_max(logits);
    // broadcast the scalar max back to length m, then the usual log-sum-exp
    const Var mx_vec = tape.gather(mx, std::vector<std::size_t>(m, 0));
    const Var shifted = tape.sub(logits, mx_vec);
    const Var lse = tape.add(tape.log(tape.reduce_sum(tape.exp(shifted))), mx);
    const Var z_true = tape.gather(logits, {static_cast<std::size_t>(label)});
    return tape.sub(lse, z_true);
}

namespace {

// SGD with optional momentum over one parameter block.
struct BlockOptimizer {
    std::vector<Tensor> velocity;

    void init(const std::vector<Tensor>& params) {
        velocity.clear();
        for (const Tensor& p : params) velocity.push_back(Tensor::zeros_like(p));
    }

    void step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, double lr, double mu) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            Tensor& p = params[i];
            const Tensor& g = grads[i];
            Tensor& v = velocity[i];
            for (std::size_t j = 0; j < p.size(); ++j) {
                v[j] = mu * v[j] - lr * g[j];
                p[j] += v[j];
            }
        }
    }
};

void accumulate_grads(const Tape& tape, const std::vector<Var>& vars, std::vector<Tensor>& sums) {
    for (std::size_t i = 0; i < vars.size(); ++i) {
        const Tensor& g = tape.grad(vars[i]);
        if (g.size() == 0) continue;  // leaf not on the loss path this sample
        for (std::size_t j = 0; j < g.size(); ++j) sums[i][j] += g[j];
    }
}

void scale_grads(std::vector<Tensor>& sums, double factor) {
    for (Tensor& t : sums) {
        for (double& v : t.values()) v *= factor;
    }
}

void zero_grads(std::vector<Tensor>& sums) {
    for (Tensor& t : sums) {
        for (double& v : t.values()) v = 0.0;
    }
}

std::vector<Tensor> zeros_like_block(const std::vector<Tensor>& block) {
    std::vector<Tensor> z;
    z.reserve(block.size());
    for (const Tensor& t : block) z.push_back(Tensor::zeros_like(t));
    return z;
}

void check_loss_finite(double loss) {
    if (!std::isfinite(loss)) {
        throw std::runtime_error("training aborted: non-finite loss");
    }
}

void emit(std::ostream* progress, int epoch, const char* split, double loss, double error) {
    if (progress) {
        (*progress) << epoch << "," << split << "," << loss << "," << error << "\n";
    }
}

// Mean cross-entropy and error of the baseline on a dataset.
std::pair<double, double> base_metrics(const OneHotModel& model, const Dataset& ds) {
    double loss_sum = 0.0;
    std::size_t wrong = 0;
    Tape tape;
    for (std::size_t i = 0; i < ds.count(); ++i) {
        tape.reset();
        const Var z = onehot_logits_on_tape(tape, model, tape.constant(ds.image(i)));
        loss_sum += tape.value(cross_entropy_on_tape(tape, z, ds.labels[i])).item();
        if (argmax_lowest(tape.value(z)) != ds.labels[i]) ++wrong;
    }
    const double n = static_cast<double>(ds.count());
    return {loss_sum / n, static_cast<double>(wrong) / n};
}

}  // namespace

BaseTrainResult train_base(const Architecture& arch, const Dataset& dataset,
                           const TrainConfig& config, std::ostream* progress) {
    config.validate();
    if (dataset.count() == 0) throw std::invalid_argument("train_base: empty dataset");

    const std::vector<Dataset> parts =
        split(dataset, {1.0 - config.validation_fraction, config.validation_fraction}, config.seed);
    const Dataset& train = parts[0];
    const Dataset& val = parts[1];
    if (train.count() == 0 || val.count() == 0) {
        throw std::invalid_argument("train_base: dataset too small for the validation split");
    }

    Rng rng(config.seed);
    OneHotModel model = init_onehot(arch, dataset.class_count, rng);

    BlockOptimizer opt_bottom, opt_head;
    opt_bottom.init(model.shared_bottom);
    opt_head.init(model.head);
    std::vector<Tensor> g_bottom = zeros_like_block(model.shared_bottom);
    std::vector<Tensor> g_head = zeros_like_block(model.head);

    std::vector<std::size_t> order(train.count());
    std::iota(order.begin(), order.end(), std::size_t{0});

    Tape tape;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t epoch_wrong = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
            zero_grads(g_bottom);
            zero_grads(g_head);
            for (std::size_t s = begin; s < end; ++s) {
                tape.reset();
                std::vector<Var> bottom_vars, head_vars;
                const Var x = tape.constant(train.image(order[s]));
                const Var f = bottom_features_on_tape(tape, arch, model.shared_bottom, x, &bottom_vars);
                const Var z = head_logits_on_tape(tape, arch, model.head, f, &head_vars);
                const Var loss = cross_entropy_on_tape(tape, z, train.labels[order[s]]);
                const double lv = tape.value(loss).item();
                check_loss_finite(lv);
                epoch_loss += lv;
                if (argmax_lowest(tape.value(z)) != train.labels[order[s]]) ++epoch_wrong;
                tape.backward(loss);
                accumulate_grads(tape, bottom_vars, g_bottom);
                accumulate_grads(tape, head_vars, g_head);
            }
            const double inv = 1.0 / static_cast<double>(end - begin);
            scale_grads(g_bottom, inv);
            scale_grads(g_head, inv);
            opt_bottom.step(model.shared_bottom, g_bottom, config.learning_rate, config.momentum);
            opt_head.step(model.head, g_head, config.learning_rate, config.momentum);
        }
        emit(progress, epoch, "train", epoch_loss / static_cast<double>(train.count()),
             static_cast<double>(epoch_wrong) / static_cast<double>(train.count()));
        const auto [vloss, verr] = base_metrics(model, val);
        check_loss_finite(vloss);
        emit(progress, epoch, "validation", vloss, verr);
    }

    BaseTrainResult result{std::move(model), 0.0, 0.0};
    result.train_error = base_metrics(result.model, train).second;
    result.validation_error = base_metrics(result.model, val).second;
    return result;
}

namespace {

// Features of every sample under a fixed bottom, as a vector dataset.
Dataset precompute_features(const Architecture& arch, const std::vector<Tensor>& bottom,
                            const Dataset& ds) {
    Dataset out;
    out.class_count = ds.class_count;
    out.image_shape = {arch.feature_dim()};
    out.labels = ds.labels;
    Tape tape;
    for (std::size_t i = 0; i < ds.count(); ++i) {
        tape.reset();
        const Var f = bottom_features_on_tape(tape, arch, bottom, tape.constant(ds.image(i)));
        const Tensor& fv = tape.value(f);
        out.pixels.insert(out.pixels.end(), fv.values().begin(), fv.values().end());
    }
    return out;
}

// Logit of one branch on a precomputed feature vector.
double branch_logit_value(const Architecture& arch, const std::vector<Tensor>& branch,
                          const Tensor& features) {
    Tape tape;
    return tape.value(branch_logit_on_tape(tape, arch, branch, tape.constant(features))).item();
}

std::pair<double, double> ensemble_metrics_from_features(const EcocEnsemble& model,
                                                         const Dataset& features) {
    double loss_sum = 0.0;
    std::size_t wrong = 0;
    const int n_bits = model.code_length();
    for (std::size_t i = 0; i < features.count(); ++i) {
        const Tensor f = features.image(i);
        Tensor z({static_cast<std::size_t>(n_bits)});
        for (int b = 0; b < n_bits; ++b) {
            z[static_cast<std::size_t>(b)] = branch_logit_value(model.arch, model.branches[static_cast<std::size_t>(b)], f);
            loss_sum += per_bit_loss(z[static_cast<std::size_t>(b)],
                                     model.codewords.at(features.labels[i], b));
        }
        const Tensor rho = correlations(z, model.codewords);
        const ClassProbabilities p = class_probabilities(rho);
        const int pred = p.degenerate ? argmax_lowest(rho) : argmax_lowest(p.probs);
        if (pred != features.labels[i]) ++wrong;
    }
    const double n = static_cast<double>(features.count());
    return {loss_sum / (n * static_cast<double>(n_bits)), static_cast<double>(wrong) / n};
}

}  // namespace

FinetuneResult finetune_ensemble(const OneHotModel& base, const Dataset& dataset,
                                 const CodewordMatrix& codewords, const TrainConfig& config,
                                 std::ostream* progress) {
    config.validate();
    validate(codewords);
    if (dataset.count() == 0) throw std::invalid_argument("finetune_ensemble: empty dataset");
    if (dataset.class_count != codewords.class_count) {
        throw std::invalid_argument("finetune_ensemble: dataset class count != codeword rows");
    }

    const std::vector<Dataset> parts =
        split(dataset, {1.0 - config.validation_fraction, config.validation_fraction}, config.seed);
    const Dataset& train = parts[0];
    const Dataset& val = parts[1];

    EcocEnsemble model;
    model.arch = base.arch;
    model.codewords = codewords;
    model.shared_bottom = base.shared_bottom;  // "fine-tuned from the base network"
    Rng rng(config.seed);
    model.branches.resize(static_cast<std::size_t>(codewords.code_length));
    for (auto& branch : model.branches) branch = init_branch_params(model.arch, rng);

    if (!config.freeze_bottom) {
        // shared mode: joint minibatch SGD through bottom and all branches
        BlockOptimizer opt_bottom;
        opt_bottom.init(model.shared_bottom);
        std::vector<BlockOptimizer> opt_branch(model.branches.size());
        for (std::size_t b = 0; b < model.branches.size(); ++b) opt_branch[b].init(model.branches[b]);
        std::vector<Tensor> g_bottom = zeros_like_block(model.shared_bottom);
        std::vector<std::vector<Tensor>> g_branch;
        for (const auto& branch : model.branches) g_branch.push_back(zeros_like_block(branch));

        std::vector<std::size_t> order(train.count());
        std::iota(order.begin(), order.end(), std::size_t{0});
        Tape tape;
        const int n_bits = codewords.code_length;
        for (int epoch = 1; epoch <= config.epochs; ++epoch) {
            rng.shuffle(order);
            double epoch_loss = 0.0;
            std::size_t epoch_wrong = 0;
            for (std::size_t begin = 0; begin < order.size();
                 begin += static_cast<std::size_t>(config.batch_size)) {
                const std::size_t end =
                    std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
                zero_grads(g_bottom);
                for (auto& g : g_branch) zero_grads(g);
                for (std::size_t s = begin; s < end; ++s) {
                    tape.reset();
                    std::vector<Var> bottom_vars;
                    std::vector<std::vector<Var>> branch_vars(model.branches.size());
                    const Var x = tape.constant(train.image(order[s]));
                    const Var f = bottom_features_on_tape(tape, model.arch, model.shared_bottom, x,
                                                          &bottom_vars);
                    std::vector<Var> losses;
                    Tensor z_all({static_cast<std::size_t>(n_bits)});
                    for (int b = 0; b < n_bits; ++b) {
                        const Var z = branch_logit_on_tape(tape, model.arch,
                                                           model.branches[static_cast<std::size_t>(b)], f,
                                                           &branch_vars[static_cast<std::size_t>(b)]);
                        z_all[static_cast<std::size_t>(b)] = tape.value(z).item();
                        losses.push_back(per_bit_loss_on_tape(
                            tape, z, codewords.at(train.labels[order[s]], b)));
                    }
                    const Var total = tape.scale(tape.reduce_sum(tape.concat(losses)),
                                                 1.0 / static_cast<double>(n_bits));
                    const double lv = tape.value(total).item();
                    check_loss_finite(lv);
                    epoch_loss += lv;
                    const Tensor rho = correlations(z_all, codewords);
                    const ClassProbabilities p = class_probabilities(rho);
                    const int pred = p.degenerate ? argmax_lowest(rho) : argmax_lowest(p.probs);
                    if (pred != train.labels[order[s]]) ++epoch_wrong;
                    tape.backward(total);
                    accumulate_grads(tape, bottom_vars, g_bottom);
                    for (std::size_t b = 0; b < model.branches.size(); ++b) {
                        accumulate_grads(tape, branch_vars[b], g_branch[b]);
                    }
                }
                const double inv = 1.0 / static_cast<double>(end - begin);
                scale_grads(g_bottom, inv);
                opt_bottom.step(model.shared_bottom, g_bottom, config.learning_rate, config.momentum);
                for (std::size_t b = 0; b < model.branches.size(); ++b) {
                    scale_grads(g_branch[b], inv);
                    opt_branch[b].step(model.branches[b], g_branch[b], config.learning_rate,
                                       config.momentum);
                }
            }
            emit(progress, epoch, "train", epoch_loss / static_cast<double>(train.count()),
                 static_cast<double>(epoch_wrong) / static_cast<double>(train.count()));
        }
    } else {
        // frozen mode: bottom features never change, so compute them once and
        // train every branch as an independent small network
        const Dataset train_feat = precompute_features(model.arch, model.shared_bottom, train);
        const Dataset val_feat = precompute_features(model.arch, model.shared_bottom, val);
        const int n_bits = codewords.code_length;
        Tape tape;
        for (int b = 0; b < n_bits; ++b) {
            auto& branch = model.branches[static_cast<std::size_t>(b)];
            BlockOptimizer opt;
            opt.init(branch);
            std::vector<Tensor> grads = zeros_like_block(branch);
            Rng branch_rng(config.seed ^ (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(b + 1)));
            std::vector<std::size_t> order(train_feat.count());
            std::iota(order.begin(), order.end(), std::size_t{0});
            for (int epoch = 1; epoch <= config.epochs; ++epoch) {
                branch_rng.shuffle(order);
                for (std::size_t begin = 0; begin < order.size();
                     begin += static_cast<std::size_t>(config.batch_size)) {
                    const std::size_t end =
                        std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
                    zero_grads(grads);
                    for (std::size_t s = begin; s < end; ++s) {
                        tape.reset();
                        std::vector<Var> branch_vars;
                        const Var f = tape.constant(train_feat.image(order[s]));
                        const Var z = branch_logit_on_tape(tape, model.arch, branch, f, &branch_vars);
                        const Var loss = per_bit_loss_on_tape(
                            tape, z, codewords.at(train_feat.labels[order[s]], b));
                        check_loss_finite(tape.value(loss).item());
                        tape.backward(loss);
                        accumulate_grads(tape, branch_vars, grads);
                    }
                    scale_grads(grads, 1.0 / static_cast<double>(end - begin));
                    opt.step(branch, grads, config.learning_rate, config.momentum);
                }
            }
        }
        if (progress) {
            const auto [tloss, terr] = ensemble_metrics_from_features(model, train_feat);
            const auto [vloss, verr] = ensemble_metrics_from_features(model, val_feat);
            emit(progress, config.epochs, "train", tloss, terr);
            emit(progress, config.epochs, "validation", vloss, verr);
        }
    }

    const Dataset train_feat = precompute_features(model.arch, model.shared_bottom, train);
    const Dataset val_feat = precompute_features(model.arch, model.shared_bottom, val);
    FinetuneResult result{std::move(model), 0.0, 0.0};
    result.train_error = ensemble_metrics_from_features(result.model, train_feat).second;
    result.validation_error = ensemble_metrics_from_features(result.model, val_feat).second;
    return result;
}

double evaluate_error_rate(const Model& model, const Dataset& dataset) {
    if (dataset.count() == 0) throw std::invalid_argument("evaluate_error_rate: empty dataset");
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < dataset.count(); ++i) {
        if (predict(model, dataset.image(i)) != dataset.labels[i]) ++wrong;
    }
    return static_cast<double>(wrong) / static_cast<double>(dataset.count());
}

}  // namespace ecoc
