#include "ecoc/attacks.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace ecoc {

const char* attack_kind_name(AttackKind kind) {
    switch (kind) {
        case AttackKind::kProposed: return "proposed";
        case AttackKind::kCwEcoc: return "cw-ecoc";
        case AttackKind::kCwOneHot: return "cw-onehot";
        case AttackKind::kLots: return "lots";
    }
    return "?";
}

AttackKind attack_kind_from_name(const std::string& name) {
    if (name == "proposed") return AttackKind::kProposed;
    if (name == "cw-ecoc") return AttackKind::kCwEcoc;
    if (name == "cw-onehot") return AttackKind::kCwOneHot;
    if (name == "lots") return AttackKind::kLots;
    throw std::invalid_argument("unknown attack kind: " + name);
}

void AttackConfig::validate() const {
    if (lambda_start <= 0.0) throw std::invalid_argument("AttackConfig: lambda_start must be positive");
    if (binary_search_steps < 1) throw std::invalid_argument("AttackConfig: n must be >= 1");
    if (step_size <= 0.0) throw std::invalid_argument("AttackConfig: step_size must be positive");
    if (max_iterations < 1) throw std::invalid_argument("AttackConfig: m must be >= 1");
}

// ---- objective graphs --------------------------------------------------------

namespace {

std::vector<std::size_t> indices_except(std::size_t n, std::size_t skip) {
    std::vector<std::size_t> idx;
    idx.reserve(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        if (i != skip) idx.push_back(i);
    }
    return idx;
}

// max( max_{i != t} scores_i - scores_t, c )
Var cw_penalty(Tape& tape, Var scores, int target, double c) {
    const std::size_t n = tape.value(scores).size();
    const Var runner_up = tape.reduce_max(tape.gather(scores, indices_except(n, static_cast<std::size_t>(target))));
    const Var s_t = tape.gather(scores, {static_cast<std::size_t>(target)});
    const Var term = tape.sub(runner_up, s_t);
    const Var parts[2] = {term, tape.constant(Tensor::scalar(c))};
    // the clamp constant comes last so a tie routes the subgradient into the term
    return tape.reduce_max(tape.concat(std::span<const Var>(parts, 2)));
}

// min( min_i 2 t_i z_i, c ) for the target codeword bits t_i
Var per_bit_penalty(Tape& tape, Var z, const CodewordMatrix& codes, int target, double c) {
    const std::size_t n = tape.value(z).size();
    Tensor two_t({n});
    for (std::size_t i = 0; i < n; ++i) {
        two_t[i] = 2.0 * static_cast<double>(codes.at(target, static_cast<int>(i)));
    }
    const Var margins = tape.mul(z, tape.constant(two_t));
    const Var parts[2] = {margins, tape.constant(Tensor::scalar(c))};
    return tape.reduce_min(tape.concat(std::span<const Var>(parts, 2)));
}

// correlations on tape: rho = C * tanh(z)
Var correlations_on_tape(Tape& tape, Var z, const CodewordMatrix& codes) {
    const std::size_t m = static_cast<std::size_t>(codes.class_count);
    const std::size_t n = static_cast<std::size_t>(codes.code_length);
    Tensor c_mat({m, n});
    for (std::size_t i = 0; i < m * n; ++i) c_mat[i] = static_cast<double>(codes.entries[i]);
    return tape.matmul(tape.constant(c_mat), tape.tanh(z));
}

double margin_proposed(const Tensor& z, const CodewordMatrix& codes, int target) {
    double worst = std::numeric_limits<double>::infinity();
    for (int i = 0; i < codes.code_length; ++i) {
        worst = std::min(worst, 2.0 * static_cast<double>(codes.at(target, i)) * z[static_cast<std::size_t>(i)]);
    }
    return worst;
}

double margin_top_vs_rest(const Tensor& scores, int target) {
    double best_other = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (static_cast<int>(i) != target) best_other = std::max(best_other, scores[i]);
    }
    return scores[static_cast<std::size_t>(target)] - best_other;
}

}  // namespace

double cw_onehot_objective(const OneHotModel& model, const Tensor& x, const Tensor& delta, int t,
                           double lambda, double c) {
    Tape tape;
    const Var d = tape.constant(delta);
    const Var x_adv = tape.add(tape.constant(x), d);
    const Var z = onehot_logits_on_tape(tape, model, x_adv);
    const Var obj = tape.add(tape.l2_norm(d), tape.scale(cw_penalty(tape, z, t, c), lambda));
    return tape.value(obj).item();
}

double cw_ecoc_objective(const EcocEnsemble& model, const Tensor& x, const Tensor& delta, int t,
                         double lambda, double c) {
    Tape tape;
    const Var d = tape.constant(delta);
    const Var x_adv = tape.add(tape.constant(x), d);
    const Var z = ecoc_logits_on_tape(tape, model, x_adv);
    const Var rho = correlations_on_tape(tape, z, model.codewords);
    const Var obj = tape.add(tape.l2_norm(d), tape.scale(cw_penalty(tape, rho, t, c), lambda));
    return tape.value(obj).item();
}

double proposed_objective(const EcocEnsemble& model, const Tensor& x, const Tensor& delta, int t,
                          double lambda, double c) {
    Tape tape;
    const Var d = tape.constant(delta);
    const Var x_adv = tape.add(tape.constant(x), d);
    const Var z = ecoc_logits_on_tape(tape, model, x_adv);
    const Var obj =
        tape.sub(tape.l2_norm(d), tape.scale(per_bit_penalty(tape, z, model.codewords, t, c), lambda));
    return tape.value(obj).item();
}

bool is_adversarial(const Model& model, const Tensor& x_adv, int target, double c, AttackKind kind) {
    switch (kind) {
        case AttackKind::kProposed: {
            const auto& m = std::get<EcocEnsemble>(model);
            const Tensor z = logits(m, x_adv);
            return predict_from_logits(m, z) == target &&
                   margin_proposed(z, m.codewords, target) >= c;
        }
        case AttackKind::kCwEcoc: {
            const auto& m = std::get<EcocEnsemble>(model);
            const Tensor z = logits(m, x_adv);
            const Tensor rho = correlations(z, m.codewords);
            return predict_from_logits(m, z) == target && margin_top_vs_rest(rho, target) >= c;
        }
        case AttackKind::kCwOneHot: {
            const auto& m = std::get<OneHotModel>(model);
            const Tensor z = logits(m, x_adv);
            return predict_from_logits(m, z) == target && margin_top_vs_rest(z, target) >= c;
        }
        case AttackKind::kLots:
            return predict(model, x_adv) == target;
    }
    return false;
}

// ---- problems -----------------------------------------------------------------

namespace {

// delta-space problems project x+delta back into the [0,1] box after a step
class DeltaSpaceProblem : public AttackProblem {
public:
    explicit DeltaSpaceProblem(Tensor x) : x_(std::move(x)) {}

    Tensor initial_point() const override { return Tensor::zeros_like(x_); }
    Tensor delta_of(const Tensor& point) const override { return point; }

    Tensor step(const Tensor& point, const Tensor& unit_direction, double eps) const override {
        Tensor next = point;
        for (std::size_t i = 0; i < next.size(); ++i) {
            next[i] -= eps * unit_direction[i];
            next[i] = std::clamp(next[i], -x_[i], 1.0 - x_[i]);
        }
        return next;
    }

protected:
    Tensor x_;
    Tape tape_;
};

class ProposedProblem final : public DeltaSpaceProblem {
public:
    ProposedProblem(const EcocEnsemble& model, Tensor x, int target, double c)
        : DeltaSpaceProblem(std::move(x)), model_(model), target_(target), c_(c) {}

    Eval evaluate(const Tensor& point, double lambda) override {
        tape_.reset();
        const Var d = tape_.leaf(point, true);
        const Var x_adv = tape_.add(tape_.constant(x_), d);
        const Var z = ecoc_logits_on_tape(tape_, model_, x_adv);
        const Var obj = tape_.sub(
            tape_.l2_norm(d), tape_.scale(per_bit_penalty(tape_, z, model_.codewords, target_, c_), lambda));
        Eval e;
        e.objective = tape_.value(obj).item();
        if (std::isfinite(e.objective)) {
            tape_.backward(obj);
            e.gradient = tape_.grad(d);
            const Tensor& zv = tape_.value(z);
            e.adversarial = predict_from_logits(model_, zv) == target_ &&
                            margin_proposed(zv, model_.codewords, target_) >= c_;
        }
        return e;
    }

private:
    const EcocEnsemble& model_;
    int target_;
    double c_;
};

class CwEcocProblem final : public DeltaSpaceProblem {
public:
    CwEcocProblem(const EcocEnsemble& model, Tensor x, int target, double c)
        : DeltaSpaceProblem(std::move(x)), model_(model), target_(target), c_(c) {}

    Eval evaluate(const Tensor& point, double lambda) override {
        tape_.reset();
        const Var d = tape_.leaf(point, true);
        const Var x_adv = tape_.add(tape_.constant(x_), d);
        const Var z = ecoc_logits_on_tape(tape_, model_, x_adv);
        const Var rho = correlations_on_tape(tape_, z, model_.codewords);
        const Var obj =
            tape_.add(tape_.l2_norm(d), tape_.scale(cw_penalty(tape_, rho, target_, c_), lambda));
        Eval e;
        e.objective = tape_.value(obj).item();
        if (std::isfinite(e.objective)) {
            tape_.backward(obj);
            e.gradient = tape_.grad(d);
            const Tensor& zv = tape_.value(z);
            e.adversarial = predict_from_logits(model_, zv) == target_ &&
                            margin_top_vs_rest(tape_.value(rho), target_) >= c_;
        }
        return e;
    }

private:
    const EcocEnsemble& model_;
    int target_;
    double c_;
};

// C&W one-hot optimizes w with x+delta = (tanh(w)+1)/2, which keeps the box
// constraint satisfied without projection.
class CwOneHotProblem final : public AttackProblem {
public:
    CwOneHotProblem(const OneHotModel& model, Tensor x, int target, double c)
        : model_(model), x_(std::move(x)), target_(target), c_(c) {}

    Tensor initial_point() const override {
        Tensor w = x_;
        for (double& v : w.values()) {
            v = std::atanh(std::clamp(2.0 * v - 1.0, -(1.0 - 1e-6), 1.0 - 1e-6));
        }
        return w;
    }

    Tensor delta_of(const Tensor& w) const override {
        Tensor d = w;
        for (std::size_t i = 0; i < d.size(); ++i) {
            d[i] = 0.5 * (std::tanh(w[i]) + 1.0) - x_[i];
        }
        return d;
    }

    Tensor step(const Tensor& w, const Tensor& unit_direction, double eps) const override {
        Tensor next = w;
        for (std::size_t i = 0; i < next.size(); ++i) next[i] -= eps * unit_direction[i];
        return next;
    }

    Eval evaluate(const Tensor& w, double lambda) override {
        tape_.reset();
        const Var wv = tape_.leaf(w, true);
        const Var x_adv = tape_.add(tape_.scale(tape_.tanh(wv), 0.5),
                                    tape_.constant(Tensor::filled(x_.shape(), 0.5)));
        const Var d = tape_.sub(x_adv, tape_.constant(x_));
        const Var z = onehot_logits_on_tape(tape_, model_, x_adv);
        const Var obj = tape_.add(tape_.l2_norm(d), tape_.scale(cw_penalty(tape_, z, target_, c_), lambda));
        Eval e;
        e.objective = tape_.value(obj).item();
        if (std::isfinite(e.objective)) {
            tape_.backward(obj);
            e.gradient = tape_.grad(wv);
            const Tensor& zv = tape_.value(z);
            e.adversarial = predict_from_logits(model_, zv) == target_ &&
                            margin_top_vs_rest(zv, target_) >= c_;
        }
        return e;
    }

private:
    const OneHotModel& model_;
    Tensor x_;
    int target_;
    double c_;
    Tape tape_;
};

}  // namespace

std::unique_ptr<AttackProblem> make_attack_problem(const Model& model, const Tensor& x, int target,
                                                   double confidence, AttackKind kind) {
    switch (kind) {
        case AttackKind::kProposed:
            if (!std::holds_alternative<EcocEnsemble>(model)) {
                throw std::invalid_argument("proposed attack requires an ECOC checkpoint");
            }
            return std::make_unique<ProposedProblem>(std::get<EcocEnsemble>(model), x, target, confidence);
        case AttackKind::kCwEcoc:
            if (!std::holds_alternative<EcocEnsemble>(model)) {
                throw std::invalid_argument("cw-ecoc attack requires an ECOC checkpoint");
            }
            return std::make_unique<CwEcocProblem>(std::get<EcocEnsemble>(model), x, target, confidence);
        case AttackKind::kCwOneHot:
            if (!std::holds_alternative<OneHotModel>(model)) {
                throw std::invalid_argument("cw-onehot attack requires a one-hot checkpoint");
            }
            return std::make_unique<CwOneHotProblem>(std::get<OneHotModel>(model), x, target, confidence);
        case AttackKind::kLots:
            throw std::invalid_argument("lots runs through lots_attack, not the binary search");
    }
    throw std::invalid_argument("unknown attack kind");
}

double attack_gradient_fd_error(AttackProblem& problem, const Tensor& point, double lambda,
                                double h) {
    const AttackProblem::Eval base = problem.evaluate(point, lambda);
    double worst = 0.0;
    Tensor probe = point;
    for (std::size_t i = 0; i < point.size(); ++i) {
        const double saved = probe[i];
        probe[i] = saved + h;
        const double fp = problem.evaluate(probe, lambda).objective;
        probe[i] = saved - h;
        const double fm = problem.evaluate(probe, lambda).objective;
        probe[i] = saved;
        const double g_fd = (fp - fm) / (2.0 * h);
        const double g_ad = base.gradient[i];
        const double denom = std::max(1e-12, std::abs(g_ad) + std::abs(g_fd));
        worst = std::max(worst, std::abs(g_ad - g_fd) / denom);
    }
    return worst;
}

// ---- Algorithm 1 ----------------------------------------------------------------

AttackResult run_binary_search(AttackProblem& problem, const AttackConfig& config) {
    config.validate();
    const double inf = std::numeric_limits<double>::infinity();
    double upper = inf;
    double lower = 0.0;
    double lambda = config.lambda_start;

    AttackResult result;
    double best_norm = inf;
    bool have_best = false;
    Tensor last_delta;

    for (int round = 1; round <= config.binary_search_steps; ++round) {
        Tensor point = problem.initial_point();
        bool found = false;
        bool aborted = false;
        for (int j = 1; j <= config.max_iterations; ++j) {
            const AttackProblem::Eval e = problem.evaluate(point, lambda);
            ++result.iterations_used;
            if (!std::isfinite(e.objective)) {
                aborted = true;  // poisoned round: mark it not found
                break;
            }
            if (e.adversarial) {
                Tensor delta = problem.delta_of(point);
                const double norm = l2_norm_of(delta);
                if (norm < best_norm) {
                    best_norm = norm;
                    result.delta = std::move(delta);
                    have_best = true;
                }
                found = true;
            }
            const double g_norm = l2_norm_of(e.gradient);
            if (g_norm == 0.0) continue;  // degenerate gradient: skip the step
            Tensor unit = e.gradient;
            for (double& v : unit.values()) v /= g_norm;
            point = problem.step(point, unit, config.step_size);
        }
        last_delta = problem.delta_of(point);

        const bool round_found = found && !aborted;
        if (round_found) {
            upper = lambda;
        } else {
            lower = lambda;
        }
        result.rounds.push_back({lambda, round_found, upper, lower});
        result.final_lambda = lambda;
        lambda = (upper == inf) ? 10.0 * lambda : (upper + lower) / 2.0;
    }

    result.success = have_best;
    if (!have_best) result.delta = std::move(last_delta);
    result.l2_norm = l2_norm_of(result.delta);
    result.psnr = psnr_of_delta(result.delta);
    return result;
}

namespace {

void fill_probabilities(AttackResult& result, const Model& model, const Tensor& x,
                        const Tensor& x_adv, int target, int true_class) {
    const Tensor before = predicted_probabilities(model, x);
    const Tensor after = predicted_probabilities(model, x_adv);
    result.prob_target_before = before[static_cast<std::size_t>(target)];
    result.prob_target_after = after[static_cast<std::size_t>(target)];
    if (true_class >= 0) {
        result.prob_true_before = before[static_cast<std::size_t>(true_class)];
        result.prob_true_after = after[static_cast<std::size_t>(true_class)];
    }
}

Tensor apply_delta(const Tensor& x, const Tensor& delta) {
    Tensor x_adv = x;
    for (std::size_t i = 0; i < x.size(); ++i) x_adv[i] += delta[i];
    return x_adv;
}

}  // namespace

AttackResult binary_search_attack(const Model& model, const Tensor& x, int target,
                                  const AttackConfig& config, int true_class) {
    auto problem = make_attack_problem(model, x, target, config.confidence, config.kind);
    AttackResult result = run_binary_search(*problem, config);
    result.target_class = target;
    if (config.kind == AttackKind::kProposed || config.kind == AttackKind::kCwEcoc) {
        const auto& m = std::get<EcocEnsemble>(model);
        result.target_codeword.assign(m.codewords.row(target),
                                      m.codewords.row(target) + m.codewords.code_length);
    }
    fill_probabilities(result, model, x, apply_delta(x, result.delta), target, true_class);
    return result;
}

AttackResult lots_attack(const Model& model, const Tensor& x,
                         const std::vector<Tensor>& target_pool, int target,
                         const AttackConfig& config, int true_class) {
    config.validate();
    if (target_pool.empty()) throw std::invalid_argument("lots_attack: empty target pool");

    // target representation: elementwise mean of the pool's logits
    Tensor z_target;
    for (const Tensor& img : target_pool) {
        Tensor z = std::visit([&](const auto& m) { return logits(m, img); }, model);
        if (z_target.size() == 0) {
            z_target = std::move(z);
        } else {
            for (std::size_t i = 0; i < z_target.size(); ++i) z_target[i] += z[i];
        }
    }
    for (double& v : z_target.values()) v /= static_cast<double>(target_pool.size());

    AttackResult result;
    result.target_class = target;
    result.lots_pool_size = static_cast<int>(target_pool.size());

    Tensor delta = Tensor::zeros_like(x);
    std::vector<double> losses;
    Tape tape;
    for (int j = 0; j < config.max_iterations; ++j) {
        tape.reset();
        const Var d = tape.leaf(delta, true);
        const Var x_adv = tape.add(tape.constant(x), d);
        const Var z = std::visit(
            [&](const auto& m) { return logits_on_tape(tape, m, x_adv); }, model);
        const Var diff = tape.sub(z, tape.constant(z_target));
        const Var loss = tape.scale(tape.inner_product(diff, diff), 0.5);
        const double lv = tape.value(loss).item();
        if (!std::isfinite(lv) || lv <= 0.0) break;  // exact match: zero loss, zero steps
        if (losses.size() >= 10) {
            double mean10 = 0.0;
            for (std::size_t k = losses.size() - 10; k < losses.size(); ++k) mean10 += losses[k];
            mean10 /= 10.0;
            if (std::abs(lv - mean10) <= 1e-4 * mean10) break;  // converged
        }
        losses.push_back(lv);
        tape.backward(loss);
        const Tensor& g = tape.grad(d);
        for (std::size_t i = 0; i < delta.size(); ++i) {
            delta[i] = std::clamp(delta[i] - config.step_size * g[i], -x[i], 1.0 - x[i]);
        }
        ++result.iterations_used;
    }

    result.delta = std::move(delta);
    const Tensor x_adv = apply_delta(x, result.delta);
    result.success = predict(model, x_adv) == target;
    result.l2_norm = l2_norm_of(result.delta);
    result.psnr = psnr_of_delta(result.delta);
    fill_probabilities(result, model, x, x_adv, target, true_class);
    return result;
}

// ---- campaign -------------------------------------------------------------------

namespace {

int model_class_count(const Model& model) {
    if (std::holds_alternative<EcocEnsemble>(model)) return std::get<EcocEnsemble>(model).class_count();
    return std::get<OneHotModel>(model).class_count;
}

int resolve_workers(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("ECOC_WORKERS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t h = seed ^ (0x9e3779b97f4a7c15ull + salt * 0xbf58476d1ce4e5b9ull);
    h ^= h >> 31;
    h *= 0x94d049bb133111ebull;
    h ^= h >> 29;
    return h;
}

}  // namespace

std::vector<ResultRow> run_campaign(const Model& model, const Dataset& dataset,
                                    const CampaignSpec& spec) {
    spec.config.validate();
    Dataset attack_set;
    if (spec.image_ids.empty()) {
        attack_set = sample_n(dataset, spec.image_count, spec.seed);
    } else {
        attack_set.image_shape = dataset.image_shape;
        attack_set.class_count = dataset.class_count;
        for (std::size_t id : spec.image_ids) {
            if (id >= dataset.count()) {
                throw std::invalid_argument("run_campaign: image id " + std::to_string(id) +
                                            " outside the dataset");
            }
            attack_set.append(dataset, id);
        }
    }
    if (attack_set.count() == 0) throw std::invalid_argument("run_campaign: no images to attack");
    const int classes = model_class_count(model);
    if (classes < 2) throw std::invalid_argument("run_campaign: model has fewer than 2 classes");
    for (int label : dataset.labels) {
        if (label < 0 || label >= classes) {
            throw std::invalid_argument("run_campaign: dataset label " + std::to_string(label) +
                                        " outside the model's " + std::to_string(classes) + " classes");
        }
    }

    if (spec.config.kind == AttackKind::kLots) {
        // every class can be drawn as a target; each needs pool images
        std::vector<bool> seen(static_cast<std::size_t>(classes), false);
        for (int label : dataset.labels) seen[static_cast<std::size_t>(label)] = true;
        for (int k = 0; k < classes; ++k) {
            if (!seen[static_cast<std::size_t>(k)]) {
                throw std::invalid_argument("run_campaign: class " + std::to_string(k) +
                                            " has no images for the lots target pool");
            }
        }
    }

    std::vector<ResultRow> rows(attack_set.count());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};

    auto work = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= attack_set.count() || failed.load()) return;
            Rng rng(mix_seed(spec.seed, i + 1));
            const Tensor x = attack_set.image(i);
            const int true_class = attack_set.labels[i];
            // uniform over the M-1 non-true classes
            int target = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes - 1)));
            if (target >= true_class) ++target;

            AttackResult res;
            if (spec.config.kind == AttackKind::kLots) {
                std::vector<std::size_t> pool_ids;
                for (std::size_t s = 0; s < dataset.count(); ++s) {
                    if (dataset.labels[s] == target) pool_ids.push_back(s);
                }
                rng.shuffle(pool_ids);
                const std::size_t take = std::min(spec.lots_pool_size, pool_ids.size());
                std::vector<Tensor> pool;
                pool.reserve(take);
                for (std::size_t s = 0; s < take; ++s) pool.push_back(dataset.image(pool_ids[s]));
                res = lots_attack(model, x, pool, target, spec.config, true_class);
            } else {
                res = binary_search_attack(model, x, target, spec.config, true_class);
            }

            ResultRow row;
            row.image_id = static_cast<std::int64_t>(i);
            row.true_class = true_class;
            row.target_class = target;
            row.attack = attack_kind_name(spec.config.kind);
            row.lambda_start = spec.config.lambda_start;
            row.binary_search_steps = spec.config.binary_search_steps;
            row.epsilon = spec.config.step_size;
            row.max_iterations = spec.config.max_iterations;
            row.confidence = spec.config.confidence;
            row.success = res.success;
            row.l2_norm = res.l2_norm;
            row.psnr = res.psnr;
            row.prob_true_before = res.prob_true_before;
            row.prob_true_after = res.prob_true_after;
            row.prob_target_before = res.prob_target_before;
            row.prob_target_after = res.prob_target_after;
            rows[i] = std::move(row);
        }
    };

    auto guarded = [&]() {
        try {
            work();
        } catch (...) {
            if (!failed.exchange(true)) failure = std::current_exception();
        }
    };

    const int workers = std::min<int>(resolve_workers(spec.workers),
                                      static_cast<int>(attack_set.count()));
    if (workers <= 1) {
        guarded();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) pool.emplace_back(guarded);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
    return rows;
}

}  // namespace ecoc
