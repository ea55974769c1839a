#include "ecoc/selftest.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <vector>

#include "ecoc/attacks.hpp"
#include "ecoc/codes.hpp"
#include "ecoc/grad_check.hpp"
#include "ecoc/util.hpp"

namespace ecoc {

namespace {

struct Check {
    std::ostream& out;
    int failures = 0;

    void report(const char* name, bool ok, const std::string& detail = "") {
        out << (ok ? "PASS" : "FAIL") << "  " << name;
        if (!detail.empty()) out << "  (" << detail << ")";
        out << "\n";
        if (!ok) ++failures;
    }
};

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

bool gradient_checks(Check& check) {
    Rng rng(20240817);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor w1 = random_tensor({5, 6}, rng);
        const Tensor b1 = random_tensor({5}, rng);
        const Tensor w2 = random_tensor({3, 5}, rng);
        const Tensor b2 = random_tensor({3}, rng);
        const ScalarFn net = [&](Tape& t, Var x) {
            const Var h = t.tanh(t.bias_add(t.matmul(t.constant(w1), x), t.constant(b1)));
            const Var z = t.bias_add(t.matmul(t.constant(w2), h), t.constant(b2));
            const Var p = t.softmax(z);
            return t.add(t.l2_norm(z), t.inner_product(p, z));
        };
        worst = std::max(worst, finite_difference_check(net, random_tensor({6}, rng), 1e-5));
    }
    check.report("gradient: random 2-layer nets vs central differences", worst < 1e-4,
                 "max rel err " + std::to_string(worst));
    return worst < 1e-4;
}

bool objective_gradient_checks(Check& check) {
    Rng rng(7011);
    Architecture arch;
    arch.bottom = BottomKind::kDense;
    arch.input_shape = {4};
    arch.bottom_hidden = 6;
    arch.branch_hidden = 5;
    arch.head_hidden = 5;

    EcocEnsemble ecoc = init_ecoc(arch, build_codeword_matrix(3, 4), rng);
    OneHotModel onehot = init_onehot(arch, 3, rng);
    const Model ecoc_model = ecoc;
    const Model onehot_model = onehot;

    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor x = random_tensor({4}, rng, 0.2, 0.8);
        const Tensor delta = random_tensor({4}, rng, -0.05, 0.05);
        for (AttackKind kind : {AttackKind::kProposed, AttackKind::kCwEcoc, AttackKind::kCwOneHot}) {
            const Model& model = kind == AttackKind::kCwOneHot ? onehot_model : ecoc_model;
            auto problem = make_attack_problem(model, x, 1, 0.0, kind);
            // probe away from delta = 0: the norm term is non-differentiable there
            Tensor point = kind == AttackKind::kCwOneHot ? problem->initial_point() : delta;
            if (kind == AttackKind::kCwOneHot) {
                for (double& v : point.values()) v += rng.uniform(-0.2, 0.2);
            }
            worst = std::max(worst, attack_gradient_fd_error(*problem, point, 0.5, 1e-6));
        }
    }
    check.report("gradient: attack objectives vs central differences", worst < 1e-4,
                 "max rel err " + std::to_string(worst));
    return worst < 1e-4;
}

bool hadamard_checks(Check& check) {
    const auto h = sylvester_hadamard(4);
    const int n = 16;
    bool gram_ok = true;
    for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
            long dot = 0;
            for (int c = 0; c < n; ++c) dot += static_cast<long>(h[a * n + c]) * h[b * n + c];
            if (dot != (a == b ? 16 : 0)) gram_ok = false;
        }
    }
    check.report("codes: H(4) * H(4)^T == 16 I exactly", gram_ok);

    const CodewordMatrix codes = build_codeword_matrix(10, 16);
    const int dist = min_hamming_distance(codes);
    check.report("codes: build_codeword_matrix(10,16) min Hamming distance == 8", dist == 8,
                 "got " + std::to_string(dist));
    return gram_ok && dist == 8;
}

bool probability_map_checks(Check& check) {
    // codeword-exact activations give probability 1
    const CodewordMatrix codes = build_codeword_matrix(10, 16);
    bool exact_ok = true;
    for (int k = 0; k < codes.class_count; ++k) {
        Tensor s({16});
        for (int i = 0; i < 16; ++i) s[static_cast<std::size_t>(i)] = static_cast<double>(codes.at(k, i));
        const ClassProbabilities p = class_probabilities(correlations_from_activations(s, codes));
        if (std::abs(p.probs[static_cast<std::size_t>(k)] - 1.0) > 1e-9) exact_ok = false;
    }
    check.report("probability map: codeword-exact activation gives p == 1", exact_ok);

    // with C = I_M and an exp activation the map reduces to the softmax
    Rng rng(5150);
    const CodewordMatrix identity = one_hot_matrix(7);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        Tensor z({7});
        for (double& v : z.values()) v = rng.uniform(-6.0, 6.0);
        Tensor act = z;
        for (double& v : act.values()) v = std::exp(v);
        const ClassProbabilities p = class_probabilities(correlations_from_activations(act, identity));
        const Tensor soft = softmax_probabilities(z);
        for (std::size_t i = 0; i < 7; ++i) worst = std::max(worst, std::abs(p.probs[i] - soft[i]));
    }
    check.report("probability map: identity code + exp activation matches softmax", worst < 1e-12,
                 "max abs diff " + std::to_string(worst));
    return exact_ok && worst < 1e-12;
}

// fixed-outcome problem for tracing the binary search bounds
class StubProblem final : public AttackProblem {
public:
    explicit StubProblem(bool always_adversarial) : always_(always_adversarial) {}

    Tensor initial_point() const override { return Tensor({2}); }
    Tensor delta_of(const Tensor& point) const override { return point; }
    Tensor step(const Tensor& point, const Tensor& unit, double eps) const override {
        Tensor next = point;
        for (std::size_t i = 0; i < next.size(); ++i) next[i] -= eps * unit[i];
        return next;
    }
    Eval evaluate(const Tensor&, double) override {
        Eval e;
        e.objective = 1.0;
        e.gradient = Tensor({2}, {1.0, 0.0});
        e.adversarial = always_;
        return e;
    }

private:
    bool always_;
};

bool lambda_trace_checks(Check& check) {
    AttackConfig config;
    config.lambda_start = 1e-3;
    config.binary_search_steps = 4;
    config.max_iterations = 5;
    config.step_size = 0.1;

    StubProblem never(false);
    const AttackResult r1 = run_binary_search(never, config);
    bool never_ok = !r1.success && r1.rounds.size() == 4;
    for (std::size_t i = 0; never_ok && i < 4; ++i) {
        const double want = 1e-3 * std::pow(10.0, static_cast<double>(i));
        if (r1.rounds[i].lambda != want || r1.rounds[i].found) never_ok = false;
    }
    check.report("algorithm: never-adversarial stub walks lambda x10 per round", never_ok);

    StubProblem always(true);
    const AttackResult r2 = run_binary_search(always, config);
    bool always_ok = r2.success && r2.l2_norm == 0.0 && r2.rounds.size() == 4;
    for (std::size_t i = 0; always_ok && i < 4; ++i) {
        const double want = 1e-3 / std::pow(2.0, static_cast<double>(i));
        if (r2.rounds[i].lambda != want || !r2.rounds[i].found) always_ok = false;
    }
    check.report("algorithm: always-adversarial stub bisects the upper bound", always_ok);
    return never_ok && always_ok;
}

bool grid_oracle_checks(Check& check) {
    AttackConfig config;
    config.kind = AttackKind::kProposed;
    config.lambda_start = 1e-3;
    config.binary_search_steps = 12;
    config.max_iterations = 1200;
    config.step_size = 0.005;

    bool ok = true;
    std::string detail;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const TinyLinearInstance inst = make_tiny_linear_instance(seed);
        const GridOracleOutcome oracle = grid_search_min_delta(inst.model, inst.x, inst.target, 0.0, 0.005);
        const AttackResult attack = binary_search_attack(inst.model, inst.x, inst.target, config);
        if (attack.success != oracle.feasible) {
            ok = false;
            detail = "feasibility disagrees at seed " + std::to_string(seed);
            break;
        }
        if (oracle.feasible && attack.l2_norm > 1.10 * oracle.best_norm + 1e-9) {
            ok = false;
            detail = "seed " + std::to_string(seed) + ": attack " + std::to_string(attack.l2_norm) +
                     " vs grid " + std::to_string(oracle.best_norm);
            break;
        }
    }
    check.report("oracle: binary search within 10% of exhaustive grid minimum", ok, detail);
    return ok;
}

}  // namespace

TinyLinearInstance make_tiny_linear_instance(std::uint64_t seed) {
    Architecture arch;
    arch.bottom = BottomKind::kNone;
    arch.input_shape = {2};
    arch.branch_hidden = 0;

    Rng rng(0xec0cull ^ (seed * 0x9e3779b97f4a7c15ull));
    TinyLinearInstance inst;
    inst.model.arch = arch;
    inst.model.codewords = build_codeword_matrix(2, 2);
    inst.model.branches.resize(2);
    for (auto& branch : inst.model.branches) {
        branch.push_back(random_tensor({1, 2}, rng, -2.0, 2.0));
        branch.push_back(random_tensor({1}, rng, -0.5, 0.5));
    }
    inst.x = random_tensor({2}, rng, 0.2, 0.8);
    inst.target = 1 - predict(inst.model, inst.x);
    return inst;
}

GridOracleOutcome grid_search_min_delta(const EcocEnsemble& linear_model, const Tensor& x,
                                        int target, double confidence, double grid_step) {
    if (linear_model.arch.bottom != BottomKind::kNone || linear_model.arch.branch_hidden != 0 ||
        x.size() != 2) {
        throw std::invalid_argument("grid_search_min_delta: needs the 2-input linear ensemble");
    }
    const CodewordMatrix& codes = linear_model.codewords;
    const int n_bits = codes.code_length;
    const int classes = codes.class_count;

    GridOracleOutcome out;
    out.best_norm = std::numeric_limits<double>::infinity();
    const long steps = static_cast<long>(std::llround(2.0 / grid_step));
    for (long a = 0; a <= steps; ++a) {
        const double d0 = -1.0 + grid_step * static_cast<double>(a);
        const double p0 = x[0] + d0;
        if (p0 < 0.0 || p0 > 1.0) continue;
        for (long b = 0; b <= steps; ++b) {
            const double d1 = -1.0 + grid_step * static_cast<double>(b);
            const double p1 = x[1] + d1;
            if (p1 < 0.0 || p1 > 1.0) continue;

            // recompute everything from the raw weights
            std::vector<double> z(static_cast<std::size_t>(n_bits));
            double min_margin = std::numeric_limits<double>::infinity();
            for (int i = 0; i < n_bits; ++i) {
                const Tensor& w = linear_model.branches[static_cast<std::size_t>(i)][0];
                const Tensor& bias = linear_model.branches[static_cast<std::size_t>(i)][1];
                z[static_cast<std::size_t>(i)] = w[0] * p0 + w[1] * p1 + bias[0];
                min_margin = std::min(min_margin, 2.0 * static_cast<double>(codes.at(target, i)) *
                                                      z[static_cast<std::size_t>(i)]);
            }
            if (min_margin < confidence) continue;
            // argmax of rho decides both the normalized and the degenerate case
            double best_rho = -std::numeric_limits<double>::infinity();
            int pred = 0;
            for (int k = 0; k < classes; ++k) {
                double rho = 0.0;
                for (int i = 0; i < n_bits; ++i) {
                    rho += std::tanh(z[static_cast<std::size_t>(i)]) * static_cast<double>(codes.at(k, i));
                }
                if (rho > best_rho) {
                    best_rho = rho;
                    pred = k;
                }
            }
            if (pred != target) continue;

            const double norm = std::sqrt(d0 * d0 + d1 * d1);
            if (norm < out.best_norm) {
                out.best_norm = norm;
                out.feasible = true;
            }
        }
    }
    if (!out.feasible) out.best_norm = 0.0;
    return out;
}

int run_selftest(std::ostream& out) {
    Check check{out};
    gradient_checks(check);
    objective_gradient_checks(check);
    hadamard_checks(check);
    probability_map_checks(check);
    lambda_trace_checks(check);
    grid_oracle_checks(check);
    out << (check.failures == 0 ? "selftest: all checks passed" : "selftest: FAILURES") << "\n";
    return check.failures;
}

}  // namespace ecoc
