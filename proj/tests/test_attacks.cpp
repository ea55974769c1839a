#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <stdexcept>

#include "ecoc/attacks.hpp"
#include "ecoc/selftest.hpp"
#include "ecoc/training.hpp"
#include "ecoc/util.hpp"

using namespace ecoc;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

// ensemble whose logits are constant: zero weights, chosen output biases
EcocEnsemble constant_logit_ecoc(const std::vector<double>& z, int classes) {
    Architecture arch;
    arch.bottom = BottomKind::kNone;
    arch.input_shape = {2};
    arch.branch_hidden = 0;
    EcocEnsemble model;
    model.arch = arch;
    model.codewords = build_codeword_matrix(classes, static_cast<int>(z.size()));
    for (double bias : z) {
        std::vector<Tensor> branch;
        branch.push_back(Tensor({1, 2}));
        branch.push_back(Tensor({1}, {bias}));
        model.branches.push_back(std::move(branch));
    }
    return model;
}

OneHotModel constant_logit_onehot(const std::vector<double>& z) {
    Architecture arch;
    arch.bottom = BottomKind::kNone;
    arch.input_shape = {2};
    arch.head_hidden = 0;
    OneHotModel model;
    model.arch = arch;
    model.class_count = static_cast<int>(z.size());
    model.head.push_back(Tensor({z.size(), 2}));
    model.head.push_back(Tensor({z.size()}, std::vector<double>(z)));
    return model;
}

EcocEnsemble random_dense_ecoc(std::uint64_t seed, int classes, int bits, std::size_t dims) {
    Architecture arch;
    arch.bottom = BottomKind::kDense;
    arch.input_shape = {dims};
    arch.bottom_hidden = 6;
    arch.branch_hidden = 5;
    Rng rng(seed);
    return init_ecoc(arch, build_codeword_matrix(classes, bits), rng);
}

OneHotModel random_dense_onehot(std::uint64_t seed, int classes, std::size_t dims) {
    Architecture arch;
    arch.bottom = BottomKind::kDense;
    arch.input_shape = {dims};
    arch.bottom_hidden = 6;
    arch.head_hidden = 5;
    Rng rng(seed);
    return init_onehot(arch, classes, rng);
}

const Tensor kX2 = Tensor({2}, {0.4, 0.6});

}  // namespace

TEST_CASE("cw one-hot objective values") {
    // delta = 0, z = (1, 0), t = 0, c = 0  ->  lambda * max(0 - 1, 0) = 0
    const OneHotModel m10 = constant_logit_onehot({1.0, 0.0});
    CHECK(cw_onehot_objective(m10, kX2, Tensor({2}), 0, 3.0, 0.0) == doctest::Approx(0.0));

    // z_t ahead of everything by more than |c|: the max clamps at c
    const OneHotModel ahead = constant_logit_onehot({5.0, -1.0, 0.0});
    CHECK(cw_onehot_objective(ahead, kX2, Tensor({2}), 0, 2.0, 1.5) == doctest::Approx(2.0 * 1.5));
    CHECK(cw_onehot_objective(ahead, kX2, Tensor({2}), 0, 2.0, -1.5) == doctest::Approx(-2.0 * 1.5));

    // losing target: term = max_{i != 0} z_i - z_0 = 6
    const OneHotModel losing = constant_logit_onehot({-1.0, 5.0});
    CHECK(cw_onehot_objective(losing, kX2, Tensor({2}), 0, 2.0, 0.0) == doctest::Approx(12.0));
}

TEST_CASE("cw ecoc objective values") {
    // saturated logits matching codeword 0: the penalty clamps at c
    const CodewordMatrix codes = build_codeword_matrix(4, 8);
    std::vector<double> z(8);
    for (int i = 0; i < 8; ++i) z[static_cast<std::size_t>(i)] = 25.0 * static_cast<double>(codes.at(0, i));
    const EcocEnsemble model = constant_logit_ecoc(z, 4);
    CHECK(cw_ecoc_objective(model, kX2, Tensor({2}), 0, 4.0, 0.0) == doctest::Approx(0.0));
    CHECK(cw_ecoc_objective(model, kX2, Tensor({2}), 0, 4.0, 2.5) == doctest::Approx(10.0));

    // value recomputed from raw logits on random models
    Rng rng(88);
    for (int trial = 0; trial < 25; ++trial) {
        const EcocEnsemble rand_model = random_dense_ecoc(1000 + static_cast<std::uint64_t>(trial), 4, 8, 3);
        const Tensor x = random_tensor({3}, rng, 0.0, 1.0);
        const Tensor delta = random_tensor({3}, rng, -0.1, 0.1);
        const int t = static_cast<int>(rng.below(4));
        const double c = rng.uniform(-1.0, 1.0);
        const double lambda = rng.uniform(0.1, 2.0);

        Tensor x_adv = x;
        for (std::size_t i = 0; i < 3; ++i) x_adv[i] += delta[i];
        const Tensor zv = logits(rand_model, x_adv);
        const Tensor rho = correlations(zv, rand_model.codewords);
        double runner_up = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < rho.size(); ++k) {
            if (static_cast<int>(k) != t) runner_up = std::max(runner_up, rho[k]);
        }
        const double want =
            l2_norm_of(delta) + lambda * std::max(runner_up - rho[static_cast<std::size_t>(t)], c);
        CHECK(cw_ecoc_objective(rand_model, x, delta, t, lambda, c) ==
              doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("proposed objective values") {
    // margins: 2*t_i*z_i with codewords (1,1) / (1,-1)
    const EcocEnsemble model = constant_logit_ecoc({-5.0, 3.0}, 2);
    // t = 0: margins (-10, 6); min(-10, c=0) = -10 -> 0 + 10*lambda
    CHECK(proposed_objective(model, kX2, Tensor({2}), 0, 1.0, 0.0) == doctest::Approx(10.0));
    CHECK(proposed_objective(model, kX2, Tensor({2}), 0, 2.5, 0.0) == doctest::Approx(25.0));

    // all margins above c: the min clamps at c, objective = ||delta|| - lambda*c
    const EcocEnsemble winning = constant_logit_ecoc({4.0, 4.0}, 2);
    const Tensor delta({2}, {0.3, -0.4});
    CHECK(proposed_objective(winning, kX2, delta, 0, 2.0, 1.0) == doctest::Approx(0.5 - 2.0));
}

TEST_CASE("objective gradients match finite differences") {
    Rng rng(17);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const Model ecoc_model = random_dense_ecoc(300 + static_cast<std::uint64_t>(trial), 4, 8, 4);
        const Model onehot_model = random_dense_onehot(400 + static_cast<std::uint64_t>(trial), 4, 4);
        const Tensor x = random_tensor({4}, rng, 0.2, 0.8);
        const Tensor delta = random_tensor({4}, rng, -0.05, 0.05);
        const int t = static_cast<int>(rng.below(4));
        const double lambda = rng.uniform(0.1, 2.0);

        for (AttackKind kind : {AttackKind::kProposed, AttackKind::kCwEcoc, AttackKind::kCwOneHot}) {
            const Model& model = kind == AttackKind::kCwOneHot ? onehot_model : ecoc_model;
            auto problem = make_attack_problem(model, x, t, 0.0, kind);
            // probe away from delta = 0: the norm term is non-differentiable there
            Tensor point = kind == AttackKind::kCwOneHot ? problem->initial_point() : delta;
            if (kind == AttackKind::kCwOneHot) {
                for (double& v : point.values()) v += rng.uniform(-0.2, 0.2);
            }
            worst = std::max(worst, attack_gradient_fd_error(*problem, point, lambda, 1e-6));
        }
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("proposed objective routes gradient through the arg-min bit only") {
    // linear branches: d obj / d delta = -lambda * 2 * t_j * w_j at delta = 0
    Rng rng(54);
    for (int trial = 0; trial < 10; ++trial) {
        const TinyLinearInstance inst = make_tiny_linear_instance(900 + static_cast<std::uint64_t>(trial));
        const Model model = inst.model;
        // a huge c keeps the min() clamp inactive so the bit path always wins
        auto problem = make_attack_problem(model, inst.x, inst.target, 100.0, AttackKind::kProposed);
        const auto eval = problem->evaluate(Tensor({2}), 2.0);

        // per-bit oracle: margins from raw weights, first attaining minimum
        const auto& codes = inst.model.codewords;
        double z[2], margin[2];
        for (int i = 0; i < 2; ++i) {
            const Tensor& w = inst.model.branches[static_cast<std::size_t>(i)][0];
            const Tensor& b = inst.model.branches[static_cast<std::size_t>(i)][1];
            z[i] = w[0] * inst.x[0] + w[1] * inst.x[1] + b[0];
            margin[i] = 2.0 * static_cast<double>(codes.at(inst.target, i)) * z[i];
        }
        const int j = margin[0] <= margin[1] ? 0 : 1;
        const Tensor& wj = inst.model.branches[static_cast<std::size_t>(j)][0];
        for (std::size_t d = 0; d < 2; ++d) {
            const double want = -2.0 * 2.0 * static_cast<double>(codes.at(inst.target, j)) * wj[d];
            CHECK(eval.gradient[d] == doctest::Approx(want).epsilon(1e-12));
        }
    }
    (void)rng;
}

TEST_CASE("is_adversarial boundary and monotonicity") {
    // proposed: margins (2*1*1, 2*1*0.5) with codeword (1,1); min = 1
    const EcocEnsemble model = constant_logit_ecoc({1.0, 0.5}, 2);
    const Model m = model;
    CHECK(predict(m, kX2) == 0);
    CHECK(is_adversarial(m, kX2, 0, 1.0, AttackKind::kProposed));       // margin exactly c
    CHECK_FALSE(is_adversarial(m, kX2, 0, 1.0001, AttackKind::kProposed));
    CHECK_FALSE(is_adversarial(m, kX2, 1, -100.0, AttackKind::kProposed));  // prediction != t

    bool prev = true;
    for (double c = -2.0; c <= 2.0; c += 0.125) {
        const bool now = is_adversarial(m, kX2, 0, c, AttackKind::kProposed);
        CHECK((prev || !now));  // increasing c never turns false into true
        prev = now;
    }

    // cw-onehot margin: z = (1, 0), margin of class 0 is 1
    const Model onehot = constant_logit_onehot({1.0, 0.0});
    CHECK(is_adversarial(onehot, kX2, 0, 1.0, AttackKind::kCwOneHot));
    CHECK_FALSE(is_adversarial(onehot, kX2, 0, 1.5, AttackKind::kCwOneHot));
    CHECK_FALSE(is_adversarial(onehot, kX2, 1, 0.0, AttackKind::kCwOneHot));

    // lots only asks for the prediction
    CHECK(is_adversarial(onehot, kX2, 0, 99.0, AttackKind::kLots));
}

namespace {

class StubProblem final : public AttackProblem {
public:
    explicit StubProblem(bool always) : always_(always) {}
    Tensor initial_point() const override { return Tensor({2}); }
    Tensor delta_of(const Tensor& p) const override { return p; }
    Tensor step(const Tensor& p, const Tensor& u, double eps) const override {
        Tensor next = p;
        for (std::size_t i = 0; i < next.size(); ++i) next[i] -= eps * u[i];
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

}  // namespace

TEST_CASE("lambda trace: never-adversarial stub multiplies by 10") {
    AttackConfig config;
    config.lambda_start = 1e-3;
    config.binary_search_steps = 4;
    config.max_iterations = 3;
    StubProblem stub(false);
    const AttackResult r = run_binary_search(stub, config);
    REQUIRE(r.rounds.size() == 4);
    CHECK(r.rounds[0].lambda == 1e-3);
    CHECK(r.rounds[1].lambda == 1e-2);
    CHECK(r.rounds[2].lambda == 1e-1);
    CHECK(r.rounds[3].lambda == 1.0);
    CHECK_FALSE(r.success);
    CHECK(r.iterations_used == 12);
    for (const RoundTrace& round : r.rounds) {
        CHECK_FALSE(round.found);
        CHECK(round.upper_bound == std::numeric_limits<double>::infinity());
        CHECK(round.lower_bound == round.lambda);
    }
}

TEST_CASE("lambda trace: always-adversarial stub bisects against zero") {
    AttackConfig config;
    config.lambda_start = 0.8;
    config.binary_search_steps = 5;
    config.max_iterations = 3;
    StubProblem stub(true);
    const AttackResult r = run_binary_search(stub, config);
    REQUIRE(r.rounds.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(r.rounds[i].lambda == 0.8 / std::pow(2.0, static_cast<double>(i)));
        CHECK(r.rounds[i].found);
        CHECK(r.rounds[i].upper_bound == r.rounds[i].lambda);
        CHECK(r.rounds[i].lower_bound == 0.0);
    }
    CHECK(r.success);
    CHECK(r.l2_norm == 0.0);  // delta = 0 was adversarial at the first check
}

TEST_CASE("immediate success when the model already predicts the target") {
    const EcocEnsemble model = constant_logit_ecoc({2.0, 2.0}, 2);  // predicts class 0 with margin 4
    AttackConfig config;
    config.kind = AttackKind::kProposed;
    config.binary_search_steps = 2;
    config.max_iterations = 5;
    const AttackResult r = binary_search_attack(Model(model), kX2, 0, config);
    CHECK(r.success);
    CHECK(r.l2_norm == 0.0);
    CHECK(r.psnr == std::numeric_limits<double>::infinity());
    CHECK(r.target_codeword == std::vector<std::int8_t>{1, 1});
}

TEST_CASE("non-finite objective aborts the round and marks it not found") {
    class PoisonProblem final : public AttackProblem {
    public:
        Tensor initial_point() const override { return Tensor({1}); }
        Tensor delta_of(const Tensor& p) const override { return p; }
        Tensor step(const Tensor& p, const Tensor&, double) const override { return p; }
        Eval evaluate(const Tensor&, double) override {
            Eval e;
            e.objective = std::numeric_limits<double>::quiet_NaN();
            e.adversarial = true;  // must be ignored: the round aborts first
            e.gradient = Tensor({1}, {1.0});
            return e;
        }
    };
    AttackConfig config;
    config.binary_search_steps = 3;
    config.max_iterations = 10;
    PoisonProblem poison;
    const AttackResult r = run_binary_search(poison, config);
    CHECK_FALSE(r.success);
    CHECK(r.iterations_used == 3);  // one evaluation per round, then abort
    for (const RoundTrace& round : r.rounds) CHECK_FALSE(round.found);
}

TEST_CASE("zero gradient skips the step but counts the iteration") {
    class FlatProblem final : public AttackProblem {
    public:
        Tensor initial_point() const override { return Tensor({1}); }
        Tensor delta_of(const Tensor& p) const override { return p; }
        Tensor step(const Tensor& p, const Tensor& u, double eps) const override {
            Tensor next = p;
            next[0] -= eps * u[0];
            return next;
        }
        Eval evaluate(const Tensor& p, double) override {
            Eval e;
            e.objective = 1.0;
            e.gradient = Tensor({1});  // identically zero
            e.adversarial = false;
            last_point = p[0];
            return e;
        }
        double last_point = -1.0;
    };
    AttackConfig config;
    config.binary_search_steps = 1;
    config.max_iterations = 7;
    FlatProblem flat;
    const AttackResult r = run_binary_search(flat, config);
    CHECK(r.iterations_used == 7);
    CHECK(flat.last_point == 0.0);  // never moved
}

TEST_CASE("binary search against the exhaustive grid oracle") {
    AttackConfig config;
    config.kind = AttackKind::kProposed;
    config.lambda_start = 1e-3;
    config.binary_search_steps = 12;
    config.max_iterations = 1200;
    config.step_size = 0.005;

    for (std::uint64_t seed = 11; seed <= 15; ++seed) {
        const TinyLinearInstance inst = make_tiny_linear_instance(seed);
        const GridOracleOutcome oracle = grid_search_min_delta(inst.model, inst.x, inst.target, 0.0, 0.005);
        const AttackResult attack = binary_search_attack(Model(inst.model), inst.x, inst.target, config);
        REQUIRE(attack.success == oracle.feasible);
        if (oracle.feasible) {
            CHECK(attack.l2_norm <= 1.10 * oracle.best_norm + 1e-9);
        }
    }
}

TEST_CASE("returned perturbations keep x + delta inside the pixel box") {
    Rng rng(23);
    AttackConfig config;
    config.binary_search_steps = 3;
    config.max_iterations = 60;
    config.step_size = 0.05;

    for (int trial = 0; trial < 6; ++trial) {
        const Model ecoc_model = random_dense_ecoc(600 + static_cast<std::uint64_t>(trial), 4, 8, 3);
        const Model onehot_model = random_dense_onehot(700 + static_cast<std::uint64_t>(trial), 4, 3);
        const Tensor x = random_tensor({3}, rng, 0.0, 1.0);
        for (AttackKind kind : {AttackKind::kProposed, AttackKind::kCwEcoc, AttackKind::kCwOneHot}) {
            config.kind = kind;
            const Model& model = kind == AttackKind::kCwOneHot ? onehot_model : ecoc_model;
            const AttackResult r = binary_search_attack(model, x, 2, config);
            for (std::size_t i = 0; i < x.size(); ++i) {
                CHECK(x[i] + r.delta[i] >= -1e-12);
                CHECK(x[i] + r.delta[i] <= 1.0 + 1e-12);
            }
        }
    }
}

TEST_CASE("attacks are bit-identical across runs") {
    const Model model = random_dense_ecoc(5005, 4, 8, 3);
    Rng rng(31);
    const Tensor x = random_tensor({3}, rng, 0.1, 0.9);
    AttackConfig config;
    config.kind = AttackKind::kProposed;
    config.binary_search_steps = 4;
    config.max_iterations = 80;
    const AttackResult a = binary_search_attack(model, x, 1, config);
    const AttackResult b = binary_search_attack(model, x, 1, config);
    CHECK(a.success == b.success);
    CHECK(std::memcmp(a.delta.data(), b.delta.data(), a.delta.size() * sizeof(double)) == 0);
    CHECK(a.final_lambda == b.final_lambda);
}

TEST_CASE("raising n or m never worsens the best perturbation") {
    AttackConfig base;
    base.kind = AttackKind::kProposed;
    base.lambda_start = 1e-3;
    base.step_size = 0.01;

    for (std::uint64_t seed = 41; seed <= 44; ++seed) {
        const TinyLinearInstance inst = make_tiny_linear_instance(seed);
        const Model model = inst.model;

        double prev = std::numeric_limits<double>::infinity();
        for (int n : {2, 4, 8}) {
            AttackConfig config = base;
            config.binary_search_steps = n;
            config.max_iterations = 150;
            const AttackResult r = binary_search_attack(model, inst.x, inst.target, config);
            if (r.success) {
                CHECK(r.l2_norm <= prev + 1e-12);
                prev = r.l2_norm;
            }
        }

        prev = std::numeric_limits<double>::infinity();
        for (int m : {50, 100, 200}) {
            AttackConfig config = base;
            config.binary_search_steps = 1;  // single round keeps candidates strictly nested
            config.max_iterations = m;
            const AttackResult r = binary_search_attack(model, inst.x, inst.target, config);
            if (r.success) {
                CHECK(r.l2_norm <= prev + 1e-12);
                prev = r.l2_norm;
            }
        }
    }
}

TEST_CASE("every returned success re-checks as adversarial") {
    Rng rng(67);
    AttackConfig config;
    config.binary_search_steps = 6;
    config.max_iterations = 300;
    config.step_size = 0.02;
    config.confidence = 0.5;

    int successes = 0;
    for (int trial = 0; trial < 8; ++trial) {
        const Model model = random_dense_ecoc(800 + static_cast<std::uint64_t>(trial), 4, 8, 3);
        const Tensor x = random_tensor({3}, rng, 0.1, 0.9);
        for (AttackKind kind : {AttackKind::kProposed, AttackKind::kCwEcoc}) {
            config.kind = kind;
            const AttackResult r = binary_search_attack(model, x, 1, config);
            if (r.success) {
                ++successes;
                Tensor x_adv = x;
                for (std::size_t i = 0; i < x.size(); ++i) x_adv[i] += r.delta[i];
                CHECK(is_adversarial(model, x_adv, 1, config.confidence, kind));
            }
        }
    }
    CHECK(successes > 0);  // the re-check must actually run
}

TEST_CASE("attack problems refuse mismatched model kinds") {
    const Model ecoc_model = random_dense_ecoc(1, 4, 8, 3);
    const Model onehot_model = random_dense_onehot(2, 4, 3);
    const Tensor x({3}, {0.5, 0.5, 0.5});
    CHECK_THROWS_AS(make_attack_problem(onehot_model, x, 0, 0.0, AttackKind::kProposed),
                    std::invalid_argument);
    CHECK_THROWS_AS(make_attack_problem(onehot_model, x, 0, 0.0, AttackKind::kCwEcoc),
                    std::invalid_argument);
    CHECK_THROWS_AS(make_attack_problem(ecoc_model, x, 0, 0.0, AttackKind::kCwOneHot),
                    std::invalid_argument);
    CHECK_THROWS_AS(make_attack_problem(ecoc_model, x, 0, 0.0, AttackKind::kLots),
                    std::invalid_argument);
}

// ---- LOTS ----------------------------------------------------------------------

TEST_CASE("lots stops immediately when the representation already matches") {
    const Model model = random_dense_ecoc(911, 4, 8, 3);
    Rng rng(12);
    const Tensor x = random_tensor({3}, rng, 0.1, 0.9);
    AttackConfig config;
    config.kind = AttackKind::kLots;
    config.max_iterations = 100;
    // pool = the image itself, so z_target == z(x) and the loss starts at zero
    const AttackResult r = lots_attack(model, x, {x}, predict(model, x), config);
    CHECK(r.iterations_used == 0);
    CHECK(r.l2_norm == 0.0);
    CHECK(r.success);  // target chosen as the current prediction
    CHECK(r.lots_pool_size == 1);
}

TEST_CASE("lots converges to the pseudo-inverse solution on a linear model") {
    // z = W(x+delta) + b with rows w0, w1; gradient descent from delta = 0
    // converges to the least-squares delta = W^T (W W^T)^{-1} (z* - z(x))
    Architecture arch;
    arch.bottom = BottomKind::kNone;
    arch.input_shape = {3};
    arch.branch_hidden = 0;
    EcocEnsemble model;
    model.arch = arch;
    model.codewords = build_codeword_matrix(2, 2);
    model.branches.push_back({Tensor({1, 3}, {0.8, -0.3, 0.2}), Tensor({1}, {0.1})});
    model.branches.push_back({Tensor({1, 3}, {-0.2, 0.6, 0.4}), Tensor({1}, {-0.2})});

    const Tensor x({3}, {0.5, 0.5, 0.5});
    const Tensor pool_img({3}, {0.55, 0.45, 0.52});

    AttackConfig config;
    config.kind = AttackKind::kLots;
    config.max_iterations = 4000;
    config.step_size = 0.05;
    const AttackResult r = lots_attack(Model(model), x, {pool_img}, 0, config);

    // oracle: closed form through the 2x2 normal equations
    const double w[2][3] = {{0.8, -0.3, 0.2}, {-0.2, 0.6, 0.4}};
    double r0 = 0.0, r1 = 0.0;  // z* - z(x) = W (pool - x)
    for (int j = 0; j < 3; ++j) {
        r0 += w[0][j] * (pool_img[static_cast<std::size_t>(j)] - x[static_cast<std::size_t>(j)]);
        r1 += w[1][j] * (pool_img[static_cast<std::size_t>(j)] - x[static_cast<std::size_t>(j)]);
    }
    double g00 = 0.0, g01 = 0.0, g11 = 0.0;  // W W^T
    for (int j = 0; j < 3; ++j) {
        g00 += w[0][j] * w[0][j];
        g01 += w[0][j] * w[1][j];
        g11 += w[1][j] * w[1][j];
    }
    const double det = g00 * g11 - g01 * g01;
    const double a0 = (g11 * r0 - g01 * r1) / det;
    const double a1 = (g00 * r1 - g01 * r0) / det;
    for (std::size_t j = 0; j < 3; ++j) {
        const double want = w[0][j] * a0 + w[1][j] * a1;
        CHECK(std::abs(r.delta[j] - want) < 1e-3);
    }
}

TEST_CASE("lots loss is non-increasing on a linear model under a small step") {
    const TinyLinearInstance inst = make_tiny_linear_instance(77);
    const Model model = inst.model;
    Rng rng(3);
    const Tensor pool_img = random_tensor({2}, rng, 0.3, 0.7);

    AttackConfig config;
    config.kind = AttackKind::kLots;
    config.max_iterations = 800;
    config.step_size = 0.02;
    const AttackResult r = lots_attack(model, inst.x, {pool_img}, inst.target, config);

    // final representation distance must not exceed the initial one
    auto rep_distance = [&](const Tensor& probe) {
        const Tensor z = logits(inst.model, probe);
        const Tensor zt = logits(inst.model, pool_img);
        double s = 0.0;
        for (std::size_t i = 0; i < z.size(); ++i) s += (z[i] - zt[i]) * (z[i] - zt[i]);
        return s;
    };
    Tensor x_adv = inst.x;
    for (std::size_t i = 0; i < x_adv.size(); ++i) x_adv[i] += r.delta[i];
    CHECK(rep_distance(x_adv) <= rep_distance(inst.x) + 1e-12);
}

TEST_CASE("lots stops early once the loss plateaus") {
    // branch 0 is a dead relu at x but alive at the pool image: the loss is
    // positive with a zero gradient, so the 10-iteration window detects the
    // plateau at its first full comparison
    Architecture arch;
    arch.bottom = BottomKind::kNone;
    arch.input_shape = {2};
    arch.branch_hidden = 1;
    EcocEnsemble model;
    model.arch = arch;
    model.codewords = build_codeword_matrix(2, 2);
    model.branches.push_back({Tensor({1, 2}, {1.0, 0.0}), Tensor({1}, {-0.8}), Tensor({1, 1}, {1.0}),
                              Tensor({1}, {0.0})});
    model.branches.push_back({Tensor({1, 2}), Tensor({1}), Tensor({1, 1}), Tensor({1})});

    const Tensor pool_img({2}, {0.95, 0.5});  // relu input 0.15 > 0 here
    AttackConfig config;
    config.kind = AttackKind::kLots;
    config.max_iterations = 500;
    const AttackResult r = lots_attack(Model(model), kX2, {pool_img}, 0, config);
    CHECK(r.iterations_used == 10);
    CHECK(r.l2_norm == 0.0);  // the zero gradient never moved delta
}

TEST_CASE("lots rejects an empty pool") {
    const Model model = random_dense_ecoc(1, 4, 8, 3);
    AttackConfig config;
    config.kind = AttackKind::kLots;
    CHECK_THROWS_AS(lots_attack(model, Tensor({3}), {}, 0, config), std::invalid_argument);
}

// ---- campaign --------------------------------------------------------------------

TEST_CASE("campaigns are deterministic and worker-count independent") {
    const Dataset ds = synthesize_gaussian_blobs(4, 6, 30, 7.0, 19);
    Architecture arch;
    arch.bottom = BottomKind::kDense;
    arch.input_shape = {6};
    arch.bottom_hidden = 8;
    arch.branch_hidden = 6;
    Rng rng(2024);
    const Model model = init_ecoc(arch, build_codeword_matrix(4, 8), rng);

    CampaignSpec spec;
    spec.config.kind = AttackKind::kProposed;
    spec.config.binary_search_steps = 3;
    spec.config.max_iterations = 40;
    spec.image_count = 6;
    spec.seed = 99;

    spec.workers = 1;
    const std::vector<ResultRow> serial = run_campaign(model, ds, spec);
    spec.workers = 3;
    const std::vector<ResultRow> parallel = run_campaign(model, ds, spec);
    REQUIRE(serial.size() == parallel.size());

    // worker count from the environment must not change the rows either
    spec.workers = 0;
    setenv("ECOC_WORKERS", "2", 1);
    const std::vector<ResultRow> via_env = run_campaign(model, ds, spec);
    unsetenv("ECOC_WORKERS");
    REQUIRE(via_env.size() == serial.size());
    for (std::size_t i = 0; i < serial.size(); ++i) {
        CHECK(via_env[i].l2_norm == serial[i].l2_norm);
    }

    // explicit image ids override the sampled attack set
    spec.workers = 1;
    spec.image_ids = {4, 0, 9};
    const std::vector<ResultRow> picked = run_campaign(model, ds, spec);
    REQUIRE(picked.size() == 3);
    CHECK(picked[0].true_class == ds.labels[4]);
    CHECK(picked[1].true_class == ds.labels[0]);
    CHECK(picked[2].true_class == ds.labels[9]);
    spec.image_ids = {ds.count() + 5};
    CHECK_THROWS_AS(run_campaign(model, ds, spec), std::invalid_argument);
    for (std::size_t i = 0; i < serial.size(); ++i) {
        CHECK(serial[i].image_id == parallel[i].image_id);
        CHECK(serial[i].target_class == parallel[i].target_class);
        CHECK(serial[i].success == parallel[i].success);
        CHECK(serial[i].l2_norm == parallel[i].l2_norm);
        CHECK(serial[i].prob_target_after == parallel[i].prob_target_after);
        CHECK(serial[i].true_class != serial[i].target_class);
    }
}
