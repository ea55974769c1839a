#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ecoc/data.hpp"
#include "ecoc/evaluation.hpp"
#include "ecoc/model.hpp"

namespace ecoc {

enum class AttackKind : std::uint8_t {
    kProposed = 0,  // per-bit margin objective on the logits
    kCwEcoc = 1,    // C&W adapted to correlations
    kCwOneHot = 2,  // C&W on logits, tanh-space box constraint
    kLots = 3,      // logits-level representation matching
};

const char* attack_kind_name(AttackKind kind);
AttackKind attack_kind_from_name(const std::string& name);

struct AttackConfig {
    double lambda_start = 1e-3;   // lambda_1
    int binary_search_steps = 10; // n
    double step_size = 0.01;      // epsilon, in [0,1] pixel units
    int max_iterations = 1000;    // m
    double confidence = 0.0;      // c, any real
    AttackKind kind = AttackKind::kProposed;

    void validate() const;
};

// Per-round diagnostics of the lambda binary search.
struct RoundTrace {
    double lambda = 0.0;
    bool found = false;
    double upper_bound = 0.0;
    double lower_bound = 0.0;
};

struct AttackResult {
    Tensor delta;  // smallest-norm adversarial perturbation, or the final
                   // iterate of the last round when no adversarial was found
    bool success = false;
    int target_class = -1;
    std::vector<std::int8_t> target_codeword;  // ECOC kinds only
    double l2_norm = 0.0;   // of delta, [0,1] pixel units
    double psnr = 0.0;      // dB
    int iterations_used = 0;
    double final_lambda = 0.0;
    double prob_true_before = 0.0;
    double prob_true_after = 0.0;
    double prob_target_before = 0.0;
    double prob_target_after = 0.0;
    std::vector<RoundTrace> rounds;
    int lots_pool_size = 0;
};

// ---- objective values -------------------------------------------------------

// ||delta||_2 + lambda * max(max_{i != t} z_i(x+delta) - z_t(x+delta), c)
double cw_onehot_objective(const OneHotModel& model, const Tensor& x, const Tensor& delta, int t,
                           double lambda, double c);
// ||delta||_2 + lambda * max(max_{i != t} rho_i(x+delta) - rho_t(x+delta), c)
double cw_ecoc_objective(const EcocEnsemble& model, const Tensor& x, const Tensor& delta, int t,
                         double lambda, double c);
// ||delta||_2 - lambda * min(min_i 2 t_i z_i(x+delta), c), with (t_1..t_N) = C_t
double proposed_objective(const EcocEnsemble& model, const Tensor& x, const Tensor& delta, int t,
                          double lambda, double c);

// Success test, re-checkable independently of any optimizer state:
//   proposed:   predict == t and min_i 2 t_i z_i >= c
//   cw-onehot:  predict == t and z_t - max_{i != t} z_i >= c
//   cw-ecoc:    predict == t and rho_t - max_{i != t} rho_i >= c
//   lots:       predict == t
// The >= is inclusive.
bool is_adversarial(const Model& model, const Tensor& x_adv, int target, double c, AttackKind kind);

// ---- optimization problems ----------------------------------------------------

// One step of Algorithm 1 works on an abstract problem so the search logic is
// testable against stub models: a point is the optimization variable (delta
// for the clipped kinds, w for the tanh-reparameterized C&W one-hot).
class AttackProblem {
public:
    virtual ~AttackProblem() = default;

    struct Eval {
        double objective = 0.0;
        Tensor gradient;  // w.r.t. the point
        bool adversarial = false;
    };

    virtual Tensor initial_point() const = 0;
    virtual Eval evaluate(const Tensor& point, double lambda) = 0;
    virtual Tensor delta_of(const Tensor& point) const = 0;
    // point - eps * unit_direction, then the kind's projection (box clip for
    // delta-space kinds; none for w-space).
    virtual Tensor step(const Tensor& point, const Tensor& unit_direction, double eps) const = 0;
};

std::unique_ptr<AttackProblem> make_attack_problem(const Model& model, const Tensor& x, int target,
                                                   double confidence, AttackKind kind);

// Max relative error between the problem's analytic gradient at `point` and
// central finite differences of its objective (step h), using the same
// |ad - fd| / max(1e-12, |ad| + |fd|) metric as finite_difference_check.
double attack_gradient_fd_error(AttackProblem& problem, const Tensor& point, double lambda,
                                double h);

// The lambda binary search with normalized gradient descent, on any problem.
// Fills delta/success/l2/iterations/final_lambda/rounds of the result.
AttackResult run_binary_search(AttackProblem& problem, const AttackConfig& config);

// Full attack on a model input: builds the problem, runs the search, and
// fills probabilities and PSNR. The caller picks a target class != true class;
// passing the true class fills the prob_true_* fields as well.
AttackResult binary_search_attack(const Model& model, const Tensor& x, int target,
                                  const AttackConfig& config, int true_class = -1);

// LOTS at the logits level. The target representation is the elementwise mean
// of the pool's logits; plain gradient steps of size epsilon with box
// clipping, stopping after max_iterations or once the new loss is within 1e-4
// relative of the mean of the last 10 losses. Success means predict == target.
AttackResult lots_attack(const Model& model, const Tensor& x,
                         const std::vector<Tensor>& target_pool, int target,
                         const AttackConfig& config, int true_class = -1);

// ---- campaigns ------------------------------------------------------------------

struct CampaignSpec {
    AttackConfig config;
    std::size_t image_count = 50;
    std::vector<std::size_t> image_ids;  // explicit dataset indices; overrides sampling
    std::uint64_t seed = 1;
    std::size_t lots_pool_size = 50;
    int workers = 0;  // 0 = hardware concurrency
};

// Attacks `image_count` images sampled from the dataset (or exactly the given
// image_ids), one random target per image among the M-1 non-true classes,
// deterministically from the seed and independent of the worker count. Rows
// come back ordered by image id (position in the attacked set).
std::vector<ResultRow> run_campaign(const Model& model, const Dataset& dataset,
                                    const CampaignSpec& spec);

}  // namespace ecoc
