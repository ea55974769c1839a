#pragma once

#include <iosfwd>

#include "ecoc/model.hpp"

namespace ecoc {

// Built-in verification pass: gradient checks, Hadamard invariants, the
// correlation-to-probability map properties, the lambda binary-search trace,
// and the tiny-model grid-search oracle. Prints one line per check to `out`
// and returns the number of failed checks.
int run_selftest(std::ostream& out);

struct GridOracleOutcome {
    bool feasible = false;
    double best_norm = 0.0;
};

// Exhaustive search over delta in [-1,1]^2 at the given grid step, restricted
// to x+delta in [0,1]^2, for the smallest perturbation that the per-bit margin
// condition accepts. Recomputes logits, correlations and the prediction from
// the raw branch weights, independently of the attack optimizer's code path.
// Requires a 2-input linear ensemble (bottom none, single dense branches).
GridOracleOutcome grid_search_min_delta(const EcocEnsemble& linear_model, const Tensor& x,
                                        int target, double confidence, double grid_step);

// A 2-pixel, 2-class linear ensemble with seeded weights, plus a start point
// whose prediction differs from `target_out`. Shared by selftest and the
// acceptance suite's oracle-equivalence runs.
struct TinyLinearInstance {
    EcocEnsemble model;
    Tensor x;
    int target = 0;
};
TinyLinearInstance make_tiny_linear_instance(std::uint64_t seed);

}  // namespace ecoc
