#pragma once

#include <functional>

#include "ecoc/tape.hpp"
#include "ecoc/tensor.hpp"

namespace ecoc {

// Builds a scalar function of one tensor on a tape. The returned Var must be
// a scalar (shape {1}) node of the given tape.
using ScalarFn = std::function<Var(Tape&, Var)>;

// Central-difference gradient check. Evaluates the analytic gradient of f at
// x via backward(), then perturbs every element by +/-h and compares. Returns
// the max over elements of |g_ad - g_fd| / max(1e-12, |g_ad| + |g_fd|).
double finite_difference_check(const ScalarFn& f, const Tensor& x, double h);

// Analytic gradient of f at x, for callers that want the vector itself.
Tensor analytic_gradient(const ScalarFn& f, const Tensor& x);

}  // namespace ecoc
