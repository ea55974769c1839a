#include "ecoc/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ecoc {

namespace {

double eval_scalar(const ScalarFn& f, const Tensor& x) {
    Tape tape;
    const Var in = tape.leaf(x, false);
    const Var out = f(tape, in);
    return tape.value(out).item();
}

}  // namespace

Tensor analytic_gradient(const ScalarFn& f, const Tensor& x) {
    Tape tape;
    const Var in = tape.leaf(x, true);
    const Var out = f(tape, in);
    tape.backward(out);
    Tensor g = tape.grad(in);
    if (g.size() == 0) g = Tensor::zeros_like(x);  // input not on any path
    return g;
}

double finite_difference_check(const ScalarFn& f, const Tensor& x, double h) {
    if (h <= 0.0) throw std::invalid_argument("finite_difference_check: h must be positive");
    if (!std::isfinite(eval_scalar(f, x))) {
        throw std::domain_error("finite_difference_check: f(x) is not finite");
    }
    const Tensor g_ad = analytic_gradient(f, x);

    double worst = 0.0;
    Tensor probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = probe[i];
        probe[i] = saved + h;
        const double fp = eval_scalar(f, probe);
        probe[i] = saved - h;
        const double fm = eval_scalar(f, probe);
        probe[i] = saved;
        const double g_fd = (fp - fm) / (2.0 * h);
        const double denom = std::max(1e-12, std::abs(g_ad[i]) + std::abs(g_fd));
        worst = std::max(worst, std::abs(g_ad[i] - g_fd) / denom);
    }
    return worst;
}

}  // namespace ecoc
