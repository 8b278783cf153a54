#pragma once

// Central finite-difference verification of tape gradients.
//
// The function under test rebuilds its computation from scratch on each call;
// it must read the checked leaf through the alias captured at construction so
// that in-place perturbations are visible.

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "aao/errors.hpp"
#include "aao/tensor.hpp"

namespace aao {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::size_t worst_index = 0;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
};

// Relative error with a floor so near-zero pairs compare absolutely.
inline double grad_rel_err(double analytic, double numeric) {
    const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
    return std::fabs(analytic - numeric) / denom;
}

// f builds a scalar loss; when handed a tape it must mark the path from x.
// Perturbs every coordinate of x by +/-eps to compare (f+ - f-) / 2eps against
// the tape gradient.
inline GradCheckReport check_gradient(const std::function<Tensor(Tape*)>& f, Tensor x,
                                      double eps = 1e-5) {
    if (!x.requires_grad()) throw contract_error("check_gradient: leaf does not track gradients");

    x.zero_grad();
    Tape tape;
    Tensor loss = f(&tape);
    if (loss.numel() != 1) throw contract_error("check_gradient: f must return a scalar");
    tape.backward(loss);
    std::vector<double> analytic = x.grad();

    GradCheckReport report;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double saved = x.at(i);
        x.at(i) = saved + eps;
        const double fp = f(nullptr).item();
        x.at(i) = saved - eps;
        const double fm = f(nullptr).item();
        x.at(i) = saved;
        const double numeric = (fp - fm) / (2.0 * eps);
        const double err = grad_rel_err(analytic[i], numeric);
        if (err >= report.max_rel_err) {
            if (err > report.max_rel_err || i == 0) {
                report.max_rel_err = err;
                report.worst_index = i;
                report.analytic_at_worst = analytic[i];
                report.numeric_at_worst = numeric;
            }
        }
    }
    return report;
}

}  // namespace aao
