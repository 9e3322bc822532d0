#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "seqcls/autograd.hpp"

namespace seqcls {

/// Central-difference gradient estimate of a scalar function of the
/// parameters, one Tensor per parameter in registration order. Each
/// coordinate is perturbed by +-h and restored bitwise afterwards; f itself
/// must not mutate the set. This is the independent oracle the analytic
/// backward pass is checked against.
inline std::vector<Tensor> finite_diff_gradient(
    const std::function<double(const ParameterSet&)>& f,
    ParameterSet& params, double h = 1e-5) {
    if (!(h > 0.0)) {
        throw ContractError("finite_diff_gradient: h must be positive");
    }
    std::vector<Tensor> grads;
    grads.reserve(params.size());
    for (std::size_t p = 0; p < params.size(); ++p) {
        Node& node = params.node(p);
        Tensor g(node.value.rows(), node.value.cols());
        for (std::size_t i = 0; i < node.value.size(); ++i) {
            const double saved = node.value[i];
            node.value[i] = saved + h;
            const double f_plus = f(params);
            node.value[i] = saved - h;
            const double f_minus = f(params);
            node.value[i] = saved;
            g[i] = (f_plus - f_minus) / (2.0 * h);
        }
        grads.push_back(std::move(g));
    }
    return grads;
}

/// Relative error with the floor the gradient checks use everywhere:
/// |a-b| / max(|a|, |b|, 1e-6). The floor absorbs rounding noise in the
/// difference quotient itself: with a loss of order 1 and h = 1e-5, the
/// central difference carries about |f|*eps/(2h) ~ 1e-11 of absolute noise,
/// so coordinates whose true gradient is below ~1e-7 measure as pure noise
/// and only an absolute comparison is meaningful there.
inline double relative_error(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

struct GradMismatch {
    double max_rel_err = 0.0;
    std::string param;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

/// Worst relative disagreement between the analytic gradients currently on
/// `params` and a finite-difference estimate.
inline GradMismatch compare_gradients(const ParameterSet& params,
                                      const std::vector<Tensor>& numeric) {
    GradMismatch worst;
    for (std::size_t p = 0; p < params.size(); ++p) {
        const Node& node = params.node(p);
        const Tensor& num = numeric[p];
        for (std::size_t i = 0; i < node.grad.size(); ++i) {
            const double err = relative_error(node.grad[i], num[i]);
            if (err > worst.max_rel_err) {
                worst.max_rel_err = err;
                worst.param = params.name(p);
                worst.index = i;
                worst.analytic = node.grad[i];
                worst.numeric = num[i];
            }
        }
    }
    return worst;
}

} // namespace seqcls
