#include "syncmask/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace syncmask {

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double eps) {
    if (!(eps > 0.0)) {
        throw std::invalid_argument("finite_diff_grad: eps must be positive");
    }
    Tensor grad(x.shape());
    Tensor probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double original = probe[i];
        probe[i] = original + eps;
        const double up = f(probe);
        probe[i] = original - eps;
        const double down = f(probe);
        probe[i] = original;
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw std::domain_error("finite_diff_grad: non-finite value at coordinate " + std::to_string(i));
        }
        grad[i] = (up - down) / (2.0 * eps);
    }
    return grad;
}

double max_relative_error(const Tensor& analytic, const Tensor& numeric, double floor) {
    if (!analytic.same_shape(numeric)) {
        throw std::invalid_argument("max_relative_error: shape mismatch " + shape_string(analytic.shape()) +
                                    " vs " + shape_string(numeric.shape()));
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / (std::abs(numeric[i]) + floor));
    }
    return worst;
}

GradCheckReport check_gradients(const ScalarBuilder& f, const std::vector<Tensor>& inputs, double eps) {
    std::vector<Tensor> analytic;
    {
        Tape tape;
        std::vector<Var> vars;
        for (const Tensor& in : inputs) {
            vars.push_back(tape.leaf(in));
        }
        const Var root = f(tape, vars);
        tape.backward(root);
        for (const Var& v : vars) {
            analytic.push_back(tape.grad(v));
        }
    }

    GradCheckReport report;
    std::vector<Tensor> current = inputs;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        auto eval = [&](const Tensor& probe) {
            Tape tape;
            std::vector<Var> vars;
            for (std::size_t j = 0; j < current.size(); ++j) {
                vars.push_back(tape.constant(j == k ? probe : current[j]));
            }
            return f(tape, vars).value().item();
        };
        const Tensor numeric = finite_diff_grad(eval, inputs[k], eps);
        report.max_rel_error = std::max(report.max_rel_error, max_relative_error(analytic[k], numeric));
        report.coordinates += numeric.size();
    }
    return report;
}

}  // namespace syncmask
