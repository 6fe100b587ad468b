#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "syncmask/tape.hpp"

namespace syncmask {

// Central-difference estimate of grad f at x, one coordinate at a time.
// Throws std::domain_error if f is non-finite at any probe.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double eps = 1e-5);

// max_i |analytic_i - numeric_i| / (|numeric_i| + floor)
double max_relative_error(const Tensor& analytic, const Tensor& numeric, double floor = 1e-8);

using ScalarBuilder = std::function<Var(Tape&, const std::vector<Var>&)>;

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t coordinates = 0;
};

// Builds f once with every input as a trainable leaf, runs backward, and
// compares each input gradient to finite differences of f evaluated on
// constant-only tapes.
GradCheckReport check_gradients(const ScalarBuilder& f, const std::vector<Tensor>& inputs, double eps = 1e-5);

}  // namespace syncmask
