#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "syncmask/gradcheck.hpp"
#include "syncmask/trainer.hpp"

namespace syncmask {

// A scalar function of a few tensors, for gradient checking.
struct GradCase {
    std::string name;
    ScalarBuilder build;
    std::vector<Tensor> inputs;
};

// Every differentiable op, loss and model piece at small random shapes.
std::vector<GradCase> op_grad_cases(std::uint64_t seed);

// Config used for the end-to-end gradient check: D=8, H=2, N=4, N_img=4.
ModelConfig tiny_model_config();

// The full batch objective at tiny shapes (B=2, U=8) with masks, teacher
// targets, queues and ITM negatives all frozen, as a function of the student
// parameters.
struct TinyProblem {
    ModelConfig config;
    DualModel model;
    std::vector<Tensor> patches;
    ObjectiveInputs inputs;
    HardNegatives negatives;

    // inputs.pairs[i].patches points into patches, so no copies.
    TinyProblem() = default;
    TinyProblem(const TinyProblem&) = delete;
    TinyProblem& operator=(const TinyProblem&) = delete;

    Var build(Tape& tape, const std::vector<Var>& params) const;
};

std::unique_ptr<TinyProblem> make_tiny_problem(std::uint64_t seed);

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

using SmoothL1Fn = std::function<double(double, double, double)>;

struct SelfcheckOptions {
    SmoothL1Fn smooth_l1;  // empty = the library's
    int grad_seeds = 2;
};

std::vector<CheckResult> run_selfcheck(const SelfcheckOptions& options = {});

}  // namespace syncmask
