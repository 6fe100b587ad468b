#pragma once

#include <vector>

#include "syncmask/model.hpp"

namespace syncmask {

struct OptimizerConfig {
    double lr = 1e-3;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const;
};

// Adam with decoupled weight decay. Decay applies to rank-2 tensors only, so
// biases, norm gains and log_tau are left alone.
class AdamW {
public:
    AdamW(const OptimizerConfig& cfg, const ParameterSet& params);

    void step(ParameterSet& params, const std::vector<Tensor>& grads);

    long steps() const { return t_; }

private:
    OptimizerConfig cfg_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    long t_ = 0;
};

}  // namespace syncmask
