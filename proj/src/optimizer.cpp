#include "syncmask/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace syncmask {

void OptimizerConfig::validate() const {
    if (!(lr > 0.0) || !(weight_decay >= 0.0) || !(eps > 0.0)) {
        throw std::invalid_argument("optimizer config: lr and eps must be positive, weight_decay nonnegative");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw std::invalid_argument("optimizer config: betas must lie in [0, 1)");
    }
}

AdamW::AdamW(const OptimizerConfig& cfg, const ParameterSet& params) : cfg_(cfg) {
    cfg_.validate();
    for (const Tensor& p : params.values()) {
        m_.emplace_back(p.shape());
        v_.emplace_back(p.shape());
    }
}

void AdamW::step(ParameterSet& params, const std::vector<Tensor>& grads) {
    if (grads.size() != params.size() || m_.size() != params.size()) {
        throw std::invalid_argument("AdamW::step: expected " + std::to_string(m_.size()) + " gradients, got " +
                                    std::to_string(grads.size()));
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params[i];
        if (!grads[i].same_shape(p)) {
            throw std::invalid_argument("AdamW::step: gradient shape mismatch for " + params.name(i));
        }
        const double decay = p.rank() == 2 ? cfg_.lr * cfg_.weight_decay : 0.0;
        auto w = p.data();
        auto g = grads[i].data();
        auto m = m_[i].data();
        auto v = v_[i].data();
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
            const double m_hat = m[j] / bc1;
            const double v_hat = v[j] / bc2;
            w[j] -= decay * w[j];
            w[j] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
        }
    }
}

}  // namespace syncmask
