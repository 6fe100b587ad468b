#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "syncmask/masking.hpp"
#include "syncmask/model.hpp"
#include "syncmask/momentum.hpp"
#include "syncmask/optimizer.hpp"
#include "syncmask/sampler.hpp"

namespace syncmask {

struct ItcConfig {
    double tau_init = 0.07;
    int queue_size = 256;
    double alpha = 0.0;  // soft-target mixing, 0 = one-hot targets

    void validate() const;
};

struct TrainConfig {
    ModelConfig model;
    MaskConfig mask;
    GroupingConfig grouping;
    MomentumConfig momentum;
    ItcConfig itc;
    OptimizerConfig optimizer;
    int epochs = 5;
    std::uint64_t seed = 1;
    MaskStrategy text_masking = MaskStrategy::attentional;
    MaskStrategy image_masking = MaskStrategy::attentional;
    // Epochs at the start that mask randomly whatever the strategy says.
    int warmup_epochs = 1;
    std::string output_dir = "run";

    // Throws ConfigError on any inconsistency.
    void validate() const;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Missing keys keep their defaults; unknown keys and wrong types throw ConfigError.
TrainConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const TrainConfig& cfg);
TrainConfig load_config(const std::string& path);

}  // namespace syncmask
