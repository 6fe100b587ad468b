#pragma once

#include "syncmask/config.hpp"
#include "syncmask/datagen.hpp"

namespace syncmask::testing {

// Small enough for a training step in a few milliseconds, but still a valid
// corpus shape (four quadrant slots, attribute and filler tokens).
inline TrainConfig small_train_config() {
    TrainConfig cfg;
    cfg.model.dim = 16;
    cfg.model.heads = 2;
    cfg.model.layers_text = 1;
    cfg.model.layers_vision = 1;
    cfg.model.layers_fusion = 1;
    cfg.model.text_len = 8;
    cfg.model.patch_dim = 8;
    cfg.model.proj_dim = 8;
    cfg.grouping.batch_size = 4;
    cfg.grouping.subqueue_size = 8;
    cfg.grouping.collect_queue_size = 16;
    cfg.momentum.queue_size = 16;
    cfg.itc.queue_size = 16;
    cfg.epochs = 2;
    cfg.seed = 3;
    cfg.validate();
    return cfg;
}

inline Corpus small_corpus(const TrainConfig& cfg, std::uint64_t seed = 21, int item_id_base = 0) {
    return generate_corpus(8, 2, data_config_for(cfg.model), seed, item_id_base);
}

}  // namespace syncmask::testing
