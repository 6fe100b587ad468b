#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "syncmask/config.hpp"
#include "syncmask/datagen.hpp"

namespace syncmask {

enum class AblationAxis { masking, grouping };

std::string_view to_string(AblationAxis a);
AblationAxis parse_ablation_axis(std::string_view s);

struct AblationCell {
    AblationAxis axis;
    std::string label;
    TrainConfig config;
};

// masking: RtRv, AtRv, RtAv, AtAv (R = random, A = attentional, t/v = text/image).
// grouping: random, hardest, hardest+efn, semihard+efn.
std::vector<AblationCell> ablation_cells(const TrainConfig& base, AblationAxis axis);

struct AblationRow {
    AblationAxis axis;
    std::string label;
    bool ok = false;
    std::string error;
    double i2t_r1 = 0.0;
    double t2i_r1 = 0.0;
    double mask_visible_fraction = 0.0;  // mean over training steps
};

// Trains every cell with the base seed and budget; a cell that throws is
// reported as failed and the rest still run.
std::vector<AblationRow> run_ablation(const TrainConfig& base, const Corpus& train_corpus, const Corpus& eval_corpus,
                                      const std::vector<AblationAxis>& axes);

std::string format_ablation(const std::vector<AblationRow>& rows);

}  // namespace syncmask
