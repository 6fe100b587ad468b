#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "syncmask/config.hpp"
#include "syncmask/datagen.hpp"
#include "syncmask/losses.hpp"
#include "syncmask/masking.hpp"
#include "syncmask/momentum.hpp"
#include "syncmask/optimizer.hpp"
#include "syncmask/sampler.hpp"

namespace syncmask {

// What the student objective needs for one pair, teacher outputs included.
struct PairObjectiveInputs {
    const Tensor* patches = nullptr;
    std::vector<int> caption;      // no [CLS]
    MaskPlan plan;
    Tensor teacher_image_feats;    // (N_img + 1) x D, teacher on the full image
};

struct ObjectiveInputs {
    std::vector<PairObjectiveInputs> pairs;
    std::vector<int> item_ids;
    Tensor queue_v;                // U x proj_dim, teacher features
    Tensor queue_t;
    std::vector<int> positives;    // queue slot of each pair's own features
    const ItcSoftTargets* soft = nullptr;
    // When set, ITM uses these instead of mining from the student similarities.
    const HardNegatives* negatives = nullptr;
    Rng* mining_rng = nullptr;
};

// Which inputs each pathway actually consumed.
struct StepTrace {
    bool mlm_image_masked = true;
    bool mlm_text_masked = false;
    bool mim_image_masked = false;
    std::vector<std::uint64_t> mask_provenance;   // per pair, from the plan
    std::vector<std::uint64_t> teacher_passes;    // per pair, id of the teacher forward
    std::vector<std::string> trainable_labels;    // leaves on the student tape
    HardNegatives negatives;
};

struct Objective {
    Var mim;
    Var mlm;
    Var itc;
    Var itm;
    Var total;
};

// Builds MIM + MLM + ITC + ITM for a batch on the student's tape.
Objective student_objective(const BoundModel& student, const ObjectiveInputs& in, StepTrace* trace = nullptr);

struct StepMetrics {
    int epoch = 0;
    long step = 0;
    bool warmup = false;
    LossBundle losses;
    double mask_visible_fraction = 0.0;  // over idx_text positions of the batch
    double wall_time = 0.0;              // seconds; kept out of the metrics file
};

// One JSON object without wall_time, so runs compare byte for byte.
std::string metrics_json(const StepMetrics& m);

struct TrainState {
    DualModel model;
    AdamW optimizer;
    FeatureQueue queue_v;
    FeatureQueue queue_t;
    // Teacher projections gathered while training, indexed by example.
    std::vector<SampleRecord> collected;
    std::vector<unsigned char> has_features;
    long step = 0;
};

TrainState init_train_state(const TrainConfig& cfg, const Corpus& corpus);

// One training step on batch: teacher forward and mask planning, student
// objective, backward, AdamW, EMA, queue and sampler-feature updates.
// Throws std::domain_error naming a non-finite loss term; the state is left
// untouched in that case.
StepMetrics pretrain_step(TrainState& state, const Corpus& corpus, const MiniBatch& batch, const TrainConfig& cfg,
                          MaskStrategy text_strategy, MaskStrategy image_strategy, int epoch, Rng& rng,
                          StepTrace* trace = nullptr);

// Mini-batches for one epoch. Falls back to a random plan until every
// example has teacher features from a previous epoch.
EpochPlan epoch_plan(const TrainState& state, const TrainConfig& cfg, int epoch);

using StepCallback = std::function<void(const StepMetrics&)>;

// Runs cfg.epochs epochs from state.
void train(TrainState& state, const Corpus& corpus, const TrainConfig& cfg, const StepCallback& on_step = {});

}  // namespace syncmask
