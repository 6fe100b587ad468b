#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "syncmask/datagen.hpp"
#include "syncmask/masking.hpp"
#include "syncmask/model.hpp"

namespace syncmask {

struct Recalls {
    std::vector<int> ks;
    std::vector<double> i2t;  // fraction in [0, 1], one per k
    std::vector<double> t2i;
};

// sim[i][j] scores image i against text j; pair i's match is text i. A query
// hits at K when fewer than K candidates outrank the match, counting ties
// with a lower index as outranking.
Recalls recall_at_k(const Tensor& sim, const std::vector<int>& ks);

// Student ITC projections of every image and caption (no masking), cosine
// similarity, then recall_at_k. One view per item: repeated item ids are
// rejected.
Recalls evaluate_retrieval(const DualModel& model, const Corpus& eval, const std::vector<int>& ks);

// Student projections, rows in corpus order.
void project_corpus(const DualModel& model, const Corpus& corpus, Tensor& image_proj, Tensor& text_proj);

// Teacher attention summary and mask plan for one pair, as a training step
// would draw them.
struct PairMasks {
    AttentionSummary summary;
    MaskPlan plan;
    std::vector<unsigned char> visible;  // per caption position
};

PairMasks pair_masks(const DualModel& model, const Corpus& corpus, std::size_t index, const MaskConfig& cfg,
                     MaskStrategy text_strategy, MaskStrategy image_strategy, std::uint64_t seed);

struct MaskVisibility {
    long masked = 0;
    long visible = 0;

    double fraction() const { return masked ? static_cast<double>(visible) / static_cast<double>(masked) : 0.0; }
};

// Share of masked text positions that name an attribute visible in the
// image, over the whole corpus.
MaskVisibility mask_visibility(const DualModel& model, const Corpus& corpus, const MaskConfig& cfg,
                               MaskStrategy text_strategy, std::uint64_t seed);

// Writes <dir>/masks.txt (one record per pair) and <dir>/heatmap_<i>.pgm
// (P x P graymap of the image attention summary). Returns the record count.
std::size_t dump_masks(const DualModel& model, const Corpus& corpus, const MaskConfig& cfg,
                       MaskStrategy text_strategy, MaskStrategy image_strategy, std::uint64_t seed,
                       const std::string& dir);

// P2 graymap text, values scaled so the largest weight maps to 255.
std::string heatmap_pgm(const std::vector<double>& weights, int side);

}  // namespace syncmask
