#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "syncmask/model.hpp"
#include "syncmask/rng.hpp"

namespace syncmask {

// Mean cross-attention each non-[CLS] position receives from the other
// modality's non-[CLS] queries, averaged over heads and query rows jointly.
struct AttentionSummary {
    std::vector<double> text;   // length N
    std::vector<double> image;  // length N_img, row-major P x P
};

AttentionSummary summarize_attention(const CrossAttentionRecord& record);

struct MaskConfig {
    double r_text = 0.3;
    double r_image = 0.5;
    double pool_factor = 2.0;  // candidate pool L = min(n, ceil(pool_factor * K))

    void validate() const;
};

// round(ratio * n), halves rounded up.
int mask_count(double ratio, int n);
int pool_size(int k, int n, double pool_factor);

// Indices of the l largest weights (ties: lower index first), shuffled, first k kept.
std::vector<int> select_mask_indices(std::span<const double> weights, int k, int l, Rng& rng);

// Uniform k-subset of [0, n).
std::vector<int> random_mask_indices(int n, int k, Rng& rng);

std::vector<unsigned char> build_mask(std::span<const int> idx, int n);

// Replaces masked positions with mask_token_id. tokens excludes [CLS].
std::vector<int> apply_text_mask(std::span<const int> tokens, std::span<const unsigned char> mask, int mask_token_id);

// Pairs the patches with the mask; the substitution itself happens in
// embedding space inside encode_image.
ImageInput apply_image_mask(const Tensor& patches, std::span<const unsigned char> mask);

// [CLS] followed by caption tokens.
TextInput make_text_input(std::span<const int> caption, int cls_token_id, bool masked = false);

enum class MaskStrategy { random, attentional };

std::string_view to_string(MaskStrategy s);
MaskStrategy parse_mask_strategy(std::string_view s);

struct MaskPlan {
    std::vector<unsigned char> text;
    std::vector<unsigned char> image;
    std::vector<int> idx_text;
    std::vector<int> idx_image;
    // Identifies the teacher forward pass the plan was derived from.
    std::uint64_t provenance = 0;
};

// Builds both masks for one pair. Attentional selection reads the summary;
// random selection ignores it.
MaskPlan plan_masks(const AttentionSummary& summary, const MaskConfig& cfg, MaskStrategy text_strategy,
                    MaskStrategy image_strategy, Rng& rng, std::uint64_t provenance);

}  // namespace syncmask
