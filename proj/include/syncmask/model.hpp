#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "syncmask/rng.hpp"
#include "syncmask/tape.hpp"

namespace syncmask {

struct ModelConfig {
    int dim = 64;              // transformer width D
    int heads = 4;             // H; per-head width is dim / heads
    int layers_text = 2;
    int layers_vision = 2;
    int layers_fusion = 2;
    int text_len = 16;         // N, excluding [CLS]
    int patches_per_side = 4;  // P; patch count is P * P
    int patch_dim = 64;
    int vocab_size = 64;
    int mask_token_id = 63;
    int cls_token_id = 0;
    int proj_dim = 32;
    double init_std = 0.05;

    int head_dim() const { return dim / heads; }
    int num_patches() const { return patches_per_side * patches_per_side; }

    // Throws std::invalid_argument on inconsistent fields.
    void validate() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Named parameter tensors in declaration order.
class ParameterSet {
public:
    int add(std::string name, Tensor value);

    std::size_t size() const { return values_.size(); }
    const std::string& name(std::size_t i) const { return names_[i]; }
    Tensor& operator[](std::size_t i) { return values_[i]; }
    const Tensor& operator[](std::size_t i) const { return values_[i]; }
    std::vector<Tensor>& values() { return values_; }
    const std::vector<Tensor>& values() const { return values_; }

    std::size_t scalar_count() const;
    // Same names and shapes in the same order.
    bool same_layout(const ParameterSet& other) const;

    friend bool operator==(const ParameterSet&, const ParameterSet&) = default;

private:
    std::vector<std::string> names_;
    std::vector<Tensor> values_;
};

// Indices into a ParameterSet, one struct per architectural piece.
struct LayerNormIdx {
    int gain = -1;
    int bias = -1;
};
struct AttentionIdx {
    int wq = -1, wk = -1, wv = -1, wo = -1, bo = -1;
};
struct FeedForwardIdx {
    int w1 = -1, b1 = -1, w2 = -1, b2 = -1;
};
struct EncoderBlockIdx {
    LayerNormIdx ln_attn;
    AttentionIdx attn;
    LayerNormIdx ln_ffn;
    FeedForwardIdx ffn;
};
struct FusionBlockIdx {
    LayerNormIdx ln_self;
    AttentionIdx self_attn;
    LayerNormIdx ln_cross;
    AttentionIdx cross_attn;  // queries from text, keys/values from image
    LayerNormIdx ln_ffn;
    FeedForwardIdx ffn;
};

struct ModelLayout {
    int token_embedding = -1;
    int text_position = -1;
    std::vector<EncoderBlockIdx> text_blocks;
    LayerNormIdx text_final;

    int patch_weight = -1;
    int patch_bias = -1;
    int image_cls = -1;
    int image_position = -1;
    int mask_embedding = -1;  // v_mask
    std::vector<EncoderBlockIdx> vision_blocks;
    LayerNormIdx vision_final;

    std::vector<FusionBlockIdx> fusion_blocks;
    LayerNormIdx fusion_final;

    int mlm_weight = -1;
    int mlm_bias = -1;
    int itm_weight = -1;
    int itm_bias = -1;
    int proj_visual = -1;   // g_v
    int proj_textual = -1;  // g_t
    int log_tau = -1;
};

// Registers every parameter for cfg in declaration order and returns where
// each one lives. Values are randomly initialized from rng.
ModelLayout build_parameters(const ModelConfig& cfg, double tau_init, Rng& rng, ParameterSet& out);

// Student parameters plus an identically shaped EMA teacher.
struct DualModel {
    ModelConfig config;
    ModelLayout layout;
    ParameterSet student;
    ParameterSet teacher;

    // Student randomly initialized; teacher an exact copy.
    static DualModel create(const ModelConfig& cfg, double tau_init, std::uint64_t seed);

    double tau() const;
};

// Parameters placed on a tape, either as trainable leaves or as constants.
struct BoundModel {
    const ModelConfig* config = nullptr;
    const ModelLayout* layout = nullptr;
    std::vector<Var> params;

    const Var& operator[](int idx) const { return params[static_cast<std::size_t>(idx)]; }
};

BoundModel bind(Tape& tape, const ModelConfig& cfg, const ModelLayout& layout, const ParameterSet& params,
                bool trainable, std::string_view label_prefix);
BoundModel bind_student(Tape& tape, const DualModel& model, bool trainable = true);
BoundModel bind_teacher(Tape& tape, const DualModel& model);

// Token ids including [CLS] at position 0. masked records that the ids went
// through apply_text_mask.
struct TextInput {
    std::vector<int> tokens;
    bool masked = false;
};

// Patch grid plus an optional per-patch mask (empty = unmasked).
struct ImageInput {
    const Tensor* patches = nullptr;
    std::vector<unsigned char> mask;

    bool masked() const;
};

Var embed_text(const BoundModel& m, const TextInput& text);
Var encode_text(const BoundModel& m, const TextInput& text);

// Patch projection, mask-embedding substitution, [CLS], positions.
Var embed_image(const BoundModel& m, const ImageInput& image);
Var encode_image(const BoundModel& m, const ImageInput& image);

// Per-head attention maps from the last fusion layer's cross-attention.
// text_to_image[h] is (N+1) x (N_img+1) with text queries on rows;
// image_to_text[h] is (N_img+1) x (N+1) with image queries on rows.
struct CrossAttentionRecord {
    std::vector<Tensor> text_to_image;
    std::vector<Tensor> image_to_text;

    int heads() const { return static_cast<int>(text_to_image.size()); }
};

struct FusionOutput {
    Var features;  // (N+1) x D, follows the text sequence
    CrossAttentionRecord attention;
};

FusionOutput fuse(const BoundModel& m, const Var& text_feats, const Var& image_feats);

// Rows 1..N of the fused features through the MLM head: N x vocab.
Var mlm_logits(const BoundModel& m, const Var& fused);
// Row 0 of the fused features through the ITM head: 1 x 2 (column 1 = match).
Var itm_logits(const BoundModel& m, const Var& fused);

enum class Modality { visual, textual };

// Projects [CLS] rows (B x D, or one row) with g_v / g_t and L2-normalizes.
Var itc_project(const BoundModel& m, const Var& cls_rows, Modality which);

// exp(log_tau) as a one-element Var.
Var temperature(const BoundModel& m);

}  // namespace syncmask
