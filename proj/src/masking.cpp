#include "syncmask/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace syncmask {

AttentionSummary summarize_attention(const CrossAttentionRecord& record) {
    const int heads = record.heads();
    if (heads == 0 || static_cast<int>(record.image_to_text.size()) != heads) {
        throw std::invalid_argument("summarize_attention: record needs the same nonzero head count in both directions");
    }
    const int text_rows = record.text_to_image.front().rows();   // N + 1
    const int image_rows = record.image_to_text.front().rows();  // N_img + 1
    if (text_rows < 2 || image_rows < 2) {
        throw std::invalid_argument("summarize_attention: need at least one non-[CLS] position per modality");
    }

    AttentionSummary out;
    out.text.assign(static_cast<std::size_t>(text_rows - 1), 0.0);
    out.image.assign(static_cast<std::size_t>(image_rows - 1), 0.0);
    for (int h = 0; h < heads; ++h) {
        const Tensor& i2t = record.image_to_text[static_cast<std::size_t>(h)];
        const Tensor& t2i = record.text_to_image[static_cast<std::size_t>(h)];
        if (i2t.rows() != image_rows || i2t.cols() != text_rows || t2i.rows() != text_rows ||
            t2i.cols() != image_rows) {
            throw std::invalid_argument("summarize_attention: inconsistent head shapes");
        }
        for (int r = 1; r < image_rows; ++r) {
            for (int j = 1; j < text_rows; ++j) {
                out.text[static_cast<std::size_t>(j - 1)] += i2t.at(r, j);
            }
        }
        for (int r = 1; r < text_rows; ++r) {
            for (int k = 1; k < image_rows; ++k) {
                out.image[static_cast<std::size_t>(k - 1)] += t2i.at(r, k);
            }
        }
    }
    const double text_norm = 1.0 / (static_cast<double>(heads) * (image_rows - 1));
    const double image_norm = 1.0 / (static_cast<double>(heads) * (text_rows - 1));
    for (double& v : out.text) {
        v *= text_norm;
    }
    for (double& v : out.image) {
        v *= image_norm;
    }
    return out;
}

void MaskConfig::validate() const {
    if (!(r_text >= 0.0 && r_text <= 1.0) || !(r_image >= 0.0 && r_image <= 1.0)) {
        throw std::invalid_argument("mask config: ratios must lie in [0, 1]");
    }
    if (!(pool_factor >= 1.0)) {
        throw std::invalid_argument("mask config: pool_factor must be >= 1");
    }
}

int mask_count(double ratio, int n) {
    return static_cast<int>(std::floor(ratio * n + 0.5));
}

int pool_size(int k, int n, double pool_factor) {
    const auto pool = static_cast<int>(std::ceil(pool_factor * k - 1e-12));
    return std::clamp(pool, k, n);
}

std::vector<int> select_mask_indices(std::span<const double> weights, int k, int l, Rng& rng) {
    const int n = static_cast<int>(weights.size());
    if (k < 0 || k > l || l > n) {
        throw std::invalid_argument("select_mask_indices: need 0 <= K <= L <= n, got K=" + std::to_string(k) +
                                    " L=" + std::to_string(l) + " n=" + std::to_string(n));
    }
    for (const double w : weights) {
        if (!std::isfinite(w)) {
            throw std::invalid_argument("select_mask_indices: non-finite weight");
        }
    }
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return weights[a] > weights[b]; });
    order.resize(static_cast<std::size_t>(l));
    rng.shuffle(std::span<int>(order));
    order.resize(static_cast<std::size_t>(k));
    return order;
}

std::vector<int> random_mask_indices(int n, int k, Rng& rng) {
    if (k < 0 || k > n) {
        throw std::invalid_argument("random_mask_indices: need 0 <= K <= n, got K=" + std::to_string(k) +
                                    " n=" + std::to_string(n));
    }
    std::vector<int> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), 0);
    rng.shuffle(std::span<int>(all));
    all.resize(static_cast<std::size_t>(k));
    return all;
}

std::vector<unsigned char> build_mask(std::span<const int> idx, int n) {
    std::vector<unsigned char> mask(static_cast<std::size_t>(n), 0);
    for (const int i : idx) {
        if (i < 0 || i >= n) {
            throw std::out_of_range("build_mask: index " + std::to_string(i) + " outside [0, " + std::to_string(n) +
                                    ")");
        }
        if (mask[static_cast<std::size_t>(i)]) {
            throw std::invalid_argument("build_mask: duplicate index " + std::to_string(i));
        }
        mask[static_cast<std::size_t>(i)] = 1;
    }
    return mask;
}

std::vector<int> apply_text_mask(std::span<const int> tokens, std::span<const unsigned char> mask, int mask_token_id) {
    if (tokens.size() != mask.size()) {
        throw std::invalid_argument("apply_text_mask: " + std::to_string(tokens.size()) + " tokens but mask of " +
                                    std::to_string(mask.size()));
    }
    std::vector<int> out(tokens.begin(), tokens.end());
    for (std::size_t j = 0; j < out.size(); ++j) {
        if (mask[j]) {
            out[j] = mask_token_id;
        }
    }
    return out;
}

ImageInput apply_image_mask(const Tensor& patches, std::span<const unsigned char> mask) {
    if (patches.rank() != 2 || static_cast<std::size_t>(patches.rows()) != mask.size()) {
        throw std::invalid_argument("apply_image_mask: " + shape_string(patches.shape()) + " patches but mask of " +
                                    std::to_string(mask.size()));
    }
    return ImageInput{&patches, std::vector<unsigned char>(mask.begin(), mask.end())};
}

TextInput make_text_input(std::span<const int> caption, int cls_token_id, bool masked) {
    TextInput input;
    input.tokens.reserve(caption.size() + 1);
    input.tokens.push_back(cls_token_id);
    input.tokens.insert(input.tokens.end(), caption.begin(), caption.end());
    input.masked = masked;
    return input;
}

std::string_view to_string(MaskStrategy s) {
    return s == MaskStrategy::random ? "random" : "attentional";
}

MaskStrategy parse_mask_strategy(std::string_view s) {
    if (s == "random") {
        return MaskStrategy::random;
    }
    if (s == "attentional") {
        return MaskStrategy::attentional;
    }
    throw std::invalid_argument("unknown masking strategy '" + std::string(s) + "'");
}

MaskPlan plan_masks(const AttentionSummary& summary, const MaskConfig& cfg, MaskStrategy text_strategy,
                    MaskStrategy image_strategy, Rng& rng, std::uint64_t provenance) {
    cfg.validate();
    const int n_text = static_cast<int>(summary.text.size());
    const int n_image = static_cast<int>(summary.image.size());
    const int k_text = mask_count(cfg.r_text, n_text);
    const int k_image = mask_count(cfg.r_image, n_image);

    Rng text_rng = rng.derive("text");
    Rng image_rng = rng.derive("image");
    MaskPlan plan;
    plan.provenance = provenance;
    plan.idx_text = text_strategy == MaskStrategy::attentional
                        ? select_mask_indices(summary.text, k_text, pool_size(k_text, n_text, cfg.pool_factor), text_rng)
                        : random_mask_indices(n_text, k_text, text_rng);
    plan.idx_image =
        image_strategy == MaskStrategy::attentional
            ? select_mask_indices(summary.image, k_image, pool_size(k_image, n_image, cfg.pool_factor), image_rng)
            : random_mask_indices(n_image, k_image, image_rng);
    plan.text = build_mask(plan.idx_text, n_text);
    plan.image = build_mask(plan.idx_image, n_image);
    return plan;
}

}  // namespace syncmask
