#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "syncmask/model.hpp"
#include "syncmask/tensor.hpp"

// Synthetic "fashion-toy" corpus: each item has one caption naming all of its
// attributes and several views, each of which shows only some of them.
namespace syncmask {

struct DataConfig {
    int slots = 4;
    int values_per_slot = 8;
    int text_len = 16;
    int patches_per_side = 4;
    int patch_dim = 64;
    int vocab_size = 64;
    int mask_token_id = 63;
    int cls_token_id = 0;
    double noise = 0.05;
    // Seeds the (slot, value) -> pattern table. Kept apart from the corpus
    // seed so train and eval corpora share one visual vocabulary.
    std::uint64_t palette_seed = 0x5EEDC0DEULL;

    void validate() const;

    // Attribute token ids occupy [1, 1 + slots * values_per_slot).
    int attribute_token(int slot, int value) const { return 1 + slot * values_per_slot + value; }
    int first_filler() const { return 1 + slots * values_per_slot; }
    // One past the last filler id (fillers end just before the mask id).
    int filler_end() const { return mask_token_id; }
    // Slot named by a token, or -1 for fillers and specials.
    int slot_of(int token) const;

    int num_patches() const { return patches_per_side * patches_per_side; }
    // Patch indices (row-major) of the region slot a paints.
    std::vector<int> region(int slot) const;

    friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

// Data shape fields copied from a model config.
DataConfig data_config_for(const ModelConfig& model);

struct ItemSpec {
    int item_id = 0;
    std::vector<int> values;   // one value index per slot
    std::vector<int> fillers;  // text_len - slots filler tokens
};

struct Pair {
    int item_id = 0;
    int view = 0;
    std::vector<unsigned char> visible;  // per slot
    std::vector<int> caption;            // text_len tokens, no [CLS]
    Tensor patches;                      // num_patches x patch_dim

    friend bool operator==(const Pair&, const Pair&) = default;
};

struct Corpus {
    DataConfig config;
    std::uint64_t seed = 0;
    int n_items = 0;
    int views_per_item = 0;
    int item_id_base = 0;
    std::vector<Pair> pairs;

    friend bool operator==(const Corpus&, const Corpus&) = default;
};

ItemSpec make_item(int item_id, const DataConfig& cfg, Rng& rng);

// Caption: attribute tokens in slot order at positions 0..slots-1, fillers after.
std::vector<int> caption_for(const ItemSpec& item, const DataConfig& cfg);

// Visible slots paint their value pattern into their region; everything else
// stays at background 0. noise_rng adds uniform noise of amplitude cfg.noise.
Tensor render_view(const ItemSpec& item, std::span<const unsigned char> visibility, const DataConfig& cfg,
                   Rng& noise_rng);

// The pattern painted by (slot, value), length patch_dim, entries in [-1, 1].
std::vector<double> attribute_pattern(int slot, int value, const DataConfig& cfg);

// Per caption position: true iff the token names a slot visible in this view.
std::vector<unsigned char> visibility_labels(const Pair& pair, const DataConfig& cfg);

// View 0 shows every slot; each later view hides a distinct nonempty proper
// subset, so views_per_item <= 2^slots - 1.
std::vector<std::vector<unsigned char>> visibility_patterns(int views_per_item, const DataConfig& cfg, Rng& rng);

// n_items * views_per_item pairs, item ids item_id_base .. item_id_base + n_items - 1.
Corpus generate_corpus(int n_items, int views_per_item, const DataConfig& cfg, std::uint64_t seed,
                       int item_id_base = 0);

// Fraction of attribute positions over all caption positions that are visible.
double visible_token_rate(const Corpus& corpus);

void write_corpus(std::ostream& out, const Corpus& corpus);
Corpus read_corpus(std::istream& in);
void save_corpus(const std::string& path, const Corpus& corpus);
Corpus load_corpus(const std::string& path);

}  // namespace syncmask
