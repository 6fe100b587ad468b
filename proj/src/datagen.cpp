#include "syncmask/datagen.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace syncmask {

void DataConfig::validate() const {
    if (slots < 1 || values_per_slot < 1) {
        throw std::invalid_argument("data config: slots and values_per_slot must be positive");
    }
    if (slots > 4 || patches_per_side < 2 || patches_per_side % 2 != 0) {
        throw std::invalid_argument("data config: slot regions are grid quadrants, so slots <= 4 and an even "
                                    "patches_per_side are required");
    }
    if (text_len < slots + 1) {
        throw std::invalid_argument("data config: text_len must exceed the slot count");
    }
    if (cls_token_id != 0) {
        throw std::invalid_argument("data config: cls_token_id must be 0");
    }
    if (mask_token_id != vocab_size - 1) {
        throw std::invalid_argument("data config: mask_token_id must be vocab_size - 1");
    }
    if (first_filler() >= filler_end()) {
        throw std::invalid_argument("data config: vocab_size " + std::to_string(vocab_size) + " too small for " +
                                    std::to_string(slots) + "x" + std::to_string(values_per_slot) +
                                    " attribute tokens plus fillers");
    }
    if (patch_dim < 1 || !(noise >= 0.0 && noise <= 0.05)) {
        throw std::invalid_argument("data config: patch_dim must be positive and noise in [0, 0.05]");
    }
}

int DataConfig::slot_of(int token) const {
    if (token < 1 || token >= first_filler()) {
        return -1;
    }
    return (token - 1) / values_per_slot;
}

std::vector<int> DataConfig::region(int slot) const {
    if (slot < 0 || slot >= slots) {
        throw std::out_of_range("DataConfig::region: slot " + std::to_string(slot));
    }
    const int half = patches_per_side / 2;
    const int r0 = (slot / 2) * half;
    const int c0 = (slot % 2) * half;
    std::vector<int> out;
    for (int r = r0; r < r0 + half; ++r) {
        for (int c = c0; c < c0 + half; ++c) {
            out.push_back(r * patches_per_side + c);
        }
    }
    return out;
}

DataConfig data_config_for(const ModelConfig& model) {
    DataConfig cfg;
    cfg.text_len = model.text_len;
    cfg.patches_per_side = model.patches_per_side;
    cfg.patch_dim = model.patch_dim;
    cfg.vocab_size = model.vocab_size;
    cfg.mask_token_id = model.mask_token_id;
    cfg.cls_token_id = model.cls_token_id;
    return cfg;
}

ItemSpec make_item(int item_id, const DataConfig& cfg, Rng& rng) {
    ItemSpec item;
    item.item_id = item_id;
    for (int s = 0; s < cfg.slots; ++s) {
        item.values.push_back(static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(cfg.values_per_slot))));
    }
    const auto filler_count = static_cast<std::uint64_t>(cfg.filler_end() - cfg.first_filler());
    for (int j = cfg.slots; j < cfg.text_len; ++j) {
        item.fillers.push_back(cfg.first_filler() + static_cast<int>(rng.uniform_index(filler_count)));
    }
    return item;
}

std::vector<int> caption_for(const ItemSpec& item, const DataConfig& cfg) {
    if (static_cast<int>(item.values.size()) != cfg.slots ||
        static_cast<int>(item.fillers.size()) != cfg.text_len - cfg.slots) {
        throw std::invalid_argument("caption_for: item does not match the data config");
    }
    std::vector<int> caption;
    for (int s = 0; s < cfg.slots; ++s) {
        caption.push_back(cfg.attribute_token(s, item.values[static_cast<std::size_t>(s)]));
    }
    caption.insert(caption.end(), item.fillers.begin(), item.fillers.end());
    return caption;
}

std::vector<double> attribute_pattern(int slot, int value, const DataConfig& cfg) {
    Rng rng(derive_seed(derive_seed(cfg.palette_seed, static_cast<std::uint64_t>(slot)),
                        static_cast<std::uint64_t>(value)));
    std::vector<double> out(static_cast<std::size_t>(cfg.patch_dim));
    for (double& v : out) {
        v = rng.uniform(-1.0, 1.0);
    }
    return out;
}

Tensor render_view(const ItemSpec& item, std::span<const unsigned char> visibility, const DataConfig& cfg,
                   Rng& noise_rng) {
    if (static_cast<int>(visibility.size()) != cfg.slots || static_cast<int>(item.values.size()) != cfg.slots) {
        throw std::invalid_argument("render_view: visibility has " + std::to_string(visibility.size()) +
                                    " entries for " + std::to_string(cfg.slots) + " slots");
    }
    bool any = false;
    for (const unsigned char v : visibility) {
        any = any || v;
    }
    if (!any) {
        throw std::invalid_argument("render_view: a view must show at least one attribute");
    }
    Tensor grid({cfg.num_patches(), cfg.patch_dim});
    for (int s = 0; s < cfg.slots; ++s) {
        if (!visibility[static_cast<std::size_t>(s)]) {
            continue;
        }
        const std::vector<double> pattern = attribute_pattern(s, item.values[static_cast<std::size_t>(s)], cfg);
        for (const int p : cfg.region(s)) {
            std::copy(pattern.begin(), pattern.end(), grid.row(p).begin());
        }
    }
    for (double& v : grid.data()) {
        v += noise_rng.uniform(-cfg.noise, cfg.noise);
    }
    return grid;
}

std::vector<unsigned char> visibility_labels(const Pair& pair, const DataConfig& cfg) {
    std::vector<unsigned char> out(pair.caption.size(), 0);
    for (std::size_t j = 0; j < pair.caption.size(); ++j) {
        const int slot = cfg.slot_of(pair.caption[j]);
        if (slot >= 0 && slot < static_cast<int>(pair.visible.size())) {
            out[j] = pair.visible[static_cast<std::size_t>(slot)];
        }
    }
    return out;
}

std::vector<std::vector<unsigned char>> visibility_patterns(int views_per_item, const DataConfig& cfg, Rng& rng) {
    const int full = (1 << cfg.slots) - 1;
    if (views_per_item < 1 || views_per_item > full) {
        throw std::invalid_argument("visibility_patterns: views_per_item must lie in [1, " + std::to_string(full) +
                                    "]");
    }
    // Hidden-slot bitmasks 1 .. full-1: nonempty and never everything.
    std::vector<int> hidden;
    for (int m = 1; m < full; ++m) {
        hidden.push_back(m);
    }
    rng.shuffle(std::span<int>(hidden));
    std::vector<std::vector<unsigned char>> out;
    out.emplace_back(static_cast<std::size_t>(cfg.slots), 1);
    for (int v = 1; v < views_per_item; ++v) {
        std::vector<unsigned char> vis(static_cast<std::size_t>(cfg.slots));
        for (int s = 0; s < cfg.slots; ++s) {
            vis[static_cast<std::size_t>(s)] = (hidden[static_cast<std::size_t>(v - 1)] >> s & 1) ? 0 : 1;
        }
        out.push_back(std::move(vis));
    }
    return out;
}

Corpus generate_corpus(int n_items, int views_per_item, const DataConfig& cfg, std::uint64_t seed,
                       int item_id_base) {
    cfg.validate();
    if (n_items < 1 || views_per_item < 1) {
        throw std::invalid_argument("generate_corpus: n_items and views_per_item must be positive");
    }
    Corpus corpus;
    corpus.config = cfg;
    corpus.seed = seed;
    corpus.n_items = n_items;
    corpus.views_per_item = views_per_item;
    corpus.item_id_base = item_id_base;
    const Rng root(seed);
    for (int i = 0; i < n_items; ++i) {
        const Rng item_rng = root.derive(static_cast<std::uint64_t>(i));
        Rng spec_rng = item_rng.derive("spec");
        Rng vis_rng = item_rng.derive("visibility");
        const ItemSpec item = make_item(item_id_base + i, cfg, spec_rng);
        const std::vector<int> caption = caption_for(item, cfg);
        const auto patterns = visibility_patterns(views_per_item, cfg, vis_rng);
        for (int v = 0; v < views_per_item; ++v) {
            Rng noise_rng = item_rng.derive("noise").derive(static_cast<std::uint64_t>(v));
            Pair pair;
            pair.item_id = item.item_id;
            pair.view = v;
            pair.visible = patterns[static_cast<std::size_t>(v)];
            pair.caption = caption;
            pair.patches = render_view(item, pair.visible, cfg, noise_rng);
            corpus.pairs.push_back(std::move(pair));
        }
    }
    return corpus;
}

double visible_token_rate(const Corpus& corpus) {
    std::size_t visible = 0;
    std::size_t total = 0;
    for (const Pair& p : corpus.pairs) {
        for (const unsigned char v : visibility_labels(p, corpus.config)) {
            visible += v;
        }
        total += p.caption.size();
    }
    return total ? static_cast<double>(visible) / static_cast<double>(total) : 0.0;
}

namespace {

constexpr const char* kMagic = "syncmask-corpus v1";

void put_double(std::ostream& out, double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    out.write(buf, res.ptr - buf);
}

template <class T>
T expect_field(std::istream& in, const std::string& key) {
    std::string got;
    T value{};
    if (!(in >> got) || got != key || !(in >> value)) {
        throw std::runtime_error("corpus: expected field '" + key + "'");
    }
    return value;
}

double read_double(std::istream& in) {
    std::string tok;
    if (!(in >> tok)) {
        throw std::runtime_error("corpus: truncated patch data");
    }
    double v = 0.0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
        throw std::runtime_error("corpus: bad number '" + tok + "'");
    }
    return v;
}

}  // namespace

void write_corpus(std::ostream& out, const Corpus& corpus) {
    const DataConfig& c = corpus.config;
    out << kMagic << '\n';
    out << "seed " << corpus.seed << '\n';
    out << "n_items " << corpus.n_items << '\n';
    out << "views_per_item " << corpus.views_per_item << '\n';
    out << "item_id_base " << corpus.item_id_base << '\n';
    out << "slots " << c.slots << '\n';
    out << "values_per_slot " << c.values_per_slot << '\n';
    out << "text_len " << c.text_len << '\n';
    out << "patches_per_side " << c.patches_per_side << '\n';
    out << "patch_dim " << c.patch_dim << '\n';
    out << "vocab_size " << c.vocab_size << '\n';
    out << "mask_token_id " << c.mask_token_id << '\n';
    out << "cls_token_id " << c.cls_token_id << '\n';
    out << "noise ";
    put_double(out, c.noise);
    out << '\n';
    out << "palette_seed " << c.palette_seed << '\n';
    out << "pairs " << corpus.pairs.size() << '\n';
    for (const Pair& p : corpus.pairs) {
        out << "pair " << p.item_id << ' ' << p.view << ' ';
        for (const unsigned char v : p.visible) {
            out << (v ? '1' : '0');
        }
        out << '\n';
        for (std::size_t j = 0; j < p.caption.size(); ++j) {
            out << (j ? " " : "") << p.caption[j];
        }
        out << '\n';
        const auto data = p.patches.data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            if (i) {
                out << ' ';
            }
            put_double(out, data[i]);
        }
        out << '\n';
    }
}

Corpus read_corpus(std::istream& in) {
    std::string magic;
    std::getline(in, magic);
    if (magic != kMagic) {
        throw std::runtime_error("corpus: missing '" + std::string(kMagic) + "' header");
    }
    Corpus corpus;
    DataConfig& c = corpus.config;
    corpus.seed = expect_field<std::uint64_t>(in, "seed");
    corpus.n_items = expect_field<int>(in, "n_items");
    corpus.views_per_item = expect_field<int>(in, "views_per_item");
    corpus.item_id_base = expect_field<int>(in, "item_id_base");
    c.slots = expect_field<int>(in, "slots");
    c.values_per_slot = expect_field<int>(in, "values_per_slot");
    c.text_len = expect_field<int>(in, "text_len");
    c.patches_per_side = expect_field<int>(in, "patches_per_side");
    c.patch_dim = expect_field<int>(in, "patch_dim");
    c.vocab_size = expect_field<int>(in, "vocab_size");
    c.mask_token_id = expect_field<int>(in, "mask_token_id");
    c.cls_token_id = expect_field<int>(in, "cls_token_id");
    {
        std::string key;
        if (!(in >> key) || key != "noise") {
            throw std::runtime_error("corpus: expected field 'noise'");
        }
        c.noise = read_double(in);
    }
    c.palette_seed = expect_field<std::uint64_t>(in, "palette_seed");
    c.validate();
    const auto count = expect_field<std::size_t>(in, "pairs");
    if (count != static_cast<std::size_t>(corpus.n_items) * static_cast<std::size_t>(corpus.views_per_item)) {
        throw std::runtime_error("corpus: pair count disagrees with n_items * views_per_item");
    }
    corpus.pairs.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Pair p;
        std::string key;
        std::string bits;
        if (!(in >> key >> p.item_id >> p.view >> bits) || key != "pair" ||
            static_cast<int>(bits.size()) != c.slots) {
            throw std::runtime_error("corpus: malformed record " + std::to_string(i));
        }
        for (const char b : bits) {
            if (b != '0' && b != '1') {
                throw std::runtime_error("corpus: bad visibility bits '" + bits + "'");
            }
            p.visible.push_back(b == '1' ? 1 : 0);
        }
        p.caption.resize(static_cast<std::size_t>(c.text_len));
        for (int& t : p.caption) {
            if (!(in >> t) || t < 0 || t >= c.vocab_size) {
                throw std::runtime_error("corpus: bad caption token in record " + std::to_string(i));
            }
        }
        p.patches = Tensor({c.num_patches(), c.patch_dim});
        for (double& v : p.patches.data()) {
            v = read_double(in);
        }
        corpus.pairs.push_back(std::move(p));
    }
    return corpus;
}

void save_corpus(const std::string& path, const Corpus& corpus) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write corpus to " + path);
    }
    write_corpus(out, corpus);
    if (!out) {
        throw std::runtime_error("error writing corpus to " + path);
    }
}

Corpus load_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot read corpus from " + path);
    }
    return read_corpus(in);
}

}  // namespace syncmask
