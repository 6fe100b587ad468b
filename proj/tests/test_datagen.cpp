#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "syncmask/datagen.hpp"

using namespace syncmask;

namespace {

ItemSpec fixed_item(const DataConfig& cfg, std::vector<int> values) {
    ItemSpec item;
    item.item_id = 3;
    item.values = std::move(values);
    for (int i = cfg.slots; i < cfg.text_len; ++i) {
        item.fillers.push_back(cfg.first_filler() + i);
    }
    return item;
}

}  // namespace

TEST_CASE("data config layout") {
    const DataConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.attribute_token(0, 0) == 1);
    CHECK(cfg.attribute_token(3, 7) == 32);
    CHECK(cfg.first_filler() == 33);
    CHECK(cfg.slot_of(1) == 0);
    CHECK(cfg.slot_of(32) == 3);
    CHECK(cfg.slot_of(40) == -1);
    CHECK(cfg.slot_of(cfg.mask_token_id) == -1);
    std::set<int> covered;
    for (int s = 0; s < cfg.slots; ++s) {
        const auto r = cfg.region(s);
        CHECK(r.size() == 4);
        covered.insert(r.begin(), r.end());
    }
    CHECK(covered.size() == 16);
    DataConfig small = cfg;
    small.vocab_size = 30;
    small.mask_token_id = 29;
    CHECK_THROWS(small.validate());
}

TEST_CASE("corpus sizes and ids") {
    const DataConfig cfg;
    CHECK(generate_corpus(1, 1, cfg, 1).pairs.size() == 1);
    const Corpus c = generate_corpus(64, 4, cfg, 2);
    CHECK(c.pairs.size() == 256);
    std::set<int> ids;
    for (const Pair& p : c.pairs) {
        ids.insert(p.item_id);
    }
    CHECK(ids.size() == 64);
    const Corpus e = generate_corpus(8, 1, cfg, 3, 1000);
    CHECK(e.pairs.front().item_id == 1000);
    CHECK(e.pairs.back().item_id == 1007);
}

TEST_CASE("views share captions and differ in visibility") {
    const DataConfig cfg;
    const Corpus c = generate_corpus(32, 4, cfg, 4);
    for (std::size_t i = 0; i < c.pairs.size(); i += 4) {
        std::set<std::vector<unsigned char>> patterns;
        std::vector<int> seen(static_cast<std::size_t>(cfg.slots), 0);
        for (std::size_t v = 0; v < 4; ++v) {
            const Pair& p = c.pairs[i + v];
            CHECK(p.item_id == c.pairs[i].item_id);
            CHECK(p.caption == c.pairs[i].caption);
            CHECK(p.caption.size() == static_cast<std::size_t>(cfg.text_len));
            int shown = 0;
            for (int s = 0; s < cfg.slots; ++s) {
                shown += p.visible[static_cast<std::size_t>(s)];
                seen[static_cast<std::size_t>(s)] |= p.visible[static_cast<std::size_t>(s)];
            }
            CHECK(shown >= 1);
            patterns.insert(p.visible);
        }
        CHECK(patterns.size() == 4);
        for (const int s : seen) {
            CHECK(s == 1);
        }
    }
}

TEST_CASE("captions name every attribute then fillers") {
    const DataConfig cfg;
    const ItemSpec item = fixed_item(cfg, {1, 2, 3, 4});
    const std::vector<int> cap = caption_for(item, cfg);
    CHECK(cap[0] == cfg.attribute_token(0, 1));
    CHECK(cap[3] == cfg.attribute_token(3, 4));
    for (int i = cfg.slots; i < cfg.text_len; ++i) {
        CHECK(cfg.slot_of(cap[static_cast<std::size_t>(i)]) == -1);
        CHECK(cap[static_cast<std::size_t>(i)] < cfg.mask_token_id);
    }
}

TEST_CASE("rendering") {
    const DataConfig cfg;
    const std::vector<unsigned char> all{1, 1, 1, 1};
    Rng n0(1);
    CHECK_THROWS(render_view(fixed_item(cfg, {0, 0, 0, 0}), std::vector<unsigned char>{0, 0, 0, 0}, cfg, n0));

    Rng a(5);
    Rng b(5);
    const Tensor x = render_view(fixed_item(cfg, {1, 2, 3, 4}), all, cfg, a);
    const Tensor y = render_view(fixed_item(cfg, {6, 2, 3, 4}), all, cfg, b);
    Rng a2(5);
    CHECK(render_view(fixed_item(cfg, {1, 2, 3, 4}), all, cfg, a2) == x);
    const auto r0 = cfg.region(0);
    const std::set<int> inside(r0.begin(), r0.end());
    for (int p = 0; p < cfg.num_patches(); ++p) {
        double diff = 0.0;
        for (int c = 0; c < cfg.patch_dim; ++c) {
            diff = std::max(diff, std::abs(x.at(p, c) - y.at(p, c)));
        }
        if (inside.count(p)) {
            CHECK(diff > 0.1);
        } else {
            CHECK(diff == 0.0);  // same noise stream, same pattern
        }
    }

    // hidden slots stay at background up to noise
    Rng c(6);
    const Tensor h = render_view(fixed_item(cfg, {1, 2, 3, 4}), std::vector<unsigned char>{1, 0, 1, 1}, cfg, c);
    for (const int p : cfg.region(1)) {
        for (int d = 0; d < cfg.patch_dim; ++d) {
            CHECK(std::abs(h.at(p, d)) <= cfg.noise);
        }
    }
    const auto pattern = attribute_pattern(2, 3, cfg);
    CHECK(pattern.size() == static_cast<std::size_t>(cfg.patch_dim));
    for (const double v : pattern) {
        CHECK(std::abs(v) <= 1.0);
    }
    CHECK(attribute_pattern(2, 3, cfg) == pattern);
    CHECK(attribute_pattern(2, 4, cfg) != pattern);
}

TEST_CASE("visibility labels") {
    const DataConfig cfg;
    Pair p;
    p.caption = caption_for(fixed_item(cfg, {0, 1, 2, 3}), cfg);
    p.visible = {1, 1, 1, 1};
    auto labels = visibility_labels(p, cfg);
    CHECK(labels.size() == static_cast<std::size_t>(cfg.text_len));
    for (int i = 0; i < cfg.text_len; ++i) {
        CHECK(labels[static_cast<std::size_t>(i)] == (i < cfg.slots ? 1 : 0));
    }
    p.visible = {1, 1, 0, 1};
    labels = visibility_labels(p, cfg);
    CHECK(labels[2] == 0);
    int count = 0;
    for (const auto v : labels) {
        count += v;
    }
    CHECK(count == 3);
}

TEST_CASE("visibility patterns") {
    const DataConfig cfg;
    Rng rng(7);
    const auto pats = visibility_patterns(15, cfg, rng);
    CHECK(pats.size() == 15);
    CHECK(pats[0] == std::vector<unsigned char>{1, 1, 1, 1});
    CHECK(std::set<std::vector<unsigned char>>(pats.begin(), pats.end()).size() == 15);
    CHECK_THROWS(visibility_patterns(16, cfg, rng));
    CHECK_THROWS(visibility_patterns(0, cfg, rng));
}

TEST_CASE("visible token rate") {
    const Corpus c = generate_corpus(64, 4, DataConfig{}, 8);
    long visible = 0;
    long total = 0;
    for (const Pair& p : c.pairs) {
        for (const auto v : visibility_labels(p, c.config)) {
            visible += v;
            ++total;
        }
    }
    CHECK(visible_token_rate(c) == doctest::Approx(static_cast<double>(visible) / total));
}

TEST_CASE("corpus generation is deterministic and round-trips through text") {
    const DataConfig cfg;
    const Corpus a = generate_corpus(6, 3, cfg, 9);
    CHECK(generate_corpus(6, 3, cfg, 9) == a);
    CHECK_FALSE(generate_corpus(6, 3, cfg, 10) == a);
    std::stringstream s;
    write_corpus(s, a);
    CHECK(read_corpus(s) == a);

    std::stringstream broken("syncmask-corpus v0\n");
    CHECK_THROWS(read_corpus(broken));
    std::stringstream full;
    write_corpus(full, a);
    std::string text = full.str();
    text.resize(text.size() / 2);
    std::stringstream truncated(text);
    CHECK_THROWS(read_corpus(truncated));
}
