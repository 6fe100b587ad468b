#include "syncmask/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "syncmask/ops.hpp"

namespace syncmask {

Recalls recall_at_k(const Tensor& sim, const std::vector<int>& ks) {
    const int m = sim.rows();
    if (sim.rank() != 2 || sim.cols() != m || m < 1) {
        throw std::invalid_argument("recall_at_k: similarity must be square, got " + shape_string(sim.shape()));
    }
    for (const int k : ks) {
        if (k < 1 || k > m) {
            throw std::invalid_argument("recall_at_k: K = " + std::to_string(k) + " outside [1, " +
                                        std::to_string(m) + "]");
        }
    }
    // rank of the match = candidates strictly better, plus equal ones at a lower index
    std::vector<int> rank_i2t(static_cast<std::size_t>(m));
    std::vector<int> rank_t2i(static_cast<std::size_t>(m));
    for (int q = 0; q < m; ++q) {
        const double own_i2t = sim.at(q, q);
        int r1 = 0;
        int r2 = 0;
        for (int c = 0; c < m; ++c) {
            if (c == q) {
                continue;
            }
            const double i2t = sim.at(q, c);
            const double t2i = sim.at(c, q);
            r1 += i2t > own_i2t || (i2t == own_i2t && c < q);
            r2 += t2i > own_i2t || (t2i == own_i2t && c < q);
        }
        rank_i2t[static_cast<std::size_t>(q)] = r1;
        rank_t2i[static_cast<std::size_t>(q)] = r2;
    }
    Recalls out;
    out.ks = ks;
    for (const int k : ks) {
        int h1 = 0;
        int h2 = 0;
        for (int q = 0; q < m; ++q) {
            h1 += rank_i2t[static_cast<std::size_t>(q)] < k;
            h2 += rank_t2i[static_cast<std::size_t>(q)] < k;
        }
        out.i2t.push_back(static_cast<double>(h1) / m);
        out.t2i.push_back(static_cast<double>(h2) / m);
    }
    return out;
}

void project_corpus(const DualModel& model, const Corpus& corpus, Tensor& image_proj, Tensor& text_proj) {
    const int m = static_cast<int>(corpus.pairs.size());
    const ModelConfig& mc = model.config;
    image_proj = Tensor({m, mc.proj_dim});
    text_proj = Tensor({m, mc.proj_dim});
    // Each pair gets its own tape over the read-only parameters.
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        const Pair& pair = corpus.pairs[static_cast<std::size_t>(i)];
        Tape tape;
        const BoundModel s = bind_student(tape, model, false);
        const Var img = encode_image(s, ImageInput{&pair.patches, {}});
        const Var txt = encode_text(s, make_text_input(pair.caption, mc.cls_token_id));
        const Tensor pv = itc_project(s, slice_rows(img, 0, 1), Modality::visual).value();
        const Tensor pt = itc_project(s, slice_rows(txt, 0, 1), Modality::textual).value();
        std::copy(pv.data().begin(), pv.data().end(), image_proj.row(i).begin());
        std::copy(pt.data().begin(), pt.data().end(), text_proj.row(i).begin());
    }
}

Recalls evaluate_retrieval(const DualModel& model, const Corpus& eval, const std::vector<int>& ks) {
    std::set<int> items;
    for (const Pair& p : eval.pairs) {
        if (!items.insert(p.item_id).second) {
            throw std::invalid_argument("evaluate_retrieval: item " + std::to_string(p.item_id) +
                                        " appears more than once");
        }
    }
    Tensor image_proj;
    Tensor text_proj;
    project_corpus(model, eval, image_proj, text_proj);
    const int m = image_proj.rows();
    Tensor sim({m, m});
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) {
            double dot = 0.0;
            for (int c = 0; c < image_proj.cols(); ++c) {
                dot += image_proj.at(i, c) * text_proj.at(j, c);
            }
            sim.at(i, j) = dot;
        }
    }
    return recall_at_k(sim, ks);
}

PairMasks pair_masks(const DualModel& model, const Corpus& corpus, std::size_t index, const MaskConfig& cfg,
                     MaskStrategy text_strategy, MaskStrategy image_strategy, std::uint64_t seed) {
    const Pair& pair = corpus.pairs.at(index);
    Tape tape;
    const BoundModel teacher = bind_teacher(tape, model);
    const Var text = encode_text(teacher, make_text_input(pair.caption, model.config.cls_token_id));
    const Var image = encode_image(teacher, ImageInput{&pair.patches, {}});
    PairMasks out;
    out.summary = summarize_attention(fuse(teacher, text, image).attention);
    Rng rng = Rng(seed).derive(index);
    out.plan = plan_masks(out.summary, cfg, text_strategy, image_strategy, rng, index);
    out.visible = visibility_labels(pair, corpus.config);
    return out;
}

MaskVisibility mask_visibility(const DualModel& model, const Corpus& corpus, const MaskConfig& cfg,
                               MaskStrategy text_strategy, std::uint64_t seed) {
    const long n = static_cast<long>(corpus.pairs.size());
    long masked = 0;
    long visible = 0;
#pragma omp parallel for schedule(static) reduction(+ : masked, visible)
    for (long i = 0; i < n; ++i) {
        const PairMasks pm = pair_masks(model, corpus, static_cast<std::size_t>(i), cfg, text_strategy,
                                        MaskStrategy::random, seed);
        for (const int j : pm.plan.idx_text) {
            visible += pm.visible[static_cast<std::size_t>(j)];
            ++masked;
        }
    }
    return {masked, visible};
}

std::string heatmap_pgm(const std::vector<double>& weights, int side) {
    if (side < 1 || static_cast<int>(weights.size()) != side * side) {
        throw std::invalid_argument("heatmap_pgm: need side * side weights");
    }
    double mx = 0.0;
    for (const double w : weights) {
        mx = std::max(mx, w);
    }
    std::ostringstream out;
    out << "P2\n" << side << ' ' << side << "\n255\n";
    for (int r = 0; r < side; ++r) {
        for (int c = 0; c < side; ++c) {
            const double w = weights[static_cast<std::size_t>(r * side + c)];
            const long level = mx > 0.0 ? std::lround(255.0 * w / mx) : 0;
            out << (c ? " " : "") << level;
        }
        out << '\n';
    }
    return out.str();
}

namespace {

template <class T>
void put_list(std::ostream& out, const char* key, const std::vector<T>& values) {
    out << ' ' << key << '=';
    for (std::size_t i = 0; i < values.size(); ++i) {
        out << (i ? "," : "") << +values[i];
    }
}

}  // namespace

std::size_t dump_masks(const DualModel& model, const Corpus& corpus, const MaskConfig& cfg,
                       MaskStrategy text_strategy, MaskStrategy image_strategy, std::uint64_t seed,
                       const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw std::runtime_error("dump_masks: cannot create " + dir + ": " + ec.message());
    }
    const std::string text_path = (std::filesystem::path(dir) / "masks.txt").string();
    std::ofstream out(text_path);
    if (!out) {
        throw std::runtime_error("dump_masks: cannot write " + text_path);
    }
    out.precision(17);
    const int side = model.config.patches_per_side;
    for (std::size_t i = 0; i < corpus.pairs.size(); ++i) {
        const PairMasks pm = pair_masks(model, corpus, i, cfg, text_strategy, image_strategy, seed);
        out << "pair " << i << " item=" << corpus.pairs[i].item_id;
        put_list(out, "o_text", pm.summary.text);
        put_list(out, "o_image", pm.summary.image);
        put_list(out, "idx_text", pm.plan.idx_text);
        put_list(out, "idx_image", pm.plan.idx_image);
        put_list(out, "visible", pm.visible);
        out << '\n';

        char name[32];
        std::snprintf(name, sizeof name, "heatmap_%05zu.pgm", i);
        std::ofstream pgm(std::filesystem::path(dir) / name);
        if (!pgm) {
            throw std::runtime_error("dump_masks: cannot write heatmap in " + dir);
        }
        pgm << heatmap_pgm(pm.summary.image, side);
    }
    if (!out) {
        throw std::runtime_error("dump_masks: error writing " + text_path);
    }
    return corpus.pairs.size();
}

}  // namespace syncmask
