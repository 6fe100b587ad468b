#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "syncmask/ablation.hpp"
#include "syncmask/checkpoint.hpp"
#include "syncmask/config.hpp"
#include "syncmask/datagen.hpp"
#include "syncmask/evaluation.hpp"
#include "syncmask/selfcheck.hpp"
#include "syncmask/trainer.hpp"

namespace fs = std::filesystem;
using namespace syncmask;

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kConfigError = 2;

TrainConfig config_or_default(const std::string& path) {
    if (path.empty()) {
        TrainConfig cfg;
        cfg.validate();
        return cfg;
    }
    return load_config(path);
}

void print_recalls(const Recalls& r) {
    for (std::size_t i = 0; i < r.ks.size(); ++i) {
        std::printf("R@%d  i2t %.4f  t2i %.4f\n", r.ks[i], r.i2t[i], r.t2i[i]);
    }
}

int gen_data(const std::string& config_path, int items, int views, std::uint64_t seed, int id_base,
             const std::string& out) {
    const TrainConfig cfg = config_or_default(config_path);
    const Corpus corpus = generate_corpus(items, views, data_config_for(cfg.model), seed, id_base);
    save_corpus(out, corpus);
    std::printf("wrote %zu pairs (%d items x %d views) to %s\n", corpus.pairs.size(), items, views, out.c_str());
    return kOk;
}

int pretrain(const std::string& config_path, const std::string& data_path, const std::string& eval_path,
             const std::string& out_override) {
    TrainConfig cfg = config_or_default(config_path);
    if (!out_override.empty()) {
        cfg.output_dir = out_override;
    }
    const Corpus corpus = load_corpus(data_path);
    fs::create_directories(cfg.output_dir);
    const fs::path dir(cfg.output_dir);
    {
        std::ofstream c(dir / "config.json");
        c << config_to_json(cfg).dump(2) << '\n';
    }
    std::ofstream metrics(dir / "metrics.jsonl", std::ios::binary);
    std::ofstream timing(dir / "timing.log");
    if (!metrics || !timing) {
        throw std::runtime_error("cannot write into " + cfg.output_dir);
    }
    TrainState state = init_train_state(cfg, corpus);
    train(state, corpus, cfg, [&](const StepMetrics& m) {
        metrics << metrics_json(m) << '\n';
        timing << m.step << ' ' << m.wall_time << '\n';
        if (m.step % 32 == 31) {
            std::printf("epoch %d step %ld  total %.4f  mlm %.4f  mim %.4f  itc %.4f  itm %.4f\n", m.epoch, m.step,
                        m.losses.total, m.losses.mlm, m.losses.mim, m.losses.itc, m.losses.itm);
            std::fflush(stdout);
        }
    });
    save_checkpoint((dir / "checkpoint.bin").string(), state.model);
    std::printf("checkpoint written to %s\n", (dir / "checkpoint.bin").string().c_str());
    if (!eval_path.empty()) {
        print_recalls(evaluate_retrieval(state.model, load_corpus(eval_path), {1, 5, 10}));
    }
    return kOk;
}

int eval(const std::string& checkpoint, const std::string& data_path, const std::vector<int>& ks) {
    const DualModel model = load_checkpoint(checkpoint);
    print_recalls(evaluate_retrieval(model, load_corpus(data_path), ks));
    return kOk;
}

int dump(const std::string& config_path, const std::string& checkpoint, const std::string& data_path,
         const std::string& out, std::uint64_t seed) {
    const TrainConfig cfg = config_or_default(config_path);
    const DualModel model = load_checkpoint(checkpoint);
    const std::size_t n = dump_masks(model, load_corpus(data_path), cfg.mask, cfg.text_masking, cfg.image_masking,
                                     seed, out);
    std::printf("dumped %zu mask records to %s\n", n, out.c_str());
    return kOk;
}

int ablate(const std::string& config_path, const std::string& data_path, const std::string& eval_path,
           const std::vector<std::string>& axis_names, const std::string& out) {
    const TrainConfig cfg = config_or_default(config_path);
    std::vector<AblationAxis> axes;
    for (const std::string& a : axis_names) {
        try {
            axes.push_back(parse_ablation_axis(a));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
    if (axes.empty()) {
        axes = {AblationAxis::masking, AblationAxis::grouping};
    }
    const std::vector<AblationRow> rows = run_ablation(cfg, load_corpus(data_path), load_corpus(eval_path), axes);
    const std::string report = format_ablation(rows);
    std::fputs(report.c_str(), stdout);
    if (!out.empty()) {
        std::ofstream f(out, std::ios::binary);
        if (!(f << report)) {
            throw std::runtime_error("cannot write report to " + out);
        }
    }
    for (const AblationRow& r : rows) {
        if (!r.ok) {
            return kFailure;
        }
    }
    return kOk;
}

int selfcheck() {
    const auto started = std::chrono::steady_clock::now();
    bool all = true;
    for (const CheckResult& r : run_selfcheck()) {
        std::printf("%s  %s: %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
        all = all && r.pass;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    std::printf("%s in %.1fs\n", all ? "all checks passed" : "selfcheck FAILED", secs);
    return all ? kOk : kFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SyncMask desk-scale pretraining"};
    app.require_subcommand(1);

    std::string config_path;
    std::string data_path;
    std::string eval_path;
    std::string out;
    std::string checkpoint;
    std::uint64_t seed = 1;
    int items = 64;
    int views = 4;
    int id_base = 0;
    std::vector<int> ks{1, 5, 10};
    std::vector<std::string> axes;

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
    gen->add_option("--config", config_path, "config JSON (model shapes)");
    gen->add_option("--items", items, "number of items")->check(CLI::PositiveNumber);
    gen->add_option("--views", views, "views per item")->check(CLI::PositiveNumber);
    gen->add_option("--seed", seed, "corpus seed");
    gen->add_option("--item-id-base", id_base, "first item id");
    gen->add_option("--out", out, "corpus file")->required();

    auto* pre = app.add_subcommand("pretrain", "train student and teacher");
    pre->add_option("--config", config_path, "config JSON");
    pre->add_option("--data", data_path, "training corpus")->required();
    pre->add_option("--eval-data", eval_path, "held-out corpus for a final retrieval report");
    pre->add_option("--out", out, "output directory (overrides output_dir)");

    auto* ev = app.add_subcommand("eval", "image-text retrieval recall");
    ev->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    ev->add_option("--data", data_path, "eval corpus, one view per item")->required();
    ev->add_option("--k", ks, "recall cutoffs")->delimiter(',');

    auto* dm = app.add_subcommand("dump-masks", "write teacher masks and attention heatmaps");
    dm->add_option("--config", config_path, "config JSON (mask settings)");
    dm->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    dm->add_option("--data", data_path, "corpus")->required();
    dm->add_option("--out", out, "output directory")->required();
    dm->add_option("--seed", seed, "mask sampling seed");

    auto* ab = app.add_subcommand("ablate", "masking and grouping ablation tables");
    ab->add_option("--config", config_path, "base config JSON");
    ab->add_option("--data", data_path, "training corpus")->required();
    ab->add_option("--eval-data", eval_path, "held-out corpus")->required();
    ab->add_option("--axis", axes, "masking and/or grouping (default both)");
    ab->add_option("--out", out, "report file");

    auto* sc = app.add_subcommand("selfcheck", "run the invariant suite at tiny shapes");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        if (gen->parsed()) {
            return gen_data(config_path, items, views, seed, id_base, out);
        }
        if (pre->parsed()) {
            return pretrain(config_path, data_path, eval_path, out);
        }
        if (ev->parsed()) {
            return eval(checkpoint, data_path, ks);
        }
        if (dm->parsed()) {
            return dump(config_path, checkpoint, data_path, out, seed);
        }
        if (ab->parsed()) {
            return ablate(config_path, data_path, eval_path, axes, out);
        }
        if (sc->parsed()) {
            return selfcheck();
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kConfigError;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kFailure;
    }
    return kFailure;
}
