// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
// usage: syncmask_acceptance <path to syncmask CLI> <scratch dir>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "syncmask/config.hpp"
#include "syncmask/datagen.hpp"
#include "syncmask/evaluation.hpp"
#include "syncmask/losses.hpp"
#include "syncmask/masking.hpp"
#include "syncmask/momentum.hpp"
#include "syncmask/ops.hpp"
#include "syncmask/sampler.hpp"
#include "syncmask/selfcheck.hpp"
#include "syncmask/trainer.hpp"

using namespace syncmask;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

int failures = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
    std::printf("%s  %s: %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
    failures += pass ? 0 : 1;
}

// Runs fn, turning an exception into a FAIL line for that criterion.
void criterion(const std::string& name, const std::function<void()>& fn) {
    try {
        fn();
    } catch (const std::exception& e) {
        report(name, false, std::string("threw: ") + e.what());
    }
}

Tensor uniform_tensor(Shape shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (double& v : t.data()) {
        v = rng.uniform(-1.0, 1.0);
    }
    return t;
}

// Indices of the l largest weights by a full sort, ties to the lower index.
std::vector<int> top_by_sort(const std::vector<double>& w, int l) {
    std::vector<int> order(w.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return w[static_cast<std::size_t>(a)] > w[static_cast<std::size_t>(b)]; });
    order.resize(static_cast<std::size_t>(l));
    std::sort(order.begin(), order.end());
    return order;
}

void gradient_suite() {
    const auto t0 = Clock::now();
    double worst_op = 0.0;
    std::string worst_name;
    double worst_objective = 0.0;
    std::size_t coords = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        for (const GradCase& c : op_grad_cases(seed)) {
            const GradCheckReport r = check_gradients(c.build, c.inputs);
            coords += r.coordinates;
            if (r.max_rel_error >= worst_op) {
                worst_op = r.max_rel_error;
                worst_name = c.name;
            }
        }
        const auto p = make_tiny_problem(seed);
        const GradCheckReport r = check_gradients(
            [&](Tape& tape, const std::vector<Var>& x) { return p->build(tape, x); }, p->model.student.values());
        coords += r.coordinates;
        worst_objective = std::max(worst_objective, r.max_rel_error);
    }
    const double secs = seconds_since(t0);
    report("gradient suite", worst_op < 1e-4 && worst_objective < 1e-4 && secs < 120.0,
           "20 seeds, worst op " + fmt("%.2e", worst_op) + " (" + worst_name + "), full objective " +
               fmt("%.2e", worst_objective) + ", " + std::to_string(coords) + " coordinates in " +
               fmt("%.1fs", secs));
}

void mask_exactness() {
    const ModelConfig model;
    const MaskConfig cfg;
    const int n = model.text_len;
    const int n_img = model.num_patches();
    const int k = mask_count(cfg.r_text, n);
    const int k_img = mask_count(cfg.r_image, n_img);
    const int l = pool_size(k, n, cfg.pool_factor);
    const int l_img = pool_size(k_img, n_img, cfg.pool_factor);
    int size_errors = 0;
    int outside_pool = 0;
    int topk_mismatch = 0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        Rng rng(seed);
        AttentionSummary s;
        for (int i = 0; i < n; ++i) {
            s.text.push_back(rng.uniform());
        }
        for (int i = 0; i < n_img; ++i) {
            s.image.push_back(rng.uniform());
        }
        const MaskPlan plan = plan_masks(s, cfg, MaskStrategy::attentional, MaskStrategy::attentional, rng, seed);
        size_errors += static_cast<int>(plan.idx_text.size()) != k;
        size_errors += static_cast<int>(plan.idx_image.size()) != k_img;
        const auto pool_t = top_by_sort(s.text, l);
        const auto pool_v = top_by_sort(s.image, l_img);
        for (const int i : plan.idx_text) {
            outside_pool += !std::binary_search(pool_t.begin(), pool_t.end(), i);
        }
        for (const int i : plan.idx_image) {
            outside_pool += !std::binary_search(pool_v.begin(), pool_v.end(), i);
        }

        std::vector<int> exact = select_mask_indices(s.text, k, k, rng);
        std::sort(exact.begin(), exact.end());
        topk_mismatch += exact != top_by_sort(s.text, k);
    }
    report("mask exactness", size_errors == 0 && outside_pool == 0 && topk_mismatch == 0,
           "1000 selections, K=" + std::to_string(k) + " K'=" + std::to_string(k_img) + " L=" + std::to_string(l) +
               " L'=" + std::to_string(l_img) + ": " + std::to_string(size_errors) + " size errors, " +
               std::to_string(outside_pool) + " outside top-L, " + std::to_string(topk_mismatch) +
               " L=K mismatches");
}

void loss_closed_forms() {
    std::vector<std::string> bad;
    auto expect = [&](const std::string& what, double got, double want, double tol) {
        if (!(std::abs(got - want) <= tol)) {
            bad.push_back(what + "=" + fmt("%.15g", got));
        }
    };
    expect("smooth_l1(1,0.5,1)", smooth_l1(1.0, 0.5, 1.0), 0.125, 0.0);
    expect("smooth_l1(3,0,1)", smooth_l1(3.0, 0.0, 1.0), 2.5, 0.0);

    Tape tape;
    const int vocab = 64;
    const int targets[] = {5, 17, 40, 63};
    const unsigned char mask[] = {1, 0, 1, 1};
    expect("uniform MLM", mlm_loss(tape.constant(Tensor({4, vocab})), targets, mask).value().item(),
           std::log(static_cast<double>(vocab)), 1e-9);

    // Every queue entry identical to the batch vector: all logits tie.
    const int u = 16;
    Tensor same({u, 3});
    for (int r = 0; r < u; ++r) {
        same.at(r, 1) = 1.0;
    }
    const Var b = tape.constant(Tensor::matrix({{0.0, 1.0, 0.0}}));
    const int pos[] = {7};
    expect("uniform ITC", itc_loss(b, b, same, same, pos, tape.constant(Tensor::scalar(0.07))).value().item(),
           std::log(static_cast<double>(u)), 1e-9);

    // U=4, tau=1: positive has cosine 1, the three others cosine 0.
    const Tensor q4 = Tensor::matrix({{0.0, 1.0}, {1.0, 0.0}, {1.0, 0.0}, {1.0, 0.0}});
    const Var b4 = tape.constant(Tensor::matrix({{0.0, 1.0}}));
    const int pos4[] = {0};
    expect("U=4 hard-positive ITC",
           itc_loss(b4, b4, q4, q4, pos4, tape.constant(Tensor::scalar(1.0))).value().item(),
           std::log(1.0 + 3.0 / std::exp(1.0)), 1e-9);

    expect("zero-logit ITM", itm_loss(tape.constant(Tensor({3, 2})), tape.constant(Tensor({6, 2}))).value().item(),
           std::log(2.0), 1e-9);

    const double parts[] = {0.3141592653589793, 2.718281828459045, 1.4142135623730951, 0.5772156649015329};
    const LossBundle bundle = total_loss(parts[0], parts[1], parts[2], parts[3]);
    expect("additivity", bundle.total, ((parts[0] + parts[1]) + parts[2]) + parts[3], 1e-12);

    std::string detail = "smooth_l1, MLM ln 64, ITC ln 16, ln(1+3/e), ITM ln 2, additivity";
    for (const std::string& s : bad) {
        detail += "; off: " + s;
    }
    report("loss closed forms", bad.empty(), detail);
}

void ema() {
    const DualModel base = DualModel::create(tiny_model_config(), 0.07, 5);
    Rng rng(6);
    ParameterSet student = base.student;
    for (Tensor& t : student.values()) {
        for (double& v : t.data()) {
            v += rng.normal();
        }
    }
    ParameterSet keep = base.teacher;
    ema_update(keep, student, 1.0);
    ParameterSet copy = base.teacher;
    ema_update(copy, student, 0.0);
    ParameterSet half = base.teacher;
    ema_update(half, student, 0.5);
    bool half_exact = true;
    for (std::size_t i = 0; i < half.size(); ++i) {
        for (std::size_t j = 0; j < half[i].size(); ++j) {
            half_exact = half_exact && half[i][j] == 0.5 * base.teacher[i][j] + 0.5 * student[i][j];
        }
    }

    // Fixed student: teacher - student shrinks by beta every step.
    const double beta = 0.9;
    ParameterSet t = base.teacher;
    for (int step = 0; step < 50; ++step) {
        ema_update(t, student, beta);
    }
    const double decay = std::pow(beta, 50);
    double worst = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        for (std::size_t j = 0; j < t[i].size(); ++j) {
            const double want = student[i][j] + decay * (base.teacher[i][j] - student[i][j]);
            worst = std::max(worst, std::abs(t[i][j] - want));
        }
    }
    const bool pass = keep == base.teacher && copy == student && half_exact && worst < 1e-12;
    report("EMA", pass,
           std::string("beta 1 ") + (keep == base.teacher ? "keeps" : "CHANGES") + ", beta 0 " +
               (copy == student ? "copies" : "DIFFERS") + ", beta 0.5 " + (half_exact ? "exact" : "INEXACT") +
               ", 50-step decay error " + fmt("%.2e", worst));
}

void sampler_oracle() {
    int mismatches = 0;
    for (const GroupingStrategy strategy : {GroupingStrategy::hardest, GroupingStrategy::semihard}) {
        for (const bool efn : {false, true}) {
            GroupingConfig cfg;
            cfg.strategy = strategy;
            cfg.s = 3;
            cfg.efn = efn;
            for (std::uint64_t seed = 0; seed < 100; ++seed) {
                Rng rng(seed);
                const Tensor v2t = uniform_tensor({8, 8}, rng);
                const Tensor t2v = uniform_tensor({8, 8}, rng);
                std::vector<int> items(8);
                for (int& it : items) {
                    it = static_cast<int>(rng.uniform_index(4));
                }
                const auto order = group_subqueue(v2t, t2v, items, cfg, rng);
                mismatches += order != brute_force_group(v2t, t2v, items, cfg, order.at(0));
            }
        }
    }

    const Tensor hand = Tensor::matrix({{0.0, 0.9, 0.1}, {0.9, 0.0, 0.5}, {0.1, 0.5, 0.0}});
    const std::vector<int> distinct{0, 1, 2};
    const bool traced = group_from(hand, hand, distinct, 1, false, 0) == std::vector<int>{0, 1, 2} &&
                        group_from(hand, hand, distinct, 2, false, 0) == std::vector<int>{0, 2, 1};

    const Corpus corpus = generate_corpus(64, 4, DataConfig{}, 11);
    GroupingConfig efn_cfg;
    efn_cfg.strategy = GroupingStrategy::semihard;
    efn_cfg.s = 3;
    efn_cfg.efn = true;
    long violations = 0;
    long checked = 0;
    for (std::uint64_t trial = 0; trial < 1000; ++trial) {
        Rng rng(5000 + trial);
        std::vector<int> pick(corpus.pairs.size());
        std::iota(pick.begin(), pick.end(), 0);
        rng.shuffle(std::span<int>(pick));
        pick.resize(16);
        std::vector<int> items;
        for (const int p : pick) {
            items.push_back(corpus.pairs[static_cast<std::size_t>(p)].item_id);
        }
        const Tensor v2t = uniform_tensor({16, 16}, rng);
        const Tensor t2v = uniform_tensor({16, 16}, rng);
        const auto order = group_subqueue(v2t, t2v, items, efn_cfg, rng);
        std::multiset<int> left(items.begin(), items.end());
        left.erase(left.find(items[static_cast<std::size_t>(order[0])]));
        for (std::size_t k = 1; k < order.size(); ++k) {
            const int anchor = items[static_cast<std::size_t>(order[k - 1])];
            const int chosen = items[static_cast<std::size_t>(order[k])];
            if (left.size() > left.count(anchor)) {
                ++checked;
                violations += chosen == anchor;
            }
            left.erase(left.find(chosen));
        }
    }
    report("sampler oracle", mismatches == 0 && traced && violations == 0,
           std::to_string(mismatches) + "/400 oracle mismatches, hand-traced " + (traced ? "exact" : "WRONG") +
               ", EFN " + std::to_string(violations) + " same-item picks in " + std::to_string(checked) +
               " steps over 1000 trials");
}

// Semantic and retrieval criteria share one training run per seed.
void semantic_and_retrieval() {
    const std::uint64_t seeds[] = {1, 2, 3};
    const double measure_ratio = 0.15;
    double gain_sum = 0.0;
    double gain_default_sum = 0.0;
    bool baseline_ok = true;
    bool time_ok = true;
    bool retrieval_ok = true;
    std::string sem_detail;
    std::string ret_detail;
    for (const std::uint64_t seed : seeds) {
        TrainConfig cfg;
        cfg.seed = seed;
        cfg.validate();
        const DataConfig dc = data_config_for(cfg.model);
        const Corpus corpus = generate_corpus(64, 4, dc, 100 + seed);
        const Corpus held_out = generate_corpus(64, 1, dc, 200 + seed, 1000);

        const auto t0 = Clock::now();
        TrainState state = init_train_state(cfg, corpus);
        train(state, corpus, cfg);
        const double secs = seconds_since(t0);
        time_ok = time_ok && secs < 600.0;

        const double rate = visible_token_rate(corpus);
        MaskConfig mc = cfg.mask;
        mc.r_text = measure_ratio;
        const double attn = mask_visibility(state.model, corpus, mc, MaskStrategy::attentional, 5).fraction();
        const double rnd = mask_visibility(state.model, corpus, mc, MaskStrategy::random, 5).fraction();
        const double attn_default =
            mask_visibility(state.model, corpus, cfg.mask, MaskStrategy::attentional, 5).fraction();
        const double rnd_default = mask_visibility(state.model, corpus, cfg.mask, MaskStrategy::random, 5).fraction();
        baseline_ok = baseline_ok && std::abs(rnd - rate) <= 0.03;
        gain_sum += attn - rnd;
        gain_default_sum += attn_default - rnd_default;
        sem_detail += " seed " + std::to_string(seed) + ": " + fmt("%.3f", attn) + " vs " + fmt("%.3f", rnd) +
                      " (rate " + fmt("%.3f", rate) + ", " + fmt("%.0fs", secs) + ");";

        const Recalls r = evaluate_retrieval(state.model, held_out, {1});
        retrieval_ok = retrieval_ok && r.i2t[0] >= 0.078 && r.t2i[0] >= 0.078;
        ret_detail += " seed " + std::to_string(seed) + " i2t " + fmt("%.3f", r.i2t[0]) + " t2i " +
                      fmt("%.3f", r.t2i[0]) + ";";
    }
    const double gain = gain_sum / 3.0;
    report("semantic masking", gain >= 0.05 && baseline_ok && time_ok,
           "5 epochs x 256 pairs, visible fraction at r_text " + fmt("%.2f", measure_ratio) + " attentional vs random:" +
               sem_detail + " mean gain " + fmt("%.3f", gain) + " (at r_text 0.30: " +
               fmt("%.3f", gain_default_sum / 3.0) + ")");
    report("retrieval above chance", retrieval_ok, "R@1 on 64 held-out pairs, need >= 0.078:" + ret_detail);
}

int run(const std::string& command) {
    return std::system((command + " > /dev/null 2>&1").c_str());
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void ablation_shape(const std::string& cli, const fs::path& dir) {
    TrainConfig cfg;
    cfg.model.dim = 16;
    cfg.model.heads = 2;
    cfg.model.layers_text = 1;
    cfg.model.layers_vision = 1;
    cfg.model.layers_fusion = 1;
    cfg.model.patch_dim = 16;
    cfg.model.proj_dim = 8;
    cfg.grouping.batch_size = 8;
    cfg.grouping.subqueue_size = 16;
    cfg.grouping.collect_queue_size = 32;
    cfg.momentum.queue_size = 32;
    cfg.itc.queue_size = 32;
    cfg.epochs = 2;
    cfg.validate();
    const fs::path config = dir / "ablate_config.json";
    std::ofstream(config) << config_to_json(cfg).dump(2) << '\n';
    const fs::path train = dir / "ablate_train.txt";
    const fs::path eval = dir / "ablate_eval.txt";
    if (run(cli + " gen-data --config " + config.string() + " --items 16 --views 2 --seed 3 --out " +
            train.string()) != 0 ||
        run(cli + " gen-data --config " + config.string() + " --items 16 --views 1 --seed 4 --item-id-base 1000 --out " +
            eval.string()) != 0) {
        report("ablation shape", false, "gen-data failed");
        return;
    }
    const std::string ablate = cli + " ablate --config " + config.string() + " --data " + train.string() +
                               " --eval-data " + eval.string() + " --out ";
    const int rc1 = run(ablate + (dir / "ablate_1.txt").string());
    const int rc2 = run(ablate + (dir / "ablate_2.txt").string());
    const std::string a = slurp(dir / "ablate_1.txt");
    const std::string b = slurp(dir / "ablate_2.txt");

    std::multiset<std::string> masking;
    std::multiset<std::string> grouping;
    std::istringstream lines(a);
    std::string line;
    std::getline(lines, line);  // header
    int failed = 0;
    while (std::getline(lines, line)) {
        std::istringstream f(line);
        std::string axis;
        std::string label;
        std::string first;
        f >> axis >> label >> first;
        failed += first == "failed:";
        (axis == "masking" ? masking : grouping).insert(label);
    }
    const std::multiset<std::string> want_masking{"RtRv", "AtRv", "RtAv", "AtAv"};
    const std::multiset<std::string> want_grouping{"random", "hardest", "hardest+efn", "semihard+efn"};
    const bool shape = masking == want_masking && grouping == want_grouping;
    report("ablation shape", rc1 == 0 && rc2 == 0 && shape && failed == 0 && !a.empty() && a == b,
           std::to_string(masking.size()) + " masking + " + std::to_string(grouping.size()) + " grouping rows" +
               (shape ? "" : " (labels differ)") + ", " + std::to_string(failed) + " failed cells, reports " +
               (a == b ? "identical" : "DIFFER"));
}

void determinism(const std::string& cli, const fs::path& dir) {
    const fs::path data = dir / "det_train.txt";
    if (run(cli + " gen-data --items 64 --views 4 --seed 101 --out " + data.string()) != 0) {
        report("determinism", false, "gen-data failed");
        return;
    }
    const fs::path a = dir / "det_a";
    const fs::path b = dir / "det_b";
    fs::remove_all(a);
    fs::remove_all(b);
    const auto t0 = Clock::now();
    const int rc1 = run(cli + " pretrain --data " + data.string() + " --out " + a.string());
    const int rc2 = run(cli + " pretrain --data " + data.string() + " --out " + b.string());
    const double secs = seconds_since(t0);
    const std::string ma = slurp(a / "metrics.jsonl");
    const std::string ca = slurp(a / "checkpoint.bin");
    const bool metrics_same = !ma.empty() && ma == slurp(b / "metrics.jsonl");
    const bool ckpt_same = !ca.empty() && ca == slurp(b / "checkpoint.bin");
    const auto lines = std::count(ma.begin(), ma.end(), '\n');
    report("determinism", rc1 == 0 && rc2 == 0 && metrics_same && ckpt_same,
           "two default pretrain runs: metrics.jsonl " + std::string(metrics_same ? "identical" : "DIFFER") + " (" +
               std::to_string(lines) + " lines), checkpoint " + (ckpt_same ? "identical" : "DIFFERS") + " (" +
               std::to_string(ca.size()) + " bytes), " + fmt("%.0fs", secs));
}

}  // namespace

int main(int argc, char** argv) {
    if (argc != 3) {
        std::fprintf(stderr, "usage: %s <syncmask cli> <scratch dir>\n", argv[0]);
        return 2;
    }
    const std::string cli = argv[1];
    const fs::path dir = argv[2];
    fs::create_directories(dir);

    criterion("gradient suite", gradient_suite);
    criterion("mask exactness", mask_exactness);
    criterion("loss closed forms", loss_closed_forms);
    criterion("EMA", ema);
    criterion("sampler oracle", sampler_oracle);
    criterion("semantic masking", semantic_and_retrieval);
    criterion("ablation shape", [&] { ablation_shape(cli, dir); });
    criterion("determinism", [&] { determinism(cli, dir); });

    std::printf("%s\n", failures == 0 ? "all acceptance criteria passed" : "acceptance FAILED");
    return failures == 0 ? 0 : 1;
}
