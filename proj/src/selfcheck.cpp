#include "syncmask/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <sstream>

#include "syncmask/ops.hpp"

namespace syncmask {

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.data()) {
        v = rng.uniform(lo, hi);
    }
    return t;
}

Tensor random_unit_rows(int rows, int cols, Rng& rng) {
    Tensor t({rows, cols});
    for (int r = 0; r < rows; ++r) {
        double ss = 0.0;
        for (double& v : t.row(r)) {
            v = rng.normal();
            ss += v * v;
        }
        for (double& v : t.row(r)) {
            v /= std::sqrt(ss);
        }
    }
    return t;
}

// Reduces any tensor-valued op to a scalar with fixed random weights, so that
// every output element carries a distinct gradient.
ScalarBuilder weighted(std::function<Var(Tape&, const std::vector<Var>&)> op, Shape out_shape, Rng& rng) {
    auto w = std::make_shared<Tensor>(random_tensor(std::move(out_shape), rng));
    return [op = std::move(op), w](Tape& tape, const std::vector<Var>& x) {
        return sum(mul(op(tape, x), tape.constant(*w)));
    };
}

}  // namespace

std::vector<GradCase> op_grad_cases(std::uint64_t seed) {
    Rng rng(seed);
    std::vector<GradCase> cases;
    auto add_case = [&](std::string name, std::function<Var(Tape&, const std::vector<Var>&)> op, Shape out,
                        std::vector<Tensor> inputs) {
        cases.push_back({std::move(name), weighted(std::move(op), std::move(out), rng), std::move(inputs)});
    };
    using V = std::vector<Var>;

    add_case("matmul", [](Tape&, const V& x) { return matmul(x[0], x[1]); }, {3, 4},
             {random_tensor({3, 5}, rng), random_tensor({5, 4}, rng)});
    add_case("matmul_nt", [](Tape&, const V& x) { return matmul_nt(x[0], x[1]); }, {3, 4},
             {random_tensor({3, 5}, rng), random_tensor({4, 5}, rng)});
    add_case("transpose", [](Tape&, const V& x) { return transpose(x[0]); }, {4, 3}, {random_tensor({3, 4}, rng)});
    add_case("add", [](Tape&, const V& x) { return add(x[0], x[1]); }, {3, 4},
             {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)});
    add_case("sub", [](Tape&, const V& x) { return sub(x[0], x[1]); }, {3, 4},
             {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)});
    add_case("mul", [](Tape&, const V& x) { return mul(x[0], x[1]); }, {3, 4},
             {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)});
    add_case("scale", [](Tape&, const V& x) { return scale(x[0], -1.7); }, {3, 4}, {random_tensor({3, 4}, rng)});
    add_case("add_row", [](Tape&, const V& x) { return add_row(x[0], x[1]); }, {3, 4},
             {random_tensor({3, 4}, rng), random_tensor({4}, rng)});
    add_case("mul_scalar", [](Tape&, const V& x) { return mul_scalar(x[0], x[1]); }, {3, 4},
             {random_tensor({3, 4}, rng), random_tensor({1}, rng)});
    add_case("exp", [](Tape&, const V& x) { return exp(x[0]); }, {3, 4}, {random_tensor({3, 4}, rng)});
    add_case("reciprocal", [](Tape&, const V& x) { return reciprocal(x[0]); }, {3, 4},
             {random_tensor({3, 4}, rng, 0.5, 2.0)});
    add_case("gelu", [](Tape&, const V& x) { return gelu(x[0]); }, {3, 4}, {random_tensor({3, 4}, rng, -3.0, 3.0)});
    add_case("softmax_rows", [](Tape&, const V& x) { return softmax_rows(x[0]); }, {3, 5},
             {random_tensor({3, 5}, rng, -2.0, 2.0)});
    add_case("log_softmax_rows", [](Tape&, const V& x) { return log_softmax_rows(x[0]); }, {3, 5},
             {random_tensor({3, 5}, rng, -2.0, 2.0)});
    add_case("layer_norm", [](Tape&, const V& x) { return layer_norm(x[0], x[1], x[2]); }, {3, 8},
             {random_tensor({3, 8}, rng), random_tensor({8}, rng), random_tensor({8}, rng)});
    add_case("sum", [](Tape&, const V& x) { return sum(x[0]); }, {1}, {random_tensor({3, 4}, rng)});
    add_case("mean", [](Tape&, const V& x) { return mean(x[0]); }, {1}, {random_tensor({3, 4}, rng)});
    add_case("slice_rows", [](Tape&, const V& x) { return slice_rows(x[0], 1, 2); }, {2, 4},
             {random_tensor({4, 4}, rng)});
    add_case("slice_cols", [](Tape&, const V& x) { return slice_cols(x[0], 1, 2); }, {4, 2},
             {random_tensor({4, 4}, rng)});
    add_case("concat_rows", [](Tape&, const V& x) { return concat_rows({x[0], x[1]}); }, {5, 3},
             {random_tensor({2, 3}, rng), random_tensor({3, 3}, rng)});
    add_case("concat_cols", [](Tape&, const V& x) { return concat_cols({x[0], x[1]}); }, {3, 5},
             {random_tensor({3, 2}, rng), random_tensor({3, 3}, rng)});
    add_case("gather_rows",
             [](Tape&, const V& x) {
                 const int ids[] = {2, 0, 2, 3};
                 return gather_rows(x[0], ids);
             },
             {4, 3}, {random_tensor({5, 3}, rng)});
    add_case("replace_rows",
             [](Tape&, const V& x) {
                 const unsigned char mask[] = {0, 1, 0, 1};
                 return replace_rows(x[0], mask, x[1]);
             },
             {4, 3}, {random_tensor({4, 3}, rng), random_tensor({3}, rng)});
    add_case("l2_normalize_rows", [](Tape&, const V& x) { return l2_normalize_rows(x[0]); }, {3, 4},
             {random_tensor({3, 4}, rng)});
    add_case("smooth_l1", [](Tape&, const V& x) { return smooth_l1(x[0], x[1], 1.0); }, {3, 4},
             {random_tensor({3, 4}, rng, -2.0, 2.0), random_tensor({3, 4}, rng, -2.0, 2.0)});

    // Losses are already scalar.
    {
        auto teacher = std::make_shared<Tensor>(random_tensor({5, 3}, rng));
        cases.push_back({"mim_distill",
                         [teacher](Tape&, const V& x) {
                             const unsigned char mask[] = {1, 0, 1, 1};
                             return mim_distill(*teacher, x[0], mask);
                         },
                         {random_tensor({5, 3}, rng, -2.0, 2.0)}});
    }
    cases.push_back({"mlm_loss",
                     [](Tape&, const V& x) {
                         const int targets[] = {1, 4, 0, 2};
                         const unsigned char mask[] = {1, 1, 0, 1};
                         return mlm_loss(x[0], targets, mask);
                     },
                     {random_tensor({4, 6}, rng, -2.0, 2.0)}});
    {
        auto qv = std::make_shared<Tensor>(random_unit_rows(8, 4, rng));
        auto qt = std::make_shared<Tensor>(random_unit_rows(8, 4, rng));
        cases.push_back({"itc_loss",
                         [qv, qt](Tape&, const V& x) {
                             const int positives[] = {5, 6};
                             return itc_loss(l2_normalize_rows(x[0]), l2_normalize_rows(x[1]), *qv, *qt, positives,
                                             exp(x[2]));
                         },
                         {random_tensor({2, 4}, rng), random_tensor({2, 4}, rng), Tensor::scalar(std::log(0.3))}});
    }
    cases.push_back({"itm_loss", [](Tape&, const V& x) { return itm_loss(x[0], x[1]); },
                     {random_tensor({2, 2}, rng, -2.0, 2.0), random_tensor({4, 2}, rng, -2.0, 2.0)}});
    return cases;
}

ModelConfig tiny_model_config() {
    ModelConfig c;
    c.dim = 8;
    c.heads = 2;
    c.layers_text = 1;
    c.layers_vision = 1;
    c.layers_fusion = 2;
    c.text_len = 4;
    c.patches_per_side = 2;
    c.patch_dim = 6;
    c.vocab_size = 12;
    c.mask_token_id = 11;
    c.cls_token_id = 0;
    c.proj_dim = 4;
    c.init_std = 0.5;
    return c;
}

Var TinyProblem::build(Tape&, const std::vector<Var>& params) const {
    BoundModel s{&config, &model.layout, params};
    return student_objective(s, inputs).total;
}

std::unique_ptr<TinyProblem> make_tiny_problem(std::uint64_t seed) {
    auto p = std::make_unique<TinyProblem>();
    p->config = tiny_model_config();
    Rng rng(seed);
    p->model = DualModel::create(p->config, 0.3, rng.derive("model").seed());
    Rng data = rng.derive("data");
    // Teacher differs from the student so MIM targets are not trivially met.
    for (Tensor& t : p->model.teacher.values()) {
        for (double& v : t.data()) {
            v += 0.1 * data.normal();
        }
    }
    const int b = 2;
    const int n = p->config.text_len;
    const int n_img = p->config.num_patches();
    for (int i = 0; i < b; ++i) {
        p->patches.push_back(random_tensor({n_img, p->config.patch_dim}, data));
    }
    Tape tape;
    const BoundModel teacher = bind_teacher(tape, p->model);
    for (int i = 0; i < b; ++i) {
        PairObjectiveInputs pair;
        pair.patches = &p->patches[static_cast<std::size_t>(i)];
        for (int j = 0; j < n; ++j) {
            pair.caption.push_back(1 + static_cast<int>(data.uniform_index(10)));
        }
        Rng mask_rng = data.derive(static_cast<std::uint64_t>(i));
        pair.plan.idx_text = random_mask_indices(n, 2, mask_rng);
        pair.plan.idx_image = random_mask_indices(n_img, 2, mask_rng);
        pair.plan.text = build_mask(pair.plan.idx_text, n);
        pair.plan.image = build_mask(pair.plan.idx_image, n_img);
        pair.teacher_image_feats = encode_image(teacher, ImageInput{pair.patches, {}}).value();
        p->inputs.pairs.push_back(std::move(pair));
        p->inputs.item_ids.push_back(i);
    }
    p->inputs.queue_v = random_unit_rows(8, p->config.proj_dim, data);
    p->inputs.queue_t = random_unit_rows(8, p->config.proj_dim, data);
    p->inputs.positives = {3, 4};
    p->negatives.image_for_text = {1, 0};
    p->negatives.text_for_image = {1, 0};
    p->inputs.negatives = &p->negatives;
    return p;
}

namespace {

std::string fmt(double v) {
    std::ostringstream out;
    out.precision(6);
    out << v;
    return out.str();
}

CheckResult check(std::string name, bool pass, std::string detail) {
    return {std::move(name), pass, std::move(detail)};
}

void smooth_l1_checks(const SmoothL1Fn& f, std::vector<CheckResult>& out) {
    const double a = f(1.0, 0.5, 1.0);
    const double b = f(3.0, 0.0, 1.0);
    const double c = f(2.0, 2.0, 1.0);
    out.push_back(check("smooth_l1 identities", a == 0.125 && b == 2.5 && c == 0.0,
                        "(1,0.5)=" + fmt(a) + " (3,0)=" + fmt(b) + " (2,2)=" + fmt(c)));
}

void gradient_checks(int seeds, std::vector<CheckResult>& out) {
    double worst = 0.0;
    std::string worst_name;
    for (int s = 0; s < seeds; ++s) {
        for (const GradCase& c : op_grad_cases(1000 + static_cast<std::uint64_t>(s))) {
            const GradCheckReport r = check_gradients(c.build, c.inputs);
            if (r.max_rel_error >= worst) {
                worst = r.max_rel_error;
                worst_name = c.name;
            }
        }
    }
    out.push_back(check("op gradients", worst < 1e-4, "worst " + fmt(worst) + " (" + worst_name + ")"));

    const auto problem = make_tiny_problem(7);
    const GradCheckReport r = check_gradients(
        [&](Tape& tape, const std::vector<Var>& x) { return problem->build(tape, x); },
        problem->model.student.values());
    out.push_back(check("objective gradient", r.max_rel_error < 1e-4,
                        "max rel error " + fmt(r.max_rel_error) + " over " + std::to_string(r.coordinates)));
}

void loss_checks(std::vector<CheckResult>& out) {
    Tape tape;
    const int vocab = 8;
    const int targets[] = {1, 2, 3};
    const unsigned char mask[] = {1, 1, 1};
    const double mlm = mlm_loss(tape.constant(Tensor({3, vocab})), targets, mask).value().item();
    out.push_back(check("uniform MLM = ln vocab", std::abs(mlm - std::log(8.0)) < 1e-9, fmt(mlm)));

    Tensor q({4, 2});
    for (int r = 0; r < 4; ++r) {
        q.at(r, 0) = 1.0;
    }
    const Var bv = tape.constant(Tensor::matrix({{1.0, 0.0}}));
    const int pos[] = {0};
    const double uniform = itc_loss(bv, bv, q, q, pos, tape.constant(Tensor::scalar(0.3))).value().item();
    out.push_back(check("uniform ITC = ln U", std::abs(uniform - std::log(4.0)) < 1e-9, fmt(uniform)));

    const Tensor hard = Tensor::matrix({{1.0, 0.0}, {0.0, 1.0}, {0.0, 1.0}, {0.0, 1.0}});
    const double h = itc_loss(bv, bv, hard, hard, pos, tape.constant(Tensor::scalar(1.0))).value().item();
    const double expect = std::log(1.0 + 3.0 / std::exp(1.0));
    out.push_back(check("hard-positive ITC = ln(1+3/e)", std::abs(h - expect) < 1e-9, fmt(h)));

    const double itm = itm_loss(tape.constant(Tensor({2, 2})), tape.constant(Tensor({4, 2}))).value().item();
    out.push_back(check("zero-logit ITM = ln 2", std::abs(itm - std::log(2.0)) < 1e-9, fmt(itm)));

    const LossBundle bundle = total_loss(0.1, 0.2, 0.3, 0.4);
    out.push_back(check("total is the sum of parts",
                        std::abs(bundle.total - (bundle.mim + bundle.mlm + bundle.itc + bundle.itm)) < 1e-12,
                        fmt(bundle.total)));
}

void ema_checks(std::vector<CheckResult>& out) {
    const DualModel base = DualModel::create(tiny_model_config(), 0.07, 3);
    ParameterSet student = base.student;
    for (Tensor& t : student.values()) {
        for (double& v : t.data()) {
            v += 1.0;
        }
    }
    ParameterSet t1 = base.teacher;
    ema_update(t1, student, 1.0);
    ParameterSet t0 = base.teacher;
    ema_update(t0, student, 0.0);
    ParameterSet half;
    half.add("x", Tensor::scalar(2.0));
    ParameterSet target;
    target.add("x", Tensor::scalar(4.0));
    ema_update(half, target, 0.5);
    out.push_back(check("EMA boundaries", t1 == base.teacher && t0 == student && half[0].item() == 3.0,
                        "beta 1 keeps, beta 0 copies, beta 0.5 averages"));
}

void sampler_checks(std::vector<CheckResult>& out) {
    Rng rng(11);
    int mismatches = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const int s_count = 8;
        Tensor v2t({s_count, s_count});
        for (double& x : v2t.data()) {
            x = rng.uniform(-1.0, 1.0);
        }
        const Tensor t2v = transpose(v2t);
        std::vector<int> items;
        for (int i = 0; i < s_count; ++i) {
            items.push_back(static_cast<int>(rng.uniform_index(4)));
        }
        for (const GroupingStrategy strategy : {GroupingStrategy::hardest, GroupingStrategy::semihard}) {
            for (const bool efn : {false, true}) {
                GroupingConfig cfg;
                cfg.strategy = strategy;
                cfg.efn = efn;
                const int start = static_cast<int>(rng.uniform_index(s_count));
                mismatches += group_from(v2t, t2v, items, cfg.rank(), efn, start) !=
                              brute_force_group(v2t, t2v, items, cfg, start);
            }
        }
    }
    out.push_back(check("grouping matches brute force", mismatches == 0,
                        std::to_string(mismatches) + " mismatches in 400 instances"));
}

void mask_checks(std::vector<CheckResult>& out) {
    Rng rng(13);
    int bad = 0;
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> w(16);
        for (double& x : w) {
            x = rng.uniform();
        }
        const int k = mask_count(0.3, 16);
        const int l = pool_size(k, 16, 2.0);
        std::vector<int> order(16);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return w[a] > w[b]; });
        const std::vector<int> top(order.begin(), order.begin() + l);
        const std::vector<int> idx = select_mask_indices(w, k, l, rng);
        bad += static_cast<int>(idx.size()) != k;
        for (const int i : idx) {
            bad += std::find(top.begin(), top.end(), i) == top.end();
        }
    }
    out.push_back(check("mask selection within top-L", bad == 0, std::to_string(bad) + " violations"));
}

}  // namespace

std::vector<CheckResult> run_selfcheck(const SelfcheckOptions& options) {
    std::vector<CheckResult> out;
    const SmoothL1Fn f = options.smooth_l1
                             ? options.smooth_l1
                             : SmoothL1Fn([](double a, double b, double g) { return smooth_l1(a, b, g); });
    auto guarded = [&](const char* name, auto&& fn) {
        try {
            fn();
        } catch (const std::exception& e) {
            out.push_back(check(name, false, std::string("threw: ") + e.what()));
        }
    };
    guarded("smooth_l1 identities", [&] { smooth_l1_checks(f, out); });
    guarded("gradients", [&] { gradient_checks(options.grad_seeds, out); });
    guarded("closed-form losses", [&] { loss_checks(out); });
    guarded("EMA", [&] { ema_checks(out); });
    guarded("sampler oracle", [&] { sampler_checks(out); });
    guarded("mask selection", [&] { mask_checks(out); });
    return out;
}

}  // namespace syncmask
