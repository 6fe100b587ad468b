#include "syncmask/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "syncmask/kernels.hpp"
#include "syncmask/ops.hpp"

namespace syncmask {

double smooth_l1(double a, double b, double gamma) {
    const double d = std::abs(a - b);
    return d < gamma ? 0.5 * d * d : d - 0.5;
}

Tensor one_hot(std::span<const int> classes, int width) {
    Tensor out({static_cast<int>(classes.size()), width});
    for (std::size_t i = 0; i < classes.size(); ++i) {
        if (classes[i] < 0 || classes[i] >= width) {
            throw std::out_of_range("one_hot: class " + std::to_string(classes[i]) + " outside [0, " +
                                    std::to_string(width) + ")");
        }
        out.at(static_cast<int>(i), classes[i]) = 1.0;
    }
    return out;
}

Var soft_cross_entropy(const Var& logits, const Tensor& targets) {
    if (logits.shape() != targets.shape()) {
        throw std::invalid_argument("soft_cross_entropy: logits " + shape_string(logits.shape()) + " vs targets " +
                                    shape_string(targets.shape()));
    }
    Tape& tape = *logits.tape();
    const Var picked = mul(log_softmax_rows(logits), tape.constant(targets));
    return scale(sum(picked), -1.0 / logits.rows());
}

Var mim_distill(const Tensor& teacher_feats, const Var& student_feats, std::span<const unsigned char> image_mask,
                double gamma) {
    if (teacher_feats.shape() != student_feats.shape()) {
        throw std::invalid_argument("mim_distill: teacher " + shape_string(teacher_feats.shape()) + " vs student " +
                                    shape_string(student_feats.shape()));
    }
    if (static_cast<int>(image_mask.size()) + 1 != student_feats.rows()) {
        throw std::invalid_argument("mim_distill: mask length " + std::to_string(image_mask.size()) +
                                    " does not match " + std::to_string(student_feats.rows() - 1) + " patches");
    }
    std::vector<int> rows;
    for (std::size_t k = 0; k < image_mask.size(); ++k) {
        if (image_mask[k]) {
            rows.push_back(static_cast<int>(k) + 1);
        }
    }
    if (rows.empty()) {
        throw std::domain_error("mim_distill: no masked patch (Omega = 0)");
    }
    Tape& tape = *student_feats.tape();
    Tensor target({static_cast<int>(rows.size()), teacher_feats.cols()});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto src = teacher_feats.row(rows[i]);
        std::copy(src.begin(), src.end(), target.row(static_cast<int>(i)).begin());
    }
    const Var student_rows = gather_rows(student_feats, rows);
    // mean over Omega x D elements == (1 / Omega) * sum_k mean_D
    return mean(smooth_l1(student_rows, tape.constant(std::move(target)), gamma));
}

Var mlm_loss(const Var& logits, std::span<const int> target_ids, std::span<const unsigned char> text_mask) {
    const int n = logits.rows();
    if (static_cast<int>(target_ids.size()) != n || static_cast<int>(text_mask.size()) != n) {
        throw std::invalid_argument("mlm_loss: logits have " + std::to_string(n) + " rows but " +
                                    std::to_string(target_ids.size()) + " targets and mask of " +
                                    std::to_string(text_mask.size()));
    }
    std::vector<int> rows;
    std::vector<int> classes;
    for (int j = 0; j < n; ++j) {
        if (text_mask[static_cast<std::size_t>(j)]) {
            rows.push_back(j);
            classes.push_back(target_ids[static_cast<std::size_t>(j)]);
        }
    }
    if (rows.empty()) {
        throw std::domain_error("mlm_loss: no masked position");
    }
    return soft_cross_entropy(gather_rows(logits, rows), one_hot(classes, logits.cols()));
}

namespace {

Tensor itc_targets(std::span<const int> positives, int queue_size, const Tensor* teacher_logits, double alpha) {
    Tensor targets = one_hot(positives, queue_size);
    if (alpha > 0.0 && teacher_logits) {
        if (!teacher_logits->same_shape(targets)) {
            throw std::invalid_argument("itc_loss: teacher logits " + shape_string(teacher_logits->shape()) +
                                        " vs targets " + shape_string(targets.shape()));
        }
        Tensor soft = *teacher_logits;
        kernels::softmax_rows(soft.data(), soft.data(), soft.rows(), soft.cols());
        for (std::size_t i = 0; i < targets.size(); ++i) {
            targets[i] = (1.0 - alpha) * targets[i] + alpha * soft[i];
        }
    }
    return targets;
}

}  // namespace

Var itc_loss(const Var& batch_v, const Var& batch_t, const Tensor& queue_v, const Tensor& queue_t,
             std::span<const int> positives, const Var& tau, const ItcSoftTargets* soft) {
    const int b = batch_v.rows();
    if (batch_t.shape() != batch_v.shape()) {
        throw std::invalid_argument("itc_loss: batch shapes " + shape_string(batch_v.shape()) + " vs " +
                                    shape_string(batch_t.shape()));
    }
    if (!queue_v.same_shape(queue_t) || queue_v.cols() != batch_v.cols()) {
        throw std::invalid_argument("itc_loss: queue shapes " + shape_string(queue_v.shape()) + " / " +
                                    shape_string(queue_t.shape()) + " incompatible with batch " +
                                    shape_string(batch_v.shape()));
    }
    const int u = queue_v.rows();
    if (static_cast<int>(positives.size()) != b) {
        throw std::invalid_argument("itc_loss: need one positive slot per anchor");
    }
    for (const int p : positives) {
        if (p < 0 || p >= u) {
            throw std::out_of_range("itc_loss: positive slot " + std::to_string(p) + " outside queue of " +
                                    std::to_string(u));
        }
    }
    if (soft && !(soft->alpha >= 0.0 && soft->alpha <= 1.0)) {
        throw std::invalid_argument("itc_loss: soft-target alpha must lie in [0, 1]");
    }
    Tape& tape = *batch_v.tape();
    const Var inv_tau = reciprocal(tau);
    const Var logits_v2t = mul_scalar(matmul_nt(batch_v, tape.constant(queue_t)), inv_tau);
    const Var logits_t2v = mul_scalar(matmul_nt(batch_t, tape.constant(queue_v)), inv_tau);
    const double alpha = soft ? soft->alpha : 0.0;
    const Tensor targets_v2t = itc_targets(positives, u, soft ? &soft->teacher_v2t : nullptr, alpha);
    const Tensor targets_t2v = itc_targets(positives, u, soft ? &soft->teacher_t2v : nullptr, alpha);
    const Var ce_v2t = soft_cross_entropy(logits_v2t, targets_v2t);
    const Var ce_t2v = soft_cross_entropy(logits_t2v, targets_t2v);
    return scale(add(ce_v2t, ce_t2v), 0.5);
}

namespace {

std::vector<int> sample_row_negatives(const Tensor& sim, std::span<const int> item_ids, Rng& rng,
                                      const char* direction) {
    const int b = sim.rows();
    std::vector<int> picks(static_cast<std::size_t>(b));
    std::vector<double> weights(static_cast<std::size_t>(b));
    for (int i = 0; i < b; ++i) {
        auto row = sim.row(i);
        double mx = -INFINITY;
        for (int j = 0; j < b; ++j) {
            if (j != i && item_ids[static_cast<std::size_t>(j)] != item_ids[static_cast<std::size_t>(i)]) {
                mx = std::max(mx, row[j]);
            }
        }
        if (mx == -INFINITY) {
            throw std::domain_error(std::string("mine_hard_negatives: no eligible ") + direction +
                                    " candidate for anchor " + std::to_string(i));
        }
        double total = 0.0;
        int last = -1;
        for (int j = 0; j < b; ++j) {
            const bool eligible =
                j != i && item_ids[static_cast<std::size_t>(j)] != item_ids[static_cast<std::size_t>(i)];
            weights[static_cast<std::size_t>(j)] = eligible ? std::exp(row[j] - mx) : 0.0;
            total += weights[static_cast<std::size_t>(j)];
            if (eligible) {
                last = j;
            }
        }
        const double u = rng.uniform() * total;
        double acc = 0.0;
        int pick = last;
        for (int j = 0; j < b; ++j) {
            if (weights[static_cast<std::size_t>(j)] == 0.0) {
                continue;
            }
            acc += weights[static_cast<std::size_t>(j)];
            if (u < acc) {
                pick = j;
                break;
            }
        }
        picks[static_cast<std::size_t>(i)] = pick;
    }
    return picks;
}

}  // namespace

HardNegatives mine_hard_negatives(const Tensor& sim_v2t, const Tensor& sim_t2v, std::span<const int> item_ids,
                                  Rng& rng) {
    const int b = sim_v2t.rows();
    if (b < 2) {
        throw std::invalid_argument("mine_hard_negatives: batch needs at least 2 pairs");
    }
    if (sim_v2t.cols() != b || !sim_t2v.same_shape(sim_v2t) || static_cast<int>(item_ids.size()) != b) {
        throw std::invalid_argument("mine_hard_negatives: expected two " + std::to_string(b) + "x" +
                                    std::to_string(b) + " similarity matrices and " + std::to_string(b) +
                                    " item ids");
    }
    HardNegatives out;
    out.image_for_text = sample_row_negatives(sim_t2v, item_ids, rng, "image");
    out.text_for_image = sample_row_negatives(sim_v2t, item_ids, rng, "text");
    return out;
}

Var itm_loss(const Var& pos_logits, const Var& neg_logits) {
    if (pos_logits.cols() != 2 || neg_logits.cols() != 2) {
        throw std::invalid_argument("itm_loss: logits must have 2 columns");
    }
    const Var all = concat_rows({pos_logits, neg_logits});
    std::vector<int> labels(static_cast<std::size_t>(all.rows()), 0);
    std::fill(labels.begin(), labels.begin() + pos_logits.rows(), 1);
    return soft_cross_entropy(all, one_hot(labels, 2));
}

LossBundle total_loss(double mim, double mlm, double itc, double itm) {
    const std::pair<const char*, double> parts[] = {{"mim", mim}, {"mlm", mlm}, {"itc", itc}, {"itm", itm}};
    for (const auto& [name, value] : parts) {
        if (!std::isfinite(value)) {
            throw std::domain_error(std::string("non-finite loss term: ") + name);
        }
    }
    LossBundle bundle;
    bundle.mim = mim;
    bundle.mlm = mlm;
    bundle.itc = itc;
    bundle.itm = itm;
    bundle.total = mim + mlm + itc + itm;
    return bundle;
}

Var total_loss(const Var& mim, const Var& mlm, const Var& itc, const Var& itm) {
    return add(add(add(mim, mlm), itc), itm);
}

}  // namespace syncmask
