#pragma once

#include <span>
#include <string>
#include <vector>

#include "syncmask/rng.hpp"
#include "syncmask/tape.hpp"

namespace syncmask {

// 0.5 d^2 when |d| < gamma, |d| - 0.5 otherwise, with d = a - b.
double smooth_l1(double a, double b, double gamma = 1.0);

// Masked-patch distillation: (1 / Omega) * sum_k m_k * mean_D smoothL1(teacher_k, student_k)
// over patch rows (row 0, the [CLS], is skipped). The teacher features enter
// as constants, so no gradient reaches the teacher.
Var mim_distill(const Tensor& teacher_feats, const Var& student_feats, std::span<const unsigned char> image_mask,
                double gamma = 1.0);

// Mean cross-entropy over masked positions of logits (N x vocab).
Var mlm_loss(const Var& logits, std::span<const int> target_ids, std::span<const unsigned char> text_mask);

// Optional soft-target mixing for ITC: target = (1 - alpha) one_hot + alpha softmax(teacher_logits).
struct ItcSoftTargets {
    double alpha = 0.0;
    Tensor teacher_v2t;  // B x U, already divided by tau
    Tensor teacher_t2v;
};

// Queue-based contrastive loss. batch_v / batch_t are B unit rows from the
// student; queue_v / queue_t hold U unit rows from the teacher; positives[i]
// is the queue slot holding anchor i's partner in both queues.
Var itc_loss(const Var& batch_v, const Var& batch_t, const Tensor& queue_v, const Tensor& queue_t,
             std::span<const int> positives, const Var& tau, const ItcSoftTargets* soft = nullptr);

struct HardNegatives {
    std::vector<int> image_for_text;  // for text anchor i, an in-batch image index
    std::vector<int> text_for_image;  // for image anchor i, an in-batch text index
};

// Samples one in-batch negative per anchor and direction with probability
// proportional to softmax of the anchor's similarity row. The anchor itself
// and every candidate sharing its item id get zero probability.
HardNegatives mine_hard_negatives(const Tensor& sim_v2t, const Tensor& sim_t2v, std::span<const int> item_ids,
                                  Rng& rng);

// Mean two-class cross-entropy: label 1 for every row of pos_logits, 0 for neg_logits.
Var itm_loss(const Var& pos_logits, const Var& neg_logits);

struct LossBundle {
    double mlm = 0.0;
    double mim = 0.0;
    double itc = 0.0;
    double itm = 0.0;
    double total = 0.0;
};

// Unweighted sum MIM + MLM + ITC + ITM, in that order. Throws
// std::domain_error naming the first non-finite term.
LossBundle total_loss(double mim, double mlm, double itc, double itm);
Var total_loss(const Var& mim, const Var& mlm, const Var& itc, const Var& itm);

// Sum over rows of -targets . log_softmax(logits), divided by the row count.
Var soft_cross_entropy(const Var& logits, const Tensor& targets);
Tensor one_hot(std::span<const int> classes, int width);

}  // namespace syncmask
