#include "syncmask/trainer.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "syncmask/ops.hpp"

namespace syncmask {

namespace {

Var batch_mean(const std::vector<Var>& parts) {
    Var acc = parts.front();
    for (std::size_t i = 1; i < parts.size(); ++i) {
        acc = add(acc, parts[i]);
    }
    return scale(acc, 1.0 / static_cast<double>(parts.size()));
}

Tensor similarity(const Tensor& a, const Tensor& b, double inv_tau) {
    Tensor out({a.rows(), b.rows()});
    for (int i = 0; i < a.rows(); ++i) {
        for (int j = 0; j < b.rows(); ++j) {
            double dot = 0.0;
            for (int c = 0; c < a.cols(); ++c) {
                dot += a.at(i, c) * b.at(j, c);
            }
            out.at(i, j) = dot * inv_tau;
        }
    }
    return out;
}

}  // namespace

Objective student_objective(const BoundModel& s, const ObjectiveInputs& in, StepTrace* trace) {
    const ModelConfig& cfg = *s.config;
    const std::size_t b = in.pairs.size();
    if (b < 2 || in.item_ids.size() != b || in.positives.size() != b) {
        throw std::invalid_argument("student_objective: need >= 2 pairs with one item id and queue slot each");
    }
    std::vector<Var> text_full;
    std::vector<Var> image_full;
    std::vector<Var> mim_parts;
    std::vector<Var> mlm_parts;
    bool mlm_image_masked = false;
    bool mlm_text_masked = true;
    bool mim_image_masked = true;
    for (const PairObjectiveInputs& p : in.pairs) {
        const TextInput text = make_text_input(p.caption, cfg.cls_token_id);
        const ImageInput image{p.patches, {}};
        text_full.push_back(encode_text(s, text));
        image_full.push_back(encode_image(s, image));

        const ImageInput masked_image = apply_image_mask(*p.patches, p.plan.image);
        const Var student_masked = encode_image(s, masked_image);
        mim_parts.push_back(mim_distill(p.teacher_image_feats, student_masked, p.plan.image));
        mim_image_masked = mim_image_masked && masked_image.masked();

        const TextInput masked_text = make_text_input(
            apply_text_mask(p.caption, p.plan.text, cfg.mask_token_id), cfg.cls_token_id, true);
        const FusionOutput fused = fuse(s, encode_text(s, masked_text), image_full.back());
        mlm_parts.push_back(mlm_loss(mlm_logits(s, fused.features), p.caption, p.plan.text));
        mlm_text_masked = mlm_text_masked && masked_text.masked;
        mlm_image_masked = mlm_image_masked || image.masked();
    }

    std::vector<Var> cls_v;
    std::vector<Var> cls_t;
    for (std::size_t i = 0; i < b; ++i) {
        cls_v.push_back(slice_rows(image_full[i], 0, 1));
        cls_t.push_back(slice_rows(text_full[i], 0, 1));
    }
    const Var batch_v = itc_project(s, concat_rows(cls_v), Modality::visual);
    const Var batch_t = itc_project(s, concat_rows(cls_t), Modality::textual);
    const Var tau = temperature(s);

    Objective out;
    out.itc = itc_loss(batch_v, batch_t, in.queue_v, in.queue_t, in.positives, tau, in.soft);

    HardNegatives negatives;
    if (in.negatives) {
        negatives = *in.negatives;
    } else {
        if (!in.mining_rng) {
            throw std::invalid_argument("student_objective: neither fixed negatives nor a mining rng");
        }
        const double inv_tau = 1.0 / tau.value().item();
        const Tensor sim_v2t = similarity(batch_v.value(), batch_t.value(), inv_tau);
        negatives = mine_hard_negatives(sim_v2t, transpose(sim_v2t), in.item_ids, *in.mining_rng);
    }
    std::vector<Var> pos;
    std::vector<Var> neg;
    for (std::size_t i = 0; i < b; ++i) {
        pos.push_back(itm_logits(s, fuse(s, text_full[i], image_full[i]).features));
    }
    for (std::size_t i = 0; i < b; ++i) {
        const auto j = static_cast<std::size_t>(negatives.image_for_text.at(i));
        neg.push_back(itm_logits(s, fuse(s, text_full[i], image_full.at(j)).features));
    }
    for (std::size_t i = 0; i < b; ++i) {
        const auto j = static_cast<std::size_t>(negatives.text_for_image.at(i));
        neg.push_back(itm_logits(s, fuse(s, text_full.at(j), image_full[i]).features));
    }
    out.itm = itm_loss(concat_rows(pos), concat_rows(neg));
    out.mim = batch_mean(mim_parts);
    out.mlm = batch_mean(mlm_parts);
    out.total = total_loss(out.mim, out.mlm, out.itc, out.itm);

    if (trace) {
        trace->mlm_image_masked = mlm_image_masked;
        trace->mlm_text_masked = mlm_text_masked;
        trace->mim_image_masked = mim_image_masked;
        trace->mask_provenance.clear();
        for (const PairObjectiveInputs& p : in.pairs) {
            trace->mask_provenance.push_back(p.plan.provenance);
        }
        trace->negatives = negatives;
    }
    return out;
}

std::string metrics_json(const StepMetrics& m) {
    const nlohmann::json j{
        {"epoch", m.epoch},
        {"step", m.step},
        {"warmup", m.warmup},
        {"l_mlm", m.losses.mlm},
        {"l_mim", m.losses.mim},
        {"l_itc", m.losses.itc},
        {"l_itm", m.losses.itm},
        {"l_total", m.losses.total},
        {"mask_visible_fraction", m.mask_visible_fraction},
    };
    return j.dump();
}

TrainState init_train_state(const TrainConfig& cfg, const Corpus& corpus) {
    cfg.validate();
    const Rng root(cfg.seed);
    DualModel model = DualModel::create(cfg.model, cfg.itc.tau_init, root.derive("model").seed());
    AdamW optimizer(cfg.optimizer, model.student);
    TrainState state{std::move(model), std::move(optimizer), FeatureQueue(cfg.itc.queue_size, cfg.model.proj_dim),
                     FeatureQueue(cfg.itc.queue_size, cfg.model.proj_dim), {}, {}, 0};
    Rng qv = root.derive("queue_v");
    Rng qt = root.derive("queue_t");
    state.queue_v.fill_random(qv);
    state.queue_t.fill_random(qt);
    state.collected.resize(corpus.pairs.size());
    for (std::size_t i = 0; i < corpus.pairs.size(); ++i) {
        state.collected[i].example = static_cast<int>(i);
        state.collected[i].item_id = corpus.pairs[i].item_id;
    }
    state.has_features.assign(corpus.pairs.size(), 0);
    return state;
}

StepMetrics pretrain_step(TrainState& state, const Corpus& corpus, const MiniBatch& batch, const TrainConfig& cfg,
                          MaskStrategy text_strategy, MaskStrategy image_strategy, int epoch, Rng& rng,
                          StepTrace* trace) {
    const auto started = std::chrono::steady_clock::now();
    const std::size_t b = batch.examples.size();
    if (b < 2 || batch.item_ids.size() != b) {
        throw std::invalid_argument("pretrain_step: batch needs >= 2 examples with item ids");
    }
    const ModelConfig& mc = state.model.config;
    const DataConfig data = data_config_for(mc);
    if (!(corpus.config.text_len == data.text_len && corpus.config.patch_dim == data.patch_dim &&
          corpus.config.patches_per_side == data.patches_per_side && corpus.config.vocab_size == data.vocab_size)) {
        throw std::invalid_argument("pretrain_step: corpus shapes do not match the model config");
    }

    ObjectiveInputs in;
    Tensor teacher_v({static_cast<int>(b), mc.proj_dim});
    Tensor teacher_t({static_cast<int>(b), mc.proj_dim});
    std::vector<std::uint64_t> teacher_passes;
    for (std::size_t i = 0; i < b; ++i) {
        const int example = batch.examples[i];
        const Pair& pair = corpus.pairs.at(static_cast<std::size_t>(example));
        if (pair.item_id != batch.item_ids[i]) {
            throw std::invalid_argument("pretrain_step: batch item id disagrees with the corpus");
        }
        const std::uint64_t pass_id = derive_seed(static_cast<std::uint64_t>(state.step), i);
        teacher_passes.push_back(pass_id);

        Tape tape;
        const BoundModel teacher = bind_teacher(tape, state.model);
        const Var t_text = encode_text(teacher, make_text_input(pair.caption, mc.cls_token_id));
        const Var t_image = encode_image(teacher, ImageInput{&pair.patches, {}});
        const FusionOutput fused = fuse(teacher, t_text, t_image);
        Rng pair_rng = rng.derive("mask").derive(i);

        PairObjectiveInputs p;
        p.patches = &pair.patches;
        p.caption = pair.caption;
        p.plan = plan_masks(summarize_attention(fused.attention), cfg.mask, text_strategy, image_strategy, pair_rng,
                            pass_id);
        p.teacher_image_feats = t_image.value();
        in.pairs.push_back(std::move(p));
        in.item_ids.push_back(pair.item_id);

        const Tensor pv = itc_project(teacher, slice_rows(t_image, 0, 1), Modality::visual).value();
        const Tensor pt = itc_project(teacher, slice_rows(t_text, 0, 1), Modality::textual).value();
        std::copy(pv.data().begin(), pv.data().end(), teacher_v.row(static_cast<int>(i)).begin());
        std::copy(pt.data().begin(), pt.data().end(), teacher_t.row(static_cast<int>(i)).begin());
    }

    // The batch's own teacher features go in first so every anchor has its
    // positive in the queue.
    FeatureQueue queue_v = state.queue_v;
    FeatureQueue queue_t = state.queue_t;
    in.positives = queue_v.enqueue(teacher_v, in.item_ids);
    queue_t.enqueue(teacher_t, in.item_ids);
    in.queue_v = queue_v.vectors();
    in.queue_t = queue_t.vectors();

    ItcSoftTargets soft;
    if (cfg.itc.alpha > 0.0) {
        const double inv_tau = 1.0 / state.model.tau();
        soft.alpha = cfg.itc.alpha;
        soft.teacher_v2t = similarity(teacher_v, in.queue_t, inv_tau);
        soft.teacher_t2v = similarity(teacher_t, in.queue_v, inv_tau);
        in.soft = &soft;
    }
    Rng mining_rng = rng.derive("mining");
    in.mining_rng = &mining_rng;

    Tape tape;
    const BoundModel student = bind_student(tape, state.model);
    StepTrace local_trace;
    StepTrace& tr = trace ? *trace : local_trace;
    const Objective obj = student_objective(student, in, &tr);
    tr.teacher_passes = teacher_passes;
    tr.trainable_labels = tape.trainable_labels();

    StepMetrics metrics;
    metrics.epoch = epoch;
    metrics.step = state.step;
    metrics.warmup = epoch < cfg.warmup_epochs;
    metrics.losses = total_loss(obj.mim.value().item(), obj.mlm.value().item(), obj.itc.value().item(),
                                obj.itm.value().item());

    std::size_t masked = 0;
    std::size_t visible = 0;
    for (std::size_t i = 0; i < b; ++i) {
        const Pair& pair = corpus.pairs[static_cast<std::size_t>(batch.examples[i])];
        const std::vector<unsigned char> labels = visibility_labels(pair, corpus.config);
        for (const int j : in.pairs[i].plan.idx_text) {
            visible += labels[static_cast<std::size_t>(j)];
            ++masked;
        }
    }
    metrics.mask_visible_fraction = masked ? static_cast<double>(visible) / static_cast<double>(masked) : 0.0;

    tape.backward(obj.total);
    std::vector<Tensor> grads;
    grads.reserve(student.params.size());
    for (const Var& v : student.params) {
        grads.push_back(tape.grad(v));
    }
    state.optimizer.step(state.model.student, grads);
    ema_update(state.model.teacher, state.model.student, cfg.momentum.beta);
    state.queue_v = std::move(queue_v);
    state.queue_t = std::move(queue_t);
    for (std::size_t i = 0; i < b; ++i) {
        const auto example = static_cast<std::size_t>(batch.examples[i]);
        SampleRecord& rec = state.collected.at(example);
        const auto rv = teacher_v.row(static_cast<int>(i));
        const auto rt = teacher_t.row(static_cast<int>(i));
        rec.image.assign(rv.begin(), rv.end());
        rec.text.assign(rt.begin(), rt.end());
        state.has_features[example] = 1;
    }
    ++state.step;
    metrics.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return metrics;
}

EpochPlan epoch_plan(const TrainState& state, const TrainConfig& cfg, int epoch) {
    const std::size_t total = state.collected.size();
    const auto q = static_cast<std::size_t>(cfg.grouping.collect_queue_size);
    if (total == 0 || total % q != 0) {
        throw std::invalid_argument("epoch_plan: corpus of " + std::to_string(total) +
                                    " pairs is not a multiple of collect_queue_size " + std::to_string(q));
    }
    bool ready = epoch > 0;
    for (const unsigned char f : state.has_features) {
        ready = ready && f;
    }
    GroupingConfig grouping = cfg.grouping;
    if (!ready) {
        grouping.strategy = GroupingStrategy::random;
    }
    const Rng plan_rng = Rng(cfg.seed).derive("epoch").derive(static_cast<std::uint64_t>(epoch)).derive("plan");
    EpochPlan plan;
    for (std::size_t chunk = 0; chunk * q < total; ++chunk) {
        SampleQueue queue;
        queue.records.assign(state.collected.begin() + static_cast<std::ptrdiff_t>(chunk * q),
                             state.collected.begin() + static_cast<std::ptrdiff_t>((chunk + 1) * q));
        Rng rng = plan_rng.derive(chunk);
        EpochPlan part = plan_epoch(queue, grouping, rng);
        for (MiniBatch& mb : part.batches) {
            plan.batches.push_back(std::move(mb));
        }
    }
    return plan;
}

void train(TrainState& state, const Corpus& corpus, const TrainConfig& cfg, const StepCallback& on_step) {
    cfg.validate();
    if (state.collected.size() != corpus.pairs.size()) {
        throw std::invalid_argument("train: state was initialized for a different corpus");
    }
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const EpochPlan plan = epoch_plan(state, cfg, epoch);
        const bool warmup = epoch < cfg.warmup_epochs;
        const MaskStrategy text = warmup ? MaskStrategy::random : cfg.text_masking;
        const MaskStrategy image = warmup ? MaskStrategy::random : cfg.image_masking;
        const Rng step_root = Rng(cfg.seed).derive("epoch").derive(static_cast<std::uint64_t>(epoch)).derive("step");
        for (std::size_t bi = 0; bi < plan.batches.size(); ++bi) {
            Rng rng = step_root.derive(bi);
            const StepMetrics m = pretrain_step(state, corpus, plan.batches[bi], cfg, text, image, epoch, rng);
            if (on_step) {
                on_step(m);
            }
        }
    }
}

}  // namespace syncmask
