#include "syncmask/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "syncmask/kernels.hpp"
#include "syncmask/ops.hpp"

namespace syncmask {

void ModelConfig::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("model config: " + what); };
    if (dim <= 0 || heads <= 0 || dim % heads != 0) {
        fail("dim must be a positive multiple of heads");
    }
    if (layers_text < 0 || layers_vision < 0 || layers_fusion < 1) {
        fail("layer counts must be nonnegative and layers_fusion >= 1");
    }
    if (text_len < 1 || patches_per_side < 1 || patch_dim < 1 || proj_dim < 1) {
        fail("text_len, patches_per_side, patch_dim and proj_dim must be positive");
    }
    if (dim < 2) {
        fail("dim must be at least 2 for layer normalization");
    }
    if (vocab_size < 2) {
        fail("vocab_size must be at least 2");
    }
    if (mask_token_id < 0 || mask_token_id >= vocab_size) {
        fail("mask_token_id must be < vocab_size");
    }
    if (cls_token_id < 0 || cls_token_id >= vocab_size || cls_token_id == mask_token_id) {
        fail("cls_token_id must be a distinct id < vocab_size");
    }
    if (!(init_std > 0.0)) {
        fail("init_std must be positive");
    }
}

int ParameterSet::add(std::string name, Tensor value) {
    names_.push_back(std::move(name));
    values_.push_back(std::move(value));
    return static_cast<int>(values_.size() - 1);
}

std::size_t ParameterSet::scalar_count() const {
    std::size_t n = 0;
    for (const Tensor& t : values_) {
        n += t.size();
    }
    return n;
}

bool ParameterSet::same_layout(const ParameterSet& other) const {
    if (names_ != other.names_ || values_.size() != other.values_.size()) {
        return false;
    }
    for (std::size_t i = 0; i < values_.size(); ++i) {
        if (values_[i].shape() != other.values_[i].shape()) {
            return false;
        }
    }
    return true;
}

namespace {

class Registrar {
public:
    Registrar(ParameterSet& out, Rng& rng, double std) : out_(out), rng_(rng), std_(std) {}

    int normal(const std::string& name, Shape shape) {
        Tensor t(std::move(shape));
        for (double& v : t.data()) {
            v = std_ * rng_.normal();
        }
        return out_.add(name, std::move(t));
    }
    int constant(const std::string& name, Shape shape, double value) {
        return out_.add(name, Tensor::full(std::move(shape), value));
    }
    LayerNormIdx layer_norm(const std::string& name, int n) {
        return {constant(name + ".gain", {n}, 1.0), constant(name + ".bias", {n}, 0.0)};
    }
    AttentionIdx attention(const std::string& name, int d) {
        AttentionIdx idx;
        idx.wq = normal(name + ".wq", {d, d});
        idx.wk = normal(name + ".wk", {d, d});
        idx.wv = normal(name + ".wv", {d, d});
        idx.wo = normal(name + ".wo", {d, d});
        idx.bo = constant(name + ".bo", {d}, 0.0);
        return idx;
    }
    FeedForwardIdx feed_forward(const std::string& name, int d) {
        FeedForwardIdx idx;
        idx.w1 = normal(name + ".w1", {d, 4 * d});
        idx.b1 = constant(name + ".b1", {4 * d}, 0.0);
        idx.w2 = normal(name + ".w2", {4 * d, d});
        idx.b2 = constant(name + ".b2", {d}, 0.0);
        return idx;
    }
    EncoderBlockIdx encoder_block(const std::string& name, int d) {
        EncoderBlockIdx b;
        b.ln_attn = layer_norm(name + ".ln_attn", d);
        b.attn = attention(name + ".attn", d);
        b.ln_ffn = layer_norm(name + ".ln_ffn", d);
        b.ffn = feed_forward(name + ".ffn", d);
        return b;
    }
    FusionBlockIdx fusion_block(const std::string& name, int d) {
        FusionBlockIdx b;
        b.ln_self = layer_norm(name + ".ln_self", d);
        b.self_attn = attention(name + ".self_attn", d);
        b.ln_cross = layer_norm(name + ".ln_cross", d);
        b.cross_attn = attention(name + ".cross_attn", d);
        b.ln_ffn = layer_norm(name + ".ln_ffn", d);
        b.ffn = feed_forward(name + ".ffn", d);
        return b;
    }

private:
    ParameterSet& out_;
    Rng& rng_;
    double std_;
};

struct AttentionResult {
    Var out;
    std::vector<Tensor> scores;   // per head, pre-softmax
    std::vector<Tensor> weights;  // per head, row-stochastic
};

AttentionResult attention(const BoundModel& m, const AttentionIdx& idx, const Var& queries, const Var& context,
                          bool keep_maps) {
    const int heads = m.config->heads;
    const int d = m.config->head_dim();
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    const Var q = matmul(queries, m[idx.wq]);
    const Var k = matmul(context, m[idx.wk]);
    const Var v = matmul(context, m[idx.wv]);
    AttentionResult result;
    std::vector<Var> head_out;
    for (int h = 0; h < heads; ++h) {
        const Var qh = heads == 1 ? q : slice_cols(q, h * d, d);
        const Var kh = heads == 1 ? k : slice_cols(k, h * d, d);
        const Var vh = heads == 1 ? v : slice_cols(v, h * d, d);
        const Var s = scale(matmul_nt(qh, kh), inv_sqrt_d);
        const Var a = softmax_rows(s);
        if (keep_maps) {
            result.scores.push_back(s.value());
            result.weights.push_back(a.value());
        }
        head_out.push_back(matmul(a, vh));
    }
    const Var merged = heads == 1 ? head_out.front() : concat_cols(head_out);
    result.out = add_row(matmul(merged, m[idx.wo]), m[idx.bo]);
    return result;
}

Var feed_forward(const BoundModel& m, const FeedForwardIdx& idx, const Var& x) {
    const Var hidden = gelu(add_row(matmul(x, m[idx.w1]), m[idx.b1]));
    return add_row(matmul(hidden, m[idx.w2]), m[idx.b2]);
}

Var norm(const BoundModel& m, const LayerNormIdx& idx, const Var& x) {
    return layer_norm(x, m[idx.gain], m[idx.bias]);
}

Var encoder_stack(const BoundModel& m, const std::vector<EncoderBlockIdx>& blocks, const LayerNormIdx& final_ln,
                  Var x) {
    for (const EncoderBlockIdx& b : blocks) {
        const Var h = norm(m, b.ln_attn, x);
        x = add(x, attention(m, b.attn, h, h, false).out);
        x = add(x, feed_forward(m, b.ffn, norm(m, b.ln_ffn, x)));
    }
    return norm(m, final_ln, x);
}

}  // namespace

ModelLayout build_parameters(const ModelConfig& cfg, double tau_init, Rng& rng, ParameterSet& out) {
    cfg.validate();
    if (!(tau_init > 0.0)) {
        throw std::invalid_argument("tau_init must be positive");
    }
    const int d = cfg.dim;
    Registrar reg(out, rng, cfg.init_std);
    ModelLayout l;

    l.token_embedding = reg.normal("text.token_embedding", {cfg.vocab_size, d});
    l.text_position = reg.normal("text.position", {cfg.text_len + 1, d});
    for (int i = 0; i < cfg.layers_text; ++i) {
        l.text_blocks.push_back(reg.encoder_block("text.block" + std::to_string(i), d));
    }
    l.text_final = reg.layer_norm("text.final_ln", d);

    l.patch_weight = reg.normal("vision.patch_weight", {cfg.patch_dim, d});
    l.patch_bias = reg.constant("vision.patch_bias", {d}, 0.0);
    l.image_cls = reg.normal("vision.cls", {d});
    l.image_position = reg.normal("vision.position", {cfg.num_patches() + 1, d});
    l.mask_embedding = reg.normal("vision.mask_embedding", {d});
    for (int i = 0; i < cfg.layers_vision; ++i) {
        l.vision_blocks.push_back(reg.encoder_block("vision.block" + std::to_string(i), d));
    }
    l.vision_final = reg.layer_norm("vision.final_ln", d);

    for (int i = 0; i < cfg.layers_fusion; ++i) {
        l.fusion_blocks.push_back(reg.fusion_block("fusion.block" + std::to_string(i), d));
    }
    l.fusion_final = reg.layer_norm("fusion.final_ln", d);

    l.mlm_weight = reg.normal("head.mlm_weight", {d, cfg.vocab_size});
    l.mlm_bias = reg.constant("head.mlm_bias", {cfg.vocab_size}, 0.0);
    l.itm_weight = reg.normal("head.itm_weight", {d, 2});
    l.itm_bias = reg.constant("head.itm_bias", {2}, 0.0);
    l.proj_visual = reg.normal("itc.proj_visual", {d, cfg.proj_dim});
    l.proj_textual = reg.normal("itc.proj_textual", {d, cfg.proj_dim});
    l.log_tau = reg.constant("itc.log_tau", {1}, std::log(tau_init));
    return l;
}

DualModel DualModel::create(const ModelConfig& cfg, double tau_init, std::uint64_t seed) {
    DualModel model;
    model.config = cfg;
    Rng rng(derive_seed(seed, "model-init"));
    model.layout = build_parameters(cfg, tau_init, rng, model.student);
    model.teacher = model.student;
    return model;
}

double DualModel::tau() const {
    return std::exp(student[static_cast<std::size_t>(layout.log_tau)].item());
}

BoundModel bind(Tape& tape, const ModelConfig& cfg, const ModelLayout& layout, const ParameterSet& params,
                bool trainable, std::string_view label_prefix) {
    BoundModel bound{&cfg, &layout, {}};
    bound.params.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (trainable) {
            bound.params.push_back(tape.leaf(params[i], std::string(label_prefix) + params.name(i)));
        } else {
            bound.params.push_back(tape.constant(params[i]));
        }
    }
    return bound;
}

BoundModel bind_student(Tape& tape, const DualModel& model, bool trainable) {
    return bind(tape, model.config, model.layout, model.student, trainable, "student/");
}

BoundModel bind_teacher(Tape& tape, const DualModel& model) {
    return bind(tape, model.config, model.layout, model.teacher, false, "teacher/");
}

bool ImageInput::masked() const {
    for (const unsigned char v : mask) {
        if (v) {
            return true;
        }
    }
    return false;
}

Var embed_text(const BoundModel& m, const TextInput& text) {
    const ModelConfig& cfg = *m.config;
    if (static_cast<int>(text.tokens.size()) != cfg.text_len + 1) {
        throw std::invalid_argument("encode_text: expected " + std::to_string(cfg.text_len + 1) +
                                    " tokens including [CLS], got " + std::to_string(text.tokens.size()));
    }
    for (const int id : text.tokens) {
        if (id < 0 || id >= cfg.vocab_size) {
            throw std::out_of_range("encode_text: token id " + std::to_string(id) + " outside vocabulary of " +
                                    std::to_string(cfg.vocab_size));
        }
    }
    const Var tokens = gather_rows(m[m.layout->token_embedding], text.tokens);
    return add(tokens, m[m.layout->text_position]);
}

Var encode_text(const BoundModel& m, const TextInput& text) {
    return encoder_stack(m, m.layout->text_blocks, m.layout->text_final, embed_text(m, text));
}

Var embed_image(const BoundModel& m, const ImageInput& image) {
    const ModelConfig& cfg = *m.config;
    if (!image.patches) {
        throw std::invalid_argument("encode_image: no patches");
    }
    const Tensor& patches = *image.patches;
    if (patches.rank() != 2 || patches.rows() != cfg.num_patches() || patches.cols() != cfg.patch_dim) {
        throw std::invalid_argument("encode_image: patches have shape " + shape_string(patches.shape()) +
                                    ", expected " + shape_string({cfg.num_patches(), cfg.patch_dim}));
    }
    if (!image.mask.empty() && static_cast<int>(image.mask.size()) != cfg.num_patches()) {
        throw std::invalid_argument("encode_image: mask length " + std::to_string(image.mask.size()) +
                                    " does not match " + std::to_string(cfg.num_patches()) + " patches");
    }
    Tape& tape = *m[0].tape();
    const ModelLayout& l = *m.layout;
    Var projected = add_row(matmul(tape.constant(patches), m[l.patch_weight]), m[l.patch_bias]);
    if (image.masked()) {
        projected = replace_rows(projected, image.mask, m[l.mask_embedding]);
    }
    return add(concat_rows({m[l.image_cls], projected}), m[l.image_position]);
}

Var encode_image(const BoundModel& m, const ImageInput& image) {
    return encoder_stack(m, m.layout->vision_blocks, m.layout->vision_final, embed_image(m, image));
}

FusionOutput fuse(const BoundModel& m, const Var& text_feats, const Var& image_feats) {
    const ModelConfig& cfg = *m.config;
    if (text_feats.cols() != cfg.dim || image_feats.cols() != cfg.dim) {
        throw std::invalid_argument("fuse: feature widths " + std::to_string(text_feats.cols()) + " and " +
                                    std::to_string(image_feats.cols()) + " must equal dim " +
                                    std::to_string(cfg.dim));
    }
    FusionOutput result;
    Var x = text_feats;
    const auto& blocks = m.layout->fusion_blocks;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const FusionBlockIdx& b = blocks[i];
        const bool last = i + 1 == blocks.size();
        const Var h = norm(m, b.ln_self, x);
        x = add(x, attention(m, b.self_attn, h, h, false).out);
        AttentionResult cross = attention(m, b.cross_attn, norm(m, b.ln_cross, x), image_feats, last);
        x = add(x, cross.out);
        x = add(x, feed_forward(m, b.ffn, norm(m, b.ln_ffn, x)));
        if (last) {
            // The image-query direction reuses this layer's logits with the
            // roles swapped: image keys query the text queries.
            for (std::size_t hd = 0; hd < cross.scores.size(); ++hd) {
                Tensor swapped = transpose(cross.scores[hd]);
                kernels::softmax_rows(swapped.data(), swapped.data(), swapped.rows(), swapped.cols());
                result.attention.image_to_text.push_back(std::move(swapped));
            }
            result.attention.text_to_image = std::move(cross.weights);
        }
    }
    result.features = norm(m, m.layout->fusion_final, x);
    return result;
}

Var mlm_logits(const BoundModel& m, const Var& fused) {
    const Var tokens = slice_rows(fused, 1, m.config->text_len);
    return add_row(matmul(tokens, m[m.layout->mlm_weight]), m[m.layout->mlm_bias]);
}

Var itm_logits(const BoundModel& m, const Var& fused) {
    const Var cls = fused.rows() == 1 ? fused : slice_rows(fused, 0, 1);
    return add_row(matmul(cls, m[m.layout->itm_weight]), m[m.layout->itm_bias]);
}

Var itc_project(const BoundModel& m, const Var& cls_rows, Modality which) {
    const int proj = which == Modality::visual ? m.layout->proj_visual : m.layout->proj_textual;
    return l2_normalize_rows(matmul(cls_rows, m[proj]));
}

Var temperature(const BoundModel& m) {
    return exp(m[m.layout->log_tau]);
}

}  // namespace syncmask
