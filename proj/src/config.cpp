#include "syncmask/config.hpp"

#include <fstream>
#include <functional>
#include <map>

namespace syncmask {

using nlohmann::json;

void ItcConfig::validate() const {
    if (!(tau_init > 0.0)) {
        throw std::invalid_argument("itc config: tau_init must be positive");
    }
    if (queue_size < 1) {
        throw std::invalid_argument("itc config: queue_size must be positive");
    }
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw std::invalid_argument("itc config: alpha must lie in [0, 1]");
    }
}

void TrainConfig::validate() const {
    try {
        model.validate();
        mask.validate();
        grouping.validate();
        momentum.validate();
        itc.validate();
        optimizer.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (epochs < 1 || warmup_epochs < 0) {
        throw ConfigError("epochs must be >= 1 and warmup_epochs >= 0");
    }
    if (momentum.queue_size != itc.queue_size) {
        throw ConfigError("momentum.queue_size and itc.queue_size describe the same queue and must be equal");
    }
    if (itc.queue_size < grouping.batch_size) {
        throw ConfigError("itc.queue_size must hold at least one batch");
    }
    if (grouping.batch_size < 2) {
        throw ConfigError("grouping.batch_size must be >= 2 for in-batch negatives");
    }
    if (mask_count(mask.r_text, model.text_len) < 1 || mask_count(mask.r_image, model.num_patches()) < 1) {
        throw ConfigError("mask ratios select no position at this sequence length");
    }
}

namespace {

// Reads fields of one JSON object, rejecting keys nobody asked for.
class ObjectReader {
public:
    ObjectReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) {
            throw ConfigError(where() + " must be an object");
        }
    }

    template <class T>
    void field(const char* key, T& out) {
        seen_[key] = true;
        const auto it = obj_.find(key);
        if (it == obj_.end()) {
            return;
        }
        try {
            out = it->template get<T>();
        } catch (const json::exception&) {
            throw ConfigError(where(key) + " has the wrong type");
        }
    }

    void object(const char* key, const std::function<void(ObjectReader&)>& read) {
        seen_[key] = true;
        const auto it = obj_.find(key);
        if (it == obj_.end()) {
            return;
        }
        ObjectReader child(*it, where(key));
        read(child);
        child.finish();
    }

    void finish() const {
        for (const auto& [key, value] : obj_.items()) {
            if (!seen_.count(key)) {
                throw ConfigError("unknown key " + where(key));
            }
        }
    }

private:
    std::string where(const std::string& key = {}) const {
        if (key.empty()) {
            return path_.empty() ? "config" : path_;
        }
        return path_.empty() ? key : path_ + "." + key;
    }

    const json& obj_;
    std::string path_;
    std::map<std::string, bool, std::less<>> seen_;
};

template <class Enum, class Parse>
void enum_field(ObjectReader& r, const char* key, Enum& out, Parse parse) {
    std::string text(to_string(out));
    r.field(key, text);
    try {
        out = parse(text);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string(key) + ": " + e.what());
    }
}

}  // namespace

TrainConfig config_from_json(const json& doc) {
    TrainConfig cfg;
    ObjectReader root(doc, "");
    root.object("model", [&](ObjectReader& r) {
        ModelConfig& m = cfg.model;
        r.field("dim", m.dim);
        r.field("heads", m.heads);
        r.field("layers_text", m.layers_text);
        r.field("layers_vision", m.layers_vision);
        r.field("layers_fusion", m.layers_fusion);
        r.field("text_len", m.text_len);
        r.field("patches_per_side", m.patches_per_side);
        r.field("patch_dim", m.patch_dim);
        r.field("vocab_size", m.vocab_size);
        r.field("mask_token_id", m.mask_token_id);
        r.field("cls_token_id", m.cls_token_id);
        r.field("proj_dim", m.proj_dim);
        r.field("init_std", m.init_std);
    });
    root.object("mask", [&](ObjectReader& r) {
        r.field("r_text", cfg.mask.r_text);
        r.field("r_image", cfg.mask.r_image);
        r.field("pool_factor", cfg.mask.pool_factor);
    });
    root.object("grouping", [&](ObjectReader& r) {
        GroupingConfig& g = cfg.grouping;
        enum_field(r, "strategy", g.strategy, parse_grouping_strategy);
        r.field("s", g.s);
        r.field("efn", g.efn);
        r.field("collect_queue_size", g.collect_queue_size);
        r.field("subqueue_size", g.subqueue_size);
        r.field("batch_size", g.batch_size);
    });
    root.object("momentum", [&](ObjectReader& r) {
        r.field("beta", cfg.momentum.beta);
        r.field("queue_size", cfg.momentum.queue_size);
    });
    root.object("itc", [&](ObjectReader& r) {
        r.field("tau_init", cfg.itc.tau_init);
        r.field("queue_size", cfg.itc.queue_size);
        r.field("alpha", cfg.itc.alpha);
    });
    root.object("optimizer", [&](ObjectReader& r) {
        OptimizerConfig& o = cfg.optimizer;
        r.field("lr", o.lr);
        r.field("weight_decay", o.weight_decay);
        r.field("beta1", o.beta1);
        r.field("beta2", o.beta2);
        r.field("eps", o.eps);
    });
    root.field("epochs", cfg.epochs);
    root.field("seed", cfg.seed);
    root.object("masking_strategy", [&](ObjectReader& r) {
        enum_field(r, "text", cfg.text_masking, parse_mask_strategy);
        enum_field(r, "image", cfg.image_masking, parse_mask_strategy);
    });
    root.field("warmup_epochs", cfg.warmup_epochs);
    root.field("output_dir", cfg.output_dir);
    root.finish();
    cfg.validate();
    return cfg;
}

json config_to_json(const TrainConfig& cfg) {
    const ModelConfig& m = cfg.model;
    const GroupingConfig& g = cfg.grouping;
    const OptimizerConfig& o = cfg.optimizer;
    return json{
        {"model",
         {{"dim", m.dim},
          {"heads", m.heads},
          {"layers_text", m.layers_text},
          {"layers_vision", m.layers_vision},
          {"layers_fusion", m.layers_fusion},
          {"text_len", m.text_len},
          {"patches_per_side", m.patches_per_side},
          {"patch_dim", m.patch_dim},
          {"vocab_size", m.vocab_size},
          {"mask_token_id", m.mask_token_id},
          {"cls_token_id", m.cls_token_id},
          {"proj_dim", m.proj_dim},
          {"init_std", m.init_std}}},
        {"mask", {{"r_text", cfg.mask.r_text}, {"r_image", cfg.mask.r_image}, {"pool_factor", cfg.mask.pool_factor}}},
        {"grouping",
         {{"strategy", std::string(to_string(g.strategy))},
          {"s", g.s},
          {"efn", g.efn},
          {"collect_queue_size", g.collect_queue_size},
          {"subqueue_size", g.subqueue_size},
          {"batch_size", g.batch_size}}},
        {"momentum", {{"beta", cfg.momentum.beta}, {"queue_size", cfg.momentum.queue_size}}},
        {"itc", {{"tau_init", cfg.itc.tau_init}, {"queue_size", cfg.itc.queue_size}, {"alpha", cfg.itc.alpha}}},
        {"optimizer",
         {{"lr", o.lr}, {"weight_decay", o.weight_decay}, {"beta1", o.beta1}, {"beta2", o.beta2}, {"eps", o.eps}}},
        {"epochs", cfg.epochs},
        {"seed", cfg.seed},
        {"masking_strategy",
         {{"text", std::string(to_string(cfg.text_masking))}, {"image", std::string(to_string(cfg.image_masking))}}},
        {"warmup_epochs", cfg.warmup_epochs},
        {"output_dir", cfg.output_dir},
    };
}

TrainConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read config file " + path);
    }
    json doc;
    try {
        in >> doc;
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path + ": " + e.what());
    }
    return config_from_json(doc);
}

}  // namespace syncmask
