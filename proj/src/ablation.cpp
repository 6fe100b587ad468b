#include "syncmask/ablation.hpp"

#include <cstdio>
#include <stdexcept>

#include "syncmask/evaluation.hpp"
#include "syncmask/trainer.hpp"

namespace syncmask {

std::string_view to_string(AblationAxis a) {
    return a == AblationAxis::masking ? "masking" : "grouping";
}

AblationAxis parse_ablation_axis(std::string_view s) {
    if (s == "masking") {
        return AblationAxis::masking;
    }
    if (s == "grouping") {
        return AblationAxis::grouping;
    }
    throw std::invalid_argument("unknown ablation axis '" + std::string(s) + "'");
}

std::vector<AblationCell> ablation_cells(const TrainConfig& base, AblationAxis axis) {
    std::vector<AblationCell> cells;
    if (axis == AblationAxis::masking) {
        const std::pair<const char*, std::pair<MaskStrategy, MaskStrategy>> rows[] = {
            {"RtRv", {MaskStrategy::random, MaskStrategy::random}},
            {"AtRv", {MaskStrategy::attentional, MaskStrategy::random}},
            {"RtAv", {MaskStrategy::random, MaskStrategy::attentional}},
            {"AtAv", {MaskStrategy::attentional, MaskStrategy::attentional}},
        };
        for (const auto& [label, strategies] : rows) {
            TrainConfig cfg = base;
            cfg.text_masking = strategies.first;
            cfg.image_masking = strategies.second;
            cells.push_back({axis, label, cfg});
        }
    } else {
        const std::pair<const char*, std::pair<GroupingStrategy, bool>> rows[] = {
            {"random", {GroupingStrategy::random, false}},
            {"hardest", {GroupingStrategy::hardest, false}},
            {"hardest+efn", {GroupingStrategy::hardest, true}},
            {"semihard+efn", {GroupingStrategy::semihard, true}},
        };
        for (const auto& [label, grouping] : rows) {
            TrainConfig cfg = base;
            cfg.grouping.strategy = grouping.first;
            cfg.grouping.efn = grouping.second;
            cells.push_back({axis, label, cfg});
        }
    }
    return cells;
}

std::vector<AblationRow> run_ablation(const TrainConfig& base, const Corpus& train_corpus, const Corpus& eval_corpus,
                                      const std::vector<AblationAxis>& axes) {
    std::vector<AblationRow> rows;
    for (const AblationAxis axis : axes) {
        for (const AblationCell& cell : ablation_cells(base, axis)) {
            AblationRow row;
            row.axis = axis;
            row.label = cell.label;
            try {
                TrainState state = init_train_state(cell.config, train_corpus);
                double fraction = 0.0;
                long steps = 0;
                train(state, train_corpus, cell.config, [&](const StepMetrics& m) {
                    fraction += m.mask_visible_fraction;
                    ++steps;
                });
                const Recalls r = evaluate_retrieval(state.model, eval_corpus, {1});
                row.i2t_r1 = r.i2t[0];
                row.t2i_r1 = r.t2i[0];
                row.mask_visible_fraction = steps ? fraction / static_cast<double>(steps) : 0.0;
                row.ok = true;
            } catch (const std::exception& e) {
                row.error = e.what();
            }
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

std::string format_ablation(const std::vector<AblationRow>& rows) {
    std::string out = "axis      config        i2t_r1   t2i_r1   mask_visible\n";
    char line[160];
    for (const AblationRow& r : rows) {
        if (r.ok) {
            std::snprintf(line, sizeof line, "%-9s %-13s %-8.4f %-8.4f %.4f\n", std::string(to_string(r.axis)).c_str(),
                          r.label.c_str(), r.i2t_r1, r.t2i_r1, r.mask_visible_fraction);
            out += line;
        } else {
            std::snprintf(line, sizeof line, "%-9s %-13s failed: ", std::string(to_string(r.axis)).c_str(),
                          r.label.c_str());
            out += line + r.error + "\n";
        }
    }
    return out;
}

}  // namespace syncmask
