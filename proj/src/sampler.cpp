#include "syncmask/sampler.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace syncmask {

std::string_view to_string(GroupingStrategy s) {
    switch (s) {
    case GroupingStrategy::random:
        return "random";
    case GroupingStrategy::hardest:
        return "hardest";
    case GroupingStrategy::semihard:
        return "semihard";
    }
    return "?";
}

GroupingStrategy parse_grouping_strategy(std::string_view s) {
    if (s == "random") {
        return GroupingStrategy::random;
    }
    if (s == "hardest") {
        return GroupingStrategy::hardest;
    }
    if (s == "semihard") {
        return GroupingStrategy::semihard;
    }
    throw std::invalid_argument("unknown grouping strategy '" + std::string(s) + "'");
}

void GroupingConfig::validate() const {
    if (s < 1) {
        throw std::invalid_argument("grouping config: s must be >= 1");
    }
    if (batch_size < 1 || subqueue_size < 2 || collect_queue_size < 1) {
        throw std::invalid_argument("grouping config: sizes must be positive and subqueue_size >= 2");
    }
    if (subqueue_size % batch_size != 0) {
        throw std::invalid_argument("grouping config: batch_size must divide subqueue_size");
    }
    if (subqueue_size > collect_queue_size || collect_queue_size % subqueue_size != 0) {
        throw std::invalid_argument("grouping config: subqueue_size must divide collect_queue_size");
    }
}

int GroupingConfig::rank() const {
    return strategy == GroupingStrategy::semihard ? s : 1;
}

namespace {

void check_subqueue(const Tensor& q_v2t, const Tensor& q_t2v, std::span<const int> item_ids) {
    const int n = static_cast<int>(item_ids.size());
    if (n < 2) {
        throw std::invalid_argument("grouping: sub-queue needs at least 2 examples");
    }
    if (q_v2t.rank() != 2 || q_v2t.rows() != n || q_v2t.cols() != n || !q_t2v.same_shape(q_v2t)) {
        throw std::invalid_argument("grouping: similarity matrices must both be " + std::to_string(n) + "x" +
                                    std::to_string(n));
    }
}

}  // namespace

std::vector<int> group_from(const Tensor& q_v2t, const Tensor& q_t2v, std::span<const int> item_ids, int rank,
                            bool efn, int start) {
    check_subqueue(q_v2t, q_t2v, item_ids);
    const int n = static_cast<int>(item_ids.size());
    if (start < 0 || start >= n) {
        throw std::out_of_range("grouping: start index outside sub-queue");
    }
    if (rank < 1) {
        throw std::invalid_argument("grouping: rank must be >= 1");
    }
    std::vector<int> order{start};
    std::vector<int> remaining;
    for (int k = 0; k < n; ++k) {
        if (k != start) {
            remaining.push_back(k);
        }
    }
    bool use_v2t = true;
    while (!remaining.empty()) {
        const int anchor = order.back();
        const Tensor& q = use_v2t ? q_v2t : q_t2v;
        const auto row = q.row(anchor);
        const int anchor_item = item_ids[static_cast<std::size_t>(anchor)];
        // Strict weak order: different item first (under efn), then higher
        // similarity, then lower index.
        auto before = [&](int a, int b) {
            if (efn) {
                const bool sa = item_ids[static_cast<std::size_t>(a)] == anchor_item;
                const bool sb = item_ids[static_cast<std::size_t>(b)] == anchor_item;
                if (sa != sb) {
                    return sb;
                }
            }
            if (row[a] != row[b]) {
                return row[a] > row[b];
            }
            return a < b;
        };
        // Under efn the eligible pool is the different-item candidates when any remain.
        std::size_t eligible = remaining.size();
        if (efn) {
            const auto diff = static_cast<std::size_t>(std::count_if(remaining.begin(), remaining.end(), [&](int k) {
                return item_ids[static_cast<std::size_t>(k)] != anchor_item;
            }));
            if (diff > 0) {
                eligible = diff;
            }
        }
        const auto pos = static_cast<std::ptrdiff_t>(std::min<std::size_t>(rank, eligible) - 1);
        std::nth_element(remaining.begin(), remaining.begin() + pos, remaining.end(), before);
        const int pick = remaining[static_cast<std::size_t>(pos)];
        order.push_back(pick);
        remaining.erase(remaining.begin() + pos);
        use_v2t = !use_v2t;
    }
    return order;
}

std::vector<int> group_subqueue(const Tensor& q_v2t, const Tensor& q_t2v, std::span<const int> item_ids,
                                const GroupingConfig& cfg, Rng& rng) {
    check_subqueue(q_v2t, q_t2v, item_ids);
    const int n = static_cast<int>(item_ids.size());
    if (cfg.strategy == GroupingStrategy::random) {
        std::vector<int> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(std::span<int>(order));
        return order;
    }
    const int start = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n)));
    return group_from(q_v2t, q_t2v, item_ids, cfg.rank(), cfg.efn, start);
}

std::vector<int> brute_force_group(const Tensor& q_v2t, const Tensor& q_t2v, std::span<const int> item_ids,
                                   const GroupingConfig& cfg, int start) {
    check_subqueue(q_v2t, q_t2v, item_ids);
    const int n = static_cast<int>(item_ids.size());
    if (n > 16) {
        throw std::invalid_argument("brute_force_group: sub-queue larger than 16");
    }
    if (start < 0 || start >= n) {
        throw std::out_of_range("brute_force_group: start index outside sub-queue");
    }
    const int s = cfg.rank();
    std::vector<bool> taken(static_cast<std::size_t>(n), false);
    std::vector<int> order{start};
    taken[static_cast<std::size_t>(start)] = true;
    for (int step = 1; step < n; ++step) {
        const int anchor = order.back();
        // Odd steps read the image-to-text row, even steps text-to-image.
        const Tensor& q = step % 2 == 1 ? q_v2t : q_t2v;
        std::vector<std::tuple<int, double, int>> keyed;
        for (int k = 0; k < n; ++k) {
            if (taken[static_cast<std::size_t>(k)]) {
                continue;
            }
            const int same_item = cfg.efn && item_ids[static_cast<std::size_t>(k)] ==
                                                 item_ids[static_cast<std::size_t>(anchor)];
            keyed.emplace_back(same_item, -q.at(anchor, k), k);
        }
        std::sort(keyed.begin(), keyed.end());
        if (std::get<0>(keyed.front()) == 0) {
            std::erase_if(keyed, [](const auto& e) { return std::get<0>(e) == 1; });
        }
        const std::size_t pick = keyed.size() >= static_cast<std::size_t>(s) ? static_cast<std::size_t>(s - 1)
                                                                              : keyed.size() - 1;
        const int chosen = std::get<2>(keyed[pick]);
        order.push_back(chosen);
        taken[static_cast<std::size_t>(chosen)] = true;
    }
    return order;
}

void subqueue_similarities(std::span<const SampleRecord> records, Tensor& q_v2t, Tensor& q_t2v) {
    const int n = static_cast<int>(records.size());
    q_v2t = Tensor({n, n});
    q_t2v = Tensor({n, n});
    for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
            const auto& img = records[static_cast<std::size_t>(a)].image;
            const auto& txt = records[static_cast<std::size_t>(b)].text;
            if (img.size() != txt.size()) {
                throw std::invalid_argument("subqueue_similarities: feature widths differ");
            }
            double dot = 0.0;
            for (std::size_t i = 0; i < img.size(); ++i) {
                dot += img[i] * txt[i];
            }
            q_v2t.at(a, b) = dot;
            q_t2v.at(b, a) = dot;
        }
    }
}

EpochPlan plan_epoch(const SampleQueue& queue, const GroupingConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::size_t total = queue.size();
    const auto sub = static_cast<std::size_t>(cfg.subqueue_size);
    if (total == 0 || total % sub != 0) {
        throw std::invalid_argument("plan_epoch: queue of " + std::to_string(total) +
                                    " examples is not a multiple of subqueue_size " + std::to_string(sub));
    }

    // Phase 2: example-level shuffle.
    std::vector<std::size_t> perm(total);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(perm));

    // Phase 3: group each sub-queue and slice into mini-batches.
    EpochPlan plan;
    for (std::size_t offset = 0; offset < total; offset += sub) {
        std::vector<SampleRecord> records;
        std::vector<int> item_ids;
        records.reserve(sub);
        for (std::size_t i = 0; i < sub; ++i) {
            records.push_back(queue.records[perm[offset + i]]);
            item_ids.push_back(records.back().item_id);
        }
        Rng sub_rng = rng.derive(offset / sub);
        std::vector<int> order;
        if (cfg.strategy == GroupingStrategy::random) {
            order.resize(sub);
            std::iota(order.begin(), order.end(), 0);
            sub_rng.shuffle(std::span<int>(order));
        } else {
            Tensor q_v2t;
            Tensor q_t2v;
            subqueue_similarities(records, q_v2t, q_t2v);
            order = group_subqueue(q_v2t, q_t2v, item_ids, cfg, sub_rng);
        }
        for (std::size_t b = 0; b < sub; b += static_cast<std::size_t>(cfg.batch_size)) {
            MiniBatch batch;
            for (int i = 0; i < cfg.batch_size; ++i) {
                const SampleRecord& r = records[static_cast<std::size_t>(order[b + static_cast<std::size_t>(i)])];
                batch.examples.push_back(r.example);
                batch.item_ids.push_back(r.item_id);
            }
            plan.batches.push_back(std::move(batch));
        }
    }

    // Phase 4: mini-batch-level shuffle.
    rng.shuffle(std::span<MiniBatch>(plan.batches));
    return plan;
}

std::string format_plan(const EpochPlan& plan) {
    std::ostringstream out;
    for (std::size_t b = 0; b < plan.batches.size(); ++b) {
        out << "batch " << b << ":";
        const MiniBatch& batch = plan.batches[b];
        for (std::size_t i = 0; i < batch.examples.size(); ++i) {
            out << ' ' << batch.examples[i] << ':' << batch.item_ids[i];
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace syncmask
