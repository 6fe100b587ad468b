#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "syncmask/rng.hpp"
#include "syncmask/tensor.hpp"

// Grouped mini-batch construction: collect teacher features, shuffle
// examples, group each sub-queue by alternating-direction similarity, then
// shuffle the resulting mini-batches.
namespace syncmask {

enum class GroupingStrategy { random, hardest, semihard };

std::string_view to_string(GroupingStrategy s);
GroupingStrategy parse_grouping_strategy(std::string_view s);

struct GroupingConfig {
    GroupingStrategy strategy = GroupingStrategy::semihard;
    int s = 3;         // semi-hard picks the s-th most similar candidate
    bool efn = true;   // rank same-item candidates last
    int collect_queue_size = 256;
    int subqueue_size = 64;
    int batch_size = 8;

    void validate() const;
    // 1 for hardest, s for semihard.
    int rank() const;
};

// Teacher-projected [CLS] features for one example.
struct SampleRecord {
    int example = 0;
    int item_id = 0;
    std::vector<double> text;   // unit vector
    std::vector<double> image;  // unit vector
};

struct SampleQueue {
    std::vector<SampleRecord> records;

    std::size_t size() const { return records.size(); }
};

struct MiniBatch {
    std::vector<int> examples;
    std::vector<int> item_ids;
};

struct EpochPlan {
    std::vector<MiniBatch> batches;
};

// Orders one sub-queue starting from start. q_v2t[a][b] is image a vs text b,
// q_t2v[a][b] text a vs image b. The first step ranks by the anchor's q_v2t
// row, the next by q_t2v, and so on; each step takes the rank-th candidate
// (or the last one when fewer remain). rank = 1 is the hardest variant.
std::vector<int> group_from(const Tensor& q_v2t, const Tensor& q_t2v, std::span<const int> item_ids, int rank,
                            bool efn, int start);

// group_from with a seeded random start, or a seeded permutation for the
// random strategy.
std::vector<int> group_subqueue(const Tensor& q_v2t, const Tensor& q_t2v, std::span<const int> item_ids,
                                const GroupingConfig& cfg, Rng& rng);

// Test oracle: the same ordering derived with a full sort of every
// remaining candidate at every step. S <= 16.
std::vector<int> brute_force_group(const Tensor& q_v2t, const Tensor& q_t2v, std::span<const int> item_ids,
                                   const GroupingConfig& cfg, int start);

// Similarities for a list of records: v2t[a][b] = image_a . text_b.
void subqueue_similarities(std::span<const SampleRecord> records, Tensor& q_v2t, Tensor& q_t2v);

EpochPlan plan_epoch(const SampleQueue& queue, const GroupingConfig& cfg, Rng& rng);

// One line per batch: "batch <i>: <example>:<item> ..."
std::string format_plan(const EpochPlan& plan);

}  // namespace syncmask
