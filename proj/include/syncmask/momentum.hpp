#pragma once

#include <span>
#include <vector>

#include "syncmask/model.hpp"
#include "syncmask/rng.hpp"

namespace syncmask {

struct MomentumConfig {
    double beta = 0.99;
    int queue_size = 256;

    void validate() const;
};

// teacher <- beta * teacher + (1 - beta) * student, elementwise.
void ema_update(ParameterSet& teacher, const ParameterSet& student, double beta);

// Fixed-capacity FIFO ring of unit vectors with a parallel ring of item ids.
class FeatureQueue {
public:
    FeatureQueue(int capacity, int dim);

    // Fills every slot with seeded random unit vectors (item id -1) and
    // resets the cursor, so the queue starts full.
    void fill_random(Rng& rng);

    // Overwrites the oldest rows with vectors (B x dim, unit rows) and returns
    // the slot each row landed in. B > capacity is rejected.
    std::vector<int> enqueue(const Tensor& vectors, std::span<const int> item_ids);

    int capacity() const { return capacity_; }
    int dim() const { return dim_; }
    int count() const { return count_; }
    int cursor() const { return cursor_; }
    // capacity x dim; rows beyond count() are zero until written.
    const Tensor& vectors() const { return vectors_; }
    const std::vector<int>& item_ids() const { return item_ids_; }

private:
    int capacity_;
    int dim_;
    int cursor_ = 0;
    int count_ = 0;
    Tensor vectors_;
    std::vector<int> item_ids_;
};

}  // namespace syncmask
