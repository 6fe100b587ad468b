#include "syncmask/momentum.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace syncmask {

void MomentumConfig::validate() const {
    if (!(beta >= 0.0 && beta <= 1.0)) {
        throw std::invalid_argument("momentum config: beta must lie in [0, 1]");
    }
    if (queue_size < 1) {
        throw std::invalid_argument("momentum config: queue_size must be positive");
    }
}

void ema_update(ParameterSet& teacher, const ParameterSet& student, double beta) {
    if (!(beta >= 0.0 && beta <= 1.0)) {
        throw std::invalid_argument("ema_update: beta must lie in [0, 1]");
    }
    if (!teacher.same_layout(student)) {
        throw std::invalid_argument("ema_update: teacher and student parameter layouts differ");
    }
    const double keep = beta;
    const double take = 1.0 - beta;
    for (std::size_t i = 0; i < teacher.size(); ++i) {
        auto t = teacher[i].data();
        auto s = student[i].data();
        for (std::size_t j = 0; j < t.size(); ++j) {
            t[j] = keep * t[j] + take * s[j];
        }
    }
}

FeatureQueue::FeatureQueue(int capacity, int dim)
    : capacity_(capacity), dim_(dim), vectors_(Shape{capacity > 0 ? capacity : 1, dim > 0 ? dim : 1}),
      item_ids_(static_cast<std::size_t>(capacity > 0 ? capacity : 1), -1) {
    if (capacity < 1 || dim < 1) {
        throw std::invalid_argument("FeatureQueue: capacity and dim must be positive");
    }
}

void FeatureQueue::fill_random(Rng& rng) {
    for (int i = 0; i < capacity_; ++i) {
        auto row = vectors_.row(i);
        double ss = 0.0;
        while (!(ss > 0.0)) {
            ss = 0.0;
            for (double& v : row) {
                v = rng.normal();
                ss += v * v;
            }
        }
        const double inv = 1.0 / std::sqrt(ss);
        for (double& v : row) {
            v *= inv;
        }
        item_ids_[static_cast<std::size_t>(i)] = -1;
    }
    cursor_ = 0;
    count_ = capacity_;
}

std::vector<int> FeatureQueue::enqueue(const Tensor& vectors, std::span<const int> item_ids) {
    const int b = vectors.rows();
    if (vectors.cols() != dim_ || static_cast<int>(item_ids.size()) != b) {
        throw std::invalid_argument("FeatureQueue::enqueue: got " + shape_string(vectors.shape()) + " with " +
                                    std::to_string(item_ids.size()) + " ids for dim " + std::to_string(dim_));
    }
    if (b > capacity_) {
        throw std::invalid_argument("FeatureQueue::enqueue: batch of " + std::to_string(b) +
                                    " exceeds capacity " + std::to_string(capacity_));
    }
    for (int i = 0; i < b; ++i) {
        double ss = 0.0;
        for (const double v : vectors.row(i)) {
            ss += v * v;
        }
        if (std::abs(ss - 1.0) > 1e-9) {
            throw std::invalid_argument("FeatureQueue::enqueue: row " + std::to_string(i) + " is not unit norm");
        }
    }
    std::vector<int> slots(static_cast<std::size_t>(b));
    for (int i = 0; i < b; ++i) {
        auto src = vectors.row(i);
        std::copy(src.begin(), src.end(), vectors_.row(cursor_).begin());
        item_ids_[static_cast<std::size_t>(cursor_)] = item_ids[static_cast<std::size_t>(i)];
        slots[static_cast<std::size_t>(i)] = cursor_;
        cursor_ = (cursor_ + 1) % capacity_;
    }
    count_ = std::min(capacity_, count_ + b);
    return slots;
}

}  // namespace syncmask
