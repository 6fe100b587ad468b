#include "syncmask/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace syncmask {

std::string shape_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) {
            out += "x";
        }
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (const int extent : shape) {
        if (extent <= 0) {
            throw std::invalid_argument("shape extents must be positive: " + shape_string(shape));
        }
        n *= static_cast<std::size_t>(extent);
    }
    return n;
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_size(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != data_.size()) {
        throw std::invalid_argument("tensor data size " + std::to_string(data_.size()) +
                                    " does not match shape " + shape_string(shape_));
    }
}

Tensor Tensor::full(Shape shape, double value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const int r = static_cast<int>(rows.size());
    const int c = r ? static_cast<int>(rows.begin()->size()) : 0;
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(r) * c);
    for (const auto& row : rows) {
        if (static_cast<int>(row.size()) != c) {
            throw std::invalid_argument("ragged matrix literal");
        }
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor({static_cast<int>(values.size())}, std::vector<double>(values));
}

int Tensor::rows() const {
    if (rank() == 1) {
        return 1;
    }
    if (rank() == 2) {
        return shape_[0];
    }
    throw std::logic_error("rows() on tensor of shape " + shape_string(shape_));
}

int Tensor::cols() const {
    if (rank() == 1) {
        return shape_[0];
    }
    if (rank() == 2) {
        return shape_[1];
    }
    throw std::logic_error("cols() on tensor of shape " + shape_string(shape_));
}

double Tensor::item() const {
    if (data_.size() != 1) {
        throw std::logic_error("item() on tensor of shape " + shape_string(shape_));
    }
    return data_[0];
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor transpose(const Tensor& x) {
    const int r = x.rows();
    const int c = x.cols();
    Tensor out({c, r});
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < c; ++j) {
            out.at(j, i) = x.at(i, j);
        }
    }
    return out;
}

}  // namespace syncmask
