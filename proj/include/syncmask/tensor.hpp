#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace syncmask {

using Shape = std::vector<int>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

// Dense row-major array of doubles. Rank 1 or 2 in practice; rank-1 tensors
// behave as a single row wherever an operation works on rows.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, double value);
    static Tensor scalar(double value) { return Tensor({1}, {value}); }
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor vector(std::initializer_list<double> values);

    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    // Row view: a rank-1 tensor is one row of shape[0] columns.
    int rows() const;
    int cols() const;

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    std::vector<double>& storage() { return data_; }
    const std::vector<double>& storage() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(int r, int c) { return data_[static_cast<std::size_t>(r) * cols() + c]; }
    double at(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols() + c]; }

    std::span<double> row(int r) { return data().subspan(static_cast<std::size_t>(r) * cols(), cols()); }
    std::span<const double> row(int r) const {
        return data().subspan(static_cast<std::size_t>(r) * cols(), cols());
    }

    // Scalar value of a one-element tensor.
    double item() const;

    bool all_finite() const;
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

Tensor transpose(const Tensor& x);

}  // namespace syncmask
