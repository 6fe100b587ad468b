#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

#include "syncmask/tensor.hpp"

namespace syncmask {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;

    Tape* tape() const { return tape_; }
    int id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    int rows() const { return value().rows(); }
    int cols() const { return value().cols(); }
    bool requires_grad() const;

private:
    friend class Tape;
    Var(Tape* tape, int id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    int id_ = -1;
};

// Ordered record of differentiable operations. An operation is recorded only
// when at least one of its inputs requires a gradient; everything else is a
// plain forward evaluation whose values still live on the tape.
class Tape {
public:
    // Receives the output gradient; accumulates into input gradients.
    using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);
    Var leaf(Tensor value, std::string label = {});

    const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

    // Gradient accumulator of id, allocated on first use; nullptr when the node
    // does not require a gradient.
    Tensor* grad_slot(int id);

    // Accumulated d(root)/d(v) after backward(); zeros when nothing flowed.
    Tensor grad(const Var& v) const;

    // Reverse sweep from a scalar root. visit, when set, is called with the
    // index and name of each recorded op in the order it is replayed.
    void backward(const Var& root,
                  const std::function<void(std::size_t, std::string_view)>& visit = {});

    std::size_t node_count() const { return nodes_.size(); }
    std::size_t op_count() const { return ops_.size(); }
    std::string_view op_name(std::size_t index) const { return ops_[index].name; }

    // Labels of every leaf that requires a gradient, in creation order.
    std::vector<std::string> trainable_labels() const;

    // Used by operations: stores the output value and records fn if needed.
    Var emit(Tensor value, std::initializer_list<Var> inputs, const char* name, BackwardFn fn);
    Var emit(Tensor value, const std::vector<Var>& inputs, const char* name, BackwardFn fn);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        bool is_leaf = false;
        std::string label;
    };
    struct Op {
        const char* name;
        int output;
        BackwardFn backward;
    };

    Var push(Tensor value, bool requires_grad, bool is_leaf, std::string label);
    template <class Range>
    Var emit_impl(Tensor value, const Range& inputs, const char* name, BackwardFn fn);

    std::deque<Node> nodes_;
    std::vector<Op> ops_;
};

}  // namespace syncmask
