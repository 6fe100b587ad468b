#include "syncmask/tape.hpp"

#include <stdexcept>

namespace syncmask {

const Tensor& Var::value() const {
    if (!tape_) {
        throw std::logic_error("use of an unbound Var");
    }
    return tape_->value(id_);
}

bool Var::requires_grad() const {
    return tape_ && tape_->requires_grad(id_);
}

Var Tape::push(Tensor value, bool requires_grad, bool is_leaf, std::string label) {
    nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad, is_leaf, std::move(label)});
    return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::constant(Tensor value) {
    return push(std::move(value), false, true, {});
}

Var Tape::leaf(Tensor value, std::string label) {
    return push(std::move(value), true, true, std::move(label));
}

Tensor* Tape::grad_slot(int id) {
    Node& node = nodes_[static_cast<std::size_t>(id)];
    if (!node.requires_grad) {
        return nullptr;
    }
    if (node.grad.empty()) {
        node.grad = Tensor::zeros(node.value.shape());
    }
    return &node.grad;
}

Tensor Tape::grad(const Var& v) const {
    if (v.tape() != this) {
        throw std::invalid_argument("grad: variable belongs to a different tape");
    }
    const Node& node = nodes_[static_cast<std::size_t>(v.id())];
    if (node.grad.empty()) {
        return Tensor::zeros(node.value.shape());
    }
    return node.grad;
}

void Tape::backward(const Var& root, const std::function<void(std::size_t, std::string_view)>& visit) {
    if (root.tape() != this) {
        throw std::invalid_argument("backward: root belongs to a different tape");
    }
    if (root.value().size() != 1) {
        throw std::invalid_argument("backward: root must be a scalar, got shape " +
                                    shape_string(root.shape()));
    }
    Tensor* seed = grad_slot(root.id());
    if (!seed) {
        return;  // nothing on the tape depends on a trainable leaf
    }
    (*seed)[0] += 1.0;
    for (std::size_t i = ops_.size(); i-- > 0;) {
        Op& op = ops_[i];
        if (visit) {
            visit(i, op.name);
        }
        const Node& out = nodes_[static_cast<std::size_t>(op.output)];
        if (out.grad.empty()) {
            continue;  // output not on a path to the root
        }
        op.backward(*this, out.grad);
    }
}

std::vector<std::string> Tape::trainable_labels() const {
    std::vector<std::string> labels;
    for (const Node& node : nodes_) {
        if (node.is_leaf && node.requires_grad) {
            labels.push_back(node.label);
        }
    }
    return labels;
}

template <class Range>
Var Tape::emit_impl(Tensor value, const Range& inputs, const char* name, BackwardFn fn) {
    bool needs_grad = false;
    for (const Var& in : inputs) {
        if (in.tape() != this) {
            throw std::invalid_argument(std::string(name) + ": input from a different tape");
        }
        needs_grad = needs_grad || requires_grad(in.id());
    }
    Var out = push(std::move(value), needs_grad, false, {});
    if (needs_grad) {
        ops_.push_back(Op{name, out.id(), std::move(fn)});
    }
    return out;
}

Var Tape::emit(Tensor value, std::initializer_list<Var> inputs, const char* name, BackwardFn fn) {
    return emit_impl(std::move(value), inputs, name, std::move(fn));
}

Var Tape::emit(Tensor value, const std::vector<Var>& inputs, const char* name, BackwardFn fn) {
    return emit_impl(std::move(value), inputs, name, std::move(fn));
}

}  // namespace syncmask
