#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "gsnet/tensor.hpp"

namespace gsnet {

template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // empty until something flows into it
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this node's grad and accumulates into the parents.
    std::function<void(Node&)> backward_fn;

    void accumulate(const Tensor<T>& g);
};

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

    static bool recording();

private:
    bool previous_;
};

/// Handle to a node of the dynamic computation graph.
template <typename T>
class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

    static Var constant(Tensor<T> value);
    static Var leaf(Tensor<T> value, bool requires_grad);

    bool defined() const { return static_cast<bool>(node_); }
    const Tensor<T>& value() const;
    Tensor<T>& mutable_value();
    const Tensor<T>& grad() const;
    bool has_grad() const { return node_ && !node_->grad.empty(); }
    const Shape& shape() const { return value().shape(); }
    std::int64_t dim(std::size_t axis) const { return value().dim(axis); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    void zero_grad();

    Node<T>* node() const { return node_.get(); }
    const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

private:
    std::shared_ptr<Node<T>> node_;
};

/// Creates the output node of an op. Parents and backward are kept only
/// when recording is on and some parent requires a gradient.
template <typename T>
Var<T> make_result(Tensor<T> value, const char* op, std::vector<Var<T>> parents,
                   std::function<void(Node<T>&)> backward_fn);

/// Reverse-mode sweep from `output` seeded with `cotangent`.
template <typename T>
void backward(const Var<T>& output, const Tensor<T>& cotangent);

/// Scalar outputs: seeds with 1.
template <typename T>
void backward(const Var<T>& output);

}  // namespace gsnet
