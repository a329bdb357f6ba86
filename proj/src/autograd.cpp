#include "gsnet/autograd.hpp"

#include <unordered_set>

namespace gsnet {

namespace {
thread_local bool g_recording = true;
}

NoGradGuard::NoGradGuard() : previous_(g_recording) { g_recording = false; }
NoGradGuard::~NoGradGuard() { g_recording = previous_; }
bool NoGradGuard::recording() { return g_recording; }

template <typename T>
void Node<T>::accumulate(const Tensor<T>& g) {
    if (!requires_grad) {
        return;
    }
    if (g.shape() != value.shape()) {
        throw ContractError(std::string("gradient shape ") + shape_str(g.shape()) + " does not match value " +
                            shape_str(value.shape()) + " at op " + op);
    }
    if (grad.empty()) {
        grad = g;
        return;
    }
    T* dst = grad.data();
    const T* src = g.data();
    for (std::size_t i = 0; i < grad.size(); ++i) {
        dst[i] += src[i];
    }
}

template <typename T>
Var<T> Var<T>::constant(Tensor<T> value) {
    return leaf(std::move(value), false);
}

template <typename T>
Var<T> Var<T>::leaf(Tensor<T> value, bool requires_grad) {
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    return Var(std::move(node));
}

template <typename T>
const Tensor<T>& Var<T>::value() const {
    if (!node_) {
        throw UsageError("access to an undefined variable");
    }
    return node_->value;
}

template <typename T>
Tensor<T>& Var<T>::mutable_value() {
    if (!node_) {
        throw UsageError("access to an undefined variable");
    }
    return node_->value;
}

template <typename T>
const Tensor<T>& Var<T>::grad() const {
    if (!node_) {
        throw UsageError("access to an undefined variable");
    }
    return node_->grad;
}

template <typename T>
void Var<T>::zero_grad() {
    if (node_) {
        node_->grad = Tensor<T>();
    }
}

template <typename T>
Var<T> make_result(Tensor<T> value, const char* op, std::vector<Var<T>> parents,
                   std::function<void(Node<T>&)> backward_fn) {
    if (!value.all_finite()) {
        throw NumericError(std::string("non-finite value produced by ") + op);
    }
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    node->op = op;
    bool needs = false;
    if (NoGradGuard::recording()) {
        for (const auto& p : parents) {
            needs = needs || p.requires_grad();
        }
    }
    if (needs) {
        node->requires_grad = true;
        node->parents.reserve(parents.size());
        for (auto& p : parents) {
            node->parents.push_back(p.node_ptr());
        }
        node->backward_fn = std::move(backward_fn);
    }
    return Var<T>(std::move(node));
}

template <typename T>
void backward(const Var<T>& output, const Tensor<T>& cotangent) {
    if (!output.defined()) {
        throw UsageError("backward called on an undefined variable");
    }
    Node<T>* root = output.node();
    if (!root->requires_grad) {
        throw UsageError("backward called on a value with no recorded graph");
    }
    if (cotangent.shape() != root->value.shape()) {
        throw ContractError("cotangent shape " + shape_str(cotangent.shape()) + " does not match output " +
                            shape_str(root->value.shape()));
    }

    // Iterative post-order DFS gives a topological order.
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{root, 0}};
    seen.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node<T>* parent = node->parents[next++].get();
            if (parent->requires_grad && seen.insert(parent).second) {
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->accumulate(cotangent);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* node = *it;
        if (node->backward_fn && !node->grad.empty()) {
            node->backward_fn(*node);
        }
    }
}

template <typename T>
void backward(const Var<T>& output) {
    if (!output.defined()) {
        throw UsageError("backward called on an undefined variable");
    }
    backward(output, Tensor<T>::full(output.shape(), T(1)));
}

template struct Node<float>;
template struct Node<double>;
template class Var<float>;
template class Var<double>;
template Var<float> make_result(Tensor<float>, const char*, std::vector<Var<float>>,
                                std::function<void(Node<float>&)>);
template Var<double> make_result(Tensor<double>, const char*, std::vector<Var<double>>,
                                 std::function<void(Node<double>&)>);
template void backward(const Var<float>&, const Tensor<float>&);
template void backward(const Var<double>&, const Tensor<double>&);
template void backward(const Var<float>&);
template void backward(const Var<double>&);

}  // namespace gsnet
