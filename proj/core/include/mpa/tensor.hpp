#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace mpa {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) {
    if (d <= 0) throw std::invalid_argument("tensor extent must be positive");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

inline bool same_shape(const Shape& a, const Shape& b) { return a == b; }

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

template <typename T>
class Backprop;

// One node of a reverse-mode computation graph. Nodes are created through
// make_leaf / make_node and held by shared_ptr; the graph is a DAG rooted at
// the loss. Gradients live outside the node (see Backprop) so a parameter
// node can be shared by many graphs without aliasing its gradient.
template <typename T>
struct Tensor {
  static_assert(std::is_floating_point_v<T>);
  using Vjp = std::function<void(const std::vector<T>&, Backprop<T>&)>;

  Shape shape;
  std::vector<T> value;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Tensor>> parents;
  Vjp vjp;  // pulls the incoming gradient back onto parents; empty for leaves

  std::size_t numel() const { return value.size(); }

  T scalar() const {
    if (value.size() != 1)
      throw std::invalid_argument("scalar() on tensor of shape " + shape_str(shape));
    return value[0];
  }
};

template <typename T>
using TensorPtr = std::shared_ptr<Tensor<T>>;

template <typename T>
TensorPtr<T> make_leaf(Shape shape, std::vector<T> value, bool requires_grad = false) {
  if (shape_numel(shape) != value.size())
    throw std::invalid_argument("leaf value size does not match shape " + shape_str(shape));
  auto t = std::make_shared<Tensor<T>>();
  t->shape = std::move(shape);
  t->value = std::move(value);
  t->requires_grad = requires_grad;
  return t;
}

template <typename T>
TensorPtr<T> make_node(Shape shape, std::vector<T> value,
                       std::vector<TensorPtr<T>> parents,
                       typename Tensor<T>::Vjp vjp) {
  if (shape_numel(shape) != value.size())
    throw std::invalid_argument("node value size does not match shape " + shape_str(shape));
  auto t = std::make_shared<Tensor<T>>();
  t->shape = std::move(shape);
  t->value = std::move(value);
  for (const auto& p : parents)
    if (p && p->requires_grad) t->requires_grad = true;
  t->parents = std::move(parents);
  if (t->requires_grad) t->vjp = std::move(vjp);
  return t;
}

template <typename T>
TensorPtr<T> full_like(const TensorPtr<T>& t, T fill) {
  return make_leaf<T>(t->shape, std::vector<T>(t->numel(), fill));
}

// Reverse-mode sweep from a scalar root. Gradient buffers are keyed by node
// address; interior buffers are released as soon as their vjp has consumed
// them, leaf gradients stay harvestable until the Backprop is destroyed.
template <typename T>
class Backprop {
 public:
  explicit Backprop(const TensorPtr<T>& root) {
    if (!root) throw std::invalid_argument("backward on null tensor");
    if (root->numel() != 1)
      throw std::invalid_argument("backward requires a scalar root, got " +
                                  shape_str(root->shape));
    if (!root->requires_grad) return;
    auto order = topo_order(root);
    grads_[root.get()] = {T(1)};
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Tensor<T>* node = *it;
      auto g = grads_.find(node);
      if (g == grads_.end()) continue;
      if (node->vjp) {
        node->vjp(g->second, *this);
        grads_.erase(g);  // interior gradient fully propagated
      }
    }
  }

  // Accumulation buffer for a node, or nullptr if it does not need a
  // gradient. Called by vjp closures.
  std::vector<T>* grad_of(const Tensor<T>* t) {
    if (!t || !t->requires_grad) return nullptr;
    auto [it, inserted] = grads_.try_emplace(t);
    if (inserted) it->second.assign(t->numel(), T(0));
    return &it->second;
  }

  // Harvest a leaf gradient; zeros if the leaf was unreachable from the root.
  std::vector<T> grad(const TensorPtr<T>& t) const {
    auto it = grads_.find(t.get());
    if (it == grads_.end()) return std::vector<T>(t->numel(), T(0));
    return it->second;
  }

  bool has_grad(const TensorPtr<T>& t) const { return grads_.count(t.get()) > 0; }

 private:
  static std::vector<Tensor<T>*> topo_order(const TensorPtr<T>& root) {
    // Iterative DFS postorder over the requires_grad subgraph.
    std::vector<Tensor<T>*> order;
    std::unordered_map<const Tensor<T>*, bool> state;  // false=open, true=done
    std::vector<std::pair<Tensor<T>*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    state[root.get()] = false;
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        Tensor<T>* p = node->parents[next++].get();
        if (p && p->requires_grad && !state.count(p)) {
          state[p] = false;
          stack.emplace_back(p, 0);
        }
      } else {
        state[node] = true;
        order.push_back(node);
        stack.pop_back();
      }
    }
    return order;
  }

  std::unordered_map<const Tensor<T>*, std::vector<T>> grads_;
};

}  // namespace mpa
