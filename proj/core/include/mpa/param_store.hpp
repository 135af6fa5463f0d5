#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mpa/error.hpp"
#include "mpa/rng.hpp"
#include "mpa/tensor.hpp"

namespace mpa {

template <typename T>
struct Parameter {
  std::string name;
  TensorPtr<T> tensor;
  bool trainable = true;
  std::vector<T> m, v;  // Adam first/second moment, sized on first step
};

// Ordered registry of named parameter leaves. Registration order is the
// canonical order for checkpoint serialization, hashing and optimizer
// updates, so runs with the same seed touch parameters identically.
template <typename T>
class ParameterStore {
 public:
  TensorPtr<T> create(const std::string& name, Shape shape, std::vector<T> init,
                      bool trainable = true) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    auto t = make_leaf<T>(std::move(shape), std::move(init), trainable);
    index_[name] = params_.size();
    params_.push_back(Parameter<T>{name, t, trainable, {}, {}});
    return t;
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  Parameter<T>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return params_[it->second];
  }
  const Parameter<T>& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return params_[it->second];
  }

  TensorPtr<T> get(const std::string& name) const { return at(name).tensor; }

  std::vector<Parameter<T>>& all() { return params_; }
  const std::vector<Parameter<T>>& all() const { return params_; }

  // Freezing clears requires_grad so frozen parameters receive no gradient
  // buffers at all during backward.
  void set_trainable(const std::string& name, bool trainable) {
    auto& p = at(name);
    p.trainable = trainable;
    p.tensor->requires_grad = trainable;
  }

  void set_trainable_prefix(const std::string& prefix, bool trainable) {
    for (auto& p : params_)
      if (p.name.rfind(prefix, 0) == 0) {
        p.trainable = trainable;
        p.tensor->requires_grad = trainable;
      }
  }

  void set_all_trainable(bool trainable) {
    for (auto& p : params_) {
      p.trainable = trainable;
      p.tensor->requires_grad = trainable;
    }
  }

  std::size_t total_size(const std::string& prefix = "") const {
    std::size_t n = 0;
    for (const auto& p : params_)
      if (prefix.empty() || p.name.rfind(prefix, 0) == 0) n += p.tensor->numel();
    return n;
  }

  std::size_t trainable_size() const {
    std::size_t n = 0;
    for (const auto& p : params_)
      if (p.trainable) n += p.tensor->numel();
    return n;
  }

 private:
  std::vector<Parameter<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Sum of per-sample gradients, keyed by parameter node.
template <typename T>
class GradAccumulator {
 public:
  void add(const ParameterStore<T>& store, const Backprop<T>& bp) {
    for (const auto& p : store.all()) {
      if (!p.trainable || !bp.has_grad(p.tensor)) continue;
      auto g = bp.grad(p.tensor);
      auto& acc = grads_[p.tensor.get()];
      if (acc.empty()) acc.assign(g.size(), T(0));
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
    }
  }

  void scale(T s) {
    for (auto& [_, g] : grads_)
      for (auto& v : g) v *= s;
  }

  const std::vector<T>* find(const TensorPtr<T>& t) const {
    auto it = grads_.find(t.get());
    return it == grads_.end() ? nullptr : &it->second;
  }

  void clear() { grads_.clear(); }

 private:
  std::unordered_map<const Tensor<T>*, std::vector<T>> grads_;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One Adam update over the trainable parameters, in registration order.
// `step` counts applied updates starting at 1 (bias correction exponent).
template <typename T>
void adam_step(ParameterStore<T>& store, const GradAccumulator<T>& grads, double lr,
               long step, const AdamConfig& cfg = {}) {
  if (step < 1) throw std::invalid_argument("adam_step: step index starts at 1");
  T b1 = T(cfg.beta1), b2 = T(cfg.beta2);
  T corr1 = T(1) - std::pow(b1, T(step));
  T corr2 = T(1) - std::pow(b2, T(step));
  for (auto& p : store.all()) {
    if (!p.trainable) continue;
    const auto* g = grads.find(p.tensor);
    if (!g) continue;
    auto& val = p.tensor->value;
    if (p.m.empty()) {
      p.m.assign(val.size(), T(0));
      p.v.assign(val.size(), T(0));
    }
    for (std::size_t i = 0; i < val.size(); ++i) {
      p.m[i] = b1 * p.m[i] + (T(1) - b1) * (*g)[i];
      p.v[i] = b2 * p.v[i] + (T(1) - b2) * (*g)[i] * (*g)[i];
      T mhat = p.m[i] / corr1;
      T vhat = p.v[i] / corr2;
      val[i] -= T(lr) * mhat / (std::sqrt(vhat) + T(cfg.eps));
    }
  }
}

// Fan-in scaled normal init for weights, zeros for biases.
template <typename T>
std::vector<T> normal_init(Rng& rng, std::size_t n, double stddev) {
  std::vector<T> out(n);
  for (auto& v : out) v = T(rng.normal(0.0, stddev));
  return out;
}

}  // namespace mpa
