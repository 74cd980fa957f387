#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "m2pt/autograd.hpp"

namespace m2pt {

/// Named parameter registry. Iteration order is the sorted name order, which
/// fixes checkpoint layout and optimizer traversal.
template <typename T>
class ParameterStore {
 public:
  void add(const std::string& name, Tensor<T> value) {
    if (name.empty()) {
      throw RegistryError("parameter name must be nonempty");
    }
    if (!entries_.emplace(name, std::move(value)).second) {
      throw RegistryError("parameter '" + name + "' registered twice");
    }
  }

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  const Tensor<T>& get(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) {
      throw RegistryError("unregistered parameter '" + name + "'");
    }
    return it->second;
  }

  Tensor<T>& get(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) {
      throw RegistryError("unregistered parameter '" + name + "'");
    }
    return it->second;
  }

  void erase(const std::string& name) { entries_.erase(name); }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [name, _] : entries_) out.push_back(name);
    return out;
  }

  std::size_t size() const { return entries_.size(); }

  std::size_t numel(const std::string& prefix = {}) const {
    std::size_t total = 0;
    for (const auto& [name, t] : entries_) {
      if (name.rfind(prefix, 0) == 0) total += t.size();
    }
    return total;
  }

  const std::map<std::string, Tensor<T>>& entries() const { return entries_; }
  std::map<std::string, Tensor<T>>& entries() { return entries_; }

  template <typename U>
  ParameterStore<U> cast() const {
    ParameterStore<U> out;
    for (const auto& [name, t] : entries_) out.add(name, t.template cast<U>());
    return out;
  }

  bool operator==(const ParameterStore& other) const { return entries_ == other.entries_; }

 private:
  std::map<std::string, Tensor<T>> entries_;
};

/// Binds registry entries to tape leaves on first use. A leaf requires a
/// gradient iff its name is in the trainable set.
template <typename T>
class ParamBinder {
 public:
  ParamBinder(Tape<T>& tape, const ParameterStore<T>& store,
              const std::set<std::string>* trainable = nullptr)
      : tape_(tape), store_(store), trainable_(trainable) {}

  Var operator()(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    const bool train = trainable_ != nullptr && trainable_->count(name) != 0;
    Var v = tape_.leaf(store_.get(name), train, name);
    bound_.emplace(name, v);
    return v;
  }

  Tape<T>& tape() { return tape_; }
  const ParameterStore<T>& store() const { return store_; }
  const std::map<std::string, Var>& bound() const { return bound_; }

  /// Adds `weight` times the gradient of each bound trainable leaf into grads.
  void accumulate_grads(std::map<std::string, Tensor<T>>& grads, T weight = T(1)) const {
    for (const auto& [name, v] : bound_) {
      if (!tape_.has_grad(v)) continue;
      const Tensor<T>& g = tape_.grad(v);
      auto [it, inserted] = grads.try_emplace(name, g.shape());
      Tensor<T>& dst = it->second;
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += weight * g[i];
    }
  }

 private:
  Tape<T>& tape_;
  const ParameterStore<T>& store_;
  const std::set<std::string>* trainable_;
  std::map<std::string, Var> bound_;
};

}  // namespace m2pt
