#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "m2pt/tensor.hpp"

namespace m2pt {

/// Handle to a node on a Tape.
struct Var {
  std::uint32_t id = std::numeric_limits<std::uint32_t>::max();
  bool valid() const { return id != std::numeric_limits<std::uint32_t>::max(); }
};

// Reverse-mode tape. Nodes are appended in evaluation order, so parents
// always precede children and a reverse sweep over indices is a reverse
// topological order.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, Var self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor<T> value) { return push(std::move(value), nullptr, false, {}); }

  /// References `external` without copying; it must outlive the tape.
  Var leaf(const Tensor<T>& external, bool requires_grad, const std::string& name = {}) {
    Var v = push(Tensor<T>{}, &external, requires_grad, {});
    if (!name.empty()) {
      leaves_[name] = v;
    }
    return v;
  }

  /// Records an op result. The node needs a gradient iff any parent does.
  Var record(Tensor<T> value, std::initializer_list<Var> parents, BackwardFn backward) {
    bool needs = false;
    for (Var p : parents) {
      needs = needs || nodes_[p.id].needs_grad;
    }
    return push(std::move(value), nullptr, needs, needs ? std::move(backward) : BackwardFn{});
  }

  Var record(Tensor<T> value, std::span<const Var> parents, BackwardFn backward) {
    bool needs = false;
    for (Var p : parents) {
      needs = needs || nodes_[p.id].needs_grad;
    }
    return push(std::move(value), nullptr, needs, needs ? std::move(backward) : BackwardFn{});
  }

  const Tensor<T>& value(Var v) const {
    const Node& n = nodes_.at(v.id);
    return n.external != nullptr ? *n.external : n.owned;
  }

  bool requires_grad(Var v) const { return nodes_.at(v.id).needs_grad; }

  bool has_grad(Var v) const { return !nodes_.at(v.id).grad.empty(); }

  /// Gradient buffer for v, zero-initialized on first access.
  Tensor<T>& grad(Var v) {
    Node& n = nodes_.at(v.id);
    if (n.grad.empty() && !value(v).empty()) {
      n.grad = Tensor<T>(value(v).shape());
    }
    return n.grad;
  }

  void backward(Var root) {
    const Tensor<T>& r = value(root);
    if (r.size() != 1) {
      throw DimensionError("backward root must be a scalar, got shape " +
                           shape_to_string(r.shape()));
    }
    if (!nodes_[root.id].needs_grad) {
      return;
    }
    grad(root)[0] = T{1};
    visits_ = 0;
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.needs_grad || n.grad.empty()) {
        continue;
      }
      ++visits_;
      if (n.backward) {
        n.backward(*this, Var{static_cast<std::uint32_t>(i)});
      }
    }
  }

  std::size_t size() const { return nodes_.size(); }
  std::size_t backward_visits() const { return visits_; }
  const std::map<std::string, Var>& leaves() const { return leaves_; }

 private:
  struct Node {
    Tensor<T> owned;
    const Tensor<T>* external = nullptr;
    Tensor<T> grad;
    bool needs_grad = false;
    BackwardFn backward;
  };

  Var push(Tensor<T> value, const Tensor<T>* external, bool needs, BackwardFn fn) {
    Node n;
    n.owned = std::move(value);
    n.external = external;
    n.needs_grad = needs;
    n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  std::vector<Node> nodes_;
  std::map<std::string, Var> leaves_;
  std::size_t visits_ = 0;
};

/// Receives last-call attention probabilities averaged over heads, [T×T].
template <typename T>
struct AttentionCapture {
  bool enabled = false;
  Tensor<T> mean_probs;
};

class EmptyLossError : public NumericError {
 public:
  using NumericError::NumericError;
};

// Primitive ops. Shapes are validated eagerly and reported by DimensionError.

template <typename T>
Var matmul(Tape<T>& tape, Var a, Var b);

/// x[T×in]·w[in×out] + bias[out]
template <typename T>
Var linear(Tape<T>& tape, Var x, Var weight, Var bias);

template <typename T>
Var add(Tape<T>& tape, Var a, Var b);

template <typename T>
Var mul(Tape<T>& tape, Var a, Var b);

template <typename T>
Var scale(Tape<T>& tape, Var x, T factor);

template <typename T>
Var sum(Tape<T>& tape, Var x);

template <typename T>
Var gelu(Tape<T>& tape, Var x);

/// Softmax over the last axis.
template <typename T>
Var softmax(Tape<T>& tape, Var x);

template <typename T>
Var layer_norm(Tape<T>& tape, Var x, Var gain, Var bias, T eps = T(1e-5));

/// Mean negative log-likelihood over positions with mask[i] set.
template <typename T>
Var cross_entropy(Tape<T>& tape, Var logits, std::span<const int> targets,
                  std::span<const std::uint8_t> mask);

template <typename T>
Var concat_rows(Tape<T>& tape, std::span<const Var> parts);

template <typename T>
Var slice_rows(Tape<T>& tape, Var x, std::size_t begin, std::size_t end);

/// Rows of table[V×d] selected by ids.
template <typename T>
Var embedding(Tape<T>& tape, Var table, std::span<const int> ids);

/// Scaled dot-product multi-head attention over pre-projected q, k, v [T×d].
template <typename T>
Var attention(Tape<T>& tape, Var q, Var k, Var v, std::size_t num_heads, bool causal,
              AttentionCapture<T>* capture = nullptr);

}  // namespace m2pt
