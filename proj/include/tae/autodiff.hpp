#pragma once

// Reverse-mode differentiation over 2-D row-major arrays. A Tape records one
// forward pass; backward() replays the recorded closures in reverse. Nodes
// whose inputs carry no gradient are recorded without a closure, so a branch
// built from untracked parameters costs only its forward pass.

#include <deque>
#include <functional>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "tae/parameters.hpp"
#include "tae/rng.hpp"

namespace tae {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

template <typename T>
class Tape {
 public:
  /// With `record == false` nothing is differentiable (evaluation mode).
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var constant(int rows, int cols, std::vector<T> values);
  Var zeros(int rows, int cols) {
    return constant(rows, cols, std::vector<T>(static_cast<std::size_t>(rows) * cols, T(0)));
  }

  /// Wraps a parameter. With `track == false` the parameter acts as a
  /// constant on this tape and receives no gradient.
  Var param(Parameter<T>& p, bool track = true);
  Var param(const Parameter<T>& p) { return param(const_cast<Parameter<T>&>(p), false); }

  int rows(Var v) const { return node(v).rows; }
  int cols(Var v) const { return node(v).cols; }
  std::span<const T> value(Var v) const {
    const auto& n = node(v);
    return {n.data, static_cast<std::size_t>(n.rows) * n.cols};
  }
  T scalar(Var v) const;
  bool requires_grad(Var v) const { return node(v).grad != nullptr; }
  /// Gradient buffer of a node; empty for nodes that carry no gradient.
  std::span<const T> grad(Var v) const {
    const auto& n = node(v);
    if (!n.grad) return {};
    return {n.grad, static_cast<std::size_t>(n.rows) * n.cols};
  }

  /// Accumulates d(loss)/d(node) into every reachable gradient buffer,
  /// including parameter accumulators. The loss must be 1x1.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

  // Op-author interface.
  struct Node {
    int rows = 0;
    int cols = 0;
    std::vector<T> own;
    const T* data = nullptr;
    std::vector<T> grad_own;
    T* grad = nullptr;
    Parameter<T>* param = nullptr;
    std::function<void()> backward;
  };

  /// New node with owned zero-initialised storage. Gradient storage is
  /// allocated iff `needs_grad` and the tape is recording.
  Var make(int rows, int cols, bool needs_grad);
  T* mutable_value(Var v) { return node(v).own.data(); }
  T* grad_ptr(Var v) { return node(v).grad; }
  const T* value_ptr(Var v) const { return node(v).data; }
  void set_backward(Var v, std::function<void()> fn) { node(v).backward = std::move(fn); }

  Node& node(Var v) { return nodes_.at(static_cast<std::size_t>(v.id)); }
  const Node& node(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)); }

 private:
  bool record_;
  std::deque<Node> nodes_;
  std::unordered_map<const Parameter<T>*, Var> tracked_;
  std::unordered_map<const Parameter<T>*, Var> untracked_;
};

namespace ops {

template <typename T> Var matmul(Tape<T>& t, Var a, Var b);
/// x[n,in] * w[in,out] + b[1,out]
template <typename T> Var linear(Tape<T>& t, Var x, Var w, Var b);
template <typename T> Var add(Tape<T>& t, Var a, Var b);
template <typename T> Var mul(Tape<T>& t, Var a, Var b);
template <typename T> Var scale(Tape<T>& t, Var a, T s);
template <typename T> Var gelu(Tape<T>& t, Var a);
template <typename T> Var tanh(Tape<T>& t, Var a);
template <typename T> Var sigmoid(Tape<T>& t, Var a);
template <typename T> Var softmax(Tape<T>& t, Var a);
template <typename T> Var layer_norm(Tape<T>& t, Var x, Var gamma, Var beta);
/// Inverted dropout with a mask drawn from `rng`; identity when rate == 0.
template <typename T> Var dropout(Tape<T>& t, Var x, double rate, Rng& rng);
/// Rows of `table` selected by `ids`.
template <typename T> Var embedding(Tape<T>& t, Var table, std::span<const int> ids);
/// Sum of all entries of every input, as a 1x1 node.
template <typename T> Var sum(Tape<T>& t, std::span<const Var> xs);
template <typename T> Var sum_all(Tape<T>& t, Var a);

/// Scaled dot-product attention weights for `heads` heads, stacked as
/// [heads * rows(q), rows(k)]. Key j is hidden from query i when
/// key_valid[j] == 0, or when `causal` and j > i.
template <typename T>
Var attention_weights(Tape<T>& t, Var q, Var k, int heads, bool causal,
                      std::span<const char> key_valid);
/// Applies stacked weights to the value rows, concatenating heads.
template <typename T> Var attention_context(Tape<T>& t, Var weights, Var v, int heads);
/// Average of stacked per-head weights: [rows(q), rows(k)].
template <typename T> Var head_mean(Tape<T>& t, Var weights, int heads);

/// Cross-entropy between smoothed targets and the copy/generate mixture
///   P(y) = g * softmax(logits)[y] + (1 - g) * sum_{j: src[j] = y} copy[j]
/// summed over positions whose gold id is not `pad_id`, times `scale`.
template <typename T>
Var copy_mixture_loss(Tape<T>& t, Var logits, Var copy_weights, Var gate,
                      std::span<const int> src_ids, std::span<const int> gold, double smoothing,
                      int pad_id, double scale);

/// Cross-entropy between softmax(logits) and smoothed targets, summed over
/// non-pad rows, times `scale`; used by the decoder-only language model.
template <typename T>
Var softmax_cross_entropy(Tape<T>& t, Var logits, std::span<const int> gold, double smoothing,
                          int pad_id, double scale);

}  // namespace ops

struct GradCheckResult {
  double max_relative_error = 0.0;
  int checked = 0;
  int excluded = 0;  // coordinates of parameters that were not tracked
  // Coordinates whose analytic and numeric gradients are both below the
  // noise floor (e.g. attention key biases, which softmax cancels). Their
  // ratio is round-off over round-off, so only the absolute error is kept.
  int negligible = 0;
  double max_negligible_abs_error = 0.0;
};

/// Compares tape gradients with central finite differences on a sample of
/// coordinates of every parameter in `store`. `build` must record the same
/// deterministic scalar loss each time it is called.
GradCheckResult grad_check(ParameterStore<double>& store,
                           const std::function<Var(Tape<double>&)>& build, double eps,
                           int coords_per_param, std::uint64_t seed, double noise_floor = 1e-7);

}  // namespace tae
