#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "stmg/numerics.hpp"
#include "stmg/tensor.hpp"

namespace stmg {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Linear record of primitive operations for reverse-mode differentiation.
///
/// Each recorded node keeps its forward value and an adjoint rule that
/// scatters the node's gradient into its inputs. backward() replays the
/// rules in reverse recording order. Single-threaded.
class Tape {
 public:
  using Adjoint = std::function<void(Tape&, std::size_t self, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf whose gradient is tracked.
  Var variable(Tensor value);

  Var record(Tensor value, std::initializer_list<Var> inputs, Adjoint adjoint);
  Var record(Tensor value, const std::vector<Var>& inputs, Adjoint adjoint);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  /// Gradient buffer for `id`, allocated as zeros on first use.
  Tensor& grad_buffer(std::size_t id);
  void accumulate(std::size_t id, const Tensor& contribution);

  /// Reverse sweep from a scalar output. Throws ContractError for non-scalar outputs.
  void backward(Var output);

  /// Gradient of the last backward() output w.r.t. `v`; zeros if unreached.
  Tensor grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }

  /// Running hash of the branch choices (sign patterns) taken by piecewise
  /// primitives. Two evaluations with equal signatures lie on the same
  /// smooth piece of the recorded function.
  std::uint64_t branch_signature() const { return branch_signature_; }
  void mix_branch(std::uint64_t bits);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    Adjoint adjoint;
  };

  std::vector<Node> nodes_;
  std::uint64_t branch_signature_ = 0xcbf29ce484222325ULL;
};

// Primitive operations. Every op records its adjoint rule on the tape its
// operands live on; all operands must share a tape.

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
/// a + s for a one-element `s`.
Var add_broadcast(Var a, Var s);
/// a * s for a one-element `s`.
Var mul_broadcast(Var a, Var s);
/// a / s for a one-element `s`.
Var div_broadcast(Var a, Var s);
Var exp(Var a);
Var log(Var a);
Var sqrt(Var a);
Var square(Var a);
Var leaky_relu(Var a, double slope = kDefaultLeakySlope);
Var relu(Var a);
Var clamp(Var a, double lo, double hi);
Var sum(Var a);
Var mean(Var a);
Var dot(Var a, Var b);
/// out(i, j) = col[i] + row[j].
Var outer_add(Var col, Var row);
Var masked_softmax(Var logits, const Mask& mask);
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var gather_rows(Var a, const std::vector<std::size_t>& rows);
/// Flat-index gather into a rank-1 tensor.
Var take(Var a, const std::vector<std::size_t>& flat_indices);
Var reshape(Var a, Shape shape);
/// (n x m) + bias(m) broadcast over rows.
Var add_row_bias(Var a, Var bias);
/// Same-size 2-D convolution with zero padding.
/// x: {Cin, H, W}; kernel: {Cout, Cin, K, K} with odd K; bias: {Cout}.
Var conv2d(Var x, Var kernel, Var bias);

}  // namespace stmg
