#pragma once

// Minimal reverse-mode automatic differentiation over dense matrices.
//
// A Tape records every operation of one forward pass. Values live on the tape
// and are addressed through lightweight Var handles; calling backward() on a
// 1×1 result walks the tape in reverse and accumulates gradients into the
// bound Parameters. Tapes are single-use and single-threaded.

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "wsdec/tensor.hpp"

namespace wsdec {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}

  void zero_grad() { grad.fill(0.0); }
};

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double scalar() const { return value()[0]; }
  bool valid() const { return tape_ != nullptr; }
  bool requires_grad() const;
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward =
      std::function<void(Tape&, const Matrix& out_value, const Matrix& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Disables gradient recording for every node created afterwards.
  void set_grad_enabled(bool enabled) { grad_enabled_ = enabled; }
  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Matrix value);
  Var variable(Matrix value);
  Var param(Parameter& p);

  // Records a node; `backward` is stored only if some input requires grad.
  Var record(Matrix value, std::span<const Var> inputs, Backward backward);

  const Matrix& value(Var v) const { return nodes_[v.id()].value; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  // Gradient buffer of a node, allocated lazily. Only meaningful in backward.
  Matrix& grad(Var v);
  // Gradient after backward(); empty matrix when nothing flowed into v.
  const Matrix& grad_if_any(Var v) const { return nodes_[v.id()].grad; }

  // Backpropagates from a 1×1 node, scaled by `seed`, and accumulates the
  // result into every bound Parameter's grad.
  void backward(Var root, double seed = 1.0);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    bool requires_grad = false;
    Parameter* param = nullptr;
  };

  std::vector<Node> nodes_;
  bool grad_enabled_ = true;
};

namespace ad {

Var matmul(Var a, Var b);
// a * b^T
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
// Adds a 1×n row to every row of a.
Var add_row(Var a, Var row);
Var sigmoid(Var a);
Var tanh(Var a);
Var square(Var a);
Var clamp(Var a, double lo, double hi);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var row(Var a, std::size_t r);
Var stack_rows(std::span<const Var> rows);
Var repeat_rows(Var row, std::size_t n);
Var gather_rows(Var table, std::span<const int> ids);
Var softmax_rows(Var a);
Var sum(Var a);
Var mean(Var a);

// Gated recurrent step. `gates_x` is the 1×3d input contribution (bias
// included) laid out as [update | reset | candidate]; `u_zr` is d×2d and
// `u_n` is d×d. Returns the next 1×d hidden state:
//   z = sig(xz + h Uz), r = sig(xr + h Ur), n = tanh(xn + (r*h) Un)
//   h' = (1 - z) * h + z * n
Var gru_step(Var gates_x, Var h, Var u_zr, Var u_n);

// Mean negative log-likelihood of softmax(logits) rows against integer
// targets; rows whose target equals `ignore` are skipped. Returns 1×1.
// Throws std::invalid_argument if every row is ignored.
Var softmax_cross_entropy(Var logits, std::span<const int> targets, int ignore = -1);

}  // namespace ad

}  // namespace wsdec
