#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "otanim/sparse.hpp"
#include "otanim/tensor.hpp"

namespace otanim {

class Tape;

// Handle to a node on a tape. Cheap to copy; the tape owns all storage.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor& value() const;
  const std::vector<std::size_t>& shape() const { return value().shape(); }
};

// Record of executed operations in topological order, with one backward rule
// per op. One tape per forward pass; rebuilt each step. A tape is confined to
// a single thread; parallelism runs independent tapes and sums leaf gradients.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  Var leaf(Tensor value, bool requires_grad);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  // Appends an op node. Parents must already be on this tape (asserted, which
  // rules out cycles). `backward` may be empty when no parent needs gradients.
  Var record(Tensor value, std::vector<int> parents, BackwardFn backward);

  const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

  // Gradient buffer, allocated as zeros on first access after backward() ran.
  Tensor& grad(int id);
  // Gradient of a node; zeros if the node was never reached.
  Tensor gradient(Var v);

  // Reverse sweep from a scalar output. Deterministic: fixed reverse creation
  // order, fixed accumulation order. May be called repeatedly; gradients reset
  // at the start of each call.
  void backward(Var output);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<int> parents;
    BackwardFn backward;
    bool requires_grad = false;
    bool grad_live = false;
  };
  std::vector<Node> nodes_;
};

// ---- ops ----------------------------------------------------------------
// All ops check shapes, record a backward rule when a parent is grad-tracked,
// and raise on non-finite results.

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var relu(Var a);
Var square(Var a);
Var sqrt_elem(Var a);            // backward subgradient 0 at x == 0
Var sum(Var a);                  // scalar
Var mean(Var a);                 // scalar
Var matmul(Var a, Var b);

// y = s * x with constant s; gradient flows into x only. If `s_transposed` is
// null the transpose is built once at record time.
Var sparse_matmul(const SparseMatrix& s, Var x, const SparseMatrix* s_transposed = nullptr);

Var add_rowvec(Var m, Var v);    // (R x C) + (C), broadcast over rows
Var transpose(Var a);            // rank-2
Var concat0(Var a, Var b);       // along axis 0; trailing dims must match
Var slice_rows(Var a, std::size_t r0, std::size_t r1);
Var reshape(Var a, std::vector<std::size_t> shape);

// Temporal convolution with same-padding, edges clamped so a constant signal
// stays constant. x: (T x Cin), w: (K x Cin x Cout), b: (Cout). K must be odd.
Var conv1d_same(Var x, Var w, Var b);

// Linear interpolation along axis 0 to exactly t_out rows, endpoints aligned.
Var time_resample(Var x, std::size_t t_out);

// Sum over rows of the Euclidean row norm; subgradient 0 for zero rows.
Var rows_norm_sum(Var x);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
// `f` must be evaluable at x +/- eps per coordinate; non-finite values raise.
double finite_diff_check(const std::function<double(const Tensor&)>& f, const Tensor& x,
                         const Tensor& analytic_grad, double eps = 1e-5);

}  // namespace otanim
