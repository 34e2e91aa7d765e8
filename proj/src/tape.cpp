#include "otanim/tape.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace otanim {

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::record(Tensor value, std::vector<int> parents, BackwardFn backward) {
  const int self = static_cast<int>(nodes_.size());
  bool rg = false;
  for (const int p : parents) {
    assert(p >= 0 && p < self && "tape parents must precede the node");
    rg = rg || nodes_[static_cast<std::size_t>(p)].requires_grad;
  }
  Node n;
  n.value = std::move(value);
  n.parents = std::move(parents);
  n.requires_grad = rg;
  if (rg) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{this, self};
}

Tensor& Tape::grad(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.grad_live) {
    n.grad = Tensor(n.value.shape());
    n.grad_live = true;
  }
  return n.grad;
}

Tensor Tape::gradient(Var v) {
  Node& n = nodes_[static_cast<std::size_t>(v.id)];
  if (!n.grad_live) return Tensor(n.value.shape());
  return n.grad;
}

void Tape::backward(Var output) {
  if (output.tape != this) throw std::invalid_argument("backward: output from another tape");
  const Node& out = nodes_[static_cast<std::size_t>(output.id)];
  if (out.value.size() != 1) {
    throw std::invalid_argument("backward: output must be scalar, got " +
                                shape_to_string(out.value.shape()));
  }
  for (Node& n : nodes_) n.grad_live = false;
  grad(output.id)[0] = 1.0;
  for (int i = output.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.grad_live && n.backward) n.backward(*this, i);
  }
}

namespace {

void require_same_tape(Var a, Var b, const char* op) {
  if (a.tape != b.tape) throw std::invalid_argument(std::string(op) + ": vars on different tapes");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  }
}

}  // namespace

Var add(Var a, Var b) {
  require_same_tape(a, b, "add");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "add");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  out.check_finite("add");
  const int aid = a.id, bid = b.id;
  return a.tape->record(std::move(out), {aid, bid}, [aid, bid](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(aid)) {
      Tensor& ga = t.grad(aid);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.needs_grad(bid)) {
      Tensor& gb = t.grad(bid);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b, "sub");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "sub");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  out.check_finite("sub");
  const int aid = a.id, bid = b.id;
  return a.tape->record(std::move(out), {aid, bid}, [aid, bid](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(aid)) {
      Tensor& ga = t.grad(aid);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.needs_grad(bid)) {
      Tensor& gb = t.grad(bid);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b, "mul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "mul");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  out.check_finite("mul");
  const int aid = a.id, bid = b.id;
  return a.tape->record(std::move(out), {aid, bid}, [aid, bid](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(aid);
    const Tensor& bv = t.value(bid);
    if (t.needs_grad(aid)) {
      Tensor& ga = t.grad(aid);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.needs_grad(bid)) {
      Tensor& gb = t.grad(bid);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double s) {
  if (!std::isfinite(s)) throw std::invalid_argument("scale: non-finite factor");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
  out.check_finite("scale");
  const int aid = a.id;
  return a.tape->record(std::move(out), {aid}, [aid, s](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(aid);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

Var relu(Var a) {
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
  const int aid = a.id;
  return a.tape->record(std::move(out), {aid}, [aid](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& x = t.value(aid);
    Tensor& ga = t.grad(aid);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > 0.0) ga[i] += g[i];
    }
  });
}

Var square(Var a) {
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= out[i];
  out.check_finite("square");
  const int aid = a.id;
  return a.tape->record(std::move(out), {aid}, [aid](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& x = t.value(aid);
    Tensor& ga = t.grad(aid);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * x[i] * g[i];
  });
}

Var sqrt_elem(Var a) {
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(out[i]);
  out.check_finite("sqrt");
  const int aid = a.id;
  return a.tape->record(std::move(out), {aid}, [aid](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad(aid);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (y[i] > 0.0) ga[i] += 0.5 / y[i] * g[i];
    }
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (const double x : a.value().values()) s += x;
  Tensor out = Tensor::scalar(s);
  out.check_finite("sum");
  const int aid = a.id;
  return a.tape->record(std::move(out), {aid}, [aid](Tape& t, int self) {
    const double g = t.grad(self)[0];
    Tensor& ga = t.grad(aid);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw std::invalid_argument("mean: empty tensor");
  double s = 0.0;
  for (const double x : a.value().values()) s += x;
  Tensor out = Tensor::scalar(s / static_cast<double>(n));
  out.check_finite("mean");
  const int aid = a.id;
  return a.tape->record(std::move(out), {aid}, [aid, n](Tape& t, int self) {
    const double g = t.grad(self)[0] / static_cast<double>(n);
    Tensor& ga = t.grad(aid);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

namespace {

// C (m x n) += A (m x k) * B (k x n)
void matmul_accum(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      const double av = arow[l];
      if (av == 0.0) continue;
      const double* brow = b + l * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_tape(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw std::invalid_argument("matmul: shape mismatch " + shape_to_string(av.shape()) + " * " +
                                shape_to_string(bv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor out({m, n});
  matmul_accum(av.data(), bv.data(), out.data(), m, k, n);
  out.check_finite("matmul");
  const int aid = a.id, bid = b.id;
  return a.tape->record(std::move(out), {aid, bid}, [aid, bid, m, k, n](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(aid)) {
      // grad_a = g * b^T
      const Tensor& bv = t.value(bid);
      Tensor& ga = t.grad(aid);
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g.data() + i * n;
        double* garow = ga.data() + i * k;
        for (std::size_t l = 0; l < k; ++l) {
          const double* brow = bv.data() + l * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          garow[l] += acc;
        }
      }
    }
    if (t.needs_grad(bid)) {
      // grad_b = a^T * g
      const Tensor& av = t.value(aid);
      Tensor& gb = t.grad(bid);
      for (std::size_t i = 0; i < m; ++i) {
        const double* arow = av.data() + i * k;
        const double* grow = g.data() + i * n;
        for (std::size_t l = 0; l < k; ++l) {
          const double avl = arow[l];
          if (avl == 0.0) continue;
          double* gbrow = gb.data() + l * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += avl * grow[j];
        }
      }
    }
  });
}

Var sparse_matmul(const SparseMatrix& s, Var x, const SparseMatrix* s_transposed) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || xv.dim(0) != s.cols()) {
    throw std::invalid_argument("sparse_matmul: shape mismatch, matrix is " +
                                std::to_string(s.rows()) + "x" + std::to_string(s.cols()) +
                                ", input " + shape_to_string(xv.shape()));
  }
  Tensor out = s.multiply(xv);
  out.check_finite("sparse_matmul");
  if (!x.tape->needs_grad(x.id)) return x.tape->record(std::move(out), {x.id}, {});
  std::shared_ptr<const SparseMatrix> st;
  const SparseMatrix* stp = s_transposed;
  if (stp == nullptr) {
    st = std::make_shared<SparseMatrix>(s.transposed());
    stp = st.get();
  }
  const int xid = x.id;
  return x.tape->record(std::move(out), {xid}, [xid, stp, st](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor gx = stp->multiply(g);
    Tensor& dst = t.grad(xid);
    for (std::size_t i = 0; i < gx.size(); ++i) dst[i] += gx[i];
  });
}

Var add_rowvec(Var m, Var v) {
  require_same_tape(m, v, "add_rowvec");
  const Tensor& mv = m.value();
  const Tensor& vv = v.value();
  if (mv.rank() != 2 || vv.rank() != 1 || mv.dim(1) != vv.dim(0)) {
    throw std::invalid_argument("add_rowvec: shape mismatch " + shape_to_string(mv.shape()) +
                                " + " + shape_to_string(vv.shape()));
  }
  const std::size_t rows = mv.dim(0), cols = mv.dim(1);
  Tensor out = mv;
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = out.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) row[c] += vv[c];
  }
  out.check_finite("add_rowvec");
  const int mid = m.id, vid = v.id;
  return m.tape->record(std::move(out), {mid, vid}, [mid, vid, rows, cols](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(mid)) {
      Tensor& gm = t.grad(mid);
      for (std::size_t i = 0; i < g.size(); ++i) gm[i] += g[i];
    }
    if (t.needs_grad(vid)) {
      Tensor& gv = t.grad(vid);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* row = g.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) gv[c] += row[c];
      }
    }
  });
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  if (av.rank() != 2) throw std::invalid_argument("transpose: rank-2 required");
  const std::size_t r = av.dim(0), c = av.dim(1);
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = av.at(i, j);
  const int aid = a.id;
  return a.tape->record(std::move(out), {aid}, [aid, r, c](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(aid);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga.at(i, j) += g.at(j, i);
  });
}

Var concat0(Var a, Var b) {
  require_same_tape(a, b, "concat0");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() == 0 || av.rank() != bv.rank()) {
    throw std::invalid_argument("concat0: rank mismatch");
  }
  for (std::size_t d = 1; d < av.rank(); ++d) {
    if (av.dim(d) != bv.dim(d)) {
      throw std::invalid_argument("concat0: trailing shape mismatch " +
                                  shape_to_string(av.shape()) + " vs " +
                                  shape_to_string(bv.shape()));
    }
  }
  std::vector<std::size_t> shape(av.shape());
  shape[0] += bv.dim(0);
  Tensor out(shape);
  const std::size_t na = av.size(), nb = bv.size();
  for (std::size_t i = 0; i < na; ++i) out[i] = av[i];
  for (std::size_t i = 0; i < nb; ++i) out[na + i] = bv[i];
  const int aid = a.id, bid = b.id;
  return a.tape->record(std::move(out), {aid, bid}, [aid, bid, na, nb](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(aid)) {
      Tensor& ga = t.grad(aid);
      for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
    }
    if (t.needs_grad(bid)) {
      Tensor& gb = t.grad(bid);
      for (std::size_t i = 0; i < nb; ++i) gb[i] += g[na + i];
    }
  });
}

Var slice_rows(Var a, std::size_t r0, std::size_t r1) {
  const Tensor& av = a.value();
  if (av.rank() == 0 || r0 >= r1 || r1 > av.dim(0)) {
    throw std::invalid_argument("slice_rows: bad range");
  }
  std::vector<std::size_t> shape(av.shape());
  shape[0] = r1 - r0;
  const std::size_t stride = av.size() / av.dim(0);
  Tensor out(shape);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[r0 * stride + i];
  const int aid = a.id;
  return a.tape->record(std::move(out), {aid}, [aid, r0, stride](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(aid);
    for (std::size_t i = 0; i < g.size(); ++i) ga[r0 * stride + i] += g[i];
  });
}

Var reshape(Var a, std::vector<std::size_t> shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  const int aid = a.id;
  return a.tape->record(std::move(out), {aid}, [aid](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(aid);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var conv1d_same(Var x, Var w, Var b) {
  require_same_tape(x, w, "conv1d");
  require_same_tape(x, b, "conv1d");
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  if (xv.rank() != 2 || wv.rank() != 3 || bv.rank() != 1 || wv.dim(1) != xv.dim(1) ||
      wv.dim(2) != bv.dim(0) || wv.dim(0) % 2 == 0) {
    throw std::invalid_argument("conv1d: shape mismatch x=" + shape_to_string(xv.shape()) +
                                " w=" + shape_to_string(wv.shape()) +
                                " b=" + shape_to_string(bv.shape()));
  }
  const std::size_t tn = xv.dim(0), cin = xv.dim(1), kw = wv.dim(0), cout = wv.dim(2);
  const std::size_t pad = kw / 2;
  const auto tap = [tn, pad](std::size_t t0, std::size_t dk) {
    const std::ptrdiff_t ts = static_cast<std::ptrdiff_t>(t0 + dk) - static_cast<std::ptrdiff_t>(pad);
    if (ts < 0) return std::size_t{0};
    if (ts >= static_cast<std::ptrdiff_t>(tn)) return tn - 1;
    return static_cast<std::size_t>(ts);
  };
  Tensor out({tn, cout});
  for (std::size_t t0 = 0; t0 < tn; ++t0) {
    double* orow = out.data() + t0 * cout;
    for (std::size_t c = 0; c < cout; ++c) orow[c] = bv[c];
    for (std::size_t dk = 0; dk < kw; ++dk) {
      const double* xrow = xv.data() + tap(t0, dk) * cin;
      const double* wslab = wv.data() + dk * cin * cout;
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const double xval = xrow[ci];
        if (xval == 0.0) continue;
        const double* wrow = wslab + ci * cout;
        for (std::size_t c = 0; c < cout; ++c) orow[c] += xval * wrow[c];
      }
    }
  }
  out.check_finite("conv1d");
  const int xid = x.id, wid = w.id, bid = b.id;
  return x.tape->record(
      std::move(out), {xid, wid, bid}, [xid, wid, bid, tn, cin, kw, cout, tap](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        const Tensor& xv = t.value(xid);
        const Tensor& wv = t.value(wid);
        if (t.needs_grad(bid)) {
          Tensor& gb = t.grad(bid);
          for (std::size_t t0 = 0; t0 < tn; ++t0) {
            const double* grow = g.data() + t0 * cout;
            for (std::size_t c = 0; c < cout; ++c) gb[c] += grow[c];
          }
        }
        const bool need_x = t.needs_grad(xid);
        const bool need_w = t.needs_grad(wid);
        if (!need_x && !need_w) return;
        Tensor* gx = need_x ? &t.grad(xid) : nullptr;
        Tensor* gw = need_w ? &t.grad(wid) : nullptr;
        for (std::size_t t0 = 0; t0 < tn; ++t0) {
          const double* grow = g.data() + t0 * cout;
          for (std::size_t dk = 0; dk < kw; ++dk) {
            const std::size_t tsu = tap(t0, dk);
            for (std::size_t ci = 0; ci < cin; ++ci) {
              const double* wrow = wv.data() + (dk * cin + ci) * cout;
              if (need_x) {
                double acc = 0.0;
                for (std::size_t c = 0; c < cout; ++c) acc += grow[c] * wrow[c];
                (*gx)[tsu * cin + ci] += acc;
              }
              if (need_w) {
                const double xval = xv[tsu * cin + ci];
                if (xval != 0.0) {
                  double* gwrow = gw->data() + (dk * cin + ci) * cout;
                  for (std::size_t c = 0; c < cout; ++c) gwrow[c] += xval * grow[c];
                }
              }
            }
          }
        }
      });
}

Var time_resample(Var x, std::size_t t_out) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || xv.dim(0) == 0 || t_out == 0) {
    throw std::invalid_argument("time_resample: need nonempty (T x F) input and t_out >= 1");
  }
  const std::size_t tin = xv.dim(0), f = xv.dim(1);
  struct Mix {
    std::size_t lo, hi;
    double w_hi;
  };
  std::vector<Mix> plan(t_out);
  for (std::size_t r = 0; r < t_out; ++r) {
    double src = 0.0;
    if (t_out > 1 && tin > 1) {
      src = static_cast<double>(r) * static_cast<double>(tin - 1) / static_cast<double>(t_out - 1);
    }
    std::size_t lo = static_cast<std::size_t>(src);
    if (lo >= tin - 1) lo = tin - 1;
    const std::size_t hi = lo + 1 < tin ? lo + 1 : lo;
    plan[r] = {lo, hi, src - static_cast<double>(lo)};
  }
  Tensor out({t_out, f});
  for (std::size_t r = 0; r < t_out; ++r) {
    const double* a = xv.data() + plan[r].lo * f;
    const double* b = xv.data() + plan[r].hi * f;
    double* o = out.data() + r * f;
    const double wh = plan[r].w_hi;
    for (std::size_t c = 0; c < f; ++c) o[c] = (1.0 - wh) * a[c] + wh * b[c];
  }
  const int xid = x.id;
  return x.tape->record(std::move(out), {xid}, [xid, plan, f](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(xid);
    for (std::size_t r = 0; r < plan.size(); ++r) {
      const double* grow = g.data() + r * f;
      double* lo = gx.data() + plan[r].lo * f;
      double* hi = gx.data() + plan[r].hi * f;
      const double wh = plan[r].w_hi;
      for (std::size_t c = 0; c < f; ++c) {
        lo[c] += (1.0 - wh) * grow[c];
        hi[c] += wh * grow[c];
      }
    }
  });
}

Var rows_norm_sum(Var x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2) throw std::invalid_argument("rows_norm_sum: rank-2 required");
  const std::size_t rows = xv.dim(0), cols = xv.dim(1);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * cols;
    double sq = 0.0;
    for (std::size_t c = 0; c < cols; ++c) sq += row[c] * row[c];
    total += std::sqrt(sq);
  }
  Tensor out = Tensor::scalar(total);
  out.check_finite("rows_norm_sum");
  const int xid = x.id;
  return x.tape->record(std::move(out), {xid}, [xid, rows, cols](Tape& t, int self) {
    const double g = t.grad(self)[0];
    const Tensor& xv = t.value(xid);
    Tensor& gx = t.grad(xid);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* row = xv.data() + r * cols;
      double sq = 0.0;
      for (std::size_t c = 0; c < cols; ++c) sq += row[c] * row[c];
      const double norm = std::sqrt(sq);
      if (norm > 0.0) {
        double* grow = gx.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) grow[c] += g * row[c] / norm;
      }
    }
  });
}

double finite_diff_check(const std::function<double(const Tensor&)>& f, const Tensor& x,
                         const Tensor& analytic_grad, double eps) {
  if (eps <= 0.0) throw std::invalid_argument("finite_diff_check: eps must be > 0");
  if (!x.same_shape(analytic_grad)) {
    throw std::invalid_argument("finite_diff_check: gradient shape mismatch");
  }
  Tensor probe = x;
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double fp = f(probe);
    probe[i] = orig - eps;
    const double fm = f(probe);
    probe[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw std::runtime_error("finite_diff_check: non-finite evaluation");
    }
    const double numeric = (fp - fm) / (2.0 * eps);
    const double denom = std::max(1.0, std::fabs(analytic_grad[i]));
    worst = std::max(worst, std::fabs(analytic_grad[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace otanim
