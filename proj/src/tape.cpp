#include "stmg/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "stmg/error.hpp"

namespace stmg {

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, true, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Adjoint adjoint) {
  return record(std::move(value), std::vector<Var>(inputs), std::move(adjoint));
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, Adjoint adjoint) {
  bool needs = false;
  for (const Var& v : inputs) {
    if (v.tape() != this) throw ContractError("operands recorded on different tapes");
    needs = needs || nodes_[v.id()].needs_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(adjoint) : Adjoint{}});
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

void Tape::accumulate(std::size_t id, const Tensor& contribution) {
  if (!nodes_[id].needs_grad) return;
  Tensor& g = grad_buffer(id);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += contribution[i];
}

void Tape::backward(Var output) {
  if (output.tape() != this) throw ContractError("backward: output lives on another tape");
  if (nodes_[output.id()].value.size() != 1) {
    throw ContractError("backward requires a scalar output, got shape " +
                        shape_str(nodes_[output.id()].value.shape()));
  }
  for (Node& n : nodes_) n.grad = Tensor();
  grad_buffer(output.id())[0] = 1.0;
  for (std::size_t id = output.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.adjoint || n.grad.size() == 0) continue;
    n.adjoint(*this, id, n.grad);
  }
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.size() != n.value.size()) return Tensor(n.value.shape(), 0.0);
  return n.grad;
}

void Tape::mix_branch(std::uint64_t bits) {
  branch_signature_ ^= bits + 0x9e3779b97f4a7c15ULL + (branch_signature_ << 6) + (branch_signature_ >> 2);
}

namespace {

Tape& tape_of(Var a) {
  if (!a.valid()) throw ContractError("operation on an empty Var");
  return *a.tape();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void require_scalar(const Tensor& s, const char* op) {
  if (s.size() != 1) throw DimensionError(std::string(op) + ": expected a one-element operand");
}

// Hash of a sign pattern, folded into the tape's branch signature.
std::uint64_t pattern_hash(const std::vector<bool>& bits) {
  std::uint64_t h = 1469598103934665603ULL;
  for (bool b : bits) {
    h ^= b ? 0x9dULL : 0x3bULL;
    h *= 1099511628211ULL;
  }
  return h;
}

template <class F>
Var unary_elementwise(Var a, F f, Tape::Adjoint adjoint) {
  Tensor out = a.value();
  for (double& v : out.storage()) v = f(v);
  return tape_of(a).record(std::move(out), {a}, std::move(adjoint));
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(matmul(a.value(), b.value()), {a, b}, [ia, ib](Tape& tp, std::size_t, const Tensor& g) {
    const Tensor& av = tp.value(ia);
    const Tensor& bv = tp.value(ib);
    const std::size_t n = av.rows(), k = av.cols(), m = bv.cols();
    if (tp.needs_grad(ia)) {
      Tensor& ga = tp.grad_buffer(ia);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < m; ++j) acc += g[i * m + j] * bv[p * m + j];
          ga[i * k + p] += acc;
        }
    }
    if (tp.needs_grad(ib)) {
      Tensor& gb = tp.grad_buffer(ib);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aval = av[i * k + p];
          if (aval == 0.0) continue;
          for (std::size_t j = 0; j < m; ++j) gb[p * m + j] += aval * g[i * m + j];
        }
    }
  });
}

Var transpose(Var a) {
  const std::size_t ia = a.id();
  return tape_of(a).record(transpose(a.value()), {a}, [ia](Tape& tp, std::size_t, const Tensor& g) {
    const std::size_t n = tp.value(ia).rows(), m = tp.value(ia).cols();
    Tensor& ga = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) ga[i * m + j] += g[j * n + i];
  });
}

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return tape_of(a).record(std::move(out), {a, b}, [ia, ib](Tape& tp, std::size_t, const Tensor& g) {
    tp.accumulate(ia, g);
    tp.accumulate(ib, g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return tape_of(a).record(std::move(out), {a, b}, [ia, ib](Tape& tp, std::size_t, const Tensor& g) {
    tp.accumulate(ia, g);
    if (tp.needs_grad(ib)) {
      Tensor& gb = tp.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return tape_of(a).record(std::move(out), {a, b}, [ia, ib](Tape& tp, std::size_t, const Tensor& g) {
    if (tp.needs_grad(ia)) {
      Tensor& ga = tp.grad_buffer(ia);
      const Tensor& bv = tp.value(ib);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (tp.needs_grad(ib)) {
      Tensor& gb = tp.grad_buffer(ib);
      const Tensor& av = tp.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double c) {
  const std::size_t ia = a.id();
  return unary_elementwise(a, [c](double v) { return c * v; }, [ia, c](Tape& tp, std::size_t, const Tensor& g) {
    Tensor& ga = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
  });
}

Var add_scalar(Var a, double c) {
  const std::size_t ia = a.id();
  return unary_elementwise(a, [c](double v) { return v + c; },
                           [ia](Tape& tp, std::size_t, const Tensor& g) { tp.accumulate(ia, g); });
}

Var add_broadcast(Var a, Var s) {
  require_scalar(s.value(), "add_broadcast");
  const double sv = s.value()[0];
  Tensor out = a.value();
  for (double& v : out.storage()) v += sv;
  const std::size_t ia = a.id(), is = s.id();
  return tape_of(a).record(std::move(out), {a, s}, [ia, is](Tape& tp, std::size_t, const Tensor& g) {
    tp.accumulate(ia, g);
    if (tp.needs_grad(is)) tp.grad_buffer(is)[0] += g.sum();
  });
}

Var mul_broadcast(Var a, Var s) {
  require_scalar(s.value(), "mul_broadcast");
  const double sv = s.value()[0];
  Tensor out = a.value();
  for (double& v : out.storage()) v *= sv;
  const std::size_t ia = a.id(), is = s.id();
  return tape_of(a).record(std::move(out), {a, s}, [ia, is](Tape& tp, std::size_t, const Tensor& g) {
    const double s_val = tp.value(is)[0];
    const Tensor& av = tp.value(ia);
    if (tp.needs_grad(ia)) {
      Tensor& ga = tp.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s_val;
    }
    if (tp.needs_grad(is)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * av[i];
      tp.grad_buffer(is)[0] += acc;
    }
  });
}

Var div_broadcast(Var a, Var s) {
  require_scalar(s.value(), "div_broadcast");
  const double sv = s.value()[0];
  if (sv == 0.0) throw DegenerateError("div_broadcast: division by zero");
  Tensor out = a.value();
  for (double& v : out.storage()) v /= sv;
  const std::size_t ia = a.id(), is = s.id();
  return tape_of(a).record(std::move(out), {a, s}, [ia, is](Tape& tp, std::size_t self, const Tensor& g) {
    const double s_val = tp.value(is)[0];
    if (tp.needs_grad(ia)) {
      Tensor& ga = tp.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / s_val;
    }
    if (tp.needs_grad(is)) {
      const Tensor& out_v = tp.value(self);
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * out_v[i];
      tp.grad_buffer(is)[0] -= acc / s_val;
    }
  });
}

Var exp(Var a) {
  const std::size_t ia = a.id();
  return unary_elementwise(a, [](double v) { return std::exp(v); }, [ia](Tape& tp, std::size_t self, const Tensor& g) {
    Tensor& ga = tp.grad_buffer(ia);
    const Tensor& y = tp.value(self);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
  });
}

Var log(Var a) {
  for (double v : a.value().storage()) {
    if (!(v > 0.0)) throw DegenerateError("log of a non-positive value");
  }
  const std::size_t ia = a.id();
  return unary_elementwise(a, [](double v) { return std::log(v); }, [ia](Tape& tp, std::size_t, const Tensor& g) {
    Tensor& ga = tp.grad_buffer(ia);
    const Tensor& x = tp.value(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / x[i];
  });
}

Var sqrt(Var a) {
  for (double v : a.value().storage()) {
    if (!(v > 0.0)) throw DegenerateError("sqrt of a non-positive value");
  }
  const std::size_t ia = a.id();
  return unary_elementwise(a, [](double v) { return std::sqrt(v); }, [ia](Tape& tp, std::size_t self, const Tensor& g) {
    Tensor& ga = tp.grad_buffer(ia);
    const Tensor& y = tp.value(self);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * 0.5 / y[i];
  });
}

Var square(Var a) {
  const std::size_t ia = a.id();
  return unary_elementwise(a, [](double v) { return v * v; }, [ia](Tape& tp, std::size_t, const Tensor& g) {
    Tensor& ga = tp.grad_buffer(ia);
    const Tensor& x = tp.value(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * x[i] * g[i];
  });
}

Var leaky_relu(Var a, double slope) {
  std::vector<bool> pattern(a.value().size());
  for (std::size_t i = 0; i < pattern.size(); ++i) pattern[i] = a.value()[i] >= 0.0;
  tape_of(a).mix_branch(pattern_hash(pattern));
  const std::size_t ia = a.id();
  return tape_of(a).record(leaky_relu(a.value(), slope), {a}, [ia, slope](Tape& tp, std::size_t, const Tensor& g) {
    Tensor& ga = tp.grad_buffer(ia);
    const Tensor& x = tp.value(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += x[i] >= 0.0 ? g[i] : slope * g[i];
  });
}

Var relu(Var a) { return clamp(a, 0.0, std::numeric_limits<double>::infinity()); }

Var clamp(Var a, double lo, double hi) {
  std::vector<bool> pattern(2 * a.value().size());
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    pattern[2 * i] = out[i] < lo;
    pattern[2 * i + 1] = out[i] > hi;
    out[i] = std::clamp(out[i], lo, hi);
  }
  tape_of(a).mix_branch(pattern_hash(pattern));
  const std::size_t ia = a.id();
  return tape_of(a).record(std::move(out), {a}, [ia, lo, hi](Tape& tp, std::size_t, const Tensor& g) {
    Tensor& ga = tp.grad_buffer(ia);
    const Tensor& x = tp.value(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] >= lo && x[i] <= hi) ga[i] += g[i];
    }
  });
}

Var sum(Var a) {
  const std::size_t ia = a.id();
  return tape_of(a).record(Tensor::scalar(a.value().sum()), {a}, [ia](Tape& tp, std::size_t, const Tensor& g) {
    Tensor& ga = tp.grad_buffer(ia);
    for (double& v : ga.storage()) v += g[0];
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var dot(Var a, Var b) { return sum(mul(a, b)); }

Var outer_add(Var col, Var row) {
  const Tensor& cv = col.value();
  const Tensor& rv = row.value();
  const std::size_t n = cv.size(), m = rv.size();
  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out.at(i, j) = cv[i] + rv[j];
  const std::size_t ic = col.id(), ir = row.id();
  return tape_of(col).record(std::move(out), {col, row}, [ic, ir, n, m](Tape& tp, std::size_t, const Tensor& g) {
    if (tp.needs_grad(ic)) {
      Tensor& gc = tp.grad_buffer(ic);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) gc[i] += g[i * m + j];
    }
    if (tp.needs_grad(ir)) {
      Tensor& gr = tp.grad_buffer(ir);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) gr[j] += g[i * m + j];
    }
  });
}

Var masked_softmax(Var logits, const Mask& mask) {
  const std::size_t il = logits.id();
  return tape_of(logits).record(masked_softmax(logits.value(), mask), {logits},
                                [il](Tape& tp, std::size_t self, const Tensor& g) {
                                  const Tensor& y = tp.value(self);
                                  const std::size_t n = y.rows(), m = y.cols();
                                  Tensor& gl = tp.grad_buffer(il);
                                  for (std::size_t i = 0; i < n; ++i) {
                                    double s = 0.0;
                                    for (std::size_t j = 0; j < m; ++j) s += g[i * m + j] * y[i * m + j];
                                    for (std::size_t j = 0; j < m; ++j) gl[i * m + j] += y[i * m + j] * (g[i * m + j] - s);
                                  }
                                });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_cols of nothing");
  const std::size_t n = parts[0].value().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (p.value().rows() != n) throw DimensionError("concat_cols: row count mismatch");
    widths.push_back(p.value().cols());
    total += widths.back();
  }
  Tensor out({n, total});
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < widths[k]; ++j) out.at(i, off + j) = v.at(i, j);
    off += widths[k];
  }
  std::vector<std::size_t> ids;
  for (const Var& p : parts) ids.push_back(p.id());
  return tape_of(parts[0]).record(std::move(out), parts, [ids, widths, n, total](Tape& tp, std::size_t, const Tensor& g) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (tp.needs_grad(ids[k])) {
        Tensor& gk = tp.grad_buffer(ids[k]);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < widths[k]; ++j) gk[i * widths[k] + j] += g[i * total + off + j];
      }
      off += widths[k];
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_rows of nothing");
  const std::size_t m = parts[0].value().cols();
  std::size_t total = 0;
  std::vector<std::size_t> heights;
  for (const Var& p : parts) {
    if (p.value().cols() != m) throw DimensionError("concat_rows: column count mismatch");
    heights.push_back(p.value().rows());
    total += heights.back();
  }
  std::vector<double> data;
  data.reserve(total * m);
  for (const Var& p : parts) data.insert(data.end(), p.value().storage().begin(), p.value().storage().end());
  std::vector<std::size_t> ids;
  for (const Var& p : parts) ids.push_back(p.id());
  return tape_of(parts[0]).record(Tensor({total, m}, std::move(data)), parts,
                                  [ids, heights, m](Tape& tp, std::size_t, const Tensor& g) {
                                    std::size_t off = 0;
                                    for (std::size_t k = 0; k < ids.size(); ++k) {
                                      const std::size_t len = heights[k] * m;
                                      if (tp.needs_grad(ids[k])) {
                                        Tensor& gk = tp.grad_buffer(ids[k]);
                                        for (std::size_t i = 0; i < len; ++i) gk[i] += g[off + i];
                                      }
                                      off += len;
                                    }
                                  });
}

Var gather_rows(Var a, const std::vector<std::size_t>& rows) {
  const Tensor& av = a.value();
  const std::size_t n = av.rows(), m = av.cols();
  Tensor out({rows.size(), m});
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] >= n) throw RangeError("gather_rows: row index out of range");
    for (std::size_t j = 0; j < m; ++j) out.at(k, j) = av.at(rows[k], j);
  }
  const std::size_t ia = a.id();
  return tape_of(a).record(std::move(out), {a}, [ia, rows, m](Tape& tp, std::size_t, const Tensor& g) {
    Tensor& ga = tp.grad_buffer(ia);
    for (std::size_t k = 0; k < rows.size(); ++k)
      for (std::size_t j = 0; j < m; ++j) ga[rows[k] * m + j] += g[k * m + j];
  });
}

Var take(Var a, const std::vector<std::size_t>& flat_indices) {
  const Tensor& av = a.value();
  Tensor out({flat_indices.size()});
  for (std::size_t k = 0; k < flat_indices.size(); ++k) {
    if (flat_indices[k] >= av.size()) throw RangeError("take: index out of range");
    out[k] = av[flat_indices[k]];
  }
  const std::size_t ia = a.id();
  return tape_of(a).record(std::move(out), {a}, [ia, flat_indices](Tape& tp, std::size_t, const Tensor& g) {
    Tensor& ga = tp.grad_buffer(ia);
    for (std::size_t k = 0; k < flat_indices.size(); ++k) ga[flat_indices[k]] += g[k];
  });
}

Var reshape(Var a, Shape shape) {
  const std::size_t ia = a.id();
  return tape_of(a).record(a.value().reshaped(std::move(shape)), {a},
                           [ia](Tape& tp, std::size_t, const Tensor& g) {
                             Tensor& ga = tp.grad_buffer(ia);
                             for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                           });
}

Var add_row_bias(Var a, Var bias) {
  const std::size_t n = a.value().rows(), m = a.value().cols();
  if (bias.value().size() != m) throw DimensionError("add_row_bias: bias length mismatch");
  Tensor out({n, m}, a.value().storage());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out.at(i, j) += bias.value()[j];
  const std::size_t ia = a.id(), ib = bias.id();
  return tape_of(a).record(std::move(out), {a, bias}, [ia, ib, n, m](Tape& tp, std::size_t, const Tensor& g) {
    if (tp.needs_grad(ia)) {
      Tensor& ga = tp.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (tp.needs_grad(ib)) {
      Tensor& gb = tp.grad_buffer(ib);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) gb[j] += g[i * m + j];
    }
  });
}

namespace {

struct ConvDims {
  std::size_t cin, cout, h, w, k;
};

ConvDims conv_dims(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  if (x.rank() != 3 || kernel.rank() != 4) throw DimensionError("conv2d expects x {C,H,W} and kernel {Co,Ci,K,K}");
  ConvDims d{x.dim(0), kernel.dim(0), x.dim(1), x.dim(2), kernel.dim(2)};
  if (kernel.dim(1) != d.cin) throw DimensionError("conv2d: kernel input channels do not match x");
  if (kernel.dim(3) != d.k || d.k % 2 == 0) throw DimensionError("conv2d: kernel must be square with odd size");
  if (bias.size() != d.cout) throw DimensionError("conv2d: bias length mismatch");
  return d;
}

// Calls f(out_row, out_col, in_row, in_col) over every valid tap offset.
template <class F>
void for_each_tap(const ConvDims& d, std::size_t dy, std::size_t dx, F&& f) {
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(d.k / 2);
  const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(dy) - half;
  const std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(dx) - half;
  const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(d.h), w = static_cast<std::ptrdiff_t>(d.w);
  const std::ptrdiff_t r0 = std::max<std::ptrdiff_t>(0, -oy), r1 = std::min(h, h - oy);
  const std::ptrdiff_t c0 = std::max<std::ptrdiff_t>(0, -ox), c1 = std::min(w, w - ox);
  for (std::ptrdiff_t r = r0; r < r1; ++r) f(r, r + oy, c0, c1, ox);
}

}  // namespace

Var conv2d(Var x, Var kernel, Var bias) {
  const ConvDims d = conv_dims(x.value(), kernel.value(), bias.value());
  const Tensor& xv = x.value();
  const Tensor& kv = kernel.value();
  Tensor out({d.cout, d.h, d.w});
  const std::size_t plane = d.h * d.w;
  for (std::size_t o = 0; o < d.cout; ++o) {
    double* op = out.data().data() + o * plane;
    std::fill(op, op + plane, bias.value()[o]);
    for (std::size_t i = 0; i < d.cin; ++i) {
      const double* ip = xv.data().data() + i * plane;
      for (std::size_t dy = 0; dy < d.k; ++dy)
        for (std::size_t dx = 0; dx < d.k; ++dx) {
          const double kval = kv[((o * d.cin + i) * d.k + dy) * d.k + dx];
          if (kval == 0.0) continue;
          for_each_tap(d, dy, dx, [&](std::ptrdiff_t r, std::ptrdiff_t ir, std::ptrdiff_t c0, std::ptrdiff_t c1, std::ptrdiff_t ox) {
            double* orow = op + r * static_cast<std::ptrdiff_t>(d.w);
            const double* irow = ip + ir * static_cast<std::ptrdiff_t>(d.w) + ox;
            for (std::ptrdiff_t c = c0; c < c1; ++c) orow[c] += kval * irow[c];
          });
        }
    }
  }
  const std::size_t ix = x.id(), ik = kernel.id(), ib = bias.id();
  return tape_of(x).record(std::move(out), {x, kernel, bias}, [ix, ik, ib, d](Tape& tp, std::size_t, const Tensor& g) {
    const Tensor& xv = tp.value(ix);
    const Tensor& kv = tp.value(ik);
    const std::size_t plane = d.h * d.w;
    const bool gx_on = tp.needs_grad(ix), gk_on = tp.needs_grad(ik);
    Tensor* gx = gx_on ? &tp.grad_buffer(ix) : nullptr;
    Tensor* gk = gk_on ? &tp.grad_buffer(ik) : nullptr;
    if (tp.needs_grad(ib)) {
      Tensor& gb = tp.grad_buffer(ib);
      for (std::size_t o = 0; o < d.cout; ++o) {
        double acc = 0.0;
        for (std::size_t p = 0; p < plane; ++p) acc += g[o * plane + p];
        gb[o] += acc;
      }
    }
    for (std::size_t o = 0; o < d.cout; ++o) {
      const double* gp = g.data().data() + o * plane;
      for (std::size_t i = 0; i < d.cin; ++i) {
        const double* ip = xv.data().data() + i * plane;
        for (std::size_t dy = 0; dy < d.k; ++dy)
          for (std::size_t dx = 0; dx < d.k; ++dx) {
            const std::size_t kidx = ((o * d.cin + i) * d.k + dy) * d.k + dx;
            const double kval = kv[kidx];
            double kacc = 0.0;
            for_each_tap(d, dy, dx, [&](std::ptrdiff_t r, std::ptrdiff_t ir, std::ptrdiff_t c0, std::ptrdiff_t c1, std::ptrdiff_t ox) {
              const double* grow = gp + r * static_cast<std::ptrdiff_t>(d.w);
              const std::ptrdiff_t ioff = ir * static_cast<std::ptrdiff_t>(d.w) + ox;
              if (gk_on) {
                const double* irow = ip + ioff;
                for (std::ptrdiff_t c = c0; c < c1; ++c) kacc += grow[c] * irow[c];
              }
              if (gx_on && kval != 0.0) {
                double* gxrow = gx->data().data() + i * plane + ioff;
                for (std::ptrdiff_t c = c0; c < c1; ++c) gxrow[c] += kval * grow[c];
              }
            });
            if (gk_on) (*gk)[kidx] += kacc;
          }
      }
    }
  });
}

}  // namespace stmg
