#include "wsdec/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <type_traits>
#include <string>

namespace wsdec {

const Matrix& Var::value() const { return tape_->value(*this); }
bool Var::requires_grad() const { return tape_->requires_grad(*this); }

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false, nullptr});
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::variable(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, grad_enabled_, nullptr});
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::param(Parameter& p) {
  nodes_.push_back(Node{p.value, {}, {}, grad_enabled_, grad_enabled_ ? &p : nullptr});
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::record(Matrix value, std::span<const Var> inputs, Backward backward) {
  bool needs = false;
  if (grad_enabled_) {
    for (const Var& in : inputs) {
      if (in.tape() != this) throw std::logic_error("autodiff: input from a different tape");
      needs = needs || nodes_[in.id()].requires_grad;
    }
  }
  Node node{std::move(value), {}, {}, needs, nullptr};
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Matrix& Tape::grad(Var v) {
  Node& n = nodes_[v.id()];
  if (n.grad.empty() && !n.value.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var root, double seed) {
  if (root.tape() != this) throw std::logic_error("autodiff: root from a different tape");
  if (value(root).size() != 1) throw std::invalid_argument("autodiff: backward needs a 1x1 root");
  if (!requires_grad(root)) return;
  grad(root)[0] += seed;
  for (int i = root.id(); i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, n.value, n.grad);
  }
  for (Node& n : nodes_) {
    if (n.param != nullptr && !n.grad.empty()) {
      auto dst = n.param->grad.values();
      auto src = n.grad.values();
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
  }
}

namespace ad {

namespace {

Tape& tape_of(Var a) { return *a.tape(); }

// `what` is a message or a callable producing one, evaluated only on failure.
template <class Msg>
void require(bool ok, Msg&& what) {
  if (ok) return;
  if constexpr (std::is_invocable_v<Msg>) {
    throw std::invalid_argument("autodiff: " + std::string(what()));
  } else {
    throw std::invalid_argument("autodiff: " + std::string(what));
  }
}

void add_into(Matrix& dst, const Matrix& src) {
  auto d = dst.values();
  auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

template <class F>
Matrix map(const Matrix& a, F f) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

double sig(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var matmul(Var a, Var b) {
  const Var in[] = {a, b};
  return tape_of(a).record(wsdec::matmul(a.value(), b.value()), in,
                           [a, b](Tape& t, const Matrix&, const Matrix& g) {
                             if (a.requires_grad()) gemm_nt_acc(g, b.value(), t.grad(a));
                             if (b.requires_grad()) gemm_tn_acc(a.value(), g, t.grad(b));
                           });
}

Var matmul_nt(Var a, Var b) {
  Matrix out(a.rows(), b.rows());
  gemm_nt_acc(a.value(), b.value(), out);
  const Var in[] = {a, b};
  return tape_of(a).record(std::move(out), in, [a, b](Tape& t, const Matrix&, const Matrix& g) {
    if (a.requires_grad()) gemm_acc(g, b.value(), t.grad(a));
    if (b.requires_grad()) gemm_tn_acc(g, a.value(), t.grad(b));
  });
}

Var add(Var a, Var b) {
  require(a.value().same_shape(b.value()), [&] {
    return "add shape mismatch " + a.value().shape_string() + " vs " + b.value().shape_string();
  });
  Matrix out = a.value();
  add_into(out, b.value());
  const Var in[] = {a, b};
  return tape_of(a).record(std::move(out), in, [a, b](Tape& t, const Matrix&, const Matrix& g) {
    if (a.requires_grad()) add_into(t.grad(a), g);
    if (b.requires_grad()) add_into(t.grad(b), g);
  });
}

Var sub(Var a, Var b) {
  require(a.value().same_shape(b.value()), "sub shape mismatch");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  const Var in[] = {a, b};
  return tape_of(a).record(std::move(out), in, [a, b](Tape& t, const Matrix&, const Matrix& g) {
    if (a.requires_grad()) add_into(t.grad(a), g);
    if (b.requires_grad()) {
      Matrix& gb = t.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require(a.value().same_shape(b.value()), "mul shape mismatch");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const Var in[] = {a, b};
  return tape_of(a).record(std::move(out), in, [a, b](Tape& t, const Matrix&, const Matrix& g) {
    if (a.requires_grad()) {
      Matrix& ga = t.grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b.value()[i];
    }
    if (b.requires_grad()) {
      Matrix& gb = t.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a.value()[i];
    }
  });
}

Var scale(Var a, double s) {
  const Var in[] = {a};
  return tape_of(a).record(map(a.value(), [s](double x) { return x * s; }), in,
                           [a, s](Tape& t, const Matrix&, const Matrix& g) {
                             Matrix& ga = t.grad(a);
                             for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
                           });
}

Var add_scalar(Var a, double s) {
  const Var in[] = {a};
  return tape_of(a).record(map(a.value(), [s](double x) { return x + s; }), in,
                           [a](Tape& t, const Matrix&, const Matrix& g) {
                             add_into(t.grad(a), g);
                           });
}

Var add_row(Var a, Var row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row shape mismatch");
  Matrix out = a.value();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto dst = out.row(r);
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += row.value()[c];
  }
  const Var in[] = {a, row};
  return tape_of(a).record(std::move(out), in,
                           [a, row](Tape& t, const Matrix&, const Matrix& g) {
                             if (a.requires_grad()) add_into(t.grad(a), g);
                             if (row.requires_grad()) {
                               Matrix& gr = t.grad(row);
                               for (std::size_t r = 0; r < g.rows(); ++r) {
                                 auto src = g.row(r);
                                 for (std::size_t c = 0; c < src.size(); ++c) gr[c] += src[c];
                               }
                             }
                           });
}

Var sigmoid(Var a) {
  const Var in[] = {a};
  return tape_of(a).record(map(a.value(), sig), in,
                           [a](Tape& t, const Matrix& y, const Matrix& g) {
                             Matrix& ga = t.grad(a);
                             for (std::size_t i = 0; i < g.size(); ++i)
                               ga[i] += g[i] * y[i] * (1.0 - y[i]);
                           });
}

Var tanh(Var a) {
  const Var in[] = {a};
  return tape_of(a).record(map(a.value(), [](double x) { return std::tanh(x); }), in,
                           [a](Tape& t, const Matrix& y, const Matrix& g) {
                             Matrix& ga = t.grad(a);
                             for (std::size_t i = 0; i < g.size(); ++i)
                               ga[i] += g[i] * (1.0 - y[i] * y[i]);
                           });
}

Var square(Var a) {
  const Var in[] = {a};
  return tape_of(a).record(map(a.value(), [](double x) { return x * x; }), in,
                           [a](Tape& t, const Matrix&, const Matrix& g) {
                             Matrix& ga = t.grad(a);
                             for (std::size_t i = 0; i < g.size(); ++i)
                               ga[i] += 2.0 * a.value()[i] * g[i];
                           });
}

Var clamp(Var a, double lo, double hi) {
  const Var in[] = {a};
  return tape_of(a).record(map(a.value(), [lo, hi](double x) { return std::clamp(x, lo, hi); }),
                           in, [a, lo, hi](Tape& t, const Matrix&, const Matrix& g) {
                             Matrix& ga = t.grad(a);
                             for (std::size_t i = 0; i < g.size(); ++i) {
                               const double x = a.value()[i];
                               if (x >= lo && x <= hi) ga[i] += g[i];
                             }
                           });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols of nothing");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    require(p.rows() == rows, "concat_cols row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    for (std::size_t r = 0; r < rows; ++r) {
      auto src = p.value().row(r);
      std::copy(src.begin(), src.end(), out.row(r).begin() + static_cast<long>(offset));
    }
    offset += p.cols();
  }
  std::vector<Var> captured(parts.begin(), parts.end());
  return tape_of(parts[0]).record(
      std::move(out), parts, [captured](Tape& t, const Matrix&, const Matrix& g) {
        std::size_t off = 0;
        for (const Var& p : captured) {
          if (p.requires_grad()) {
            Matrix& gp = t.grad(p);
            for (std::size_t r = 0; r < g.rows(); ++r) {
              auto src = g.row(r);
              auto dst = gp.row(r);
              for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[off + c];
            }
          }
          off += p.cols();
        }
      });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  require(begin <= end && end <= a.cols(), "slice_cols out of range");
  Matrix out(a.rows(), end - begin);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto src = a.value().row(r);
    std::copy(src.begin() + static_cast<long>(begin), src.begin() + static_cast<long>(end),
              out.row(r).begin());
  }
  const Var in[] = {a};
  return tape_of(a).record(std::move(out), in,
                           [a, begin](Tape& t, const Matrix&, const Matrix& g) {
                             Matrix& ga = t.grad(a);
                             for (std::size_t r = 0; r < g.rows(); ++r) {
                               auto src = g.row(r);
                               auto dst = ga.row(r);
                               for (std::size_t c = 0; c < src.size(); ++c)
                                 dst[begin + c] += src[c];
                             }
                           });
}

Var row(Var a, std::size_t r) {
  require(r < a.rows(), "row index out of range");
  const Var in[] = {a};
  return tape_of(a).record(Matrix::row_vector(a.value().row(r)), in,
                           [a, r](Tape& t, const Matrix&, const Matrix& g) {
                             auto dst = t.grad(a).row(r);
                             for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += g[c];
                           });
}

Var stack_rows(std::span<const Var> rows) {
  require(!rows.empty(), "stack_rows of nothing");
  const std::size_t cols = rows[0].cols();
  Matrix out(rows.size(), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    require(rows[r].rows() == 1 && rows[r].cols() == cols, "stack_rows shape mismatch");
    std::copy(rows[r].value().values().begin(), rows[r].value().values().end(),
              out.row(r).begin());
  }
  std::vector<Var> captured(rows.begin(), rows.end());
  return tape_of(rows[0]).record(std::move(out), rows,
                                 [captured](Tape& t, const Matrix&, const Matrix& g) {
                                   for (std::size_t r = 0; r < captured.size(); ++r) {
                                     if (!captured[r].requires_grad()) continue;
                                     Matrix& gr = t.grad(captured[r]);
                                     auto src = g.row(r);
                                     for (std::size_t c = 0; c < src.size(); ++c) gr[c] += src[c];
                                   }
                                 });
}

Var repeat_rows(Var row, std::size_t n) {
  require(row.rows() == 1, "repeat_rows needs a row vector");
  Matrix out(n, row.cols());
  for (std::size_t r = 0; r < n; ++r)
    std::copy(row.value().values().begin(), row.value().values().end(), out.row(r).begin());
  const Var in[] = {row};
  return tape_of(row).record(std::move(out), in, [row](Tape& t, const Matrix&, const Matrix& g) {
    Matrix& gr = t.grad(row);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      auto src = g.row(r);
      for (std::size_t c = 0; c < src.size(); ++c) gr[c] += src[c];
    }
  });
}

Var gather_rows(Var table, std::span<const int> ids) {
  Matrix out(ids.size(), table.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    require(ids[r] >= 0 && static_cast<std::size_t>(ids[r]) < table.rows(),
            "gather_rows id out of range");
    auto src = table.value().row(static_cast<std::size_t>(ids[r]));
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  std::vector<int> captured(ids.begin(), ids.end());
  const Var in[] = {table};
  return tape_of(table).record(std::move(out), in,
                               [table, captured](Tape& t, const Matrix&, const Matrix& g) {
                                 Matrix& gt = t.grad(table);
                                 for (std::size_t r = 0; r < captured.size(); ++r) {
                                   auto dst = gt.row(static_cast<std::size_t>(captured[r]));
                                   auto src = g.row(r);
                                   for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
                                 }
                               });
}

Var softmax_rows(Var a) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto src = a.value().row(r);
    auto dst = out.row(r);
    const double mx = *std::max_element(src.begin(), src.end());
    double z = 0.0;
    for (std::size_t c = 0; c < src.size(); ++c) z += (dst[c] = std::exp(src[c] - mx));
    for (double& v : dst) v /= z;
  }
  const Var in[] = {a};
  return tape_of(a).record(std::move(out), in, [a](Tape& t, const Matrix& y, const Matrix& g) {
    Matrix& ga = t.grad(a);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      auto yr = y.row(r);
      auto gr = g.row(r);
      double dot = 0.0;
      for (std::size_t c = 0; c < yr.size(); ++c) dot += yr[c] * gr[c];
      auto dst = ga.row(r);
      for (std::size_t c = 0; c < yr.size(); ++c) dst[c] += yr[c] * (gr[c] - dot);
    }
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const Var in[] = {a};
  return tape_of(a).record(Matrix(1, 1, s), in, [a](Tape& t, const Matrix&, const Matrix& g) {
    Matrix& ga = t.grad(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var gru_step(Var gates_x, Var h, Var u_zr, Var u_n) {
  const std::size_t d = h.cols();
  require(h.rows() == 1 && gates_x.rows() == 1 && gates_x.cols() == 3 * d,
          [&] {
            return "gru_step gate shape " + gates_x.value().shape_string() + " for hidden " +
                   h.value().shape_string();
          });
  require(u_zr.rows() == d && u_zr.cols() == 2 * d && u_n.rows() == d && u_n.cols() == d,
          "gru_step recurrent weight shape");
  const Matrix& hv = h.value();
  const Matrix& xv = gates_x.value();

  Matrix hzr(1, 2 * d);
  gemm_acc(hv, u_zr.value(), hzr);
  // cache: z | r | n | q (= r*h)
  Matrix cache(1, 4 * d);
  Matrix q(1, d);
  for (std::size_t i = 0; i < d; ++i) {
    const double z = sig(xv[i] + hzr[i]);
    const double r = sig(xv[d + i] + hzr[d + i]);
    cache[i] = z;
    cache[d + i] = r;
    q[i] = r * hv[i];
    cache[3 * d + i] = q[i];
  }
  Matrix qn(1, d);
  gemm_acc(q, u_n.value(), qn);
  Matrix out(1, d);
  for (std::size_t i = 0; i < d; ++i) {
    const double n = std::tanh(xv[2 * d + i] + qn[i]);
    cache[2 * d + i] = n;
    const double z = cache[i];
    out[i] = (1.0 - z) * hv[i] + z * n;
  }
  const Var in[] = {gates_x, h, u_zr, u_n};
  return tape_of(h).record(
      std::move(out), in,
      [gates_x, h, u_zr, u_n, cache = std::move(cache), d](Tape& t, const Matrix&,
                                                           const Matrix& g) {
        const Matrix& hv = h.value();
        Matrix da_zr(1, 2 * d);
        Matrix da_n(1, d);
        Matrix dh(1, d);
        for (std::size_t i = 0; i < d; ++i) {
          const double z = cache[i];
          const double n = cache[2 * d + i];
          const double dz = g[i] * (n - hv[i]);
          const double dn = g[i] * z;
          dh[i] = g[i] * (1.0 - z);
          da_n[i] = dn * (1.0 - n * n);
          da_zr[i] = dz * z * (1.0 - z);
        }
        // dq = da_n Un^T
        Matrix dq(1, d);
        gemm_nt_acc(da_n, u_n.value(), dq);
        for (std::size_t i = 0; i < d; ++i) {
          const double r = cache[d + i];
          const double dr = dq[i] * hv[i];
          dh[i] += dq[i] * r;
          da_zr[d + i] = dr * r * (1.0 - r);
        }
        gemm_nt_acc(da_zr, u_zr.value(), dh);
        if (gates_x.requires_grad()) {
          Matrix& gx = t.grad(gates_x);
          for (std::size_t i = 0; i < 2 * d; ++i) gx[i] += da_zr[i];
          for (std::size_t i = 0; i < d; ++i) gx[2 * d + i] += da_n[i];
        }
        if (h.requires_grad()) add_into(t.grad(h), dh);
        if (u_zr.requires_grad()) gemm_tn_acc(hv, da_zr, t.grad(u_zr));
        if (u_n.requires_grad()) {
          Matrix q(1, d);
          for (std::size_t i = 0; i < d; ++i) q[i] = cache[3 * d + i];
          gemm_tn_acc(q, da_n, t.grad(u_n));
        }
      });
}

Var softmax_cross_entropy(Var logits, std::span<const int> targets, int ignore) {
  const Matrix& x = logits.value();
  require(targets.size() == x.rows(), [&] {
    return "cross entropy: " + std::to_string(targets.size()) + " targets for " +
           x.shape_string() + " logits";
  });
  Matrix probs(x.rows(), x.cols());
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    if (targets[r] == ignore) continue;
    require(targets[r] >= 0 && static_cast<std::size_t>(targets[r]) < x.cols(),
            "cross entropy target out of range");
    auto src = x.row(r);
    auto p = probs.row(r);
    const double mx = *std::max_element(src.begin(), src.end());
    double z = 0.0;
    for (std::size_t c = 0; c < src.size(); ++c) z += (p[c] = std::exp(src[c] - mx));
    for (double& v : p) v /= z;
    total += -(src[static_cast<std::size_t>(targets[r])] - mx - std::log(z));
    ++counted;
  }
  if (counted == 0) throw std::invalid_argument("cross entropy: every target position is padding");
  const double inv = 1.0 / static_cast<double>(counted);
  std::vector<int> tg(targets.begin(), targets.end());
  const Var in[] = {logits};
  return tape_of(logits).record(
      Matrix(1, 1, total * inv), in,
      [logits, tg = std::move(tg), probs = std::move(probs), inv, ignore](
          Tape& t, const Matrix&, const Matrix& g) {
        Matrix& gl = t.grad(logits);
        for (std::size_t r = 0; r < tg.size(); ++r) {
          if (tg[r] == ignore) continue;
          auto p = probs.row(r);
          auto dst = gl.row(r);
          for (std::size_t c = 0; c < p.size(); ++c) dst[c] += g[0] * inv * p[c];
          dst[static_cast<std::size_t>(tg[r])] -= g[0] * inv;
        }
      });
}

}  // namespace ad

}  // namespace wsdec
