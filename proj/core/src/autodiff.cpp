/* Copyright 2026 The segbert Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "segbert/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "kernels.hpp"
#include "segbert/error.hpp"
#include "segbert/random.hpp"

namespace segbert::nn {

Parameter::Parameter(std::string name_, Tensor value_)
    : name(std::move(name_)), value(std::move(value_)), grad(value.shape(), 0.0) {}

const Tensor& Var::value() const {
  require(tape_ != nullptr, Errc::state, "use of an unbound Var");
  return tape_->value(id_);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::param(Parameter& p) {
  if (auto it = bound_.find(&p); it != bound_.end()) return Var(this, it->second);
  nodes_.push_back(Node{p.value, {}, {}, &p, grad_enabled_});
  const auto id = static_cast<std::uint32_t>(nodes_.size() - 1);
  bound_.emplace(&p, id);
  return Var(this, id);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(fn));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn fn) {
  bool needs = false;
  if (grad_enabled_) {
    for (const Var& v : inputs) {
      require(&v.tape() == this, Errc::state, "Var recorded on a different tape");
      needs = needs || nodes_[v.id()].needs_grad;
    }
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(fn) : BackwardFn{},
                        nullptr, needs});
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Tensor& Tape::grad(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

void Tape::backward(Var loss) {
  require(loss.valid() && &loss.tape() == this && !nodes_.empty(), Errc::state,
          "backward requires a loss produced by a forward pass on this tape");
  require(grad_enabled_, Errc::state, "backward on an inference-only tape");
  require(!backward_done_, Errc::state, "backward already ran on this tape");
  require(value(loss).size() == 1, Errc::dimension,
          "backward requires a scalar loss, got " + value(loss).shape_string());
  backward_done_ = true;

  grad(loss.id())[0] = 1.0;
  for (std::int64_t id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty() || !n.backward) continue;
    n.backward(*this, static_cast<std::uint32_t>(id));
  }
  for (Node& n : nodes_) {
    if (n.param == nullptr || n.grad.empty()) continue;
    Tensor& g = n.param->grad;
    if (!g.same_shape(n.value)) g = Tensor(n.value.shape(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  }
}

Mask::Mask(std::size_t rows, std::size_t cols, bool fill)
    : rows_(rows), cols_(cols), bits_(rows * cols, fill ? 1 : 0) {}

Mask Mask::causal(std::size_t n) {
  Mask m(n, n, false);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c <= r; ++c) m.set(r, c, true);
  return m;
}

namespace {

void check_same_shape(Var a, Var b, const char* op) {
  require(a.value().same_shape(b.value()), Errc::dimension,
          std::string(op) + ": shape mismatch " + a.value().shape_string() + " vs " +
              b.value().shape_string());
}

void accumulate(Tensor& dst, const Tensor& src, double factor = 1.0) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * src[i];
}

template <typename Fwd, typename Deriv>
Var unary(Var a, Fwd fwd, Deriv deriv) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  const auto ai = a.id();
  return a.tape().record(std::move(y), {a}, [ai, deriv](Tape& t, std::uint32_t self) {
    if (!t.needs_grad(ai)) return;
    const Tensor& x = t.value(ai);
    const Tensor& y = t.value(self);
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * deriv(x[i], y[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require(x.cols() == y.rows(), Errc::dimension,
          "matmul: " + x.shape_string() + " * " + y.shape_string());
  const std::size_t n = x.rows(), k = x.cols(), m = y.cols();
  Tensor out(n, m);
  kernels::gemm_nn(x.values().data(), y.values().data(), out.values().data(), n, k, m);
  const auto ai = a.id(), bi = b.id();
  return a.tape().record(std::move(out), {a, b}, [ai, bi, n, k, m](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(ai))
      kernels::gemm_nt(g.values().data(), t.value(bi).values().data(),
                       t.grad(ai).values().data(), n, m, k);
    if (t.needs_grad(bi))
      kernels::gemm_tn(t.value(ai).values().data(), g.values().data(),
                       t.grad(bi).values().data(), k, n, m);
  });
}

Var matmul_nt(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require(x.cols() == y.cols(), Errc::dimension,
          "matmul_nt: " + x.shape_string() + " * " + y.shape_string() + "^T");
  const std::size_t n = x.rows(), k = x.cols(), m = y.rows();
  Tensor out(n, m);
  kernels::gemm_nt(x.values().data(), y.values().data(), out.values().data(), n, k, m);
  const auto ai = a.id(), bi = b.id();
  return a.tape().record(std::move(out), {a, b}, [ai, bi, n, k, m](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(ai))
      kernels::gemm_nn(g.values().data(), t.value(bi).values().data(),
                       t.grad(ai).values().data(), n, m, k);
    if (t.needs_grad(bi))
      kernels::gemm_tn(g.values().data(), t.value(ai).values().data(),
                       t.grad(bi).values().data(), m, n, k);
  });
}

Var add(Var a, Var b) {
  check_same_shape(a, b, "add");
  Tensor out = a.value();
  accumulate(out, b.value());
  const auto ai = a.id(), bi = b.id();
  return a.tape().record(std::move(out), {a, b}, [ai, bi](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(ai)) accumulate(t.grad(ai), g);
    if (t.needs_grad(bi)) accumulate(t.grad(bi), g);
  });
}

Var sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  Tensor out = a.value();
  accumulate(out, b.value(), -1.0);
  const auto ai = a.id(), bi = b.id();
  return a.tape().record(std::move(out), {a, b}, [ai, bi](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(ai)) accumulate(t.grad(ai), g);
    if (t.needs_grad(bi)) accumulate(t.grad(bi), g, -1.0);
  });
}

Var mul(Var a, Var b) {
  check_same_shape(a, b, "mul");
  Tensor out = a.value();
  const Tensor& y = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
  const auto ai = a.id(), bi = b.id();
  return a.tape().record(std::move(out), {a, b}, [ai, bi](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(ai)) {
      Tensor& ga = t.grad(ai);
      const Tensor& y = t.value(bi);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
    }
    if (t.needs_grad(bi)) {
      Tensor& gb = t.grad(bi);
      const Tensor& x = t.value(ai);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
    }
  });
}

Var add_row(Var a, Var row) {
  const Tensor& x = a.value();
  const Tensor& r = row.value();
  require(r.size() == x.cols(), Errc::dimension,
          "add_row: row " + r.shape_string() + " vs " + x.shape_string());
  Tensor out = x;
  const std::size_t n = x.rows(), m = x.cols();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out(i, j) += r[j];
  const auto ai = a.id(), ri = row.id();
  return a.tape().record(std::move(out), {a, row}, [ai, ri, n, m](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(ai)) accumulate(t.grad(ai), g);
    if (t.needs_grad(ri)) {
      Tensor& gr = t.grad(ri);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) gr[j] += g(i, j);
    }
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= factor;
  const auto ai = a.id();
  return a.tape().record(std::move(out), {a}, [ai, factor](Tape& t, std::uint32_t self) {
    if (t.needs_grad(ai)) accumulate(t.grad(ai), t.grad(self), factor);
  });
}

Var scale_by(Var a, Var factor) {
  require(factor.value().size() == 1, Errc::dimension, "scale_by: factor must be 1x1");
  const double s = factor.value()[0];
  Tensor out = a.value();
  for (double& v : out.values()) v *= s;
  const auto ai = a.id(), fi = factor.id();
  return a.tape().record(std::move(out), {a, factor}, [ai, fi](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(ai)) accumulate(t.grad(ai), g, t.value(fi)[0]);
    if (t.needs_grad(fi)) {
      const Tensor& x = t.value(ai);
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * x[i];
      t.grad(fi)[0] += acc;
    }
  });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
               [](double, double y) { return y * (1.0 - y); });
}

Var masked_softmax(Var scores, const Mask* mask) {
  const Tensor& s = scores.value();
  const std::size_t n = s.rows(), m = s.cols();
  if (mask != nullptr)
    require(mask->rows() == n && mask->cols() == m, Errc::dimension,
            "mask shape does not match scores " + s.shape_string());
  Tensor p(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    double hi = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < m; ++j) {
      if (mask != nullptr && !mask->allowed(i, j)) continue;
      hi = std::max(hi, s(i, j));
      any = true;
    }
    if (!any) fail_at(Errc::degenerate_mask, i, "attention row has no unmasked key");
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (mask != nullptr && !mask->allowed(i, j)) continue;
      p(i, j) = std::exp(s(i, j) - hi);
      total += p(i, j);
    }
    for (std::size_t j = 0; j < m; ++j) p(i, j) /= total;
  }
  const auto si = scores.id();
  return scores.tape().record(std::move(p), {scores}, [si, n, m](Tape& t, std::uint32_t self) {
    if (!t.needs_grad(si)) return;
    const Tensor& p = t.value(self);
    const Tensor& g = t.grad(self);
    Tensor& gs = t.grad(si);
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < m; ++j) dot += g(i, j) * p(i, j);
      for (std::size_t j = 0; j < m; ++j) gs(i, j) += p(i, j) * (g(i, j) - dot);
    }
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Tensor& in = x.value();
  const std::size_t n = in.rows(), d = in.cols();
  require(d >= 1, Errc::dimension, "layer_norm on zero-width rows");
  require(gamma.value().size() == d && beta.value().size() == d, Errc::dimension,
          "layer_norm: affine parameters do not match width " + std::to_string(d));
  auto xhat = std::make_shared<Tensor>(n, d);
  auto inv_std = std::make_shared<std::vector<double>>(n);
  Tensor out(n, d);
  const Tensor& ga = gamma.value();
  const Tensor& be = beta.value();
  for (std::size_t i = 0; i < n; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += in(i, j);
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (in(i, j) - mu) * (in(i, j) - mu);
    var /= static_cast<double>(d);
    // Zero variance with eps == 0 normalises to zeros.
    const double denom = var + eps;
    const double inv = denom > 0.0 ? 1.0 / std::sqrt(denom) : 0.0;
    (*inv_std)[i] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      (*xhat)(i, j) = (in(i, j) - mu) * inv;
      out(i, j) = ga[j] * (*xhat)(i, j) + be[j];
    }
  }
  const auto xi = x.id(), gi = gamma.id(), bi = beta.id();
  return x.tape().record(
      std::move(out), {x, gamma, beta},
      [xi, gi, bi, n, d, xhat, inv_std](Tape& t, std::uint32_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& ga = t.value(gi);
        if (t.needs_grad(gi)) {
          Tensor& gg = t.grad(gi);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) gg[j] += g(i, j) * (*xhat)(i, j);
        }
        if (t.needs_grad(bi)) {
          Tensor& gb = t.grad(bi);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) gb[j] += g(i, j);
        }
        if (!t.needs_grad(xi)) return;
        Tensor& gx = t.grad(xi);
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t i = 0; i < n; ++i) {
          double mean_dy = 0.0, mean_dy_xhat = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double dy = g(i, j) * ga[j];
            mean_dy += dy;
            mean_dy_xhat += dy * (*xhat)(i, j);
          }
          mean_dy *= inv_d;
          mean_dy_xhat *= inv_d;
          for (std::size_t j = 0; j < d; ++j) {
            const double dy = g(i, j) * ga[j];
            gx(i, j) += (*inv_std)[i] * (dy - mean_dy - (*xhat)(i, j) * mean_dy_xhat);
          }
        }
      });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), Errc::empty_input, "concat_cols of nothing");
  const std::size_t n = parts.front().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    require(p.rows() == n, Errc::dimension, "concat_cols: row count mismatch");
    widths.push_back(p.cols());
    total += p.cols();
  }
  Tensor out(n, total);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t i = 0; i < n; ++i)
      std::copy(v.row(i).begin(), v.row(i).end(), out.row(i).begin() + static_cast<std::ptrdiff_t>(offset));
    offset += v.cols();
  }
  std::vector<std::uint32_t> ids;
  for (const Var& p : parts) ids.push_back(p.id());
  return parts.front().tape().record(
      std::move(out), parts, [ids, widths, n](Tape& t, std::uint32_t self) {
        const Tensor& g = t.grad(self);
        std::size_t offset = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (t.needs_grad(ids[k])) {
            Tensor& gp = t.grad(ids[k]);
            for (std::size_t i = 0; i < n; ++i)
              for (std::size_t j = 0; j < widths[k]; ++j) gp(i, j) += g(i, offset + j);
          }
          offset += widths[k];
        }
      });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  const Tensor& x = a.value();
  require(begin + count <= x.cols(), Errc::bounds, "slice_cols outside " + x.shape_string());
  const std::size_t n = x.rows();
  Tensor out(n, count);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = x(i, begin + j);
  const auto ai = a.id();
  return a.tape().record(std::move(out), {a}, [ai, begin, count, n](Tape& t, std::uint32_t self) {
    if (!t.needs_grad(ai)) return;
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(ai);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < count; ++j) ga(i, begin + j) += g(i, j);
  });
}

Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), Errc::empty_input, "concat_rows of nothing");
  std::vector<Tensor> values;
  std::vector<std::uint32_t> ids;
  for (const Var& p : parts) {
    values.push_back(p.value());
    ids.push_back(p.id());
  }
  Tensor out = vstack(values);
  return parts.front().tape().record(std::move(out), parts, [ids](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    std::size_t offset = 0;
    for (auto id : ids) {
      const std::size_t len = t.value(id).size();
      if (t.needs_grad(id)) {
        Tensor& gp = t.grad(id);
        for (std::size_t i = 0; i < len; ++i) gp[i] += g[offset + i];
      }
      offset += len;
    }
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  Tensor out = a.value().slice_rows(begin, end);
  const std::size_t width = a.cols();
  const auto ai = a.id();
  return a.tape().record(std::move(out), {a}, [ai, begin, width](Tape& t, std::uint32_t self) {
    if (!t.needs_grad(ai)) return;
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(ai);
    const std::size_t offset = begin * width;
    for (std::size_t i = 0; i < g.size(); ++i) ga[offset + i] += g[i];
  });
}

Var gather_rows(Var table, std::span<const std::size_t> ids) {
  const Tensor& tab = table.value();
  const std::size_t d = tab.cols();
  Tensor out(ids.size(), d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= tab.rows())
      fail_at(Errc::bounds, i, "row id " + std::to_string(ids[i]) + " outside table of " +
                                   std::to_string(tab.rows()));
    std::copy(tab.row(ids[i]).begin(), tab.row(ids[i]).end(), out.row(i).begin());
  }
  const auto ti = table.id();
  std::vector<std::size_t> rows(ids.begin(), ids.end());
  return table.tape().record(std::move(out), {table}, [ti, rows, d](Tape& t, std::uint32_t self) {
    if (!t.needs_grad(ti)) return;
    const Tensor& g = t.grad(self);
    Tensor& gt = t.grad(ti);
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) gt(rows[i], j) += g(i, j);
  });
}

Var repeat_row(Var row, std::size_t n) {
  const Tensor& r = row.value();
  require(r.rows() == 1, Errc::dimension, "repeat_row expects a single row");
  const std::size_t d = r.cols();
  Tensor out(n, d);
  for (std::size_t i = 0; i < n; ++i) std::copy(r.values().begin(), r.values().end(), out.row(i).begin());
  const auto ri = row.id();
  return row.tape().record(std::move(out), {row}, [ri, n, d](Tape& t, std::uint32_t self) {
    if (!t.needs_grad(ri)) return;
    const Tensor& g = t.grad(self);
    Tensor& gr = t.grad(ri);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) gr[j] += g(i, j);
  });
}

Var unfold_rows(Var x, std::size_t kernel) {
  require(kernel >= 1, Errc::dimension, "unfold_rows: kernel must be >= 1");
  const Tensor& in = x.value();
  const std::size_t n = in.rows(), c = in.cols();
  const auto pad = static_cast<std::ptrdiff_t>((kernel - 1) / 2);
  Tensor out(n, kernel * c);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t k = 0; k < kernel; ++k) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + k) - pad;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(n)) continue;
      for (std::size_t j = 0; j < c; ++j) out(t, k * c + j) = in(static_cast<std::size_t>(src), j);
    }
  }
  const auto xi = x.id();
  return x.tape().record(std::move(out), {x}, [xi, n, c, kernel, pad](Tape& t, std::uint32_t self) {
    if (!t.needs_grad(xi)) return;
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(xi);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t k = 0; k < kernel; ++k) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(r + k) - pad;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(n)) continue;
        for (std::size_t j = 0; j < c; ++j) gx(static_cast<std::size_t>(src), j) += g(r, k * c + j);
      }
    }
  });
}

Var dropout(Var a, double rate, Rng& rng) {
  if (rate <= 0.0) return a;
  require(rate < 1.0, Errc::config, "dropout rate must be < 1");
  const Tensor& x = a.value();
  auto keep = std::make_shared<std::vector<double>>(x.size());
  const double scale_kept = 1.0 / (1.0 - rate);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    (*keep)[i] = rng.uniform() >= rate ? scale_kept : 0.0;
    out[i] = x[i] * (*keep)[i];
  }
  const auto ai = a.id();
  return a.tape().record(std::move(out), {a}, [ai, keep](Tape& t, std::uint32_t self) {
    if (!t.needs_grad(ai)) return;
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (*keep)[i];
  });
}

Var sum(Var a) {
  double acc = 0.0;
  for (double v : a.value().values()) acc += v;
  const auto ai = a.id();
  return a.tape().record(Tensor::scalar(acc), {a}, [ai](Tape& t, std::uint32_t self) {
    if (!t.needs_grad(ai)) return;
    const double g = t.grad(self)[0];
    for (double& v : t.grad(ai).values()) v += g;
  });
}

Var mean(Var a) {
  require(a.value().size() > 0, Errc::empty_input, "mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var mse(Var a, Var b) {
  check_same_shape(a, b, "mse");
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require(x.size() > 0, Errc::empty_input, "mse of empty tensors");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += (x[i] - y[i]) * (x[i] - y[i]);
  const double inv_n = 1.0 / static_cast<double>(x.size());
  const auto ai = a.id(), bi = b.id();
  return a.tape().record(Tensor::scalar(acc * inv_n), {a, b},
                         [ai, bi, inv_n](Tape& t, std::uint32_t self) {
                           const double g = t.grad(self)[0];
                           const Tensor& x = t.value(ai);
                           const Tensor& y = t.value(bi);
                           const bool da = t.needs_grad(ai), db = t.needs_grad(bi);
                           for (std::size_t i = 0; i < x.size(); ++i) {
                             const double d = 2.0 * g * inv_n * (x[i] - y[i]);
                             if (da) t.grad(ai)[i] += d;
                             if (db) t.grad(bi)[i] -= d;
                           }
                         });
}

Var weighted_mse(Var a, Var b, std::span<const double> row_weights) {
  check_same_shape(a, b, "weighted_mse");
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  const std::size_t n = x.rows(), m = x.cols();
  require(row_weights.size() == n, Errc::dimension, "weighted_mse: one weight per row");
  double wsum = 0.0;
  for (double w : row_weights) wsum += w;
  const double norm = wsum > 0.0 ? 1.0 / (wsum * static_cast<double>(m)) : 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      acc += row_weights[i] * (x(i, j) - y(i, j)) * (x(i, j) - y(i, j));
  std::vector<double> w(row_weights.begin(), row_weights.end());
  const auto ai = a.id(), bi = b.id();
  return a.tape().record(Tensor::scalar(acc * norm), {a, b},
                         [ai, bi, w, norm, n, m](Tape& t, std::uint32_t self) {
                           const double g = t.grad(self)[0];
                           const Tensor& x = t.value(ai);
                           const Tensor& y = t.value(bi);
                           const bool da = t.needs_grad(ai), db = t.needs_grad(bi);
                           for (std::size_t i = 0; i < n; ++i)
                             for (std::size_t j = 0; j < m; ++j) {
                               const double d = 2.0 * g * norm * w[i] * (x(i, j) - y(i, j));
                               if (da) t.grad(ai)(i, j) += d;
                               if (db) t.grad(bi)(i, j) -= d;
                             }
                         });
}

Var bce_with_logits(Var logits, std::span<const double> targets) {
  const Tensor& z = logits.value();
  require(z.size() == targets.size(), Errc::dimension, "bce: one target per logit");
  require(z.size() > 0, Errc::empty_input, "bce of empty logits");
  double acc = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i)
    acc += std::max(z[i], 0.0) - z[i] * targets[i] + std::log1p(std::exp(-std::abs(z[i])));
  const double inv_n = 1.0 / static_cast<double>(z.size());
  std::vector<double> y(targets.begin(), targets.end());
  const auto li = logits.id();
  return logits.tape().record(Tensor::scalar(acc * inv_n), {logits},
                              [li, y, inv_n](Tape& t, std::uint32_t self) {
                                if (!t.needs_grad(li)) return;
                                const double g = t.grad(self)[0];
                                const Tensor& z = t.value(li);
                                Tensor& gz = t.grad(li);
                                for (std::size_t i = 0; i < z.size(); ++i) {
                                  const double s = 1.0 / (1.0 + std::exp(-z[i]));
                                  gz[i] += g * inv_n * (s - y[i]);
                                }
                              });
}

}  // namespace segbert::nn
