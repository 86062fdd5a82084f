// SPDX-License-Identifier: Apache-2.0
#include "hmnet/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "hmnet/errors.hpp"

namespace hmnet::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

ConstMatMap cmap(const Tensor& t, std::size_t rows, std::size_t cols) {
  return ConstMatMap(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
ConstMatMap cmap(std::span<const double> s, std::size_t rows, std::size_t cols) {
  return ConstMatMap(s.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
MatMap gmap(const Tensor& t, std::size_t rows, std::size_t cols) {
  return MatMap(t.mutable_grad().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
MatMap vmap(const Tensor& t, std::size_t rows, std::size_t cols) {
  return MatMap(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw DimensionError(std::string(op) + " expects a rank-2 tensor, got " + shape_str(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// Elementwise unary op with derivative expressed in terms of input and output.
template <typename F, typename D>
Tensor unary(Graph& g, const Tensor& x, F f, D dfdx) {
  Tensor out(x.shape());
  auto xs = x.data();
  auto os = out.data();
  for (std::size_t i = 0; i < xs.size(); ++i) os[i] = f(xs[i]);
  if (!g.needs_record({&x})) return out;
  return g.record(out, {x}, [x, out, dfdx](std::span<const double> go) mutable {
    if (!x.requires_grad()) return;
    auto gx = x.mutable_grad();
    auto xs = x.data();
    auto os = out.data();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] * dfdx(xs[i], os[i]);
  });
}

}  // namespace

Tensor matmul(Graph& g, const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Tensor out(Shape{m, n});
  vmap(out, m, n).noalias() = cmap(a, m, k) * cmap(b, k, n);
  if (!g.needs_record({&a, &b})) return out;
  return g.record(out, {a, b}, [a, b, m, k, n](std::span<const double> go) mutable {
    auto dout = cmap(go, m, n);
    if (a.requires_grad()) gmap(a, m, k).noalias() += dout * cmap(b, k, n).transpose();
    if (b.requires_grad()) gmap(b, k, n).noalias() += cmap(a, m, k).transpose() * dout;
  });
}

Tensor matmul_nt(Graph& g, const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_nt");
  require_rank2(b, "matmul_nt");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k)
    throw DimensionError("matmul_nt: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()) + "^T");
  Tensor out(Shape{m, n});
  vmap(out, m, n).noalias() = cmap(a, m, k) * cmap(b, n, k).transpose();
  if (!g.needs_record({&a, &b})) return out;
  return g.record(out, {a, b}, [a, b, m, k, n](std::span<const double> go) mutable {
    auto dout = cmap(go, m, n);
    if (a.requires_grad()) gmap(a, m, k).noalias() += dout * cmap(b, n, k);
    if (b.requires_grad()) gmap(b, n, k).noalias() += dout.transpose() * cmap(a, m, k);
  });
}

Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  auto as = a.data(), bs = b.data();
  auto os = out.data();
  for (std::size_t i = 0; i < os.size(); ++i) os[i] = as[i] + bs[i];
  if (!g.needs_record({&a, &b})) return out;
  return g.record(out, {a, b}, [a, b](std::span<const double> go) mutable {
    if (a.requires_grad()) {
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i];
    }
    if (b.requires_grad()) {
      auto gb = b.mutable_grad();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[i];
    }
  });
}

Tensor sub(Graph& g, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  auto as = a.data(), bs = b.data();
  auto os = out.data();
  for (std::size_t i = 0; i < os.size(); ++i) os[i] = as[i] - bs[i];
  if (!g.needs_record({&a, &b})) return out;
  return g.record(out, {a, b}, [a, b](std::span<const double> go) mutable {
    if (a.requires_grad()) {
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i];
    }
    if (b.requires_grad()) {
      auto gb = b.mutable_grad();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= go[i];
    }
  });
}

Tensor mul(Graph& g, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  auto as = a.data(), bs = b.data();
  auto os = out.data();
  for (std::size_t i = 0; i < os.size(); ++i) os[i] = as[i] * bs[i];
  if (!g.needs_record({&a, &b})) return out;
  return g.record(out, {a, b}, [a, b](std::span<const double> go) mutable {
    auto as = a.data(), bs = b.data();
    if (a.requires_grad()) {
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * bs[i];
    }
    if (b.requires_grad()) {
      auto gb = b.mutable_grad();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[i] * as[i];
    }
  });
}

Tensor scale(Graph& g, const Tensor& x, double factor) {
  return unary(
      g, x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor add_bias(Graph& g, const Tensor& x, const Tensor& bias) {
  const std::size_t d = x.shape().back();
  if (bias.rank() != 1 || bias.dim(0) != d)
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not match last axis of " +
                         shape_str(x.shape()));
  const std::size_t rows = x.numel() / d;
  Tensor out(x.shape());
  auto xs = x.data(), bs = bias.data();
  auto os = out.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) os[r * d + j] = xs[r * d + j] + bs[j];
  if (!g.needs_record({&x, &bias})) return out;
  return g.record(out, {x, bias}, [x, bias, rows, d](std::span<const double> go) mutable {
    if (x.requires_grad()) {
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i];
    }
    if (bias.requires_grad()) {
      auto gb = bias.mutable_grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) gb[j] += go[r * d + j];
    }
  });
}

Tensor gelu(Graph& g, const Tensor& x) {
  // Exact (erf) form.
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return unary(
      g, x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
      [inv_sqrt_2pi](double v, double) {
        return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
      });
}

Tensor tanh(Graph& g, const Tensor& x) {
  return unary(
      g, x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor softmax(Graph& g, const Tensor& x, std::size_t axis) {
  if (axis >= x.rank())
    throw IndexError("softmax: axis " + std::to_string(axis) + " invalid for shape " + shape_str(x.shape()));
  const auto& shape = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const std::size_t n = shape[axis];

  Tensor out(shape);
  auto xs = x.data();
  auto os = out.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, xs[base + j * inner]);
      if (mx == -std::numeric_limits<double>::infinity())
        throw ContractError("softmax: every entry along the axis is masked");
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double e = std::exp(xs[base + j * inner] - mx);
        os[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < n; ++j) os[base + j * inner] /= total;
    }
  }
  if (!g.needs_record({&x})) return out;
  return g.record(out, {x}, [x, out, outer, inner, n](std::span<const double> go) mutable {
    if (!x.requires_grad()) return;
    auto gx = x.mutable_grad();
    auto ys = out.data();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * n * inner + in;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += go[base + j * inner] * ys[base + j * inner];
        for (std::size_t j = 0; j < n; ++j) {
          const std::size_t idx = base + j * inner;
          gx[idx] += ys[idx] * (go[idx] - dot);
        }
      }
    }
  });
}

Tensor layer_norm(Graph& g, const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t d = x.shape().back();
  if (gamma.rank() != 1 || gamma.dim(0) != d || beta.rank() != 1 || beta.dim(0) != d)
    throw DimensionError("layer_norm: gamma " + shape_str(gamma.shape()) + " / beta " + shape_str(beta.shape()) +
                         " do not match last axis of " + shape_str(x.shape()));
  const std::size_t rows = x.numel() / d;
  Tensor out(x.shape());
  // Normalized values and inverse std are kept for the backward pass.
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  auto xs = x.data(), gs = gamma.data(), bs = beta.data();
  auto os = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xs.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mu) * is;
      xhat[r * d + j] = h;
      os[r * d + j] = h * gs[j] + bs[j];
    }
  }
  if (!g.needs_record({&x, &gamma, &beta})) return out;
  return g.record(out, {x, gamma, beta},
                  [x, gamma, beta, rows, d, xhat = std::move(xhat),
                   inv_std = std::move(inv_std)](std::span<const double> go) mutable {
                    auto gs = gamma.data();
                    if (gamma.requires_grad()) {
                      auto gg = gamma.mutable_grad();
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t j = 0; j < d; ++j) gg[j] += go[r * d + j] * xhat[r * d + j];
                    }
                    if (beta.requires_grad()) {
                      auto gb = beta.mutable_grad();
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t j = 0; j < d; ++j) gb[j] += go[r * d + j];
                    }
                    if (x.requires_grad()) {
                      auto gx = x.mutable_grad();
                      const double inv_d = 1.0 / static_cast<double>(d);
                      for (std::size_t r = 0; r < rows; ++r) {
                        double sum_dh = 0.0, sum_dh_h = 0.0;
                        for (std::size_t j = 0; j < d; ++j) {
                          const double dh = go[r * d + j] * gs[j];
                          sum_dh += dh;
                          sum_dh_h += dh * xhat[r * d + j];
                        }
                        for (std::size_t j = 0; j < d; ++j) {
                          const double dh = go[r * d + j] * gs[j];
                          gx[r * d + j] +=
                              inv_std[r] * (dh - inv_d * sum_dh - xhat[r * d + j] * inv_d * sum_dh_h);
                        }
                      }
                    }
                  });
}

Tensor gather_rows(Graph& g, const Tensor& table, std::span<const std::size_t> ids) {
  require_rank2(table, "gather_rows");
  if (ids.empty()) throw DimensionError("gather_rows: empty index list");
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  for (auto id : ids)
    if (id >= vocab)
      throw IndexError("gather_rows: index " + std::to_string(id) + " out of range for " + std::to_string(vocab) +
                       " rows");
  Tensor out(Shape{ids.size(), d});
  auto ts = table.data();
  auto os = out.data();
  for (std::size_t r = 0; r < ids.size(); ++r)
    std::copy_n(ts.begin() + static_cast<std::ptrdiff_t>(ids[r] * d), d, os.begin() + static_cast<std::ptrdiff_t>(r * d));
  if (!g.needs_record({&table})) return out;
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  return g.record(out, {table}, [table, d, idx = std::move(idx)](std::span<const double> go) mutable {
    auto gt = table.mutable_grad();
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < d; ++j) gt[idx[r] * d + j] += go[r * d + j];
  });
}

Tensor slice_block(Graph& g, const Tensor& x, std::size_t r0, std::size_t nr, std::size_t c0, std::size_t nc) {
  require_rank2(x, "slice_block");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (nr == 0 || nc == 0 || r0 + nr > rows || c0 + nc > cols)
    throw IndexError("slice_block: block out of range for " + shape_str(x.shape()));
  Tensor out(Shape{nr, nc});
  vmap(out, nr, nc) = cmap(x, rows, cols).block(static_cast<Eigen::Index>(r0), static_cast<Eigen::Index>(c0),
                                                static_cast<Eigen::Index>(nr), static_cast<Eigen::Index>(nc));
  if (!g.needs_record({&x})) return out;
  return g.record(out, {x}, [x, rows, cols, r0, nr, c0, nc](std::span<const double> go) mutable {
    gmap(x, rows, cols).block(static_cast<Eigen::Index>(r0), static_cast<Eigen::Index>(c0),
                              static_cast<Eigen::Index>(nr), static_cast<Eigen::Index>(nc)) += cmap(go, nr, nc);
  });
}

Tensor concat_rows(Graph& g, std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: nothing to concatenate");
  const std::size_t cols = parts[0].shape().back();
  std::size_t rows = 0;
  bool any_grad = false;
  for (const auto& p : parts) {
    require_rank2(p, "concat_rows");
    if (p.dim(1) != cols) throw DimensionError("concat_rows: column mismatch " + shape_str(p.shape()));
    rows += p.dim(0);
    any_grad = any_grad || p.requires_grad();
  }
  Tensor out(Shape{rows, cols});
  auto os = out.data();
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.data().begin(), p.data().end(), os.begin() + static_cast<std::ptrdiff_t>(off));
    off += p.numel();
  }
  if (!g.recording() || !any_grad) return out;
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return g.record(out, inputs, [inputs](std::span<const double> go) mutable {
    std::size_t off = 0;
    for (auto& p : inputs) {
      if (p.requires_grad()) {
        auto gp = p.mutable_grad();
        for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += go[off + i];
      }
      off += p.numel();
    }
  });
}

Tensor concat_cols(Graph& g, std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: nothing to concatenate");
  const std::size_t rows = parts[0].dim(0);
  std::size_t cols = 0;
  bool any_grad = false;
  for (const auto& p : parts) {
    require_rank2(p, "concat_cols");
    if (p.dim(0) != rows) throw DimensionError("concat_cols: row mismatch " + shape_str(p.shape()));
    cols += p.dim(1);
    any_grad = any_grad || p.requires_grad();
  }
  Tensor out(Shape{rows, cols});
  auto os = out.data();
  std::size_t c0 = 0;
  for (const auto& p : parts) {
    const std::size_t pc = p.dim(1);
    auto ps = p.data();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < pc; ++j) os[r * cols + c0 + j] = ps[r * pc + j];
    c0 += pc;
  }
  if (!g.recording() || !any_grad) return out;
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return g.record(out, inputs, [inputs, rows, cols](std::span<const double> go) mutable {
    std::size_t c0 = 0;
    for (auto& p : inputs) {
      const std::size_t pc = p.dim(1);
      if (p.requires_grad()) {
        auto gp = p.mutable_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < pc; ++j) gp[r * pc + j] += go[r * cols + c0 + j];
      }
      c0 += pc;
    }
  });
}

Tensor sum(Graph& g, const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  Tensor out = Tensor::scalar(total);
  if (!g.needs_record({&x})) return out;
  return g.record(out, {x}, [x](std::span<const double> go) mutable {
    auto gx = x.mutable_grad();
    for (auto& v : gx) v += go[0];
  });
}

Tensor mean(Graph& g, const Tensor& x) {
  const double inv_n = 1.0 / static_cast<double>(x.numel());
  double total = 0.0;
  for (double v : x.data()) total += v;
  Tensor out = Tensor::scalar(total * inv_n);
  if (!g.needs_record({&x})) return out;
  return g.record(out, {x}, [x, inv_n](std::span<const double> go) mutable {
    auto gx = x.mutable_grad();
    for (auto& v : gx) v += go[0] * inv_n;
  });
}

Tensor cross_entropy(Graph& g, const Tensor& logits, std::span<const std::size_t> labels) {
  require_rank2(logits, "cross_entropy");
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != batch)
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(batch) +
                         " rows");
  std::vector<double> probs(batch * classes);
  auto ls = logits.data();
  double total = 0.0;
  for (std::size_t r = 0; r < batch; ++r) {
    if (labels[r] >= classes) throw IndexError("cross_entropy: label " + std::to_string(labels[r]) + " out of range");
    const double* row = ls.data() + r * classes;
    const double mx = *std::max_element(row, row + classes);
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      probs[r * classes + c] = std::exp(row[c] - mx);
      z += probs[r * classes + c];
    }
    for (std::size_t c = 0; c < classes; ++c) probs[r * classes + c] /= z;
    total -= (row[labels[r]] - mx) - std::log(z);
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(batch));
  if (!g.needs_record({&logits})) return out;
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  return g.record(out, {logits}, [logits, batch, classes, probs = std::move(probs), lab = std::move(lab)](
                                     std::span<const double> go) mutable {
    auto gl = logits.mutable_grad();
    const double s = go[0] / static_cast<double>(batch);
    for (std::size_t r = 0; r < batch; ++r)
      for (std::size_t c = 0; c < classes; ++c)
        gl[r * classes + c] += s * (probs[r * classes + c] - (c == lab[r] ? 1.0 : 0.0));
  });
}

Tensor mse_loss(Graph& g, const Tensor& pred, std::span<const double> targets) {
  if (pred.numel() != targets.size())
    throw DimensionError("mse_loss: " + std::to_string(targets.size()) + " targets for prediction " +
                         shape_str(pred.shape()));
  const std::size_t n = targets.size();
  auto ps = pred.data();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += (ps[i] - targets[i]) * (ps[i] - targets[i]);
  Tensor out = Tensor::scalar(total / static_cast<double>(n));
  if (!g.needs_record({&pred})) return out;
  std::vector<double> tgt(targets.begin(), targets.end());
  return g.record(out, {pred}, [pred, tgt = std::move(tgt)](std::span<const double> go) mutable {
    auto gp = pred.mutable_grad();
    auto ps = pred.data();
    const double s = 2.0 * go[0] / static_cast<double>(tgt.size());
    for (std::size_t i = 0; i < tgt.size(); ++i) gp[i] += s * (ps[i] - tgt[i]);
  });
}

}  // namespace hmnet::ops
