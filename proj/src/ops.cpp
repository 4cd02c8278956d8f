#include "adapterlab/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "adapterlab/errors.hpp"

namespace adapterlab {

std::string_view to_string(Nonlinearity n) {
  switch (n) {
    case Nonlinearity::kRelu: return "relu";
    case Nonlinearity::kGelu: return "gelu";
    case Nonlinearity::kTanh: return "tanh";
  }
  return "relu";
}

Nonlinearity parse_nonlinearity(std::string_view name) {
  if (name == "relu") return Nonlinearity::kRelu;
  if (name == "gelu") return Nonlinearity::kGelu;
  if (name == "tanh") return Nonlinearity::kTanh;
  throw InputError("unknown nonlinearity '" + std::string(name) + "'");
}

namespace ops {
namespace {

using detail::TensorImpl;
using ImplPtr = std::shared_ptr<TensorImpl>;

void check_finite(std::span<const double> v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string("non-finite value produced by ") + op);
  }
}

// Wraps freshly computed values into a tensor and records the operation if
// any input needs a gradient.
template <typename Backward>
Tensor record(const char* name, Shape shape, std::vector<double> values,
              std::vector<ImplPtr> inputs, Backward&& bw) {
  check_finite(values, name);
  Tensor out(std::move(shape), std::move(values));
  bool needs = grad_recording_enabled() && std::any_of(inputs.begin(), inputs.end(), [](const ImplPtr& p) { return p->requires_grad; });
  if (needs) {
    auto node = std::make_shared<detail::GraphNode>();
    node->inputs = std::move(inputs);
    node->backward = std::forward<Backward>(bw);
    node->name = name;
    out.impl()->requires_grad = true;
    out.impl()->creator = std::move(node);
  }
  return out;
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw DimensionError(msg);
}

std::size_t rows_of(const Shape& s) {
  std::size_t r = 1;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) r *= s[i];
  return r;
}

// c[r x c] += a[r x k] . b[k x c]
void gemm_acc(const double* a, const double* b, double* c, std::size_t r, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < r; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// c[r x k] += g[r x n] . b[k x n]^T
void gemm_acc_bt(const double* g, const double* b, double* c, std::size_t r, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < r; ++i) {
    const double* gi = g + i * n;
    double* ci = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = b + p * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += gi[j] * bp[j];
      ci[p] += s;
    }
  }
}

// c[k x n] += a[r x k]^T . g[r x n]
void gemm_acc_at(const double* a, const double* g, double* c, std::size_t r, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < r; ++i) {
    const double* ai = a + i * k;
    const double* gi = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * gi[j];
    }
  }
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
          "matmul: cannot multiply " + shape_to_string(a.shape()) + " by " + shape_to_string(b.shape()));
  const std::size_t r = a.dim(0), k = a.dim(1), c = b.dim(1);
  std::vector<double> out(r * c, 0.0);
  gemm_acc(a.values().data(), b.values().data(), out.data(), r, k, c);
  ImplPtr ai = a.impl(), bi = b.impl();
  return record("matmul", {r, c}, std::move(out), {ai, bi}, [ai, bi, r, k, c](const TensorImpl& o) {
    if (ai->requires_grad) gemm_acc_bt(o.grad.data(), bi->values.data(), ai->grad_buffer().data(), r, k, c);
    if (bi->requires_grad) gemm_acc_at(ai->values.data(), o.grad.data(), bi->grad_buffer().data(), r, k, c);
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require(x.rank() >= 1 && w.rank() == 2 && x.shape().back() == w.dim(0),
          "linear: input " + shape_to_string(x.shape()) + " incompatible with weight " + shape_to_string(w.shape()));
  const std::size_t k = w.dim(0), c = w.dim(1), r = rows_of(x.shape());
  const bool has_bias = bias.defined();
  if (has_bias) {
    require(bias.rank() == 1 && bias.dim(0) == c,
            "linear: bias " + shape_to_string(bias.shape()) + " does not match output width " + std::to_string(c));
  }
  std::vector<double> out(r * c, 0.0);
  if (has_bias) {
    auto bv = bias.values();
    for (std::size_t i = 0; i < r; ++i) std::copy(bv.begin(), bv.end(), out.begin() + i * c);
  }
  gemm_acc(x.values().data(), w.values().data(), out.data(), r, k, c);
  Shape shape = x.shape();
  shape.back() = c;
  ImplPtr xi = x.impl(), wi = w.impl(), bi = has_bias ? bias.impl() : nullptr;
  std::vector<ImplPtr> inputs{xi, wi};
  if (bi) inputs.push_back(bi);
  return record("linear", std::move(shape), std::move(out), std::move(inputs), [xi, wi, bi, r, k, c](const TensorImpl& o) {
    if (xi->requires_grad) gemm_acc_bt(o.grad.data(), wi->values.data(), xi->grad_buffer().data(), r, k, c);
    if (wi->requires_grad) gemm_acc_at(xi->values.data(), o.grad.data(), wi->grad_buffer().data(), r, k, c);
    if (bi && bi->requires_grad) {
      auto g = bi->grad_buffer();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[j] += o.grad[i * c + j];
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "add: shape " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  std::vector<double> out(a.numel());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  ImplPtr ai = a.impl(), bi = b.impl();
  return record("add", a.shape(), std::move(out), {ai, bi}, [ai, bi](const TensorImpl& o) {
    if (ai->requires_grad) ai->accumulate_grad(o.grad);
    if (bi->requires_grad) bi->accumulate_grad(o.grad);
  });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (double& v : out) v *= factor;
  ImplPtr xi = x.impl();
  return record("scale", x.shape(), std::move(out), {xi}, [xi, factor](const TensorImpl& o) {
    auto g = xi->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * o.grad[i];
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (!(eps > 0.0)) throw ContractError("layer_norm: eps must be positive");
  const std::size_t d = x.shape().back();
  require(gamma.rank() == 1 && beta.rank() == 1 && gamma.dim(0) == d && beta.dim(0) == d,
          "layer_norm: input width " + std::to_string(d) + " vs gamma " + shape_to_string(gamma.shape()) +
              ", beta " + shape_to_string(beta.shape()));
  const std::size_t r = rows_of(x.shape());
  auto xv = x.values(), gv = gamma.values(), bv = beta.values();
  std::vector<double> out(r * d), xhat(r * d), inv_std(r);
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = xv.data() + i * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      double h = (row[j] - mu) * inv_std[i];
      xhat[i * d + j] = h;
      out[i * d + j] = gv[j] * h + bv[j];
    }
  }
  ImplPtr xi = x.impl(), gi = gamma.impl(), bi = beta.impl();
  return record("layer_norm", x.shape(), std::move(out), {xi, gi, bi},
                [xi, gi, bi, r, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](const TensorImpl& o) {
                  const auto& gy = o.grad;
                  if (gi->requires_grad) {
                    auto g = gi->grad_buffer();
                    for (std::size_t i = 0; i < r; ++i)
                      for (std::size_t j = 0; j < d; ++j) g[j] += gy[i * d + j] * xhat[i * d + j];
                  }
                  if (bi->requires_grad) {
                    auto g = bi->grad_buffer();
                    for (std::size_t i = 0; i < r; ++i)
                      for (std::size_t j = 0; j < d; ++j) g[j] += gy[i * d + j];
                  }
                  if (xi->requires_grad) {
                    auto g = xi->grad_buffer();
                    const auto& gam = gi->values;
                    std::vector<double> dh(d);
                    for (std::size_t i = 0; i < r; ++i) {
                      double m1 = 0.0, m2 = 0.0;
                      for (std::size_t j = 0; j < d; ++j) {
                        dh[j] = gy[i * d + j] * gam[j];
                        m1 += dh[j];
                        m2 += dh[j] * xhat[i * d + j];
                      }
                      m1 /= static_cast<double>(d);
                      m2 /= static_cast<double>(d);
                      for (std::size_t j = 0; j < d; ++j)
                        g[i * d + j] += inv_std[i] * (dh[j] - m1 - xhat[i * d + j] * m2);
                    }
                  }
                });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  ImplPtr xi = x.impl();
  return record("relu", x.shape(), std::move(out), {xi}, [xi](const TensorImpl& o) {
    auto g = xi->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xi->values[i] > 0.0) g[i] += o.grad[i];
  });
}

Tensor gelu(const Tensor& x) {
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double v = xv[i];
    out[i] = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  }
  ImplPtr xi = x.impl();
  return record("gelu", x.shape(), std::move(out), {xi}, [xi](const TensorImpl& o) {
    auto g = xi->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = xi->values[i];
      const double t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
      const double dt = (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
      g[i] += o.grad[i] * (0.5 * (1.0 + t) + 0.5 * v * dt);
    }
  });
}

Tensor tanh(const Tensor& x) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (double& v : out) v = std::tanh(v);
  ImplPtr xi = x.impl();
  auto y = out;
  return record("tanh", x.shape(), std::move(out), {xi}, [xi, y = std::move(y)](const TensorImpl& o) {
    auto g = xi->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * (1.0 - y[i] * y[i]);
  });
}

Tensor activate(const Tensor& x, Nonlinearity n) {
  switch (n) {
    case Nonlinearity::kRelu: return relu(x);
    case Nonlinearity::kGelu: return gelu(x);
    case Nonlinearity::kTanh: return tanh(x);
  }
  return relu(x);
}

Tensor softmax(const Tensor& x) {
  const std::size_t d = x.shape().back(), r = rows_of(x.shape());
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = xv.data() + i * d;
    double* o = out.data() + i * d;
    const double mx = *std::max_element(row, row + d);
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += (o[j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < d; ++j) o[j] /= s;
  }
  ImplPtr xi = x.impl();
  auto y = out;
  return record("softmax", x.shape(), std::move(out), {xi}, [xi, y = std::move(y), r, d](const TensorImpl& o) {
    auto g = xi->grad_buffer();
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += o.grad[i * d + j] * y[i * d + j];
      for (std::size_t j = 0; j < d; ++j) g[i * d + j] += y[i * d + j] * (o.grad[i * d + j] - dot);
    }
  });
}

Tensor batched_matmul(const Tensor& a, const Tensor& b, bool transpose_b) {
  require(a.rank() == 3 && b.rank() == 3 && a.dim(0) == b.dim(0),
          "batched_matmul: " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  const std::size_t B = a.dim(0), r = a.dim(1), k = a.dim(2);
  const std::size_t c = transpose_b ? b.dim(1) : b.dim(2);
  require((transpose_b ? b.dim(2) : b.dim(1)) == k,
          "batched_matmul: inner extents differ, " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  std::vector<double> out(B * r * c, 0.0);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (std::size_t n = 0; n < B; ++n) {
    if (transpose_b) {
      gemm_acc_bt(av + n * r * k, bv + n * c * k, out.data() + n * r * c, r, c, k);
    } else {
      gemm_acc(av + n * r * k, bv + n * k * c, out.data() + n * r * c, r, k, c);
    }
  }
  ImplPtr ai = a.impl(), bi = b.impl();
  return record("batched_matmul", {B, r, c}, std::move(out), {ai, bi},
                [ai, bi, B, r, k, c, transpose_b](const TensorImpl& o) {
                  const double* g = o.grad.data();
                  for (std::size_t n = 0; n < B; ++n) {
                    const double* gn = g + n * r * c;
                    if (ai->requires_grad) {
                      double* ga = ai->grad_buffer().data() + n * r * k;
                      if (transpose_b) {
                        // out = A B^T with B[c x k]: dA = G B
                        gemm_acc(gn, bi->values.data() + n * c * k, ga, r, c, k);
                      } else {
                        gemm_acc_bt(gn, bi->values.data() + n * k * c, ga, r, k, c);
                      }
                    }
                    if (bi->requires_grad) {
                      if (transpose_b) {
                        // dB = G^T A, B is [c x k]
                        double* gb = bi->grad_buffer().data() + n * c * k;
                        gemm_acc_at(gn, ai->values.data() + n * r * k, gb, r, c, k);
                      } else {
                        double* gb = bi->grad_buffer().data() + n * k * c;
                        gemm_acc_at(ai->values.data() + n * r * k, gn, gb, r, k, c);
                      }
                    }
                  }
                });
}

namespace {

// Maps [n x len x h x dh] (merged layout) index to [n x h x len x dh] (split layout).
template <typename F>
void for_each_head_index(std::size_t n, std::size_t len, std::size_t h, std::size_t dh, F&& f) {
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t t = 0; t < len; ++t)
      for (std::size_t hh = 0; hh < h; ++hh)
        for (std::size_t e = 0; e < dh; ++e) {
          const std::size_t merged = ((b * len + t) * h + hh) * dh + e;
          const std::size_t split = ((b * h + hh) * len + t) * dh + e;
          f(merged, split);
        }
}

}  // namespace

Tensor split_heads(const Tensor& x, std::size_t heads) {
  require(x.rank() == 3 && heads > 0 && x.dim(2) % heads == 0,
          "split_heads: " + shape_to_string(x.shape()) + " with " + std::to_string(heads) + " heads");
  const std::size_t n = x.dim(0), len = x.dim(1), dh = x.dim(2) / heads;
  std::vector<double> out(x.numel());
  auto xv = x.values();
  for_each_head_index(n, len, heads, dh, [&](std::size_t m, std::size_t s) { out[s] = xv[m]; });
  ImplPtr xi = x.impl();
  return record("split_heads", {n * heads, len, dh}, std::move(out), {xi}, [xi, n, len, heads, dh](const TensorImpl& o) {
    auto g = xi->grad_buffer();
    for_each_head_index(n, len, heads, dh, [&](std::size_t m, std::size_t s) { g[m] += o.grad[s]; });
  });
}

Tensor merge_heads(const Tensor& x, std::size_t heads) {
  require(x.rank() == 3 && heads > 0 && x.dim(0) % heads == 0,
          "merge_heads: " + shape_to_string(x.shape()) + " with " + std::to_string(heads) + " heads");
  const std::size_t n = x.dim(0) / heads, len = x.dim(1), dh = x.dim(2);
  std::vector<double> out(x.numel());
  auto xv = x.values();
  for_each_head_index(n, len, heads, dh, [&](std::size_t m, std::size_t s) { out[m] = xv[s]; });
  ImplPtr xi = x.impl();
  return record("merge_heads", {n, len, heads * dh}, std::move(out), {xi}, [xi, n, len, heads, dh](const TensorImpl& o) {
    auto g = xi->grad_buffer();
    for_each_head_index(n, len, heads, dh, [&](std::size_t m, std::size_t s) { g[s] += o.grad[m]; });
  });
}

Tensor embedding(const Tensor& table, std::span<const std::size_t> ids, const Shape& prefix) {
  require(table.rank() == 2, "embedding: table must be 2-d, got " + shape_to_string(table.shape()));
  require(shape_numel(prefix) == ids.size(), "embedding: prefix " + shape_to_string(prefix) + " does not cover " +
                                                 std::to_string(ids.size()) + " ids");
  const std::size_t rows = table.dim(0), d = table.dim(1);
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  for (std::size_t id : idx) {
    if (id >= rows) throw IndexError("embedding: id " + std::to_string(id) + " >= table rows " + std::to_string(rows));
  }
  std::vector<double> out(idx.size() * d);
  auto tv = table.values();
  for (std::size_t i = 0; i < idx.size(); ++i) std::copy_n(tv.begin() + idx[i] * d, d, out.begin() + i * d);
  Shape shape = prefix;
  shape.push_back(d);
  ImplPtr ti = table.impl();
  return record("embedding", std::move(shape), std::move(out), {ti}, [ti, idx = std::move(idx), d](const TensorImpl& o) {
    auto g = ti->grad_buffer();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) g[idx[i] * d + j] += o.grad[i * d + j];
  });
}

Tensor select_position(const Tensor& x, std::size_t position) {
  require(x.rank() == 3, "select_position: expected [n x len x d], got " + shape_to_string(x.shape()));
  const std::size_t n = x.dim(0), len = x.dim(1), d = x.dim(2);
  if (position >= len) throw IndexError("select_position: position " + std::to_string(position) + " >= length " + std::to_string(len));
  std::vector<double> out(n * d);
  auto xv = x.values();
  for (std::size_t b = 0; b < n; ++b) std::copy_n(xv.begin() + (b * len + position) * d, d, out.begin() + b * d);
  ImplPtr xi = x.impl();
  return record("select_position", {n, d}, std::move(out), {xi}, [xi, n, len, d, position](const TensorImpl& o) {
    auto g = xi->grad_buffer();
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t j = 0; j < d; ++j) g[(b * len + position) * d + j] += o.grad[b * d + j];
  });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  const std::size_t d = x.shape().back(), total = rows_of(x.shape());
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  if (idx.empty()) throw ContractError("gather_rows: no rows requested");
  for (std::size_t r : idx) {
    if (r >= total) throw IndexError("gather_rows: row " + std::to_string(r) + " >= " + std::to_string(total));
  }
  std::vector<double> out(idx.size() * d);
  auto xv = x.values();
  for (std::size_t i = 0; i < idx.size(); ++i) std::copy_n(xv.begin() + idx[i] * d, d, out.begin() + i * d);
  ImplPtr xi = x.impl();
  Shape shape{idx.size(), d};
  return record("gather_rows", std::move(shape), std::move(out), {xi}, [xi, idx = std::move(idx), d](const TensorImpl& o) {
    auto g = xi->grad_buffer();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) g[idx[i] * d + j] += o.grad[i * d + j];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require(shape_numel(shape) == x.numel(),
          "reshape: " + shape_to_string(x.shape()) + " -> " + shape_to_string(shape));
  std::vector<double> out(x.values().begin(), x.values().end());
  ImplPtr xi = x.impl();
  return record("reshape", std::move(shape), std::move(out), {xi},
                [xi](const TensorImpl& o) { xi->accumulate_grad(o.grad); });
}

Tensor sum(const Tensor& x) {
  auto xv = x.values();
  const double s = std::accumulate(xv.begin(), xv.end(), 0.0);
  ImplPtr xi = x.impl();
  return record("sum", {1}, {s}, {xi}, [xi](const TensorImpl& o) {
    auto g = xi->grad_buffer();
    for (double& v : g) v += o.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
  require(logits.rank() == 2, "softmax_cross_entropy: logits must be [n x K], got " + shape_to_string(logits.shape()));
  const std::size_t n = logits.dim(0), K = logits.dim(1);
  require(labels.size() == n, "softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                                  std::to_string(n) + " rows");
  for (std::size_t y : labels) {
    if (y >= K) throw IndexError("softmax_cross_entropy: label " + std::to_string(y) + " outside [0, " + std::to_string(K) + ")");
  }
  auto lv = logits.values();
  std::vector<double> probs(n * K);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = lv.data() + i * K;
    const double mx = *std::max_element(row, row + K);
    double s = 0.0;
    for (std::size_t j = 0; j < K; ++j) s += std::exp(row[j] - mx);
    const double log_z = mx + std::log(s);
    for (std::size_t j = 0; j < K; ++j) probs[i * K + j] = std::exp(row[j] - log_z);
    loss += log_z - row[labels[i]];
  }
  loss /= static_cast<double>(n);
  ImplPtr li = logits.impl();
  std::vector<std::size_t> ys(labels.begin(), labels.end());
  return record("softmax_cross_entropy", {1}, {loss}, {li},
                [li, probs = std::move(probs), ys = std::move(ys), n, K](const TensorImpl& o) {
                  auto g = li->grad_buffer();
                  const double s = o.grad[0] / static_cast<double>(n);
                  for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < K; ++j)
                      g[i * K + j] += s * (probs[i * K + j] - (j == ys[i] ? 1.0 : 0.0));
                });
}

}  // namespace ops
}  // namespace adapterlab
