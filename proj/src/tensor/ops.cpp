// Copyright 2026 The LoopScope Authors
// SPDX-License-Identifier: Apache-2.0

#include "loopscope/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <string>
#include <utility>

namespace loopscope::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

using detail::Node;

ConstMap as_matrix(const std::vector<double>& v, std::size_t r, std::size_t c) {
  return ConstMap(v.data(), static_cast<Eigen::Index>(r),
                  static_cast<Eigen::Index>(c));
}

MutMap as_matrix(std::vector<double>& v, std::size_t r, std::size_t c) {
  return MutMap(v.data(), static_cast<Eigen::Index>(r),
                static_cast<Eigen::Index>(c));
}

void check_finite(const std::vector<double>& v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string("non-finite value produced by ") + op);
    }
  }
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " +
                       shape_string(a.shape()) + " and " +
                       shape_string(b.shape()));
}

Tensor make_result(const char* op, Shape shape, std::vector<double> value,
                   std::initializer_list<Tensor> inputs,
                   std::function<void(Node&)> backward_fn) {
  check_finite(value, op);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  bool needs_grad = false;
  if (grad_enabled()) {
    for (const Tensor& t : inputs) needs_grad = needs_grad || t.requires_grad();
  }
  if (needs_grad) {
    node->requires_grad = true;
    for (const Tensor& t : inputs) node->inputs.push_back(t.node_ptr());
    node->backward = std::move(backward_fn);
  }
  return Tensor::wrap(std::move(node));
}

bool wants_grad(const Node& self, std::size_t i) {
  return self.inputs[i]->requires_grad;
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error(op, a, b);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (b.dim() != 2 || a.cols() != b.rows()) shape_error("matmul", a, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n);
  const auto& av = a.node_ptr()->value;
  const auto& bv = b.node_ptr()->value;
  as_matrix(out, m, n).noalias() = as_matrix(av, m, k) * as_matrix(bv, k, n);
  Shape shape = a.dim() == 1 ? Shape{n} : Shape{m, n};
  return make_result("matmul", std::move(shape), std::move(out), {a, b},
                     [m, k, n](Node& self) {
                       auto g = as_matrix(std::as_const(self.grad), m, n);
                       Node& na = *self.inputs[0];
                       Node& nb = *self.inputs[1];
                       if (na.requires_grad) {
                         as_matrix(na.grad_buffer(), m, k).noalias() +=
                             g * as_matrix(std::as_const(nb.value), k, n).transpose();
                       }
                       if (nb.requires_grad) {
                         as_matrix(nb.grad_buffer(), k, n).noalias() +=
                             as_matrix(std::as_const(na.value), m, k).transpose() * g;
                       }
                     });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.size());
  const auto& av = a.node_ptr()->value;
  const auto& bv = b.node_ptr()->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_result("add", a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t j = 0; j < 2; ++j) {
      if (!wants_grad(self, j)) continue;
      auto& g = self.inputs[j]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.size());
  const auto& av = a.node_ptr()->value;
  const auto& bv = b.node_ptr()->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return make_result("sub", a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (wants_grad(self, 0)) {
      auto& g = self.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants_grad(self, 1)) {
      auto& g = self.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  const auto& av = a.node_ptr()->value;
  const auto& bv = b.node_ptr()->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result("mul", a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (wants_grad(self, 0)) {
      auto& g = self.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (wants_grad(self, 1)) {
      auto& g = self.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v *= factor;
  return make_result("scale", a.shape(), std::move(out), {a},
                     [factor](Node& self) {
                       auto& g = self.inputs[0]->grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         g[i] += factor * self.grad[i];
                       }
                     });
}

Tensor add_rowwise(const Tensor& x, const Tensor& bias) {
  if (bias.dim() != 1 || bias.size() != x.cols()) {
    shape_error("add_rowwise", x, bias);
  }
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(x.data().begin(), x.data().end());
  const auto& bv = bias.node_ptr()->value;
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] += bv[c];
  }
  return make_result("add_rowwise", x.shape(), std::move(out), {x, bias},
                     [m, n](Node& self) {
                       if (wants_grad(self, 0)) {
                         auto& g = self.inputs[0]->grad_buffer();
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           g[i] += self.grad[i];
                         }
                       }
                       if (wants_grad(self, 1)) {
                         auto& g = self.inputs[1]->grad_buffer();
                         for (std::size_t r = 0; r < m; ++r) {
                           for (std::size_t c = 0; c < n; ++c) {
                             g[c] += self.grad[r * n + c];
                           }
                         }
                       }
                     });
}

Tensor silu(const Tensor& x) {
  std::vector<double> out(x.size());
  const auto& xv = x.node_ptr()->value;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = xv[i] / (1.0 + std::exp(-xv[i]));
  }
  return make_result("silu", x.shape(), std::move(out), {x}, [](Node& self) {
    const auto& xv = self.inputs[0]->value;
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = 1.0 / (1.0 + std::exp(-xv[i]));
      g[i] += self.grad[i] * s * (1.0 + xv[i] * (1.0 - s));
    }
  });
}

Tensor rmsnorm(const Tensor& x, const Tensor& gain) {
  if (gain.dim() != 1 || gain.size() != x.cols()) {
    shape_error("rmsnorm", x, gain);
  }
  const std::size_t m = x.rows(), d = x.cols();
  const auto& xv = x.node_ptr()->value;
  const auto& gv = gain.node_ptr()->value;
  std::vector<double> out(x.size());
  std::vector<double> inv_rms(m);
  for (std::size_t r = 0; r < m; ++r) {
    double ss = 0.0;
    for (std::size_t c = 0; c < d; ++c) ss += xv[r * d + c] * xv[r * d + c];
    inv_rms[r] = 1.0 / std::sqrt(ss / static_cast<double>(d) + kRmsNormEps);
    for (std::size_t c = 0; c < d; ++c) {
      out[r * d + c] = xv[r * d + c] * inv_rms[r] * gv[c];
    }
  }
  return make_result(
      "rmsnorm", x.shape(), std::move(out), {x, gain},
      [m, d, inv_rms = std::move(inv_rms)](Node& self) {
        const auto& xv = self.inputs[0]->value;
        const auto& gv = self.inputs[1]->value;
        const bool gx = wants_grad(self, 0), gg = wants_grad(self, 1);
        for (std::size_t r = 0; r < m; ++r) {
          const double ir = inv_rms[r];
          const double* x_row = xv.data() + r * d;
          const double* dy = self.grad.data() + r * d;
          if (gg) {
            auto& g = self.inputs[1]->grad_buffer();
            for (std::size_t c = 0; c < d; ++c) g[c] += dy[c] * x_row[c] * ir;
          }
          if (gx) {
            double dot = 0.0;
            for (std::size_t c = 0; c < d; ++c) dot += dy[c] * gv[c] * x_row[c];
            const double coef = ir * ir * ir * dot / static_cast<double>(d);
            auto& g = self.inputs[0]->grad_buffer();
            for (std::size_t c = 0; c < d; ++c) {
              g[r * d + c] += ir * dy[c] * gv[c] - coef * x_row[c];
            }
          }
        }
      });
}

Tensor softmax(const Tensor& z) {
  const std::size_t m = z.rows(), n = z.cols();
  const auto& zv = z.node_ptr()->value;
  std::vector<double> out(z.size());
  for (std::size_t r = 0; r < m; ++r) {
    const double* zr = zv.data() + r * n;
    double* o = out.data() + r * n;
    const double mx = *std::max_element(zr, zr + n);
    double total = 0.0;
    for (std::size_t c = 0; c < n; ++c) total += (o[c] = std::exp(zr[c] - mx));
    for (std::size_t c = 0; c < n; ++c) o[c] /= total;
  }
  return make_result("softmax", z.shape(), std::move(out), {z},
                     [m, n](Node& self) {
                       // Recover the output from this node's own value.
                       const auto& p = self.value;
                       auto& g = self.inputs[0]->grad_buffer();
                       for (std::size_t r = 0; r < m; ++r) {
                         double dot = 0.0;
                         for (std::size_t c = 0; c < n; ++c) {
                           dot += self.grad[r * n + c] * p[r * n + c];
                         }
                         for (std::size_t c = 0; c < n; ++c) {
                           g[r * n + c] +=
                               p[r * n + c] * (self.grad[r * n + c] - dot);
                         }
                       }
                     });
}

Tensor log_softmax(const Tensor& z) {
  const std::size_t m = z.rows(), n = z.cols();
  const auto& zv = z.node_ptr()->value;
  std::vector<double> out(z.size());
  for (std::size_t r = 0; r < m; ++r) {
    const double* zr = zv.data() + r * n;
    const double mx = *std::max_element(zr, zr + n);
    double total = 0.0;
    for (std::size_t c = 0; c < n; ++c) total += std::exp(zr[c] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = zr[c] - lse;
  }
  return make_result("log_softmax", z.shape(), std::move(out), {z},
                     [m, n](Node& self) {
                       const auto& lp = self.value;
                       auto& g = self.inputs[0]->grad_buffer();
                       for (std::size_t r = 0; r < m; ++r) {
                         double total = 0.0;
                         for (std::size_t c = 0; c < n; ++c) {
                           total += self.grad[r * n + c];
                         }
                         for (std::size_t c = 0; c < n; ++c) {
                           g[r * n + c] += self.grad[r * n + c] -
                                           std::exp(lp[r * n + c]) * total;
                         }
                       }
                     });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.dim() != b.dim() || a.rows() != b.rows()) {
    shape_error("concat_cols", a, b);
  }
  const std::size_t m = a.rows(), ca = a.cols(), cb = b.cols();
  const auto& av = a.node_ptr()->value;
  const auto& bv = b.node_ptr()->value;
  std::vector<double> out(m * (ca + cb));
  for (std::size_t r = 0; r < m; ++r) {
    std::copy_n(av.data() + r * ca, ca, out.data() + r * (ca + cb));
    std::copy_n(bv.data() + r * cb, cb, out.data() + r * (ca + cb) + ca);
  }
  Shape shape = a.dim() == 1 ? Shape{ca + cb} : Shape{m, ca + cb};
  return make_result("concat_cols", std::move(shape), std::move(out), {a, b},
                     [m, ca, cb](Node& self) {
                       const std::size_t w = ca + cb;
                       if (wants_grad(self, 0)) {
                         auto& g = self.inputs[0]->grad_buffer();
                         for (std::size_t r = 0; r < m; ++r) {
                           for (std::size_t c = 0; c < ca; ++c) {
                             g[r * ca + c] += self.grad[r * w + c];
                           }
                         }
                       }
                       if (wants_grad(self, 1)) {
                         auto& g = self.inputs[1]->grad_buffer();
                         for (std::size_t r = 0; r < m; ++r) {
                           for (std::size_t c = 0; c < cb; ++c) {
                             g[r * cb + c] += self.grad[r * w + ca + c];
                           }
                         }
                       }
                     });
}

Tensor select_rows(const Tensor& prev, const Tensor& next,
                   std::span<const unsigned char> keep_next) {
  require_same_shape("select_rows", prev, next);
  const std::size_t m = prev.rows(), n = prev.cols();
  if (keep_next.size() != m) {
    throw DimensionError("select_rows: mask length " +
                         std::to_string(keep_next.size()) + " != rows " +
                         std::to_string(m));
  }
  std::vector<unsigned char> mask(keep_next.begin(), keep_next.end());
  const auto& pv = prev.node_ptr()->value;
  const auto& nv = next.node_ptr()->value;
  std::vector<double> out(prev.size());
  for (std::size_t r = 0; r < m; ++r) {
    const auto& src = mask[r] ? nv : pv;
    std::copy_n(src.data() + r * n, n, out.data() + r * n);
  }
  return make_result("select_rows", prev.shape(), std::move(out), {prev, next},
                     [m, n, mask = std::move(mask)](Node& self) {
                       for (std::size_t r = 0; r < m; ++r) {
                         const std::size_t j = mask[r] ? 1 : 0;
                         if (!wants_grad(self, j)) continue;
                         auto& g = self.inputs[j]->grad_buffer();
                         for (std::size_t c = 0; c < n; ++c) {
                           g[r * n + c] += self.grad[r * n + c];
                         }
                       }
                     });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  if (table.dim() != 2) throw DimensionError("embedding table must be 2-D");
  const std::size_t vocab = table.rows(), d = table.cols();
  std::vector<int> idx(ids.begin(), ids.end());
  const auto& tv = table.node_ptr()->value;
  std::vector<double> out(idx.size() * d);
  for (std::size_t t = 0; t < idx.size(); ++t) {
    if (idx[t] < 0 || static_cast<std::size_t>(idx[t]) >= vocab) {
      throw std::out_of_range("embedding: id " + std::to_string(idx[t]) +
                              " outside vocabulary of " +
                              std::to_string(vocab));
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(idx[t]) * d, d,
                out.data() + t * d);
  }
  const std::size_t t_len = idx.size();
  return make_result("embedding", {t_len, d}, std::move(out), {table},
                     [d, idx = std::move(idx)](Node& self) {
                       auto& g = self.inputs[0]->grad_buffer();
                       for (std::size_t t = 0; t < idx.size(); ++t) {
                         const std::size_t base =
                             static_cast<std::size_t>(idx[t]) * d;
                         for (std::size_t c = 0; c < d; ++c) {
                           g[base + c] += self.grad[t * d + c];
                         }
                       }
                     });
}

Tensor take_rows(const Tensor& x, std::size_t n_rows) {
  if (x.dim() != 2 || n_rows > x.rows()) {
    throw DimensionError("take_rows: cannot take " + std::to_string(n_rows) +
                         " rows of " + shape_string(x.shape()));
  }
  const std::size_t d = x.cols();
  std::vector<double> out(x.data().begin(), x.data().begin() + n_rows * d);
  return make_result("take_rows", {n_rows, d}, std::move(out), {x},
                     [](Node& self) {
                       auto& g = self.inputs[0]->grad_buffer();
                       for (std::size_t i = 0; i < self.grad.size(); ++i) {
                         g[i] += self.grad[i];
                       }
                     });
}

Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        std::size_t n_heads) {
  require_same_shape("causal_attention", q, k);
  require_same_shape("causal_attention", q, v);
  if (q.dim() != 2) throw DimensionError("causal_attention needs [T x d]");
  const std::size_t t_len = q.rows(), d = q.cols();
  if (n_heads == 0 || d % n_heads != 0) {
    throw DimensionError("causal_attention: d=" + std::to_string(d) +
                         " not divisible by heads=" + std::to_string(n_heads));
  }
  const std::size_t dh = d / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto T = static_cast<Eigen::Index>(t_len);
  const auto Dh = static_cast<Eigen::Index>(dh);
  auto qm = as_matrix(q.node_ptr()->value, t_len, d);
  auto km = as_matrix(k.node_ptr()->value, t_len, d);
  auto vm = as_matrix(v.node_ptr()->value, t_len, d);

  std::vector<double> out(t_len * d);
  auto om = as_matrix(out, t_len, d);
  // Attention weights per head, kept for the backward pass.
  std::vector<RowMat> probs(n_heads);
  for (std::size_t h = 0; h < n_heads; ++h) {
    const auto col = static_cast<Eigen::Index>(h * dh);
    RowMat s = (qm.middleCols(col, Dh) * km.middleCols(col, Dh).transpose()) *
               inv_sqrt;
    for (Eigen::Index i = 0; i < T; ++i) {
      const double mx = s.row(i).head(i + 1).maxCoeff();
      double total = 0.0;
      for (Eigen::Index j = 0; j <= i; ++j) {
        s(i, j) = std::exp(s(i, j) - mx);
        total += s(i, j);
      }
      for (Eigen::Index j = 0; j <= i; ++j) s(i, j) /= total;
      for (Eigen::Index j = i + 1; j < T; ++j) s(i, j) = 0.0;
    }
    om.middleCols(col, Dh).noalias() = s * vm.middleCols(col, Dh);
    probs[h] = std::move(s);
  }
  return make_result(
      "causal_attention", {t_len, d}, std::move(out), {q, k, v},
      [t_len, d, dh, n_heads, inv_sqrt, probs = std::move(probs)](Node& self) {
        const auto Dh = static_cast<Eigen::Index>(dh);
        auto g = as_matrix(std::as_const(self.grad), t_len, d);
        auto qm = as_matrix(std::as_const(self.inputs[0]->value), t_len, d);
        auto km = as_matrix(std::as_const(self.inputs[1]->value), t_len, d);
        auto vm = as_matrix(std::as_const(self.inputs[2]->value), t_len, d);
        for (std::size_t h = 0; h < n_heads; ++h) {
          const auto col = static_cast<Eigen::Index>(h * dh);
          const RowMat& p = probs[h];
          auto gh = g.middleCols(col, Dh);
          if (wants_grad(self, 2)) {
            as_matrix(self.inputs[2]->grad_buffer(), t_len, d)
                .middleCols(col, Dh)
                .noalias() += p.transpose() * gh;
          }
          if (!wants_grad(self, 0) && !wants_grad(self, 1)) continue;
          RowMat dp = gh * vm.middleCols(col, Dh).transpose();
          // Softmax Jacobian; masked entries have p == 0 and stay zero.
          const Eigen::VectorXd row_dot = (dp.cwiseProduct(p)).rowwise().sum();
          RowMat ds = p.cwiseProduct(dp.colwise() - row_dot) * inv_sqrt;
          if (wants_grad(self, 0)) {
            as_matrix(self.inputs[0]->grad_buffer(), t_len, d)
                .middleCols(col, Dh)
                .noalias() += ds * km.middleCols(col, Dh);
          }
          if (wants_grad(self, 1)) {
            as_matrix(self.inputs[1]->grad_buffer(), t_len, d)
                .middleCols(col, Dh)
                .noalias() += ds.transpose() * qm.middleCols(col, Dh);
          }
        }
      });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets) {
  const std::size_t m = logits.rows(), n = logits.cols();
  if (targets.size() != m) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(m) + " rows");
  }
  std::vector<int> tgt(targets.begin(), targets.end());
  const auto& zv = logits.node_ptr()->value;
  std::vector<double> probs(logits.size());
  double loss = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    if (tgt[r] < 0 || static_cast<std::size_t>(tgt[r]) >= n) {
      throw std::out_of_range("cross_entropy: target outside vocabulary");
    }
    const double* zr = zv.data() + r * n;
    double* p = probs.data() + r * n;
    const double mx = *std::max_element(zr, zr + n);
    double total = 0.0;
    for (std::size_t c = 0; c < n; ++c) total += (p[c] = std::exp(zr[c] - mx));
    for (std::size_t c = 0; c < n; ++c) p[c] /= total;
    loss -= zr[static_cast<std::size_t>(tgt[r])] - mx - std::log(total);
  }
  loss /= static_cast<double>(m);
  return make_result(
      "cross_entropy", {1}, {loss}, {logits},
      [m, n, tgt = std::move(tgt), probs = std::move(probs)](Node& self) {
        const double scale = self.grad[0] / static_cast<double>(m);
        auto& g = self.inputs[0]->grad_buffer();
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t c = 0; c < n; ++c) {
            g[r * n + c] += scale * probs[r * n + c];
          }
          g[r * n + static_cast<std::size_t>(tgt[r])] -= scale;
        }
      });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return make_result("sum", {1}, {total}, {x}, [](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (double& gi : g) gi += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor sum_squares(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v * v;
  return make_result("sum_squares", {1}, {total}, {x}, [](Node& self) {
    const auto& xv = self.inputs[0]->value;
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += 2.0 * xv[i] * self.grad[0];
    }
  });
}

Tensor weighted_sum(const Tensor& x, const Tensor& weights) {
  require_same_shape("weighted_sum", x, weights);
  std::vector<double> w(weights.data().begin(), weights.data().end());
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) total += x.data()[i] * w[i];
  return make_result("weighted_sum", {1}, {total}, {x},
                     [w = std::move(w)](Node& self) {
                       auto& g = self.inputs[0]->grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         g[i] += w[i] * self.grad[0];
                       }
                     });
}

}  // namespace loopscope::ops
