#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "msclip/errors.hpp"

namespace msclip::nn {

template <class S>
struct TensorT {
  std::vector<std::size_t> shape;
  std::vector<S> v;

  static TensorT zeros(std::vector<std::size_t> shape) {
    TensorT t;
    t.shape = std::move(shape);
    t.v.assign(t.numel_of_shape(), S(0));
    return t;
  }
  static TensorT scalar(S value) {
    TensorT t;
    t.shape = {1};
    t.v = {value};
    return t;
  }

  std::size_t numel() const { return v.size(); }
  std::size_t numel_of_shape() const {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<>());
  }
  // Matrix view folds trailing dims into the column extent.
  std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
  std::size_t cols() const { return rows() == 0 ? 0 : numel() / rows(); }

  template <class T>
  TensorT<T> cast() const {
    TensorT<T> out;
    out.shape = shape;
    out.v.resize(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      out.v[i] = static_cast<T>(v[i]);
    }
    return out;
  }

  bool all_finite() const {
    for (S x : v) {
      if (!std::isfinite(static_cast<double>(x))) return false;
    }
    return true;
  }
};

using Tensor = TensorT<double>;

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape over dense row-major tensors. One graph per step;
// leaves hold parameter copies, backward() fills their grads.
template <class S>
class GraphT {
 public:
  using EMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Map = Eigen::Map<EMat>;
  using CMap = Eigen::Map<const EMat>;
  using Backward = std::function<void(GraphT&, int)>;

  explicit GraphT(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }

  Var leaf(TensorT<S> value, bool requires_grad = true) {
    return push(std::move(value), {}, nullptr, requires_grad && recording_);
  }

  template <class T>
  Var leaf_cast(const TensorT<T>& value, bool requires_grad = true) {
    return leaf(value.template cast<S>(), requires_grad);
  }

  Var constant(TensorT<S> value) { return leaf(std::move(value), false); }

  const TensorT<S>& value(Var x) const { return nodes_[node_index(x)].value; }

  TensorT<S>& grad(Var x) {
    Node& n = nodes_[node_index(x)];
    if (n.grad.v.empty()) n.grad = TensorT<S>::zeros(n.value.shape);
    return n.grad;
  }

  // --- ops -------------------------------------------------------------

  Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false) {
    const auto& A = value(a);
    const auto& B = value(b);
    const std::size_t am = trans_a ? A.cols() : A.rows();
    const std::size_t ak = trans_a ? A.rows() : A.cols();
    const std::size_t bk = trans_b ? B.cols() : B.rows();
    const std::size_t bn = trans_b ? B.rows() : B.cols();
    if (ak != bk) {
      throw ShapeMismatchError("matmul inner dims " + std::to_string(ak) +
                               " vs " + std::to_string(bk));
    }
    if (trans_a && trans_b) {
      throw ShapeMismatchError("matmul with both operands transposed");
    }
    TensorT<S> out = TensorT<S>::zeros({am, bn});
    {
      CMap Am(A.v.data(), A.rows(), A.cols());
      CMap Bm(B.v.data(), B.rows(), B.cols());
      Map Om(out.v.data(), am, bn);
      if (!trans_a && !trans_b) {
        Om.noalias() = Am * Bm;
      } else if (trans_a) {
        Om.noalias() = Am.transpose() * Bm;
      } else {
        Om.noalias() = Am * Bm.transpose();
      }
    }
    return push(std::move(out), {a, b},
                [a, b, trans_a, trans_b](GraphT& g, int self) {
                  const auto& A = g.value(a);
                  const auto& B = g.value(b);
                  const auto& G = g.nodes_[self].grad;
                  CMap Am(A.v.data(), A.rows(), A.cols());
                  CMap Bm(B.v.data(), B.rows(), B.cols());
                  CMap Gm(G.v.data(), G.rows(), G.cols());
                  if (g.wants_grad(a)) {
                    auto& dA = g.grad(a);
                    Map dAm(dA.v.data(), A.rows(), A.cols());
                    if (!trans_a && !trans_b) {
                      dAm.noalias() += Gm * Bm.transpose();
                    } else if (trans_a) {
                      dAm.noalias() += Bm * Gm.transpose();
                    } else {
                      dAm.noalias() += Gm * Bm;
                    }
                  }
                  if (g.wants_grad(b)) {
                    auto& dB = g.grad(b);
                    Map dBm(dB.v.data(), B.rows(), B.cols());
                    if (!trans_a && !trans_b) {
                      dBm.noalias() += Am.transpose() * Gm;
                    } else if (trans_a) {
                      dBm.noalias() += Am * Gm;
                    } else {
                      dBm.noalias() += Gm.transpose() * Am;
                    }
                  }
                });
  }

  Var add(Var a, Var b) {
    const auto& A = value(a);
    const auto& B = value(b);
    if (A.shape != B.shape) throw ShapeMismatchError("add operand shapes");
    TensorT<S> out = A;
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += B.v[i];
    return push(std::move(out), {a, b}, [a, b](GraphT& g, int self) {
      const auto& G = g.nodes_[self].grad;
      for (Var p : {a, b}) {
        if (!g.wants_grad(p)) continue;
        auto& dP = g.grad(p);
        for (std::size_t i = 0; i < G.v.size(); ++i) dP.v[i] += G.v[i];
      }
    });
  }

  Var add_row_bias(Var x, Var bias) {
    const auto& X = value(x);
    const auto& B = value(bias);
    if (B.numel() != X.cols()) {
      throw ShapeMismatchError("bias length vs row width");
    }
    TensorT<S> out = X;
    const std::size_t n = X.cols();
    for (std::size_t r = 0; r < X.rows(); ++r) {
      for (std::size_t c = 0; c < n; ++c) out.v[r * n + c] += B.v[c];
    }
    return push(std::move(out), {x, bias}, [x, bias](GraphT& g, int self) {
      const auto& G = g.nodes_[self].grad;
      const std::size_t n = G.cols();
      if (g.wants_grad(x)) {
        auto& dX = g.grad(x);
        for (std::size_t i = 0; i < G.v.size(); ++i) dX.v[i] += G.v[i];
      }
      if (g.wants_grad(bias)) {
        auto& dB = g.grad(bias);
        for (std::size_t r = 0; r < G.rows(); ++r) {
          for (std::size_t c = 0; c < n; ++c) dB.v[c] += G.v[r * n + c];
        }
      }
    });
  }

  // x: [n_rep*T, D], block: [T, D]; adds block to every T-row group.
  Var add_broadcast_block(Var x, Var block, std::size_t n_rep) {
    const auto& X = value(x);
    const auto& B = value(block);
    if (X.rows() != n_rep * B.rows() || X.cols() != B.cols()) {
      throw ShapeMismatchError("broadcast block extent");
    }
    TensorT<S> out = X;
    const std::size_t t = B.rows();
    const std::size_t d = B.cols();
    for (std::size_t rep = 0; rep < n_rep; ++rep) {
      for (std::size_t i = 0; i < t * d; ++i) {
        out.v[rep * t * d + i] += B.v[i];
      }
    }
    return push(std::move(out), {x, block},
                [x, block, n_rep, t, d](GraphT& g, int self) {
                  const auto& G = g.nodes_[self].grad;
                  if (g.wants_grad(x)) {
                    auto& dX = g.grad(x);
                    for (std::size_t i = 0; i < G.v.size(); ++i) {
                      dX.v[i] += G.v[i];
                    }
                  }
                  if (g.wants_grad(block)) {
                    auto& dB = g.grad(block);
                    for (std::size_t rep = 0; rep < n_rep; ++rep) {
                      for (std::size_t i = 0; i < t * d; ++i) {
                        dB.v[i] += G.v[rep * t * d + i];
                      }
                    }
                  }
                });
  }

  // token: [1, D]; x: [n*rows_per, D] -> [n*(rows_per+1), D] with the token
  // first in every group.
  Var prepend_row_per_sample(Var token, Var x, std::size_t n) {
    const auto& Tk = value(token);
    const auto& X = value(x);
    if (Tk.rows() != 1 || Tk.cols() != X.cols() || X.rows() % n != 0) {
      throw ShapeMismatchError("class-token prepend extents");
    }
    const std::size_t per = X.rows() / n;
    const std::size_t d = X.cols();
    TensorT<S> out = TensorT<S>::zeros({n * (per + 1), d});
    for (std::size_t s = 0; s < n; ++s) {
      S* dst = out.v.data() + s * (per + 1) * d;
      for (std::size_t c = 0; c < d; ++c) dst[c] = Tk.v[c];
      const S* src = X.v.data() + s * per * d;
      std::copy(src, src + per * d, dst + d);
    }
    return push(std::move(out), {token, x},
                [token, x, n, per, d](GraphT& g, int self) {
                  const auto& G = g.nodes_[self].grad;
                  if (g.wants_grad(token)) {
                    auto& dT = g.grad(token);
                    for (std::size_t s = 0; s < n; ++s) {
                      const S* gp = G.v.data() + s * (per + 1) * d;
                      for (std::size_t c = 0; c < d; ++c) dT.v[c] += gp[c];
                    }
                  }
                  if (g.wants_grad(x)) {
                    auto& dX = g.grad(x);
                    for (std::size_t s = 0; s < n; ++s) {
                      const S* gp = G.v.data() + (s * (per + 1) + 1) * d;
                      S* dp = dX.v.data() + s * per * d;
                      for (std::size_t i = 0; i < per * d; ++i) dp[i] += gp[i];
                    }
                  }
                });
  }

  Var scale(Var x, S c) {
    TensorT<S> out = value(x);
    for (auto& e : out.v) e *= c;
    return push(std::move(out), {x}, [x, c](GraphT& g, int self) {
      if (!g.wants_grad(x)) return;
      const auto& G = g.nodes_[self].grad;
      auto& dX = g.grad(x);
      for (std::size_t i = 0; i < G.v.size(); ++i) dX.v[i] += c * G.v[i];
    });
  }

  Var gelu(Var x) {
    const auto& X = value(x);
    TensorT<S> out = X;
    constexpr double kInvSqrt2 = 0.70710678118654752440;
    for (auto& e : out.v) {
      const double xe = static_cast<double>(e);
      e = static_cast<S>(0.5 * xe * (1.0 + std::erf(xe * kInvSqrt2)));
    }
    return push(std::move(out), {x}, [x](GraphT& g, int self) {
      if (!g.wants_grad(x)) return;
      const auto& X = g.value(x);
      const auto& G = g.nodes_[self].grad;
      auto& dX = g.grad(x);
      constexpr double kInvSqrt2 = 0.70710678118654752440;
      constexpr double kInvSqrt2Pi = 0.39894228040143267794;
      for (std::size_t i = 0; i < X.v.size(); ++i) {
        const double xe = static_cast<double>(X.v[i]);
        const double phi = 0.5 * (1.0 + std::erf(xe * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * xe * xe);
        dX.v[i] += static_cast<S>((phi + xe * pdf) *
                                  static_cast<double>(G.v[i]));
      }
    });
  }

  Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5) {
    const auto& X = value(x);
    const auto& Gm = value(gamma);
    const auto& Bt = value(beta);
    const std::size_t n = X.cols();
    if (Gm.numel() != n || Bt.numel() != n) {
      throw ShapeMismatchError("layer-norm gain/bias width");
    }
    TensorT<S> out = TensorT<S>::zeros(X.shape);
    for (std::size_t r = 0; r < X.rows(); ++r) {
      const S* xr = X.v.data() + r * n;
      S* yr = out.v.data() + r * n;
      double mean = 0.0;
      for (std::size_t c = 0; c < n; ++c) mean += static_cast<double>(xr[c]);
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (std::size_t c = 0; c < n; ++c) {
        const double d = static_cast<double>(xr[c]) - mean;
        var += d * d;
      }
      var /= static_cast<double>(n);
      const double inv = 1.0 / std::sqrt(var + eps);
      for (std::size_t c = 0; c < n; ++c) {
        const double xhat = (static_cast<double>(xr[c]) - mean) * inv;
        yr[c] = static_cast<S>(xhat * static_cast<double>(Gm.v[c]) +
                               static_cast<double>(Bt.v[c]));
      }
    }
    return push(std::move(out), {x, gamma, beta},
                [x, gamma, beta, eps](GraphT& g, int self) {
                  const auto& X = g.value(x);
                  const auto& Gm = g.value(gamma);
                  const auto& G = g.nodes_[self].grad;
                  const std::size_t n = X.cols();
                  const bool wx = g.wants_grad(x);
                  const bool wg = g.wants_grad(gamma);
                  const bool wb = g.wants_grad(beta);
                  for (std::size_t r = 0; r < X.rows(); ++r) {
                    const S* xr = X.v.data() + r * n;
                    const S* gr = G.v.data() + r * n;
                    double mean = 0.0;
                    for (std::size_t c = 0; c < n; ++c) {
                      mean += static_cast<double>(xr[c]);
                    }
                    mean /= static_cast<double>(n);
                    double var = 0.0;
                    for (std::size_t c = 0; c < n; ++c) {
                      const double d = static_cast<double>(xr[c]) - mean;
                      var += d * d;
                    }
                    var /= static_cast<double>(n);
                    const double inv = 1.0 / std::sqrt(var + eps);
                    if (wg || wb) {
                      auto& dG = g.grad(gamma);
                      auto& dB = g.grad(beta);
                      for (std::size_t c = 0; c < n; ++c) {
                        const double xhat =
                            (static_cast<double>(xr[c]) - mean) * inv;
                        if (wg) {
                          dG.v[c] += static_cast<S>(
                              xhat * static_cast<double>(gr[c]));
                        }
                        if (wb) dB.v[c] += gr[c];
                      }
                    }
                    if (wx) {
                      auto& dX = g.grad(x);
                      S* dxr = dX.v.data() + r * n;
                      double sum_gy = 0.0;
                      double sum_gyx = 0.0;
                      for (std::size_t c = 0; c < n; ++c) {
                        const double gy = static_cast<double>(gr[c]) *
                                          static_cast<double>(Gm.v[c]);
                        const double xhat =
                            (static_cast<double>(xr[c]) - mean) * inv;
                        sum_gy += gy;
                        sum_gyx += gy * xhat;
                      }
                      const double invn = 1.0 / static_cast<double>(n);
                      for (std::size_t c = 0; c < n; ++c) {
                        const double gy = static_cast<double>(gr[c]) *
                                          static_cast<double>(Gm.v[c]);
                        const double xhat =
                            (static_cast<double>(xr[c]) - mean) * inv;
                        dxr[c] += static_cast<S>(
                            inv * (gy - invn * sum_gy - xhat * invn * sum_gyx));
                      }
                    }
                  }
                });
  }

  Var embedding_lookup(Var table, std::shared_ptr<const std::vector<int>> ids) {
    const auto& Tb = value(table);
    const std::size_t d = Tb.cols();
    for (int id : *ids) {
      if (id < 0 || static_cast<std::size_t>(id) >= Tb.rows()) {
        throw TokenOutOfRangeError(std::to_string(id) + " for table of " +
                                   std::to_string(Tb.rows()));
      }
    }
    TensorT<S> out = TensorT<S>::zeros({ids->size(), d});
    for (std::size_t r = 0; r < ids->size(); ++r) {
      const S* src = Tb.v.data() + static_cast<std::size_t>((*ids)[r]) * d;
      std::copy(src, src + d, out.v.data() + r * d);
    }
    return push(std::move(out), {table}, [table, ids, d](GraphT& g, int self) {
      if (!g.wants_grad(table)) return;
      const auto& G = g.nodes_[self].grad;
      auto& dT = g.grad(table);
      for (std::size_t r = 0; r < ids->size(); ++r) {
        S* dst = dT.v.data() + static_cast<std::size_t>((*ids)[r]) * d;
        const S* src = G.v.data() + r * d;
        for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
      }
    });
  }

  Var gather_rows(Var x, std::shared_ptr<const std::vector<std::size_t>> rows) {
    const auto& X = value(x);
    const std::size_t d = X.cols();
    for (std::size_t r : *rows) {
      if (r >= X.rows()) throw ShapeMismatchError("gather row out of range");
    }
    TensorT<S> out = TensorT<S>::zeros({rows->size(), d});
    for (std::size_t r = 0; r < rows->size(); ++r) {
      const S* src = X.v.data() + (*rows)[r] * d;
      std::copy(src, src + d, out.v.data() + r * d);
    }
    return push(std::move(out), {x}, [x, rows, d](GraphT& g, int self) {
      if (!g.wants_grad(x)) return;
      const auto& G = g.nodes_[self].grad;
      auto& dX = g.grad(x);
      for (std::size_t r = 0; r < rows->size(); ++r) {
        S* dst = dX.v.data() + (*rows)[r] * d;
        const S* src = G.v.data() + r * d;
        for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
      }
    });
  }

  // Multi-head scaled dot-product attention over per-sample token groups.
  // q, k, v: [n*t, d]; heads divides d. Causal masks position i to keys
  // j <= i within its sample.
  Var attention(Var q, Var k, Var v, std::size_t n, std::size_t heads,
                bool causal) {
    const auto& Q = value(q);
    const auto& K = value(k);
    const auto& V = value(v);
    if (Q.shape != K.shape || Q.shape != V.shape || Q.rows() % n != 0 ||
        Q.cols() % heads != 0) {
      throw ShapeMismatchError("attention operand extents");
    }
    const std::size_t t = Q.rows() / n;
    const std::size_t d = Q.cols();
    const std::size_t dh = d / heads;
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));

    TensorT<S> out = TensorT<S>::zeros(Q.shape);
    auto probs = std::make_shared<TensorT<S>>();
    if (recording_) *probs = TensorT<S>::zeros({n * heads, t * t});

    std::vector<double> srow(t);
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t h = 0; h < heads; ++h) {
        CMap Qm(Q.v.data() + s * t * d, t, d);
        CMap Km(K.v.data() + s * t * d, t, d);
        CMap Vm(V.v.data() + s * t * d, t, d);
        Map Om(out.v.data() + s * t * d, t, d);
        EMat scores(t, t);
        scores.noalias() = Qm.middleCols(h * dh, dh) *
                           Km.middleCols(h * dh, dh).transpose();
        EMat P = EMat::Zero(t, t);
        for (std::size_t i = 0; i < t; ++i) {
          const std::size_t jmax = causal ? i + 1 : t;
          double mx = -1e300;
          for (std::size_t j = 0; j < jmax; ++j) {
            srow[j] = static_cast<double>(scores(i, j)) * inv_scale;
            mx = std::max(mx, srow[j]);
          }
          double denom = 0.0;
          for (std::size_t j = 0; j < jmax; ++j) {
            srow[j] = std::exp(srow[j] - mx);
            denom += srow[j];
          }
          for (std::size_t j = 0; j < jmax; ++j) {
            P(i, j) = static_cast<S>(srow[j] / denom);
          }
        }
        Om.middleCols(h * dh, dh).noalias() = P * Vm.middleCols(h * dh, dh);
        if (recording_) {
          Map Pm(probs->v.data() + (s * heads + h) * t * t, t, t);
          Pm = P;
        }
      }
    }

    return push(std::move(out), {q, k, v},
                [q, k, v, probs, n, heads, t, d, dh,
                 inv_scale](GraphT& g, int self) {
                  const auto& Q = g.value(q);
                  const auto& K = g.value(k);
                  const auto& V = g.value(v);
                  const auto& G = g.nodes_[self].grad;
                  auto& dQ = g.grad(q);
                  auto& dK = g.grad(k);
                  auto& dV = g.grad(v);
                  for (std::size_t s = 0; s < n; ++s) {
                    CMap Qm(Q.v.data() + s * t * d, t, d);
                    CMap Km(K.v.data() + s * t * d, t, d);
                    CMap Vm(V.v.data() + s * t * d, t, d);
                    CMap Gm(G.v.data() + s * t * d, t, d);
                    Map dQm(dQ.v.data() + s * t * d, t, d);
                    Map dKm(dK.v.data() + s * t * d, t, d);
                    Map dVm(dV.v.data() + s * t * d, t, d);
                    for (std::size_t h = 0; h < heads; ++h) {
                      CMap Pm(probs->v.data() + (s * heads + h) * t * t, t, t);
                      EMat dOut = Gm.middleCols(h * dh, dh);
                      EMat dP(t, t);
                      dP.noalias() =
                          dOut * Vm.middleCols(h * dh, dh).transpose();
                      dVm.middleCols(h * dh, dh).noalias() +=
                          Pm.transpose() * dOut;
                      // dS = P .* (dP - rowsum(dP .* P)); masked entries have
                      // P = 0 so they drop out on their own.
                      EMat dS(t, t);
                      for (std::size_t i = 0; i < t; ++i) {
                        double dot = 0.0;
                        for (std::size_t j = 0; j < t; ++j) {
                          dot += static_cast<double>(dP(i, j)) *
                                 static_cast<double>(Pm(i, j));
                        }
                        for (std::size_t j = 0; j < t; ++j) {
                          dS(i, j) = static_cast<S>(
                              static_cast<double>(Pm(i, j)) *
                              (static_cast<double>(dP(i, j)) - dot) *
                              inv_scale);
                        }
                      }
                      dQm.middleCols(h * dh, dh).noalias() +=
                          dS * Km.middleCols(h * dh, dh);
                      dKm.middleCols(h * dh, dh).noalias() +=
                          dS.transpose() * Qm.middleCols(h * dh, dh);
                    }
                  }
                });
  }

  Var l2_normalize_rows(Var x) {
    const auto& X = value(x);
    const std::size_t n = X.cols();
    TensorT<S> out = X;
    for (std::size_t r = 0; r < X.rows(); ++r) {
      S* yr = out.v.data() + r * n;
      double sq = 0.0;
      for (std::size_t c = 0; c < n; ++c) {
        sq += static_cast<double>(yr[c]) * static_cast<double>(yr[c]);
      }
      const double inv = 1.0 / std::max(std::sqrt(sq), 1e-12);
      for (std::size_t c = 0; c < n; ++c) {
        yr[c] = static_cast<S>(static_cast<double>(yr[c]) * inv);
      }
    }
    return push(std::move(out), {x}, [x](GraphT& g, int self) {
      if (!g.wants_grad(x)) return;
      const auto& X = g.value(x);
      const auto& Y = g.nodes_[self].value;
      const auto& G = g.nodes_[self].grad;
      auto& dX = g.grad(x);
      const std::size_t n = X.cols();
      for (std::size_t r = 0; r < X.rows(); ++r) {
        const S* xr = X.v.data() + r * n;
        const S* yr = Y.v.data() + r * n;
        const S* gr = G.v.data() + r * n;
        S* dxr = dX.v.data() + r * n;
        double sq = 0.0;
        double dot = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
          sq += static_cast<double>(xr[c]) * static_cast<double>(xr[c]);
          dot += static_cast<double>(yr[c]) * static_cast<double>(gr[c]);
        }
        const double inv = 1.0 / std::max(std::sqrt(sq), 1e-12);
        for (std::size_t c = 0; c < n; ++c) {
          dxr[c] += static_cast<S>(
              (static_cast<double>(gr[c]) -
               static_cast<double>(yr[c]) * dot) *
              inv);
        }
      }
    });
  }

  // Escape hatch for composite nodes (e.g. a loss attached by another
  // module).
  Var make_node(TensorT<S> value, std::vector<Var> parents, Backward back) {
    return push(std::move(value), std::move(parents), std::move(back));
  }

  void backward(Var loss) {
    if (!recording_) {
      throw InvalidConfigError("backward on a non-recording graph");
    }
    Node& top = nodes_[node_index(loss)];
    if (top.value.numel() != 1) {
      throw ShapeMismatchError("backward from a non-scalar node");
    }
    grad(loss).v[0] = S(1);
    for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
      Node& node = nodes_[static_cast<std::size_t>(id)];
      if (!node.requires_grad || !node.back) continue;
      if (node.grad.v.empty()) continue;  // never reached from the loss
      node.back(*this, id);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    TensorT<S> value;
    TensorT<S> grad;
    std::vector<int> parents;
    Backward back;
    bool requires_grad = false;
  };

  std::size_t node_index(Var x) const {
    if (!x.valid() || static_cast<std::size_t>(x.id) >= nodes_.size()) {
      throw InvalidConfigError("variable does not belong to this graph");
    }
    return static_cast<std::size_t>(x.id);
  }

  bool wants_grad(Var x) const { return nodes_[node_index(x)].requires_grad; }

  Var push(TensorT<S> value, std::vector<Var> parents, Backward back,
           bool leaf_requires_grad = false) {
    Node node;
    node.value = std::move(value);
    bool req = leaf_requires_grad;
    for (Var p : parents) {
      node.parents.push_back(p.id);
      req = req || nodes_[node_index(p)].requires_grad;
    }
    node.requires_grad = req && recording_;
    if (node.requires_grad && back) node.back = std::move(back);
    nodes_.push_back(std::move(node));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<Node> nodes_;
  bool recording_;
};

using Graph = GraphT<double>;

}  // namespace msclip::nn
