#include "metricnet/ops.h"

#include <cmath>
#include <complex>
#include <stdexcept>

#include "metricnet/errors.h"

namespace metricnet::ops {
namespace {

template <typename Real>
void require_same_shape(const Graph<Real>& g, Var a, Var b, const char* op) {
  if (g.shape(a) != g.shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     to_string(g.shape(a)) + " vs " + to_string(g.shape(b)));
  }
}

template <typename Real>
void require_rank(const Graph<Real>& g, Var a, std::size_t rank, const char* op) {
  if (g.shape(a).size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " +
                     std::to_string(rank) + ", got " + to_string(g.shape(a)));
  }
}

template <typename Real>
void require_vector(const Graph<Real>& g, Var a, std::size_t n, const char* op) {
  if (g.shape(a) != Shape{n}) {
    throw ShapeError(std::string(op) + ": expected [" + std::to_string(n) +
                     "], got " + to_string(g.shape(a)));
  }
}

struct Dims3 {
  std::size_t b, c, t;
};

template <typename Real>
Dims3 dims3(const Graph<Real>& g, Var x) {
  const auto& s = g.shape(x);
  return {s[0], s[1], s[2]};
}

}  // namespace

template <typename Real>
Var add(Graph<Real>& g, Var a, Var b) {
  require_same_shape(g, a, b, "add");
  auto va = g.value(a), vb = g.value(b);
  std::vector<Real> out(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] + vb[i];
  return g.emit("add", g.shape(a), std::move(out), {a, b},
                [a, b](Graph<Real>& gr, std::size_t id) {
                  auto dy = gr.out_grad(id);
                  for (Var p : {a, b}) {
                    if (!gr.requires_grad(p)) continue;
                    auto dp = gr.grad_slot(p);
                    for (std::size_t i = 0; i < dy.size(); ++i) dp[i] += dy[i];
                  }
                });
}

template <typename Real>
Var mul(Graph<Real>& g, Var a, Var b) {
  require_same_shape(g, a, b, "mul");
  auto va = g.value(a), vb = g.value(b);
  std::vector<Real> out(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * vb[i];
  return g.emit("mul", g.shape(a), std::move(out), {a, b},
                [a, b](Graph<Real>& gr, std::size_t id) {
                  auto dy = gr.out_grad(id);
                  auto va = gr.value(a), vb = gr.value(b);
                  if (gr.requires_grad(a)) {
                    auto da = gr.grad_slot(a);
                    for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * vb[i];
                  }
                  if (gr.requires_grad(b)) {
                    auto db = gr.grad_slot(b);
                    for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i] * va[i];
                  }
                });
}

template <typename Real>
Var scale(Graph<Real>& g, Var a, Real factor) {
  auto va = g.value(a);
  std::vector<Real> out(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = factor * va[i];
  return g.emit("scale", g.shape(a), std::move(out), {a},
                [a, factor](Graph<Real>& gr, std::size_t id) {
                  auto dy = gr.out_grad(id);
                  auto da = gr.grad_slot(a);
                  for (std::size_t i = 0; i < dy.size(); ++i) da[i] += factor * dy[i];
                });
}

template <typename Real>
Var sum(Graph<Real>& g, Var a) {
  Real s = 0;
  for (Real v : g.value(a)) s += v;
  return g.emit("sum", {1}, {s}, {a}, [a](Graph<Real>& gr, std::size_t id) {
    const Real dy = gr.out_grad(id)[0];
    for (Real& d : gr.grad_slot(a)) d += dy;
  });
}

template <typename Real>
Var log(Graph<Real>& g, Var a) {
  auto va = g.value(a);
  std::vector<Real> out(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(va[i] > 0)) throw NumericalError("log of non-positive value");
    out[i] = std::log(va[i]);
  }
  return g.emit("log", g.shape(a), std::move(out), {a},
                [a](Graph<Real>& gr, std::size_t id) {
                  auto dy = gr.out_grad(id);
                  auto va = gr.value(a);
                  auto da = gr.grad_slot(a);
                  for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] / va[i];
                });
}

template <typename Real>
Var abs_squared(Graph<Real>& g, Var re, Var im) {
  require_same_shape(g, re, im, "abs_squared");
  auto vr = g.value(re), vi = g.value(im);
  std::vector<Real> out(vr.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = vr[i] * vr[i] + vi[i] * vi[i];
  return g.emit("abs_squared", g.shape(re), std::move(out), {re, im},
                [re, im](Graph<Real>& gr, std::size_t id) {
                  auto dy = gr.out_grad(id);
                  for (Var p : {re, im}) {
                    if (!gr.requires_grad(p)) continue;
                    auto vp = gr.value(p);
                    auto dp = gr.grad_slot(p);
                    for (std::size_t i = 0; i < dy.size(); ++i) dp[i] += 2 * vp[i] * dy[i];
                  }
                });
}

template <typename Real>
Var mse_reduction(Graph<Real>& g, Var a, Var b) {
  require_same_shape(g, a, b, "mse_reduction");
  auto va = g.value(a), vb = g.value(b);
  const std::size_t n = va.size();
  Real s = 0;
  for (std::size_t i = 0; i < n; ++i) s += (va[i] - vb[i]) * (va[i] - vb[i]);
  return g.emit("mse_reduction", {1}, {s / static_cast<Real>(n)}, {a, b},
                [a, b, n](Graph<Real>& gr, std::size_t id) {
                  const Real dy = gr.out_grad(id)[0];
                  auto va = gr.value(a), vb = gr.value(b);
                  const Real k = 2 * dy / static_cast<Real>(n);
                  if (gr.requires_grad(a)) {
                    auto da = gr.grad_slot(a);
                    for (std::size_t i = 0; i < n; ++i) da[i] += k * (va[i] - vb[i]);
                  }
                  if (gr.requires_grad(b)) {
                    auto db = gr.grad_slot(b);
                    for (std::size_t i = 0; i < n; ++i) db[i] -= k * (va[i] - vb[i]);
                  }
                });
}

template <typename Real>
Var conv1d_pointwise(Graph<Real>& g, Var x, Var weight, Var bias) {
  require_rank(g, x, 3, "conv1d_pointwise");
  require_rank(g, weight, 2, "conv1d_pointwise");
  const auto [nb, cin, nt] = dims3(g, x);
  const std::size_t cout = g.shape(weight)[0];
  if (g.shape(weight)[1] != cin) {
    throw ShapeError("conv1d_pointwise: weight " + to_string(g.shape(weight)) +
                     " does not match input channels " + std::to_string(cin));
  }
  require_vector(g, bias, cout, "conv1d_pointwise bias");
  auto vx = g.value(x), vw = g.value(weight), vb = g.value(bias);
  std::vector<Real> out(nb * cout * nt);
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t o = 0; o < cout; ++o) {
      Real* y = out.data() + (b * cout + o) * nt;
      for (std::size_t t = 0; t < nt; ++t) y[t] = vb[o];
      for (std::size_t i = 0; i < cin; ++i) {
        const Real w = vw[o * cin + i];
        const Real* xi = vx.data() + (b * cin + i) * nt;
        for (std::size_t t = 0; t < nt; ++t) y[t] += w * xi[t];
      }
    }
  }
  return g.emit(
      "conv1d_pointwise", {nb, cout, nt}, std::move(out), {x, weight, bias},
      [=](Graph<Real>& gr, std::size_t id) {
        auto dy = gr.out_grad(id);
        auto vx = gr.value(x), vw = gr.value(weight);
        if (gr.requires_grad(x)) {
          auto dx = gr.grad_slot(x);
          for (std::size_t b = 0; b < nb; ++b) {
            for (std::size_t o = 0; o < cout; ++o) {
              const Real* gy = dy.data() + (b * cout + o) * nt;
              for (std::size_t i = 0; i < cin; ++i) {
                const Real w = vw[o * cin + i];
                Real* gx = dx.data() + (b * cin + i) * nt;
                for (std::size_t t = 0; t < nt; ++t) gx[t] += w * gy[t];
              }
            }
          }
        }
        if (gr.requires_grad(weight)) {
          auto dw = gr.grad_slot(weight);
          for (std::size_t b = 0; b < nb; ++b) {
            for (std::size_t o = 0; o < cout; ++o) {
              const Real* gy = dy.data() + (b * cout + o) * nt;
              for (std::size_t i = 0; i < cin; ++i) {
                const Real* xi = vx.data() + (b * cin + i) * nt;
                Real acc = 0;
                for (std::size_t t = 0; t < nt; ++t) acc += gy[t] * xi[t];
                dw[o * cin + i] += acc;
              }
            }
          }
        }
        if (gr.requires_grad(bias)) {
          auto db = gr.grad_slot(bias);
          for (std::size_t b = 0; b < nb; ++b) {
            for (std::size_t o = 0; o < cout; ++o) {
              const Real* gy = dy.data() + (b * cout + o) * nt;
              Real acc = 0;
              for (std::size_t t = 0; t < nt; ++t) acc += gy[t];
              db[o] += acc;
            }
          }
        }
      });
}

template <typename Real>
Var conv1d_depthwise_dilated(Graph<Real>& g, Var x, Var weight, Var bias,
                             int dilation) {
  require_rank(g, x, 3, "conv1d_depthwise_dilated");
  require_rank(g, weight, 2, "conv1d_depthwise_dilated");
  const auto [nb, nc, nt] = dims3(g, x);
  const std::size_t k = g.shape(weight)[1];
  if (g.shape(weight)[0] != nc || k % 2 == 0) {
    throw ShapeError("conv1d_depthwise_dilated: weight " +
                     to_string(g.shape(weight)) + " must be [" +
                     std::to_string(nc) + ", odd K]");
  }
  if (dilation < 1) throw ShapeError("conv1d_depthwise_dilated: dilation < 1");
  require_vector(g, bias, nc, "conv1d_depthwise_dilated bias");
  const long pad = static_cast<long>(dilation) * static_cast<long>(k - 1) / 2;
  const long T = static_cast<long>(nt);
  auto vx = g.value(x), vw = g.value(weight), vb = g.value(bias);
  std::vector<Real> out(nb * nc * nt);
  // y[t] = b + sum_j w[j] x[t + j*d - pad]
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t c = 0; c < nc; ++c) {
      const Real* xc = vx.data() + (b * nc + c) * nt;
      Real* y = out.data() + (b * nc + c) * nt;
      for (std::size_t t = 0; t < nt; ++t) y[t] = vb[c];
      for (std::size_t j = 0; j < k; ++j) {
        const Real w = vw[c * k + j];
        const long off = static_cast<long>(j) * dilation - pad;
        const long lo = std::max(0L, -off), hi = std::min(T, T - off);
        for (long t = lo; t < hi; ++t) y[t] += w * xc[t + off];
      }
    }
  }
  return g.emit(
      "conv1d_depthwise_dilated", {nb, nc, nt}, std::move(out), {x, weight, bias},
      [=](Graph<Real>& gr, std::size_t id) {
        auto dy = gr.out_grad(id);
        auto vx = gr.value(x), vw = gr.value(weight);
        const bool gx = gr.requires_grad(x), gw = gr.requires_grad(weight),
                   gb = gr.requires_grad(bias);
        std::span<Real> dx, dw, db;
        if (gx) dx = gr.grad_slot(x);
        if (gw) dw = gr.grad_slot(weight);
        if (gb) db = gr.grad_slot(bias);
        for (std::size_t b = 0; b < nb; ++b) {
          for (std::size_t c = 0; c < nc; ++c) {
            const std::size_t base = (b * nc + c) * nt;
            const Real* gy = dy.data() + base;
            const Real* xc = vx.data() + base;
            if (gb) {
              Real acc = 0;
              for (std::size_t t = 0; t < nt; ++t) acc += gy[t];
              db[c] += acc;
            }
            for (std::size_t j = 0; j < k; ++j) {
              const long off = static_cast<long>(j) * dilation - pad;
              const long lo = std::max(0L, -off), hi = std::min(T, T - off);
              if (gx) {
                const Real w = vw[c * k + j];
                Real* gxc = dx.data() + base;
                for (long t = lo; t < hi; ++t) gxc[t + off] += w * gy[t];
              }
              if (gw) {
                Real acc = 0;
                for (long t = lo; t < hi; ++t) acc += gy[t] * xc[t + off];
                dw[c * k + j] += acc;
              }
            }
          }
        }
      });
}

template <typename Real>
Var prelu(Graph<Real>& g, Var x, Var slope) {
  require_rank(g, x, 3, "prelu");
  const auto [nb, nc, nt] = dims3(g, x);
  require_vector(g, slope, nc, "prelu slope");
  auto vx = g.value(x), va = g.value(slope);
  std::vector<Real> out(vx.size());
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t c = 0; c < nc; ++c) {
      const std::size_t base = (b * nc + c) * nt;
      for (std::size_t t = 0; t < nt; ++t) {
        const Real v = vx[base + t];
        out[base + t] = v > 0 ? v : va[c] * v;
      }
    }
  }
  return g.emit("prelu", g.shape(x), std::move(out), {x, slope},
                [=](Graph<Real>& gr, std::size_t id) {
                  auto dy = gr.out_grad(id);
                  auto vx = gr.value(x), va = gr.value(slope);
                  const bool gx = gr.requires_grad(x), ga = gr.requires_grad(slope);
                  std::span<Real> dx, da;
                  if (gx) dx = gr.grad_slot(x);
                  if (ga) da = gr.grad_slot(slope);
                  for (std::size_t b = 0; b < nb; ++b) {
                    for (std::size_t c = 0; c < nc; ++c) {
                      const std::size_t base = (b * nc + c) * nt;
                      for (std::size_t t = 0; t < nt; ++t) {
                        const Real v = vx[base + t];
                        if (v > 0) {
                          if (gx) dx[base + t] += dy[base + t];
                        } else {
                          if (gx) dx[base + t] += va[c] * dy[base + t];
                          if (ga) da[c] += v * dy[base + t];
                        }
                      }
                    }
                  }
                });
}

template <typename Real>
Var batch_norm(Graph<Real>& g, Var x, Var gamma, Var beta,
               const BatchNormStats<Real>& stats, Mode mode) {
  require_rank(g, x, 3, "batch_norm");
  const auto [nb, nc, nt] = dims3(g, x);
  require_vector(g, gamma, nc, "batch_norm gamma");
  require_vector(g, beta, nc, "batch_norm beta");
  if (stats.running_mean == nullptr || stats.running_var == nullptr ||
      stats.running_mean->size() != nc || stats.running_var->size() != nc) {
    throw ShapeError("batch_norm: running statistics missing or mis-sized");
  }
  const std::size_t m = nb * nt;
  auto vx = g.value(x), vg = g.value(gamma), vbeta = g.value(beta);
  std::vector<Real> mean(nc), inv_std(nc);
  if (mode == Mode::kTrain) {
    std::vector<Real> new_mean(nc), new_var(nc);
    for (std::size_t c = 0; c < nc; ++c) {
      double s = 0, ss = 0;
      for (std::size_t b = 0; b < nb; ++b) {
        const Real* xc = vx.data() + (b * nc + c) * nt;
        for (std::size_t t = 0; t < nt; ++t) s += xc[t];
      }
      const double mu = s / static_cast<double>(m);
      for (std::size_t b = 0; b < nb; ++b) {
        const Real* xc = vx.data() + (b * nc + c) * nt;
        for (std::size_t t = 0; t < nt; ++t) ss += (xc[t] - mu) * (xc[t] - mu);
      }
      const double var = ss / static_cast<double>(m);
      mean[c] = static_cast<Real>(mu);
      inv_std[c] = static_cast<Real>(1.0 / std::sqrt(var + kNormEps));
      const double unbiased = m > 1 ? ss / static_cast<double>(m - 1) : var;
      const Real mom = stats.momentum;
      new_mean[c] = mom * stats.running_mean->values[c] + (1 - mom) * static_cast<Real>(mu);
      new_var[c] = mom * stats.running_var->values[c] + (1 - mom) * static_cast<Real>(unbiased);
    }
    g.queue_buffer_update(stats.mean_name, std::move(new_mean));
    g.queue_buffer_update(stats.var_name, std::move(new_var));
  } else {
    for (std::size_t c = 0; c < nc; ++c) {
      mean[c] = stats.running_mean->values[c];
      inv_std[c] = static_cast<Real>(
          1.0 / std::sqrt(static_cast<double>(stats.running_var->values[c]) + kNormEps));
    }
  }
  std::vector<Real> xhat(vx.size()), out(vx.size());
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t c = 0; c < nc; ++c) {
      const std::size_t base = (b * nc + c) * nt;
      for (std::size_t t = 0; t < nt; ++t) {
        xhat[base + t] = (vx[base + t] - mean[c]) * inv_std[c];
        out[base + t] = vg[c] * xhat[base + t] + vbeta[c];
      }
    }
  }
  const bool train = mode == Mode::kTrain;
  return g.emit(
      "batch_norm", g.shape(x), std::move(out), {x, gamma, beta},
      [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Graph<Real>& gr, std::size_t id) {
        auto dy = gr.out_grad(id);
        auto vg = gr.value(gamma);
        if (gr.requires_grad(gamma) || gr.requires_grad(beta)) {
          std::vector<Real> dgamma(nc, 0), dbeta(nc, 0);
          for (std::size_t b = 0; b < nb; ++b) {
            for (std::size_t c = 0; c < nc; ++c) {
              const std::size_t base = (b * nc + c) * nt;
              for (std::size_t t = 0; t < nt; ++t) {
                dgamma[c] += dy[base + t] * xhat[base + t];
                dbeta[c] += dy[base + t];
              }
            }
          }
          if (gr.requires_grad(gamma)) {
            auto d = gr.grad_slot(gamma);
            for (std::size_t c = 0; c < nc; ++c) d[c] += dgamma[c];
          }
          if (gr.requires_grad(beta)) {
            auto d = gr.grad_slot(beta);
            for (std::size_t c = 0; c < nc; ++c) d[c] += dbeta[c];
          }
        }
        if (!gr.requires_grad(x)) return;
        auto dx = gr.grad_slot(x);
        if (!train) {
          for (std::size_t b = 0; b < nb; ++b) {
            for (std::size_t c = 0; c < nc; ++c) {
              const std::size_t base = (b * nc + c) * nt;
              for (std::size_t t = 0; t < nt; ++t) {
                dx[base + t] += dy[base + t] * vg[c] * inv_std[c];
              }
            }
          }
          return;
        }
        // dx = inv_std/M * (M*dxhat - sum(dxhat) - xhat*sum(dxhat*xhat))
        for (std::size_t c = 0; c < nc; ++c) {
          Real s1 = 0, s2 = 0;
          for (std::size_t b = 0; b < nb; ++b) {
            const std::size_t base = (b * nc + c) * nt;
            for (std::size_t t = 0; t < nt; ++t) {
              const Real dxh = dy[base + t] * vg[c];
              s1 += dxh;
              s2 += dxh * xhat[base + t];
            }
          }
          const Real M = static_cast<Real>(m);
          for (std::size_t b = 0; b < nb; ++b) {
            const std::size_t base = (b * nc + c) * nt;
            for (std::size_t t = 0; t < nt; ++t) {
              const Real dxh = dy[base + t] * vg[c];
              dx[base + t] += inv_std[c] / M * (M * dxh - s1 - xhat[base + t] * s2);
            }
          }
        }
      });
}

template <typename Real>
Var global_layer_norm(Graph<Real>& g, Var x, Var gamma, Var beta) {
  require_rank(g, x, 3, "global_layer_norm");
  const auto [nb, nc, nt] = dims3(g, x);
  require_vector(g, gamma, nc, "global_layer_norm gamma");
  require_vector(g, beta, nc, "global_layer_norm beta");
  const std::size_t m = nc * nt;
  auto vx = g.value(x), vg = g.value(gamma), vbeta = g.value(beta);
  std::vector<Real> inv_std(nb), xhat(vx.size()), out(vx.size());
  for (std::size_t b = 0; b < nb; ++b) {
    const Real* xb = vx.data() + b * m;
    double s = 0, ss = 0;
    for (std::size_t i = 0; i < m; ++i) s += xb[i];
    const double mu = s / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i) ss += (xb[i] - mu) * (xb[i] - mu);
    inv_std[b] = static_cast<Real>(1.0 / std::sqrt(ss / static_cast<double>(m) + kNormEps));
    for (std::size_t c = 0; c < nc; ++c) {
      for (std::size_t t = 0; t < nt; ++t) {
        const std::size_t i = b * m + c * nt + t;
        xhat[i] = (vx[i] - static_cast<Real>(mu)) * inv_std[b];
        out[i] = vg[c] * xhat[i] + vbeta[c];
      }
    }
  }
  return g.emit(
      "global_layer_norm", g.shape(x), std::move(out), {x, gamma, beta},
      [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Graph<Real>& gr, std::size_t id) {
        auto dy = gr.out_grad(id);
        auto vg = gr.value(gamma);
        const bool gg = gr.requires_grad(gamma), gb = gr.requires_grad(beta),
                   gx = gr.requires_grad(x);
        std::span<Real> dgamma, dbeta, dx;
        if (gg) dgamma = gr.grad_slot(gamma);
        if (gb) dbeta = gr.grad_slot(beta);
        if (gx) dx = gr.grad_slot(x);
        const Real M = static_cast<Real>(m);
        for (std::size_t b = 0; b < nb; ++b) {
          Real s1 = 0, s2 = 0;
          for (std::size_t c = 0; c < nc; ++c) {
            for (std::size_t t = 0; t < nt; ++t) {
              const std::size_t i = b * m + c * nt + t;
              if (gg) dgamma[c] += dy[i] * xhat[i];
              if (gb) dbeta[c] += dy[i];
              const Real dxh = dy[i] * vg[c];
              s1 += dxh;
              s2 += dxh * xhat[i];
            }
          }
          if (!gx) continue;
          for (std::size_t c = 0; c < nc; ++c) {
            for (std::size_t t = 0; t < nt; ++t) {
              const std::size_t i = b * m + c * nt + t;
              const Real dxh = dy[i] * vg[c];
              dx[i] += inv_std[b] / M * (M * dxh - s1 - xhat[i] * s2);
            }
          }
        }
      });
}

template <typename Real>
Var softmax(Graph<Real>& g, Var x) {
  require_rank(g, x, 2, "softmax");
  const std::size_t nb = g.shape(x)[0], n = g.shape(x)[1];
  auto vx = g.value(x);
  std::vector<Real> out(vx.size());
  for (std::size_t b = 0; b < nb; ++b) {
    const Real* xb = vx.data() + b * n;
    Real* yb = out.data() + b * n;
    Real mx = xb[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, xb[i]);
    Real z = 0;
    for (std::size_t i = 0; i < n; ++i) z += (yb[i] = std::exp(xb[i] - mx));
    for (std::size_t i = 0; i < n; ++i) yb[i] /= z;
  }
  return g.emit("softmax", g.shape(x), std::move(out), {x},
                [x, nb, n](Graph<Real>& gr, std::size_t id) {
                  auto dy = gr.out_grad(id);
                  auto y = gr.value(Var{id});
                  auto dx = gr.grad_slot(x);
                  for (std::size_t b = 0; b < nb; ++b) {
                    Real dot = 0;
                    for (std::size_t i = 0; i < n; ++i) dot += dy[b * n + i] * y[b * n + i];
                    for (std::size_t i = 0; i < n; ++i) {
                      dx[b * n + i] += y[b * n + i] * (dy[b * n + i] - dot);
                    }
                  }
                });
}

template <typename Real>
Var mean_over_frames(Graph<Real>& g, Var x) {
  require_rank(g, x, 3, "mean_over_frames");
  const auto [nb, nc, nt] = dims3(g, x);
  if (nt == 0) throw ShapeError("mean_over_frames: no frames");
  auto vx = g.value(x);
  std::vector<Real> out(nb * nc);
  for (std::size_t i = 0; i < nb * nc; ++i) {
    Real s = 0;
    for (std::size_t t = 0; t < nt; ++t) s += vx[i * nt + t];
    out[i] = s / static_cast<Real>(nt);
  }
  return g.emit("mean_over_frames", {nb, nc}, std::move(out), {x},
                [x, nb, nc, nt](Graph<Real>& gr, std::size_t id) {
                  auto dy = gr.out_grad(id);
                  auto dx = gr.grad_slot(x);
                  for (std::size_t i = 0; i < nb * nc; ++i) {
                    const Real d = dy[i] / static_cast<Real>(nt);
                    for (std::size_t t = 0; t < nt; ++t) dx[i * nt + t] += d;
                  }
                });
}

template <typename Real>
std::pair<Var, Var> complex_mask_apply(Graph<Real>& g, Var mask_re, Var mask_im,
                                       Var spec_re, Var spec_im) {
  require_same_shape(g, mask_re, mask_im, "complex_mask_apply");
  require_same_shape(g, mask_re, spec_re, "complex_mask_apply");
  require_same_shape(g, spec_re, spec_im, "complex_mask_apply");
  auto mr = g.value(mask_re), mi = g.value(mask_im);
  auto yr = g.value(spec_re), yi = g.value(spec_im);
  const std::size_t n = mr.size();
  std::vector<Real> out_re(n), out_im(n);
  for (std::size_t i = 0; i < n; ++i) {
    out_re[i] = mr[i] * yr[i] - mi[i] * yi[i];
    out_im[i] = mr[i] * yi[i] + mi[i] * yr[i];
  }
  // d(re)/d(mr, mi, yr, yi) = (yr, -yi, mr, -mi)
  // d(im)/d(mr, mi, yr, yi) = (yi,  yr, mi,  mr)
  auto make_backward = [=](bool real_part) {
    return [=](Graph<Real>& gr, std::size_t id) {
      auto dy = gr.out_grad(id);
      auto mr = gr.value(mask_re), mi = gr.value(mask_im);
      auto yr = gr.value(spec_re), yi = gr.value(spec_im);
      const Real sgn = real_part ? Real(-1) : Real(1);
      auto accumulate = [&](Var p, std::span<const Real> coef, Real s) {
        if (!gr.requires_grad(p)) return;
        auto d = gr.grad_slot(p);
        for (std::size_t i = 0; i < n; ++i) d[i] += s * coef[i] * dy[i];
      };
      if (real_part) {
        accumulate(mask_re, yr, 1);
        accumulate(mask_im, yi, sgn);
        accumulate(spec_re, mr, 1);
        accumulate(spec_im, mi, sgn);
      } else {
        accumulate(mask_re, yi, 1);
        accumulate(mask_im, yr, 1);
        accumulate(spec_re, mi, 1);
        accumulate(spec_im, mr, 1);
      }
    };
  };
  const Var re = g.emit("complex_mask_apply", g.shape(mask_re), std::move(out_re),
                        {mask_re, mask_im, spec_re, spec_im}, make_backward(true));
  const Var im = g.emit("complex_mask_apply", g.shape(mask_re), std::move(out_im),
                        {mask_re, mask_im, spec_re, spec_im}, make_backward(false));
  return {re, im};
}

template <typename Real>
Var istft(Graph<Real>& g, Var re, Var im, const StftConfig& cfg) {
  cfg.validate();
  require_same_shape(g, re, im, "istft");
  require_rank(g, re, 3, "istft");
  const auto [nb, nf, nt] = dims3(g, re);
  if (nf != static_cast<std::size_t>(cfg.num_bins())) {
    throw ShapeError("istft: spectrogram has " + std::to_string(nf) +
                     " bins, config expects " + std::to_string(cfg.num_bins()));
  }
  const std::size_t len = cfg.synthesis_length(static_cast<int>(nt));
  const std::size_t hop = cfg.hop_len, wl = cfg.window_len;
  const auto win = cfg.window();
  const double gain = cfg.cola_gain();
  const RealDft dft(cfg.fft_len);
  auto vr = g.value(re), vi = g.value(im);
  std::vector<Real> out(nb * len, 0);
  std::vector<std::complex<double>> bins(nf);
  std::vector<double> frame(cfg.fft_len);
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t t = 0; t < nt; ++t) {
      for (std::size_t f = 0; f < nf; ++f) {
        const std::size_t i = (b * nf + f) * nt + t;
        bins[f] = {static_cast<double>(vr[i]), static_cast<double>(vi[i])};
      }
      dft.inverse(bins, frame);
      Real* y = out.data() + b * len + t * hop;
      for (std::size_t n = 0; n < wl; ++n) {
        y[n] += static_cast<Real>(win[n] * frame[n] / gain);
      }
    }
  }
  return g.emit(
      "istft", {nb, len}, std::move(out), {re, im},
      [=](Graph<Real>& gr, std::size_t id) {
        // Adjoint of the Hermitian inverse DFT: d/dRe X_k = c_k/N Re G_k and
        // d/dIm X_k = c_k/N Im G_k, G = forward DFT of the windowed output
        // gradient, c_k = 1 at DC/Nyquist (imag parts discarded there), else 2.
        auto dy = gr.out_grad(id);
        const bool gre = gr.requires_grad(re), gim = gr.requires_grad(im);
        std::span<Real> dre, dim;
        if (gre) dre = gr.grad_slot(re);
        if (gim) dim = gr.grad_slot(im);
        const RealDft dft(cfg.fft_len);
        const int n_fft = cfg.fft_len;
        std::vector<double> seg(n_fft, 0.0);
        std::vector<std::complex<double>> G(nf);
        for (std::size_t b = 0; b < nb; ++b) {
          for (std::size_t t = 0; t < nt; ++t) {
            const Real* gy = dy.data() + b * len + t * hop;
            for (std::size_t n = 0; n < wl; ++n) seg[n] = win[n] * gy[n] / gain;
            dft.forward(seg, G);
            for (std::size_t f = 0; f < nf; ++f) {
              const bool edge = f == 0 || (n_fft % 2 == 0 &&
                                           f == static_cast<std::size_t>(n_fft / 2));
              const double c = (edge ? 1.0 : 2.0) / n_fft;
              const std::size_t i = (b * nf + f) * nt + t;
              if (gre) dre[i] += static_cast<Real>(c * G[f].real());
              if (gim && !edge) dim[i] += static_cast<Real>(c * G[f].imag());
            }
          }
        }
      });
}

#define METRICNET_INSTANTIATE_OPS(R)                                              \
  template Var add<R>(Graph<R>&, Var, Var);                                       \
  template Var mul<R>(Graph<R>&, Var, Var);                                       \
  template Var scale<R>(Graph<R>&, Var, R);                                       \
  template Var sum<R>(Graph<R>&, Var);                                            \
  template Var log<R>(Graph<R>&, Var);                                            \
  template Var abs_squared<R>(Graph<R>&, Var, Var);                               \
  template Var mse_reduction<R>(Graph<R>&, Var, Var);                             \
  template Var conv1d_pointwise<R>(Graph<R>&, Var, Var, Var);                     \
  template Var conv1d_depthwise_dilated<R>(Graph<R>&, Var, Var, Var, int);        \
  template Var prelu<R>(Graph<R>&, Var, Var);                                     \
  template Var batch_norm<R>(Graph<R>&, Var, Var, Var, const BatchNormStats<R>&,  \
                             Mode);                                               \
  template Var global_layer_norm<R>(Graph<R>&, Var, Var, Var);                    \
  template Var softmax<R>(Graph<R>&, Var);                                        \
  template Var mean_over_frames<R>(Graph<R>&, Var);                               \
  template std::pair<Var, Var> complex_mask_apply<R>(Graph<R>&, Var, Var, Var,    \
                                                     Var);                        \
  template Var istft<R>(Graph<R>&, Var, Var, const StftConfig&);

METRICNET_INSTANTIATE_OPS(float)
METRICNET_INSTANTIATE_OPS(double)

#undef METRICNET_INSTANTIATE_OPS

}  // namespace metricnet::ops
