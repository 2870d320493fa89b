#pragma once

#include <Eigen/Core>
#include <cmath>
#include <vector>

#include "tinyvio/tensor.hpp"

// Layer primitives with explicit forward/backward passes. The network in
// vionet.hpp is a fixed stack, so instead of a general autodiff graph each
// op caches what its backward needs and the caller chains them in reverse.
// Everything is double precision; convolutions go through im2col and Eigen
// GEMMs.

namespace tinyvio::nn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

// ---------------------------------------------------------------------------
// conv2d, stride s, symmetric zero padding p, no bias (BN follows)

struct Conv2dCache {
  Tensor col;  // [B, Ci*kh*kw, Ho*Wo]
  int in_h = 0, in_w = 0;
};

inline int conv_out_dim(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

inline void im2col(const double* x, int ci, int h, int w, int k, int stride, int pad,
                   double* col) {
  const int ho = conv_out_dim(h, k, stride, pad);
  const int wo = conv_out_dim(w, k, stride, pad);
  // col layout: [ci*k*k, ho*wo]
  for (int c = 0; c < ci; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* row = col + ((c * k + ky) * k + kx) * (ho * wo);
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) {
            for (int ox = 0; ox < wo; ++ox) row[oy * wo + ox] = 0.0;
            continue;
          }
          const double* src = x + (c * h + iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            row[oy * wo + ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

inline void col2im_add(const double* col, int ci, int h, int w, int k, int stride, int pad,
                       double* x) {
  const int ho = conv_out_dim(h, k, stride, pad);
  const int wo = conv_out_dim(w, k, stride, pad);
  for (int c = 0; c < ci; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* row = col + ((c * k + ky) * k + kx) * (ho * wo);
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          double* dst = x + (c * h + iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) dst[ix] += row[oy * wo + ox];
          }
        }
      }
    }
  }
}

// x [B,Ci,H,W], w [Co,Ci,k,k] -> y [B,Co,Ho,Wo]
inline Tensor conv2d_forward(const Tensor& x, const Tensor& w, int stride, int pad,
                             Conv2dCache* cache = nullptr) {
  const int b = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int co = w.dim(0), k = w.dim(2);
  require(w.dim(1) == ci, "conv2d: channel mismatch");
  const int ho = conv_out_dim(h, k, stride, pad);
  const int wo = conv_out_dim(wd, k, stride, pad);
  const int kk = ci * k * k;
  Tensor y({b, co, ho, wo});
  Tensor col({b, kk, ho * wo});
  ConstMapMat wm(w.data(), co, kk);
  for (int i = 0; i < b; ++i) {
    double* colb = col.data() + static_cast<std::size_t>(i) * kk * ho * wo;
    im2col(x.data() + static_cast<std::size_t>(i) * ci * h * wd, ci, h, wd, k, stride, pad, colb);
    MapMat ym(y.data() + static_cast<std::size_t>(i) * co * ho * wo, co, ho * wo);
    ym.noalias() = wm * ConstMapMat(colb, kk, ho * wo);
  }
  if (cache) {
    cache->col = std::move(col);
    cache->in_h = h;
    cache->in_w = wd;
  }
  return y;
}

// dy [B,Co,Ho,Wo] -> dx [B,Ci,H,W] (if dx != nullptr), dw accumulated in place
inline void conv2d_backward(const Conv2dCache& cache, const Tensor& w, const Tensor& dy,
                            int stride, int pad, Tensor* dx, Tensor* dw) {
  const int b = dy.dim(0), co = dy.dim(1), ho = dy.dim(2), wo = dy.dim(3);
  const int ci = w.dim(1), k = w.dim(2);
  const int kk = ci * k * k;
  ConstMapMat wm(w.data(), co, kk);
  if (dx) {
    *dx = Tensor({b, ci, cache.in_h, cache.in_w});
  }
  Tensor dcol({kk, ho * wo});
  for (int i = 0; i < b; ++i) {
    ConstMapMat dym(dy.data() + static_cast<std::size_t>(i) * co * ho * wo, co, ho * wo);
    ConstMapMat colb(cache.col.data() + static_cast<std::size_t>(i) * kk * ho * wo, kk, ho * wo);
    if (dw) {
      MapMat dwm(dw->data(), co, kk);
      dwm.noalias() += dym * colb.transpose();
    }
    if (dx) {
      MapMat dcolm(dcol.data(), kk, ho * wo);
      dcolm.noalias() = wm.transpose() * dym;
      col2im_add(dcol.data(), ci, cache.in_h, cache.in_w, k, stride, pad,
                 dx->data() + static_cast<std::size_t>(i) * ci * cache.in_h * cache.in_w);
    }
  }
}

// ---------------------------------------------------------------------------
// conv1d over [B,C,L], stride 1, symmetric zero padding, with bias

struct Conv1dCache {
  Tensor col;  // [B, Ci*k, Lo]
  int in_l = 0;
};

inline Tensor conv1d_forward(const Tensor& x, const Tensor& w, const Tensor& bias, int pad,
                             Conv1dCache* cache = nullptr) {
  const int b = x.dim(0), ci = x.dim(1), l = x.dim(2);
  const int co = w.dim(0), k = w.dim(2);
  require(w.dim(1) == ci, "conv1d: channel mismatch");
  const int lo = l + 2 * pad - k + 1;
  const int kk = ci * k;
  Tensor y({b, co, lo});
  Tensor col({b, kk, lo});
  ConstMapMat wm(w.data(), co, kk);
  for (int i = 0; i < b; ++i) {
    double* colb = col.data() + static_cast<std::size_t>(i) * kk * lo;
    const double* xb = x.data() + static_cast<std::size_t>(i) * ci * l;
    for (int c = 0; c < ci; ++c)
      for (int kj = 0; kj < k; ++kj) {
        double* row = colb + (c * k + kj) * lo;
        for (int o = 0; o < lo; ++o) {
          const int ix = o - pad + kj;
          row[o] = (ix >= 0 && ix < l) ? xb[c * l + ix] : 0.0;
        }
      }
    MapMat ym(y.data() + static_cast<std::size_t>(i) * co * lo, co, lo);
    ym.noalias() = wm * ConstMapMat(colb, kk, lo);
    for (int c = 0; c < co; ++c)
      for (int o = 0; o < lo; ++o) y.data()[(static_cast<std::size_t>(i) * co + c) * lo + o] += bias[c];
  }
  if (cache) {
    cache->col = std::move(col);
    cache->in_l = l;
  }
  return y;
}

inline void conv1d_backward(const Conv1dCache& cache, const Tensor& w, const Tensor& dy, int pad,
                            Tensor* dx, Tensor* dw, Tensor* dbias) {
  const int b = dy.dim(0), co = dy.dim(1), lo = dy.dim(2);
  const int ci = w.dim(1), k = w.dim(2);
  const int kk = ci * k;
  ConstMapMat wm(w.data(), co, kk);
  if (dx) *dx = Tensor({b, ci, cache.in_l});
  for (int i = 0; i < b; ++i) {
    ConstMapMat dym(dy.data() + static_cast<std::size_t>(i) * co * lo, co, lo);
    ConstMapMat colb(cache.col.data() + static_cast<std::size_t>(i) * kk * lo, kk, lo);
    if (dw) {
      MapMat dwm(dw->data(), co, kk);
      dwm.noalias() += dym * colb.transpose();
    }
    if (dbias)
      for (int c = 0; c < co; ++c)
        for (int o = 0; o < lo; ++o) (*dbias)[c] += dy.data()[(static_cast<std::size_t>(i) * co + c) * lo + o];
    if (dx) {
      RowMat dcol = wm.transpose() * dym;  // [kk, lo]
      double* dxb = dx->data() + static_cast<std::size_t>(i) * ci * cache.in_l;
      for (int c = 0; c < ci; ++c)
        for (int kj = 0; kj < k; ++kj)
          for (int o = 0; o < lo; ++o) {
            const int ix = o - pad + kj;
            if (ix >= 0 && ix < cache.in_l) dxb[c * cache.in_l + ix] += dcol(c * k + kj, o);
          }
    }
  }
}

// ---------------------------------------------------------------------------
// batch normalization over [B,C,H,W]

enum class BnMode { kTrain, kAdapt, kInfer };

struct BnState {
  Tensor running_mean;  // [C]
  Tensor running_var;   // [C], population variance
  bool stats_ready = false;
  double eps = 1e-5;
  double momentum = 0.1;
};

struct BnCache {
  Tensor xhat;     // [B,C,H,W]
  Tensor inv_std;  // kTrain/kInfer: [C]; kAdapt: [B,C]
  BnMode mode = BnMode::kTrain;
};

// Normalization groups: kTrain -> per channel over (B,H,W) with a running
// stats update; kAdapt -> per (sample, channel) over (H,W); kInfer -> the
// frozen running statistics.
inline Tensor bn_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta, BnState& st,
                         BnMode mode, BnCache* cache = nullptr) {
  const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int hw = h * w;
  Tensor y(x.shape());
  Tensor xhat(x.shape());
  Tensor inv_std;
  if (mode == BnMode::kTrain) {
    inv_std = Tensor({c});
    for (int ch = 0; ch < c; ++ch) {
      double s = 0.0, s2 = 0.0;
      for (int i = 0; i < b; ++i) {
        const double* p = x.data() + (static_cast<std::size_t>(i) * c + ch) * hw;
        for (int j = 0; j < hw; ++j) {
          s += p[j];
          s2 += p[j] * p[j];
        }
      }
      const double m = static_cast<double>(b) * hw;
      const double mean = s / m;
      const double var = std::max(0.0, s2 / m - mean * mean);
      const double istd = 1.0 / std::sqrt(var + st.eps);
      inv_std[ch] = istd;
      st.running_mean[ch] = st.stats_ready
                                ? (1.0 - st.momentum) * st.running_mean[ch] + st.momentum * mean
                                : mean;
      st.running_var[ch] = st.stats_ready
                               ? (1.0 - st.momentum) * st.running_var[ch] + st.momentum * var
                               : var;
      for (int i = 0; i < b; ++i) {
        const double* p = x.data() + (static_cast<std::size_t>(i) * c + ch) * hw;
        double* xh = xhat.data() + (static_cast<std::size_t>(i) * c + ch) * hw;
        double* yo = y.data() + (static_cast<std::size_t>(i) * c + ch) * hw;
        for (int j = 0; j < hw; ++j) {
          xh[j] = (p[j] - mean) * istd;
          yo[j] = gamma[ch] * xh[j] + beta[ch];
        }
      }
    }
    st.stats_ready = true;
  } else if (mode == BnMode::kAdapt) {
    inv_std = Tensor({b, c});
    for (int i = 0; i < b; ++i) {
      for (int ch = 0; ch < c; ++ch) {
        const double* p = x.data() + (static_cast<std::size_t>(i) * c + ch) * hw;
        double s = 0.0, s2 = 0.0;
        for (int j = 0; j < hw; ++j) {
          s += p[j];
          s2 += p[j] * p[j];
        }
        const double mean = s / hw;
        const double var = std::max(0.0, s2 / hw - mean * mean);
        const double istd = 1.0 / std::sqrt(var + st.eps);
        inv_std.at2(i, ch) = istd;
        double* xh = xhat.data() + (static_cast<std::size_t>(i) * c + ch) * hw;
        double* yo = y.data() + (static_cast<std::size_t>(i) * c + ch) * hw;
        for (int j = 0; j < hw; ++j) {
          xh[j] = (p[j] - mean) * istd;
          yo[j] = gamma[ch] * xh[j] + beta[ch];
        }
      }
    }
  } else {
    if (!st.stats_ready)
      throw StateError("bn_forward: running statistics not initialized for infer mode");
    inv_std = Tensor({c});
    for (int ch = 0; ch < c; ++ch) {
      const double istd = 1.0 / std::sqrt(st.running_var[ch] + st.eps);
      inv_std[ch] = istd;
      const double mean = st.running_mean[ch];
      for (int i = 0; i < b; ++i) {
        const double* p = x.data() + (static_cast<std::size_t>(i) * c + ch) * hw;
        double* xh = xhat.data() + (static_cast<std::size_t>(i) * c + ch) * hw;
        double* yo = y.data() + (static_cast<std::size_t>(i) * c + ch) * hw;
        for (int j = 0; j < hw; ++j) {
          xh[j] = (p[j] - mean) * istd;
          yo[j] = gamma[ch] * xh[j] + beta[ch];
        }
      }
    }
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
    cache->mode = mode;
  }
  return y;
}

inline void bn_backward(const BnCache& cache, const Tensor& gamma, const Tensor& dy, Tensor* dx,
                        Tensor* dgamma, Tensor* dbeta) {
  const int b = dy.dim(0), c = dy.dim(1), h = dy.dim(2), w = dy.dim(3);
  const int hw = h * w;
  if (dx) *dx = Tensor(dy.shape());
  auto slice = [&](const Tensor& t, int i, int ch) {
    return t.data() + (static_cast<std::size_t>(i) * c + ch) * hw;
  };
  if (cache.mode == BnMode::kInfer) {
    for (int ch = 0; ch < c; ++ch) {
      const double g_istd = gamma[ch] * cache.inv_std[ch];
      double sg = 0.0, sb = 0.0;
      for (int i = 0; i < b; ++i) {
        const double* d = slice(dy, i, ch);
        const double* xh = slice(cache.xhat, i, ch);
        for (int j = 0; j < hw; ++j) {
          sg += d[j] * xh[j];
          sb += d[j];
        }
        if (dx) {
          double* o = dx->data() + (static_cast<std::size_t>(i) * c + ch) * hw;
          for (int j = 0; j < hw; ++j) o[j] = d[j] * g_istd;
        }
      }
      if (dgamma) (*dgamma)[ch] += sg;
      if (dbeta) (*dbeta)[ch] += sb;
    }
    return;
  }
  if (cache.mode == BnMode::kTrain) {
    const double m = static_cast<double>(b) * hw;
    for (int ch = 0; ch < c; ++ch) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (int i = 0; i < b; ++i) {
        const double* d = slice(dy, i, ch);
        const double* xh = slice(cache.xhat, i, ch);
        for (int j = 0; j < hw; ++j) {
          sum_dy += d[j];
          sum_dy_xhat += d[j] * xh[j];
        }
      }
      if (dgamma) (*dgamma)[ch] += sum_dy_xhat;
      if (dbeta) (*dbeta)[ch] += sum_dy;
      if (dx) {
        const double g_istd = gamma[ch] * cache.inv_std[ch];
        const double mean_dy = sum_dy / m;
        const double mean_dy_xhat = sum_dy_xhat / m;
        for (int i = 0; i < b; ++i) {
          const double* d = slice(dy, i, ch);
          const double* xh = slice(cache.xhat, i, ch);
          double* o = dx->data() + (static_cast<std::size_t>(i) * c + ch) * hw;
          for (int j = 0; j < hw; ++j) o[j] = g_istd * (d[j] - mean_dy - xh[j] * mean_dy_xhat);
        }
      }
    }
    return;
  }
  // kAdapt: independent groups per (sample, channel)
  for (int i = 0; i < b; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      const double* d = slice(dy, i, ch);
      const double* xh = slice(cache.xhat, i, ch);
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (int j = 0; j < hw; ++j) {
        sum_dy += d[j];
        sum_dy_xhat += d[j] * xh[j];
      }
      if (dgamma) (*dgamma)[ch] += sum_dy_xhat;
      if (dbeta) (*dbeta)[ch] += sum_dy;
      if (dx) {
        const double g_istd = gamma[ch] * cache.inv_std.at2(i, ch);
        const double mean_dy = sum_dy / hw;
        const double mean_dy_xhat = sum_dy_xhat / hw;
        double* o = dx->data() + (static_cast<std::size_t>(i) * c + ch) * hw;
        for (int j = 0; j < hw; ++j) o[j] = g_istd * (d[j] - mean_dy - xh[j] * mean_dy_xhat);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// activations / pooling / linear

inline Tensor leaky_relu_forward(const Tensor& x, double slope, Tensor* cache_in = nullptr) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : slope * x[i];
  if (cache_in) *cache_in = x;
  return y;
}

inline Tensor leaky_relu_backward(const Tensor& x_in, double slope, const Tensor& dy) {
  Tensor dx(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = x_in[i] > 0.0 ? dy[i] : slope * dy[i];
  return dx;
}

// [B,C,H,W] -> [B,C]
inline Tensor global_avg_pool2d(const Tensor& x) {
  const int b = x.dim(0), c = x.dim(1);
  const int hw = x.dim(2) * x.dim(3);
  Tensor y({b, c});
  for (int i = 0; i < b; ++i)
    for (int ch = 0; ch < c; ++ch) {
      const double* p = x.data() + (static_cast<std::size_t>(i) * c + ch) * hw;
      double s = 0.0;
      for (int j = 0; j < hw; ++j) s += p[j];
      y.at2(i, ch) = s / hw;
    }
  return y;
}

inline Tensor global_avg_pool2d_backward(const Tensor& dy, int h, int w) {
  const int b = dy.dim(0), c = dy.dim(1);
  Tensor dx({b, c, h, w});
  const double inv = 1.0 / (h * w);
  for (int i = 0; i < b; ++i)
    for (int ch = 0; ch < c; ++ch) {
      double g = dy.at2(i, ch) * inv;
      double* p = dx.data() + (static_cast<std::size_t>(i) * c + ch) * (h * w);
      for (int j = 0; j < h * w; ++j) p[j] = g;
    }
  return dx;
}

// [B,C,L] -> [B,C]
inline Tensor global_avg_pool1d(const Tensor& x) {
  const int b = x.dim(0), c = x.dim(1), l = x.dim(2);
  Tensor y({b, c});
  for (int i = 0; i < b; ++i)
    for (int ch = 0; ch < c; ++ch) {
      const double* p = x.data() + (static_cast<std::size_t>(i) * c + ch) * l;
      double s = 0.0;
      for (int j = 0; j < l; ++j) s += p[j];
      y.at2(i, ch) = s / l;
    }
  return y;
}

inline Tensor global_avg_pool1d_backward(const Tensor& dy, int l) {
  const int b = dy.dim(0), c = dy.dim(1);
  Tensor dx({b, c, l});
  const double inv = 1.0 / l;
  for (int i = 0; i < b; ++i)
    for (int ch = 0; ch < c; ++ch) {
      double g = dy.at2(i, ch) * inv;
      double* p = dx.data() + (static_cast<std::size_t>(i) * c + ch) * l;
      for (int j = 0; j < l; ++j) p[j] = g;
    }
  return dx;
}

// x [B,in], w [out,in], b [out] -> y [B,out]
inline Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor& bias) {
  const int b = x.dim(0), in = x.dim(1), out = w.dim(0);
  require(w.dim(1) == in, "linear: dimension mismatch");
  Tensor y({b, out});
  ConstMapMat xm(x.data(), b, in), wm(w.data(), out, in);
  MapMat ym(y.data(), b, out);
  ym.noalias() = xm * wm.transpose();
  for (int i = 0; i < b; ++i)
    for (int o = 0; o < out; ++o) y.at2(i, o) += bias[o];
  return y;
}

inline void linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor* dx,
                            Tensor* dw, Tensor* dbias) {
  const int b = x.dim(0), in = x.dim(1), out = w.dim(0);
  ConstMapMat xm(x.data(), b, in), wm(w.data(), out, in), dym(dy.data(), b, out);
  if (dw) MapMat(dw->data(), out, in).noalias() += dym.transpose() * xm;
  if (dbias)
    for (int i = 0; i < b; ++i)
      for (int o = 0; o < out; ++o) (*dbias)[o] += dy.at2(i, o);
  if (dx) {
    *dx = Tensor({b, in});
    MapMat(dx->data(), b, in).noalias() = dym * wm;
  }
}

inline Tensor concat_features(const Tensor& a, const Tensor& b) {
  require(a.dim(0) == b.dim(0), "concat: batch mismatch");
  const int n = a.dim(0), da = a.dim(1), db = b.dim(1);
  Tensor y({n, da + db});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < da; ++j) y.at2(i, j) = a.at2(i, j);
    for (int j = 0; j < db; ++j) y.at2(i, da + j) = b.at2(i, j);
  }
  return y;
}

inline void split_features(const Tensor& dy, int da, Tensor* dda, Tensor* ddb) {
  const int n = dy.dim(0), d = dy.dim(1);
  *dda = Tensor({n, da});
  *ddb = Tensor({n, d - da});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < da; ++j) dda->at2(i, j) = dy.at2(i, j);
    for (int j = 0; j < d - da; ++j) ddb->at2(i, j) = dy.at2(i, da + j);
  }
}

}  // namespace tinyvio::nn
