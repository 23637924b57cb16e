#include "boxprune/ops.hpp"

#include <cmath>
#include <limits>

namespace boxprune {
namespace ops {

namespace {

struct ConvGeom {
  int ho, wo, pad_top, pad_left;
};

ConvGeom conv_geometry(int h, int w, int k, int stride, bool same_pad) {
  ConvGeom g{};
  if (same_pad) {
    g.ho = (h + stride - 1) / stride;
    g.wo = (w + stride - 1) / stride;
    const int pad_h = std::max(0, (g.ho - 1) * stride + k - h);
    const int pad_w = std::max(0, (g.wo - 1) * stride + k - w);
    g.pad_top = pad_h / 2;
    g.pad_left = pad_w / 2;
  } else {
    if (h < k || w < k) throw ShapeError("conv2d: kernel larger than input");
    g.ho = (h - k) / stride + 1;
    g.wo = (w - k) / stride + 1;
  }
  return g;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, int stride, bool same_pad) {
  if (x.rank() != 4 || w.rank() != 4) throw ShapeError("conv2d: rank-4 tensors required");
  const int n = x.dim(0), h = x.dim(1), wd = x.dim(2), ci = x.dim(3);
  const int kh = w.dim(0), kw = w.dim(1), wci = w.dim(2), co = w.dim(3);
  if (ci != wci) {
    throw ShapeError("conv2d: input channels " + std::to_string(ci) +
                     " != kernel channels " + std::to_string(wci));
  }
  const ConvGeom g = conv_geometry(h, wd, kh, stride, same_pad);
  Tensor y({n, g.ho, g.wo, co});

  for (int in = 0; in < n; ++in) {
    for (int oh = 0; oh < g.ho; ++oh) {
      for (int ow = 0; ow < g.wo; ++ow) {
        real* yp = &y.at(in, oh, ow, 0);
        for (int fh = 0; fh < kh; ++fh) {
          const int ih = oh * stride - g.pad_top + fh;
          if (ih < 0 || ih >= h) continue;
          for (int fw = 0; fw < kw; ++fw) {
            const int iw = ow * stride - g.pad_left + fw;
            if (iw < 0 || iw >= wd) continue;
            const real* xp = &x.at(in, ih, iw, 0);
            const real* wp = &w.at(fh, fw, 0, 0);
            for (int c = 0; c < ci; ++c) {
              const real xv = xp[c];
              if (xv == real(0)) continue;
              const real* wrow = wp + size_t(c) * co;
              for (int f = 0; f < co; ++f) yp[f] += xv * wrow[f];
            }
          }
        }
      }
    }
  }
  return y;
}

void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& gy,
                     int stride, bool same_pad, Tensor* gx, Tensor* gw) {
  const int n = x.dim(0), h = x.dim(1), wd = x.dim(2), ci = x.dim(3);
  const int kh = w.dim(0), kw = w.dim(1), co = w.dim(3);
  const ConvGeom g = conv_geometry(h, wd, kh, stride, same_pad);
  if (gy.dim(1) != g.ho || gy.dim(2) != g.wo || gy.dim(3) != co) {
    throw ShapeError("conv2d_backward: gradient shape mismatch");
  }
  for (int in = 0; in < n; ++in) {
    for (int oh = 0; oh < g.ho; ++oh) {
      for (int ow = 0; ow < g.wo; ++ow) {
        const real* gyp = &gy.at(in, oh, ow, 0);
        for (int fh = 0; fh < kh; ++fh) {
          const int ih = oh * stride - g.pad_top + fh;
          if (ih < 0 || ih >= h) continue;
          for (int fw = 0; fw < kw; ++fw) {
            const int iw = ow * stride - g.pad_left + fw;
            if (iw < 0 || iw >= wd) continue;
            const real* xp = &x.at(in, ih, iw, 0);
            real* gxp = gx ? &gx->at(in, ih, iw, 0) : nullptr;
            const real* wp = &w.at(fh, fw, 0, 0);
            real* gwp = gw ? &gw->at(fh, fw, 0, 0) : nullptr;
            for (int c = 0; c < ci; ++c) {
              const real* wrow = wp + size_t(c) * co;
              real acc = 0;
              if (gwp) {
                real* gwrow = gwp + size_t(c) * co;
                const real xv = xp[c];
                for (int f = 0; f < co; ++f) {
                  const real gyv = gyp[f];
                  acc += gyv * wrow[f];
                  gwrow[f] += gyv * xv;
                }
              } else {
                for (int f = 0; f < co; ++f) acc += gyp[f] * wrow[f];
              }
              if (gxp) gxp[c] += acc;
            }
          }
        }
      }
    }
  }
}

Tensor batchnorm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       Tensor& running_mean, Tensor& running_var, real eps,
                       real momentum, BatchNormCache* cache) {
  if (x.rank() != 4) throw ShapeError("batchnorm: rank-4 input required");
  const int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const int64_t m = int64_t(n) * h * w;
  Tensor y(x.shape());
  Tensor xhat(x.shape());
  std::vector<real> inv_std(size_t(c), real(0));

  std::vector<real> mean(size_t(c), 0), var(size_t(c), 0);
  const real* xd = x.data();
  for (int64_t i = 0; i < x.numel(); i += c) {
    for (int j = 0; j < c; ++j) mean[size_t(j)] += xd[i + j];
  }
  for (int j = 0; j < c; ++j) mean[size_t(j)] /= real(m);
  for (int64_t i = 0; i < x.numel(); i += c) {
    for (int j = 0; j < c; ++j) {
      const real d = xd[i + j] - mean[size_t(j)];
      var[size_t(j)] += d * d;
    }
  }
  for (int j = 0; j < c; ++j) var[size_t(j)] /= real(m);

  for (int j = 0; j < c; ++j) {
    inv_std[size_t(j)] = real(1) / std::sqrt(var[size_t(j)] + eps);
    running_mean[j] = momentum * running_mean[j] + (real(1) - momentum) * mean[size_t(j)];
    running_var[j] = momentum * running_var[j] + (real(1) - momentum) * var[size_t(j)];
  }

  real* yd = y.data();
  real* xh = xhat.data();
  for (int64_t i = 0; i < x.numel(); i += c) {
    for (int j = 0; j < c; ++j) {
      const real nh = (xd[i + j] - mean[size_t(j)]) * inv_std[size_t(j)];
      xh[i + j] = nh;
      yd[i + j] = gamma[j] * nh + beta[j];
    }
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
    cache->train_mode = true;
  }
  return y;
}

Tensor batchnorm_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                      const Tensor& running_mean, const Tensor& running_var,
                      real eps, BatchNormCache* cache) {
  if (x.rank() != 4) throw ShapeError("batchnorm: rank-4 input required");
  const int c = x.dim(3);
  Tensor y(x.shape());
  Tensor xhat(x.shape());
  std::vector<real> inv_std(size_t(c), real(0));
  for (int j = 0; j < c; ++j) {
    inv_std[size_t(j)] = real(1) / std::sqrt(running_var[j] + eps);
  }
  const real* xd = x.data();
  real* yd = y.data();
  real* xh = xhat.data();
  for (int64_t i = 0; i < x.numel(); i += c) {
    for (int j = 0; j < c; ++j) {
      const real nh = (xd[i + j] - running_mean[j]) * inv_std[size_t(j)];
      xh[i + j] = nh;
      yd[i + j] = gamma[j] * nh + beta[j];
    }
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
    cache->train_mode = false;
  }
  return y;
}

void batchnorm_backward(const BatchNormCache& cache, const Tensor& gamma,
                        const Tensor& gy, Tensor* gx, Tensor* ggamma,
                        Tensor* gbeta) {
  const Tensor& xhat = cache.xhat;
  const int c = xhat.dim(3);
  const int64_t m = xhat.numel() / c;
  const real* gyd = gy.data();
  const real* xh = xhat.data();

  std::vector<real> sum_gy(size_t(c), 0), sum_gy_xhat(size_t(c), 0);
  for (int64_t i = 0; i < xhat.numel(); i += c) {
    for (int j = 0; j < c; ++j) {
      sum_gy[size_t(j)] += gyd[i + j];
      sum_gy_xhat[size_t(j)] += gyd[i + j] * xh[i + j];
    }
  }
  if (ggamma) {
    for (int j = 0; j < c; ++j) (*ggamma)[j] += sum_gy_xhat[size_t(j)];
  }
  if (gbeta) {
    for (int j = 0; j < c; ++j) (*gbeta)[j] += sum_gy[size_t(j)];
  }
  if (!gx) return;
  real* gxd = gx->data();
  if (cache.train_mode) {
    for (int64_t i = 0; i < xhat.numel(); i += c) {
      for (int j = 0; j < c; ++j) {
        const real k = gamma[j] * cache.inv_std[size_t(j)];
        gxd[i + j] += k * (gyd[i + j] - sum_gy[size_t(j)] / real(m) -
                           xh[i + j] * sum_gy_xhat[size_t(j)] / real(m));
      }
    }
  } else {
    // Running stats are constants in eval mode.
    for (int64_t i = 0; i < xhat.numel(); i += c) {
      for (int j = 0; j < c; ++j) {
        gxd[i + j] += gyd[i + j] * gamma[j] * cache.inv_std[size_t(j)];
      }
    }
  }
}

Tensor relu(const Tensor& x) {
  Tensor y(x.shape());
  const real* xd = x.data();
  real* yd = y.data();
  for (int64_t i = 0; i < x.numel(); ++i) yd[i] = xd[i] > real(0) ? xd[i] : real(0);
  return y;
}

void relu_backward(const Tensor& x, const Tensor& gy, Tensor* gx) {
  const real* xd = x.data();
  const real* gyd = gy.data();
  real* gxd = gx->data();
  for (int64_t i = 0; i < x.numel(); ++i) {
    if (xd[i] > real(0)) gxd[i] += gyd[i];
  }
}

Tensor maxpool2(const Tensor& x, std::vector<int64_t>* argmax) {
  if (x.rank() != 4) throw ShapeError("maxpool: rank-4 input required");
  const int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  if (h % 2 || w % 2) {
    throw ShapeError("maxpool: spatial extents must be even, got " + x.shape_str());
  }
  const int ho = h / 2, wo = w / 2;
  Tensor y({n, ho, wo, c});
  if (argmax) argmax->assign(size_t(y.numel()), 0);
  for (int in = 0; in < n; ++in) {
    for (int oh = 0; oh < ho; ++oh) {
      for (int ow = 0; ow < wo; ++ow) {
        for (int j = 0; j < c; ++j) {
          real best = -std::numeric_limits<real>::infinity();
          int64_t best_idx = 0;
          for (int dh = 0; dh < 2; ++dh) {
            for (int dw = 0; dw < 2; ++dw) {
              const int ih = oh * 2 + dh, iw = ow * 2 + dw;
              const int64_t idx = ((int64_t(in) * h + ih) * w + iw) * c + j;
              if (x[idx] > best) {
                best = x[idx];
                best_idx = idx;
              }
            }
          }
          const int64_t oidx = ((int64_t(in) * ho + oh) * wo + ow) * c + j;
          y[oidx] = best;
          if (argmax) (*argmax)[size_t(oidx)] = best_idx;
        }
      }
    }
  }
  return y;
}

void maxpool2_backward(const std::vector<int64_t>& argmax, const Tensor& gy,
                       Tensor* gx) {
  const real* gyd = gy.data();
  real* gxd = gx->data();
  for (size_t i = 0; i < argmax.size(); ++i) gxd[argmax[i]] += gyd[i];
}

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 2 || w.rank() != 2) throw ShapeError("dense: rank-2 tensors required");
  const int n = x.dim(0), f = x.dim(1), k = w.dim(1);
  if (w.dim(0) != f) {
    throw ShapeError("dense: input features " + std::to_string(f) +
                     " != weight rows " + std::to_string(w.dim(0)));
  }
  Tensor y({n, k});
  for (int in = 0; in < n; ++in) {
    real* yp = &y.at(in, 0);
    for (int j = 0; j < k; ++j) yp[j] = b[j];
    const real* xp = &x.at(in, 0);
    for (int i = 0; i < f; ++i) {
      const real xv = xp[i];
      if (xv == real(0)) continue;
      const real* wrow = &w.at(i, 0);
      for (int j = 0; j < k; ++j) yp[j] += xv * wrow[j];
    }
  }
  return y;
}

void dense_backward(const Tensor& x, const Tensor& w, const Tensor& gy,
                    Tensor* gx, Tensor* gw, Tensor* gb) {
  const int n = x.dim(0), f = x.dim(1), k = w.dim(1);
  for (int in = 0; in < n; ++in) {
    const real* gyp = &gy.at(in, 0);
    const real* xp = &x.at(in, 0);
    if (gb) {
      for (int j = 0; j < k; ++j) (*gb)[j] += gyp[j];
    }
    for (int i = 0; i < f; ++i) {
      const real* wrow = &w.at(i, 0);
      real acc = 0;
      if (gw) {
        real* gwrow = &gw->at(i, 0);
        const real xv = xp[i];
        for (int j = 0; j < k; ++j) {
          acc += gyp[j] * wrow[j];
          gwrow[j] += gyp[j] * xv;
        }
      } else {
        for (int j = 0; j < k; ++j) acc += gyp[j] * wrow[j];
      }
      if (gx) gx->at(in, i) += acc;
    }
  }
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("add: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
  Tensor y(a.shape());
  const real* ad = a.data();
  const real* bd = b.data();
  real* yd = y.data();
  for (int64_t i = 0; i < a.numel(); ++i) yd[i] = ad[i] + bd[i];
  return y;
}

Tensor flatten(const Tensor& x) {
  if (x.rank() != 4) throw ShapeError("flatten: rank-4 input required");
  return x.reshaped({x.dim(0), x.dim(1) * x.dim(2) * x.dim(3)});
}

real softmax_xent(const Tensor& logits, const std::vector<int>& labels,
                  real seed, Tensor* dlogits, Tensor* probs_out) {
  const int n = logits.dim(0), k = logits.dim(1);
  if (int(labels.size()) != n) throw ShapeError("softmax_xent: label count mismatch");
  Tensor probs({n, k});
  real loss = 0;
  for (int in = 0; in < n; ++in) {
    const int label = labels[size_t(in)];
    if (label < 0 || label >= k) {
      throw ShapeError("softmax_xent: label out of range: " + std::to_string(label));
    }
    const real* zp = &logits.at(in, 0);
    real m = zp[0];
    for (int j = 1; j < k; ++j) m = std::max(m, zp[j]);
    real s = 0;
    real* pp = &probs.at(in, 0);
    for (int j = 0; j < k; ++j) {
      pp[j] = std::exp(zp[j] - m);
      s += pp[j];
    }
    for (int j = 0; j < k; ++j) pp[j] /= s;
    loss -= std::log(std::max(pp[label], std::numeric_limits<real>::min()));
  }
  loss /= real(n);
  if (!std::isfinite(loss)) throw NumericError("softmax_xent: non-finite loss");
  if (dlogits) {
    *dlogits = Tensor({n, k});
    for (int in = 0; in < n; ++in) {
      const real* pp = &probs.at(in, 0);
      real* dp = &dlogits->at(in, 0);
      for (int j = 0; j < k; ++j) dp[j] = seed * pp[j] / real(n);
      dp[labels[size_t(in)]] -= seed / real(n);
    }
  }
  if (probs_out) *probs_out = std::move(probs);
  return loss;
}

}  // namespace ops
}  // namespace boxprune
