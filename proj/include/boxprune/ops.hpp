#pragma once

#include <vector>

#include "boxprune/tensor.hpp"

namespace boxprune {
namespace ops {

// Convolution uses TF-style `same` padding (output ceil(H/stride)) or
// `valid`. x is [N,H,W,Cin], w is [kh,kw,Cin,Cout]; no bias term.
Tensor conv2d(const Tensor& x, const Tensor& w, int stride, bool same_pad);
void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& gy,
                     int stride, bool same_pad, Tensor* gx, Tensor* gw);

struct BatchNormCache {
  Tensor xhat;                  // normalized input, pre-affine
  std::vector<real> inv_std;    // per channel
  bool train_mode = false;
};

// Train mode normalizes with batch statistics and updates the running
// estimates in place (momentum-weighted); eval uses the running stats.
Tensor batchnorm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       Tensor& running_mean, Tensor& running_var, real eps,
                       real momentum, BatchNormCache* cache);
Tensor batchnorm_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                      const Tensor& running_mean, const Tensor& running_var,
                      real eps, BatchNormCache* cache);
void batchnorm_backward(const BatchNormCache& cache, const Tensor& gamma,
                        const Tensor& gy, Tensor* gx, Tensor* ggamma,
                        Tensor* gbeta);

// Subgradient at 0 is 0.
Tensor relu(const Tensor& x);
void relu_backward(const Tensor& x, const Tensor& gy, Tensor* gx);

// 2x2 window, stride 2; requires even spatial extents.
Tensor maxpool2(const Tensor& x, std::vector<int64_t>* argmax);
void maxpool2_backward(const std::vector<int64_t>& argmax, const Tensor& gy,
                       Tensor* gx);

// x is [N,F], w is [F,K], b is [K].
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b);
void dense_backward(const Tensor& x, const Tensor& w, const Tensor& gy,
                    Tensor* gx, Tensor* gw, Tensor* gb);

Tensor add(const Tensor& a, const Tensor& b);

Tensor flatten(const Tensor& x);  // [N,H,W,C] -> [N, H*W*C]

// Mean cross-entropy over the batch. Fills `dlogits` with the gradient of
// the mean loss scaled by `seed`; stores softmax probabilities if asked.
real softmax_xent(const Tensor& logits, const std::vector<int>& labels,
                  real seed, Tensor* dlogits, Tensor* probs = nullptr);

}  // namespace ops
}  // namespace boxprune
