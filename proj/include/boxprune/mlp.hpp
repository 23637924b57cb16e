#pragma once

#include <map>
#include <string>
#include <vector>

#include "boxprune/ops.hpp"
#include "boxprune/tensor.hpp"

namespace boxprune {

// Fully-connected network with tanh hidden activations, linear output.
// Forward caches everything backward needs; gradients accumulate until
// zero_grads().
class Mlp {
 public:
  Mlp(int in_dim, const std::vector<int>& hidden, int out_dim, uint64_t seed);

  Tensor forward(const Tensor& x);          // [N,in] -> [N,out]
  Tensor backward(const Tensor& dy);        // returns dX, accumulates grads
  void zero_grads();

  int in_dim() const { return in_dim_; }
  int out_dim() const { return out_dim_; }

  std::vector<Tensor*> params();
  std::vector<Tensor*> grads();
  std::vector<const Tensor*> params() const;

  // Flat map for checkpointing, keys "w0","b0","w1",...
  std::map<std::string, Tensor> state() const;
  void load_state(const std::map<std::string, Tensor>& state);

 private:
  int in_dim_, out_dim_;
  std::vector<Tensor> ws_, bs_;
  std::vector<Tensor> gws_, gbs_;
  std::vector<Tensor> inputs_, preacts_;
};

class Adam {
 public:
  Adam(std::vector<Tensor*> params, double lr, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8);

  void step(const std::vector<Tensor*>& grads);
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

 private:
  std::vector<Tensor*> params_;
  std::vector<Tensor> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

}  // namespace boxprune
