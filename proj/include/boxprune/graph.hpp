#pragma once

#include <map>
#include <string>
#include <vector>

#include "boxprune/netspec.hpp"
#include "boxprune/ops.hpp"
#include "boxprune/tensor.hpp"

namespace boxprune {

inline constexpr real kBatchNormEps = real(1e-5);
inline constexpr real kBatchNormMomentum = real(0.9);

using WeightMap = std::map<std::string, Tensor>;

struct Net {
  NetworkSpec spec;
  WeightMap weights;
};

// Fan-in-scaled normal init for conv/dense kernels; batchnorm starts at
// identity with zeroed running statistics.
Net init_net(const NetworkSpec& spec, uint64_t seed);

// Expected weight-map entries for a spec, with shapes.
std::map<std::string, std::vector<int>> param_shapes(const NetworkSpec& spec);

bool is_trainable_param(const std::string& name);
bool is_decayed_param(const std::string& name);

enum class Mode { Train, Eval };

struct Batch {
  Tensor images;            // [N,H,W,C]
  std::vector<int> labels;  // length N
};

// Executes the layer sequence of one NetworkSpec. Forward records every
// layer activation; backward replays the tape in reverse and accumulates
// weight and activation gradients.
class Tape {
 public:
  explicit Tape(const NetworkSpec& spec);

  // Train mode updates batchnorm running statistics inside `weights`.
  real forward(WeightMap& weights, const Batch& batch, Mode mode);

  // Requires a prior forward on this tape. `seed` scales the loss gradient.
  void backward(real seed = real(1));

  const Tensor& activation(int layer) const;
  const Tensor& activation_grad(int layer) const;
  const WeightMap& weight_grads() const { return weight_grads_; }
  const Tensor& logits() const;
  std::vector<int> predictions() const;

  const NetworkSpec& spec() const { return *spec_; }

 private:
  const NetworkSpec* spec_;
  const WeightMap* weights_ = nullptr;
  bool has_forward_ = false;
  Mode mode_ = Mode::Eval;
  std::vector<int> labels_;

  std::vector<Tensor> acts_;
  std::vector<Tensor> act_grads_;
  std::vector<ops::BatchNormCache> bn_caches_;
  std::vector<std::vector<int64_t>> pool_argmax_;
  int logits_layer_ = -1;
  WeightMap weight_grads_;
};

// Top-1 accuracy of `net` on the given samples, eval mode, batched.
real evaluate(const Net& net, const Tensor& images, const std::vector<int>& labels,
              int batch_size = 256);

}  // namespace boxprune
