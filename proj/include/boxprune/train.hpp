#pragma once

#include <cstdint>
#include <vector>

#include "boxprune/graph.hpp"

namespace boxprune {

struct LabeledData {
  Tensor images;  // [N,H,W,C]
  std::vector<int> labels;

  int size() const { return labels.empty() ? 0 : images.dim(0); }
};

struct TrainConfig {
  real lr = real(0.02);
  real lr_decay = real(0.1);
  std::vector<double> decay_at = {0.5, 0.75};  // fractions of the epoch budget
  real momentum = real(0.9);
  real weight_decay = real(5e-4);
  int batch_size = 32;
  int epochs = 10;
  uint64_t seed = 1;
};

struct EpochMetrics {
  real train_loss = 0;
  real val_accuracy = 0;
};

// Momentum SGD over a Net. Shuffle order, hence the whole run, is a pure
// function of (seed, config, data). Weight decay applies to conv/dense
// kernels only.
class Trainer {
 public:
  Trainer(Net& net, TrainConfig cfg);

  // One pass over the training split; updates batchnorm running stats in
  // train mode, then reports eval-mode accuracy on `val`.
  EpochMetrics run_epoch(const LabeledData& train, const LabeledData& val);

  // Runs the configured number of epochs; returns the last epoch's metrics.
  EpochMetrics train(const LabeledData& train, const LabeledData& val);

  int epoch() const { return epoch_; }
  real current_lr() const;

 private:
  Net* net_;
  TrainConfig cfg_;
  Rng rng_;
  Tape tape_;
  WeightMap velocity_;
  int epoch_ = 0;
};

real evaluate(const Net& net, const LabeledData& data, int batch_size = 256);

// Gathers samples `indices` into a contiguous batch.
Batch gather_batch(const LabeledData& data, const std::vector<int>& indices,
                   int start, int count);

}  // namespace boxprune
