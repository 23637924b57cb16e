#include "boxprune/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace boxprune {

Trainer::Trainer(Net& net, TrainConfig cfg)
    : net_(&net), cfg_(cfg), rng_(cfg.seed), tape_(net.spec) {
  if (cfg_.lr <= 0) throw ConfigError("trainer: learning rate must be > 0");
  if (cfg_.epochs < 1) throw ConfigError("trainer: epochs must be >= 1");
  if (cfg_.momentum < 0 || cfg_.momentum >= 1) {
    throw ConfigError("trainer: momentum must be in [0,1)");
  }
  for (const auto& [name, shape] : param_shapes(net.spec)) {
    if (is_trainable_param(name)) velocity_[name] = Tensor(shape);
  }
}

real Trainer::current_lr() const {
  real lr = cfg_.lr;
  for (double frac : cfg_.decay_at) {
    if (epoch_ >= int(std::ceil(frac * cfg_.epochs))) lr *= cfg_.lr_decay;
  }
  return lr;
}

Batch gather_batch(const LabeledData& data, const std::vector<int>& indices,
                   int start, int count) {
  Batch b;
  const int h = data.images.dim(1), w = data.images.dim(2), c = data.images.dim(3);
  const int64_t sample = int64_t(h) * w * c;
  b.images = Tensor({count, h, w, c});
  b.labels.resize(size_t(count));
  for (int i = 0; i < count; ++i) {
    const int src = indices[size_t(start + i)];
    std::copy(data.images.data() + src * sample, data.images.data() + (src + 1) * sample,
              b.images.data() + int64_t(i) * sample);
    b.labels[size_t(i)] = data.labels[size_t(src)];
  }
  return b;
}

EpochMetrics Trainer::run_epoch(const LabeledData& train, const LabeledData& val) {
  if (train.size() == 0) throw ConfigError("trainer: empty training split");
  if (val.size() == 0) throw ConfigError("trainer: empty validation split");

  const real lr = current_lr();
  Rng epoch_rng = rng_.child(uint64_t(epoch_) + 1);
  std::vector<int> order(size_t(train.size()));
  std::iota(order.begin(), order.end(), 0);
  epoch_rng.shuffle(order);

  real loss_sum = 0;
  int batches = 0;
  for (int start = 0; start < train.size(); start += cfg_.batch_size) {
    const int count = std::min(cfg_.batch_size, train.size() - start);
    const Batch batch = gather_batch(train, order, start, count);
    loss_sum += tape_.forward(net_->weights, batch, Mode::Train);
    tape_.backward();
    ++batches;

    for (const auto& [name, grad] : tape_.weight_grads()) {
      Tensor& w = net_->weights.at(name);
      Tensor& v = velocity_.at(name);
      const real wd = is_decayed_param(name) ? cfg_.weight_decay : real(0);
      for (int64_t i = 0; i < w.numel(); ++i) {
        v[i] = cfg_.momentum * v[i] + grad[i] + wd * w[i];
        w[i] -= lr * v[i];
      }
    }
  }
  ++epoch_;

  EpochMetrics m;
  m.train_loss = loss_sum / real(batches);
  m.val_accuracy = evaluate(*net_, val);
  if (!std::isfinite(m.train_loss)) throw NumericError("trainer: non-finite loss");
  return m;
}

EpochMetrics Trainer::train(const LabeledData& train, const LabeledData& val) {
  EpochMetrics last;
  for (int e = 0; e < cfg_.epochs; ++e) last = run_epoch(train, val);
  return last;
}

real evaluate(const Net& net, const LabeledData& data, int batch_size) {
  return evaluate(net, data.images, data.labels, batch_size);
}

}  // namespace boxprune
