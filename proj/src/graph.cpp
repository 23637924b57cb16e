#include "boxprune/graph.hpp"

#include <algorithm>
#include <cmath>

namespace boxprune {

std::map<std::string, std::vector<int>> param_shapes(const NetworkSpec& spec) {
  std::map<std::string, std::vector<int>> shapes;
  for (const auto& l : spec.layers) {
    switch (l.kind) {
      case LayerKind::Conv:
        shapes[l.name + ".w"] = {l.kernel, l.kernel, l.in_channels, l.out_channels};
        break;
      case LayerKind::BatchNorm:
        shapes[l.name + ".gamma"] = {l.out_channels};
        shapes[l.name + ".beta"] = {l.out_channels};
        shapes[l.name + ".running_mean"] = {l.out_channels};
        shapes[l.name + ".running_var"] = {l.out_channels};
        break;
      case LayerKind::Dense:
        shapes[l.name + ".w"] = {l.in_channels * l.replicate, l.out_channels};
        shapes[l.name + ".b"] = {l.out_channels};
        break;
      default:
        break;
    }
  }
  return shapes;
}

bool is_trainable_param(const std::string& name) {
  return name.find(".running_") == std::string::npos;
}

bool is_decayed_param(const std::string& name) {
  return name.size() > 2 && name.compare(name.size() - 2, 2, ".w") == 0;
}

Net init_net(const NetworkSpec& spec, uint64_t seed) {
  spec.validate();
  Net net{spec, {}};
  Rng rng(seed);
  // Draw in layer order, not map order, so adding a layer elsewhere does
  // not shift earlier layers' values.
  for (const auto& l : spec.layers) {
    switch (l.kind) {
      case LayerKind::Conv: {
        Tensor w({l.kernel, l.kernel, l.in_channels, l.out_channels});
        const real scale =
            real(std::sqrt(2.0 / (double(l.kernel) * l.kernel * l.in_channels)));
        for (int64_t i = 0; i < w.numel(); ++i) w[i] = scale * real(rng.normal());
        net.weights[l.name + ".w"] = std::move(w);
        break;
      }
      case LayerKind::BatchNorm: {
        net.weights[l.name + ".gamma"] = Tensor::full({l.out_channels}, real(1));
        net.weights[l.name + ".beta"] = Tensor({l.out_channels});
        net.weights[l.name + ".running_mean"] = Tensor({l.out_channels});
        net.weights[l.name + ".running_var"] = Tensor::full({l.out_channels}, real(1));
        break;
      }
      case LayerKind::Dense: {
        const int fan_in = l.in_channels * l.replicate;
        Tensor w({fan_in, l.out_channels});
        const real scale = real(std::sqrt(2.0 / double(fan_in)));
        for (int64_t i = 0; i < w.numel(); ++i) w[i] = scale * real(rng.normal());
        net.weights[l.name + ".w"] = std::move(w);
        net.weights[l.name + ".b"] = Tensor({l.out_channels});
        break;
      }
      default:
        break;
    }
  }
  return net;
}

Tape::Tape(const NetworkSpec& spec) : spec_(&spec) {
  spec.validate();
}

real Tape::forward(WeightMap& weights, const Batch& batch, Mode mode) {
  const auto& layers = spec_->layers;
  const int n_layers = int(layers.size());
  acts_.assign(size_t(n_layers), Tensor());
  bn_caches_.assign(size_t(n_layers), {});
  pool_argmax_.assign(size_t(n_layers), {});
  act_grads_.clear();
  weight_grads_.clear();
  weights_ = &weights;
  mode_ = mode;
  labels_ = batch.labels;
  logits_layer_ = -1;

  if (batch.images.rank() != 4 || batch.images.dim(1) != spec_->input_h ||
      batch.images.dim(2) != spec_->input_w || batch.images.dim(3) != spec_->input_c) {
    throw ShapeError("input: batch shape " + batch.images.shape_str() +
                     " does not match spec input " + std::to_string(spec_->input_h) +
                     "x" + std::to_string(spec_->input_w) + "x" +
                     std::to_string(spec_->input_c));
  }
  if (batch.labels.empty()) throw ConfigError("input: empty batch");

  auto weight = [&](const std::string& name) -> Tensor& {
    auto it = weights.find(name);
    if (it == weights.end()) throw ShapeError("missing weight tensor: " + name);
    return it->second;
  };

  for (int i = 0; i < n_layers; ++i) {
    const auto& l = layers[size_t(i)];
    try {
      switch (l.kind) {
        case LayerKind::Input:
          acts_[size_t(i)] = batch.images;
          break;
        case LayerKind::Conv: {
          const Tensor& w = weight(l.name + ".w");
          acts_[size_t(i)] = ops::conv2d(acts_[size_t(l.input)], w, l.stride, true);
          break;
        }
        case LayerKind::BatchNorm: {
          const Tensor& gamma = weight(l.name + ".gamma");
          const Tensor& beta = weight(l.name + ".beta");
          Tensor& rmean = weight(l.name + ".running_mean");
          Tensor& rvar = weight(l.name + ".running_var");
          acts_[size_t(i)] =
              mode == Mode::Train
                  ? ops::batchnorm_train(acts_[size_t(l.input)], gamma, beta, rmean,
                                         rvar, kBatchNormEps, kBatchNormMomentum,
                                         &bn_caches_[size_t(i)])
                  : ops::batchnorm_eval(acts_[size_t(l.input)], gamma, beta, rmean,
                                        rvar, kBatchNormEps, &bn_caches_[size_t(i)]);
          break;
        }
        case LayerKind::Relu:
          acts_[size_t(i)] = ops::relu(acts_[size_t(l.input)]);
          break;
        case LayerKind::MaxPool:
          acts_[size_t(i)] = ops::maxpool2(acts_[size_t(l.input)], &pool_argmax_[size_t(i)]);
          break;
        case LayerKind::Flatten:
          acts_[size_t(i)] = ops::flatten(acts_[size_t(l.input)]);
          break;
        case LayerKind::Dense: {
          const Tensor& w = weight(l.name + ".w");
          const Tensor& b = weight(l.name + ".b");
          acts_[size_t(i)] = ops::dense(acts_[size_t(l.input)], w, b);
          logits_layer_ = i;
          break;
        }
        case LayerKind::Add:
          acts_[size_t(i)] =
              ops::add(acts_[size_t(l.input)], acts_[size_t(l.shortcut)]);
          break;
      }
    } catch (const ShapeError& e) {
      throw ShapeError("layer " + l.name + ": " + e.what());
    }
  }
  if (logits_layer_ < 0) throw ConfigError("network has no dense head");

  const real loss =
      ops::softmax_xent(acts_[size_t(logits_layer_)], labels_, real(1), nullptr);
  has_forward_ = true;
  return loss;
}

void Tape::backward(real seed) {
  if (!has_forward_) throw UsageError("backward called before forward");
  const auto& layers = spec_->layers;
  const int n_layers = int(layers.size());
  act_grads_.assign(size_t(n_layers), Tensor());
  for (int i = 0; i < n_layers; ++i) {
    act_grads_[size_t(i)] = Tensor(acts_[size_t(i)].shape());
  }
  for (const auto& [name, shape] : param_shapes(*spec_)) {
    if (is_trainable_param(name)) weight_grads_[name] = Tensor(shape);
  }

  ops::softmax_xent(acts_[size_t(logits_layer_)], labels_, seed,
                    &act_grads_[size_t(logits_layer_)]);

  auto weight = [&](const std::string& name) -> const Tensor& {
    return weights_->at(name);
  };

  for (int i = n_layers - 1; i >= 0; --i) {
    const auto& l = layers[size_t(i)];
    const Tensor& gy = act_grads_[size_t(i)];
    switch (l.kind) {
      case LayerKind::Input:
        break;
      case LayerKind::Conv:
        ops::conv2d_backward(acts_[size_t(l.input)], weight(l.name + ".w"), gy,
                             l.stride, true, &act_grads_[size_t(l.input)],
                             &weight_grads_[l.name + ".w"]);
        break;
      case LayerKind::BatchNorm:
        ops::batchnorm_backward(bn_caches_[size_t(i)], weight(l.name + ".gamma"), gy,
                                &act_grads_[size_t(l.input)],
                                &weight_grads_[l.name + ".gamma"],
                                &weight_grads_[l.name + ".beta"]);
        break;
      case LayerKind::Relu:
        ops::relu_backward(acts_[size_t(l.input)], gy, &act_grads_[size_t(l.input)]);
        break;
      case LayerKind::MaxPool:
        ops::maxpool2_backward(pool_argmax_[size_t(i)], gy, &act_grads_[size_t(l.input)]);
        break;
      case LayerKind::Flatten:
        for (int64_t j = 0; j < gy.numel(); ++j) {
          act_grads_[size_t(l.input)][j] += gy[j];
        }
        break;
      case LayerKind::Dense:
        ops::dense_backward(acts_[size_t(l.input)], weight(l.name + ".w"), gy,
                            &act_grads_[size_t(l.input)], &weight_grads_[l.name + ".w"],
                            &weight_grads_[l.name + ".b"]);
        break;
      case LayerKind::Add:
        for (int64_t j = 0; j < gy.numel(); ++j) {
          act_grads_[size_t(l.input)][j] += gy[j];
          act_grads_[size_t(l.shortcut)][j] += gy[j];
        }
        break;
    }
  }
}

const Tensor& Tape::activation(int layer) const {
  if (!has_forward_) throw UsageError("activation requested before forward");
  return acts_.at(size_t(layer));
}

const Tensor& Tape::activation_grad(int layer) const {
  if (act_grads_.empty()) throw UsageError("activation_grad requested before backward");
  return act_grads_.at(size_t(layer));
}

const Tensor& Tape::logits() const {
  if (!has_forward_) throw UsageError("logits requested before forward");
  return acts_.at(size_t(logits_layer_));
}

std::vector<int> Tape::predictions() const {
  const Tensor& z = logits();
  std::vector<int> preds(size_t(z.dim(0)));
  for (int i = 0; i < z.dim(0); ++i) {
    int best = 0;
    for (int j = 1; j < z.dim(1); ++j) {
      if (z.at(i, j) > z.at(i, best)) best = j;
    }
    preds[size_t(i)] = best;
  }
  return preds;
}

real evaluate(const Net& net, const Tensor& images, const std::vector<int>& labels,
              int batch_size) {
  if (labels.empty() || images.rank() != 4) throw ConfigError("evaluate: empty data");
  const int n = images.dim(0);
  Tape tape(net.spec);
  WeightMap weights = net.weights;  // eval never mutates running stats
  int correct = 0;
  const int rest = int(images.numel()) / n;
  for (int start = 0; start < n; start += batch_size) {
    const int count = std::min(batch_size, n - start);
    Batch b;
    b.images = Tensor({count, images.dim(1), images.dim(2), images.dim(3)});
    std::copy(images.data() + int64_t(start) * rest,
              images.data() + int64_t(start + count) * rest, b.images.data());
    b.labels.assign(labels.begin() + start, labels.begin() + start + count);
    tape.forward(weights, b, Mode::Eval);
    const auto preds = tape.predictions();
    for (int i = 0; i < count; ++i) {
      if (preds[size_t(i)] == b.labels[size_t(i)]) ++correct;
    }
  }
  return real(correct) / real(n);
}

}  // namespace boxprune
