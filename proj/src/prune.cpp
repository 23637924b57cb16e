#include "boxprune/prune.hpp"

#include <cmath>

namespace boxprune {

namespace {

void check_masks(const NetworkSpec& spec, const MaskSet& masks) {
  if (masks.flag_count() != spec.flag_count()) {
    throw ShapeError("masks: flag count " + std::to_string(masks.flag_count()) +
                     " != " + std::to_string(spec.flag_count()));
  }
  for (int f = 0; f < spec.flag_count(); ++f) {
    if (int(masks.retain[size_t(f)].size()) != spec.flags[size_t(f)].length) {
      throw ShapeError("masks: length mismatch on flag " + std::to_string(f));
    }
    if (masks.ones(f) < 1) {
      throw ShapeError("masks: flag " + std::to_string(f) + " retains no channel");
    }
  }
}

// Expands kept channel indices for a replicated binding (flattened dense
// rows keep channels fastest).
std::vector<int> replicated_indices(const std::vector<int>& kept, int channels,
                                    int replicate) {
  if (replicate == 1) return kept;
  std::vector<int> rows;
  rows.reserve(kept.size() * size_t(replicate));
  for (int pos = 0; pos < replicate; ++pos) {
    for (int c : kept) rows.push_back(pos * channels + c);
  }
  return rows;
}

}  // namespace

void validate_add_consistency(const NetworkSpec& spec) {
  for (const auto& l : spec.layers) {
    if (l.kind != LayerKind::Add) continue;
    const int a = spec.layers[size_t(l.input)].out_flag;
    const int b = spec.layers[size_t(l.shortcut)].out_flag;
    if (a != b) {
      throw ShapeError("residual add in block " +
                       (l.block.empty() ? l.name : l.block) +
                       " joins mismatched channel masks (flags " + std::to_string(a) +
                       " vs " + std::to_string(b) + ")");
    }
  }
}

WeightMap hadamard_masked_weights(const Net& net, const MaskSet& masks) {
  check_masks(net.spec, masks);
  WeightMap out = net.weights;
  for (int f = 0; f < net.spec.flag_count(); ++f) {
    const auto& flag = net.spec.flags[size_t(f)];
    const auto& retain = masks.retain[size_t(f)];
    for (const auto& binding : flag.bindings) {
      Tensor& t = out.at(binding.param);
      const auto& shape = t.shape();
      int64_t outer = 1, inner = 1;
      for (int i = 0; i < binding.dim; ++i) outer *= shape[size_t(i)];
      for (int i = binding.dim + 1; i < t.rank(); ++i) inner *= shape[size_t(i)];
      const int64_t extent = shape[size_t(binding.dim)];
      const int channels = flag.length;
      for (int64_t o = 0; o < outer; ++o) {
        for (int64_t e = 0; e < extent; ++e) {
          // With replication the channel index cycles fastest.
          const int channel = int(e % channels);
          if (retain[size_t(channel)]) continue;
          real* p = t.data() + (o * extent + e) * inner;
          std::fill(p, p + inner, real(0));
        }
      }
    }
  }
  return out;
}

Net rebuild(const Net& base, const MaskSet& masks, InitStrategy init, uint64_t seed,
            bool reset_bn_stats, std::optional<int> num_classes) {
  check_masks(base.spec, masks);
  validate_add_consistency(base.spec);

  NetworkSpec spec = base.spec;
  const auto kept_counts = masks.ones_counts();

  for (int f = 0; f < spec.flag_count(); ++f) {
    spec.flags[size_t(f)].length = kept_counts[size_t(f)];
  }
  for (auto& l : spec.layers) {
    if (l.in_flag >= 0) l.in_channels = kept_counts[size_t(l.in_flag)];
    if (l.out_flag >= 0 && l.kind != LayerKind::Dense) {
      l.out_channels = kept_counts[size_t(l.out_flag)];
    }
    if (l.kind != LayerKind::Conv && l.kind != LayerKind::Dense && l.out_flag < 0) {
      // Shape-preserving layers follow their producer.
      l.in_channels = l.out_channels = spec.layers[size_t(l.input)].out_channels;
    }
    if (num_classes && l.kind == LayerKind::Dense) l.out_channels = *num_classes;
  }
  if (num_classes) spec.num_classes = *num_classes;

  if (init == InitStrategy::Random) {
    return init_net(spec, seed);
  }

  Net net{spec, {}};
  // Start from sliced pretrained tensors, then patch special cases.
  WeightMap sliced = base.weights;
  for (int f = 0; f < base.spec.flag_count(); ++f) {
    const auto& flag = base.spec.flags[size_t(f)];
    const auto kept = masks.kept_indices(f);
    for (const auto& binding : flag.bindings) {
      Tensor& t = sliced.at(binding.param);
      t = take(t, binding.dim, replicated_indices(kept, flag.length, binding.replicate));
    }
  }
  net.weights = std::move(sliced);

  if (reset_bn_stats) {
    for (const auto& l : spec.layers) {
      if (l.kind != LayerKind::BatchNorm) continue;
      net.weights.at(l.name + ".running_mean") = Tensor({l.out_channels});
      net.weights.at(l.name + ".running_var") = Tensor::full({l.out_channels}, 1);
    }
  }
  if (num_classes) {
    // Fresh head whenever the label space changes.
    Rng rng(seed);
    for (const auto& l : spec.layers) {
      if (l.kind != LayerKind::Dense) continue;
      const int fan_in = l.in_channels * l.replicate;
      Tensor w({fan_in, l.out_channels});
      const real scale = real(std::sqrt(2.0 / double(fan_in)));
      for (int64_t i = 0; i < w.numel(); ++i) w[i] = scale * real(rng.normal());
      net.weights.at(l.name + ".w") = std::move(w);
      net.weights.at(l.name + ".b") = Tensor({l.out_channels});
    }
  }

  // Physical removal check: every tensor must match the rebuilt spec.
  for (const auto& [name, shape] : param_shapes(spec)) {
    if (net.weights.at(name).shape() != shape) {
      throw ShapeError("rebuild: tensor " + name + " not fully sliced");
    }
  }
  return net;
}

MaskSet choose_masks(const Net& net, const Profile& profile, ChannelCriterion criterion,
                     Rng& rng, const LabeledData* val) {
  const auto lengths = net.spec.flag_lengths();
  const auto counts = retained_counts(profile, lengths);

  std::vector<ChannelScores> taylor;
  if (criterion == ChannelCriterion::Taylor) {
    if (!val) throw ConfigError("taylor criterion needs a validation split");
    taylor = taylor_scores(net, *val);
  }

  MaskSet m;
  m.retain.resize(lengths.size());
  for (int f = 0; f < int(lengths.size()); ++f) {
    // Per-flag child streams keep one-shot and layerwise selection aligned
    // for the same job seed.
    Rng sel_rng = rng.child(uint64_t(f) + 100);
    if (criterion == ChannelCriterion::Random) {
      m.retain[size_t(f)] = select_channels(nullptr, lengths[size_t(f)],
                                            counts[size_t(f)], SelectStrategy::Random,
                                            sel_rng);
      continue;
    }
    std::vector<real> scores;
    if (!taylor.empty()) {
      scores = taylor[size_t(f)].scores;
    } else {
      const int layer = net.spec.flags[size_t(f)].decision_layer;
      scores = l1_scores(net.weights.at(net.spec.layers[size_t(layer)].name + ".w"));
    }
    m.retain[size_t(f)] = select_channels(&scores, lengths[size_t(f)],
                                          counts[size_t(f)], SelectStrategy::TopMetric,
                                          sel_rng);
  }
  return m;
}

namespace {

PruneOutcome finish_outcome(const Net& base, Net net, MaskSet masks,
                            const LabeledData& val) {
  PruneOutcome out;
  out.accuracy = evaluate(net, val);
  out.compression = compression_of(masks, base.spec);
  out.net = std::move(net);
  out.masks = std::move(masks);
  return out;
}

}  // namespace

PruneOutcome prune_and_finetune(const PruneJob& job, const LabeledData& train,
                                const LabeledData& val) {
  if (!job.base) throw ConfigError("prune job has no base network");
  const Net& base = *job.base;
  Rng rng(job.seed);

  if (job.pipeline == Pipeline::OneShot) {
    MaskSet masks = job.masks
                        ? *job.masks
                        : choose_masks(base, job.profile, job.criterion, rng, &val);
    check_masks(base.spec, masks);
    Net net = rebuild(base, masks, job.init, rng.child(1).seed());
    Trainer trainer(net, job.finetune);
    trainer.train(train, val);
    return finish_outcome(base, std::move(net), std::move(masks), val);
  }

  // Layerwise-iterative: the stages refine a progressively smaller net, so
  // they only make sense on surviving pretrained weights.
  if (job.init != InitStrategy::Pretrained) {
    throw ConfigError("layerwise-iterative pipeline requires pretrained init");
  }
  if (job.masks) {
    throw ConfigError("layerwise-iterative pipeline chooses masks per stage");
  }

  const int flag_count = base.spec.flag_count();
  const auto base_lengths = base.spec.flag_lengths();
  const auto counts = retained_counts(job.profile, base_lengths);
  const int stage_epochs =
      int(std::lround(job.stage_budget_frac * job.finetune.epochs));

  Net current = base;
  current.weights = base.weights;
  MaskSet composed = MaskSet::all_ones(base_lengths);

  for (int f = 0; f < flag_count; ++f) {
    // Scores come from the current (already partially pruned) net; taylor
    // is recomputed at every stage, l1 reads the current kernels.
    std::vector<real> scores;
    Rng stage_rng = rng.child(uint64_t(f) + 100);
    std::vector<uint8_t> flag_mask;
    if (job.criterion == ChannelCriterion::Random) {
      flag_mask = select_channels(nullptr, base_lengths[size_t(f)], counts[size_t(f)],
                                  SelectStrategy::Random, stage_rng);
    } else {
      if (job.criterion == ChannelCriterion::L1) {
        const int layer = current.spec.flags[size_t(f)].decision_layer;
        const std::string wname = current.spec.layers[size_t(layer)].name + ".w";
        scores = l1_scores(current.weights.at(wname));
      } else {
        scores = taylor_scores(current, val)[size_t(f)].scores;
      }
      flag_mask = select_channels(&scores, base_lengths[size_t(f)], counts[size_t(f)],
                                  SelectStrategy::TopMetric, stage_rng);
    }
    composed.retain[size_t(f)] = flag_mask;

    MaskSet stage_masks = MaskSet::all_ones(current.spec.flag_lengths());
    stage_masks.retain[size_t(f)] = flag_mask;
    current = rebuild(current, stage_masks, InitStrategy::Pretrained, 0);

    if (stage_epochs > 0) {
      TrainConfig stage_cfg = job.finetune;
      stage_cfg.epochs = stage_epochs;
      stage_cfg.seed = stage_rng.child(7).seed();
      Trainer trainer(current, stage_cfg);
      trainer.train(train, val);
    }
  }

  const int remaining = std::max(0, job.finetune.epochs - stage_epochs * flag_count);
  if (remaining > 0) {
    TrainConfig final_cfg = job.finetune;
    final_cfg.epochs = remaining;
    Trainer trainer(current, final_cfg);
    trainer.train(train, val);
  }
  return finish_outcome(base, std::move(current), std::move(composed), val);
}

}  // namespace boxprune
