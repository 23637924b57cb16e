#pragma once

#include <optional>

#include "boxprune/metrics.hpp"
#include "boxprune/profiles.hpp"
#include "boxprune/train.hpp"

namespace boxprune {

enum class InitStrategy { Pretrained, Random };
enum class Pipeline { OneShot, LayerwiseIterative };
enum class ChannelCriterion { Random, L1, Taylor };

// Weight map with masked channels zeroed in place (broadcast Hadamard over
// every governed dimension). The rebuilt net must match this net's
// eval-mode forward; it is also what observation building runs on.
WeightMap hadamard_masked_weights(const Net& net, const MaskSet& masks);

// Physically smaller network: masked channels are removed from every
// governed tensor dimension, never zero-filled. Pretrained init copies the
// surviving slices (batchnorm running stats included unless
// `reset_bn_stats`); random init redraws everything at the new shapes.
// `num_classes` replaces and re-initializes the dense head when the label
// space changes.
Net rebuild(const Net& base, const MaskSet& masks, InitStrategy init, uint64_t seed,
            bool reset_bn_stats = false,
            std::optional<int> num_classes = std::nullopt);

// Residual adds must join identical retained-channel sets; throws naming
// the block otherwise.
void validate_add_consistency(const NetworkSpec& spec);

struct PruneJob {
  const Net* base = nullptr;
  Profile profile;
  std::optional<MaskSet> masks;  // explicit channel choice (one-shot only)
  ChannelCriterion criterion = ChannelCriterion::Random;
  InitStrategy init = InitStrategy::Pretrained;
  Pipeline pipeline = Pipeline::OneShot;
  TrainConfig finetune;
  double stage_budget_frac = 0.1;  // layerwise: share of epochs per stage
  uint64_t seed = 1;
};

struct PruneOutcome {
  real accuracy = 0;
  Compression compression;
  Net net;
  MaskSet masks;  // relative to the base network
};

// Chooses channels per flag for the profile's retained counts: random
// selection, top-l1 of each decision conv, or top-taylor computed once on
// the validation split.
MaskSet choose_masks(const Net& net, const Profile& profile, ChannelCriterion criterion,
                     Rng& rng, const LabeledData* val = nullptr);

// One-shot rebuilds once and fine-tunes the full budget. The layerwise
// pipeline prunes flag by flag front to back, fine-tuning a short stage
// budget after each flag (recomputing taylor scores per stage) and spends
// the remaining epochs at the end.
PruneOutcome prune_and_finetune(const PruneJob& job, const LabeledData& train,
                                const LabeledData& val);

}  // namespace boxprune
