#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "boxprune/train.hpp"

namespace boxprune {

struct Dataset {
  std::string name;
  int num_classes = 0;
  LabeledData train;
  LabeledData val;
};

// Seeded class-template images: each class owns a fixed random template,
// samples add Gaussian pixel noise. Balanced classes, deterministic
// train/val split.
struct SyntheticSpec {
  int height = 8;
  int width = 8;
  int channels = 1;
  int classes = 4;
  int samples = 512;
  uint64_t seed = 1;
  double noise = 1.0;  // base nets land near 0.9, heavy pruning hurts
  double val_fraction = 0.25;

  nlohmann::json to_json() const;
  static SyntheticSpec from_json(const nlohmann::json& j);
};

Dataset make_synthetic(const SyntheticSpec& spec);

// CIFAR-10 binary batches: each record is 1 label byte + 3072 channel-planar
// pixel bytes. Pixels are scaled to [-1, 1]; records are converted to NHWC.
// subset_n > 0 draws a seeded random subset.
Dataset load_cifar10(const std::vector<std::string>& bin_files, int subset_n,
                     uint64_t seed, double val_fraction = 0.1);

// Dataset described by a JSON object: {"synthetic": {...}} or
// {"cifar10": {"files": [...], "subset": n}}.
Dataset load_dataset(const nlohmann::json& j, uint64_t seed_offset = 0);

}  // namespace boxprune
