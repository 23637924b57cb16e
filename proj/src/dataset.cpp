#include "boxprune/dataset.hpp"

#include <fstream>
#include <numeric>

namespace boxprune {

using nlohmann::json;

namespace {

constexpr int kCifarDim = 32;
constexpr int kCifarChannels = 3;
constexpr int kCifarClasses = 10;
constexpr int kCifarRecordBytes = 1 + kCifarDim * kCifarDim * kCifarChannels;

// Splits samples into train/val with a seeded shuffle.
Dataset split_dataset(std::string name, int classes, Tensor images,
                      std::vector<int> labels, double val_fraction, Rng& rng) {
  const int n = images.dim(0);
  std::vector<int> order(size_t(n), 0);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);

  const int n_val = std::max(1, int(std::lround(val_fraction * n)));
  const int n_train = n - n_val;
  if (n_train < 1) throw ConfigError("dataset: no training samples after split");

  const int64_t sample = images.numel() / n;
  auto gather = [&](int start, int count) {
    LabeledData d;
    d.images = Tensor({count, images.dim(1), images.dim(2), images.dim(3)});
    d.labels.resize(size_t(count));
    for (int i = 0; i < count; ++i) {
      const int src = order[size_t(start + i)];
      std::copy(images.data() + src * sample, images.data() + (src + 1) * sample,
                d.images.data() + int64_t(i) * sample);
      d.labels[size_t(i)] = labels[size_t(src)];
    }
    return d;
  };

  Dataset out;
  out.name = std::move(name);
  out.num_classes = classes;
  out.train = gather(0, n_train);
  out.val = gather(n_train, n_val);
  return out;
}

}  // namespace

json SyntheticSpec::to_json() const {
  return json{{"height", height},   {"width", width}, {"channels", channels},
              {"classes", classes}, {"samples", samples}, {"seed", seed},
              {"noise", noise},     {"val_fraction", val_fraction}};
}

SyntheticSpec SyntheticSpec::from_json(const json& j) {
  SyntheticSpec s;
  s.height = j.value("height", s.height);
  s.width = j.value("width", s.width);
  s.channels = j.value("channels", s.channels);
  s.classes = j.value("classes", s.classes);
  s.samples = j.value("samples", s.samples);
  s.seed = j.value("seed", s.seed);
  s.noise = j.value("noise", s.noise);
  s.val_fraction = j.value("val_fraction", s.val_fraction);
  return s;
}

Dataset make_synthetic(const SyntheticSpec& spec) {
  if (spec.classes < 2) throw ConfigError("synthetic: need at least 2 classes");
  if (spec.samples < 2 * spec.classes) {
    throw ConfigError("synthetic: need at least 2 samples per class");
  }
  Rng rng(spec.seed);
  const int64_t pixels = int64_t(spec.height) * spec.width * spec.channels;

  std::vector<std::vector<real>> templates(size_t(spec.classes));
  for (auto& t : templates) {
    t.resize(size_t(pixels));
    for (auto& v : t) v = real(rng.uniform(-1.0, 1.0));
  }

  Tensor images({spec.samples, spec.height, spec.width, spec.channels});
  std::vector<int> labels(size_t(spec.samples));
  Rng noise_rng = rng.child(1);
  for (int i = 0; i < spec.samples; ++i) {
    const int cls = i % spec.classes;  // balanced by construction
    labels[size_t(i)] = cls;
    real* dst = images.data() + int64_t(i) * pixels;
    const auto& tpl = templates[size_t(cls)];
    for (int64_t p = 0; p < pixels; ++p) {
      dst[p] = tpl[size_t(p)] + real(spec.noise * noise_rng.normal());
    }
  }

  Rng split_rng = rng.child(2);
  return split_dataset("synthetic-" + std::to_string(spec.seed), spec.classes,
                       std::move(images), std::move(labels), spec.val_fraction,
                       split_rng);
}

Dataset load_cifar10(const std::vector<std::string>& bin_files, int subset_n,
                     uint64_t seed, double val_fraction) {
  if (bin_files.empty()) throw ConfigError("cifar10: no input files");
  std::vector<unsigned char> raw;
  for (const auto& path : bin_files) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cifar10: cannot open " + path);
    in.seekg(0, std::ios::end);
    const auto size = in.tellg();
    in.seekg(0);
    if (size <= 0 || size % kCifarRecordBytes != 0) {
      throw ConfigError("cifar10: " + path + " size is not a multiple of " +
                        std::to_string(kCifarRecordBytes) + " bytes");
    }
    const size_t old = raw.size();
    raw.resize(old + size_t(size));
    in.read(reinterpret_cast<char*>(raw.data() + old), size);
    if (!in) throw ConfigError("cifar10: short read on " + path);
  }

  const int total = int(raw.size()) / kCifarRecordBytes;
  Rng rng(seed);
  std::vector<int> picked(size_t(total), 0);
  std::iota(picked.begin(), picked.end(), 0);
  if (subset_n > 0 && subset_n < total) {
    picked = rng.sample_indices(total, subset_n);
  }

  const int n = int(picked.size());
  Tensor images({n, kCifarDim, kCifarDim, kCifarChannels});
  std::vector<int> labels(size_t(n), 0);
  for (int i = 0; i < n; ++i) {
    const unsigned char* rec = raw.data() + size_t(picked[size_t(i)]) * kCifarRecordBytes;
    const int label = rec[0];
    if (label >= kCifarClasses) {
      throw ConfigError("cifar10: label out of range in record " +
                        std::to_string(picked[size_t(i)]));
    }
    labels[size_t(i)] = label;
    // channel-planar -> NHWC, scaled to [-1, 1]
    for (int c = 0; c < kCifarChannels; ++c) {
      const unsigned char* plane = rec + 1 + c * kCifarDim * kCifarDim;
      for (int h = 0; h < kCifarDim; ++h) {
        for (int w = 0; w < kCifarDim; ++w) {
          images.at(i, h, w, c) =
              real(plane[h * kCifarDim + w]) / real(127.5) - real(1);
        }
      }
    }
  }

  Rng split_rng = rng.child(1);
  return split_dataset("cifar10", kCifarClasses, std::move(images), std::move(labels),
                       val_fraction, split_rng);
}

Dataset load_dataset(const json& j, uint64_t seed_offset) {
  if (j.contains("synthetic")) {
    SyntheticSpec spec = SyntheticSpec::from_json(j.at("synthetic"));
    spec.seed += seed_offset;
    return make_synthetic(spec);
  }
  if (j.contains("cifar10")) {
    const auto& c = j.at("cifar10");
    return load_cifar10(c.at("files").get<std::vector<std::string>>(),
                        c.value("subset", 0), c.value("seed", uint64_t(1)) + seed_offset,
                        c.value("val_fraction", 0.1));
  }
  throw ConfigError("dataset spec needs a 'synthetic' or 'cifar10' entry");
}

}  // namespace boxprune
