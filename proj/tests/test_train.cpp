#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "boxprune/dataset.hpp"
#include "boxprune/netzoo.hpp"
#include "boxprune/train.hpp"
#include "test_util.hpp"

using namespace boxprune;
using namespace boxprune::testutil;

namespace {

Dataset easy_two_class() {
  SyntheticSpec spec;
  spec.classes = 2;
  spec.samples = 160;
  spec.noise = 0.1;  // near-separable
  spec.seed = 21;
  return make_synthetic(spec);
}

}  // namespace

TEST_CASE("zero learning rate leaves weights unchanged") {
  Dataset data = easy_two_class();
  Net net = init_net(cnet_small(2), 3);
  const WeightMap before = net.weights;
  TrainConfig cfg;
  cfg.lr = real(1e-30);  // effectively zero; exact zero is a config error
  cfg.momentum = 0;
  cfg.weight_decay = 0;
  cfg.epochs = 1;
  Trainer trainer(net, cfg);
  trainer.run_epoch(data.train, data.val);
  for (const auto& [name, w] : net.weights) {
    if (name.find("running_") != std::string::npos) continue;  // stats do move
    const Tensor& b = before.at(name);
    for (int64_t i = 0; i < w.numel(); ++i) {
      CHECK(std::abs(w[i] - b[i]) < 1e-25);
    }
  }
  CHECK_THROWS_AS(Trainer(net, TrainConfig{.lr = 0}), ConfigError);
}

TEST_CASE("near-separable two-class set trains past 0.95") {
  // Pinned regression: seed 21 data, seed 3 init, 20 epochs.
  Dataset data = easy_two_class();
  Net net = init_net(cnet_small(2), 3);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.seed = 5;
  Trainer trainer(net, cfg);
  const EpochMetrics last = trainer.train(data.train, data.val);
  CHECK(last.val_accuracy >= 0.95);
}

TEST_CASE("same seed trains to bit-identical weights") {
  Dataset data = easy_two_class();
  auto run = [&]() {
    Net net = init_net(cnet_small(2), 7);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.seed = 11;
    Trainer trainer(net, cfg);
    trainer.train(data.train, data.val);
    return net.weights;
  };
  const WeightMap a = run();
  const WeightMap b = run();
  for (const auto& [name, w] : a) {
    const Tensor& other = b.at(name);
    for (int64_t i = 0; i < w.numel(); ++i) CHECK(w[i] == other[i]);
  }
}

TEST_CASE("evaluate counts top-1 matches") {
  // A head biased hard towards class 2 predicts it everywhere.
  NetworkSpec spec = cnet_small(4);
  Net net = init_net(spec, 1);
  for (auto& [name, w] : net.weights) {
    if (name == "head.w") w.fill(0);
    if (name == "head.b") {
      w.fill(0);
      w[2] = 100;
    }
  }
  SyntheticSpec sspec;
  sspec.classes = 4;
  sspec.samples = 64;
  sspec.seed = 5;
  Dataset data = make_synthetic(sspec);
  std::vector<int> all_twos(size_t(data.val.size()), 2);
  LabeledData relabeled{data.val.images, all_twos};
  CHECK(evaluate(net, relabeled) == doctest::Approx(1.0));

  // Random-weight net vs labels drawn independently of the images: the
  // match count is exactly Binomial(n, 1/k).
  Net random_net = init_net(spec, 99);
  SyntheticSpec big;
  big.classes = 4;
  big.samples = 1200;
  big.seed = 6;
  Dataset bigdata = make_synthetic(big);
  Rng label_rng(404);
  LabeledData noise_labels = bigdata.val;
  for (auto& l : noise_labels.labels) l = int(label_rng.uniform_int(4));
  const double acc = double(evaluate(random_net, noise_labels));
  const double n = noise_labels.size();
  const double sigma3 = 3.0 * std::sqrt(0.25 * 0.75 / n);
  CHECK(acc > 0.25 - sigma3);
  CHECK(acc < 0.25 + sigma3);

  LabeledData empty;
  CHECK_THROWS_AS(evaluate(net, empty), ConfigError);
}

TEST_CASE("lr schedule steps down at the configured fractions") {
  Dataset data = easy_two_class();
  Net net = init_net(cnet_small(2), 3);
  TrainConfig cfg;
  cfg.lr = real(0.1);
  cfg.epochs = 4;
  cfg.decay_at = {0.5, 0.75};
  Trainer trainer(net, cfg);
  CHECK(trainer.current_lr() == doctest::Approx(0.1));
  trainer.run_epoch(data.train, data.val);
  trainer.run_epoch(data.train, data.val);
  CHECK(trainer.current_lr() == doctest::Approx(0.01));  // epoch 2 of 4
  trainer.run_epoch(data.train, data.val);
  CHECK(trainer.current_lr() == doctest::Approx(0.001));
}
