// End-to-end acceptance gate: one pass/fail line per criterion, nonzero
// exit if any fails. Criteria 7 and 8 train policies and take minutes;
// run a subset with e.g. `acceptance 1 2 3`.

#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <vector>

#include "boxprune/checkpoint.hpp"
#include "boxprune/experiments.hpp"
#include "boxprune/metrics.hpp"
#include "boxprune/ppo.hpp"
#include "boxprune/rewards.hpp"
#include "test_util.hpp"

using namespace boxprune;
using namespace boxprune::testutil;
namespace fs = std::filesystem;

namespace {

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

struct Check {
  bool ok = true;
  std::ostringstream detail;

  void expect(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail << (detail.str().empty() ? "" : "; ") << what;
    }
  }
};

int g_failures = 0;

void run_criterion(int id, const std::string& name,
                   const std::function<void(Check&)>& fn) {
  Check check;
  const double t0 = now_s();
  try {
    fn(check);
  } catch (const std::exception& e) {
    check.ok = false;
    check.detail << "exception: " << e.what();
  }
  const double dt = now_s() - t0;
  std::ostringstream line;
  line << (check.ok ? "PASS" : "FAIL") << " criterion " << id << ": " << name << " ["
       << std::fixed << dt << "s]";
  if (!check.ok) line << " -- " << check.detail.str();
  std::cout << line.str() << std::endl;
  if (!check.ok) ++g_failures;
}

// ---------------------------------------------------------------------------
// criterion 1: gradient correctness over 100 randomized small shapes

real weighted_sum(const Tensor& y, const Tensor& r) {
  real s = 0;
  for (int64_t i = 0; i < y.numel(); ++i) s += y[i] * r[i];
  return s;
}

void criterion_gradients(Check& check) {
  int shapes_checked = 0;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed * 131 + 17);

    {  // conv2d
      const int n = 1 + int(rng.uniform_int(2)), h = 4 + int(rng.uniform_int(3));
      const int ci = 1 + int(rng.uniform_int(3)), co = 1 + int(rng.uniform_int(3));
      const int stride = 1 + int(rng.uniform_int(2));
      Tensor x = random_tensor({n, h, h, ci}, rng);
      Tensor w = random_tensor({3, 3, ci, co}, rng, real(0.5));
      Tensor r = random_tensor(ops::conv2d(x, w, stride, true).shape(), rng);
      Tensor gx(x.shape()), gw(w.shape());
      ops::conv2d_backward(x, w, r, stride, true, &gx, &gw);
      auto fx = [&](const Tensor& t) { return weighted_sum(ops::conv2d(t, w, stride, true), r); };
      auto fw = [&](const Tensor& t) { return weighted_sum(ops::conv2d(x, t, stride, true), r); };
      check.expect(max_rel_error(gx, finite_diff(fx, x, kGradCheckStep)) < kGradCheckTol,
                   "conv gx seed " + std::to_string(seed));
      check.expect(max_rel_error(gw, finite_diff(fw, w, kGradCheckStep)) < kGradCheckTol,
                   "conv gw seed " + std::to_string(seed));
      ++shapes_checked;
    }
    {  // batchnorm (train mode)
      const int c = 2 + int(rng.uniform_int(3));
      Tensor x = random_tensor({2, 3, 3, c}, rng, real(1.5));
      Tensor gamma = random_tensor({c}, rng), beta = random_tensor({c}, rng);
      ops::BatchNormCache cache;
      Tensor rm({c}), rv = Tensor::full({c}, 1);
      Tensor y = ops::batchnorm_train(x, gamma, beta, rm, rv, kBatchNormEps,
                                      kBatchNormMomentum, &cache);
      Tensor r = random_tensor(y.shape(), rng);
      Tensor gx(x.shape()), gg({c}), gb({c});
      ops::batchnorm_backward(cache, gamma, r, &gx, &gg, &gb);
      auto f = [&](const Tensor& t) {
        Tensor m({c}), v = Tensor::full({c}, 1);
        return weighted_sum(ops::batchnorm_train(t, gamma, beta, m, v, kBatchNormEps,
                                                 kBatchNormMomentum, nullptr),
                            r);
      };
      check.expect(max_rel_error(gx, finite_diff(f, x, kGradCheckStep)) < kGradCheckTol,
                   "batchnorm gx seed " + std::to_string(seed));
      ++shapes_checked;
    }
    {  // relu (inputs nudged off the kink)
      const int c = 1 + int(rng.uniform_int(4));
      Tensor x = random_tensor({2, 3, 3, c}, rng);
      for (int64_t i = 0; i < x.numel(); ++i) {
        if (std::abs(x[i]) < real(0.05)) x[i] += x[i] >= 0 ? real(0.1) : real(-0.1);
      }
      Tensor r = random_tensor(x.shape(), rng);
      Tensor gx(x.shape());
      ops::relu_backward(x, r, &gx);
      auto f = [&](const Tensor& t) { return weighted_sum(ops::relu(t), r); };
      check.expect(max_rel_error(gx, finite_diff(f, x, kGradCheckStep)) < kGradCheckTol,
                   "relu seed " + std::to_string(seed));
      ++shapes_checked;
    }
    {  // maxpool
      const int c = 1 + int(rng.uniform_int(3));
      Tensor x = random_tensor({2, 4, 4, c}, rng);
      for (int64_t i = 0; i < x.numel(); ++i) x[i] += real(0.001) * real(i % 97);
      std::vector<int64_t> argmax;
      Tensor y = ops::maxpool2(x, &argmax);
      Tensor r = random_tensor(y.shape(), rng);
      Tensor gx(x.shape());
      ops::maxpool2_backward(argmax, r, &gx);
      auto f = [&](const Tensor& t) { return weighted_sum(ops::maxpool2(t, nullptr), r); };
      check.expect(max_rel_error(gx, finite_diff(f, x, kGradCheckStep)) < kGradCheckTol,
                   "maxpool seed " + std::to_string(seed));
      ++shapes_checked;
    }
    {  // dense
      const int f_in = 3 + int(rng.uniform_int(5)), k = 2 + int(rng.uniform_int(4));
      Tensor x = random_tensor({3, f_in}, rng);
      Tensor w = random_tensor({f_in, k}, rng);
      Tensor b = random_tensor({k}, rng);
      Tensor r = random_tensor(ops::dense(x, w, b).shape(), rng);
      Tensor gx(x.shape()), gw(w.shape()), gb(b.shape());
      ops::dense_backward(x, w, r, &gx, &gw, &gb);
      auto fx = [&](const Tensor& t) { return weighted_sum(ops::dense(t, w, b), r); };
      auto fw = [&](const Tensor& t) { return weighted_sum(ops::dense(x, t, b), r); };
      auto fb = [&](const Tensor& t) { return weighted_sum(ops::dense(x, w, t), r); };
      check.expect(max_rel_error(gx, finite_diff(fx, x, kGradCheckStep)) < kGradCheckTol,
                   "dense gx seed " + std::to_string(seed));
      check.expect(max_rel_error(gw, finite_diff(fw, w, kGradCheckStep)) < kGradCheckTol,
                   "dense gw seed " + std::to_string(seed));
      check.expect(max_rel_error(gb, finite_diff(fb, b, kGradCheckStep)) < kGradCheckTol,
                   "dense gb seed " + std::to_string(seed));
      ++shapes_checked;
    }
  }
  check.expect(shapes_checked == 100, "expected 100 randomized shapes");
}

// ---------------------------------------------------------------------------
// criterion 2: physical rebuild equals the Hadamard-masked forward

void criterion_mask_equivalence(Check& check) {
  for (const NetworkSpec& spec : {cnet_small(), resnet20_4()}) {
    Net base = init_net(spec, 7);
    Rng rng(23);
    Batch batch;
    batch.images = random_tensor({8, 8, 8, 1}, rng);
    batch.labels = {0, 1, 2, 3, 0, 1, 2, 3};

    for (int trial = 0; trial < 50; ++trial) {
      Rng mask_rng = rng.child(uint64_t(trial));
      Profile p = random_profile(spec.arch, spec.flag_count(), mask_rng, 0.15, 1.0);
      const MaskSet masks = materialize(p, spec.flag_lengths(), mask_rng);

      Net rebuilt = rebuild(base, masks, InitStrategy::Pretrained, 0);
      Net zeroed = base;
      zeroed.weights = hadamard_masked_weights(base, masks);

      Tape t1(rebuilt.spec), t2(spec);
      WeightMap w1 = rebuilt.weights, w2 = zeroed.weights;
      t1.forward(w1, batch, Mode::Eval);
      t2.forward(w2, batch, Mode::Eval);
      const Tensor& a = t1.logits();
      const Tensor& b = t2.logits();
      double worst = 0;
      for (int64_t i = 0; i < a.numel(); ++i) {
        worst = std::max(worst, std::abs(double(a[i]) - double(b[i])));
      }
      check.expect(worst < 1e-5, spec.arch + " trial " + std::to_string(trial) +
                                     " max-abs " + std::to_string(worst));
    }
  }
}

// ---------------------------------------------------------------------------
// criterion 3: flag topology conformance

void criterion_flag_topology(Check& check) {
  NetworkSpec cnet = build_cnet(32, 10);
  check.expect(cnet.flag_count() == 6, "cnet-32 flag count");
  check.expect(cnet.flag_lengths() == std::vector<int>(6, 32), "cnet-32 lengths");

  NetworkSpec r16 = build_resnet20(16, 10);
  const std::vector<int> want16 = {16, 16, 16, 16, 16, 32, 32, 32, 32, 128, 128, 128, 128};
  check.expect(r16.flag_count() == 13, "resnet20-16 flag count");
  check.expect(r16.flag_lengths() == want16, "resnet20-16 lengths");

  NetworkSpec r64 = build_resnet20(64, 10);
  const std::vector<int> want64 = {64, 64, 64, 64, 64, 128, 128, 128, 128, 512, 512, 512, 512};
  check.expect(r64.flag_count() == 13, "resnet20-64 flag count");
  check.expect(r64.flag_lengths() == want64, "resnet20-64 lengths");
}

// ---------------------------------------------------------------------------
// criterion 4: CF oracle (exact integer agreement on 200 random profiles)

int64_t oracle_walk(const NetworkSpec& spec, const std::vector<int>& retained) {
  // independent shape propagation, as in the unit suite but self-contained
  int64_t total = 0;
  std::vector<int> live(spec.layers.size(), 0);
  int flatten_mult = 1;
  for (const auto& l : spec.layers) {
    if (l.kind == LayerKind::Dense) flatten_mult = l.replicate;
  }
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    switch (l.kind) {
      case LayerKind::Input:
        live[i] = l.out_channels;
        break;
      case LayerKind::Conv: {
        const int out = l.out_flag >= 0 ? retained[size_t(l.out_flag)] : l.out_channels;
        total += int64_t(l.kernel) * l.kernel * live[size_t(l.input)] * out;
        live[i] = out;
        break;
      }
      case LayerKind::Flatten:
        live[i] = live[size_t(l.input)] * flatten_mult;
        break;
      case LayerKind::Dense:
        total += int64_t(live[size_t(l.input)]) * l.out_channels + l.out_channels;
        live[i] = l.out_channels;
        break;
      default:
        live[i] = live[size_t(l.input)];
        break;
    }
  }
  return total;
}

void criterion_cf_oracle(Check& check) {
  for (const NetworkSpec& spec :
       {build_cnet(32, 10), build_resnet20(16, 10), build_resnet20(64, 10),
        cnet_small(), resnet20_4()}) {
    Rng rng(404);
    for (int trial = 0; trial < 200; ++trial) {
      Rng child = rng.child(uint64_t(trial));
      Profile p = random_profile(spec.arch, spec.flag_count(), child, 0.12, 1.0);
      const auto counts = retained_counts(p, spec.flag_lengths());
      const int64_t a = param_count_from_retained(spec, counts);
      const int64_t b = oracle_walk(spec, counts);
      if (a != b) {
        check.expect(false, spec.arch + " trial " + std::to_string(trial) + ": " +
                                std::to_string(a) + " != " + std::to_string(b));
        return;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// criterion 5: reward formulas

void criterion_rewards(Check& check) {
  RewardConfig cfg;
  cfg.expected_accuracy = 0.9;
  cfg.expected_pruned = 0.5;
  cfg.sigma = 0.3;
  check.expect(gaussian_reward(0.9, 0.5, cfg) == 1.0, "gaussian fixed point not exact");

  for (double sigma : {0.1, 0.3, 0.5}) {
    cfg.sigma = sigma;
    const int n = 101;
    int best = 0;
    for (int i = 1; i < n; ++i) {
      if (gaussian_reward(0.9, double(i) / n, cfg) >
          gaussian_reward(0.9, double(best) / n, cfg)) {
        best = i;
      }
    }
    check.expect(std::abs(double(best) / n - 0.5) <= 1.0 / n + 1e-12,
                 "gaussian argmax off C_e at sigma " + std::to_string(sigma));
  }

  Rng rng(5);
  for (int t = 0; t < 500; ++t) {
    const double a = rng.uniform(0, 1.1), c = rng.uniform(0, 1);
    const double want = a / 0.9 * (1 - c) * (1 - c);
    check.expect(std::abs(n2n_reward(a, c, cfg) - want) < 1e-12, "n2n mismatch");
  }

  // hyperbolic vs direct evaluation
  RewardConfig hyp;
  hyp.kind = RewardKind::Hyperbolic;
  hyp.expected_accuracy = 0.9;
  hyp.expected_pruned = 0.8;
  hyp.tau = 0.1;
  auto rc = [&](double pruned) {
    return (std::tanh((pruned - 0.8) / 0.1) + std::tanh(0.8 / 0.1)) /
           (std::tanh(0.2 / 0.1) + std::tanh(0.8 / 0.1));
  };
  auto ra = [&](double acc) {
    return (std::tanh((acc / 0.9 - 0.9) / 0.1) + std::tanh(0.9 / 0.1)) /
           (std::tanh(0.1 / 0.1) + std::tanh(0.9 / 0.1));
  };
  for (int t = 0; t < 500; ++t) {
    std::vector<double> fracs(6);
    for (auto& f : fracs) f = rng.uniform(0.1, 1.0);
    const double acc = rng.uniform(0.05, 1.0);
    double want = 0;
    for (double f : fracs) want += rc(1.0 - f);
    want *= ra(acc);
    const auto got = hyperbolic_reward(fracs, acc, hyp);
    check.expect(std::abs(got.back() - want) < 1e-9, "hyperbolic mismatch");
    for (size_t i = 0; i + 1 < got.size(); ++i) {
      check.expect(got[i] == 0.0, "hyperbolic non-terminal reward");
    }
  }
}

// ---------------------------------------------------------------------------
// criterion 6: taylor scores vs leave-one-channel-out loss change

void criterion_taylor_validity(Check& check) {
  SyntheticSpec sspec;
  sspec.samples = 1024;
  sspec.seed = 50;
  sspec.noise = 0.8;
  sspec.classes = 8;
  Dataset data = make_synthetic(sspec);

  NetworkSpec spec = build_convnet(3, 6, 8, {8, 8, 1});
  Net net = init_net(spec, 60);
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.seed = 3;
  Trainer trainer(net, cfg);
  trainer.train(data.train, data.val);

  std::vector<int> idx(size_t(data.val.size()));
  std::iota(idx.begin(), idx.end(), 0);
  Batch full = gather_batch(data.val, idx, 0, data.val.size());
  Tape tape(spec);
  WeightMap w = net.weights;
  const double base_loss = tape.forward(w, full, Mode::Eval);

  const auto taylor = taylor_scores(net, data.val);
  for (int f = 0; f < spec.flag_count(); ++f) {
    std::vector<double> deltas, scores;
    for (int j = 0; j < 6; ++j) {
      MaskSet masks = MaskSet::all_ones(spec.flag_lengths());
      masks.retain[size_t(f)][size_t(j)] = 0;
      WeightMap masked = hadamard_masked_weights(net, masks);
      Tape probe(spec);
      deltas.push_back(std::abs(probe.forward(masked, full, Mode::Eval) - base_loss));
      scores.push_back(double(taylor[size_t(f)].scores[size_t(j)]));
    }
    const double rho = spearman(scores, deltas);
    check.expect(rho >= 0.8, "layer " + std::to_string(f) + " spearman " +
                                 std::to_string(rho));
  }
}

// ---------------------------------------------------------------------------
// criterion 7: PPO on the seeded surrogate oracle

void criterion_ppo_surrogate(Check& check) {
  for (double ce : {0.5, 0.75}) {
    RewardConfig reward;
    reward.expected_accuracy = 0.9;
    reward.expected_pruned = ce;
    reward.sigma = 0.3;
    EnvQueue queue;
    queue.add(std::make_unique<SurrogateEnv>(0, cnet_small(), reward, 42));
    auto* env = dynamic_cast<SurrogateEnv*>(&queue.env(0));
    const double r_star = env->reward_of(env->optimum());

    PpoConfig cfg;
    cfg.iterations = 200;
    cfg.episodes_per_iter = 32;
    cfg.seed = 7;
    PpoLearner learner(queue.obs_width(), "cnet-small", cfg);
    learner.train(queue);

    Rng rng(3);
    Profile p = rollout_profile(learner.policy(), queue.env(0), true, rng);
    const double r = env->reward_of(p.betas);
    check.expect(r >= 0.95 * r_star, "C_e " + std::to_string(ce) + ": rollout reward " +
                                         std::to_string(r) + " < 0.95 * " +
                                         std::to_string(r_star));
    const double c = compression_of(p, env->spec()).c;
    check.expect(std::abs(c - ce) <= reward.sigma,
                 "C_e " + std::to_string(ce) + ": terminal C " + std::to_string(c));
  }
}

// ---------------------------------------------------------------------------
// criterion 8: end-to-end RL at desk scale with transfer above the median

void criterion_rl_end_to_end(Check& check) {
  auto make_data = [](uint64_t seed) {
    SyntheticSpec s;
    s.seed = seed;
    return make_synthetic(s);
  };
  Dataset dsa = make_data(100), dsb = make_data(101), dsc = make_data(102);
  NetworkSpec spec = cnet_small();

  auto train_base = [&](const Dataset& d, uint64_t seed) {
    Net n = init_net(spec, seed);
    TrainConfig cfg;
    cfg.epochs = 15;
    cfg.seed = 3;
    Trainer t(n, cfg);
    t.train(d.train, d.val);
    return n;
  };
  Net base_a = train_base(dsa, 200);
  Net base_b = train_base(dsb, 201);
  Net base_c = train_base(dsc, 202);

  // 60-profile random-search distribution on the held-out dataset
  Rng rng(1);
  TrainConfig ft;
  ft.epochs = 8;
  std::vector<std::pair<double, double>> dist;  // (cf, accuracy)
  for (int i = 0; i < 60; ++i) {
    for (uint64_t attempt = 0;; ++attempt) {
      Rng prof_rng = rng.child(uint64_t(i) * 1000 + attempt);
      Profile p = random_profile(spec.arch, 6, prof_rng);
      if (compression_of(p, spec).cf > 6.0) continue;
      PruneJob job;
      job.base = &base_c;
      job.profile = p;
      job.finetune = ft;
      job.finetune.seed = 7000 + uint64_t(i);
      job.seed = 7000 + uint64_t(i);
      const auto out = prune_and_finetune(job, dsc.train, dsc.val);
      dist.emplace_back(out.compression.cf, double(out.accuracy));
      break;
    }
  }

  // policy search over the two-environment queue; the tighter sigma parks
  // the converged policy's CF where the random-search distribution is dense
  RewardConfig ra;
  ra.expected_pruned = 0.5;
  ra.sigma = 0.2;
  ra.expected_accuracy = double(evaluate(base_a, dsa.val));
  RewardConfig rb = ra;
  rb.expected_accuracy = double(evaluate(base_b, dsb.val));
  TrainConfig envft;
  envft.epochs = 3;
  EnvQueue queue;
  queue.add(std::make_unique<NetPruneEnv>(0, &base_a, &dsa, ra, envft));
  queue.add(std::make_unique<NetPruneEnv>(1, &base_b, &dsb, rb, envft));

  PpoConfig pcfg;
  pcfg.iterations = 150;
  pcfg.episodes_per_iter = 12;
  pcfg.seed = 7;
  PpoLearner learner(queue.obs_width(), spec.arch, pcfg);
  learner.train(queue);

  // episode-structure bookkeeping for criterion 10
  for (const auto& ep : learner.last_episodes()) {
    check.expect(int(ep.steps.size()) == 6, "episode length");
  }

  Rng roll_rng(3);
  Profile profile = rollout_profile(learner.policy(), queue.env(0), true, roll_rng);
  const double cf = compression_of(profile, spec).cf;

  // out-of-the-box transfer to the held-out dataset
  std::vector<double> accs;
  for (uint64_t seed : {1ULL, 2ULL, 3ULL, 4ULL, 5ULL}) {
    PruneJob job;
    job.base = &base_c;
    job.profile = profile;
    job.finetune = ft;
    job.finetune.seed = seed;
    job.seed = seed;
    accs.push_back(double(prune_and_finetune(job, dsc.train, dsc.val).accuracy));
  }
  const double mean_acc = std::accumulate(accs.begin(), accs.end(), 0.0) / accs.size();

  std::vector<double> bucket;
  for (const auto& [dcf, dacc] : dist) {
    if (dcf >= cf / 1.1 && dcf <= cf * 1.1) bucket.push_back(dacc);
  }
  check.expect(bucket.size() >= 3, "CF bucket around " + std::to_string(cf) +
                                       " has only " + std::to_string(bucket.size()) +
                                       " rows");
  std::sort(bucket.begin(), bucket.end());
  const double median = bucket.empty() ? 1.0 : bucket[bucket.size() / 2];
  check.expect(mean_acc > median,
               "transferred profile at CF " + std::to_string(cf) + " scored " +
                   std::to_string(mean_acc) + ", median " + std::to_string(median));
}

// ---------------------------------------------------------------------------
// criterion 9: pipelines are bit-deterministic given config + seeds

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void criterion_determinism(Check& check) {
  ExperimentConfig cfg;
  cfg.kind = "random-search";
  cfg.dataset = {{"synthetic", {{"samples", 96}, {"seed", 5}}}};
  cfg.seeds = {1};
  cfg.base_nets = 1;
  cfg.random_profiles = 4;
  cfg.base_train.epochs = 3;
  cfg.finetune.epochs = 2;

  for (const std::string kind : {std::string("random-search"), std::string("rl-train")}) {
    cfg.kind = kind;
    cfg.env_count = 2;
    cfg.ppo.iterations = 2;
    cfg.ppo.episodes_per_iter = 4;
    cfg.env_finetune.epochs = 1;

    const std::string dir_a = "acc9_" + kind + "_a";
    const std::string dir_b = "acc9_" + kind + "_b";
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
    cfg.out_dir = dir_a;
    run_experiment(cfg);
    cfg.out_dir = dir_b;
    run_experiment(cfg);

    const std::string file = kind == "rl-train" ? "training_curve.csv" : "results.csv";
    const std::string a = slurp(dir_a + "/" + file);
    check.expect(!a.empty(), kind + " produced no " + file);
    check.expect(a == slurp(dir_b + "/" + file), kind + " reruns differ");
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
  }
}

// ---------------------------------------------------------------------------
// criterion 10: episode structure over all stored records

void criterion_episode_structure(Check& check) {
  for (const NetworkSpec& spec : {cnet_small(), resnet20_4()}) {
    RewardConfig reward;
    reward.expected_accuracy = 0.9;
    reward.expected_pruned = 0.5;
    EnvQueue queue;
    queue.add(std::make_unique<SurrogateEnv>(0, spec, reward, 11));
    queue.add(std::make_unique<SurrogateEnv>(1, spec, reward, 12));

    PpoConfig cfg;
    cfg.iterations = 3;
    cfg.episodes_per_iter = 12;
    cfg.seed = 21;
    PpoLearner learner(queue.obs_width(), spec.arch, cfg);
    learner.train(queue);

    const int l = spec.flag_count();
    for (const auto& ep : learner.last_episodes()) {
      check.expect(int(ep.steps.size()) == l,
                   spec.arch + ": episode with " + std::to_string(ep.steps.size()) +
                       " steps, expected " + std::to_string(l));
      check.expect(int(ep.rewards.size()) == l, spec.arch + ": reward vector length");
      for (size_t t = 0; t + 1 < ep.rewards.size(); ++t) {
        check.expect(ep.rewards[t] == 0.0, spec.arch + ": non-terminal reward");
      }
      check.expect(ep.rewards.back() == ep.terminal_reward,
                   spec.arch + ": terminal reward mismatch");
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  auto wanted = [&](int id) { return only.empty() || only.count(id) > 0; };

  std::cout.setf(std::ios::fixed);
  std::cout.precision(1);

  if (wanted(1)) run_criterion(1, "gradient correctness vs finite differences", criterion_gradients);
  if (wanted(2)) run_criterion(2, "mask-equivalence of physical rebuild", criterion_mask_equivalence);
  if (wanted(3)) run_criterion(3, "flag-topology conformance", criterion_flag_topology);
  if (wanted(4)) run_criterion(4, "compression-factor oracle agreement", criterion_cf_oracle);
  if (wanted(5)) run_criterion(5, "reward formula identities", criterion_rewards);
  if (wanted(6)) run_criterion(6, "taylor first-order validity (leave-one-out)", criterion_taylor_validity);
  if (wanted(7)) run_criterion(7, "ppo convergence on the surrogate oracle", criterion_ppo_surrogate);
  if (wanted(8)) run_criterion(8, "end-to-end rl transfer above random-search median", criterion_rl_end_to_end);
  if (wanted(9)) run_criterion(9, "bit-identical pipeline reruns", criterion_determinism);
  if (wanted(10)) run_criterion(10, "episode structure of stored records", criterion_episode_structure);

  if (g_failures > 0) {
    std::cout << g_failures << " criterion(s) failed" << std::endl;
    return 1;
  }
  std::cout << "all criteria passed" << std::endl;
  return 0;
}
