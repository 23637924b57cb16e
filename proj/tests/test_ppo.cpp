#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <utility>

#include "boxprune/ppo.hpp"

using namespace boxprune;

namespace {

RewardConfig desk_reward(double ce = 0.5) {
  RewardConfig r;
  r.expected_accuracy = 0.9;
  r.expected_pruned = ce;
  return r;
}

EnvQueue surrogate_queue(int n, double ce = 0.5, uint64_t seed = 42) {
  EnvQueue q;
  for (int i = 0; i < n; ++i) {
    q.add(std::make_unique<SurrogateEnv>(i, cnet_small(), desk_reward(ce),
                                         seed + uint64_t(i)));
  }
  return q;
}

}  // namespace

TEST_CASE("gae with lambda=1, gamma=1 is the Monte-Carlo advantage") {
  // terminal-only reward episodes: A_t = R - V(s_t) for every t
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int l = 2 + int(rng.uniform_int(12));
    std::vector<double> rewards(size_t(l), 0.0), values(size_t(l), 0.0);
    rewards.back() = rng.uniform(-1, 2);
    for (auto& v : values) v = rng.uniform(-1, 1);
    const auto adv = gae_advantages(rewards, values, 1.0, 1.0);
    for (int t = 0; t < l; ++t) {
      CHECK(adv[size_t(t)] ==
            doctest::Approx(rewards.back() - values[size_t(t)]).epsilon(1e-12));
    }
  }
}

TEST_CASE("gae telescopes correctly for general gamma/lambda") {
  const std::vector<double> rewards = {0, 0, 1.5};
  const std::vector<double> values = {0.2, 0.4, 0.6};
  const double gamma = 0.9, lambda = 0.8;
  const auto adv = gae_advantages(rewards, values, gamma, lambda);
  const double d2 = 1.5 - 0.6;
  const double d1 = 0.9 * 0.6 - 0.4;
  const double d0 = 0.9 * 0.4 - 0.2;
  CHECK(adv[2] == doctest::Approx(d2).epsilon(1e-12));
  CHECK(adv[1] == doctest::Approx(d1 + gamma * lambda * d2).epsilon(1e-12));
  CHECK(adv[0] ==
        doctest::Approx(d0 + gamma * lambda * (d1 + gamma * lambda * d2)).epsilon(1e-12));
}

TEST_CASE("zero learning rate leaves the policy untouched") {
  EnvQueue queue = surrogate_queue(1);
  PpoConfig cfg;
  cfg.lr = 0.0;
  cfg.iterations = 3;
  cfg.episodes_per_iter = 8;
  cfg.seed = 5;
  PpoLearner learner(queue.obs_width(), "cnet-small", cfg);

  std::vector<Tensor> before;
  for (const Tensor* p : std::as_const(learner.policy()).mean_net.params()) {
    before.push_back(*p);
  }
  Rng r0(42);
  const Profile before_rollout = rollout_profile(learner.policy(), queue.env(0), true, r0);

  const auto curve = learner.train(queue);
  auto after = std::as_const(learner.policy()).mean_net.params();
  for (size_t i = 0; i < before.size(); ++i) {
    for (int64_t j = 0; j < before[i].numel(); ++j) {
      CHECK(before[i][j] == (*after[i])[j]);
    }
  }
  CHECK(learner.policy().log_std == cfg.init_log_std);
  // flat curve in the deterministic sense: the greedy rollout is unchanged
  Rng r1(42);
  const Profile after_rollout = rollout_profile(learner.policy(), queue.env(0), true, r1);
  CHECK(before_rollout.betas == after_rollout.betas);
}

TEST_CASE("parallel collection reproduces the serial episode sequence") {
  EnvQueue queue = surrogate_queue(4);
  PpoConfig cfg;
  cfg.episodes_per_iter = 16;
  cfg.seed = 11;

  cfg.workers = 1;
  PpoLearner serial(queue.obs_width(), "cnet-small", cfg);
  const auto a = serial.collect_episodes(queue, 0);

  cfg.workers = 4;
  PpoLearner parallel(queue.obs_width(), "cnet-small", cfg);
  const auto b = parallel.collect_episodes(queue, 0);

  REQUIRE(a.size() == b.size());
  for (size_t e = 0; e < a.size(); ++e) {
    CHECK(a[e].env_id == b[e].env_id);
    CHECK(a[e].terminal_reward == b[e].terminal_reward);
    CHECK(a[e].accuracy == b[e].accuracy);
    CHECK(a[e].pruned_fraction == b[e].pruned_fraction);
    REQUIRE(a[e].steps.size() == b[e].steps.size());
    for (size_t t = 0; t < a[e].steps.size(); ++t) {
      CHECK(a[e].steps[t].action_raw == b[e].steps[t].action_raw);
      CHECK(a[e].steps[t].log_prob == b[e].steps[t].log_prob);
      CHECK(a[e].steps[t].value == b[e].steps[t].value);
      CHECK(a[e].steps[t].obs.values == b[e].steps[t].obs.values);
    }
  }
}

TEST_CASE("episode records satisfy the structural invariants") {
  EnvQueue queue = surrogate_queue(3);
  PpoConfig cfg;
  cfg.episodes_per_iter = 9;
  cfg.seed = 2;
  PpoLearner learner(queue.obs_width(), "cnet-small", cfg);
  const auto episodes = learner.collect_episodes(queue, 0);
  CHECK(episodes.size() == 9);
  // circular queue order: env ids cycle 0,1,2,0,1,2,...
  for (size_t e = 0; e < episodes.size(); ++e) {
    CHECK(episodes[e].env_id == int(e % 3));
    CHECK(episodes[e].steps.size() == 6);
    for (size_t t = 0; t + 1 < episodes[e].rewards.size(); ++t) {
      CHECK(episodes[e].rewards[t] == 0.0);
    }
    CHECK(episodes[e].rewards.back() == episodes[e].terminal_reward);
  }
}

TEST_CASE("policy checkpoints round-trip and reject width mismatches") {
  EnvQueue queue = surrogate_queue(1);
  PpoConfig cfg;
  cfg.iterations = 2;
  cfg.episodes_per_iter = 8;
  cfg.seed = 9;
  PpoLearner learner(queue.obs_width(), "cnet-small", cfg);
  learner.train(queue);

  const std::string path = "policy_test.bin";
  learner.save(path);
  Policy loaded = load_policy(path);
  CHECK(loaded.arch == "cnet-small");
  CHECK(loaded.log_std == learner.policy().log_std);

  Rng rng(3);
  Profile a = rollout_profile(learner.policy(), queue.env(0), true, rng);
  Rng rng2(3);
  Profile b = rollout_profile(loaded, queue.env(0), true, rng2);
  CHECK(a.betas == b.betas);
  CHECK(a.provenance.generator == "rl-policy");
  CHECK(int(a.betas.size()) == queue.episode_len());

  // deterministic rollouts repeat; stochastic ones differ across seeds
  Rng rng3(99);
  Profile c = rollout_profile(loaded, queue.env(0), true, rng3);
  CHECK(c.betas == a.betas);
  Rng s1(1), s2(2);
  Profile d = rollout_profile(loaded, queue.env(0), false, s1);
  Profile e = rollout_profile(loaded, queue.env(0), false, s2);
  CHECK(d.betas != e.betas);

  // architecture mismatch: a resnet20-4 env has a wider observation
  SurrogateEnv wide(7, resnet20_4(), desk_reward(), 3);
  CHECK_THROWS_AS(rollout_profile(loaded, wide, true, rng), ConfigError);
  std::filesystem::remove(path);
}

TEST_CASE("ppo converges on the surrogate within 200 iterations") {
  EnvQueue queue = surrogate_queue(1, 0.5, 42);
  auto* env = dynamic_cast<SurrogateEnv*>(&queue.env(0));
  const double r_star = env->reward_of(env->optimum());

  PpoConfig cfg;
  cfg.iterations = 120;
  cfg.episodes_per_iter = 32;
  cfg.seed = 7;
  PpoLearner learner(queue.obs_width(), "cnet-small", cfg);
  learner.train(queue);

  Rng rng(3);
  Profile p = rollout_profile(learner.policy(), queue.env(0), true, rng);
  CHECK(env->reward_of(p.betas) >= 0.9 * r_star);  // acceptance runs 0.95
}
