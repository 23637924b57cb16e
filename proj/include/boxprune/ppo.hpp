#pragma once

#include <functional>
#include <string>
#include <vector>

#include "boxprune/env.hpp"
#include "boxprune/mlp.hpp"
#include "boxprune/profiles.hpp"

namespace boxprune {

struct PpoConfig {
  double clip_ratio = 0.2;
  double gae_lambda = 0.95;
  double gamma = 1.0;  // terminal-only rewards over 6-13 steps
  int update_epochs = 4;
  int minibatch = 64;
  std::vector<int> hidden = {64, 64};
  double lr = 3e-3;
  double init_log_std = -1.2;
  double init_action_bias = 1.0;  // start near full retention, where the
                                  // squashed action space is live
  double std_floor = 0.05;  // exploration noise never collapses below this
  double entropy_coef = 0.0;
  double value_coef = 0.5;
  int iterations = 200;
  int episodes_per_iter = 32;
  int workers = 1;
  uint64_t seed = 1;

  void validate() const;
};

struct EpisodeStep {
  Observation obs;
  double action_raw = 0;  // pre-squash Gaussian sample
  double beta = 1;
  double log_prob = 0;
  double value = 0;
};

struct EpisodeRecord {
  int env_id = -1;
  std::vector<EpisodeStep> steps;
  std::vector<double> rewards;  // zero except the terminal entry
  double accuracy = 0;
  double pruned_fraction = 0;
  double terminal_reward = 0;
};

struct IterationStats {
  int iteration = 0;
  double reward_mean = 0, reward_min = 0, reward_max = 0;
  double mean_pruned = 0;
  double mean_accuracy = 0;
};

// Gaussian policy head: state-dependent mean, state-independent log-std.
struct Policy {
  Mlp mean_net;
  double log_std;
  std::string arch;

  Policy(int obs_dim, const std::vector<int>& hidden, double init_log_std,
         uint64_t seed, std::string arch_name)
      : mean_net(obs_dim, hidden, 1, seed), log_std(init_log_std),
        arch(std::move(arch_name)) {}

  double mean(const Observation& obs);
  static double log_prob(double action, double mean, double sigma);
};

// lambda = 1, gamma = 1 reduces to Monte-Carlo advantage (terminal reward
// minus value).
std::vector<double> gae_advantages(const std::vector<double>& rewards,
                                   const std::vector<double>& values, double gamma,
                                   double lambda);

void save_policy(const std::string& path, const Policy& policy,
                 const std::vector<int>& hidden);
Policy load_policy(const std::string& path);

// One deterministic (action = mean) or stochastic episode; returns the
// produced layer-wise profile with rl-policy provenance. Throws on an
// observation-width mismatch between policy and environment.
Profile rollout_profile(Policy& policy, PruneEnv& env, bool deterministic,
                        Rng& rng);

// Clipped-surrogate PPO with a separate value net, trained from episodes
// collected over the circular queue. Episode collection runs on a worker
// pool; per-episode seeds make parallel and serial collection identical.
class PpoLearner {
 public:
  PpoLearner(int obs_dim, const std::string& arch, PpoConfig cfg);

  // Optimizers hold pointers into the policy tensors.
  PpoLearner(const PpoLearner&) = delete;
  PpoLearner& operator=(const PpoLearner&) = delete;

  // Runs cfg.iterations; per-iteration stats go to `on_iteration` (if set)
  // and are returned. Throws NumericError on divergence.
  std::vector<IterationStats> train(
      EnvQueue& queue,
      const std::function<void(const IterationStats&)>& on_iteration = {});

  std::vector<EpisodeRecord> collect_episodes(EnvQueue& queue, int iteration);

  Policy& policy() { return policy_; }
  const PpoConfig& config() const { return cfg_; }
  const std::vector<EpisodeRecord>& last_episodes() const { return last_episodes_; }

  void save(const std::string& path) const;

 private:
  void update(const std::vector<EpisodeRecord>& episodes);

  PpoConfig cfg_;
  Policy policy_;
  Mlp value_net_;
  Tensor log_std_param_;
  Tensor log_std_grad_;
  Adam policy_opt_;
  Adam value_opt_;
  Rng rng_;
  std::vector<EpisodeRecord> last_episodes_;
};

}  // namespace boxprune
