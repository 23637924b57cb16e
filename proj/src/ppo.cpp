#include "boxprune/ppo.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

#include "boxprune/checkpoint.hpp"

namespace boxprune {

namespace {

constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5 * log(2*pi)
constexpr double kMaxGradNorm = 0.5;
// Small output-layer init keeps the initial action mean pinned at the
// retention bias for every observation scale.
constexpr real kPolicyHeadInitScale = real(0.01);

Tensor obs_to_row(const Observation& obs) {
  Tensor x({1, int(obs.values.size())});
  for (size_t i = 0; i < obs.values.size(); ++i) x[int64_t(i)] = real(obs.values[i]);
  return x;
}

}  // namespace

void PpoConfig::validate() const {
  if (clip_ratio <= 0 || clip_ratio >= 1) throw ConfigError("ppo: clip must be in (0,1)");
  if (gae_lambda < 0 || gae_lambda > 1) throw ConfigError("ppo: lambda must be in [0,1]");
  if (gamma < 0 || gamma > 1) throw ConfigError("ppo: gamma must be in [0,1]");
  if (update_epochs < 1) throw ConfigError("ppo: update epochs must be >= 1");
  if (episodes_per_iter < 1) throw ConfigError("ppo: need episodes per iteration");
  if (iterations < 1) throw ConfigError("ppo: iterations must be >= 1");
  if (workers < 1) throw ConfigError("ppo: workers must be >= 1");
  if (std_floor <= 0) throw ConfigError("ppo: std floor must be positive");
}

double Policy::mean(const Observation& obs) {
  if (int(obs.values.size()) != mean_net.in_dim()) {
    throw ShapeError("policy: observation width " + std::to_string(obs.values.size()) +
                     " != " + std::to_string(mean_net.in_dim()));
  }
  return double(mean_net.forward(obs_to_row(obs))[0]);
}

double Policy::log_prob(double action, double mean, double sigma) {
  const double z = (action - mean) / sigma;
  return -0.5 * z * z - std::log(sigma) - kHalfLog2Pi;
}

std::vector<double> gae_advantages(const std::vector<double>& rewards,
                                   const std::vector<double>& values, double gamma,
                                   double lambda) {
  if (rewards.size() != values.size()) {
    throw ShapeError("gae: rewards/values length mismatch");
  }
  const int l = int(rewards.size());
  std::vector<double> adv(size_t(l), 0.0);
  double running = 0.0;
  for (int t = l - 1; t >= 0; --t) {
    const double next_value = t + 1 < l ? values[size_t(t + 1)] : 0.0;
    const double delta = rewards[size_t(t)] + gamma * next_value - values[size_t(t)];
    running = delta + gamma * lambda * running;
    adv[size_t(t)] = running;
  }
  return adv;
}

void save_policy(const std::string& path, const Policy& policy,
                 const std::vector<int>& hidden) {
  TensorFile file;
  file.meta["kind"] = "policy";
  file.meta["arch"] = policy.arch;
  file.meta["obs_dim"] = policy.mean_net.in_dim();
  file.meta["hidden"] = hidden;
  file.meta["log_std"] = policy.log_std;
  for (const auto& [name, t] : policy.mean_net.state()) {
    file.tensors["policy." + name] = t;
  }
  save_tensor_file(path, file);
}

Policy load_policy(const std::string& path) {
  TensorFile file = load_tensor_file(path);
  if (file.meta.value("kind", "") != "policy") {
    throw ConfigError("not a policy checkpoint: " + path);
  }
  Policy policy(file.meta.at("obs_dim").get<int>(),
                file.meta.at("hidden").get<std::vector<int>>(),
                file.meta.at("log_std").get<double>(), 0,
                file.meta.at("arch").get<std::string>());
  std::map<std::string, Tensor> state;
  for (const auto& [name, t] : file.tensors) {
    if (name.rfind("policy.", 0) == 0) state[name.substr(7)] = t;
  }
  policy.mean_net.load_state(state);
  return policy;
}

Profile rollout_profile(Policy& policy, PruneEnv& env, bool deterministic, Rng& rng) {
  if (policy.mean_net.in_dim() != env.obs_width()) {
    throw ConfigError("rollout: policy expects observation width " +
                      std::to_string(policy.mean_net.in_dim()) + " but environment " +
                      env.spec().arch + " provides " +
                      std::to_string(env.obs_width()));
  }
  Profile p;
  p.arch = env.spec().arch;
  Observation obs = env.reset(rng);
  for (int t = 0; t < env.episode_len(); ++t) {
    const double mean = policy.mean(obs);
    const double action =
        deterministic ? mean : mean + std::exp(policy.log_std) * rng.normal();
    const StepResult result = env.step(action, rng);
    p.betas.push_back(result.beta);
    obs = result.obs;
  }
  p.provenance = {"rl-policy", nlohmann::json{{"deterministic", deterministic}},
                  rng.seed()};
  return p;
}

PpoLearner::PpoLearner(int obs_dim, const std::string& arch, PpoConfig cfg)
    : cfg_(cfg),
      policy_(obs_dim, cfg.hidden, cfg.init_log_std, cfg.seed * 2 + 1, arch),
      value_net_(obs_dim, cfg.hidden, 1, cfg.seed * 2 + 2),
      log_std_param_({1}, {real(cfg.init_log_std)}),
      log_std_grad_({1}),
      policy_opt_({}, cfg.lr),
      value_opt_({}, cfg.lr),
      rng_(cfg.seed) {
  cfg_.validate();
  std::vector<Tensor*> policy_params = policy_.mean_net.params();
  // Output bias starts at the all-retain action so early exploration stays
  // inside the squashed action range; the final weight layer shrinks so the
  // bias dominates regardless of observation magnitudes.
  Tensor& head_w = *policy_params[policy_params.size() - 2];
  for (int64_t i = 0; i < head_w.numel(); ++i) head_w[i] *= kPolicyHeadInitScale;
  policy_params[policy_params.size() - 1]->fill(real(cfg_.init_action_bias));
  policy_params.push_back(&log_std_param_);
  policy_opt_ = Adam(policy_params, cfg_.lr);
  value_opt_ = Adam(value_net_.params(), cfg_.lr);
}

std::vector<EpisodeRecord> PpoLearner::collect_episodes(EnvQueue& queue,
                                                        int iteration) {
  const int batch = cfg_.episodes_per_iter;
  const int n_envs = queue.size();
  const int workers = std::min({cfg_.workers, n_envs, batch});
  std::vector<EpisodeRecord> records{size_t(batch)};

  auto run_episode = [&](int e, Policy& policy, Mlp& value_net) {
    PruneEnv& env = queue.env(e % n_envs);
    Rng rng = rng_.child(uint64_t(iteration) * 0x10001ULL + uint64_t(e) + 11);
    EpisodeRecord rec;
    rec.env_id = env.id();
    Observation obs = env.reset(rng);
    const double sigma = std::max(std::exp(policy.log_std), cfg_.std_floor);
    for (int t = 0; t < env.episode_len(); ++t) {
      EpisodeStep step;
      step.obs = obs;
      const double mean = policy.mean(obs);
      step.action_raw = mean + sigma * rng.normal();
      step.log_prob = Policy::log_prob(step.action_raw, mean, sigma);
      step.value = double(value_net.forward(obs_to_row(obs))[0]);
      const StepResult result = env.step(step.action_raw, rng);
      step.beta = result.beta;
      rec.steps.push_back(std::move(step));
      rec.rewards.push_back(result.reward);
      if (result.done) {
        rec.accuracy = result.accuracy;
        rec.pruned_fraction = result.pruned_fraction;
        rec.terminal_reward = result.reward;
      }
      obs = result.obs;
    }
    // Episode structure is a hard invariant: l steps, terminal-only reward.
    if (int(rec.steps.size()) != env.episode_len()) {
      throw NumericError("episode length mismatch");
    }
    for (size_t t = 0; t + 1 < rec.rewards.size(); ++t) {
      if (rec.rewards[t] != 0.0) throw NumericError("non-terminal reward emitted");
    }
    return rec;
  };

  if (workers <= 1) {
    Policy policy = policy_;
    Mlp value_net = value_net_;
    for (int e = 0; e < batch; ++e) records[size_t(e)] = run_episode(e, policy, value_net);
  } else {
    // Each worker owns a disjoint set of environments; per-episode seeds
    // make the result identical to the serial order.
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors{size_t(workers)};
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w]() {
        try {
          Policy policy = policy_;
          Mlp value_net = value_net_;
          for (int e = 0; e < batch; ++e) {
            if ((e % n_envs) % workers != w) continue;
            records[size_t(e)] = run_episode(e, policy, value_net);
          }
        } catch (...) {
          errors[size_t(w)] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (const auto& err : errors) {
      if (err) std::rethrow_exception(err);
    }
  }
  return records;
}

void PpoLearner::update(const std::vector<EpisodeRecord>& episodes) {
  // Flatten all steps; GAE runs per episode.
  std::vector<const Observation*> obs;
  std::vector<double> actions, logp_old, advantages, returns;
  for (const auto& ep : episodes) {
    std::vector<double> values;
    values.reserve(ep.steps.size());
    for (const auto& s : ep.steps) values.push_back(s.value);
    const auto adv = gae_advantages(ep.rewards, values, cfg_.gamma, cfg_.gae_lambda);
    for (size_t t = 0; t < ep.steps.size(); ++t) {
      obs.push_back(&ep.steps[t].obs);
      actions.push_back(ep.steps[t].action_raw);
      logp_old.push_back(ep.steps[t].log_prob);
      advantages.push_back(adv[t]);
      returns.push_back(adv[t] + values[t]);
    }
  }
  const int total = int(obs.size());

  double adv_mean = 0, adv_sq = 0;
  for (double a : advantages) adv_mean += a;
  adv_mean /= total;
  for (double a : advantages) adv_sq += (a - adv_mean) * (a - adv_mean);
  const double adv_std = std::sqrt(adv_sq / total) + 1e-8;
  for (double& a : advantages) a = (a - adv_mean) / adv_std;

  const int obs_dim = policy_.mean_net.in_dim();
  std::vector<int> order(size_t(total), 0);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg_.update_epochs; ++epoch) {
    rng_.shuffle(order);
    for (int start = 0; start < total; start += cfg_.minibatch) {
      const int count = std::min(cfg_.minibatch, total - start);
      Tensor x({count, obs_dim});
      for (int i = 0; i < count; ++i) {
        const auto& o = obs[size_t(order[size_t(start + i)])]->values;
        for (int j = 0; j < obs_dim; ++j) x.at(i, j) = real(o[size_t(j)]);
      }

      // Policy pass.
      policy_.mean_net.zero_grads();
      log_std_grad_.fill(0);
      const double sigma =
          std::max(std::exp(double(log_std_param_[0])), cfg_.std_floor);
      Tensor means = policy_.mean_net.forward(x);
      Tensor dmeans({count, 1});
      double policy_loss = 0;
      for (int i = 0; i < count; ++i) {
        const int idx = order[size_t(start + i)];
        const double mu = double(means[i]);
        const double a = actions[size_t(idx)];
        const double adv = advantages[size_t(idx)];
        const double z = (a - mu) / sigma;
        const double logp_new = -0.5 * z * z - std::log(sigma) - kHalfLog2Pi;
        const double ratio = std::exp(logp_new - logp_old[size_t(idx)]);
        const double clipped =
            std::clamp(ratio, 1.0 - cfg_.clip_ratio, 1.0 + cfg_.clip_ratio);
        const double unclipped_obj = ratio * adv;
        const double clipped_obj = clipped * adv;
        policy_loss -= std::min(unclipped_obj, clipped_obj) / count;
        double dlogp = 0;
        if (unclipped_obj <= clipped_obj) dlogp = -unclipped_obj / count;
        dmeans[i] = real(dlogp * z / sigma);
        log_std_grad_[0] += real(dlogp * (z * z - 1.0));
      }
      log_std_grad_[0] -= real(cfg_.entropy_coef);
      policy_.mean_net.backward(dmeans);

      // Global-norm clip across all policy grads.
      std::vector<Tensor*> policy_grads = policy_.mean_net.grads();
      policy_grads.push_back(&log_std_grad_);
      double norm_sq = 0;
      for (const Tensor* g : policy_grads) {
        for (int64_t i = 0; i < g->numel(); ++i) norm_sq += double((*g)[i]) * double((*g)[i]);
      }
      const double norm = std::sqrt(norm_sq);
      if (norm > kMaxGradNorm) {
        const real scale = real(kMaxGradNorm / norm);
        for (Tensor* g : policy_grads) {
          for (int64_t i = 0; i < g->numel(); ++i) (*g)[i] *= scale;
        }
      }
      policy_opt_.step(policy_grads);
      // Keep exploration noise above the floor.
      log_std_param_[0] =
          std::max(log_std_param_[0], real(std::log(cfg_.std_floor)));

      // Value pass.
      value_net_.zero_grads();
      Tensor v = value_net_.forward(x);
      Tensor dv({count, 1});
      double value_loss = 0;
      for (int i = 0; i < count; ++i) {
        const int idx = order[size_t(start + i)];
        const double err = double(v[i]) - returns[size_t(idx)];
        value_loss += 0.5 * err * err / count;
        dv[i] = real(cfg_.value_coef * err / count);
      }
      value_net_.backward(dv);
      value_opt_.step(value_net_.grads());

      if (!std::isfinite(policy_loss) || !std::isfinite(value_loss)) {
        throw NumericError("ppo update diverged (policy loss " +
                           std::to_string(policy_loss) + ", value loss " +
                           std::to_string(value_loss) + ")");
      }
    }
  }
  policy_.log_std = double(log_std_param_[0]);
}

std::vector<IterationStats> PpoLearner::train(
    EnvQueue& queue, const std::function<void(const IterationStats&)>& on_iteration) {
  if (queue.obs_width() != policy_.mean_net.in_dim()) {
    throw ConfigError("ppo: queue observation width does not match the policy");
  }
  std::vector<IterationStats> curve;
  double best_reward = -std::numeric_limits<double>::infinity();
  std::map<std::string, Tensor> best_state = policy_.mean_net.state();
  double best_log_std = policy_.log_std;

  for (int iter = 0; iter < cfg_.iterations; ++iter) {
    last_episodes_ = collect_episodes(queue, iter);
    IterationStats stats;
    stats.iteration = iter;
    stats.reward_min = last_episodes_.front().terminal_reward;
    stats.reward_max = stats.reward_min;
    for (const auto& ep : last_episodes_) {
      stats.reward_mean += ep.terminal_reward;
      stats.reward_min = std::min(stats.reward_min, ep.terminal_reward);
      stats.reward_max = std::max(stats.reward_max, ep.terminal_reward);
      stats.mean_pruned += ep.pruned_fraction;
      stats.mean_accuracy += ep.accuracy;
    }
    const double n = double(last_episodes_.size());
    stats.reward_mean /= n;
    stats.mean_pruned /= n;
    stats.mean_accuracy /= n;
    if (!std::isfinite(stats.reward_mean)) {
      throw NumericError("ppo: non-finite rewards at iteration " + std::to_string(iter));
    }
    if (stats.reward_mean >= best_reward) {
      best_reward = stats.reward_mean;
      best_state = policy_.mean_net.state();
      best_log_std = policy_.log_std;
    }
    update(last_episodes_);
    if (on_iteration) on_iteration(stats);
    curve.push_back(stats);
  }

  // The last iterate can drift; hand back the snapshot whose collection
  // scored best. Values are copied in place so the optimizer's parameter
  // pointers stay valid.
  policy_.mean_net.load_state(best_state);
  policy_.log_std = best_log_std;
  log_std_param_[0] = real(best_log_std);
  return curve;
}

void PpoLearner::save(const std::string& path) const {
  save_policy(path, policy_, cfg_.hidden);
}

}  // namespace boxprune
