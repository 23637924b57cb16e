#pragma once

#include <memory>
#include <vector>

#include "boxprune/dataset.hpp"
#include "boxprune/prune.hpp"
#include "boxprune/rewards.hpp"

namespace boxprune {

inline constexpr int kDescriptorCount = 7;

// Fixed-width observation: a per-channel feature block padded to the
// architecture's widest flag, then the layer descriptor block
// (step/l, c_t/c_max, kernel area, stride, parameter share, cumulative
// pruned fraction, steps remaining / l).
struct Observation {
  std::vector<double> values;

  int width() const { return int(values.size()); }
};

struct StepResult {
  Observation obs;
  double beta = 1.0;  // action after squashing
  double reward = 0.0;
  bool done = false;
  double accuracy = 0.0;         // terminal only
  double pruned_fraction = 0.0;  // terminal only
};

// Actions squash to [kBetaMin, 1]: the lower end of the action space is
// padded so no flag can be pruned away entirely.
double squash_action(double action);

// Observation for one flag's layer on the Hadamard-masked net: channels
// already masked out (including the flag's own materialized retain vector,
// when decided) contribute exactly 0; the rest carry the per-channel
// first-order loss features. Padded to the widest flag, descriptors last.
Observation build_net_observation(const Net& net, const Batch& obs_batch, int flag,
                                  const MaskSet& masks);

class PruneEnv {
 public:
  virtual ~PruneEnv() = default;

  virtual Observation reset(Rng& rng) = 0;
  virtual StepResult step(double action, Rng& rng) = 0;

  virtual int episode_len() const = 0;
  virtual int obs_width() const = 0;
  virtual const NetworkSpec& spec() const = 0;
  virtual int id() const = 0;
};

// MDP over a trained network: one step per prune flag, front to back. Each
// step squashes the action into a retention fraction, randomly picks the
// surviving channels, and exposes the next layer's features computed on
// the partially masked net. The terminal step physically rebuilds, runs a
// short fine-tune and pays the configured reward.
class NetPruneEnv : public PruneEnv {
 public:
  NetPruneEnv(int id, const Net* base, const Dataset* data, RewardConfig reward,
              TrainConfig finetune, int obs_batch_size = 32);

  Observation reset(Rng& rng) override;
  StepResult step(double action, Rng& rng) override;

  int episode_len() const override { return base_->spec.flag_count(); }
  int obs_width() const override;
  const NetworkSpec& spec() const override { return base_->spec; }
  int id() const override { return id_; }

 private:
  Observation build_observation(int flag) const;

  int id_;
  const Net* base_;
  const Dataset* data_;
  RewardConfig reward_;
  TrainConfig finetune_;
  Batch obs_batch_;

  // episode state
  int cursor_ = -1;
  std::vector<double> betas_;
  std::vector<double> step_retain_;
  MaskSet masks_;
};

// Deterministic stand-in environment for fast policy tests: terminal
// accuracy is A_e * g(betas) for a seeded smooth g whose argmax profile is
// known by construction; compression comes from the real spec.
class SurrogateEnv : public PruneEnv {
 public:
  SurrogateEnv(int id, NetworkSpec spec, RewardConfig reward, uint64_t seed);

  Observation reset(Rng& rng) override;
  StepResult step(double action, Rng& rng) override;

  int episode_len() const override { return spec_.flag_count(); }
  int obs_width() const override;
  const NetworkSpec& spec() const override { return spec_; }
  int id() const override { return id_; }

  const std::vector<double>& optimum() const { return p_star_; }
  double accuracy_of(const std::vector<double>& betas) const;  // A_e * g
  double reward_of(const std::vector<double>& betas) const;    // terminal reward

 private:
  Observation build_observation(int flag) const;
  double cumulative_pruned(int decided_flags) const;

  int id_;
  NetworkSpec spec_;
  RewardConfig reward_;
  std::vector<double> p_star_;
  std::vector<double> sharpness_;
  std::vector<std::vector<double>> pseudo_features_;
  int64_t base_params_;

  int cursor_ = -1;
  std::vector<double> betas_;
};

// Circular queue of environments; one policy cycles through them, one per
// episode. All environments must share an architecture family (identical
// observation width and episode length).
class EnvQueue {
 public:
  void add(std::unique_ptr<PruneEnv> env);

  PruneEnv& next();
  PruneEnv& env(int i) { return *envs_[size_t(i)]; }
  int size() const { return int(envs_.size()); }
  int obs_width() const;
  int episode_len() const;

 private:
  std::vector<std::unique_ptr<PruneEnv>> envs_;
  size_t cursor_ = 0;
};

}  // namespace boxprune
