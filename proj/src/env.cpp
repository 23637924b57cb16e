#include "boxprune/env.hpp"

#include <cmath>
#include <numeric>

namespace boxprune {

double squash_action(double action) {
  return std::clamp(action, kBetaMin, 1.0);
}

namespace {

// Parameter share of each flag's decision conv in the unmasked net.
std::vector<double> flag_param_shares(const NetworkSpec& spec) {
  const double total = double(param_count(spec));
  std::vector<double> shares(size_t(spec.flag_count()), 0.0);
  for (int f = 0; f < spec.flag_count(); ++f) {
    const auto& l = spec.layers[size_t(spec.flags[size_t(f)].decision_layer)];
    shares[size_t(f)] =
        double(int64_t(l.kernel) * l.kernel * l.in_channels * l.out_channels) / total;
  }
  return shares;
}

void fill_descriptors(const NetworkSpec& spec, int flag, double cum_pruned,
                      const std::vector<double>& shares, std::vector<double>& out) {
  const int l = spec.flag_count();
  const auto& conv = spec.layers[size_t(spec.flags[size_t(flag)].decision_layer)];
  out.push_back(double(flag + 1) / double(l));
  out.push_back(double(spec.flags[size_t(flag)].length) / double(spec.max_flag_length()));
  out.push_back(double(conv.kernel * conv.kernel));
  out.push_back(double(conv.stride));
  out.push_back(shares[size_t(flag)]);
  out.push_back(cum_pruned);
  out.push_back(double(l - flag) / double(l));
}

}  // namespace

NetPruneEnv::NetPruneEnv(int id, const Net* base, const Dataset* data,
                         RewardConfig reward, TrainConfig finetune, int obs_batch_size)
    : id_(id), base_(base), data_(data), reward_(reward), finetune_(finetune) {
  reward_.validate();
  if (data_->val.size() < 1) throw ConfigError("env: dataset has no validation split");
  const int count = std::min(obs_batch_size, data_->val.size());
  std::vector<int> idx(size_t(data_->val.size()));
  std::iota(idx.begin(), idx.end(), 0);
  obs_batch_ = gather_batch(data_->val, idx, 0, count);
}

int NetPruneEnv::obs_width() const {
  return base_->spec.max_flag_length() + kDescriptorCount;
}

Observation NetPruneEnv::reset(Rng&) {
  cursor_ = 0;
  const int l = episode_len();
  betas_.assign(size_t(l), 1.0);
  step_retain_.assign(size_t(l), 1.0);
  masks_ = MaskSet::all_ones(base_->spec.flag_lengths());
  return build_observation(0);
}

StepResult NetPruneEnv::step(double action, Rng& rng) {
  if (cursor_ < 0 || cursor_ >= episode_len()) {
    throw UsageError("env step outside an active episode");
  }
  const int f = cursor_;
  const int channels = base_->spec.flags[size_t(f)].length;
  const double beta = squash_action(action);
  const int keep = std::min(channels, std::max(1, int(std::lround(beta * channels))));
  betas_[size_t(f)] = beta;
  step_retain_[size_t(f)] = double(keep) / double(channels);
  masks_.retain[size_t(f)] =
      select_channels(nullptr, channels, keep, SelectStrategy::Random, rng);
  ++cursor_;

  StepResult result;
  result.beta = beta;
  if (cursor_ < episode_len()) {
    result.obs = build_observation(cursor_);
    return result;
  }

  // Terminal: physically rebuild, short fine-tune, evaluate.
  Net pruned = rebuild(*base_, masks_, InitStrategy::Pretrained, rng.child(990).seed());
  TrainConfig cfg = finetune_;
  cfg.seed = rng.child(991).seed();
  Trainer trainer(pruned, cfg);
  trainer.train(data_->train, data_->val);

  result.done = true;
  result.accuracy = double(evaluate(pruned, data_->val));
  result.pruned_fraction = compression_of(masks_, base_->spec).c;
  result.reward =
      terminal_reward(reward_, result.accuracy, result.pruned_fraction, &step_retain_);
  result.obs.values.assign(size_t(obs_width()), 0.0);
  cursor_ = episode_len();  // step after done is a usage error
  return result;
}

Observation build_net_observation(const Net& net, const Batch& obs_batch, int flag,
                                  const MaskSet& masks) {
  const NetworkSpec& spec = net.spec;
  WeightMap masked = hadamard_masked_weights(net, masks);
  Tape tape(spec);
  tape.forward(masked, obs_batch, Mode::Eval);
  tape.backward(real(obs_batch.labels.size()));

  const int layer = spec.flags[size_t(flag)].decision_layer;
  const Tensor& act = tape.activation(layer);
  const Tensor& grad = tape.activation_grad(layer);
  const int c = act.dim(3);
  const int batch = act.dim(0);
  const int64_t spatial = int64_t(act.dim(1)) * act.dim(2);

  Observation obs;
  obs.values.reserve(size_t(spec.max_flag_length() + kDescriptorCount));
  for (int j = 0; j < c; ++j) {
    real acc = 0;
    for (int n = 0; n < batch; ++n) {
      real sample = 0;
      const int64_t base = (int64_t(n) * spatial) * c + j;
      for (int64_t s = 0; s < spatial; ++s) {
        const int64_t idx = base + s * c;
        sample += std::abs(grad[idx] * act[idx]);
      }
      acc += sample / real(spatial);
    }
    obs.values.push_back(double(acc) / double(batch));
  }
  obs.values.resize(size_t(spec.max_flag_length()), 0.0);  // padding

  const double cum_pruned =
      1.0 - double(param_count(spec, &masks)) / double(param_count(spec));
  fill_descriptors(spec, flag, cum_pruned, flag_param_shares(spec), obs.values);
  return obs;
}

Observation NetPruneEnv::build_observation(int flag) const {
  return build_net_observation(*base_, obs_batch_, flag, masks_);
}

SurrogateEnv::SurrogateEnv(int id, NetworkSpec spec, RewardConfig reward, uint64_t seed)
    : id_(id), spec_(std::move(spec)), reward_(reward) {
  reward_.validate();
  Rng rng(seed);
  const int l = spec_.flag_count();
  p_star_.resize(size_t(l));
  sharpness_.resize(size_t(l));
  for (int f = 0; f < l; ++f) {
    p_star_[size_t(f)] = rng.uniform(0.4, 0.9);
    sharpness_[size_t(f)] = rng.uniform(0.5, 2.0);
  }
  pseudo_features_.resize(size_t(l));
  for (int f = 0; f < l; ++f) {
    pseudo_features_[size_t(f)].resize(size_t(spec_.flags[size_t(f)].length));
    for (auto& v : pseudo_features_[size_t(f)]) v = rng.uniform(0.0, 0.1);
  }
  base_params_ = param_count(spec_);
}

int SurrogateEnv::obs_width() const {
  return spec_.max_flag_length() + kDescriptorCount;
}

double SurrogateEnv::accuracy_of(const std::vector<double>& betas) const {
  double penalty = 0;
  for (size_t i = 0; i < betas.size(); ++i) {
    const double d = betas[i] - p_star_[i];
    penalty += sharpness_[i] * d * d;
  }
  return reward_.expected_accuracy * std::exp(-penalty);
}

double SurrogateEnv::reward_of(const std::vector<double>& betas) const {
  Profile p;
  p.arch = spec_.arch;
  p.betas = betas;
  const Compression comp = compression_of(p, spec_);
  std::vector<double> retain(betas.size());
  const auto counts = retained_counts(p, spec_.flag_lengths());
  for (size_t i = 0; i < betas.size(); ++i) {
    retain[i] = double(counts[i]) / double(spec_.flags[i].length);
  }
  return terminal_reward(reward_, accuracy_of(betas), comp.c, &retain);
}

double SurrogateEnv::cumulative_pruned(int decided_flags) const {
  Profile p;
  p.arch = spec_.arch;
  p.betas = betas_;
  auto counts = retained_counts(p, spec_.flag_lengths());
  for (int f = decided_flags; f < spec_.flag_count(); ++f) {
    counts[size_t(f)] = spec_.flags[size_t(f)].length;
  }
  return 1.0 - double(param_count_from_retained(spec_, counts)) / double(base_params_);
}

Observation SurrogateEnv::reset(Rng&) {
  cursor_ = 0;
  betas_.assign(size_t(spec_.flag_count()), 1.0);
  return build_observation(0);
}

StepResult SurrogateEnv::step(double action, Rng&) {
  if (cursor_ < 0 || cursor_ >= episode_len()) {
    throw UsageError("env step outside an active episode");
  }
  const double beta = squash_action(action);
  betas_[size_t(cursor_)] = beta;
  ++cursor_;

  StepResult result;
  result.beta = beta;
  if (cursor_ < episode_len()) {
    result.obs = build_observation(cursor_);
    return result;
  }
  result.done = true;
  result.accuracy = accuracy_of(betas_);
  Profile p;
  p.arch = spec_.arch;
  p.betas = betas_;
  result.pruned_fraction = compression_of(p, spec_).c;
  result.reward = reward_of(betas_);
  result.obs.values.assign(size_t(obs_width()), 0.0);
  cursor_ = episode_len();
  return result;
}

Observation SurrogateEnv::build_observation(int flag) const {
  Observation obs;
  obs.values.reserve(size_t(obs_width()));
  const double cum = cumulative_pruned(flag);
  for (double v : pseudo_features_[size_t(flag)]) {
    obs.values.push_back(v * (1.0 - cum));
  }
  obs.values.resize(size_t(spec_.max_flag_length()), 0.0);
  fill_descriptors(spec_, flag, cum, flag_param_shares(spec_), obs.values);
  return obs;
}

void EnvQueue::add(std::unique_ptr<PruneEnv> env) {
  if (!envs_.empty()) {
    if (env->obs_width() != obs_width() || env->episode_len() != episode_len()) {
      throw ConfigError(
          "env queue: mixed architectures (observation width or episode length "
          "differs)");
    }
  }
  envs_.push_back(std::move(env));
}

PruneEnv& EnvQueue::next() {
  if (envs_.empty()) throw ConfigError("env queue is empty");
  PruneEnv& env = *envs_[cursor_];
  cursor_ = (cursor_ + 1) % envs_.size();
  return env;
}

int EnvQueue::obs_width() const {
  if (envs_.empty()) throw ConfigError("env queue is empty");
  return envs_.front()->obs_width();
}

int EnvQueue::episode_len() const {
  if (envs_.empty()) throw ConfigError("env queue is empty");
  return envs_.front()->episode_len();
}

}  // namespace boxprune
