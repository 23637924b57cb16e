#pragma once

#include <string>
#include <vector>

#include "boxprune/common.hpp"

namespace boxprune {

enum class RewardKind { Gaussian, N2N, Hyperbolic };

struct RewardConfig {
  RewardKind kind = RewardKind::Gaussian;
  double expected_accuracy = 0.9;  // A_e, accuracy of the unpruned model
  double expected_pruned = 0.5;    // C_e, target pruned-parameter fraction
  double sigma = 0.3;              // gaussian: cost of missing C_e
  double tau = 0.1;                // hyperbolic temperature

  void validate() const;
};

RewardKind reward_kind_from_name(const std::string& name);
const char* reward_kind_name(RewardKind k);

// (A/A_e) * exp(-(C - C_e)^2 / (2 sigma^2)); paid only at the terminal
// step, maximized at C = C_e, and can exceed 1 when the pruned model
// outperforms the base.
double gaussian_reward(double accuracy, double pruned_fraction, const RewardConfig& cfg);

// (A/A_e) * (1 - C)^2, monotone decreasing in compression.
double n2n_reward(double accuracy, double pruned_fraction, const RewardConfig& cfg);

// Normalized tanh ramp of the per-step pruned fraction. The tanh argument
// groups as (x - C_e)/tau with x = 1 - sum(alpha)/c, and the result is
// scaled so x = 1 gives exactly 1.
double hyperbolic_step_reward(double step_retain_fraction, const RewardConfig& cfg);

// Accuracy ramp with the same normalization; accuracy is first divided by
// the A_e normalizer.
double hyperbolic_accuracy_reward(double accuracy, const RewardConfig& cfg);

// Per-step reward sequence for a whole episode: zero everywhere except the
// terminal step, which pays r_a * sum of the per-step compression terms.
std::vector<double> hyperbolic_reward(const std::vector<double>& step_retain_fractions,
                                      double terminal_accuracy,
                                      const RewardConfig& cfg);

// Terminal reward of the configured kind for a (A, C) outcome. For the
// hyperbolic kind the per-step retain fractions must be supplied.
double terminal_reward(const RewardConfig& cfg, double accuracy, double pruned_fraction,
                       const std::vector<double>* step_retain_fractions = nullptr);

// Row-major (A in [0, 1.1]) x (C in [0, 1)) grid as CSV "A,C,reward" rows.
void emit_landscape(const RewardConfig& cfg, int resolution, const std::string& path);

}  // namespace boxprune
