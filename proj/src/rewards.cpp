#include "boxprune/rewards.hpp"

#include <cmath>
#include <fstream>

namespace boxprune {

void RewardConfig::validate() const {
  if (expected_accuracy <= 0 || expected_accuracy > 1) {
    throw ConfigError("reward: expected accuracy must be in (0,1]");
  }
  if (expected_pruned < 0 || expected_pruned >= 1) {
    throw ConfigError("reward: expected pruned fraction must be in [0,1)");
  }
  if (kind == RewardKind::Gaussian && sigma <= 0) {
    throw ConfigError("reward: sigma must be positive");
  }
  if (kind == RewardKind::Hyperbolic && tau <= 0) {
    throw ConfigError("reward: tau must be positive");
  }
}

RewardKind reward_kind_from_name(const std::string& name) {
  if (name == "gaussian") return RewardKind::Gaussian;
  if (name == "n2n") return RewardKind::N2N;
  if (name == "hyperbolic") return RewardKind::Hyperbolic;
  throw ConfigError("unknown reward kind: " + name);
}

const char* reward_kind_name(RewardKind k) {
  switch (k) {
    case RewardKind::Gaussian: return "gaussian";
    case RewardKind::N2N: return "n2n";
    case RewardKind::Hyperbolic: return "hyperbolic";
  }
  return "?";
}

double gaussian_reward(double accuracy, double pruned_fraction,
                       const RewardConfig& cfg) {
  const double miss = pruned_fraction - cfg.expected_pruned;
  return accuracy / cfg.expected_accuracy *
         std::exp(-miss * miss / (2.0 * cfg.sigma * cfg.sigma));
}

double n2n_reward(double accuracy, double pruned_fraction, const RewardConfig& cfg) {
  const double kept = 1.0 - pruned_fraction;
  return accuracy / cfg.expected_accuracy * kept * kept;
}

double hyperbolic_step_reward(double step_retain_fraction, const RewardConfig& cfg) {
  if (cfg.tau <= 0) throw ConfigError("reward: tau must be positive");
  const double pruned = 1.0 - step_retain_fraction;
  const double ce = cfg.expected_pruned;
  const double num = std::tanh((pruned - ce) / cfg.tau) + std::tanh(ce / cfg.tau);
  const double den = std::tanh((1.0 - ce) / cfg.tau) + std::tanh(ce / cfg.tau);
  return num / den;
}

double hyperbolic_accuracy_reward(double accuracy, const RewardConfig& cfg) {
  if (cfg.tau <= 0) throw ConfigError("reward: tau must be positive");
  const double ae = cfg.expected_accuracy;
  const double ratio = accuracy / ae;  // A_e doubles as the normalizer
  const double num = std::tanh((ratio - ae) / cfg.tau) + std::tanh(ae / cfg.tau);
  const double den = std::tanh((1.0 - ae) / cfg.tau) + std::tanh(ae / cfg.tau);
  return num / den;
}

std::vector<double> hyperbolic_reward(const std::vector<double>& step_retain_fractions,
                                      double terminal_accuracy,
                                      const RewardConfig& cfg) {
  if (step_retain_fractions.empty()) {
    throw ConfigError("hyperbolic reward: empty episode");
  }
  std::vector<double> rewards(step_retain_fractions.size(), 0.0);
  double compression_sum = 0.0;
  for (double frac : step_retain_fractions) {
    compression_sum += hyperbolic_step_reward(frac, cfg);
  }
  rewards.back() = hyperbolic_accuracy_reward(terminal_accuracy, cfg) * compression_sum;
  return rewards;
}

double terminal_reward(const RewardConfig& cfg, double accuracy, double pruned_fraction,
                       const std::vector<double>* step_retain_fractions) {
  switch (cfg.kind) {
    case RewardKind::Gaussian:
      return gaussian_reward(accuracy, pruned_fraction, cfg);
    case RewardKind::N2N:
      return n2n_reward(accuracy, pruned_fraction, cfg);
    case RewardKind::Hyperbolic: {
      if (!step_retain_fractions) {
        throw UsageError("hyperbolic reward needs per-step retain fractions");
      }
      return hyperbolic_reward(*step_retain_fractions, accuracy, cfg).back();
    }
  }
  throw ConfigError("unknown reward kind");
}

void emit_landscape(const RewardConfig& cfg, int resolution, const std::string& path) {
  if (resolution < 2) throw ConfigError("landscape: resolution must be >= 2");
  cfg.validate();
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write landscape csv: " + path);
  out << "# boxprune-landscape v1 kind=" << reward_kind_name(cfg.kind) << "\n";
  out << "A,C,reward\n";
  out.precision(12);
  for (int i = 0; i < resolution; ++i) {
    const double a = 1.1 * double(i) / double(resolution - 1);
    for (int j = 0; j < resolution; ++j) {
      const double c = double(j) / double(resolution);  // [0, 1)
      double r = 0;
      if (cfg.kind == RewardKind::Hyperbolic) {
        const std::vector<double> fracs = {1.0 - c};
        r = hyperbolic_reward(fracs, a, cfg).back();
      } else {
        r = terminal_reward(cfg, a, c);
      }
      out << a << "," << c << "," << r << "\n";
    }
  }
}

}  // namespace boxprune
