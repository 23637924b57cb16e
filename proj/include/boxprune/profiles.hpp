#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "boxprune/masks.hpp"
#include "boxprune/netzoo.hpp"

namespace boxprune {

struct Provenance {
  std::string generator;  // "equal", "increasing", "decreasing", "random", "rl-policy"
  nlohmann::json params;
  uint64_t seed = 0;
};

// Per-flag retention fractions. 0.3 keeps 30% of the channels; every entry
// is floored at kBetaMin so no flag can collapse to nothing.
struct Profile {
  std::string arch;
  std::vector<double> betas;
  Provenance provenance;

  int size() const { return int(betas.size()); }

  nlohmann::json to_json() const;
  static Profile from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static Profile load(const std::string& path);
};

enum class RampDirection { Increasing, Decreasing };
enum class MaterializeMode { ExactCount, Bernoulli };

Profile equally_distributed(const std::string& arch, int flag_count, double k);

// beta_i = clamp(s*i/l, kBetaMin, 1) for i = 1..l; decreasing reverses.
Profile ramp(const std::string& arch, int flag_count, double slope, RampDirection dir);

Profile random_profile(const std::string& arch, int flag_count, Rng& rng,
                       double lo = 0.3, double hi = 0.9);

// Retained channels per flag for a profile: max(1, round(beta*c)).
std::vector<int> retained_counts(const Profile& p, const std::vector<int>& lengths);

// Exact-count keeps exactly max(1, round(beta*c)) channels chosen uniformly;
// Bernoulli flips each channel with retain probability beta and then forces
// at least one survivor.
MaskSet materialize(const Profile& p, const std::vector<int>& lengths, Rng& rng,
                    MaterializeMode mode = MaterializeMode::ExactCount);

struct Compression {
  double cf = 1.0;  // base params / pruned params, >= 1
  double c = 0.0;   // pruned-parameter fraction, in [0,1)
};

Compression compression_of(const Profile& p, const NetworkSpec& spec);
Compression compression_of(const MaskSet& masks, const NetworkSpec& spec);

enum class ProfileFamily { Equal, Increasing, Decreasing };

// Bisects the family's scalar parameter until the profile's compression
// factor is within 2% relative of `target_cf`. Throws ConfigError with the
// achievable range when no parameter reaches the target.
double solve_k_for_cf(const NetworkSpec& spec, ProfileFamily family, double target_cf);

Profile family_profile(const std::string& arch, int flag_count, ProfileFamily family,
                       double param);

}  // namespace boxprune
