#include "boxprune/profiles.hpp"

#include <cmath>
#include <fstream>

namespace boxprune {

using nlohmann::json;

json Profile::to_json() const {
  json j;
  j["arch"] = arch;
  j["betas"] = betas;
  j["provenance"] =
      json{{"generator", provenance.generator}, {"params", provenance.params}};
  j["seed"] = provenance.seed;
  return j;
}

Profile Profile::from_json(const json& j) {
  Profile p;
  p.arch = j.at("arch").get<std::string>();
  p.betas = j.at("betas").get<std::vector<double>>();
  p.provenance.generator = j.at("provenance").at("generator").get<std::string>();
  p.provenance.params = j.at("provenance").at("params");
  p.provenance.seed = j.at("seed").get<uint64_t>();
  for (double b : p.betas) {
    if (b < kBetaMin || b > 1.0) {
      throw ConfigError("profile beta out of [" + std::to_string(kBetaMin) + ",1]");
    }
  }
  return p;
}

void Profile::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write profile file: " + path);
  out << to_json().dump(2) << "\n";
}

Profile Profile::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read profile file: " + path);
  json j;
  in >> j;
  return from_json(j);
}

Profile equally_distributed(const std::string& arch, int flag_count, double k) {
  if (k < kBetaMin || k > 1.0) {
    throw ConfigError("equally_distributed: k must be in [" +
                      std::to_string(kBetaMin) + ",1], got " + std::to_string(k));
  }
  Profile p;
  p.arch = arch;
  p.betas.assign(size_t(flag_count), k);
  p.provenance = {"equal", json{{"k", k}}, 0};
  return p;
}

Profile ramp(const std::string& arch, int flag_count, double slope, RampDirection dir) {
  if (slope <= 0.0 || slope > 1.0) {
    throw ConfigError("ramp: slope must be in (0,1], got " + std::to_string(slope));
  }
  Profile p;
  p.arch = arch;
  p.betas.resize(size_t(flag_count));
  for (int i = 1; i <= flag_count; ++i) {
    const double b = slope * double(i) / double(flag_count);
    p.betas[size_t(i - 1)] = std::clamp(b, kBetaMin, 1.0);
  }
  if (dir == RampDirection::Decreasing) {
    std::reverse(p.betas.begin(), p.betas.end());
  }
  p.provenance = {dir == RampDirection::Increasing ? "increasing" : "decreasing",
                  json{{"slope", slope}}, 0};
  return p;
}

Profile random_profile(const std::string& arch, int flag_count, Rng& rng, double lo,
                       double hi) {
  if (lo < kBetaMin || hi > 1.0 || lo >= hi) {
    throw ConfigError("random_profile: need " + std::to_string(kBetaMin) +
                      " <= lo < hi <= 1");
  }
  Profile p;
  p.arch = arch;
  p.betas.resize(size_t(flag_count));
  for (auto& b : p.betas) b = rng.uniform(lo, hi);
  p.provenance = {"random", json{{"lo", lo}, {"hi", hi}}, rng.seed()};
  return p;
}

std::vector<int> retained_counts(const Profile& p, const std::vector<int>& lengths) {
  if (p.betas.size() != lengths.size()) {
    throw ShapeError("profile length " + std::to_string(p.betas.size()) +
                     " != flag count " + std::to_string(lengths.size()));
  }
  std::vector<int> counts(lengths.size());
  for (size_t i = 0; i < lengths.size(); ++i) {
    counts[i] = std::max(1, int(std::lround(p.betas[i] * lengths[i])));
    counts[i] = std::min(counts[i], lengths[i]);
  }
  return counts;
}

MaskSet materialize(const Profile& p, const std::vector<int>& lengths, Rng& rng,
                    MaterializeMode mode) {
  MaskSet m;
  m.retain.reserve(lengths.size());
  const auto counts = retained_counts(p, lengths);
  for (size_t f = 0; f < lengths.size(); ++f) {
    const int c = lengths[f];
    std::vector<uint8_t> v(size_t(c), 0);
    if (mode == MaterializeMode::ExactCount) {
      for (int idx : rng.sample_indices(c, counts[f])) v[size_t(idx)] = 1;
    } else {
      int kept = 0;
      for (int i = 0; i < c; ++i) {
        if (rng.uniform() < p.betas[f]) {
          v[size_t(i)] = 1;
          ++kept;
        }
      }
      if (kept == 0) v[rng.uniform_int(uint64_t(c))] = 1;
    }
    m.retain.push_back(std::move(v));
  }
  return m;
}

namespace {

Compression compression_from_counts(const NetworkSpec& spec,
                                    const std::vector<int>& counts) {
  const int64_t base = param_count(spec);
  const int64_t pruned = param_count_from_retained(spec, counts);
  Compression c;
  c.cf = double(base) / double(pruned);
  c.c = 1.0 - double(pruned) / double(base);
  return c;
}

}  // namespace

Compression compression_of(const Profile& p, const NetworkSpec& spec) {
  return compression_from_counts(spec, retained_counts(p, spec.flag_lengths()));
}

Compression compression_of(const MaskSet& masks, const NetworkSpec& spec) {
  if (masks.flag_count() != spec.flag_count()) {
    throw ShapeError("compression_of: mask flag count mismatch");
  }
  return compression_from_counts(spec, masks.ones_counts());
}

Profile family_profile(const std::string& arch, int flag_count, ProfileFamily family,
                       double param) {
  switch (family) {
    case ProfileFamily::Equal:
      return equally_distributed(arch, flag_count, param);
    case ProfileFamily::Increasing:
      return ramp(arch, flag_count, param, RampDirection::Increasing);
    case ProfileFamily::Decreasing:
      return ramp(arch, flag_count, param, RampDirection::Decreasing);
  }
  throw ConfigError("unknown profile family");
}

double solve_k_for_cf(const NetworkSpec& spec, ProfileFamily family, double target_cf) {
  const double lo_param = family == ProfileFamily::Equal ? kBetaMin : 1e-6;
  const double hi_param = 1.0;
  const int flags = spec.flag_count();

  auto cf_of = [&](double k) {
    return compression_of(family_profile(spec.arch, flags, family, k), spec).cf;
  };

  const double cf_max = cf_of(lo_param);  // most pruning
  const double cf_min = cf_of(hi_param);
  const double tol = 0.02;

  if (target_cf < cf_min * (1.0 - tol) || target_cf > cf_max * (1.0 + tol)) {
    throw ConfigError("solve_k_for_cf: target " + std::to_string(target_cf) +
                      " outside achievable CF range [" + std::to_string(cf_min) +
                      ", " + std::to_string(cf_max) + "]");
  }

  // CF is monotone non-increasing in the parameter, stepwise because of
  // channel rounding; bisect and keep the best parameter seen.
  double lo = lo_param, hi = hi_param;
  double best_k = hi_param, best_err = std::abs(cf_of(hi_param) - target_cf);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double cf = cf_of(mid);
    const double err = std::abs(cf - target_cf);
    if (err < best_err) {
      best_err = err;
      best_k = mid;
    }
    if (cf > target_cf) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  if (best_err / target_cf > tol) {
    throw ConfigError("solve_k_for_cf: target " + std::to_string(target_cf) +
                      " not reachable within 2% (closest CF " +
                      std::to_string(cf_of(best_k)) + "); channel rounding is too coarse");
  }
  return best_k;
}

}  // namespace boxprune
