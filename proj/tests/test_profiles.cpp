#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>

#include "boxprune/profiles.hpp"

using namespace boxprune;

TEST_CASE("equally distributed profiles") {
  Profile ones = equally_distributed("cnet-small", 6, 1.0);
  CHECK(ones.betas == std::vector<double>(6, 1.0));
  Profile half = equally_distributed("resnet20-16", 13, 0.5);
  CHECK(half.betas == std::vector<double>(13, 0.5));
  CHECK_THROWS_AS(equally_distributed("cnet-small", 6, 0.05), ConfigError);
  CHECK_THROWS_AS(equally_distributed("cnet-small", 6, 1.2), ConfigError);
}

TEST_CASE("ramp profiles follow s*i/l with the floor clamp") {
  Profile inc = ramp("a", 4, 0.8, RampDirection::Increasing);
  const std::vector<double> want = {0.2, 0.4, 0.6, 0.8};
  for (int i = 0; i < 4; ++i) CHECK(inc.betas[size_t(i)] == doctest::Approx(want[size_t(i)]));

  Profile dec = ramp("a", 4, 0.8, RampDirection::Decreasing);
  for (int i = 0; i < 4; ++i) CHECK(dec.betas[size_t(i)] == doctest::Approx(want[size_t(3 - i)]));

  Profile clamped = ramp("a", 4, 0.2, RampDirection::Increasing);
  CHECK(clamped.betas[0] == doctest::Approx(0.1));  // 0.05 clamped up
  CHECK(clamped.betas[1] == doctest::Approx(0.1));
  CHECK(clamped.betas[2] == doctest::Approx(0.15));
  CHECK(clamped.betas[3] == doctest::Approx(0.2));
}

TEST_CASE("random profiles are uniform on [lo, hi] and seed-stable") {
  Rng rng(7);
  Profile a = random_profile("x", 6, rng);
  Rng rng2(7);
  Profile b = random_profile("x", 6, rng2);
  CHECK(a.betas == b.betas);
  for (double v : a.betas) {
    CHECK(v >= 0.3);
    CHECK(v <= 0.9);
  }

  // degenerate range: near-constant profile
  Rng tight(11);
  Profile flat = random_profile("x", 6, tight, 0.5, 0.5 + 1e-9);
  for (double v : flat.betas) CHECK(v == doctest::Approx(0.5).epsilon(1e-8));

  // statistical oracle: per-coordinate mean of U(0.3,0.9) is 0.6
  const int n = 10000;
  double sum = 0;
  Rng big(99);
  for (int i = 0; i < n; ++i) {
    Rng child = big.child(uint64_t(i));
    sum += random_profile("x", 1, child).betas[0];
  }
  const double mean = sum / n;
  const double sigma3 = 3.0 * std::sqrt(0.6 * 0.6 / 12.0 / n);  // var of U(a,b) = (b-a)^2/12
  CHECK(mean > 0.6 - sigma3);
  CHECK(mean < 0.6 + sigma3);

  CHECK_THROWS_AS(random_profile("x", 6, rng, 0.05, 0.9), ConfigError);
}

TEST_CASE("exact-count materialization is deterministic in the ones-count") {
  Profile p = equally_distributed("c", 3, 0.5);
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    MaskSet m = materialize(p, {16, 16, 16}, rng);
    for (int f = 0; f < 3; ++f) CHECK(m.ones(f) == 8);
  }
  Profile one = equally_distributed("c", 1, 1.0);
  Rng rng(1);
  MaskSet m = materialize(one, {5}, rng);
  CHECK(m.ones(0) == 5);
}

TEST_CASE("bernoulli materialization matches the binomial oracle") {
  Profile p = equally_distributed("c", 1, 0.5);
  const int c = 16, trials = 10000;
  int64_t total_ones = 0;
  for (int t = 0; t < trials; ++t) {
    Rng rng(uint64_t(t) + 1000);
    MaskSet m = materialize(p, {c}, rng, MaterializeMode::Bernoulli);
    const int ones = m.ones(0);
    CHECK(ones >= 1);
    total_ones += ones;
  }
  const double mean = double(total_ones) / trials;
  // Binomial(16, 0.5): mean 8, sd 2; 3 sigma of the trial mean
  const double sigma3 = 3.0 * 2.0 / std::sqrt(double(trials));
  CHECK(mean > 8.0 - sigma3 - 0.01);  // +0.01 absorbs the forced survivor
  CHECK(mean < 8.0 + sigma3 + 0.01);
}

TEST_CASE("compression identities") {
  NetworkSpec spec = cnet_small();
  Profile ones = equally_distributed(spec.arch, 6, 1.0);
  const Compression c1 = compression_of(ones, spec);
  CHECK(c1.cf == doctest::Approx(1.0));
  CHECK(c1.c == doctest::Approx(0.0));

  Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    Rng child = rng.child(uint64_t(t));
    Profile p = random_profile(spec.arch, 6, child, 0.1, 1.0);
    const Compression comp = compression_of(p, spec);
    CHECK(comp.cf >= 1.0);
    CHECK(std::abs(comp.cf - 1.0 / (1.0 - comp.c)) < 1e-12);
  }
}

TEST_CASE("compression is monotone in the betas") {
  NetworkSpec spec = build_resnet20(4, 4, {8, 8, 1});
  Rng rng(17);
  for (int t = 0; t < 50; ++t) {
    Rng child = rng.child(uint64_t(t));
    Profile lo = random_profile(spec.arch, 13, child, 0.1, 0.9);
    Profile hi = lo;
    for (auto& b : hi.betas) b = std::min(1.0, b + child.uniform(0.0, 0.3));
    CHECK(compression_of(lo, spec).cf >= compression_of(hi, spec).cf);
  }
}

TEST_CASE("solve_k_for_cf hits the target within 2%") {
  // 32-channel flags quantize finely enough for a 4x target.
  NetworkSpec spec = build_cnet(32, 10);
  CHECK(solve_k_for_cf(spec, ProfileFamily::Equal, 1.0) == doctest::Approx(1.0).epsilon(0.02));
  const double k = solve_k_for_cf(spec, ProfileFamily::Equal, 4.0);
  const double cf = compression_of(equally_distributed(spec.arch, 6, k), spec).cf;
  CHECK(cf >= 4.0 * 0.98);
  CHECK(cf <= 4.0 * 1.02);
  CHECK_THROWS_AS(solve_k_for_cf(spec, ProfileFamily::Equal, 1e6), ConfigError);

  // Desk-scale flags of length 8 only reach a lattice of CFs; targets off
  // the lattice fail loudly instead of returning a sloppy parameter.
  NetworkSpec small = cnet_small();
  const double k_small = solve_k_for_cf(small, ProfileFamily::Equal, 3.9);
  const double cf_small =
      compression_of(equally_distributed(small.arch, 6, k_small), small).cf;
  CHECK(std::abs(cf_small - 3.9) / 3.9 <= 0.02);
  CHECK_THROWS_AS(solve_k_for_cf(small, ProfileFamily::Equal, 3.3), ConfigError);
}

TEST_CASE("profile json round-trips bit-exactly") {
  Rng rng(3);
  Profile p = random_profile("resnet20-16", 13, rng);
  p.provenance.params["note"] = "x";
  const std::string path = "profile_roundtrip.json";
  p.save(path);
  Profile q = Profile::load(path);
  CHECK(q.arch == p.arch);
  CHECK(q.betas == p.betas);  // exact double equality
  CHECK(q.provenance.generator == p.provenance.generator);
  CHECK(q.provenance.seed == p.provenance.seed);
  std::filesystem::remove(path);

  nlohmann::json bad = p.to_json();
  bad["betas"][0] = 0.01;
  CHECK_THROWS_AS(Profile::from_json(bad), ConfigError);
}
