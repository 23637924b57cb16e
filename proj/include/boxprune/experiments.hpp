#pragma once

#include <functional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "boxprune/dataset.hpp"
#include "boxprune/ppo.hpp"
#include "boxprune/prune.hpp"

namespace boxprune {

// Resolved experiment description. Loadable from a JSON file; every run
// directory receives the resolved snapshot so a run is reconstructible
// from its directory alone.
struct ExperimentConfig {
  std::string kind;  // init-sweep|metric-sweep|profile-sweep|random-search|
                     // transfer-eval|rl-train|rl-transfer|train-base
  std::string arch = "cnet-small";
  nlohmann::json dataset = {{"synthetic", nlohmann::json::object()}};
  // Desk-scale default: CF targets on the cnet-small rounding lattice.
  std::vector<double> cf_grid = {1.3, 1.75, 2.5, 3.85};
  std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};
  int base_nets = 2;
  int random_profiles = 60;
  double max_cf = 6.0;
  int env_count = 2;       // rl-train queue size
  double expected_pruned = 0.5;
  std::string reward = "gaussian";
  double sigma = 0.3;
  double tau = 0.1;
  TrainConfig base_train;
  TrainConfig finetune;
  TrainConfig env_finetune;
  PpoConfig ppo;
  int workers = 1;
  std::string out_dir;
  std::vector<std::string> profile_files;  // transfer-eval inputs
  std::string distribution_csv;            // random-search results for percentiles
  std::string policy_file;                 // rl rollout input
  std::string checkpoint;                  // base net input/output

  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  void validate() const;
};

struct ResultRow {
  std::string experiment;
  uint64_t seed = 0;
  std::string profile;
  std::string net;
  double cf = 1.0;
  double c = 0.0;
  double accuracy = 0.0;
  double wall_s = 0.0;   // reported in summaries, kept out of the csv
  bool skipped = false;  // resumed cell, already on disk
};

// Append-only, versioned CSV of result rows. Rows flush in job order so
// identical runs produce identical bytes; completed (experiment, seed,
// profile, net) cells are skipped when a run resumes.
class ResultWriter {
 public:
  explicit ResultWriter(const std::string& path);

  bool already_done(const ResultRow& row) const;
  void append(const ResultRow& row);

  static std::vector<ResultRow> read(const std::string& path);

 private:
  std::string path_;
  std::set<std::string> done_;
};

// Runs `jobs` on `workers` threads; results are appended through `emit` in
// job-index order regardless of completion order.
void run_job_pool(int workers, int job_count, const std::function<ResultRow(int)>& run,
                  const std::function<void(const ResultRow&)>& emit);

// Percentile of `accuracy` within the rows whose CF lies in a relative
// ±10% window around `cf` (fraction of rows at or below, in percent).
double percentile_in_cf_bucket(const std::vector<ResultRow>& rows, double cf,
                               double accuracy);

// All experiment kinds funnel through here; returns a JSON summary and
// leaves config snapshot, seed manifest, result CSV, and produced profile
// JSONs in cfg.out_dir.
nlohmann::json run_experiment(const ExperimentConfig& cfg);

// Output root: $BOXPRUNE_OUT when set and `dir` is relative.
std::string resolve_out_dir(const std::string& dir);

}  // namespace boxprune
