#include "boxprune/experiments.hpp"

#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "boxprune/checkpoint.hpp"
#include "boxprune/rewards.hpp"

namespace boxprune {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

InputShape input_shape_of(const Dataset& data) {
  return {data.train.images.dim(1), data.train.images.dim(2),
          data.train.images.dim(3)};
}

Net train_base_net(const NetworkSpec& spec, const Dataset& data,
                   TrainConfig cfg, uint64_t seed) {
  Net net = init_net(spec, seed);
  cfg.seed = seed;
  Trainer trainer(net, cfg);
  trainer.train(data.train, data.val);
  return net;
}

void write_curve(const std::string& path,
                 const std::vector<std::array<double, 3>>& rows) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write curve csv: " + path);
  out << "# boxprune-curve v1\ncf,mean,std\n";
  for (const auto& r : rows) {
    out << fmt(r[0]) << "," << fmt(r[1]) << "," << fmt(r[2]) << "\n";
  }
}

std::array<double, 2> mean_std(const std::vector<double>& v) {
  double mean = 0;
  for (double x : v) mean += x;
  mean /= double(v.size());
  double var = 0;
  for (double x : v) var += (x - mean) * (x - mean);
  return {mean, v.size() > 1 ? std::sqrt(var / double(v.size() - 1)) : 0.0};
}

struct RunDir {
  explicit RunDir(const ExperimentConfig& cfg)
      : dir(resolve_out_dir(cfg.out_dir)) {
    if (dir.empty()) throw ConfigError("experiment needs an output directory");
    fs::create_directories(dir);
    fs::create_directories(dir + "/profiles");
    std::ofstream snap(dir + "/config.json");
    snap << cfg.to_json().dump(2) << "\n";
    std::ofstream seeds(dir + "/seeds.json");
    seeds << json{{"seeds", cfg.seeds}}.dump(2) << "\n";
  }
  std::string path(const std::string& name) const { return dir + "/" + name; }
  std::string dir;
};

}  // namespace

std::string resolve_out_dir(const std::string& dir) {
  if (dir.empty() || dir.front() == '/') return dir;
  const char* root = std::getenv("BOXPRUNE_OUT");
  if (root && *root) return std::string(root) + "/" + dir;
  return dir;
}

json ExperimentConfig::to_json() const {
  json j;
  j["kind"] = kind;
  j["arch"] = arch;
  j["dataset"] = dataset;
  j["cf_grid"] = cf_grid;
  j["seeds"] = seeds;
  j["base_nets"] = base_nets;
  j["random_profiles"] = random_profiles;
  j["max_cf"] = max_cf;
  j["env_count"] = env_count;
  j["expected_pruned"] = expected_pruned;
  j["reward"] = reward;
  j["sigma"] = sigma;
  j["tau"] = tau;
  auto train_json = [](const TrainConfig& t) {
    return json{{"lr", t.lr},           {"lr_decay", t.lr_decay},
                {"decay_at", t.decay_at}, {"momentum", t.momentum},
                {"weight_decay", t.weight_decay}, {"batch_size", t.batch_size},
                {"epochs", t.epochs},   {"seed", t.seed}};
  };
  j["base_train"] = train_json(base_train);
  j["finetune"] = train_json(finetune);
  j["env_finetune"] = train_json(env_finetune);
  j["ppo"] = json{{"clip_ratio", ppo.clip_ratio},
                  {"gae_lambda", ppo.gae_lambda},
                  {"gamma", ppo.gamma},
                  {"update_epochs", ppo.update_epochs},
                  {"minibatch", ppo.minibatch},
                  {"hidden", ppo.hidden},
                  {"lr", ppo.lr},
                  {"init_log_std", ppo.init_log_std},
                  {"std_floor", ppo.std_floor},
                  {"entropy_coef", ppo.entropy_coef},
                  {"value_coef", ppo.value_coef},
                  {"iterations", ppo.iterations},
                  {"episodes_per_iter", ppo.episodes_per_iter},
                  {"workers", ppo.workers},
                  {"seed", ppo.seed}};
  j["workers"] = workers;
  j["out_dir"] = out_dir;
  j["profile_files"] = profile_files;
  j["distribution_csv"] = distribution_csv;
  j["policy_file"] = policy_file;
  j["checkpoint"] = checkpoint;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  c.kind = j.value("kind", c.kind);
  c.arch = j.value("arch", c.arch);
  if (j.contains("dataset")) c.dataset = j.at("dataset");
  c.cf_grid = j.value("cf_grid", c.cf_grid);
  c.seeds = j.value("seeds", c.seeds);
  c.base_nets = j.value("base_nets", c.base_nets);
  c.random_profiles = j.value("random_profiles", c.random_profiles);
  c.max_cf = j.value("max_cf", c.max_cf);
  c.env_count = j.value("env_count", c.env_count);
  c.expected_pruned = j.value("expected_pruned", c.expected_pruned);
  c.reward = j.value("reward", c.reward);
  c.sigma = j.value("sigma", c.sigma);
  c.tau = j.value("tau", c.tau);
  auto train_from = [](const json& t, TrainConfig base) {
    base.lr = real(t.value("lr", double(base.lr)));
    base.lr_decay = real(t.value("lr_decay", double(base.lr_decay)));
    base.decay_at = t.value("decay_at", base.decay_at);
    base.momentum = real(t.value("momentum", double(base.momentum)));
    base.weight_decay = real(t.value("weight_decay", double(base.weight_decay)));
    base.batch_size = t.value("batch_size", base.batch_size);
    base.epochs = t.value("epochs", base.epochs);
    base.seed = t.value("seed", base.seed);
    return base;
  };
  if (j.contains("base_train")) c.base_train = train_from(j["base_train"], c.base_train);
  if (j.contains("finetune")) c.finetune = train_from(j["finetune"], c.finetune);
  if (j.contains("env_finetune")) {
    c.env_finetune = train_from(j["env_finetune"], c.env_finetune);
  }
  if (j.contains("ppo")) {
    const auto& p = j["ppo"];
    c.ppo.clip_ratio = p.value("clip_ratio", c.ppo.clip_ratio);
    c.ppo.gae_lambda = p.value("gae_lambda", c.ppo.gae_lambda);
    c.ppo.gamma = p.value("gamma", c.ppo.gamma);
    c.ppo.update_epochs = p.value("update_epochs", c.ppo.update_epochs);
    c.ppo.minibatch = p.value("minibatch", c.ppo.minibatch);
    c.ppo.hidden = p.value("hidden", c.ppo.hidden);
    c.ppo.lr = p.value("lr", c.ppo.lr);
    c.ppo.init_log_std = p.value("init_log_std", c.ppo.init_log_std);
    c.ppo.std_floor = p.value("std_floor", c.ppo.std_floor);
    c.ppo.entropy_coef = p.value("entropy_coef", c.ppo.entropy_coef);
    c.ppo.value_coef = p.value("value_coef", c.ppo.value_coef);
    c.ppo.iterations = p.value("iterations", c.ppo.iterations);
    c.ppo.episodes_per_iter = p.value("episodes_per_iter", c.ppo.episodes_per_iter);
    c.ppo.workers = p.value("workers", c.ppo.workers);
    c.ppo.seed = p.value("seed", c.ppo.seed);
  }
  c.workers = j.value("workers", c.workers);
  c.out_dir = j.value("out_dir", c.out_dir);
  c.profile_files = j.value("profile_files", c.profile_files);
  c.distribution_csv = j.value("distribution_csv", c.distribution_csv);
  c.policy_file = j.value("policy_file", c.policy_file);
  c.checkpoint = j.value("checkpoint", c.checkpoint);
  return c;
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("experiment: seed list is empty");
  if (out_dir.empty()) throw ConfigError("experiment: out_dir is required");
  for (const auto& f : profile_files) {
    if (!fs::exists(f)) throw ConfigError("experiment: missing profile file " + f);
  }
  if (!distribution_csv.empty() && !fs::exists(distribution_csv)) {
    throw ConfigError("experiment: missing distribution csv " + distribution_csv);
  }
  if (!policy_file.empty() && !fs::exists(policy_file)) {
    throw ConfigError("experiment: missing policy file " + policy_file);
  }
}

ResultWriter::ResultWriter(const std::string& path) : path_(path) {
  if (fs::exists(path)) {
    for (const auto& row : read(path)) {
      done_.insert(row.experiment + "|" + std::to_string(row.seed) + "|" +
                   row.profile + "|" + row.net);
    }
  } else {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write results csv: " + path);
    out << "# boxprune-results v1\n";
    out << "experiment,seed,profile,net,cf,c,accuracy\n";
  }
}

bool ResultWriter::already_done(const ResultRow& row) const {
  return done_.count(row.experiment + "|" + std::to_string(row.seed) + "|" +
                     row.profile + "|" + row.net) > 0;
}

void ResultWriter::append(const ResultRow& row) {
  std::ofstream out(path_, std::ios::app);
  out << row.experiment << "," << row.seed << "," << row.profile << "," << row.net
      << "," << fmt(row.cf) << "," << fmt(row.c) << "," << fmt(row.accuracy) << "\n";
  done_.insert(row.experiment + "|" + std::to_string(row.seed) + "|" + row.profile +
               "|" + row.net);
}

std::vector<ResultRow> ResultWriter::read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read results csv: " + path);
  std::vector<ResultRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("experiment,", 0) == 0) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 7) throw ConfigError("malformed results row: " + line);
    ResultRow r;
    r.experiment = cells[0];
    r.seed = std::stoull(cells[1]);
    r.profile = cells[2];
    r.net = cells[3];
    r.cf = std::stod(cells[4]);
    r.c = std::stod(cells[5]);
    r.accuracy = std::stod(cells[6]);
    rows.push_back(std::move(r));
  }
  return rows;
}

void run_job_pool(int workers, int job_count, const std::function<ResultRow(int)>& run,
                  const std::function<void(const ResultRow&)>& emit) {
  if (job_count == 0) return;
  workers = std::max(1, std::min(workers, job_count));
  std::vector<ResultRow> slots{size_t(job_count)};
  std::vector<char> ready(size_t(job_count), 0);
  std::atomic<int> next_job{0};
  std::mutex emit_mutex;
  int next_emit = 0;
  std::vector<std::exception_ptr> errors{size_t(workers)};

  auto work = [&](int w) {
    try {
      while (true) {
        const int i = next_job.fetch_add(1);
        if (i >= job_count) break;
        ResultRow row = run(i);
        std::lock_guard<std::mutex> lock(emit_mutex);
        slots[size_t(i)] = std::move(row);
        ready[size_t(i)] = 1;
        while (next_emit < job_count && ready[size_t(next_emit)]) {
          emit(slots[size_t(next_emit)]);
          ++next_emit;
        }
      }
    } catch (...) {
      errors[size_t(w)] = std::current_exception();
    }
  };

  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

double percentile_in_cf_bucket(const std::vector<ResultRow>& rows, double cf,
                               double accuracy) {
  int in_bucket = 0, at_or_below = 0;
  for (const auto& r : rows) {
    if (r.cf < cf / 1.1 || r.cf > cf * 1.1) continue;
    ++in_bucket;
    if (r.accuracy <= accuracy) ++at_or_below;
  }
  if (in_bucket == 0) return -1.0;  // no comparable rows near this CF
  return 100.0 * double(at_or_below) / double(in_bucket);
}

namespace {

struct SweepVariant {
  std::string label;   // row id, e.g. "pretrained-cf2"
  std::string family;  // curve file the rows aggregate into
  Profile profile;
  ChannelCriterion criterion = ChannelCriterion::Random;
  InitStrategy init = InitStrategy::Pretrained;
  Pipeline pipeline = Pipeline::OneShot;
};

// Shared engine for the three sweep experiments: every variant is pruned
// and fine-tuned once per seed against one base net; rows aggregate into
// one curve CSV per family.
json run_sweep(const ExperimentConfig& cfg, const std::vector<SweepVariant>& variants,
               const Net& base, const Dataset& data, const RunDir& run) {
  ResultWriter writer(run.path("results.csv"));
  struct Job {
    const SweepVariant* variant;
    uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& v : variants) {
    for (uint64_t seed : cfg.seeds) jobs.push_back({&v, seed});
  }

  std::map<std::string, std::string> family_of;  // label -> family
  for (const auto& v : variants) family_of[v.label] = v.family;

  // Resumed cells keep their on-disk values and are not recomputed.
  std::map<std::string, std::map<double, std::vector<double>>> curves;
  std::vector<char> skip(jobs.size(), 0);
  for (size_t i = 0; i < jobs.size(); ++i) {
    ResultRow key;
    key.experiment = cfg.kind;
    key.seed = jobs[i].seed;
    key.profile = jobs[i].variant->label;
    key.net = "base0";
    skip[i] = writer.already_done(key) ? 1 : 0;
  }
  if (fs::exists(run.path("results.csv"))) {
    for (const auto& row : ResultWriter::read(run.path("results.csv"))) {
      auto it = family_of.find(row.profile);
      if (row.experiment == cfg.kind && it != family_of.end()) {
        curves[it->second][row.cf].push_back(row.accuracy);
      }
    }
  }

  auto run_one = [&](int i) {
    const Job& job = jobs[size_t(i)];
    ResultRow row;
    row.experiment = cfg.kind;
    row.seed = job.seed;
    row.profile = job.variant->label;
    row.net = "base0";
    if (skip[size_t(i)]) {
      row.skipped = true;
      return row;
    }
    const double t0 = now_s();
    PruneJob pj;
    pj.base = &base;
    pj.profile = job.variant->profile;
    pj.criterion = job.variant->criterion;
    pj.init = job.variant->init;
    pj.pipeline = job.variant->pipeline;
    pj.finetune = cfg.finetune;
    pj.finetune.seed = job.seed;
    pj.seed = job.seed;
    const PruneOutcome outcome = prune_and_finetune(pj, data.train, data.val);
    row.accuracy = double(outcome.accuracy);
    row.cf = outcome.compression.cf;
    row.c = outcome.compression.c;
    row.wall_s = now_s() - t0;
    return row;
  };
  auto emit = [&](const ResultRow& row) {
    if (row.skipped) return;
    writer.append(row);
    curves[family_of.at(row.profile)][row.cf].push_back(row.accuracy);
  };
  run_job_pool(cfg.workers, int(jobs.size()), run_one, emit);

  json summary;
  for (const auto& [family, by_cf] : curves) {
    std::vector<std::array<double, 3>> rows;
    for (const auto& [cf, accs] : by_cf) {
      const auto ms = mean_std(accs);
      rows.push_back({cf, ms[0], ms[1]});
    }
    write_curve(run.path(cfg.kind + "-" + family + ".csv"), rows);
    summary["curves"].push_back(family);
  }
  summary["rows"] = int(jobs.size());
  return summary;
}

json run_train_base(const ExperimentConfig& cfg, const RunDir& run) {
  Dataset data = load_dataset(cfg.dataset);
  NetworkSpec spec = build_arch(cfg.arch, data.num_classes, input_shape_of(data));
  Net net = train_base_net(spec, data, cfg.base_train, cfg.base_train.seed);
  const double acc = double(evaluate(net, data.val));
  const std::string path =
      cfg.checkpoint.empty() ? run.path("base.bin") : cfg.checkpoint;
  save_checkpoint(path, net);
  return json{{"accuracy", acc}, {"checkpoint", path}, {"params", param_count(spec)}};
}

json run_init_sweep(const ExperimentConfig& cfg, const RunDir& run) {
  Dataset data = load_dataset(cfg.dataset);
  NetworkSpec spec = build_arch(cfg.arch, data.num_classes, input_shape_of(data));
  Net base = train_base_net(spec, data, cfg.base_train, cfg.base_train.seed);

  std::vector<SweepVariant> variants;
  json skipped = json::array();
  for (double cf : cfg.cf_grid) {
    double k = 0;
    try {
      k = solve_k_for_cf(spec, ProfileFamily::Equal, cf);
    } catch (const ConfigError&) {
      skipped.push_back(cf);  // off the rounding lattice for this arch
      continue;
    }
    Profile p = equally_distributed(cfg.arch, spec.flag_count(), k);
    for (InitStrategy init : {InitStrategy::Pretrained, InitStrategy::Random}) {
      SweepVariant v;
      v.family = init == InitStrategy::Pretrained ? "pretrained" : "random";
      v.label = v.family + "-cf" + fmt(cf);
      v.profile = p;
      v.init = init;
      variants.push_back(std::move(v));
    }
  }
  json summary = run_sweep(cfg, variants, base, data, run);
  summary["base_accuracy"] = double(evaluate(base, data.val));
  summary["skipped_cf"] = skipped;
  return summary;
}

json run_metric_sweep(const ExperimentConfig& cfg, const RunDir& run) {
  Dataset data = load_dataset(cfg.dataset);
  NetworkSpec spec = build_arch(cfg.arch, data.num_classes, input_shape_of(data));
  Net base = train_base_net(spec, data, cfg.base_train, cfg.base_train.seed);

  std::vector<SweepVariant> variants;
  json skipped = json::array();
  for (double cf : cfg.cf_grid) {
    double k = 0;
    try {
      k = solve_k_for_cf(spec, ProfileFamily::Equal, cf);
    } catch (const ConfigError&) {
      skipped.push_back(cf);
      continue;
    }
    Profile p = equally_distributed(cfg.arch, spec.flag_count(), k);
    const struct {
      const char* name;
      ChannelCriterion criterion;
      Pipeline pipeline;
    } rows[] = {
        {"random", ChannelCriterion::Random, Pipeline::OneShot},
        {"l1", ChannelCriterion::L1, Pipeline::OneShot},
        // taylor features need the layer-wise prune-and-fine-tune loop
        {"taylor", ChannelCriterion::Taylor, Pipeline::LayerwiseIterative},
    };
    for (const auto& r : rows) {
      SweepVariant v;
      v.family = r.name;
      v.label = std::string(r.name) + "-cf" + fmt(cf);
      v.profile = p;
      v.criterion = r.criterion;
      v.pipeline = r.pipeline;
      variants.push_back(std::move(v));
    }
  }
  json summary = run_sweep(cfg, variants, base, data, run);
  summary["skipped_cf"] = skipped;
  return summary;
}

json run_profile_sweep(const ExperimentConfig& cfg, const RunDir& run) {
  Dataset data = load_dataset(cfg.dataset);
  NetworkSpec spec = build_arch(cfg.arch, data.num_classes, input_shape_of(data));
  Net base = train_base_net(spec, data, cfg.base_train, cfg.base_train.seed);

  std::vector<SweepVariant> variants;
  json skipped = json::array();
  const struct {
    const char* name;
    ProfileFamily family;
  } families[] = {{"equal", ProfileFamily::Equal},
                  {"increasing", ProfileFamily::Increasing},
                  {"decreasing", ProfileFamily::Decreasing}};
  for (double cf : cfg.cf_grid) {
    for (const auto& f : families) {
      try {
        const double param = solve_k_for_cf(spec, f.family, cf);
        SweepVariant v;
        v.family = f.name;
        v.label = std::string(f.name) + "-cf" + fmt(cf);
        v.profile = family_profile(cfg.arch, spec.flag_count(), f.family, param);
        variants.push_back(std::move(v));
      } catch (const ConfigError&) {
        skipped.push_back(json{{"family", f.name}, {"cf", cf}});
      }
    }
  }
  Rng rng(cfg.seeds.front());
  for (int i = 0; i < cfg.random_profiles; ++i) {
    Rng prof_rng = rng.child(uint64_t(i));
    Profile p = random_profile(cfg.arch, spec.flag_count(), prof_rng);
    const double cf = compression_of(p, spec).cf;
    if (cf > cfg.max_cf) continue;
    SweepVariant v;
    v.family = "random";
    v.label = "rnd" + std::to_string(i) + "-cf" + fmt(cf);
    v.profile = std::move(p);
    variants.push_back(std::move(v));
  }

  json summary = run_sweep(cfg, variants, base, data, run);
  summary["skipped"] = skipped;
  return summary;
}

json run_random_search(const ExperimentConfig& cfg, const RunDir& run) {
  Dataset data = load_dataset(cfg.dataset);
  NetworkSpec spec = build_arch(cfg.arch, data.num_classes, input_shape_of(data));

  std::vector<Net> bases;
  for (int i = 0; i < cfg.base_nets; ++i) {
    bases.push_back(train_base_net(spec, data, cfg.base_train,
                                   cfg.base_train.seed + uint64_t(i)));
  }

  // Seeded profiles capped at max_cf; over-compressed draws are resampled
  // from the next child stream.
  Rng rng(cfg.seeds.front());
  std::vector<Profile> profiles;
  for (int i = 0; i < cfg.random_profiles; ++i) {
    for (uint64_t attempt = 0;; ++attempt) {
      Rng prof_rng = rng.child(uint64_t(i) * 1000 + attempt);
      Profile p = random_profile(cfg.arch, spec.flag_count(), prof_rng);
      if (compression_of(p, spec).cf <= cfg.max_cf) {
        profiles.push_back(std::move(p));
        break;
      }
    }
  }

  ResultWriter writer(run.path("results.csv"));
  const int n_jobs = int(profiles.size()) * int(bases.size());

  std::map<int, std::vector<double>> acc_by_profile;
  std::vector<char> skip(size_t(n_jobs), 0);
  auto job_key = [&](int idx) {
    ResultRow row;
    row.experiment = "random-search";
    row.seed = rng.child(uint64_t(idx) + 500000).seed();
    row.profile = "rand" + std::to_string(idx / int(bases.size()));
    row.net = "base" + std::to_string(idx % int(bases.size()));
    return row;
  };
  for (int i = 0; i < n_jobs; ++i) skip[size_t(i)] = writer.already_done(job_key(i));
  for (const auto& row : ResultWriter::read(run.path("results.csv"))) {
    if (row.experiment == "random-search" && row.profile.rfind("rand", 0) == 0) {
      acc_by_profile[std::stoi(row.profile.substr(4))].push_back(row.accuracy);
    }
  }

  auto run_one = [&](int idx) {
    ResultRow row = job_key(idx);
    if (skip[size_t(idx)]) {
      row.skipped = true;
      return row;
    }
    const int pi = idx / int(bases.size());
    const int ni = idx % int(bases.size());
    PruneJob pj;
    pj.base = &bases[size_t(ni)];
    pj.profile = profiles[size_t(pi)];
    pj.criterion = ChannelCriterion::Random;
    pj.init = InitStrategy::Pretrained;
    pj.finetune = cfg.finetune;
    pj.finetune.seed = row.seed;
    pj.seed = row.seed;
    const PruneOutcome outcome = prune_and_finetune(pj, data.train, data.val);
    row.accuracy = double(outcome.accuracy);
    row.cf = outcome.compression.cf;
    row.c = outcome.compression.c;
    return row;
  };
  auto emit = [&](const ResultRow& row) {
    if (row.skipped) return;
    writer.append(row);
    acc_by_profile[std::stoi(row.profile.substr(4))].push_back(row.accuracy);
  };
  run_job_pool(cfg.workers, n_jobs, run_one, emit);

  // Geometric CF buckets (ratio 1.21 ~= +/-10%); best mean accuracy wins.
  std::map<int, std::pair<int, double>> best_in_bucket;  // bucket -> (profile, acc)
  for (size_t pi = 0; pi < profiles.size(); ++pi) {
    const double cf = compression_of(profiles[pi], spec).cf;
    const int bucket = int(std::floor(std::log(cf) / std::log(1.21)));
    const double mean =
        mean_std(acc_by_profile.at(int(pi)))[0];
    auto it = best_in_bucket.find(bucket);
    if (it == best_in_bucket.end() || mean > it->second.second) {
      best_in_bucket[bucket] = {int(pi), mean};
    }
  }
  json top = json::array();
  for (const auto& [bucket, entry] : best_in_bucket) {
    const Profile& p = profiles[size_t(entry.first)];
    const double cf = compression_of(p, spec).cf;
    const std::string path =
        run.path("profiles/top-bucket" + std::to_string(bucket) + ".json");
    p.save(path);
    top.push_back(json{{"bucket", bucket},
                       {"profile", "rand" + std::to_string(entry.first)},
                       {"cf", cf},
                       {"mean_accuracy", entry.second},
                       {"file", path}});
  }
  return json{{"profiles", int(profiles.size())},
              {"nets", int(bases.size())},
              {"top", top}};
}

json run_transfer_eval(const ExperimentConfig& cfg, const RunDir& run) {
  Dataset data = load_dataset(cfg.dataset);
  NetworkSpec spec = build_arch(cfg.arch, data.num_classes, input_shape_of(data));
  Net base = cfg.checkpoint.empty()
                 ? train_base_net(spec, data, cfg.base_train, cfg.base_train.seed)
                 : load_checkpoint(cfg.checkpoint);

  std::vector<Profile> profiles;
  for (const auto& f : cfg.profile_files) {
    Profile p = Profile::load(f);
    if (int(p.betas.size()) != spec.flag_count()) {
      throw ConfigError("transfer: profile " + f + " has " +
                        std::to_string(p.betas.size()) + " flags, target needs " +
                        std::to_string(spec.flag_count()));
    }
    profiles.push_back(std::move(p));
  }
  if (profiles.empty()) throw ConfigError("transfer: no profiles given");

  std::vector<ResultRow> distribution;
  if (!cfg.distribution_csv.empty()) {
    distribution = ResultWriter::read(cfg.distribution_csv);
  }

  ResultWriter writer(run.path("results.csv"));
  const int n_jobs = int(profiles.size()) * int(cfg.seeds.size());

  std::map<int, std::vector<double>> acc_by_profile;
  std::map<int, double> cf_by_profile;
  for (size_t pi = 0; pi < profiles.size(); ++pi) {
    cf_by_profile[int(pi)] = compression_of(profiles[pi], spec).cf;
  }
  auto job_key = [&](int idx) {
    ResultRow row;
    row.experiment = "transfer-eval";
    row.seed = cfg.seeds[size_t(idx) % cfg.seeds.size()];
    row.profile = "transfer" + std::to_string(idx / int(cfg.seeds.size()));
    row.net = "target0";
    return row;
  };
  std::vector<char> skip(size_t(n_jobs), 0);
  for (int i = 0; i < n_jobs; ++i) skip[size_t(i)] = writer.already_done(job_key(i));
  for (const auto& row : ResultWriter::read(run.path("results.csv"))) {
    if (row.experiment == "transfer-eval" && row.profile.rfind("transfer", 0) == 0) {
      acc_by_profile[std::stoi(row.profile.substr(8))].push_back(row.accuracy);
    }
  }

  auto run_one = [&](int idx) {
    ResultRow row = job_key(idx);
    if (skip[size_t(idx)]) {
      row.skipped = true;
      return row;
    }
    const int pi = idx / int(cfg.seeds.size());
    PruneJob pj;
    pj.base = &base;
    pj.profile = profiles[size_t(pi)];
    pj.criterion = ChannelCriterion::Random;
    pj.finetune = cfg.finetune;
    pj.finetune.seed = row.seed;
    pj.seed = row.seed;
    const PruneOutcome outcome = prune_and_finetune(pj, data.train, data.val);
    row.accuracy = double(outcome.accuracy);
    row.cf = outcome.compression.cf;
    row.c = outcome.compression.c;
    return row;
  };
  auto emit = [&](const ResultRow& row) {
    if (row.skipped) return;
    writer.append(row);
    acc_by_profile[std::stoi(row.profile.substr(8))].push_back(row.accuracy);
  };
  run_job_pool(cfg.workers, n_jobs, run_one, emit);

  json ranked = json::array();
  std::ofstream tcsv(run.path("transfer.csv"));
  tcsv << "# boxprune-transfer v1\nprofile,cf,accuracy,percentile\n";
  for (size_t pi = 0; pi < profiles.size(); ++pi) {
    const auto ms = mean_std(acc_by_profile.at(int(pi)));
    const double cf = cf_by_profile.at(int(pi));
    const double pct = distribution.empty()
                           ? -1.0
                           : percentile_in_cf_bucket(distribution, cf, ms[0]);
    tcsv << cfg.profile_files[pi] << "," << fmt(cf) << "," << fmt(ms[0]) << ","
         << fmt(pct) << "\n";
    ranked.push_back(json{{"profile", cfg.profile_files[pi]},
                          {"cf", cf},
                          {"accuracy", ms[0]},
                          {"std", ms[1]},
                          {"percentile", pct}});
  }
  return json{{"transfers", ranked}};
}

json run_rl_train(const ExperimentConfig& cfg, const RunDir& run) {
  std::vector<Dataset> datasets;
  std::vector<Net> bases;
  EnvQueue queue;
  json env_info = json::array();
  for (int i = 0; i < cfg.env_count; ++i) {
    datasets.push_back(load_dataset(cfg.dataset, uint64_t(i)));
  }
  NetworkSpec spec =
      build_arch(cfg.arch, datasets.front().num_classes, input_shape_of(datasets.front()));
  for (int i = 0; i < cfg.env_count; ++i) {
    bases.push_back(train_base_net(spec, datasets[size_t(i)], cfg.base_train,
                                   cfg.base_train.seed + uint64_t(i)));
  }
  for (int i = 0; i < cfg.env_count; ++i) {
    RewardConfig reward;
    reward.kind = reward_kind_from_name(cfg.reward);
    reward.expected_pruned = cfg.expected_pruned;
    reward.sigma = cfg.sigma;
    reward.tau = cfg.tau;
    reward.expected_accuracy =
        double(evaluate(bases[size_t(i)], datasets[size_t(i)].val));
    env_info.push_back(json{{"env", i}, {"base_accuracy", reward.expected_accuracy}});
    queue.add(std::make_unique<NetPruneEnv>(i, &bases[size_t(i)], &datasets[size_t(i)],
                                            reward, cfg.env_finetune));
  }

  std::ofstream curve(run.path("training_curve.csv"));
  curve << "# boxprune-rlcurve v1\n";
  curve << "iteration,reward_mean,reward_min,reward_max,mean_pruned,mean_accuracy\n";
  curve.precision(17);
  PpoLearner learner(queue.obs_width(), cfg.arch, cfg.ppo);
  learner.train(queue, [&](const IterationStats& s) {
    curve << s.iteration << "," << s.reward_mean << "," << s.reward_min << ","
          << s.reward_max << "," << s.mean_pruned << "," << s.mean_accuracy << "\n";
    curve.flush();
  });

  const std::string policy_path =
      cfg.policy_file.empty() ? run.path("policy.bin") : cfg.policy_file;
  learner.save(policy_path);

  json profiles = json::array();
  for (int i = 0; i < queue.size(); ++i) {
    Rng rng(cfg.ppo.seed + uint64_t(i) + 7777);
    Profile p = rollout_profile(learner.policy(), queue.env(i), true, rng);
    const std::string path = run.path("profiles/rl-env" + std::to_string(i) + ".json");
    p.save(path);
    profiles.push_back(json{{"env", i},
                            {"file", path},
                            {"cf", compression_of(p, spec).cf}});
  }
  return json{{"envs", env_info}, {"policy", policy_path}, {"profiles", profiles}};
}

json run_rl_transfer(const ExperimentConfig& cfg, const RunDir& run) {
  if (cfg.policy_file.empty()) throw ConfigError("rl-transfer needs a policy file");
  Policy policy = load_policy(cfg.policy_file);

  Dataset data = load_dataset(cfg.dataset);
  NetworkSpec spec = build_arch(cfg.arch, data.num_classes, input_shape_of(data));
  Net base = cfg.checkpoint.empty()
                 ? train_base_net(spec, data, cfg.base_train, cfg.base_train.seed)
                 : load_checkpoint(cfg.checkpoint);

  RewardConfig reward;
  reward.kind = reward_kind_from_name(cfg.reward);
  reward.expected_pruned = cfg.expected_pruned;
  reward.sigma = cfg.sigma;
  reward.tau = cfg.tau;
  reward.expected_accuracy = double(evaluate(base, data.val));
  NetPruneEnv env(0, &base, &data, reward, cfg.env_finetune);

  Rng rng(cfg.seeds.front() + 4242);
  Profile profile = rollout_profile(policy, env, true, rng);
  const std::string profile_path = run.path("profiles/rl-transfer.json");
  profile.save(profile_path);

  ExperimentConfig sub = cfg;
  sub.kind = "transfer-eval";
  sub.profile_files = {profile_path};
  json transfer = run_transfer_eval(sub, run);
  transfer["profile"] = profile_path;
  transfer["rolled_cf"] = compression_of(profile, spec).cf;
  return transfer;
}

}  // namespace

json run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  RunDir run(cfg);
  json summary;
  if (cfg.kind == "train-base") {
    summary = run_train_base(cfg, run);
  } else if (cfg.kind == "init-sweep") {
    summary = run_init_sweep(cfg, run);
  } else if (cfg.kind == "metric-sweep") {
    summary = run_metric_sweep(cfg, run);
  } else if (cfg.kind == "profile-sweep") {
    summary = run_profile_sweep(cfg, run);
  } else if (cfg.kind == "random-search") {
    summary = run_random_search(cfg, run);
  } else if (cfg.kind == "transfer-eval") {
    summary = run_transfer_eval(cfg, run);
  } else if (cfg.kind == "rl-train") {
    summary = run_rl_train(cfg, run);
  } else if (cfg.kind == "rl-transfer") {
    summary = run_rl_transfer(cfg, run);
  } else {
    throw ConfigError("unknown experiment kind: " + cfg.kind);
  }
  summary["kind"] = cfg.kind;
  summary["out_dir"] = run.dir;
  std::ofstream out(run.path("summary.json"));
  out << summary.dump(2) << "\n";
  return summary;
}

}  // namespace boxprune
