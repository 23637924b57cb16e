// boxprune: channel-pruning toolbox. Subcommands cover base training,
// one-off pruning, profile search, transfer evaluation, RL policy search,
// reward landscapes, and run-directory reports.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "boxprune/checkpoint.hpp"
#include "boxprune/experiments.hpp"
#include "boxprune/metrics.hpp"
#include "boxprune/rewards.hpp"

using namespace boxprune;
using nlohmann::json;

namespace {

ExperimentConfig config_from(const std::string& config_file, const std::string& kind,
                             const std::string& out_dir) {
  ExperimentConfig cfg;
  if (!config_file.empty()) {
    std::ifstream in(config_file);
    if (!in) throw ConfigError("cannot read config file: " + config_file);
    json j;
    in >> j;
    cfg = ExperimentConfig::from_json(j);
  }
  if (!kind.empty()) cfg.kind = kind;
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  return cfg;
}

json dataset_spec_from(const std::string& dataset_json) {
  if (dataset_json.empty()) return json{{"synthetic", json::object()}};
  if (std::filesystem::exists(dataset_json)) {
    std::ifstream in(dataset_json);
    json j;
    in >> j;
    return j;
  }
  return json::parse(dataset_json);
}

void print_summary(const json& summary) { std::cout << summary.dump(2) << "\n"; }

int run_cli(int argc, char** argv) {
  CLI::App app{"boxprune: layer-wise channel pruning toolbox"};
  app.require_subcommand(1);

  std::string config_file, out_dir, dataset_json, arch;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_file, "experiment config JSON file");
    cmd->add_option("--out-dir", out_dir, "run directory (under $BOXPRUNE_OUT if relative)");
    cmd->add_option("--dataset", dataset_json, "dataset spec JSON (file or inline)");
    cmd->add_option("--arch", arch, "architecture, e.g. cnet-small, cnet-32, resnet20-16");
  };

  // train-base
  auto* train_cmd = app.add_subcommand("train-base", "train a base network");
  std::string checkpoint_out;
  int epochs = -1;
  uint64_t seed = 0;
  add_common(train_cmd);
  train_cmd->add_option("--checkpoint", checkpoint_out, "checkpoint output path");
  train_cmd->add_option("--epochs", epochs, "training epochs");
  train_cmd->add_option("--seed", seed, "training seed");

  // prune
  auto* prune_cmd = app.add_subcommand("prune", "prune a checkpoint with a profile");
  std::string base_ckpt, profile_file, criterion = "random", init = "pretrained",
              pipeline = "oneshot", pruned_out, scores_out;
  add_common(prune_cmd);
  prune_cmd->add_option("--checkpoint", base_ckpt, "base checkpoint")->required();
  prune_cmd->add_option("--profile", profile_file, "profile JSON")->required();
  prune_cmd->add_option("--criterion", criterion, "random|l1|taylor");
  prune_cmd->add_option("--init", init, "pretrained|random");
  prune_cmd->add_option("--pipeline", pipeline, "oneshot|layerwise");
  prune_cmd->add_option("--pruned-out", pruned_out, "pruned checkpoint output");
  prune_cmd->add_option("--export-scores", scores_out, "write channel scores CSV");
  prune_cmd->add_option("--seed", seed, "fine-tune seed");
  prune_cmd->add_option("--epochs", epochs, "fine-tune epochs");

  // experiment verbs
  auto* random_cmd = app.add_subcommand("random-search", "seeded random profile search");
  add_common(random_cmd);
  auto* transfer_cmd =
      app.add_subcommand("transfer-eval", "evaluate transferred profiles");
  std::vector<std::string> profile_files;
  std::string distribution_csv, policy_file;
  add_common(transfer_cmd);
  transfer_cmd->add_option("--profile", profile_files, "profile JSON file(s)");
  transfer_cmd->add_option("--distribution", distribution_csv,
                           "random-search results.csv for percentiles");
  auto* rl_cmd = app.add_subcommand("rl-train", "train the pruning policy");
  add_common(rl_cmd);
  auto* rollout_cmd = app.add_subcommand("rl-rollout", "roll a policy into a profile");
  std::string rollout_out;
  bool stochastic = false;
  add_common(rollout_cmd);
  rollout_cmd->add_option("--policy", policy_file, "policy checkpoint")->required();
  rollout_cmd->add_option("--checkpoint", base_ckpt, "base net checkpoint (else trains one)");
  rollout_cmd->add_option("--out", rollout_out, "profile JSON output")->required();
  rollout_cmd->add_flag("--stochastic", stochastic, "sample instead of mean actions");
  rollout_cmd->add_option("--seed", seed, "rollout seed");

  // emit-landscape
  auto* land_cmd = app.add_subcommand("emit-landscape", "reward landscape CSV");
  std::string reward_kind = "gaussian";
  double ae = 0.9, ce = 0.5, sigma = 0.3, tau = 0.1;
  int resolution = 64;
  add_common(land_cmd);
  land_cmd->add_option("--kind", reward_kind, "gaussian|n2n|hyperbolic");
  land_cmd->add_option("--ae", ae, "expected accuracy");
  land_cmd->add_option("--ce", ce, "expected pruned fraction");
  land_cmd->add_option("--sigma", sigma, "gaussian width");
  land_cmd->add_option("--tau", tau, "hyperbolic temperature");
  land_cmd->add_option("--resolution", resolution, "grid resolution");

  // report
  auto* report_cmd = app.add_subcommand("report", "summarize a run directory");
  std::string report_dir;
  report_cmd->add_option("--dir", report_dir, "run directory")->required();

  CLI11_PARSE(app, argc, argv);

  if (train_cmd->parsed()) {
    ExperimentConfig cfg = config_from(config_file, "train-base", out_dir);
    if (!dataset_json.empty()) cfg.dataset = dataset_spec_from(dataset_json);
    if (!arch.empty()) cfg.arch = arch;
    if (epochs > 0) cfg.base_train.epochs = epochs;
    if (seed) cfg.base_train.seed = seed;
    if (!checkpoint_out.empty()) cfg.checkpoint = checkpoint_out;
    if (cfg.out_dir.empty()) cfg.out_dir = "train-base-run";
    print_summary(run_experiment(cfg));
    return 0;
  }

  if (prune_cmd->parsed()) {
    ExperimentConfig cfg = config_from(config_file, "prune", out_dir);
    if (!dataset_json.empty()) cfg.dataset = dataset_spec_from(dataset_json);
    Dataset data = load_dataset(cfg.dataset);
    Net base = load_checkpoint(base_ckpt);
    Profile profile = Profile::load(profile_file);

    PruneJob job;
    job.base = &base;
    job.profile = profile;
    if (criterion == "random") job.criterion = ChannelCriterion::Random;
    else if (criterion == "l1") job.criterion = ChannelCriterion::L1;
    else if (criterion == "taylor") job.criterion = ChannelCriterion::Taylor;
    else throw ConfigError("unknown criterion: " + criterion);
    if (init == "pretrained") job.init = InitStrategy::Pretrained;
    else if (init == "random") job.init = InitStrategy::Random;
    else throw ConfigError("unknown init: " + init);
    if (pipeline == "oneshot") job.pipeline = Pipeline::OneShot;
    else if (pipeline == "layerwise") job.pipeline = Pipeline::LayerwiseIterative;
    else throw ConfigError("unknown pipeline: " + pipeline);
    job.finetune = cfg.finetune;
    if (epochs > 0) job.finetune.epochs = epochs;
    if (seed) {
      job.finetune.seed = seed;
      job.seed = seed;
    }

    if (!scores_out.empty()) {
      std::vector<ChannelScores> scores;
      if (job.criterion == ChannelCriterion::L1) {
        for (int f = 0; f < base.spec.flag_count(); ++f) {
          const auto& layer =
              base.spec.layers[size_t(base.spec.flags[size_t(f)].decision_layer)];
          scores.push_back({f, "l1", l1_scores(base.weights.at(layer.name + ".w"))});
        }
      } else {
        scores = taylor_scores(base, data.val);
      }
      write_scores_csv(scores_out, scores);
    }

    const PruneOutcome outcome = prune_and_finetune(job, data.train, data.val);
    if (!pruned_out.empty()) {
      save_checkpoint(pruned_out, outcome.net, profile.to_json());
    }
    print_summary(json{{"accuracy", double(outcome.accuracy)},
                       {"cf", outcome.compression.cf},
                       {"c", outcome.compression.c},
                       {"pruned_checkpoint", pruned_out}});
    return 0;
  }

  if (random_cmd->parsed() || transfer_cmd->parsed() || rl_cmd->parsed()) {
    std::string kind = random_cmd->parsed() ? "random-search"
                       : transfer_cmd->parsed() ? "transfer-eval"
                                                : "rl-train";
    ExperimentConfig cfg = config_from(config_file, kind, out_dir);
    if (!dataset_json.empty()) cfg.dataset = dataset_spec_from(dataset_json);
    if (!arch.empty()) cfg.arch = arch;
    if (!profile_files.empty()) cfg.profile_files = profile_files;
    if (!distribution_csv.empty()) cfg.distribution_csv = distribution_csv;
    if (cfg.out_dir.empty()) cfg.out_dir = kind + "-run";
    print_summary(run_experiment(cfg));
    return 0;
  }

  if (rollout_cmd->parsed()) {
    ExperimentConfig cfg = config_from(config_file, "rl-rollout", out_dir);
    if (!dataset_json.empty()) cfg.dataset = dataset_spec_from(dataset_json);
    if (!arch.empty()) cfg.arch = arch;
    Policy policy = load_policy(policy_file);
    Dataset data = load_dataset(cfg.dataset);
    Net base;
    if (!base_ckpt.empty()) {
      base = load_checkpoint(base_ckpt);
    } else {
      NetworkSpec spec = build_arch(cfg.arch.empty() ? policy.arch : cfg.arch,
                                    data.num_classes,
                                    {data.train.images.dim(1), data.train.images.dim(2),
                                     data.train.images.dim(3)});
      base = init_net(spec, cfg.base_train.seed);
      Trainer trainer(base, cfg.base_train);
      trainer.train(data.train, data.val);
    }
    RewardConfig reward;
    reward.expected_accuracy = std::max(1e-6, double(evaluate(base, data.val)));
    reward.expected_pruned = cfg.expected_pruned;
    NetPruneEnv env(0, &base, &data, reward, cfg.env_finetune);
    Rng rng(seed ? seed : cfg.seeds.front());
    Profile profile = rollout_profile(policy, env, !stochastic, rng);
    profile.save(rollout_out);
    print_summary(json{{"profile", rollout_out},
                       {"cf", compression_of(profile, base.spec).cf},
                       {"betas", profile.betas}});
    return 0;
  }

  if (land_cmd->parsed()) {
    RewardConfig cfg;
    cfg.kind = reward_kind_from_name(reward_kind);
    cfg.expected_accuracy = ae;
    cfg.expected_pruned = ce;
    cfg.sigma = sigma;
    cfg.tau = tau;
    std::string dir = resolve_out_dir(out_dir.empty() ? "." : out_dir);
    std::filesystem::create_directories(dir);
    std::ostringstream name;
    name << reward_kind << "_Ae" << ae << "_Ce" << ce << ".csv";
    const std::string path = dir + "/" + name.str();
    emit_landscape(cfg, resolution, path);
    print_summary(json{{"landscape", path}});
    return 0;
  }

  if (report_cmd->parsed()) {
    const auto rows = ResultWriter::read(report_dir + "/results.csv");
    std::map<std::string, std::vector<double>> by_exp;
    for (const auto& r : rows) by_exp[r.experiment].push_back(r.accuracy);
    json report;
    report["rows"] = int(rows.size());
    for (const auto& [exp, accs] : by_exp) {
      double mean = 0, best = 0;
      for (double a : accs) {
        mean += a;
        best = std::max(best, a);
      }
      report["experiments"][exp] = {{"rows", int(accs.size())},
                                    {"mean_accuracy", mean / double(accs.size())},
                                    {"best_accuracy", best}};
    }
    print_summary(report);
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
