#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "demask/corpus.hpp"
#include "demask/mlm.hpp"
#include "demask/rl.hpp"
#include "demask/schedulers.hpp"

namespace demask {

/// Everything an experiment needs. Sub-seeds for the corpus, the MLM and the
/// policy are derived from the single top-level `seed`.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  TaskSpec task;
  std::size_t n_train = 5000;
  std::size_t n_dev = 500;
  std::size_t mlm_rounds = 20;
  double mlm_smoothing = 0.1;
  double mlm_backoff = 0.4;
  std::vector<std::string> orders = {"uniform",       "l2r",           "l2m",
                                     "easy-first",    "outer2inner:1", "outer2inner:2",
                                     "outer2inner:3"};
  double alpha_logp = 1.0;
  double alpha_negent = 1.0;
  A2CConfig a2c;
  std::size_t bootstrap_resamples = 1000;
  std::string out = "run";

  /// Throws ConfigError on the first invalid field.
  void validate() const;
  nlohmann::json to_json() const;
  /// Unknown keys are a ConfigError.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);

  TaskSpec resolved_task() const;
  MlmFitOptions mlm_options() const;
  A2CConfig resolved_a2c() const;
  /// Scheduler for an order name with this config's EasyFirst weights.
  SchedulerKind scheduler(const std::string& name) const;
  std::filesystem::path out_dir() const { return out; }
};

/// Grid values swept by `ablate`.
const std::vector<double>& lambda_grid();
const std::vector<RewardKind>& reward_grid();

/// Writes several files so that either all of them appear or none does.
class OutputSet {
 public:
  void add(std::filesystem::path path, std::string content);
  /// Writes temporaries, then renames them into place; checks sizes after.
  void commit();

 private:
  std::vector<std::pair<std::filesystem::path, std::string>> files_;
};

// Subcommand drivers. Each writes into config.out and drops a copy of the
// resolved configuration next to its outputs as "<command>.config.json".

void run_gen_corpus(const ExperimentConfig& config);
void run_train_mlm(const ExperimentConfig& config);
/// `order` is a scheduler name or "learned".
void run_decode(const ExperimentConfig& config, const std::string& order);
/// With `resume`, continues from <out>/policy.json up to the configured epoch
/// count; the checkpoint must come from the same configuration.
void run_train_policy(const ExperimentConfig& config, bool resume = false);
void run_eval(const ExperimentConfig& config);
/// `param` is "lambda" or "reward".
void run_ablate(const ExperimentConfig& config, const std::string& param);
void run_analyze(const ExperimentConfig& config, const std::filesystem::path& traces,
                 std::size_t window = 1, double threshold = 0.9, std::size_t render = 5);

/// CSV header shared by decode and eval.
std::string results_csv_header();
std::string results_csv_row(const std::string& task, const std::string& order, double bleu,
                            std::size_t n_examples, std::uint64_t seed);

}  // namespace demask
