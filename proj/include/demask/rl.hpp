#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "demask/metrics.hpp"
#include "demask/mlm.hpp"
#include "demask/policy.hpp"
#include "demask/schedulers.hpp"

namespace demask {

enum class EntropySign {
  kExplore,  // L_total = L_RL - lambda * L_ent + L_value (rewards entropy)
  kLiteral,  // L_total = L_RL + lambda * L_ent + L_value
};

enum class RewardKind { kBleu, kPseudoLoglik };

std::string to_string(EntropySign sign);
std::string to_string(RewardKind reward);
EntropySign parse_entropy_sign(std::string_view name);
/// Accepts "bleu", "pll" and "pseudo_loglik".
RewardKind parse_reward(std::string_view name);

struct A2CConfig {
  double gamma = 0.999;
  double lambda = 0.001;
  EntropySign entropy_sign = EntropySign::kExplore;
  RewardKind reward = RewardKind::kBleu;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.98;
  std::size_t episodes_per_update = 32;
  std::size_t epochs = 10;
  std::size_t hidden = 32;
  double init_scale = 0.1;
  std::uint64_t seed = 1;

  void validate() const;
  /// Weight of L_ent in L_total for the configured sign.
  double entropy_weight() const {
    return entropy_sign == EntropySign::kExplore ? -lambda : lambda;
  }
  nlohmann::json to_json() const;
  static A2CConfig from_json(const nlohmann::json& j);
  /// Hash of everything except `epochs`, so a run can be resumed and extended.
  std::string hash() const;
};

enum class RolloutMode { kSample, kGreedy };

struct EpisodeStep {
  PositionDistribution dist;  // empty for heuristic schedulers
  std::size_t position = 0;
  double logp = 0.0;
  double value = 0.0;
  TokenId token = Vocab::kPad;
};

struct EpisodeRecord {
  std::vector<EpisodeStep> steps;
  std::vector<StepTape> tape;  // empty unless recorded for training
  Tokens output;
  double reward = 0.0;

  std::vector<std::size_t> positions() const;
  std::vector<double> values() const;
};

/// Reward of a completed output against its reference.
double episode_reward(const MlmModel& mlm, RewardKind kind, const SentencePair& pair,
                      const Tokens& output);

/// Decodes `pair` from an all-mask canvas of the reference length under the
/// policy. Every step recomputes beliefs and fills the MLM's greedy token.
EpisodeRecord rollout(const MlmModel& mlm, const PolicyParams& policy, const ValueParams& value,
                      const SentencePair& pair, RolloutMode mode, Rng& rng,
                      RewardKind reward = RewardKind::kBleu, bool keep_tape = false);

/// Same decoding loop with a heuristic order.
EpisodeRecord decode_with_scheduler(const MlmModel& mlm, const SchedulerKind& kind,
                                    const SentencePair& pair, Rng& rng);

/// A_i = gamma^(T-i) R - v_i for i = 1..T.
std::vector<double> compute_advantages(double reward, std::span<const double> values,
                                       double gamma);
/// gamma^(T-i) R for i = 1..T.
std::vector<double> discounted_returns(double reward, std::size_t steps, double gamma);

/// The three loss terms from the recorded step distributions and critic values.
LossBreakdown losses(const EpisodeRecord& episode, std::span<const double> advantages,
                     double gamma, double lambda, EntropySign sign);

struct EpochReport {
  std::size_t epoch = 0;
  double mean_reward = 0.0;
  double mean_entropy = 0.0;  // mean policy entropy per step, nats
  double dev_bleu = 0.0;      // corpus BLEU in [0, 1], greedy decoding
  double loss_rl = 0.0;
  double loss_ent = 0.0;
  double loss_value = 0.0;
  double loss_total = 0.0;
};

struct TrainReport {
  std::vector<EpochReport> epochs;
  /// Header plus one row per epoch; BLEU and reward scaled x100.
  std::string to_csv() const;
};

/// Complete resumable training state.
struct TrainState {
  static constexpr const char* kVersion = "policy-v1";

  std::string config_hash;
  PolicyParams policy;
  ValueParams value;
  AdamState adam_policy;
  AdamState adam_value;
  std::size_t epochs_done = 0;
  double best_dev_bleu = -1.0;
  PolicyParams best_policy;
  ValueParams best_value;
  TrainReport report;

  std::string to_json() const;
  static TrainState from_json(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static TrainState load(const std::filesystem::path& path);
};

/// Fresh state: seeded parameter init and zero Adam moments.
TrainState init_training(const A2CConfig& config);

using EpochCallback = std::function<void(const EpochReport&)>;

/// Runs epochs [state.epochs_done, config.epochs). Per update: averages
/// gradients of `episodes_per_update` sampled rollouts, then one Adam step
/// per network. Greedy dev evaluation after every epoch; the best-dev
/// parameters are kept. Throws NumericError on a non-finite loss.
void train(const MlmModel& mlm, const Corpus& train_corpus, const Corpus& dev_corpus,
           const A2CConfig& config, TrainState& state, const EpochCallback& on_epoch = {});

struct EvalResult {
  BleuReport bleu;
  std::vector<EpisodeRecord> traces;

  std::vector<Tokens> outputs() const;
};

/// Decodes every pair with its oracle length under a heuristic order.
/// Uniform draws from a per-example stream derived from `seed`.
EvalResult evaluate(const MlmModel& mlm, const Corpus& corpus, const SchedulerKind& kind,
                    std::uint64_t seed = 1);
/// Decodes every pair by greedy argmax of the trained policy.
EvalResult evaluate(const MlmModel& mlm, const Corpus& corpus, const PolicyParams& policy,
                    const ValueParams& value);

/// One JSON object per episode: {"id", "order", "reward", "output",
/// "steps": [{"step", "position", "token", "logp", "value"}, ...]}.
std::string traces_to_jsonl(const std::vector<EpisodeRecord>& traces, const Vocab& vocab,
                            const std::string& order);
void save_traces(const std::filesystem::path& path, const std::vector<EpisodeRecord>& traces,
                 const Vocab& vocab, const std::string& order);

struct TraceLine {
  std::size_t id = 0;
  std::string order;
  double reward = 0.0;
  std::vector<std::size_t> positions;
  std::vector<std::string> tokens;  // filled symbol per step
};

std::vector<TraceLine> load_traces(const std::filesystem::path& path);

}  // namespace demask
