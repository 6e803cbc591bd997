#include "demask/rl.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "demask/error.hpp"
#include "demask/io.hpp"
#include "demask/rng.hpp"

namespace demask {

using json = nlohmann::json;

std::string to_string(EntropySign sign) {
  return sign == EntropySign::kExplore ? "explore" : "literal";
}

std::string to_string(RewardKind reward) {
  return reward == RewardKind::kBleu ? "bleu" : "pseudo_loglik";
}

EntropySign parse_entropy_sign(std::string_view name) {
  if (name == "explore") return EntropySign::kExplore;
  if (name == "literal") return EntropySign::kLiteral;
  throw ConfigError("unknown entropy sign '" + std::string(name) + "'");
}

RewardKind parse_reward(std::string_view name) {
  if (name == "bleu") return RewardKind::kBleu;
  if (name == "pll" || name == "pseudo_loglik") return RewardKind::kPseudoLoglik;
  throw ConfigError("unknown reward '" + std::string(name) + "'");
}

void A2CConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must be in (0, 1]");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam betas must be in [0, 1)");
  }
  if (episodes_per_update < 1) throw ConfigError("episodes_per_update must be >= 1");
  if (hidden < 1) throw ConfigError("hidden width must be >= 1");
  if (!(init_scale >= 0.0)) throw ConfigError("init_scale must be >= 0");
}

json A2CConfig::to_json() const {
  return {{"gamma", gamma},
          {"lambda", lambda},
          {"entropy_sign", to_string(entropy_sign)},
          {"reward", to_string(reward)},
          {"lr", lr},
          {"beta1", beta1},
          {"beta2", beta2},
          {"episodes_per_update", episodes_per_update},
          {"epochs", epochs},
          {"hidden", hidden},
          {"init_scale", init_scale},
          {"seed", seed}};
}

A2CConfig A2CConfig::from_json(const json& j) {
  static const std::vector<std::string> known = {
      "gamma", "lambda", "entropy_sign", "reward", "lr", "beta1",
      "beta2", "episodes_per_update", "epochs", "hidden", "init_scale", "seed"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError("unknown a2c config key '" + key + "'");
    }
  }
  A2CConfig c;
  c.gamma = j.value("gamma", c.gamma);
  c.lambda = j.value("lambda", c.lambda);
  if (j.contains("entropy_sign")) c.entropy_sign = parse_entropy_sign(j["entropy_sign"].get<std::string>());
  if (j.contains("reward")) c.reward = parse_reward(j["reward"].get<std::string>());
  c.lr = j.value("lr", c.lr);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.episodes_per_update = j.value("episodes_per_update", c.episodes_per_update);
  c.epochs = j.value("epochs", c.epochs);
  c.hidden = j.value("hidden", c.hidden);
  c.init_scale = j.value("init_scale", c.init_scale);
  c.seed = j.value("seed", c.seed);
  return c;
}

std::string A2CConfig::hash() const {
  json j = to_json();
  j.erase("epochs");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
  return buf;
}

std::vector<std::size_t> EpisodeRecord::positions() const {
  std::vector<std::size_t> out;
  out.reserve(steps.size());
  for (const auto& s : steps) out.push_back(s.position);
  return out;
}

std::vector<double> EpisodeRecord::values() const {
  std::vector<double> out;
  out.reserve(steps.size());
  for (const auto& s : steps) out.push_back(s.value);
  return out;
}

double episode_reward(const MlmModel& mlm, RewardKind kind, const SentencePair& pair,
                      const Tokens& output) {
  if (kind == RewardKind::kBleu) return sentence_bleu(output, pair.target, true);
  return mlm.pseudo_loglik(Canvas::completed(pair.source, output));
}

EpisodeRecord rollout(const MlmModel& mlm, const PolicyParams& policy, const ValueParams& value,
                      const SentencePair& pair, RolloutMode mode, Rng& rng, RewardKind reward,
                      bool keep_tape) {
  const std::size_t len = pair.target.size();
  Canvas canvas(pair.source, len);
  EpisodeRecord ep;
  ep.steps.reserve(len);
  if (keep_tape) ep.tape.reserve(len);

  while (!canvas.complete()) {
    const auto beliefs = mlm.beliefs(canvas);
    Features feats = extract_features(canvas, beliefs, mlm.vocab().payload_size());
    auto masked = canvas.masked_positions();

    EpisodeStep step;
    step.dist = policy_forward(policy, feats, masked);
    step.value = value_forward(value, feats);
    step.position =
        mode == RolloutMode::kSample ? rng.categorical(step.dist.prob) : step.dist.argmax();
    step.logp = std::log(step.dist.prob[step.position]);
    for (const auto& b : beliefs) {
      if (b.position == step.position) step.token = b.greedy_tok;
    }
    canvas.fill(step.position, step.token);

    if (keep_tape) ep.tape.push_back(StepTape{std::move(feats), std::move(masked), step.position});
    ep.steps.push_back(std::move(step));
  }
  ep.output = canvas.slots();
  ep.reward = episode_reward(mlm, reward, pair, ep.output);
  return ep;
}

EpisodeRecord decode_with_scheduler(const MlmModel& mlm, const SchedulerKind& kind,
                                    const SentencePair& pair, Rng& rng) {
  const std::size_t len = pair.target.size();
  Canvas canvas(pair.source, len);
  EpisodeRecord ep;
  ep.steps.reserve(len);
  while (!canvas.complete()) {
    const auto beliefs = mlm.beliefs(canvas);
    EpisodeStep step;
    step.position = next_position(kind, canvas, beliefs, rng);
    for (const auto& b : beliefs) {
      if (b.position == step.position) step.token = b.greedy_tok;
    }
    canvas.fill(step.position, step.token);
    ep.steps.push_back(std::move(step));
  }
  ep.output = canvas.slots();
  ep.reward = sentence_bleu(ep.output, pair.target, true);
  return ep;
}

std::vector<double> discounted_returns(double reward, std::size_t steps, double gamma) {
  std::vector<double> out(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    out[i] = std::pow(gamma, static_cast<double>(steps - 1 - i)) * reward;
  }
  return out;
}

std::vector<double> compute_advantages(double reward, std::span<const double> values,
                                       double gamma) {
  if (values.empty()) throw ArgumentError("compute_advantages: no steps");
  auto out = discounted_returns(reward, values.size(), gamma);
  for (std::size_t i = 0; i < values.size(); ++i) out[i] -= values[i];
  return out;
}

LossBreakdown losses(const EpisodeRecord& episode, std::span<const double> advantages,
                     double gamma, double lambda, EntropySign sign) {
  const std::size_t steps = episode.steps.size();
  if (steps == 0) throw StateError("losses: empty episode");
  if (advantages.size() != steps) throw ArgumentError("losses: advantage count mismatch");
  const double t = static_cast<double>(steps);
  const auto returns = discounted_returns(episode.reward, steps, gamma);
  LossBreakdown out;
  for (std::size_t i = 0; i < steps; ++i) {
    const auto& st = episode.steps[i];
    out.rl -= st.logp * advantages[i] / t;
    for (double p : st.dist.prob) {
      if (p > 0.0) out.entropy -= p * std::log(p) / (t * t);
    }
    const double err = st.value - returns[i];
    out.value += err * err / t;
  }
  const double w = sign == EntropySign::kExplore ? -lambda : lambda;
  out.total = out.rl + w * out.entropy + out.value;
  return out;
}

std::string TrainReport::to_csv() const {
  std::ostringstream os;
  os << "epoch,mean_reward,mean_entropy,dev_bleu,loss_rl,loss_ent,loss_value,loss_total\n";
  char buf[512];
  for (const auto& e : epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%s,%.6f,%.6f,%.6f,%.6f\n", e.epoch,
                  e.mean_reward, e.mean_entropy, format_score(100.0 * e.dev_bleu).c_str(),
                  e.loss_rl, e.loss_ent, e.loss_value, e.loss_total);
    os << buf;
  }
  return os.str();
}

namespace {

json epoch_to_json(const EpochReport& e) {
  return {{"epoch", e.epoch},           {"mean_reward", e.mean_reward},
          {"mean_entropy", e.mean_entropy}, {"dev_bleu", e.dev_bleu},
          {"loss_rl", e.loss_rl},       {"loss_ent", e.loss_ent},
          {"loss_value", e.loss_value}, {"loss_total", e.loss_total}};
}

EpochReport epoch_from_json(const json& j) {
  EpochReport e;
  e.epoch = j.at("epoch").get<std::size_t>();
  e.mean_reward = j.at("mean_reward").get<double>();
  e.mean_entropy = j.at("mean_entropy").get<double>();
  e.dev_bleu = j.at("dev_bleu").get<double>();
  e.loss_rl = j.at("loss_rl").get<double>();
  e.loss_ent = j.at("loss_ent").get<double>();
  e.loss_value = j.at("loss_value").get<double>();
  e.loss_total = j.at("loss_total").get<double>();
  return e;
}

}  // namespace

std::string TrainState::to_json() const {
  json epochs = json::array();
  for (const auto& e : report.epochs) epochs.push_back(epoch_to_json(e));
  json doc = {{"version", kVersion},
              {"config_hash", config_hash},
              {"policy", policy.net.to_json()},
              {"value", value.net.to_json()},
              {"adam_policy", adam_policy.to_json()},
              {"adam_value", adam_value.to_json()},
              {"epochs_done", epochs_done},
              {"best_dev_bleu", best_dev_bleu},
              {"best_policy", best_policy.net.to_json()},
              {"best_value", best_value.net.to_json()},
              {"report", epochs}};
  return doc.dump();
}

TrainState TrainState::from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("policy checkpoint: ") + e.what());
  }
  if (!doc.is_object() || doc.value("version", "") != kVersion) {
    throw ParseError(std::string("policy checkpoint version mismatch (expected ") + kVersion + ")");
  }
  try {
    TrainState s;
    s.config_hash = doc.at("config_hash").get<std::string>();
    s.policy.net = Mlp::from_json(doc.at("policy"));
    s.value.net = Mlp::from_json(doc.at("value"));
    s.adam_policy = AdamState::from_json(doc.at("adam_policy"));
    s.adam_value = AdamState::from_json(doc.at("adam_value"));
    s.epochs_done = doc.at("epochs_done").get<std::size_t>();
    s.best_dev_bleu = doc.at("best_dev_bleu").get<double>();
    s.best_policy.net = Mlp::from_json(doc.at("best_policy"));
    s.best_value.net = Mlp::from_json(doc.at("best_value"));
    for (const auto& e : doc.at("report")) s.report.epochs.push_back(epoch_from_json(e));
    if (s.adam_policy.m.size() != s.policy.net.num_params() ||
        s.adam_value.m.size() != s.value.net.num_params()) {
      throw ParseError("policy checkpoint: Adam state does not match parameter shapes");
    }
    return s;
  } catch (const json::exception& e) {
    throw ParseError(std::string("policy checkpoint: ") + e.what());
  }
}

void TrainState::save(const std::filesystem::path& path) const {
  write_text_file(path, to_json());
}

TrainState TrainState::load(const std::filesystem::path& path) {
  return from_json(read_text_file(path));
}

TrainState init_training(const A2CConfig& config) {
  config.validate();
  TrainState s;
  s.config_hash = config.hash();
  s.policy.net = Mlp::random(kFeatureDim, config.hidden, derive_seed(config.seed, "policy-init"),
                             config.init_scale);
  s.value.net = Mlp::random(kFeatureDim, config.hidden, derive_seed(config.seed, "value-init"),
                            config.init_scale);
  s.adam_policy = AdamState(s.policy.net.num_params(), config.lr, config.beta1, config.beta2);
  s.adam_value = AdamState(s.value.net.num_params(), config.lr, config.beta1, config.beta2);
  s.best_policy = s.policy;
  s.best_value = s.value;
  return s;
}

namespace {

std::string dump_episode(const EpisodeRecord& ep, const LossBreakdown& loss) {
  json steps = json::array();
  for (const auto& s : ep.steps) {
    steps.push_back({{"position", s.position}, {"token", s.token}, {"logp", s.logp},
                     {"value", s.value}, {"prob", s.dist.prob}});
  }
  return json{{"reward", ep.reward},
              {"loss_rl", loss.rl},
              {"loss_ent", loss.entropy},
              {"loss_value", loss.value},
              {"steps", steps}}
      .dump();
}

bool all_finite(const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace

void train(const MlmModel& mlm, const Corpus& train_corpus, const Corpus& dev_corpus,
           const A2CConfig& config, TrainState& state, const EpochCallback& on_epoch) {
  config.validate();
  if (train_corpus.empty() || dev_corpus.empty()) {
    throw ConfigError("training needs nonempty train and dev corpora");
  }
  if (state.config_hash != config.hash()) {
    throw ConfigError("checkpoint was produced with a different configuration");
  }
  const LossWeights weights{1.0, config.entropy_weight(), 1.0};
  const std::size_t n = train_corpus.size();

  while (state.epochs_done < config.epochs) {
    const std::size_t epoch = state.epochs_done + 1;
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng(derive_seed(config.seed, "shuffle", epoch)).shuffle(order);
    Rng rng(derive_seed(config.seed, "rollout", epoch));

    EpochReport rep;
    rep.epoch = epoch;
    double entropy_sum = 0.0;
    std::size_t entropy_steps = 0;

    for (std::size_t start = 0; start < n; start += config.episodes_per_update) {
      const std::size_t end = std::min(n, start + config.episodes_per_update);
      Gradients grads(state.policy, state.value);
      for (std::size_t b = start; b < end; ++b) {
        const SentencePair& pair = train_corpus.pairs[order[b]];
        EpisodeRecord ep = rollout(mlm, state.policy, state.value, pair, RolloutMode::kSample,
                                   rng, config.reward, true);
        const auto values = ep.values();
        const auto adv = compute_advantages(ep.reward, values, config.gamma);
        const auto ret = discounted_returns(ep.reward, values.size(), config.gamma);
        const LossBreakdown loss =
            episode_backward(state.policy, state.value, ep.tape, adv, ret, weights, grads);
        if (!std::isfinite(loss.total)) {
          throw NumericError("non-finite loss in epoch " + std::to_string(epoch),
                             dump_episode(ep, loss));
        }
        rep.mean_reward += ep.reward;
        rep.loss_rl += loss.rl;
        rep.loss_ent += loss.entropy;
        rep.loss_value += loss.value;
        rep.loss_total += loss.total;
        for (const auto& s : ep.steps) entropy_sum += s.dist.entropy();
        entropy_steps += ep.steps.size();
      }
      grads.scale(1.0 / static_cast<double>(end - start));
      if (!all_finite(grads.policy) || !all_finite(grads.value)) {
        throw NumericError("non-finite gradient in epoch " + std::to_string(epoch), "{}");
      }
      adam_step(state.policy.net.params(), grads.policy, state.adam_policy);
      adam_step(state.value.net.params(), grads.value, state.adam_value);
    }

    const double dn = static_cast<double>(n);
    rep.mean_reward /= dn;
    rep.loss_rl /= dn;
    rep.loss_ent /= dn;
    rep.loss_value /= dn;
    rep.loss_total /= dn;
    rep.mean_entropy = entropy_steps ? entropy_sum / static_cast<double>(entropy_steps) : 0.0;
    rep.dev_bleu = evaluate(mlm, dev_corpus, state.policy, state.value).bleu.score;

    if (rep.dev_bleu > state.best_dev_bleu) {
      state.best_dev_bleu = rep.dev_bleu;
      state.best_policy = state.policy;
      state.best_value = state.value;
    }
    state.report.epochs.push_back(rep);
    state.epochs_done = epoch;
    if (on_epoch) on_epoch(rep);
  }
}

std::vector<Tokens> EvalResult::outputs() const {
  std::vector<Tokens> out;
  out.reserve(traces.size());
  for (const auto& t : traces) out.push_back(t.output);
  return out;
}

namespace {

std::vector<Tokens> references_of(const Corpus& corpus) {
  std::vector<Tokens> refs;
  refs.reserve(corpus.size());
  for (const auto& p : corpus.pairs) refs.push_back(p.target);
  return refs;
}

}  // namespace

EvalResult evaluate(const MlmModel& mlm, const Corpus& corpus, const SchedulerKind& kind,
                    std::uint64_t seed) {
  kind.validate();
  if (corpus.empty()) throw ArgumentError("evaluate: empty corpus");
  EvalResult res;
  res.traces.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    Rng rng(derive_seed(seed, "uniform", i));
    res.traces.push_back(decode_with_scheduler(mlm, kind, corpus.pairs[i], rng));
  }
  res.bleu = corpus_bleu(res.outputs(), references_of(corpus));
  return res;
}

EvalResult evaluate(const MlmModel& mlm, const Corpus& corpus, const PolicyParams& policy,
                    const ValueParams& value) {
  if (corpus.empty()) throw ArgumentError("evaluate: empty corpus");
  EvalResult res;
  res.traces.reserve(corpus.size());
  Rng unused(0);
  for (const auto& pair : corpus.pairs) {
    res.traces.push_back(rollout(mlm, policy, value, pair, RolloutMode::kGreedy, unused));
  }
  res.bleu = corpus_bleu(res.outputs(), references_of(corpus));
  return res;
}

std::string traces_to_jsonl(const std::vector<EpisodeRecord>& traces, const Vocab& vocab,
                            const std::string& order) {
  std::string out;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto& ep = traces[i];
    json steps = json::array();
    for (std::size_t s = 0; s < ep.steps.size(); ++s) {
      const auto& st = ep.steps[s];
      steps.push_back({{"step", s + 1},
                       {"position", st.position},
                       {"token", vocab.symbol(st.token)},
                       {"logp", st.logp},
                       {"value", st.value}});
    }
    json output = json::array();
    for (TokenId t : ep.output) output.push_back(vocab.symbol(t));
    json line = {{"id", i}, {"order", order}, {"reward", ep.reward}, {"output", output},
                 {"steps", steps}};
    out += line.dump();
    out += '\n';
  }
  return out;
}

void save_traces(const std::filesystem::path& path, const std::vector<EpisodeRecord>& traces,
                 const Vocab& vocab, const std::string& order) {
  write_text_file(path, traces_to_jsonl(traces, vocab, order));
}

std::vector<TraceLine> load_traces(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::vector<TraceLine> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.empty()) continue;
    try {
      json obj = json::parse(text);
      TraceLine t;
      t.id = obj.at("id").get<std::size_t>();
      t.order = obj.at("order").get<std::string>();
      t.reward = obj.at("reward").get<double>();
      for (const auto& s : obj.at("steps")) {
        t.positions.push_back(s.at("position").get<std::size_t>());
        t.tokens.push_back(s.at("token").get<std::string>());
      }
      out.push_back(std::move(t));
    } catch (const json::exception& e) {
      throw ParseError(e.what(), line);
    }
  }
  return out;
}

}  // namespace demask
