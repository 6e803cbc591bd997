#include "demask/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>

#include "demask/analysis.hpp"
#include "demask/error.hpp"
#include "demask/io.hpp"
#include "demask/rng.hpp"

namespace demask {

using json = nlohmann::json;
namespace fs = std::filesystem;

void ExperimentConfig::validate() const {
  task.validate();
  if (n_train < 1 || n_dev < 1) throw ConfigError("n_train and n_dev must be >= 1");
  if (mlm_rounds < 1) throw ConfigError("mlm_rounds must be >= 1");
  if (!(mlm_smoothing > 0.0)) throw ConfigError("mlm_smoothing must be > 0");
  if (!(mlm_backoff > 0.0 && mlm_backoff <= 1.0)) throw ConfigError("mlm_backoff must be in (0, 1]");
  for (const auto& o : orders) scheduler(o).validate();
  a2c.validate();
  if (bootstrap_resamples < 100) throw ConfigError("bootstrap_resamples must be >= 100");
  if (out.empty()) throw ConfigError("out directory must be set");
}

json ExperimentConfig::to_json() const {
  json a = a2c.to_json();
  a.erase("seed");  // derived from the top-level seed
  return {{"seed", seed},
          {"task",
           {{"kind", to_string(task.kind)},
            {"vocab_size", task.vocab_size},
            {"len_min", task.len_min},
            {"len_max", task.len_max},
            {"filler_rate", task.filler_rate}}},
          {"n_train", n_train},
          {"n_dev", n_dev},
          {"mlm", {{"rounds", mlm_rounds}, {"smoothing", mlm_smoothing}, {"backoff", mlm_backoff}}},
          {"orders", orders},
          {"alpha_logp", alpha_logp},
          {"alpha_negent", alpha_negent},
          {"a2c", a},
          {"bootstrap_resamples", bootstrap_resamples},
          {"out", out}};
}

namespace {

void reject_unknown(const json& j, const std::vector<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError("unknown config key '" + where + key + "'");
    }
  }
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  try {
    reject_unknown(j,
                   {"seed", "task", "n_train", "n_dev", "mlm", "orders", "alpha_logp",
                    "alpha_negent", "a2c", "bootstrap_resamples", "out"},
                   "");
    ExperimentConfig c;
    c.seed = j.value("seed", c.seed);
    if (j.contains("task")) {
      const json& t = j["task"];
      reject_unknown(t, {"kind", "vocab_size", "len_min", "len_max", "filler_rate"}, "task.");
      if (t.contains("kind")) c.task.kind = parse_task_kind(t["kind"].get<std::string>());
      c.task.vocab_size = t.value("vocab_size", c.task.vocab_size);
      c.task.len_min = t.value("len_min", c.task.len_min);
      c.task.len_max = t.value("len_max", c.task.len_max);
      c.task.filler_rate = t.value("filler_rate", c.task.filler_rate);
    }
    c.n_train = j.value("n_train", c.n_train);
    c.n_dev = j.value("n_dev", c.n_dev);
    if (j.contains("mlm")) {
      const json& m = j["mlm"];
      reject_unknown(m, {"rounds", "smoothing", "backoff"}, "mlm.");
      c.mlm_rounds = m.value("rounds", c.mlm_rounds);
      c.mlm_smoothing = m.value("smoothing", c.mlm_smoothing);
      c.mlm_backoff = m.value("backoff", c.mlm_backoff);
    }
    if (j.contains("orders")) c.orders = j["orders"].get<std::vector<std::string>>();
    c.alpha_logp = j.value("alpha_logp", c.alpha_logp);
    c.alpha_negent = j.value("alpha_negent", c.alpha_negent);
    if (j.contains("a2c")) {
      if (j["a2c"].contains("seed")) throw ConfigError("a2c.seed is derived from the top-level seed");
      c.a2c = A2CConfig::from_json(j["a2c"]);
    }
    c.bootstrap_resamples = j.value("bootstrap_resamples", c.bootstrap_resamples);
    c.out = j.value("out", c.out);
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  return from_json(j);
}

TaskSpec ExperimentConfig::resolved_task() const {
  TaskSpec t = task;
  t.seed = derive_seed(seed, "corpus");
  return t;
}

MlmFitOptions ExperimentConfig::mlm_options() const {
  return MlmFitOptions{mlm_rounds, derive_seed(seed, "mlm"), mlm_smoothing, mlm_backoff};
}

A2CConfig ExperimentConfig::resolved_a2c() const {
  A2CConfig a = a2c;
  a.seed = derive_seed(seed, "policy");
  return a;
}

SchedulerKind ExperimentConfig::scheduler(const std::string& name) const {
  SchedulerKind k = parse_scheduler(name);
  if (k.type == SchedulerType::kEasyFirst) {
    k.alpha_logp = alpha_logp;
    k.alpha_negent = alpha_negent;
  }
  return k;
}

const std::vector<double>& lambda_grid() {
  static const std::vector<double> grid = {0.01, 0.001, 0.0005, 0.0001, 0.0};
  return grid;
}

const std::vector<RewardKind>& reward_grid() {
  static const std::vector<RewardKind> grid = {RewardKind::kBleu, RewardKind::kPseudoLoglik};
  return grid;
}

void OutputSet::add(fs::path path, std::string content) {
  files_.emplace_back(std::move(path), std::move(content));
}

void OutputSet::commit() {
  std::vector<fs::path> temps;
  auto cleanup = [&] {
    std::error_code ec;
    for (const auto& t : temps) fs::remove(t, ec);
  };
  try {
    for (const auto& [path, content] : files_) {
      if (path.has_parent_path()) fs::create_directories(path.parent_path());
      fs::path tmp = path.string() + ".tmp";
      temps.push_back(tmp);
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out << content;
      out.close();
      if (!out) throw std::runtime_error("write failed: " + tmp.string());
    }
    for (std::size_t i = 0; i < files_.size(); ++i) fs::rename(temps[i], files_[i].first);
  } catch (...) {
    cleanup();
    throw;
  }
  for (const auto& [path, content] : files_) {
    if (!fs::exists(path) || fs::file_size(path) != content.size()) {
      throw std::runtime_error("output validation failed for " + path.string());
    }
  }
}

std::string results_csv_header() { return "task,order,corpus_bleu,n_examples,seed\n"; }

std::string results_csv_row(const std::string& task, const std::string& order, double bleu,
                            std::size_t n_examples, std::uint64_t seed) {
  std::ostringstream os;
  os << task << ',' << order << ',' << format_score(100.0 * bleu) << ',' << n_examples << ','
     << seed << '\n';
  return os.str();
}

namespace {

std::string file_safe(std::string name) {
  std::replace(name.begin(), name.end(), ':', '-');
  return name;
}

std::string config_text(const ExperimentConfig& c) { return c.to_json().dump(2) + "\n"; }

void require_file(const fs::path& p, const std::string& hint) {
  if (!fs::exists(p)) throw ConfigError("missing input " + p.string() + " (" + hint + ")");
}

MlmModel load_mlm(const ExperimentConfig& c) {
  const fs::path p = c.out_dir() / "mlm.json";
  require_file(p, "run train-mlm first");
  MlmModel mlm = MlmModel::load(p);
  if (!(mlm.vocab() == c.resolved_task().vocab())) {
    throw ConfigError("mlm.json vocabulary does not match the task configuration");
  }
  return mlm;
}

Corpus load_split(const ExperimentConfig& c, const char* name) {
  const fs::path p = c.out_dir() / name;
  require_file(p, "run gen-corpus first");
  Corpus corpus = load_corpus(p, c.resolved_task().vocab());
  if (corpus.empty()) throw ConfigError(p.string() + " is empty");
  return corpus;
}

TrainState load_policy(const ExperimentConfig& c) {
  const fs::path p = c.out_dir() / "policy.json";
  require_file(p, "run train-policy first");
  return TrainState::load(p);
}

TrainState train_policy(const A2CConfig& a2c, const MlmModel& mlm,
                        const Corpus& train_corpus, const Corpus& dev_corpus,
                        std::optional<TrainState> start = std::nullopt) {
  TrainState state = start ? std::move(*start) : init_training(a2c);
  train(mlm, train_corpus, dev_corpus, a2c, state, [](const EpochReport& e) {
    std::fprintf(stderr, "epoch %zu  reward %.4f  entropy %.4f  dev BLEU %.2f\n", e.epoch,
                 e.mean_reward, e.mean_entropy, 100.0 * e.dev_bleu);
  });
  return state;
}

}  // namespace

void run_gen_corpus(const ExperimentConfig& c) {
  c.validate();
  const TaskSpec spec = c.resolved_task();
  OutputSet out;
  out.add(c.out_dir() / "train.jsonl", corpus_to_jsonl(generate_corpus(spec, c.n_train, 0)));
  out.add(c.out_dir() / "dev.jsonl", corpus_to_jsonl(generate_corpus(spec, c.n_dev, c.n_train)));
  out.add(c.out_dir() / "gen-corpus.config.json", config_text(c));
  out.commit();
}

void run_train_mlm(const ExperimentConfig& c) {
  c.validate();
  const Corpus train_corpus = load_split(c, "train.jsonl");
  const MlmModel mlm = fit(train_corpus, c.mlm_options());
  OutputSet out;
  out.add(c.out_dir() / "mlm.json", mlm.to_json());
  out.add(c.out_dir() / "train-mlm.config.json", config_text(c));
  out.commit();
}

void run_decode(const ExperimentConfig& c, const std::string& order) {
  c.validate();
  const MlmModel mlm = load_mlm(c);
  const Corpus dev = load_split(c, "dev.jsonl");
  EvalResult res;
  if (order == "learned") {
    const TrainState state = load_policy(c);
    res = evaluate(mlm, dev, state.best_policy, state.best_value);
  } else {
    res = evaluate(mlm, dev, c.scheduler(order), derive_seed(c.seed, "decode"));
  }
  const std::string name = file_safe(order);
  OutputSet out;
  out.add(c.out_dir() / ("traces_" + name + ".jsonl"), traces_to_jsonl(res.traces, mlm.vocab(), order));
  out.add(c.out_dir() / ("decode_" + name + ".csv"),
          results_csv_header() +
              results_csv_row(to_string(c.task.kind), order, res.bleu.score, dev.size(), c.seed));
  out.add(c.out_dir() / "decode.config.json", config_text(c));
  out.commit();
}

void run_train_policy(const ExperimentConfig& c, bool resume) {
  c.validate();
  const MlmModel mlm = load_mlm(c);
  const Corpus train_corpus = load_split(c, "train.jsonl");
  const Corpus dev = load_split(c, "dev.jsonl");
  std::optional<TrainState> start;
  if (resume) start = load_policy(c);
  const TrainState state = train_policy(c.resolved_a2c(), mlm, train_corpus, dev, std::move(start));
  OutputSet out;
  out.add(c.out_dir() / "policy.json", state.to_json());
  out.add(c.out_dir() / "train_report.csv", state.report.to_csv());
  out.add(c.out_dir() / "train-policy.config.json", config_text(c));
  out.commit();
}

void run_eval(const ExperimentConfig& c) {
  c.validate();
  const MlmModel mlm = load_mlm(c);
  const Corpus dev = load_split(c, "dev.jsonl");
  const TrainState state = load_policy(c);
  const std::string task = to_string(c.task.kind);
  std::vector<Tokens> refs;
  for (const auto& p : dev.pairs) refs.push_back(p.target);

  OutputSet out;
  std::string csv = results_csv_header();
  std::map<std::string, std::vector<Tokens>> outputs;
  for (const auto& order : c.orders) {
    EvalResult res = evaluate(mlm, dev, c.scheduler(order), derive_seed(c.seed, "decode"));
    csv += results_csv_row(task, order, res.bleu.score, dev.size(), c.seed);
    out.add(c.out_dir() / ("traces_" + file_safe(order) + ".jsonl"),
            traces_to_jsonl(res.traces, mlm.vocab(), order));
    outputs[order] = res.outputs();
  }
  EvalResult learned = evaluate(mlm, dev, state.best_policy, state.best_value);
  csv += results_csv_row(task, "learned", learned.bleu.score, dev.size(), c.seed);
  out.add(c.out_dir() / "traces_learned.jsonl", traces_to_jsonl(learned.traces, mlm.vocab(), "learned"));

  // Learned order against every heuristic: p-value that learned is not better.
  std::ostringstream sig;
  sig << "task,system_a,system_b,p_value,resamples,seed\n";
  for (const auto& order : c.orders) {
    const double p = paired_bootstrap(learned.outputs(), outputs[order], refs,
                                      c.bootstrap_resamples, derive_seed(c.seed, "bootstrap"));
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", p);
    sig << task << ",learned," << order << ',' << buf << ',' << c.bootstrap_resamples << ','
        << c.seed << '\n';
  }
  out.add(c.out_dir() / "eval.csv", csv);
  out.add(c.out_dir() / "significance.csv", sig.str());
  out.add(c.out_dir() / "eval.config.json", config_text(c));
  out.commit();
}

void run_ablate(const ExperimentConfig& c, const std::string& param) {
  c.validate();
  if (param != "lambda" && param != "reward") {
    throw ConfigError("ablate --param must be 'lambda' or 'reward'");
  }
  const MlmModel mlm = load_mlm(c);
  const Corpus train_corpus = load_split(c, "train.jsonl");
  const Corpus dev = load_split(c, "dev.jsonl");
  const std::string task = to_string(c.task.kind);

  std::ostringstream csv;
  csv << "task,param,value,corpus_bleu,mean_entropy,n_examples,seed\n";
  auto row = [&](const std::string& value, const A2CConfig& a2c) {
    const TrainState state = train_policy(a2c, mlm, train_corpus, dev);
    const EvalResult res = evaluate(mlm, dev, state.best_policy, state.best_value);
    char entropy[64];
    std::snprintf(entropy, sizeof entropy, "%.6f", state.report.epochs.back().mean_entropy);
    csv << task << ',' << param << ',' << value << ',' << format_score(100.0 * res.bleu.score)
        << ',' << entropy << ',' << dev.size() << ',' << c.seed << '\n';
  };
  if (param == "lambda") {
    for (double lambda : lambda_grid()) {
      A2CConfig a2c = c.resolved_a2c();
      a2c.lambda = lambda;
      std::ostringstream v;
      v << lambda;
      row(v.str(), a2c);
    }
  } else {
    for (RewardKind reward : reward_grid()) {
      A2CConfig a2c = c.resolved_a2c();
      a2c.reward = reward;
      row(to_string(reward), a2c);
    }
  }
  OutputSet out;
  out.add(c.out_dir() / ("ablate_" + param + ".csv"), csv.str());
  out.add(c.out_dir() / "ablate.config.json", config_text(c));
  out.commit();
}

void run_analyze(const ExperimentConfig& c, const fs::path& traces_path, std::size_t window,
                 double threshold, std::size_t render) {
  c.validate();
  require_file(traces_path, "run decode or eval first");
  const auto traces = load_traces(traces_path);
  if (traces.empty()) throw ConfigError(traces_path.string() + " holds no traces");

  std::vector<std::vector<std::size_t>> perms;
  json per_trace = json::array();
  std::map<std::string, std::size_t> counts;
  double adherence = 0.0, run_l2r = 0.0, run_r2l = 0.0;
  for (const auto& t : traces) {
    const Classification cls = classify(t.positions, window, threshold);
    ++counts[to_string(cls.pattern)];
    adherence += cls.stats.frontier_adherence;
    run_l2r += static_cast<double>(cls.stats.max_run_l2r);
    run_r2l += static_cast<double>(cls.stats.max_run_r2l);
    json skips = json::array();
    for (const auto& s : cls.stats.skip_events) skips.push_back({s.position, s.fill_step});
    per_trace.push_back({{"id", t.id},
                         {"class", to_string(cls.pattern)},
                         {"frontier_adherence", cls.stats.frontier_adherence},
                         {"left_moves", cls.stats.left_moves},
                         {"right_moves", cls.stats.right_moves},
                         {"max_run_l2r", cls.stats.max_run_l2r},
                         {"max_run_r2l", cls.stats.max_run_r2l},
                         {"skip_events", skips}});
    perms.push_back(t.positions);
  }
  const double n = static_cast<double>(traces.size());
  json fractions = json::object();
  for (auto p : {PatternClass::kOuterToInner, PatternClass::kLeftToRight,
                 PatternClass::kRightToLeft, PatternClass::kOther}) {
    fractions[to_string(p)] = static_cast<double>(counts[to_string(p)]) / n;
  }

  // The same fractions under neighboring thresholds.
  json sensitivity = json::array();
  for (std::size_t k : {std::size_t{1}, std::size_t{2}}) {
    for (double theta : {0.8, 0.9, 1.0}) {
      std::map<std::string, std::size_t> cc;
      for (const auto& p : perms) ++cc[to_string(classify(p, k, theta).pattern)];
      json f = json::object();
      for (const auto& [name, cnt] : cc) f[name] = static_cast<double>(cnt) / n;
      sensitivity.push_back({{"window", k}, {"threshold", theta}, {"fractions", f}});
    }
  }

  json report = {{"traces", traces_path.filename().string()},
                 {"n", traces.size()},
                 {"window", window},
                 {"threshold", threshold},
                 {"fractions", fractions},
                 {"mean_frontier_adherence", adherence / n},
                 {"mean_max_run_l2r", run_l2r / n},
                 {"mean_max_run_r2l", run_r2l / n},
                 {"sensitivity", sensitivity},
                 {"per_trace", per_trace}};

  if (c.task.filler_rate > 0.0) {
    const Corpus dev = load_split(c, "dev.jsonl");
    const TokenId filler = c.resolved_task().filler();
    auto skip = skip_stats(perms, [&](std::size_t t, std::size_t j) {
      const std::size_t id = traces[t].id;
      return id < dev.size() && j < dev.pairs[id].target.size() && dev.pairs[id].target[j] == filler;
    });
    report["filler_skip_fraction"] = skip ? json(*skip) : json(nullptr);
  }

  std::ostringstream rendered;
  for (std::size_t i = 0; i < std::min(render, traces.size()); ++i) {
    const auto& t = traces[i];
    std::vector<std::string> by_slot(t.positions.size());
    for (std::size_t s = 0; s < t.positions.size(); ++s) by_slot[t.positions[s]] = t.tokens[s];
    std::vector<std::size_t> at;
    for (std::size_t s = 0; s <= t.positions.size(); ++s) at.push_back(s);
    rendered << "# trace " << t.id << " (" << t.order << ")\n"
             << render_trace(t.positions, by_slot, at) << '\n';
  }

  const std::string stem = traces_path.stem().string();
  OutputSet out;
  out.add(c.out_dir() / ("analysis_" + stem + ".json"), report.dump(2) + "\n");
  out.add(c.out_dir() / ("analysis_" + stem + ".txt"), rendered.str());
  out.add(c.out_dir() / "analyze.config.json", config_text(c));
  out.commit();
}

}  // namespace demask
