// demask: command-line harness for generation-order experiments.

#include <CLI11.hpp>
#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include "demask/error.hpp"
#include "demask/experiment.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> lambda;
  std::optional<std::string> reward;
  std::optional<std::string> entropy_sign;
  std::optional<std::size_t> epochs;
  std::optional<double> alpha_logp;
  std::optional<double> alpha_negent;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "JSON experiment config")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "top-level seed");
  cmd->add_option("--lambda", o.lambda, "entropy coefficient");
  cmd->add_option("--reward", o.reward, "bleu|pll");
  cmd->add_option("--entropy-sign", o.entropy_sign, "explore|literal");
  cmd->add_option("--epochs", o.epochs, "policy training epochs");
  cmd->add_option("--alpha-logp", o.alpha_logp, "EasyFirst confidence weight");
  cmd->add_option("--alpha-negent", o.alpha_negent, "EasyFirst negative-entropy weight");
  cmd->add_option("--out", o.out, "output directory");
}

demask::ExperimentConfig resolve(const Overrides& o) {
  demask::ExperimentConfig c =
      o.config.empty() ? demask::ExperimentConfig{} : demask::ExperimentConfig::load(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.lambda) c.a2c.lambda = *o.lambda;
  if (o.reward) c.a2c.reward = demask::parse_reward(*o.reward);
  if (o.entropy_sign) c.a2c.entropy_sign = demask::parse_entropy_sign(*o.entropy_sign);
  if (o.epochs) c.a2c.epochs = *o.epochs;
  if (o.alpha_logp) c.alpha_logp = *o.alpha_logp;
  if (o.alpha_negent) c.alpha_negent = *o.alpha_negent;
  if (o.out) c.out = *o.out;
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"demask: learn and evaluate de-masking orders for masked-LM generation"};
  app.require_subcommand(1);

  Overrides o;
  std::string order = "l2r";
  std::string param = "lambda";
  std::string traces;
  std::size_t window = 1;
  double threshold = 0.9;
  std::size_t render = 5;
  bool resume = false;

  auto* gen = app.add_subcommand("gen-corpus", "write train/dev JSONL corpora");
  auto* mlm = app.add_subcommand("train-mlm", "fit the back-off masked LM");
  auto* decode = app.add_subcommand("decode", "decode the dev corpus under one order");
  auto* train = app.add_subcommand("train-policy", "train the order policy with A2C");
  auto* eval = app.add_subcommand("eval", "compare heuristic and learned orders");
  auto* ablate = app.add_subcommand("ablate", "sweep lambda or the reward function");
  auto* analyze = app.add_subcommand("analyze", "classify decoding-order patterns");
  for (auto* cmd : {gen, mlm, decode, train, eval, ablate, analyze}) add_common(cmd, o);

  decode->add_option("--order", order,
                     "uniform|l2r|l2m|l2m-most|easy-first|outer2inner:S|learned");
  train->add_flag("--resume", resume, "continue from <out>/policy.json");
  ablate->add_option("--param", param, "lambda|reward")->check(CLI::IsMember({"lambda", "reward"}));
  analyze->add_option("--traces", traces, "trace JSONL (default: <out>/traces_learned.jsonl)");
  analyze->add_option("--window", window, "frontier window k");
  analyze->add_option("--threshold", threshold, "classification threshold");
  analyze->add_option("--render", render, "number of traces to render");

  CLI11_PARSE(app, argc, argv);

  try {
    const demask::ExperimentConfig c = resolve(o);
    if (gen->parsed()) demask::run_gen_corpus(c);
    if (mlm->parsed()) demask::run_train_mlm(c);
    if (decode->parsed()) demask::run_decode(c, order);
    if (train->parsed()) demask::run_train_policy(c, resume);
    if (eval->parsed()) demask::run_eval(c);
    if (ablate->parsed()) demask::run_ablate(c, param);
    if (analyze->parsed()) {
      const std::string path =
          traces.empty() ? (c.out_dir() / "traces_learned.jsonl").string() : traces;
      demask::run_analyze(c, path, window, threshold, render);
    }
  } catch (const demask::NumericError& e) {
    std::fprintf(stderr, "error: %s\n%s\n", e.what(), e.dump().c_str());
    return 3;
  } catch (const demask::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
