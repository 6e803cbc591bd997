#include "demask/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "demask/error.hpp"
#include "demask/rng.hpp"

namespace demask {

using json = nlohmann::json;

std::vector<double> Features::mean_row() const {
  std::vector<double> mean(dim, 0.0);
  if (slots == 0) return mean;
  for (std::size_t j = 0; j < slots; ++j) {
    for (std::size_t f = 0; f < dim; ++f) mean[f] += data[j * dim + f];
  }
  for (double& m : mean) m /= static_cast<double>(slots);
  return mean;
}

Features extract_features(const Canvas& canvas, const std::vector<PositionBelief>& beliefs,
                          std::size_t payload_vocab) {
  const std::size_t len = canvas.length();
  Features feats(len, kFeatureDim);
  if (len == 0) return feats;

  const double t = static_cast<double>(len);
  const double log_v = payload_vocab > 1 ? std::log(static_cast<double>(payload_vocab)) : 0.0;
  const double filled_frac = static_cast<double>(canvas.step()) / t;
  const bool any_mask = canvas.masked_count() > 0;
  const std::size_t lo = any_mask ? canvas.leftmost_mask() : 0;
  const std::size_t hi = any_mask ? canvas.rightmost_mask() : 0;

  std::vector<const PositionBelief*> by_slot(len, nullptr);
  for (const auto& b : beliefs) {
    if (b.position < len) by_slot[b.position] = &b;
  }

  for (std::size_t j = 0; j < len; ++j) {
    auto f = feats.row(j);
    const bool masked = canvas.is_masked(j);
    f[0] = masked ? 1.0 : 0.0;
    f[1] = static_cast<double>(j) / t;
    if (masked) {
      f[2] = static_cast<double>(j - lo) / t;
      f[3] = static_cast<double>(hi - j) / t;
      if (const PositionBelief* b = by_slot[j]) {
        f[4] = log_v > 0.0 ? std::clamp(b->entropy / log_v, 0.0, 1.0) : 0.0;
        f[5] = std::exp(b->greedy_logp);
      } else {
        throw ArgumentError("missing belief for masked slot " + std::to_string(j));
      }
    }
    f[6] = filled_frac;
    f[7] = (j > 0 && !canvas.is_masked(j - 1)) ? 1.0 : 0.0;
    f[8] = (j + 1 < len && !canvas.is_masked(j + 1)) ? 1.0 : 0.0;
    f[9] = 1.0 / t;
  }
  return feats;
}

Mlp::Mlp(std::size_t input_dim, std::size_t hidden_dim)
    : input_dim_(input_dim),
      hidden_dim_(hidden_dim),
      theta_(hidden_dim * input_dim + 2 * hidden_dim + 1, 0.0) {
  if (input_dim == 0 || hidden_dim == 0) throw ConfigError("MLP dimensions must be positive");
}

Mlp Mlp::random(std::size_t input_dim, std::size_t hidden_dim, std::uint64_t seed,
                double scale) {
  Mlp mlp(input_dim, hidden_dim);
  Rng rng(seed);
  for (double& w : mlp.theta_) w = scale * (2.0 * rng.uniform() - 1.0);
  return mlp;
}

double Mlp::forward(std::span<const double> x, std::span<double> hidden) const {
  if (x.size() != input_dim_) throw std::logic_error("MLP input dimension mismatch");
  const double* w1 = theta_.data() + w1_offset();
  const double* b1 = theta_.data() + b1_offset();
  const double* w2 = theta_.data() + w2_offset();
  double out = theta_[b2_offset()];
  for (std::size_t h = 0; h < hidden_dim_; ++h) {
    double u = b1[h];
    const double* row = w1 + h * input_dim_;
    for (std::size_t f = 0; f < input_dim_; ++f) u += row[f] * x[f];
    const double a = std::tanh(u);
    if (!hidden.empty()) hidden[h] = a;
    out += w2[h] * a;
  }
  return out;
}

void Mlp::accumulate_grad(std::span<const double> x, std::span<const double> hidden,
                          double dout, std::span<double> grad) const {
  if (grad.size() != theta_.size() || hidden.size() != hidden_dim_ ||
      x.size() != input_dim_) {
    throw std::logic_error("MLP gradient shape mismatch");
  }
  const double* w2 = theta_.data() + w2_offset();
  double* g_w1 = grad.data() + w1_offset();
  double* g_b1 = grad.data() + b1_offset();
  double* g_w2 = grad.data() + w2_offset();
  grad[b2_offset()] += dout;
  for (std::size_t h = 0; h < hidden_dim_; ++h) {
    const double a = hidden[h];
    g_w2[h] += dout * a;
    const double du = dout * w2[h] * (1.0 - a * a);
    g_b1[h] += du;
    double* row = g_w1 + h * input_dim_;
    for (std::size_t f = 0; f < input_dim_; ++f) row[f] += du * x[f];
  }
}

json Mlp::to_json() const {
  return {{"input_dim", input_dim_}, {"hidden_dim", hidden_dim_}, {"weights", theta_}};
}

Mlp Mlp::from_json(const json& j) {
  Mlp mlp(j.at("input_dim").get<std::size_t>(), j.at("hidden_dim").get<std::size_t>());
  auto weights = j.at("weights").get<std::vector<double>>();
  if (weights.size() != mlp.theta_.size()) throw ParseError("MLP weight count mismatch");
  mlp.theta_ = std::move(weights);
  return mlp;
}

std::size_t PositionDistribution::argmax() const {
  if (support.empty()) throw StateError("empty position distribution");
  std::size_t best = support.front();
  for (std::size_t j : support) {
    if (prob[j] > prob[best] || (prob[j] == prob[best] && j < best)) best = j;
  }
  return best;
}

double PositionDistribution::entropy() const {
  double h = 0.0;
  for (std::size_t j : support) {
    if (prob[j] > 0.0) h -= prob[j] * std::log(prob[j]);
  }
  return h;
}

std::vector<double> policy_logits(const PolicyParams& params, const Features& features,
                                  const std::vector<std::size_t>& mask_set) {
  std::vector<double> logits;
  logits.reserve(mask_set.size());
  for (std::size_t j : mask_set) logits.push_back(params.net.forward(features.row(j)));
  return logits;
}

namespace {

/// Softmax over `logits` (max-shifted); writes log-probabilities too.
void softmax(const std::vector<double>& logits, std::vector<double>& prob,
             std::vector<double>& logprob) {
  const double max = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - max);
  const double log_z = max + std::log(sum);
  prob.resize(logits.size());
  logprob.resize(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) {
    logprob[k] = logits[k] - log_z;
    prob[k] = std::exp(logprob[k]);
  }
}

}  // namespace

PositionDistribution policy_forward(const PolicyParams& params, const Features& features,
                                    const std::vector<std::size_t>& mask_set) {
  if (mask_set.empty()) throw StateError("policy_forward: empty mask set");
  const auto logits = policy_logits(params, features, mask_set);
  std::vector<double> p, logp;
  softmax(logits, p, logp);
  PositionDistribution dist;
  dist.prob.assign(features.slots, 0.0);
  dist.support = mask_set;
  for (std::size_t k = 0; k < mask_set.size(); ++k) dist.prob[mask_set[k]] = p[k];
  return dist;
}

double value_forward(const ValueParams& params, const Features& features) {
  const auto mean = features.mean_row();
  return params.net.forward(mean);
}

void Gradients::scale(double factor) {
  for (double& g : policy) g *= factor;
  for (double& g : value) g *= factor;
}

namespace {

LossBreakdown run_episode(const PolicyParams& policy, const ValueParams& value,
                          const std::vector<StepTape>& tape, std::span<const double> advantages,
                          std::span<const double> returns, const LossWeights& weights,
                          Gradients* grads) {
  const std::size_t steps = tape.size();
  if (steps == 0) return {};
  if (advantages.size() != steps || returns.size() != steps) {
    throw std::logic_error("advantage/return count does not match the tape");
  }
  if (grads && (grads->policy.size() != policy.net.num_params() ||
                grads->value.size() != value.net.num_params())) {
    throw std::logic_error("gradient buffers do not match the parameters");
  }
  const double t = static_cast<double>(steps);
  const std::size_t hidden_p = policy.net.hidden_dim();
  const std::size_t hidden_v = value.net.hidden_dim();

  LossBreakdown loss;
  std::vector<double> logits, prob, logprob, acts, vact(hidden_v);
  for (std::size_t i = 0; i < steps; ++i) {
    const StepTape& st = tape[i];
    const std::size_t n = st.masked.size();
    if (n == 0) throw std::logic_error("tape step without masked slots");

    logits.resize(n);
    acts.resize(n * hidden_p);
    for (std::size_t k = 0; k < n; ++k) {
      logits[k] = policy.net.forward(st.features.row(st.masked[k]),
                                     std::span<double>(acts.data() + k * hidden_p, hidden_p));
    }
    softmax(logits, prob, logprob);

    std::size_t chosen_k = n;
    for (std::size_t k = 0; k < n; ++k) {
      if (st.masked[k] == st.chosen) chosen_k = k;
    }
    if (chosen_k == n) throw std::logic_error("chosen slot is not in the mask set");

    double step_entropy = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (prob[k] > 0.0) step_entropy -= prob[k] * logprob[k];
    }
    loss.rl += -logprob[chosen_k] * advantages[i] / t;
    loss.entropy += step_entropy / (t * t);

    const auto mean = st.features.mean_row();
    const double v = value.net.forward(mean, vact);
    const double err = v - returns[i];
    loss.value += err * err / t;

    if (grads) {
      for (std::size_t k = 0; k < n; ++k) {
        const double d_rl = -(advantages[i] / t) * ((k == chosen_k ? 1.0 : 0.0) - prob[k]);
        const double d_ent =
            prob[k] > 0.0 ? -prob[k] * (logprob[k] + step_entropy) / (t * t) : 0.0;
        const double dz = weights.rl * d_rl + weights.entropy * d_ent;
        if (dz != 0.0) {
          policy.net.accumulate_grad(st.features.row(st.masked[k]),
                                     std::span<const double>(acts.data() + k * hidden_p, hidden_p),
                                     dz, grads->policy);
        }
      }
      const double dv = weights.value * 2.0 * err / t;
      if (dv != 0.0) value.net.accumulate_grad(mean, vact, dv, grads->value);
    }
  }
  loss.total = weights.rl * loss.rl + weights.entropy * loss.entropy + weights.value * loss.value;
  return loss;
}

}  // namespace

LossBreakdown episode_losses(const PolicyParams& policy, const ValueParams& value,
                             const std::vector<StepTape>& tape,
                             std::span<const double> advantages,
                             std::span<const double> returns, const LossWeights& weights) {
  return run_episode(policy, value, tape, advantages, returns, weights, nullptr);
}

LossBreakdown episode_backward(const PolicyParams& policy, const ValueParams& value,
                               const std::vector<StepTape>& tape,
                               std::span<const double> advantages,
                               std::span<const double> returns, const LossWeights& weights,
                               Gradients& grads) {
  return run_episode(policy, value, tape, advantages, returns, weights, &grads);
}

json AdamState::to_json() const {
  return {{"m", m},         {"v", v},         {"step", step}, {"lr", lr},
          {"beta1", beta1}, {"beta2", beta2}, {"eps", eps}};
}

AdamState AdamState::from_json(const json& j) {
  AdamState s;
  s.m = j.at("m").get<std::vector<double>>();
  s.v = j.at("v").get<std::vector<double>>();
  s.step = j.at("step").get<std::uint64_t>();
  s.lr = j.at("lr").get<double>();
  s.beta1 = j.at("beta1").get<double>();
  s.beta2 = j.at("beta2").get<double>();
  s.eps = j.at("eps").get<double>();
  if (s.m.size() != s.v.size()) throw ParseError("Adam moment size mismatch");
  return s;
}

void adam_step(std::vector<double>& params, std::span<const double> grads, AdamState& state) {
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw std::logic_error("adam_step: shape mismatch");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double g = grads[k];
    state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * g;
    state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[k] / c1;
    const double v_hat = state.v[k] / c2;
    params[k] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

}  // namespace demask
