#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "demask/mlm.hpp"

namespace demask {

/// Number of engineered per-slot features fed to both heads.
constexpr std::size_t kFeatureDim = 10;

/// Row-major slots x dim feature table for one canvas state.
struct Features {
  std::size_t slots = 0;
  std::size_t dim = 0;
  std::vector<double> data;

  Features() = default;
  Features(std::size_t n_slots, std::size_t n_dim)
      : slots(n_slots), dim(n_dim), data(n_slots * n_dim, 0.0) {}

  std::span<double> row(std::size_t j) { return {data.data() + j * dim, dim}; }
  std::span<const double> row(std::size_t j) const { return {data.data() + j * dim, dim}; }
  /// Column means over all slots.
  std::vector<double> mean_row() const;
};

/// Per slot j of a length-T canvas:
///   0 is_masked, 1 j/T, 2 (j - leftmost mask)/T, 3 (rightmost mask - j)/T,
///   4 entropy / log|V|, 5 greedy probability, 6 fraction of slots filled,
///   7 left neighbor filled, 8 right neighbor filled, 9 1/T.
/// Filled slots carry zeros in 2..5.
Features extract_features(const Canvas& canvas, const std::vector<PositionBelief>& beliefs,
                          std::size_t payload_vocab);

/// Two-layer perceptron with scalar output: w2 . tanh(W1 x + b1) + b2.
/// Parameters live in one flat vector laid out as [W1 (row-major H x F), b1, w2, b2].
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::size_t input_dim, std::size_t hidden_dim);

  /// Weights uniform in [-scale, scale] from a seeded stream.
  static Mlp random(std::size_t input_dim, std::size_t hidden_dim, std::uint64_t seed,
                    double scale = 0.1);

  std::size_t input_dim() const { return input_dim_; }
  std::size_t hidden_dim() const { return hidden_dim_; }
  std::size_t num_params() const { return theta_.size(); }

  std::vector<double>& params() { return theta_; }
  const std::vector<double>& params() const { return theta_; }

  /// `hidden` (size H) receives tanh activations when non-empty.
  double forward(std::span<const double> x, std::span<double> hidden = {}) const;

  /// Adds dout * d(output)/d(theta) into `grad`, given the forward activations.
  void accumulate_grad(std::span<const double> x, std::span<const double> hidden, double dout,
                       std::span<double> grad) const;

  nlohmann::json to_json() const;
  static Mlp from_json(const nlohmann::json& j);

  bool operator==(const Mlp&) const = default;

 private:
  std::size_t w1_offset() const { return 0; }
  std::size_t b1_offset() const { return hidden_dim_ * input_dim_; }
  std::size_t w2_offset() const { return b1_offset() + hidden_dim_; }
  std::size_t b2_offset() const { return w2_offset() + hidden_dim_; }

  std::size_t input_dim_ = 0;
  std::size_t hidden_dim_ = 0;
  std::vector<double> theta_;
};

struct PolicyParams {
  Mlp net;
  bool operator==(const PolicyParams&) const = default;
};

struct ValueParams {
  Mlp net;
  bool operator==(const ValueParams&) const = default;
};

/// Probability per slot; nonzero only on the masked support.
struct PositionDistribution {
  std::vector<double> prob;
  std::vector<std::size_t> support;

  /// Support slot with the highest probability, lowest index on ties.
  std::size_t argmax() const;
  double entropy() const;
};

std::vector<double> policy_logits(const PolicyParams& params, const Features& features,
                                  const std::vector<std::size_t>& mask_set);

/// Softmax of the per-slot logits restricted to `mask_set`. Throws StateError
/// when the set is empty.
PositionDistribution policy_forward(const PolicyParams& params, const Features& features,
                                    const std::vector<std::size_t>& mask_set);

/// Critic on the mean feature row.
double value_forward(const ValueParams& params, const Features& features);

/// Everything backward() needs from one decoding step.
struct StepTape {
  Features features;
  std::vector<std::size_t> masked;
  std::size_t chosen = 0;
};

/// Coefficients of L_total = rl * L_RL + entropy * L_ent + value * L_value.
struct LossWeights {
  double rl = 1.0;
  double entropy = 0.0;
  double value = 1.0;
};

struct LossBreakdown {
  double rl = 0.0;
  double entropy = 0.0;
  double value = 0.0;
  double total = 0.0;
};

struct Gradients {
  std::vector<double> policy;
  std::vector<double> value;

  Gradients() = default;
  Gradients(const PolicyParams& p, const ValueParams& v)
      : policy(p.net.num_params(), 0.0), value(v.net.num_params(), 0.0) {}
  void scale(double factor);
};

/// Episode losses recomputed from the tape under the given parameters.
///   L_RL    = -(1/T) sum_i log P_i(p_i) A_i            (A_i constant)
///   L_ent   = -(1/T^2) sum_i sum_j P_i(j) log P_i(j)
///   L_value =  (1/T) sum_i (v_i - returns_i)^2
LossBreakdown episode_losses(const PolicyParams& policy, const ValueParams& value,
                             const std::vector<StepTape>& tape,
                             std::span<const double> advantages,
                             std::span<const double> returns, const LossWeights& weights);

/// Same losses; adds their analytic gradients into `grads`. The advantages
/// are constants, so L_RL and L_ent only reach the policy and L_value only
/// reaches the critic.
LossBreakdown episode_backward(const PolicyParams& policy, const ValueParams& value,
                               const std::vector<StepTape>& tape,
                               std::span<const double> advantages,
                               std::span<const double> returns, const LossWeights& weights,
                               Gradients& grads);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;

  AdamState() = default;
  AdamState(std::size_t n, double lr_, double beta1_, double beta2_, double eps_ = 1e-8)
      : m(n, 0.0), v(n, 0.0), lr(lr_), beta1(beta1_), beta2(beta2_), eps(eps_) {}

  nlohmann::json to_json() const;
  static AdamState from_json(const nlohmann::json& j);
  bool operator==(const AdamState&) const = default;
};

/// One bias-corrected Adam update in place.
void adam_step(std::vector<double>& params, std::span<const double> grads, AdamState& state);

}  // namespace demask
