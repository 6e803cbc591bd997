#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "demask/mlm.hpp"
#include "demask/rng.hpp"

namespace demask {

enum class SchedulerType { kUniform, kLeft2Right, kLeast2Most, kEasyFirst, kOuter2Inner };

enum class Least2MostVariant {
  kLeastConfident,  // fill the lowest greedy log-probability first
  kMostConfident,
};

struct SchedulerKind {
  SchedulerType type = SchedulerType::kLeft2Right;
  Least2MostVariant variant = Least2MostVariant::kLeastConfident;
  double alpha_logp = 1.0;
  double alpha_negent = 1.0;
  std::size_t stride = 1;

  static SchedulerKind uniform() { return {SchedulerType::kUniform}; }
  static SchedulerKind left2right() { return {SchedulerType::kLeft2Right}; }
  static SchedulerKind least2most(Least2MostVariant v = Least2MostVariant::kLeastConfident) {
    return {SchedulerType::kLeast2Most, v};
  }
  static SchedulerKind easy_first(double alpha_logp = 1.0, double alpha_negent = 1.0) {
    return {SchedulerType::kEasyFirst, Least2MostVariant::kLeastConfident, alpha_logp,
            alpha_negent};
  }
  static SchedulerKind outer2inner(std::size_t stride) {
    return {SchedulerType::kOuter2Inner, Least2MostVariant::kLeastConfident, 1.0, 1.0, stride};
  }

  /// Throws ConfigError for non-finite weights or a zero stride.
  void validate() const;
  bool needs_beliefs() const {
    return type == SchedulerType::kLeast2Most || type == SchedulerType::kEasyFirst;
  }
};

/// CLI name: uniform | l2r | l2m | l2m-most | easy-first | outer2inner:S.
std::string to_string(const SchedulerKind& kind);
SchedulerKind parse_scheduler(std::string_view name);

struct ScoreBreakdown {
  std::size_t position = 0;
  double phi_conf = 0.0;    // greedy log-probability
  double phi_negent = 0.0;  // negative entropy
  double combined = 0.0;
};

/// Per-masked-slot features and EasyFirst combination.
std::vector<ScoreBreakdown> score_breakdown(const std::vector<PositionBelief>& beliefs,
                                            double alpha_logp, double alpha_negent);

/// Left chunks of `stride` slots emitted left to right, alternating with right
/// chunks emitted right to left, until the frontiers meet.
std::vector<std::size_t> outer2inner_order(std::size_t length, std::size_t stride);

/// Next slot to fill. `beliefs` must cover every masked slot for Least2Most and
/// EasyFirst; `rng` is only drawn from by Uniform. Ties go to the lowest index.
std::size_t next_position(const SchedulerKind& kind, const Canvas& canvas,
                          const std::vector<PositionBelief>& beliefs, Rng& rng);

}  // namespace demask
