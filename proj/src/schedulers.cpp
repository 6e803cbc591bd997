#include "demask/schedulers.hpp"

#include <cmath>

#include "demask/error.hpp"

namespace demask {

void SchedulerKind::validate() const {
  if (!std::isfinite(alpha_logp) || !std::isfinite(alpha_negent)) {
    throw ConfigError("scheduler weights must be finite");
  }
  if (type == SchedulerType::kOuter2Inner && stride < 1) {
    throw ConfigError("outer2inner stride must be >= 1");
  }
}

std::string to_string(const SchedulerKind& kind) {
  switch (kind.type) {
    case SchedulerType::kUniform: return "uniform";
    case SchedulerType::kLeft2Right: return "l2r";
    case SchedulerType::kLeast2Most:
      return kind.variant == Least2MostVariant::kLeastConfident ? "l2m" : "l2m-most";
    case SchedulerType::kEasyFirst: return "easy-first";
    case SchedulerType::kOuter2Inner: return "outer2inner:" + std::to_string(kind.stride);
  }
  return "?";
}

SchedulerKind parse_scheduler(std::string_view name) {
  if (name == "uniform") return SchedulerKind::uniform();
  if (name == "l2r") return SchedulerKind::left2right();
  if (name == "l2m") return SchedulerKind::least2most();
  if (name == "l2m-most") return SchedulerKind::least2most(Least2MostVariant::kMostConfident);
  if (name == "easy-first") return SchedulerKind::easy_first();
  constexpr std::string_view prefix = "outer2inner:";
  if (name.substr(0, prefix.size()) == prefix) {
    const std::string digits(name.substr(prefix.size()));
    std::size_t used = 0;
    long long s = 0;
    try {
      s = std::stoll(digits, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != digits.size() || digits.empty() || s < 1) {
      throw ConfigError("bad outer2inner stride in '" + std::string(name) + "'");
    }
    return SchedulerKind::outer2inner(static_cast<std::size_t>(s));
  }
  throw ConfigError("unknown order '" + std::string(name) + "'");
}

std::vector<ScoreBreakdown> score_breakdown(const std::vector<PositionBelief>& beliefs,
                                            double alpha_logp, double alpha_negent) {
  std::vector<ScoreBreakdown> out;
  out.reserve(beliefs.size());
  for (const auto& b : beliefs) {
    ScoreBreakdown s;
    s.position = b.position;
    s.phi_conf = b.greedy_logp;
    s.phi_negent = -b.entropy;
    s.combined = alpha_logp * s.phi_conf + alpha_negent * s.phi_negent;
    out.push_back(s);
  }
  return out;
}

std::vector<std::size_t> outer2inner_order(std::size_t length, std::size_t stride) {
  if (stride < 1) throw ArgumentError("outer2inner stride must be >= 1");
  std::vector<std::size_t> order;
  order.reserve(length);
  std::size_t lo = 0, hi = length;  // unfilled slots are [lo, hi)
  bool from_left = true;
  while (lo < hi) {
    for (std::size_t k = 0; k < stride && lo < hi; ++k) {
      order.push_back(from_left ? lo++ : --hi);
    }
    from_left = !from_left;
  }
  return order;
}

namespace {

template <typename Better>
std::size_t pick(const Canvas& canvas, const std::vector<PositionBelief>& beliefs,
                 Better better) {
  if (beliefs.size() != canvas.masked_count()) {
    throw ArgumentError("beliefs must cover every masked slot");
  }
  const PositionBelief* best = nullptr;
  for (const auto& b : beliefs) {
    if (!canvas.is_masked(b.position)) throw ArgumentError("belief for a filled slot");
    if (!best || better(b, *best) || (!better(*best, b) && b.position < best->position)) {
      best = &b;
    }
  }
  return best->position;
}

}  // namespace

std::size_t next_position(const SchedulerKind& kind, const Canvas& canvas,
                          const std::vector<PositionBelief>& beliefs, Rng& rng) {
  if (canvas.masked_count() == 0) throw StateError("no masked slot left");
  switch (kind.type) {
    case SchedulerType::kUniform: {
      const auto masked = canvas.masked_positions();
      return masked[rng.below(masked.size())];
    }
    case SchedulerType::kLeft2Right:
      return canvas.leftmost_mask();
    case SchedulerType::kLeast2Most:
      if (kind.variant == Least2MostVariant::kLeastConfident) {
        return pick(canvas, beliefs, [](const PositionBelief& a, const PositionBelief& b) {
          return a.greedy_logp < b.greedy_logp;
        });
      }
      return pick(canvas, beliefs, [](const PositionBelief& a, const PositionBelief& b) {
        return a.greedy_logp > b.greedy_logp;
      });
    case SchedulerType::kEasyFirst: {
      auto score = [&](const PositionBelief& b) {
        return kind.alpha_logp * b.greedy_logp + kind.alpha_negent * -b.entropy;
      };
      return pick(canvas, beliefs, [&](const PositionBelief& a, const PositionBelief& b) {
        return score(a) > score(b);
      });
    }
    case SchedulerType::kOuter2Inner:
      for (std::size_t j : outer2inner_order(canvas.length(), kind.stride)) {
        if (canvas.is_masked(j)) return j;
      }
      break;
  }
  throw StateError("scheduler found no masked slot");
}

}  // namespace demask
