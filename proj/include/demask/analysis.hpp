#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace demask {

enum class PatternClass { kOuterToInner, kLeftToRight, kRightToLeft, kOther };

std::string to_string(PatternClass c);

struct SkipEvent {
  std::size_t position = 0;
  std::size_t fill_step = 0;  // 1-based
  bool operator==(const SkipEvent&) const = default;
};

struct TraceStats {
  /// Fraction of steps whose position is among the k leftmost or k rightmost
  /// remaining masks.
  double frontier_adherence = 0.0;
  double leftmost_fraction = 0.0;   // steps taking exactly the leftmost mask
  double rightmost_fraction = 0.0;  // steps taking exactly the rightmost mask
  /// Frontier steps attributed to one side only; steps inside both windows
  /// count for neither.
  std::size_t left_moves = 0;
  std::size_t right_moves = 0;
  std::vector<SkipEvent> skip_events;
  std::size_t max_run_l2r = 0;
  std::size_t max_run_r2l = 0;
};

struct Classification {
  PatternClass pattern = PatternClass::kOther;
  TraceStats stats;
};

/// Throws ArgumentError unless `trace` is a permutation of 0..T-1.
void check_permutation(const std::vector<std::size_t>& trace);

/// LeftToRight / RightToLeft when at least `threshold` of steps take the
/// leftmost / rightmost remaining mask; otherwise OuterToInner when frontier
/// adherence reaches `threshold` and each side receives at least 10% of the
/// steps; otherwise Other.
Classification classify(const std::vector<std::size_t>& trace, std::size_t window = 1,
                        double threshold = 0.9);

/// Longest runs of consecutive steps moving +1 (l2r) and -1 (r2l).
std::pair<std::size_t, std::size_t> run_stats(const std::vector<std::size_t>& trace);

/// Interior positions filled after both neighbors.
std::vector<SkipEvent> skip_events(const std::vector<std::size_t>& trace);

/// Fraction of flagged interior positions filled later than both neighbors,
/// pooled over all traces; nullopt when nothing is flagged.
/// `flagged(trace_index, position)` marks the positions of interest.
std::optional<double> skip_stats(
    const std::vector<std::vector<std::size_t>>& traces,
    const std::function<bool(std::size_t, std::size_t)>& flagged);

/// One line per requested step count: filled symbols, "_" for masks, runs of
/// two or more consecutive l2r fills in [], r2l fills in {}.
std::string render_trace(const std::vector<std::size_t>& trace,
                         const std::vector<std::string>& tokens,
                         const std::vector<std::size_t>& at_steps);

}  // namespace demask
