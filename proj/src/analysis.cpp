#include "demask/analysis.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "demask/error.hpp"

namespace demask {

std::string to_string(PatternClass c) {
  switch (c) {
    case PatternClass::kOuterToInner: return "outer_to_inner";
    case PatternClass::kLeftToRight: return "left_to_right";
    case PatternClass::kRightToLeft: return "right_to_left";
    case PatternClass::kOther: return "other";
  }
  return "?";
}

void check_permutation(const std::vector<std::size_t>& trace) {
  std::vector<bool> seen(trace.size(), false);
  for (std::size_t p : trace) {
    if (p >= trace.size() || seen[p]) throw ArgumentError("trace is not a permutation");
    seen[p] = true;
  }
}

namespace {

/// fill_step[j] = 1-based step at which slot j was filled.
std::vector<std::size_t> fill_steps(const std::vector<std::size_t>& trace) {
  std::vector<std::size_t> steps(trace.size());
  for (std::size_t i = 0; i < trace.size(); ++i) steps[trace[i]] = i + 1;
  return steps;
}

}  // namespace

std::pair<std::size_t, std::size_t> run_stats(const std::vector<std::size_t>& trace) {
  check_permutation(trace);
  if (trace.empty()) return {0, 0};
  std::size_t best_up = 1, best_down = 1, up = 1, down = 1;
  for (std::size_t i = 1; i < trace.size(); ++i) {
    up = trace[i] == trace[i - 1] + 1 ? up + 1 : 1;
    down = trace[i] + 1 == trace[i - 1] ? down + 1 : 1;
    best_up = std::max(best_up, up);
    best_down = std::max(best_down, down);
  }
  return {best_up, best_down};
}

std::vector<SkipEvent> skip_events(const std::vector<std::size_t>& trace) {
  check_permutation(trace);
  const auto step = fill_steps(trace);
  std::vector<SkipEvent> out;
  for (std::size_t j = 1; j + 1 < trace.size(); ++j) {
    if (step[j] > step[j - 1] && step[j] > step[j + 1]) out.push_back({j, step[j]});
  }
  return out;
}

Classification classify(const std::vector<std::size_t>& trace, std::size_t window,
                        double threshold) {
  check_permutation(trace);
  if (window < 1) throw ArgumentError("classify: window must be >= 1");
  Classification result;
  TraceStats& st = result.stats;
  const std::size_t len = trace.size();
  if (len == 0) return result;

  std::set<std::size_t> remaining;
  for (std::size_t j = 0; j < len; ++j) remaining.insert(j);

  std::size_t frontier = 0, leftmost = 0, rightmost = 0;
  for (std::size_t p : trace) {
    // Rank of p among the remaining masks, from each side.
    const auto it = remaining.find(p);
    const auto from_left = static_cast<std::size_t>(std::distance(remaining.begin(), it));
    const std::size_t from_right = remaining.size() - 1 - from_left;
    const bool in_left = from_left < window;
    const bool in_right = from_right < window;
    if (in_left || in_right) ++frontier;
    if (in_left && !in_right) ++st.left_moves;
    if (in_right && !in_left) ++st.right_moves;
    if (from_left == 0) ++leftmost;
    if (from_right == 0) ++rightmost;
    remaining.erase(it);
  }

  const double t = static_cast<double>(len);
  st.frontier_adherence = frontier / t;
  st.leftmost_fraction = leftmost / t;
  st.rightmost_fraction = rightmost / t;
  st.skip_events = skip_events(trace);
  std::tie(st.max_run_l2r, st.max_run_r2l) = run_stats(trace);

  constexpr double kMinSideShare = 0.1;
  if (st.leftmost_fraction >= threshold) {
    result.pattern = PatternClass::kLeftToRight;
  } else if (st.rightmost_fraction >= threshold) {
    result.pattern = PatternClass::kRightToLeft;
  } else if (st.frontier_adherence >= threshold && st.left_moves >= kMinSideShare * t &&
             st.right_moves >= kMinSideShare * t) {
    result.pattern = PatternClass::kOuterToInner;
  } else {
    result.pattern = PatternClass::kOther;
  }
  return result;
}

std::optional<double> skip_stats(
    const std::vector<std::vector<std::size_t>>& traces,
    const std::function<bool(std::size_t, std::size_t)>& flagged) {
  std::size_t n_flagged = 0, n_skipped = 0;
  for (std::size_t t = 0; t < traces.size(); ++t) {
    const auto& trace = traces[t];
    check_permutation(trace);
    const auto step = fill_steps(trace);
    for (std::size_t j = 1; j + 1 < trace.size(); ++j) {
      if (!flagged(t, j)) continue;
      ++n_flagged;
      if (step[j] > step[j - 1] && step[j] > step[j + 1]) ++n_skipped;
    }
  }
  if (n_flagged == 0) return std::nullopt;
  return static_cast<double>(n_skipped) / static_cast<double>(n_flagged);
}

std::string render_trace(const std::vector<std::size_t>& trace,
                         const std::vector<std::string>& tokens,
                         const std::vector<std::size_t>& at_steps) {
  check_permutation(trace);
  if (tokens.size() != trace.size()) throw ArgumentError("render_trace: token count mismatch");
  const auto step = fill_steps(trace);
  const std::size_t len = trace.size();

  std::ostringstream os;
  for (std::size_t s : at_steps) {
    s = std::min(s, len);
    // Bracket spans from maximal +1 / -1 runs among the first s steps.
    std::vector<std::string> open(len), close(len);
    for (std::size_t k = 0; k < s;) {
      std::size_t m = k;
      if (k + 1 < s) {
        const bool up = trace[k + 1] == trace[k] + 1;
        const bool down = trace[k + 1] + 1 == trace[k];
        while (m + 1 < s && ((up && trace[m + 1] == trace[m] + 1) ||
                             (down && trace[m + 1] + 1 == trace[m]))) {
          ++m;
        }
        if (m > k) {
          const std::size_t lo = std::min(trace[k], trace[m]);
          const std::size_t hi = std::max(trace[k], trace[m]);
          open[lo] = up ? "[" : "{";
          close[hi] = up ? "]" : "}";
        }
      }
      k = m + 1;
    }
    for (std::size_t j = 0; j < len; ++j) {
      if (j) os << ' ';
      if (step[j] <= s) {
        os << open[j] << tokens[j] << close[j];
      } else {
        os << '_';
      }
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace demask
