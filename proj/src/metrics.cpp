#include "demask/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "demask/error.hpp"
#include "demask/rng.hpp"

namespace demask {

BleuStats& BleuStats::operator+=(const BleuStats& other) {
  for (int n = 0; n < kBleuOrder; ++n) {
    matches[n] += other.matches[n];
    totals[n] += other.totals[n];
  }
  candidate_len += other.candidate_len;
  reference_len += other.reference_len;
  return *this;
}

namespace {

using NgramCounts = std::map<std::vector<TokenId>, std::uint64_t>;

NgramCounts count_ngrams(const Tokens& tokens, std::size_t n) {
  NgramCounts counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[std::vector<TokenId>(tokens.begin() + i, tokens.begin() + i + n)];
  }
  return counts;
}

}  // namespace

BleuStats bleu_stats(const Tokens& candidate, const Tokens& reference) {
  BleuStats s;
  s.candidate_len = candidate.size();
  s.reference_len = reference.size();
  for (int n = 1; n <= kBleuOrder; ++n) {
    const NgramCounts cand = count_ngrams(candidate, n);
    const NgramCounts ref = count_ngrams(reference, n);
    for (const auto& [gram, c] : cand) {
      auto it = ref.find(gram);
      if (it != ref.end()) s.matches[n - 1] += std::min(c, it->second);
      s.totals[n - 1] += c;
    }
  }
  return s;
}

BleuReport bleu_from_stats(const BleuStats& stats, bool smoothed) {
  BleuReport r;
  r.candidate_len = stats.candidate_len;
  r.reference_len = stats.reference_len;
  if (stats.candidate_len == 0) {
    r.brevity_penalty = 0.0;
    return r;
  }
  r.brevity_penalty =
      stats.candidate_len >= stats.reference_len
          ? 1.0
          : std::exp(1.0 - static_cast<double>(stats.reference_len) / stats.candidate_len);

  double log_sum = 0.0;
  bool zero = false;
  for (int n = 0; n < kBleuOrder; ++n) {
    double num = static_cast<double>(stats.matches[n]);
    double den = static_cast<double>(stats.totals[n]);
    if (smoothed && n >= 1) {
      num += 1.0;
      den += 1.0;
    }
    r.precisions[n] = den > 0.0 ? num / den : 0.0;
    if (r.precisions[n] <= 0.0) {
      zero = true;
    } else {
      log_sum += std::log(r.precisions[n]);
    }
  }
  r.score = zero ? 0.0 : r.brevity_penalty * std::exp(log_sum / kBleuOrder);
  return r;
}

double sentence_bleu(const Tokens& candidate, const Tokens& reference, bool smoothed) {
  if (reference.empty()) throw ArgumentError("sentence_bleu: empty reference");
  if (candidate.empty()) return 0.0;
  return bleu_from_stats(bleu_stats(candidate, reference), smoothed).score;
}

BleuReport corpus_bleu(const std::vector<Tokens>& candidates,
                       const std::vector<Tokens>& references) {
  if (candidates.size() != references.size()) {
    throw ArgumentError("corpus_bleu: candidate/reference count mismatch");
  }
  if (candidates.empty()) throw ArgumentError("corpus_bleu: empty corpus");
  BleuStats total;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    total += bleu_stats(candidates[i], references[i]);
  }
  return bleu_from_stats(total, false);
}

double paired_bootstrap(const std::vector<Tokens>& candidates_a,
                        const std::vector<Tokens>& candidates_b,
                        const std::vector<Tokens>& references, std::size_t resamples,
                        std::uint64_t seed) {
  const std::size_t n = references.size();
  if (candidates_a.size() != n || candidates_b.size() != n) {
    throw ArgumentError("paired_bootstrap: systems are not aligned with the references");
  }
  if (n == 0) throw ArgumentError("paired_bootstrap: empty corpus");
  if (resamples < 100) throw ArgumentError("paired_bootstrap: need at least 100 resamples");

  std::vector<BleuStats> stats_a(n), stats_b(n);
  for (std::size_t i = 0; i < n; ++i) {
    stats_a[i] = bleu_stats(candidates_a[i], references[i]);
    stats_b[i] = bleu_stats(candidates_b[i], references[i]);
  }
  Rng rng(derive_seed(seed, "bootstrap"));
  std::size_t not_better = 0;
  for (std::size_t r = 0; r < resamples; ++r) {
    BleuStats a, b;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = rng.below(n);
      a += stats_a[k];
      b += stats_b[k];
    }
    if (bleu_from_stats(a, false).score <= bleu_from_stats(b, false).score) ++not_better;
  }
  return static_cast<double>(not_better) / static_cast<double>(resamples);
}

}  // namespace demask
