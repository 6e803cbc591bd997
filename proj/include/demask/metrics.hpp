#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "demask/corpus.hpp"

namespace demask {

constexpr int kBleuOrder = 4;

/// Clipped n-gram matches and candidate n-gram totals for orders 1..4, plus
/// lengths. Sufficient statistics for both sentence and corpus BLEU.
struct BleuStats {
  std::array<std::uint64_t, kBleuOrder> matches{};
  std::array<std::uint64_t, kBleuOrder> totals{};
  std::uint64_t candidate_len = 0;
  std::uint64_t reference_len = 0;

  BleuStats& operator+=(const BleuStats& other);
};

BleuStats bleu_stats(const Tokens& candidate, const Tokens& reference);

struct BleuReport {
  std::array<double, kBleuOrder> precisions{};
  double brevity_penalty = 1.0;
  double score = 0.0;  // in [0, 1]
  std::uint64_t candidate_len = 0;
  std::uint64_t reference_len = 0;
};

/// Combines statistics. Smoothed mode adds 1 to the numerator and
/// denominator of p_n for n >= 2.
BleuReport bleu_from_stats(const BleuStats& stats, bool smoothed);

/// Sentence-level BLEU-4 in [0, 1]. Throws ArgumentError on an empty reference.
double sentence_bleu(const Tokens& candidate, const Tokens& reference, bool smoothed);

/// Corpus BLEU-4 (unsmoothed); statistics are summed before combining.
BleuReport corpus_bleu(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references);

/// Paired bootstrap resampling over sentences. Returns the fraction of
/// resampled corpora on which system A does not beat system B.
double paired_bootstrap(const std::vector<Tokens>& candidates_a,
                        const std::vector<Tokens>& candidates_b,
                        const std::vector<Tokens>& references, std::size_t resamples,
                        std::uint64_t seed);

}  // namespace demask
