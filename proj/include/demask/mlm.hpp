#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "demask/corpus.hpp"

namespace demask {

/// Partially generated target: fixed-length slot array, each slot a token or
/// MASK. Slots are filled once and never revert.
class Canvas {
 public:
  Canvas(Tokens source, std::size_t length);

  const Tokens& source() const { return source_; }
  const Tokens& slots() const { return slots_; }
  std::size_t length() const { return slots_.size(); }
  std::size_t step() const { return step_; }
  std::size_t masked_count() const { return slots_.size() - step_; }
  bool complete() const { return step_ == slots_.size(); }

  bool is_masked(std::size_t j) const { return slots_.at(j) == Vocab::kMask; }
  TokenId at(std::size_t j) const { return slots_.at(j); }
  /// Source token aligned with slot j, PAD past the end of the source.
  TokenId source_at(std::size_t j) const {
    return j < source_.size() ? source_[j] : Vocab::kPad;
  }

  std::vector<std::size_t> masked_positions() const;
  std::size_t leftmost_mask() const;
  std::size_t rightmost_mask() const;

  /// Throws StateError if j is out of range or already filled.
  void fill(std::size_t j, TokenId token);

  /// Canvas with every slot filled from `tokens`.
  static Canvas completed(Tokens source, const Tokens& tokens);

 private:
  Tokens source_;
  Tokens slots_;
  std::size_t step_ = 0;
};

/// Back-off context of one slot. Level 0 = (src, left, right), 1 = (src, left),
/// 2 = (src, right), 3 = (src), 4 = () unigram.
struct ContextKey {
  TokenId src = Vocab::kPad;
  TokenId left = Vocab::kPad;
  TokenId right = Vocab::kPad;
  int level = 0;

  ContextKey at_level(int level) const;
  std::uint64_t packed() const;
  static ContextKey unpack(std::uint64_t packed, int level);
};

ContextKey context_key(const Canvas& canvas, std::size_t j);

struct PositionBelief {
  std::size_t position = 0;
  std::vector<double> dist;  // indexed by token id; sentinels are exactly 0
  double entropy = 0.0;      // nats
  TokenId greedy_tok = Vocab::kPad;
  double greedy_logp = 0.0;
  int level = 0;             // back-off level the estimate came from
};

/// Conditional masked LM fit by counting masked-slot contexts, with add-k
/// smoothing and back-off through ContextKey levels. Immutable once fit.
class MlmModel {
 public:
  static constexpr int kLevels = 5;
  static constexpr const char* kVersion = "mlm-v1";

  explicit MlmModel(Vocab vocab, double smoothing = 0.1, double backoff = 0.4);

  const Vocab& vocab() const { return vocab_; }
  double smoothing() const { return smoothing_; }
  double backoff() const { return backoff_; }

  /// Records one masked slot with true token `token` at every level.
  void observe(const ContextKey& key, TokenId token);

  std::uint64_t total(const ContextKey& key) const;
  std::uint64_t count(const ContextKey& key, TokenId token) const;
  std::size_t num_keys(int level) const { return tables_[level].size(); }

  /// Distribution for a masked slot j of the canvas.
  PositionBelief belief(const Canvas& canvas, std::size_t j) const;
  PositionBelief belief(const ContextKey& key) const;
  /// Beliefs for all masked slots in ascending position order.
  std::vector<PositionBelief> beliefs(const Canvas& canvas) const;

  /// Mean over slots of log p(y_j | all other slots) on a completed canvas.
  double pseudo_loglik(const Canvas& completed) const;

  std::string to_json() const;
  static MlmModel from_json(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static MlmModel load(const std::filesystem::path& path);

 private:
  struct Entry {
    std::vector<std::uint32_t> counts;
    std::uint64_t total = 0;
  };

  const Entry* find(const ContextKey& key) const;

  Vocab vocab_;
  double smoothing_;
  double backoff_;
  std::array<std::unordered_map<std::uint64_t, Entry>, kLevels> tables_;
};

struct MlmFitOptions {
  std::size_t rounds = 20;
  std::uint64_t seed = 1;
  double smoothing = 0.1;
  double backoff = 0.4;
};

/// Each round masks, per example, a ratio drawn uniformly from (0, 1] of the
/// target slots (at least one) and records every masked slot's context.
MlmModel fit(const Corpus& corpus, const MlmFitOptions& options);

}  // namespace demask
