#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace demask {

using TokenId = std::uint32_t;
using Tokens = std::vector<TokenId>;

/// Symbol table. Ids 0 and 1 are the PAD and MASK sentinels; payload symbols
/// "t0".."t{n-1}" follow contiguously from id 2.
class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kMask = 1;
  static constexpr TokenId kFirstPayload = 2;

  Vocab() : Vocab(std::vector<std::string>{}) {}
  explicit Vocab(std::vector<std::string> payload);

  /// Vocabulary of `n` synthetic symbols t0..t{n-1}.
  static Vocab synthetic(std::size_t n);

  std::size_t size() const { return symbols_.size(); }
  std::size_t payload_size() const { return symbols_.size() - kFirstPayload; }

  const std::string& symbol(TokenId id) const { return symbols_.at(id); }
  /// Throws std::out_of_range for an unknown symbol.
  TokenId lookup(std::string_view symbol) const;
  bool contains(std::string_view symbol) const;

  static bool is_sentinel(TokenId id) { return id < kFirstPayload; }

  const std::vector<std::string>& symbols() const { return symbols_; }
  bool operator==(const Vocab& other) const { return symbols_ == other.symbols_; }

 private:
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, TokenId> ids_;
};

enum class TaskKind { kCopy, kCipher, kReverse, kReverseCipher, kSwapHalves };

std::string to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view name);

struct TaskSpec {
  TaskKind kind = TaskKind::kReverseCipher;
  std::size_t vocab_size = 20;
  std::size_t len_min = 6;
  std::size_t len_max = 16;
  std::uint64_t seed = 1;
  /// Probability of emitting the filler symbol (the last payload symbol) at
  /// any non-initial source position. The filler is a fixed point of the
  /// cipher and does not advance the source chain.
  double filler_rate = 0.0;

  /// Throws ConfigError on unusable settings.
  void validate() const;
  Vocab vocab() const { return Vocab::synthetic(vocab_size); }
  /// Filler symbol id, valid when filler_rate > 0.
  TokenId filler() const { return static_cast<TokenId>(Vocab::kFirstPayload + vocab_size - 1); }
};

struct SentencePair {
  Tokens source;
  Tokens target;
  std::string task;

  bool operator==(const SentencePair&) const = default;
};

struct Corpus {
  Vocab vocab;
  std::vector<SentencePair> pairs;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
  bool operator==(const Corpus&) const = default;
};

/// The task's hidden structure: cipher permutation and source Markov chain.
/// Both are pure functions of the TaskSpec.
class TaskGenerator {
 public:
  explicit TaskGenerator(TaskSpec spec);

  const TaskSpec& spec() const { return spec_; }
  const Vocab& vocab() const { return vocab_; }

  /// Cipher permutation over token ids (identity on sentinels).
  TokenId cipher(TokenId id) const { return cipher_.at(id); }
  TokenId decipher(TokenId id) const { return decipher_.at(id); }

  /// Example number `index`; independent of every other index.
  SentencePair example(std::uint64_t index) const;

  /// Applies the task mapping to a source sequence.
  Tokens map_target(const Tokens& source) const;

 private:
  TaskSpec spec_;
  Vocab vocab_;
  std::vector<TokenId> cipher_;
  std::vector<TokenId> decipher_;
  std::vector<TokenId> chain_tokens_;        // non-filler payload ids
  std::vector<TokenId> start_tokens_;
  std::vector<std::vector<TokenId>> successors_;   // indexed by id
  std::vector<std::vector<double>> successor_weights_;
  TokenId end_token_ = 0;
};

/// Examples [first_index, first_index + n) of the task.
Corpus generate_corpus(const TaskSpec& spec, std::size_t n, std::uint64_t first_index = 0);

/// One JSON object per line: {"src": [...], "tgt": [...], "task": "..."}.
std::string corpus_to_jsonl(const Corpus& corpus);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
/// Symbols are resolved against `vocab`; unknown symbols are a ParseError.
Corpus load_corpus(const std::filesystem::path& path, const Vocab& vocab);

}  // namespace demask
