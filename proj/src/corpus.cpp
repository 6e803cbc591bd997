#include "demask/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>

#include "demask/error.hpp"
#include "demask/io.hpp"
#include "demask/rng.hpp"

namespace demask {

using json = nlohmann::json;

Vocab::Vocab(std::vector<std::string> payload) {
  symbols_.reserve(payload.size() + kFirstPayload);
  symbols_.push_back("<pad>");
  symbols_.push_back("<mask>");
  for (auto& s : payload) symbols_.push_back(std::move(s));
  for (TokenId i = 0; i < symbols_.size(); ++i) {
    if (!ids_.emplace(symbols_[i], i).second) {
      throw ConfigError("duplicate vocabulary symbol '" + symbols_[i] + "'");
    }
  }
}

Vocab Vocab::synthetic(std::size_t n) {
  std::vector<std::string> payload;
  payload.reserve(n);
  for (std::size_t i = 0; i < n; ++i) payload.push_back("t" + std::to_string(i));
  return Vocab(std::move(payload));
}

TokenId Vocab::lookup(std::string_view symbol) const {
  auto it = ids_.find(std::string(symbol));
  if (it == ids_.end()) throw std::out_of_range("unknown symbol '" + std::string(symbol) + "'");
  return it->second;
}

bool Vocab::contains(std::string_view symbol) const {
  return ids_.count(std::string(symbol)) != 0;
}

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::kCopy: return "copy";
    case TaskKind::kCipher: return "cipher";
    case TaskKind::kReverse: return "reverse";
    case TaskKind::kReverseCipher: return "reverse_cipher";
    case TaskKind::kSwapHalves: return "swap_halves";
  }
  return "?";
}

TaskKind parse_task_kind(std::string_view name) {
  for (auto k : {TaskKind::kCopy, TaskKind::kCipher, TaskKind::kReverse,
                 TaskKind::kReverseCipher, TaskKind::kSwapHalves}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown task kind '" + std::string(name) + "'");
}

void TaskSpec::validate() const {
  if (vocab_size < 2) throw ConfigError("vocab_size must be >= 2");
  if (len_min < 1) throw ConfigError("len_min must be >= 1");
  if (len_min > len_max) throw ConfigError("len_min must not exceed len_max");
  if (!(filler_rate >= 0.0 && filler_rate < 1.0)) throw ConfigError("filler_rate must be in [0, 1)");
  if (filler_rate > 0.0 && vocab_size < 3) throw ConfigError("filler tasks need vocab_size >= 3");
}

namespace {

constexpr std::size_t kBranching = 3;
constexpr std::size_t kStartTokens = 2;

}  // namespace

TaskGenerator::TaskGenerator(TaskSpec spec) : spec_(spec) {
  spec_.validate();
  vocab_ = spec_.vocab();
  const bool filler = spec_.filler_rate > 0.0;
  for (TokenId id = Vocab::kFirstPayload; id < vocab_.size(); ++id) {
    if (filler && id == spec_.filler()) continue;
    chain_tokens_.push_back(id);
  }

  cipher_.resize(vocab_.size());
  decipher_.resize(vocab_.size());
  for (TokenId id = 0; id < vocab_.size(); ++id) cipher_[id] = id;
  std::vector<TokenId> image = chain_tokens_;
  Rng cipher_rng(derive_seed(spec_.seed, "cipher"));
  cipher_rng.shuffle(image);
  for (std::size_t i = 0; i < chain_tokens_.size(); ++i) cipher_[chain_tokens_[i]] = image[i];
  for (TokenId id = 0; id < vocab_.size(); ++id) decipher_[cipher_[id]] = id;

  // Sparse first-order chain: a fixed end symbol, a small start set, and a
  // few weighted successors per symbol. Gives targets local structure that a
  // neighbor-conditioned model can exploit.
  Rng chain_rng(derive_seed(spec_.seed, "chain"));
  std::vector<TokenId> pool = chain_tokens_;
  chain_rng.shuffle(pool);
  end_token_ = pool.front();
  std::vector<TokenId> inner(pool.begin() + (pool.size() > 1 ? 1 : 0), pool.end());
  start_tokens_.assign(inner.begin(), inner.begin() + std::min(kStartTokens, inner.size()));

  successors_.assign(vocab_.size(), {});
  successor_weights_.assign(vocab_.size(), {});
  for (TokenId id : chain_tokens_) {
    std::vector<TokenId> candidates = inner;
    chain_rng.shuffle(candidates);
    const std::size_t k = std::min(kBranching, candidates.size());
    successors_[id].assign(candidates.begin(), candidates.begin() + k);
    for (std::size_t i = 0; i < k; ++i) {
      successor_weights_[id].push_back(0.2 + 0.8 * chain_rng.uniform());
    }
  }
}

SentencePair TaskGenerator::example(std::uint64_t index) const {
  Rng rng(derive_seed(spec_.seed, "example", index));
  const std::size_t len = spec_.len_min + rng.below(spec_.len_max - spec_.len_min + 1);

  Tokens source(len);
  TokenId state = start_tokens_[rng.below(start_tokens_.size())];
  source[0] = state;
  for (std::size_t j = 1; j < len; ++j) {
    if (j + 1 == len) {
      source[j] = end_token_;
    } else if (spec_.filler_rate > 0.0 && rng.uniform() < spec_.filler_rate) {
      source[j] = spec_.filler();
    } else {
      state = successors_[state][rng.categorical(successor_weights_[state])];
      source[j] = state;
    }
  }

  SentencePair pair;
  pair.target = map_target(source);
  pair.source = std::move(source);
  pair.task = to_string(spec_.kind);
  return pair;
}

Tokens TaskGenerator::map_target(const Tokens& source) const {
  const std::size_t n = source.size();
  Tokens target(n);
  switch (spec_.kind) {
    case TaskKind::kCopy:
      target = source;
      break;
    case TaskKind::kCipher:
      for (std::size_t j = 0; j < n; ++j) target[j] = cipher(source[j]);
      break;
    case TaskKind::kReverse:
      for (std::size_t j = 0; j < n; ++j) target[j] = source[n - 1 - j];
      break;
    case TaskKind::kReverseCipher:
      for (std::size_t j = 0; j < n; ++j) target[j] = cipher(source[n - 1 - j]);
      break;
    case TaskKind::kSwapHalves: {
      const std::size_t half = n / 2;
      const std::size_t tail = n - half;  // includes the middle token when n is odd
      std::size_t out = 0;
      for (std::size_t j = n - half; j < n; ++j) target[out++] = source[j];
      if (tail > half) target[out++] = source[half];
      for (std::size_t j = 0; j < half; ++j) target[out++] = source[j];
      break;
    }
  }
  return target;
}

Corpus generate_corpus(const TaskSpec& spec, std::size_t n, std::uint64_t first_index) {
  if (n < 1) throw ConfigError("corpus size must be >= 1");
  TaskGenerator gen(spec);
  Corpus corpus{gen.vocab(), {}};
  corpus.pairs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) corpus.pairs.push_back(gen.example(first_index + i));
  return corpus;
}

namespace {

json symbols_of(const Vocab& vocab, const Tokens& tokens) {
  json out = json::array();
  for (TokenId t : tokens) out.push_back(vocab.symbol(t));
  return out;
}

Tokens tokens_of(const Vocab& vocab, const json& arr, const char* key, std::size_t line) {
  if (!arr.is_array()) throw ParseError(std::string("\"") + key + "\" is not an array", line);
  Tokens out;
  out.reserve(arr.size());
  for (const auto& s : arr) {
    if (!s.is_string()) throw ParseError(std::string("non-string token in \"") + key + "\"", line);
    const auto& sym = s.get_ref<const std::string&>();
    if (!vocab.contains(sym)) throw ParseError("unknown symbol '" + sym + "'", line);
    TokenId id = vocab.lookup(sym);
    if (Vocab::is_sentinel(id)) throw ParseError("sentinel symbol in payload", line);
    out.push_back(id);
  }
  return out;
}

}  // namespace

std::string corpus_to_jsonl(const Corpus& corpus) {
  std::string out;
  for (const auto& pair : corpus.pairs) {
    json line = {{"src", symbols_of(corpus.vocab, pair.source)},
                 {"tgt", symbols_of(corpus.vocab, pair.target)},
                 {"task", pair.task}};
    out += line.dump();
    out += '\n';
  }
  return out;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  write_text_file(path, corpus_to_jsonl(corpus));
}

Corpus load_corpus(const std::filesystem::path& path, const Vocab& vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  Corpus corpus{vocab, {}};
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.empty()) continue;
    json obj;
    try {
      obj = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError(e.what(), line);
    }
    if (!obj.is_object()) throw ParseError("expected a JSON object", line);
    for (const char* key : {"src", "tgt", "task"}) {
      if (!obj.contains(key)) throw ParseError(std::string("missing \"") + key + "\"", line);
    }
    if (!obj["task"].is_string()) throw ParseError("\"task\" is not a string", line);
    SentencePair pair;
    pair.source = tokens_of(vocab, obj["src"], "src", line);
    pair.target = tokens_of(vocab, obj["tgt"], "tgt", line);
    pair.task = obj["task"].get<std::string>();
    if (pair.target.empty()) throw ParseError("empty target", line);
    corpus.pairs.push_back(std::move(pair));
  }
  return corpus;
}

}  // namespace demask
