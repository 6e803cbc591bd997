#include "demask/mlm.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "demask/error.hpp"
#include "demask/io.hpp"
#include "demask/rng.hpp"

namespace demask {

using json = nlohmann::json;

Canvas::Canvas(Tokens source, std::size_t length)
    : source_(std::move(source)), slots_(length, Vocab::kMask) {}

std::vector<std::size_t> Canvas::masked_positions() const {
  std::vector<std::size_t> out;
  out.reserve(masked_count());
  for (std::size_t j = 0; j < slots_.size(); ++j) {
    if (slots_[j] == Vocab::kMask) out.push_back(j);
  }
  return out;
}

std::size_t Canvas::leftmost_mask() const {
  for (std::size_t j = 0; j < slots_.size(); ++j) {
    if (slots_[j] == Vocab::kMask) return j;
  }
  throw StateError("canvas has no masked slot");
}

std::size_t Canvas::rightmost_mask() const {
  for (std::size_t j = slots_.size(); j-- > 0;) {
    if (slots_[j] == Vocab::kMask) return j;
  }
  throw StateError("canvas has no masked slot");
}

void Canvas::fill(std::size_t j, TokenId token) {
  if (j >= slots_.size()) throw StateError("slot out of range");
  if (slots_[j] != Vocab::kMask) throw StateError("slot " + std::to_string(j) + " already filled");
  if (Vocab::is_sentinel(token)) throw StateError("cannot fill a slot with a sentinel");
  slots_[j] = token;
  ++step_;
}

Canvas Canvas::completed(Tokens source, const Tokens& tokens) {
  Canvas c(std::move(source), tokens.size());
  for (std::size_t j = 0; j < tokens.size(); ++j) c.fill(j, tokens[j]);
  return c;
}

namespace {

constexpr std::uint64_t kFieldBits = 20;
constexpr std::uint64_t kWildcard = (1ULL << kFieldBits) - 1;

}  // namespace

ContextKey ContextKey::at_level(int lvl) const {
  ContextKey k = *this;
  k.level = lvl;
  return k;
}

std::uint64_t ContextKey::packed() const {
  std::uint64_t s = src, l = left, r = right;
  switch (level) {
    case 0: break;
    case 1: r = kWildcard; break;
    case 2: l = kWildcard; break;
    case 3: l = r = kWildcard; break;
    default: s = l = r = kWildcard; break;
  }
  return (s << (2 * kFieldBits)) | (l << kFieldBits) | r;
}

ContextKey ContextKey::unpack(std::uint64_t packed, int lvl) {
  auto field = [](std::uint64_t v) {
    return static_cast<TokenId>(v == kWildcard ? Vocab::kPad : v);
  };
  return ContextKey{field((packed >> (2 * kFieldBits)) & kWildcard),
                    field((packed >> kFieldBits) & kWildcard), field(packed & kWildcard), lvl};
}

ContextKey context_key(const Canvas& canvas, std::size_t j) {
  ContextKey key;
  key.src = canvas.source_at(j);
  key.left = j == 0 ? Vocab::kPad : canvas.at(j - 1);
  key.right = j + 1 >= canvas.length() ? Vocab::kPad : canvas.at(j + 1);
  key.level = 0;
  return key;
}

MlmModel::MlmModel(Vocab vocab, double smoothing, double backoff)
    : vocab_(std::move(vocab)), smoothing_(smoothing), backoff_(backoff) {
  if (vocab_.payload_size() < 1) throw ConfigError("MLM vocabulary has no payload symbols");
  if (!(smoothing_ >= 0.0)) throw ConfigError("smoothing must be >= 0");
  if (!(backoff_ > 0.0 && backoff_ <= 1.0)) throw ConfigError("backoff must be in (0, 1]");
}

void MlmModel::observe(const ContextKey& key, TokenId token) {
  if (Vocab::is_sentinel(token) || token >= vocab_.size()) {
    throw ArgumentError("observed token must be a payload id");
  }
  for (int lvl = 0; lvl < kLevels; ++lvl) {
    Entry& e = tables_[lvl][key.at_level(lvl).packed()];
    if (e.counts.empty()) e.counts.assign(vocab_.size(), 0);
    ++e.counts[token];
    ++e.total;
  }
}

const MlmModel::Entry* MlmModel::find(const ContextKey& key) const {
  const auto& table = tables_[std::clamp(key.level, 0, kLevels - 1)];
  auto it = table.find(key.packed());
  return it == table.end() ? nullptr : &it->second;
}

std::uint64_t MlmModel::total(const ContextKey& key) const {
  const Entry* e = find(key);
  return e ? e->total : 0;
}

std::uint64_t MlmModel::count(const ContextKey& key, TokenId token) const {
  const Entry* e = find(key);
  return e ? e->counts.at(token) : 0;
}

PositionBelief MlmModel::belief(const ContextKey& key0) const {
  PositionBelief b;
  b.dist.assign(vocab_.size(), 0.0);

  const Entry* entry = nullptr;
  int lvl = 0;
  for (; lvl < kLevels; ++lvl) {
    entry = find(key0.at_level(lvl));
    if (entry && entry->total > 0) break;
  }
  if (lvl == kLevels) {
    lvl = kLevels - 1;
    entry = nullptr;
  }
  b.level = lvl;

  // Stupid back-off: the first level with data, add-k smoothed and scaled by
  // backoff^level, then renormalized.
  const double scale = std::pow(backoff_, lvl);
  const double v = static_cast<double>(vocab_.payload_size());
  const double denom = (entry ? static_cast<double>(entry->total) : 0.0) + smoothing_ * v;
  double sum = 0.0;
  for (TokenId t = Vocab::kFirstPayload; t < vocab_.size(); ++t) {
    double c = entry ? static_cast<double>(entry->counts[t]) : 0.0;
    double p = denom > 0.0 ? scale * (c + smoothing_) / denom : 1.0;
    b.dist[t] = p;
    sum += p;
  }
  for (TokenId t = Vocab::kFirstPayload; t < vocab_.size(); ++t) b.dist[t] /= sum;

  b.greedy_tok = Vocab::kFirstPayload;
  for (TokenId t = Vocab::kFirstPayload; t < vocab_.size(); ++t) {
    const double p = b.dist[t];
    if (p > 0.0) b.entropy -= p * std::log(p);
    if (p > b.dist[b.greedy_tok]) b.greedy_tok = t;
  }
  b.entropy = std::max(0.0, b.entropy);
  b.greedy_logp = std::log(b.dist[b.greedy_tok]);
  return b;
}

PositionBelief MlmModel::belief(const Canvas& canvas, std::size_t j) const {
  PositionBelief b = belief(context_key(canvas, j));
  b.position = j;
  return b;
}

std::vector<PositionBelief> MlmModel::beliefs(const Canvas& canvas) const {
  std::vector<PositionBelief> out;
  out.reserve(canvas.masked_count());
  for (std::size_t j = 0; j < canvas.length(); ++j) {
    if (canvas.is_masked(j)) out.push_back(belief(canvas, j));
  }
  return out;
}

double MlmModel::pseudo_loglik(const Canvas& completed) const {
  if (!completed.complete()) throw StateError("pseudo_loglik needs a completed canvas");
  if (completed.length() == 0) return 0.0;
  double total = 0.0;
  for (std::size_t j = 0; j < completed.length(); ++j) {
    ContextKey key = context_key(completed, j);
    total += std::log(belief(key).dist[completed.at(j)]);
  }
  return total / static_cast<double>(completed.length());
}

std::string MlmModel::to_json() const {
  json levels = json::array();
  for (int lvl = 0; lvl < kLevels; ++lvl) {
    std::vector<std::uint64_t> keys;
    keys.reserve(tables_[lvl].size());
    for (const auto& [k, _] : tables_[lvl]) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    json rows = json::array();
    for (std::uint64_t k : keys) {
      const Entry& e = tables_[lvl].at(k);
      ContextKey ck = ContextKey::unpack(k, lvl);
      json counts = json::array();
      for (TokenId t = 0; t < e.counts.size(); ++t) {
        if (e.counts[t]) counts.push_back({t, e.counts[t]});
      }
      rows.push_back({{"src", ck.src}, {"left", ck.left}, {"right", ck.right}, {"counts", counts}});
    }
    levels.push_back(std::move(rows));
  }
  std::vector<std::string> payload(vocab_.symbols().begin() + Vocab::kFirstPayload,
                                   vocab_.symbols().end());
  json doc = {{"version", kVersion},
              {"smoothing", smoothing_},
              {"backoff", backoff_},
              {"vocab", payload},
              {"levels", levels}};
  return doc.dump();
}

MlmModel MlmModel::from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("mlm checkpoint: ") + e.what());
  }
  if (!doc.is_object() || doc.value("version", "") != kVersion) {
    throw ParseError(std::string("mlm checkpoint version mismatch (expected ") + kVersion + ")");
  }
  try {
    MlmModel model(Vocab(doc.at("vocab").get<std::vector<std::string>>()),
                   doc.at("smoothing").get<double>(), doc.at("backoff").get<double>());
    const auto& levels = doc.at("levels");
    if (levels.size() != kLevels) throw ParseError("mlm checkpoint: wrong number of levels");
    for (int lvl = 0; lvl < kLevels; ++lvl) {
      for (const auto& row : levels[lvl]) {
        ContextKey key{row.at("src").get<TokenId>(), row.at("left").get<TokenId>(),
                       row.at("right").get<TokenId>(), lvl};
        Entry& e = model.tables_[lvl][key.packed()];
        e.counts.assign(model.vocab_.size(), 0);
        for (const auto& c : row.at("counts")) {
          TokenId t = c.at(0).get<TokenId>();
          if (t >= e.counts.size() || Vocab::is_sentinel(t)) {
            throw ParseError("mlm checkpoint: bad token id");
          }
          e.counts[t] = c.at(1).get<std::uint32_t>();
          e.total += e.counts[t];
        }
      }
    }
    return model;
  } catch (const json::exception& e) {
    throw ParseError(std::string("mlm checkpoint: ") + e.what());
  }
}

void MlmModel::save(const std::filesystem::path& path) const { write_text_file(path, to_json()); }

MlmModel MlmModel::load(const std::filesystem::path& path) {
  return from_json(read_text_file(path));
}

MlmModel fit(const Corpus& corpus, const MlmFitOptions& options) {
  if (corpus.empty()) throw ConfigError("cannot fit an MLM on an empty corpus");
  if (options.rounds < 1) throw ConfigError("masking rounds must be >= 1");
  MlmModel model(corpus.vocab, options.smoothing, options.backoff);
  Rng rng(derive_seed(options.seed, "mlm"));
  std::vector<std::size_t> order;
  for (std::size_t round = 0; round < options.rounds; ++round) {
    for (const auto& pair : corpus.pairs) {
      const std::size_t len = pair.target.size();
      if (len == 0) continue;
      const double ratio = rng.uniform_open_closed();
      const std::size_t n_mask =
          std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(ratio * len)), 1, len);
      order.resize(len);
      for (std::size_t j = 0; j < len; ++j) order[j] = j;
      // Partial Fisher-Yates: the first n_mask entries are the masked slots.
      for (std::size_t i = 0; i < n_mask; ++i) std::swap(order[i], order[i + rng.below(len - i)]);

      Canvas canvas = Canvas::completed(pair.source, pair.target);
      Tokens slots = pair.target;
      for (std::size_t i = 0; i < n_mask; ++i) slots[order[i]] = Vocab::kMask;
      for (std::size_t i = 0; i < n_mask; ++i) {
        const std::size_t j = order[i];
        ContextKey key;
        key.src = canvas.source_at(j);
        key.left = j == 0 ? Vocab::kPad : slots[j - 1];
        key.right = j + 1 >= len ? Vocab::kPad : slots[j + 1];
        model.observe(key, pair.target[j]);
      }
    }
  }
  return model;
}

}  // namespace demask
