#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "demask/corpus.hpp"
#include "demask/error.hpp"
#include "demask/mlm.hpp"
#include "demask/rng.hpp"

using namespace demask;

namespace {

constexpr TokenId A = 2, B = 3, C = 4;

double mass(const PositionBelief& b) {
  double s = 0.0;
  for (double p : b.dist) s += p;
  return s;
}

MlmModel small_fit(std::uint64_t seed = 5) {
  TaskSpec spec;
  spec.kind = TaskKind::kReverseCipher;
  spec.vocab_size = 8;
  spec.len_min = 3;
  spec.len_max = 8;
  spec.seed = seed;
  MlmFitOptions opt;
  opt.rounds = 5;
  opt.seed = seed;
  return fit(generate_corpus(spec, 300), opt);
}

}  // namespace

TEST_CASE("canvas bookkeeping") {
  Canvas c({A, B, C}, 4);
  CHECK(c.masked_count() == 4);
  CHECK(c.source_at(3) == Vocab::kPad);
  c.fill(2, A);
  CHECK(c.step() == 1);
  CHECK(c.masked_positions() == std::vector<std::size_t>{0, 1, 3});
  CHECK(c.leftmost_mask() == 0);
  CHECK(c.rightmost_mask() == 3);
  CHECK_THROWS_AS(c.fill(2, B), StateError);
  CHECK_THROWS_AS(c.fill(9, B), StateError);
  CHECK_THROWS_AS(c.fill(1, Vocab::kMask), StateError);
  c.fill(0, A);
  c.fill(1, A);
  c.fill(3, A);
  CHECK(c.complete());
  CHECK_THROWS_AS(c.leftmost_mask(), StateError);
}

TEST_CASE("context key reads source, left and right neighbours") {
  Canvas c({A, B, C}, 3);
  c.fill(0, C);
  const ContextKey k = context_key(c, 1);
  CHECK(k.src == B);
  CHECK(k.left == C);
  CHECK(k.right == Vocab::kMask);
  const ContextKey edge = context_key(c, 2);
  CHECK(edge.right == Vocab::kPad);
  for (int lvl = 0; lvl < MlmModel::kLevels; ++lvl) {
    CHECK(ContextKey::unpack(k.at_level(lvl).packed(), lvl).packed() == k.at_level(lvl).packed());
  }
}

TEST_CASE("add-k estimate at the exact context") {
  MlmModel m(Vocab::synthetic(2), 0.1, 0.4);
  const ContextKey key{A, Vocab::kPad, Vocab::kMask, 0};
  for (int i = 0; i < 3; ++i) m.observe(key, A);
  m.observe(key, B);
  const PositionBelief b = m.belief(key);
  CHECK(b.level == 0);
  CHECK(b.dist[A] == doctest::Approx(3.1 / 4.2).epsilon(1e-12));
  CHECK(b.dist[B] == doctest::Approx(1.1 / 4.2).epsilon(1e-12));
  CHECK(b.dist[Vocab::kPad] == 0.0);
  CHECK(b.dist[Vocab::kMask] == 0.0);
  CHECK(b.greedy_tok == A);
  CHECK(b.greedy_logp == doctest::Approx(std::log(3.1 / 4.2)));
  const double h = -(3.1 / 4.2) * std::log(3.1 / 4.2) - (1.1 / 4.2) * std::log(1.1 / 4.2);
  CHECK(b.entropy == doctest::Approx(h).epsilon(1e-12));
}

TEST_CASE("unseen contexts back off level by level") {
  MlmModel m(Vocab::synthetic(3), 0.0, 0.4);
  m.observe({A, B, C, 0}, C);
  m.observe({B, A, A, 0}, A);
  // same src and left, new right: level 1
  auto b = m.belief(ContextKey{A, B, A, 0});
  CHECK(b.level == 1);
  CHECK(b.dist[C] == 1.0);
  // same src and right, new left: level 2
  b = m.belief(ContextKey{A, A, C, 0});
  CHECK(b.level == 2);
  // only the source matches: level 3
  b = m.belief(ContextKey{A, A, A, 0});
  CHECK(b.level == 3);
  CHECK(b.dist[C] == 1.0);
  // unseen source: unigram level
  b = m.belief(ContextKey{C, A, A, 0});
  CHECK(b.level == 4);
  CHECK(b.dist[A] == doctest::Approx(0.5));
  CHECK(b.dist[C] == doctest::Approx(0.5));
}

TEST_CASE("empty model gives the uniform payload distribution") {
  MlmModel m(Vocab::synthetic(4));
  const auto b = m.belief(ContextKey{A, A, A, 0});
  for (TokenId t = Vocab::kFirstPayload; t < 6; ++t) CHECK(b.dist[t] == doctest::Approx(0.25));
  CHECK(b.greedy_tok == Vocab::kFirstPayload);
}

TEST_CASE("fitted beliefs normalize and exclude sentinels on random canvases") {
  const MlmModel m = small_fit();
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t len = 1 + rng.below(9);
    Tokens src(1 + rng.below(9));
    for (auto& t : src) t = static_cast<TokenId>(2 + rng.below(8));
    Canvas c(src, len);
    const std::size_t fills = rng.below(len);
    for (std::size_t k = 0; k < fills; ++k) {
      auto masked = c.masked_positions();
      c.fill(masked[rng.below(masked.size())], static_cast<TokenId>(2 + rng.below(8)));
    }
    for (const auto& b : m.beliefs(c)) {
      CHECK(c.is_masked(b.position));
      CHECK(std::abs(mass(b) - 1.0) <= 1e-12);
      CHECK(b.dist[Vocab::kPad] == 0.0);
      CHECK(b.dist[Vocab::kMask] == 0.0);
      CHECK(b.entropy >= 0.0);
      CHECK(b.entropy <= std::log(8.0) + 1e-12);
    }
  }
}

TEST_CASE("pseudo log-likelihood") {
  SUBCASE("certain model scores 0") {
    MlmModel m(Vocab::synthetic(2), 0.0);
    Canvas done = Canvas::completed({A}, {A});
    m.observe(context_key(done, 0), A);
    CHECK(m.pseudo_loglik(done) == 0.0);
  }
  SUBCASE("even split scores ln 0.5 per token") {
    MlmModel m(Vocab::synthetic(2), 0.0);
    Canvas done = Canvas::completed({A, A}, {A, B});
    for (std::size_t j = 0; j < 2; ++j) {
      m.observe(context_key(done, j), A);
      m.observe(context_key(done, j), B);
    }
    CHECK(m.pseudo_loglik(done) == doctest::Approx(std::log(0.5)).epsilon(1e-12));
  }
  SUBCASE("incomplete canvas is a state error") {
    MlmModel m(Vocab::synthetic(2));
    CHECK_THROWS_AS(m.pseudo_loglik(Canvas({A}, 2)), StateError);
  }
}

TEST_CASE("fit is deterministic and serialization round-trips") {
  const MlmModel a = small_fit(5);
  const MlmModel b = small_fit(5);
  CHECK(a.to_json() == b.to_json());
  CHECK(a.num_keys(4) == 1);
  CHECK(a.num_keys(0) > a.num_keys(3));

  const auto path = std::filesystem::temp_directory_path() / "demask_test_mlm.json";
  a.save(path);
  const MlmModel c = MlmModel::load(path);
  CHECK(c.to_json() == a.to_json());
  CHECK(c.smoothing() == a.smoothing());
}

TEST_CASE("invalid model inputs") {
  CHECK_THROWS_AS(MlmModel(Vocab::synthetic(2), -1.0), ConfigError);
  CHECK_THROWS_AS(MlmModel(Vocab::synthetic(2), 0.1, 0.0), ConfigError);
  MlmModel m(Vocab::synthetic(2));
  CHECK_THROWS_AS(m.observe(ContextKey{}, Vocab::kMask), ArgumentError);
  CHECK_THROWS_AS(fit(Corpus{Vocab::synthetic(2), {}}, MlmFitOptions{}), ConfigError);
  CHECK_THROWS(MlmModel::from_json("{\"version\":\"mlm-v0\"}"));
}
