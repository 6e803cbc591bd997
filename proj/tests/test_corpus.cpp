#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "demask/corpus.hpp"
#include "demask/error.hpp"

using namespace demask;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "demask_test_corpus";
  std::filesystem::create_directories(dir);
  return dir / name;
}

TaskSpec spec_of(TaskKind kind, std::uint64_t seed = 7) {
  TaskSpec s;
  s.kind = kind;
  s.vocab_size = 12;
  s.len_min = 1;
  s.len_max = 9;
  s.seed = seed;
  return s;
}

}  // namespace

TEST_CASE("vocab lookup and symbol are inverse; sentinels are reserved") {
  Vocab v = Vocab::synthetic(5);
  CHECK(v.size() == 7);
  CHECK(v.payload_size() == 5);
  for (TokenId id = 0; id < v.size(); ++id) CHECK(v.lookup(v.symbol(id)) == id);
  CHECK(v.symbol(Vocab::kFirstPayload) == "t0");
  CHECK(Vocab::is_sentinel(Vocab::kMask));
  CHECK(Vocab::is_sentinel(Vocab::kPad));
  CHECK_THROWS_AS(v.lookup("t5"), std::out_of_range);
}

TEST_CASE("task mappings on hand examples") {
  const TokenId a = 2, b = 3, c = 4;
  SUBCASE("copy") {
    TaskGenerator g(spec_of(TaskKind::kCopy));
    CHECK(g.map_target({a, b, c}) == Tokens{a, b, c});
  }
  SUBCASE("reverse") {
    TaskGenerator g(spec_of(TaskKind::kReverse));
    CHECK(g.map_target({a, b, c}) == Tokens{c, b, a});
  }
  SUBCASE("reverse_cipher composes reverse then the cipher") {
    TaskGenerator g(spec_of(TaskKind::kReverseCipher));
    CHECK(g.map_target({a, b, c}) == Tokens{g.cipher(c), g.cipher(b), g.cipher(a)});
  }
  SUBCASE("swap_halves keeps the middle token for odd lengths") {
    TaskGenerator g(spec_of(TaskKind::kSwapHalves));
    const TokenId d = 5, e = 6;
    CHECK(g.map_target({a, b, c, d}) == Tokens{c, d, a, b});
    CHECK(g.map_target({a, b, c, d, e}) == Tokens{d, e, c, a, b});
    CHECK(g.map_target({a}) == Tokens{a});
  }
}

TEST_CASE("cipher is a bijection over the vocabulary") {
  for (std::uint64_t seed : {1ULL, 2ULL, 99ULL}) {
    TaskGenerator g(spec_of(TaskKind::kCipher, seed));
    std::vector<bool> hit(g.vocab().size(), false);
    for (TokenId id = 0; id < g.vocab().size(); ++id) {
      CHECK(g.decipher(g.cipher(id)) == id);
      hit[g.cipher(id)] = true;
    }
    for (bool h : hit) CHECK(h);
    CHECK(g.cipher(Vocab::kMask) == Vocab::kMask);
  }
}

TEST_CASE("generated pairs obey the task mapping, lengths and payload rules") {
  for (auto kind : {TaskKind::kCopy, TaskKind::kCipher, TaskKind::kReverse,
                    TaskKind::kReverseCipher, TaskKind::kSwapHalves}) {
    const TaskSpec spec = spec_of(kind);
    const Corpus corpus = generate_corpus(spec, 200);
    TaskGenerator g(spec);
    REQUIRE(corpus.size() == 200);
    for (const auto& p : corpus.pairs) {
      CHECK(p.source.size() == p.target.size());
      CHECK(p.source.size() >= spec.len_min);
      CHECK(p.source.size() <= spec.len_max);
      CHECK(p.task == to_string(kind));
      CHECK(g.map_target(p.source) == p.target);
      for (TokenId t : p.source) CHECK_FALSE(Vocab::is_sentinel(t));
      for (TokenId t : p.target) CHECK_FALSE(Vocab::is_sentinel(t));
    }
  }
}

TEST_CASE("generation is a pure function of task settings and example index") {
  const TaskSpec spec = spec_of(TaskKind::kReverseCipher);
  CHECK(generate_corpus(spec, 50) == generate_corpus(spec, 50));
  const Corpus tail = generate_corpus(spec, 10, 40);
  const Corpus all = generate_corpus(spec, 50);
  for (std::size_t i = 0; i < 10; ++i) CHECK(tail.pairs[i] == all.pairs[40 + i]);
  CHECK_FALSE(generate_corpus(spec_of(TaskKind::kReverseCipher, 8), 50) == all);
}

TEST_CASE("filler symbol is a fixed point and appears only inside the source") {
  TaskSpec spec = spec_of(TaskKind::kReverseCipher);
  spec.filler_rate = 0.3;
  spec.len_min = 6;
  TaskGenerator g(spec);
  CHECK(g.cipher(spec.filler()) == spec.filler());
  std::size_t fillers = 0;
  for (const auto& p : generate_corpus(spec, 300).pairs) {
    CHECK(p.source.front() != spec.filler());
    CHECK(p.source.back() != spec.filler());
    for (TokenId t : p.source) fillers += t == spec.filler();
  }
  CHECK(fillers > 100);
}

TEST_CASE("invalid task specs are configuration errors") {
  TaskSpec s = spec_of(TaskKind::kCopy);
  s.vocab_size = 1;
  CHECK_THROWS_AS(generate_corpus(s, 1), ConfigError);
  s = spec_of(TaskKind::kCopy);
  s.len_min = 5;
  s.len_max = 4;
  CHECK_THROWS_AS(generate_corpus(s, 1), ConfigError);
  CHECK_THROWS_AS(generate_corpus(spec_of(TaskKind::kCopy), 0), ConfigError);
  CHECK_THROWS_AS(parse_task_kind("rot13"), ConfigError);
}

TEST_CASE("JSONL round trip") {
  const Corpus corpus = generate_corpus(spec_of(TaskKind::kSwapHalves), 100);
  const auto path = scratch("round_trip.jsonl");
  save_corpus(corpus, path);
  CHECK(load_corpus(path, corpus.vocab) == corpus);

  const Corpus empty{corpus.vocab, {}};
  save_corpus(empty, path);
  CHECK(load_corpus(path, corpus.vocab).empty());
}

TEST_CASE("malformed corpus lines report their line number") {
  const Vocab vocab = Vocab::synthetic(4);
  const auto path = scratch("bad.jsonl");
  auto write = [&](const std::string& text) {
    std::ofstream(path) << text;
  };
  auto line_of_error = [&]() -> std::size_t {
    try {
      load_corpus(path, vocab);
    } catch (const ParseError& e) {
      return e.line();
    }
    return 0;
  };

  write("{\"src\":[\"t0\"],\"tgt\":[\"t1\"],\"task\":\"copy\"}\n"
        "{\"src\":[\"t0\"],\"task\":\"copy\"}\n");
  CHECK(line_of_error() == 2);

  write("{\"src\":[\"t0\"],\"tgt\":[\"t1\"],\"task\":\"copy\"}\n"
        "{\"src\":[\"t0\"],\"tgt\":[\"t1\"],\"task\":\"copy\"}\n"
        "{not json\n");
  CHECK(line_of_error() == 3);

  write("{\"src\":[\"t9\"],\"tgt\":[\"t1\"],\"task\":\"copy\"}\n");
  CHECK(line_of_error() == 1);

  write("{\"src\":[\"<mask>\"],\"tgt\":[\"t1\"],\"task\":\"copy\"}\n");
  CHECK(line_of_error() == 1);
}
