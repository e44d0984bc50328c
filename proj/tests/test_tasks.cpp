#include "seqfuse/metrics.hpp"
#include "seqfuse/task.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <fstream>
#include <map>
#include <sstream>

using namespace seqfuse;

namespace {

TaskConfig small_task() {
  TaskConfig c;
  c.vocab_size = 6;
  c.n_train = 30;
  c.n_dev = 10;
  c.n_test = 10;
  c.n_text_only = 50;
  c.seed = 9;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool same_utterances(const std::vector<Utterance>& a, const std::vector<Utterance>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].id != b[i].id || a[i].tokens != b[i].tokens || a[i].feats != b[i].feats) return false;
  return true;
}

TokenSeq seq(std::initializer_list<TokenId> t) { return t; }

}  // namespace

TEST_CASE("generated datasets are reproducible") {
  const Dataset a = generate_dataset(small_task());
  const Dataset b = generate_dataset(small_task());
  CHECK(same_utterances(a.train, b.train));
  CHECK(same_utterances(a.dev, b.dev));
  CHECK(same_utterances(a.test, b.test));
  CHECK(a.text_only == b.text_only);

  const auto da = testing::scratch_dir("gen_a");
  const auto db = testing::scratch_dir("gen_b");
  write_dataset(da, a);
  write_dataset(db, b);
  for (const char* f : {"train.jsonl", "dev.jsonl", "test.jsonl", "text.txt", "vocab.txt"})
    CHECK(slurp(da / f) == slurp(db / f));

  TaskConfig other = small_task();
  other.seed = 10;
  CHECK(generate_dataset(other).text_only != a.text_only);
}

TEST_CASE("dataset shape") {
  const TaskConfig cfg = small_task();
  const Dataset ds = generate_dataset(cfg);
  CHECK(ds.train.size() == 30);
  CHECK(ds.dev.size() == 10);
  CHECK(ds.test.size() == 10);
  CHECK(ds.text_only.size() == 50);
  REQUIRE(ds.vocab.size() == 6);
  for (const auto* split : {&ds.train, &ds.dev, &ds.test})
    for (const auto& u : *split) {
      CHECK(is_eos_terminated(u.tokens));
      CHECK(u.tokens.size() >= 2);
      CHECK(static_cast<int>(u.tokens.size()) <= cfg.max_sentence_len + 1);
      CHECK(u.feats.rows() == cfg.frames_per_token * static_cast<Index>(u.tokens.size() - 1));
      CHECK(u.feats.cols() == cfg.feature_dim);
      for (TokenId w : u.tokens) CHECK((w >= 0 && w < cfg.vocab_size));
    }
  for (const auto& s : ds.text_only) CHECK(is_eos_terminated(s));
  CHECK(&ds.split("dev") == &ds.dev);
  CHECK_THROWS_AS(ds.split("eval"), ArgumentError);
}

TEST_CASE("noise-free single-frame features are the token prototypes") {
  TaskConfig cfg = small_task();
  cfg.noise_std = 0.0;
  cfg.frames_per_token = 1;
  const Dataset ds = generate_dataset(cfg);
  std::map<TokenId, RowVecX> seen;
  int repeats = 0;
  for (const auto& u : ds.train)
    for (std::size_t n = 0; n + 1 < u.tokens.size(); ++n) {
      const RowVecX f = u.feats.row(static_cast<Index>(n));
      auto [it, fresh] = seen.emplace(u.tokens[n], f);
      if (!fresh) {
        CHECK(it->second == f);
        ++repeats;
      }
    }
  CHECK(repeats > 0);
  CHECK(seen.size() > 1);
  // Distinct tokens get distinct prototypes.
  for (auto a = seen.begin(); a != seen.end(); ++a)
    for (auto b = std::next(a); b != seen.end(); ++b) CHECK(a->second != b->second);
}

TEST_CASE("text source follows its transition matrix") {
  // Law of large numbers: 10k sentences, no forced truncation. A small
  // vocabulary keeps every context row well populated.
  TaskConfig cfg;
  cfg.vocab_size = 4;
  cfg.max_sentence_len = 200;
  cfg.n_train = 0;
  cfg.n_dev = 0;
  cfg.n_test = 0;
  cfg.n_text_only = 10000;
  cfg.seed = 5;
  const Dataset ds = generate_dataset(cfg);
  const MarkovSource src(cfg);

  std::map<TokenId, RowVecX> counts;
  for (const auto& s : ds.text_only) {
    TokenId prev = kBos;
    for (TokenId w : s) {
      auto [it, fresh] = counts.try_emplace(prev, RowVecX::Zero(cfg.vocab_size));
      it->second(w) += 1.0;
      prev = w;
    }
  }
  CHECK(counts.size() == static_cast<std::size_t>(cfg.vocab_size));  // BOS + 3 content contexts
  for (const auto& [ctx, c] : counts) {
    const RowVecX& p = src.transition({ctx});
    CHECK(std::abs(p.sum() - 1.0) < 1e-12);
    const double tv = 0.5 * (c / c.sum() - p).cwiseAbs().sum();
    CHECK_MESSAGE(tv <= 0.02, "context " << ctx << " tv " << tv << " over " << c.sum() << " events");
  }
  CHECK(src.transition({kBos})(kEos) == 0.0);
  CHECK_THROWS_AS(src.transition({0}), ArgumentError);
}

TEST_CASE("task config validation") {
  auto bad = [](auto mutate) {
    TaskConfig c = small_task();
    mutate(c);
    return c;
  };
  CHECK_THROWS_AS(generate_dataset(bad([](TaskConfig& c) { c.vocab_size = 1; })), ArgumentError);
  CHECK_THROWS_AS(generate_dataset(bad([](TaskConfig& c) { c.frames_per_token = 0; })), ArgumentError);
  CHECK_THROWS_AS(generate_dataset(bad([](TaskConfig& c) { c.noise_std = -1; })), ArgumentError);
  CHECK_THROWS_AS(generate_dataset(bad([](TaskConfig& c) { c.n_text_only = 10; })), ArgumentError);
  CHECK_NOTHROW(generate_dataset(bad([](TaskConfig& c) { c.vocab_size = 2; })));
}

TEST_CASE("levenshtein examples") {
  CHECK(levenshtein(seq({1, 2, 3}), seq({1, 2, 3})).distance == 0);
  const EditCounts sub = levenshtein(seq({1, 2, 3}), seq({1, 4, 3}));
  CHECK(sub.distance == 1);
  CHECK(sub.substitutions == 1);
  const EditCounts shift = levenshtein(seq({1, 2, 3, 4}), seq({2, 3, 4, 5}));
  CHECK(shift.distance == 2);
  CHECK(shift.deletions == 1);
  CHECK(shift.insertions == 1);
  CHECK(shift.substitutions == 0);
  CHECK(levenshtein({}, {}).distance == 0);
  CHECK(levenshtein({}, seq({1, 2})).insertions == 2);
  CHECK(levenshtein(seq({1, 2}), {}).deletions == 2);
}

TEST_CASE("levenshtein matches the naive recurrence") {
  const auto strings = testing::all_strings(3, 4);
  for (const auto& a : strings)
    for (const auto& b : strings) {
      const EditCounts e = levenshtein(a, b);
      REQUIRE(e.distance == testing::naive_edit_distance(a, b));
      REQUIRE(e.substitutions + e.insertions + e.deletions == e.distance);
      REQUIRE(static_cast<int>(b.size()) == static_cast<int>(a.size()) - e.deletions + e.insertions);
    }
}

TEST_CASE("levenshtein is a metric") {
  Rng rng(4);
  std::uniform_int_distribution<int> len(0, 7), tok(1, 3);
  auto draw = [&] {
    TokenSeq s(static_cast<std::size_t>(len(rng)));
    for (auto& w : s) w = tok(rng);
    return s;
  };
  for (int i = 0; i < 2000; ++i) {
    const TokenSeq a = draw(), b = draw(), c = draw();
    const int ab = levenshtein(a, b).distance;
    CHECK(ab == levenshtein(b, a).distance);
    CHECK((ab == 0) == (a == b));
    CHECK(levenshtein(a, c).distance <= ab + levenshtein(b, c).distance);
  }
}

TEST_CASE("corpus WER pools errors") {
  CHECK(corpus_wer({{seq({1, 2}), seq({1, 2})}, {seq({3}), seq({3})}}).wer == 0.0);
  CHECK(corpus_wer({{seq({1, 2, 3, 4}), seq({1, 2, 5, 4})}}).wer == 25.0);
  const WerReport r =
      corpus_wer({{seq({1, 2, 3, 4}), seq({1, 2, 3})}, {seq({1, 2, 3, 4, 5, 6}), seq({1, 2, 3, 4, 5, 6})}});
  CHECK(r.wer == doctest::Approx(10.0).epsilon(1e-15));
  CHECK(r.ref_tokens == 10);
  CHECK(r.errors.deletions == 1);
  CHECK_THROWS_AS(corpus_wer({}), ArgumentError);
  CHECK_THROWS_AS(corpus_wer({{TokenSeq{}, seq({1})}}), ArgumentError);
  CHECK(strip_eos(seq({3, 1, 0})) == seq({3, 1}));
  CHECK(strip_eos(seq({3, 1})) == seq({3, 1}));
}

TEST_CASE("file round trips") {
  const auto dir = testing::scratch_dir("io");
  const Dataset ds = generate_dataset(small_task());
  write_utterances(dir / "u.jsonl", ds.train);
  CHECK(same_utterances(read_utterances(dir / "u.jsonl"), ds.train));  // bit-exact doubles
  write_text(dir / "t.txt", ds.text_only);
  CHECK(read_text(dir / "t.txt") == ds.text_only);
  write_vocab(dir / "v.txt", ds.vocab);
  CHECK(read_vocab(dir / "v.txt") == ds.vocab);
  CHECK(ds.vocab.front() == "</s>");

  SUBCASE("malformed input is a data error") {
    std::ofstream(dir / "bad.jsonl") << "{\"id\": \"x\", \"tokens\": [1, 2], \"feats\": []}\n";
    CHECK_THROWS_AS(read_utterances(dir / "bad.jsonl"), DataError);
    std::ofstream(dir / "ragged.jsonl") << "{\"id\": \"x\", \"tokens\": [1, 0], \"feats\": [[1, 2], [3]]}\n";
    CHECK_THROWS_AS(read_utterances(dir / "ragged.jsonl"), DataError);
    std::ofstream(dir / "bad.txt") << "1 two 0\n";
    CHECK_THROWS_AS(read_text(dir / "bad.txt"), DataError);
    CHECK_THROWS_AS(read_utterances(dir / "missing.jsonl"), DataError);
  }
}
