#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "generators.hpp"
#include "paravmf/corpus.hpp"

using namespace paravmf;

namespace {

using Toks = std::vector<std::string>;

Toks tok(std::string_view text, Lang lang = Lang::L1) { return tokenize(text, lang).tokens; }

ParallelCorpus small_corpus(std::size_t n) {
  ParallelCorpus c;
  for (std::size_t i = 0; i < n; ++i) {
    c.l1.push_back(Sentence{{"a" + std::to_string(i), "b", "c"}, Lang::L1});
    c.l2.push_back(Sentence{{"x" + std::to_string(i), "y"}, Lang::L2});
  }
  return c;
}

}  // namespace

TEST_CASE("tokenizer splits punctuation and keeps numbers and inner hyphens") {
  CHECK(tok("Hello, world!") == Toks{"Hello", ",", "world", "!"});
  CHECK(tok("It costs 3.50 or 1,000 dollars.") == Toks{"It", "costs", "3.50", "or", "1,000", "dollars", "."});
  CHECK(tok("a well-known fact -- really...") == Toks{"a", "well-known", "fact", "--", "really", "..."});
  CHECK(tok("  spaced\tout \n") == Toks{"spaced", "out"});
  CHECK(tok("").empty());
  CHECK(tok("«Oui» dit-il…", Lang::L2) == Toks{"«", "Oui", "»", "dit-il", "…"});
}

TEST_CASE("tokenizer splits clitics in both directions") {
  CHECK(tok("don't") == Toks{"do", "n't"});
  CHECK(tok("John's they're we've I'll she'd I'm") ==
        Toks{"John", "'s", "they", "'re", "we", "'ve", "I", "'ll", "she", "'d", "I", "'m"});
  CHECK(tok("l'homme qu'il jusqu'ici", Lang::L2) == Toks{"l'", "homme", "qu'", "il", "jusqu'", "ici"});
  CHECK(tok("'quoted'") == Toks{"'", "quoted", "'"});
  CHECK(tok("L'arbre", Lang::L2) == Toks{"L'", "arbre"});
}

TEST_CASE("truecasing uses the most frequent mid-sentence form") {
  const std::vector<Sentence> corpus{
      {{"The", "cat", "saw", "Paris"}, Lang::L1},
      {{"Then", "the", "dog", "left"}, Lang::L1},
      {{"In", "Paris", "the", "rain"}, Lang::L1},
  };
  const CaseModel model = CaseModel::train(corpus);
  CHECK(model.best_casing("PARIS") == std::optional<std::string>("Paris"));
  CHECK(model.apply(Sentence{{"The", "dog"}, Lang::L1}).tokens == Toks{"the", "dog"});
  CHECK(model.apply(Sentence{{"paris", "is"}, Lang::L1}).tokens == Toks{"Paris", "is"});
  CHECK(model.apply(Sentence{{"Unseen", "word"}, Lang::L1}).tokens == Toks{"unseen", "word"});
  CHECK(model.apply(Sentence{}).tokens.empty());

  std::stringstream buf;
  model.write_tsv(buf);
  const CaseModel back = CaseModel::read_tsv(buf);
  CHECK(back.best_casing("the") == model.best_casing("the"));
  CHECK(back.best_casing("paris") == model.best_casing("paris"));
  std::stringstream bad("no tab here\n");
  CHECK_THROWS_AS(CaseModel::read_tsv(bad), FormatError);
}

TEST_CASE("vocabulary is frequency sorted with stable ties and skips specials") {
  const std::vector<Sentence> corpus{
      {{"b", "a", "c", "a", "</s>"}, Lang::L1},
      {{"c", "d"}, Lang::L1},
      {{"zz"}, Lang::L2},
  };
  const auto v = build_vocab(corpus, Lang::L1, 10);
  REQUIRE(v.size() == 4);
  CHECK(v[0] == VocabEntry{"a", 2});
  CHECK(v[1] == VocabEntry{"c", 2});
  CHECK(v[2] == VocabEntry{"b", 1});
  CHECK(v[3] == VocabEntry{"d", 1});
  CHECK(build_vocab(corpus, Lang::L1, 2).size() == 2);
  CHECK_THROWS_AS(build_vocab(corpus, Lang::L1, 0), ConfigError);

  std::stringstream buf;
  write_vocab_tsv(buf, v);
  CHECK(read_vocab_tsv(buf) == v);
}

TEST_CASE("combined vocabulary layout and lookups") {
  const Vocabulary vocab({{"the", 5}, {"chat", 2}}, {{"le", 4}, {"chat", 3}});
  CHECK(vocab.size() == 9);
  CHECK(vocab.find("the", Lang::L1) == std::optional<TokenId>(5));
  CHECK(vocab.find("chat", Lang::L1) == std::optional<TokenId>(6));
  CHECK(vocab.find("chat", Lang::L2) == std::optional<TokenId>(8));
  CHECK(vocab.id("missing", Lang::L1) == Vocabulary::kUnk);
  CHECK(vocab.id("<2L2>", Lang::L1) == Vocabulary::kStartL2);
  CHECK(vocab.lang_of(2) == std::nullopt);
  CHECK(vocab.lang_of(6) == std::optional<Lang>(Lang::L1));
  CHECK(vocab.lang_of(7) == std::optional<Lang>(Lang::L2));
  CHECK(vocab.lang_begin(Lang::L2) == 7);
  CHECK(vocab.lang_end(Lang::L2) == 9);
  CHECK(vocab.lang_words(Lang::L2) == Toks{"le", "chat"});
  CHECK(vocab.ids(Sentence{{"le", "chien"}, Lang::L2}) == std::vector<TokenId>{7, Vocabulary::kUnk});

  std::stringstream buf;
  vocab.write_tsv(buf);
  const Vocabulary back = Vocabulary::read_tsv(buf);
  CHECK(back.size() == vocab.size());
  for (TokenId i = 0; i < static_cast<TokenId>(vocab.size()); ++i) {
    CHECK(back.token(i) == vocab.token(i));
    CHECK(back.freq(i) == vocab.freq(i));
  }
  CHECK_THROWS_AS(Vocabulary({{"a", 1}, {"a", 1}}, {}), ConfigError);
  CHECK_THROWS_AS(Vocabulary({{"<unk>", 1}}, {}), ConfigError);
  std::stringstream headless("a\t0\t1\n");
  CHECK_THROWS_AS(Vocabulary::read_tsv(headless), FormatError);
}

TEST_CASE("noise keeps order within the window") {
  gen::Rng rng(4);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = gen::uniform(rng, 0, 12);
    Toks in;
    for (std::size_t i = 0; i < n; ++i) in.push_back(std::to_string(i));
    const std::size_t k = gen::uniform(rng, 1, 4);
    const double p = gen::uniform_real(rng, 0.0, 0.5);
    const Toks out = add_noise(in, p, k, rng());
    CHECK(out.size() <= in.size());
    // Survivors in original order, then check each one's displacement.
    std::vector<std::size_t> kept;
    for (const auto& t : out) kept.push_back(std::stoul(t));
    std::vector<std::size_t> sorted = kept;
    std::sort(sorted.begin(), sorted.end());
    CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
    for (std::size_t pos = 0; pos < kept.size(); ++pos) {
      const std::size_t orig = static_cast<std::size_t>(std::find(sorted.begin(), sorted.end(), kept[pos]) - sorted.begin());
      CHECK(std::max(pos, orig) - std::min(pos, orig) <= k - 1);
    }
  }
  CHECK(add_noise({"a", "b", "c"}, 0.0, 1, 3) == Toks{"a", "b", "c"});
  CHECK_THROWS_AS(add_noise({"a"}, 1.0, 1, 3), ConfigError);
  CHECK_THROWS_AS(add_noise({"a"}, 0.1, 0, 3), ConfigError);
}

TEST_CASE("task stream composition and invariants") {
  const ParallelCorpus corpus = small_corpus(200);
  const TaskStream stream(corpus, AeAmount::of_fraction(0.01), NoiseConfig{}, 5);
  CHECK(stream.count(TaskKind::S2T) == 200);
  CHECK(stream.count(TaskKind::T2S) == 200);
  CHECK(stream.count(TaskKind::AE) == 2);
  for (const auto& ex : stream.epoch(0)) {
    REQUIRE_FALSE(ex.source.tokens.empty());
    CHECK(ex.source.tokens[0] == Vocabulary::start_spelling(ex.target.lang));
    if (ex.kind == TaskKind::AE) {
      CHECK(ex.target.lang == Lang::L1);
      CHECK(Toks(ex.source.tokens.begin() + 1, ex.source.tokens.end()) == ex.target.tokens);
    }
    if (ex.kind == TaskKind::S2T) CHECK(ex.target.lang == Lang::L2);
    if (ex.kind == TaskKind::T2S) CHECK(ex.target.lang == Lang::L1);
  }
  // Same seed, same stream; a different epoch reshuffles.
  const TaskStream again(corpus, AeAmount::of_fraction(0.01), NoiseConfig{}, 5);
  CHECK(again.ae_indices() == stream.ae_indices());
  const auto e0 = stream.epoch(0), e1 = stream.epoch(1);
  CHECK(e0.size() == e1.size());
  bool differs = false;
  for (std::size_t i = 0; i < e0.size(); ++i) differs |= !(e0[i].source == e1[i].source);
  CHECK(differs);
}

TEST_CASE("autoencoding amount resolution") {
  bool clamped = false;
  CHECK(AeAmount::of_fraction(0.01).resolve(1000, &clamped) == 10);
  CHECK_FALSE(clamped);
  CHECK(AeAmount::of_fraction(0.01).resolve(20, &clamped) == 1);
  CHECK(clamped);
  CHECK(AeAmount::of_fraction(0.0).resolve(20) == 0);
  CHECK(AeAmount::of_count(7).resolve(20) == 7);
  CHECK_THROWS_AS(AeAmount::of_count(21).resolve(20), ConfigError);
  CHECK_THROWS_AS(AeAmount::of_fraction(1.5).resolve(20), ConfigError);
  CHECK_THROWS_AS((AeAmount{0.1, 3}).resolve(20), ConfigError);
  const TaskStream none(small_corpus(50), AeAmount::of_count(0), NoiseConfig{}, 1);
  CHECK(none.count(TaskKind::AE) == 0);
  const TaskStream one_way(small_corpus(50), AeAmount::of_count(5), NoiseConfig{}, 1, TaskMix{true, false});
  CHECK(one_way.count(TaskKind::T2S) == 0);
  CHECK(one_way.size() == 55);
}

TEST_CASE("noisy autoencoding sources keep their start token") {
  const TaskStream stream(small_corpus(100), AeAmount::of_fraction(0.5), NoiseConfig{true, 0.3, 3}, 2);
  for (const auto& ex : stream.epoch(3)) {
    CHECK(ex.source.tokens[0] == Vocabulary::start_spelling(ex.target.lang));
    if (ex.kind == TaskKind::AE) CHECK(ex.source.tokens.size() <= ex.target.tokens.size() + 1);
  }
}

TEST_CASE("batches respect the token budget and cover every example") {
  gen::Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<TaskExample> stream;
    const std::size_t n = gen::uniform(rng, 0, 60);
    for (std::size_t i = 0; i < n; ++i) {
      Sentence src{Toks(gen::uniform(rng, 0, 10), "s"), Lang::L1};
      Sentence tgt{Toks(gen::uniform(rng, 0, 10), "t"), Lang::L2};
      stream.push_back(make_example(src, tgt, TaskKind::S2T));
    }
    const std::size_t budget = gen::uniform(rng, 4, 40);
    const BatchingResult r = make_batches(stream, budget);
    std::size_t covered = 0;
    std::size_t last_len = 0;
    for (const auto& b : r.batches) {
      CHECK_FALSE(b.examples.empty());
      CHECK(b.target_tokens() <= budget);
      for (std::size_t i = 0; i < b.examples.size(); ++i) {
        CHECK(b.examples[i].target.length() >= last_len);
        last_len = b.examples[i].target.length();
        CHECK(b.examples[i].target.length() <= b.padded_target_length);
        CHECK(b.examples[i].source.length() <= b.padded_source_length);
        CHECK(b.target_is_pad(i, b.examples[i].target.length()));
      }
      covered += b.examples.size();
    }
    std::size_t too_long = 0;
    for (const auto& ex : stream) too_long += ex.target.length() > budget ? 1 : 0;
    CHECK(r.skipped == too_long);
    CHECK(covered + r.skipped == stream.size());
  }
}

TEST_CASE("parallel files must be line aligned") {
  const auto dir = std::filesystem::temp_directory_path() / "paravmf_corpus_test";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "a.txt") << "one\ntwo\n";
  std::ofstream(dir / "b.txt") << "un\n";
  std::ofstream(dir / "c.txt") << "un\ndeux\n";
  CHECK_THROWS_AS(read_parallel(dir / "a.txt", dir / "b.txt"), FormatError);
  const ParallelCorpus ok = read_parallel(dir / "a.txt", dir / "c.txt");
  CHECK(ok.size() == 2);
  CHECK(ok.l2[1].lang == Lang::L2);
  CHECK_THROWS_AS(read_sentences(dir / "missing.txt", Lang::L1), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("language ids") {
  CHECK(parse_lang("L2") == Lang::L2);
  CHECK(parse_lang("l1") == Lang::L1);
  CHECK_THROWS_AS(parse_lang("fr"), ConfigError);
  CHECK(other(Lang::L1) == Lang::L2);
}
