#include "paravmf/toy.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

namespace paravmf {

Sentence ToyTask::translate(const Sentence& l1) const {
  Sentence out;
  out.lang = Lang::L2;
  for (const auto& tok : l1.tokens) {
    auto it = std::find(l1_words.begin(), l1_words.end(), tok);
    if (it == l1_words.end()) throw ConfigError("not a toy L1 word: " + tok);
    out.tokens.push_back(l2_words[mapping[static_cast<std::size_t>(it - l1_words.begin())]]);
  }
  return out;
}

ToyTask make_toy_task(const ToyTaskConfig& cfg) {
  if (cfg.words < 2 || cfg.min_length < 1 || cfg.max_length < cfg.min_length || cfg.dim < 2) {
    throw ConfigError("invalid toy task configuration");
  }
  std::mt19937_64 rng(cfg.seed);
  ToyTask task;
  for (std::size_t i = 0; i < cfg.words; ++i) {
    task.l1_words.push_back(fmt::format("en{:02d}", i));
    task.l2_words.push_back(fmt::format("fr{:02d}", i));
  }
  task.mapping.resize(cfg.words);
  std::iota(task.mapping.begin(), task.mapping.end(), std::size_t{0});
  std::shuffle(task.mapping.begin(), task.mapping.end(), rng);

  std::normal_distribution<double> normal(0.0, 1.0);
  auto gaussian = [&](Eigen::Index n) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(rng);
    return v;
  };
  Eigen::MatrixXd raw(cfg.dim, cfg.dim);
  for (Eigen::Index i = 0; i < raw.size(); ++i) raw.data()[i] = normal(rng);
  task.rotation = Eigen::HouseholderQR<Eigen::MatrixXd>(raw).householderQ() * Eigen::MatrixXd::Identity(cfg.dim, cfg.dim);
  task.l1_vectors.words = task.l1_words;
  task.l2_vectors.words = task.l2_words;
  task.l1_vectors.vectors.resize(static_cast<Eigen::Index>(cfg.words), cfg.dim);
  task.l2_vectors.vectors.resize(static_cast<Eigen::Index>(cfg.words), cfg.dim);
  const double sigma = cfg.noise / std::sqrt(static_cast<double>(cfg.dim));
  for (std::size_t i = 0; i < cfg.words; ++i) {
    const Vector e1 = gaussian(cfg.dim).normalized();
    const Vector e2 = (task.rotation * e1 + sigma * gaussian(cfg.dim)).normalized();
    task.l1_vectors.vectors.row(static_cast<Eigen::Index>(i)) = e1.transpose();
    task.l2_vectors.vectors.row(static_cast<Eigen::Index>(task.mapping[i])) = e2.transpose();
  }

  std::uniform_int_distribution<std::size_t> length(cfg.min_length, cfg.max_length);
  std::uniform_int_distribution<std::size_t> word(0, cfg.words - 1);
  // Training words come from reshuffled decks of the whole vocabulary, so every
  // word is seen about equally often; held-out words are uniform draws.
  std::vector<std::size_t> deck;
  auto deck_word = [&] {
    if (deck.empty()) {
      deck.resize(cfg.words);
      std::iota(deck.begin(), deck.end(), std::size_t{0});
      std::shuffle(deck.begin(), deck.end(), rng);
    }
    const std::size_t w = deck.back();
    deck.pop_back();
    return w;
  };
  std::set<std::vector<std::string>> seen;
  auto fresh_sentence = [&](bool from_deck) {
    for (;;) {
      Sentence s;
      s.lang = Lang::L1;
      const std::size_t n = length(rng);
      for (std::size_t i = 0; i < n; ++i) s.tokens.push_back(task.l1_words[from_deck ? deck_word() : word(rng)]);
      if (seen.insert(s.tokens).second) return s;
    }
  };
  for (std::size_t i = 0; i < cfg.train_pairs; ++i) {
    Sentence s = fresh_sentence(true);
    task.train.l2.push_back(task.translate(s));
    task.train.l1.push_back(std::move(s));
  }
  for (std::size_t i = 0; i < cfg.dev_sentences; ++i) task.dev_l1.push_back(fresh_sentence(false));
  for (std::size_t i = 0; i < cfg.test_sentences; ++i) {
    Sentence s = fresh_sentence(false);
    task.test.l2.push_back(task.translate(s));
    task.test.l1.push_back(std::move(s));
  }
  return task;
}

namespace {

void write_lines(const std::filesystem::path& path, const std::vector<Sentence>& sentences) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& s : sentences) {
    for (std::size_t i = 0; i < s.tokens.size(); ++i) out << (i ? " " : "") << s.tokens[i];
    out << '\n';
  }
}

}  // namespace

void write_toy_task(const ToyTask& task, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_lines(dir / "train.l1", task.train.l1);
  write_lines(dir / "train.l2", task.train.l2);
  write_lines(dir / "dev.l1", task.dev_l1);
  write_lines(dir / "test.l1", task.test.l1);
  write_lines(dir / "test.l2", task.test.l2);
  {
    std::ofstream out(dir / "l1.vec");
    write_word_vectors(out, task.l1_vectors.words, task.l1_vectors.vectors);
  }
  {
    std::ofstream out(dir / "l2.vec");
    write_word_vectors(out, task.l2_vectors.words, task.l2_vectors.vectors);
  }
  std::ofstream lex(dir / "gold.lex");
  for (std::size_t i = 0; i < task.l1_words.size(); ++i) {
    lex << task.l2_words[task.mapping[i]] << '\t' << task.l1_words[i] << "\t1\n";
  }
}

}  // namespace paravmf
