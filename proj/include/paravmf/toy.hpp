#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "paravmf/corpus.hpp"
#include "paravmf/embeddings.hpp"

namespace paravmf {

/// Synthetic language pair: L2 word pi(i) translates L1 word i and word order
/// is kept. The L2 vector of a concept is its L1 vector under a random rotation
/// plus Gaussian noise, so the two spaces are related but unaligned, as
/// independently trained embeddings are.
struct ToyTaskConfig {
  std::size_t words = 50;
  std::size_t train_pairs = 200;
  std::size_t dev_sentences = 50;
  std::size_t test_sentences = 50;
  std::size_t min_length = 3;
  std::size_t max_length = 6;
  Eigen::Index dim = 32;
  double noise = 0.05;
  std::uint64_t seed = 11;
};

struct ToyTask {
  std::vector<std::string> l1_words;
  std::vector<std::string> l2_words;
  std::vector<std::size_t> mapping;  // L1 index -> L2 index
  ParallelCorpus train;
  std::vector<Sentence> dev_l1;
  ParallelCorpus test;
  WordVectors l1_vectors;
  WordVectors l2_vectors;
  Matrix rotation;  // l2 = l1 * rotation^T before noise

  Sentence translate(const Sentence& l1) const;
};

/// Train, dev and test sentences are pairwise distinct.
ToyTask make_toy_task(const ToyTaskConfig& cfg);

/// Writes train.l1/train.l2/dev.l1/test.l1/test.l2, l1.vec/l2.vec and the gold
/// lexicon gold.lex into `dir`.
void write_toy_task(const ToyTask& task, const std::filesystem::path& dir);

}  // namespace paravmf
