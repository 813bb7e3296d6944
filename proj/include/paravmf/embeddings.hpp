#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "paravmf/common.hpp"
#include "paravmf/corpus.hpp"

namespace paravmf {

/// Unit-normalized word vectors, one row per vocabulary entry.
struct EmbeddingTable {
  Lang lang = Lang::L1;
  Matrix vectors;
  std::vector<std::string> words;
  std::size_t fallback_count = 0;

  Eigen::Index dim() const { return vectors.cols(); }
  Eigen::Index rows() const { return vectors.rows(); }
};

/// Deterministic pseudo-random unit vector derived from the word spelling.
Vector fallback_vector(std::string_view word, Eigen::Index dim);

/// Raw word-vector text file: optional "count dim" header, then `word v1 ... vd`.
struct WordVectors {
  std::vector<std::string> words;
  Matrix vectors;  // not normalized
};
WordVectors read_word_vectors(std::istream& in);
WordVectors read_word_vectors(const std::filesystem::path& path);
void write_word_vectors(std::ostream& out, const std::vector<std::string>& words, const Matrix& vectors);

/// Rows for `words` in order, taken from the file when present (first
/// occurrence wins) and unit-normalized; missing words get fallback vectors and
/// are counted. Zero-norm vectors also fall back.
EmbeddingTable make_table(const WordVectors& source, const std::vector<std::string>& words, Lang lang);
EmbeddingTable load_embeddings(const std::filesystem::path& path, const std::vector<std::string>& words, Lang lang);

/// Row-wise unit normalization; zero rows are left at zero.
void normalize_rows(Matrix& m);

/// Orthogonal map applied as `aligned = source_rows * w` (rows are vectors).
struct AlignmentMap {
  Matrix w;

  Matrix apply(const Matrix& rows) const { return rows * w; }
  double orthogonality_error() const;
};

struct SeedPair {
  Eigen::Index source = 0;  // row in the L2 table
  Eigen::Index target = 0;  // row in the L1 table
};

/// argmin over orthogonal W of sum ||e_src W - e_tgt||^2 on the seed pairs,
/// optionally refined by alternating lexicon induction and re-solving.
AlignmentMap procrustes_align(const Matrix& source, const Matrix& target, const std::vector<SeedPair>& seed,
                              int self_learn_iters = 0);

/// Seed pairs from identically spelled words.
std::vector<SeedPair> identical_spelling_seed(const std::vector<std::string>& source_words,
                                              const std::vector<std::string>& target_words);

struct Neighbor {
  Eigen::Index row = 0;
  double cosine = 0.0;
  bool operator==(const Neighbor&) const = default;
};

/// Exact top-k rows of `table` by cosine with `query`, ties by lowest row. The
/// table rows need not be normalized. Only rows in [begin, end) are searched.
std::vector<Neighbor> nearest_neighbors(const Matrix& table, const Eigen::Ref<const Vector>& query, std::size_t k);
std::vector<Neighbor> nearest_neighbors(const Matrix& table, const Eigen::Ref<const Vector>& query, std::size_t k,
                                        Eigen::Index begin, Eigen::Index end);

/// Argmax cosine over a set of candidate rows of a unit-normalized table, ties by
/// lowest row. Rows are scanned in the order given, so `candidates` must be sorted.
Neighbor nearest_unit_row(const Matrix& unit_table, const Eigen::Ref<const Vector>& query,
                          const std::vector<Eigen::Index>& candidates);

struct LexiconEntry {
  std::string source;
  std::string target;
  double cosine = 0.0;
};

/// Maps each L2 word to its nearest aligned L1 word.
class BilingualLexicon {
 public:
  BilingualLexicon() = default;
  explicit BilingualLexicon(std::vector<LexiconEntry> entries);

  const std::string* lookup(std::string_view source) const;
  const std::vector<LexiconEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  void write_tsv(std::ostream& out) const;
  static BilingualLexicon read_tsv(std::istream& in);

 private:
  std::vector<LexiconEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// For each source (L2) row, the target (L1) row maximizing cos(e_src W, e_tgt),
/// ties by lowest target row.
std::vector<Neighbor> induce_mapping(const Matrix& source, const Matrix& target, const AlignmentMap& map);
BilingualLexicon induce_lexicon(const EmbeddingTable& l2, const EmbeddingTable& l1, const AlignmentMap& map);

void write_matrix_text(std::ostream& out, const Matrix& m);
Matrix read_matrix_text(std::istream& in);

/// Embedding table over the combined vocabulary: specials get fallback vectors,
/// L1 rows come from the L1 table and L2 rows from the L2 table mapped through
/// the alignment (re-normalized).
Matrix combined_table(const Vocabulary& vocab, const EmbeddingTable& l1, const EmbeddingTable& l2,
                      const AlignmentMap* align);

}  // namespace paravmf
