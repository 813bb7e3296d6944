#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "paravmf/common.hpp"

namespace paravmf {

using Tokens = std::vector<std::string>;

/// Jaccard index of the token sets as a percentage; two empty lists score 100.
double iou(const Tokens& a, const Tokens& b);

/// Word-level Levenshtein distance with unit costs.
std::size_t edit_distance(const Tokens& a, const Tokens& b);

/// 100 * edit_distance(hyp, ref) / |ref|. Throws DomainError on an empty reference.
double wer(const Tokens& hypothesis, const Tokens& reference);

struct ParseTree {
  std::string label;
  std::vector<ParseTree> children;
  /// True for bare tokens of the bracketed text (the words).
  bool terminal = false;

  std::size_t size() const;
  std::size_t height() const;  // a single node has height 0
  std::string to_string() const;
  bool operator==(const ParseTree&) const = default;
};

/// Parses "(S (NP (DT the) (NN cat)) (VP (VB sat)))". Throws ParseError with the
/// byte offset of the problem.
ParseTree parse_bracketed(std::string_view text);

/// Keeps the nodes at depth <= 2 (the root has depth 0), then removes every
/// terminal of the truncated tree: word nodes and the leaves left by the cut.
/// The root always survives.
ParseTree prune_for_pted(const ParseTree& tree);

/// Exact ordered tree edit distance with unit relabel/insert/delete costs
/// (Zhang-Shasha).
std::size_t tree_edit_distance(const ParseTree& a, const ParseTree& b);

/// Semantic similarity per line, in [0, 1].
struct ScoreTable {
  std::vector<double> scores;
  std::string label;  // e.g. "BERTScore" or "fallback-cosine"

  std::size_t size() const { return scores.size(); }
};

/// `line_index<TAB>score` rows; every index in [0, n) exactly once.
ScoreTable read_score_table(std::istream& in, std::string label = {});
ScoreTable read_score_table(const std::filesystem::path& path, std::string label = {});
void write_score_table(std::ostream& out, const ScoreTable& table);

/// Indices i with a[i] >= tau and b[i] >= tau, one list per threshold.
std::vector<std::vector<std::size_t>> bucket_subsets(const ScoreTable& a, const ScoreTable& b,
                                                     const std::vector<double>& thresholds);

/// Stand-in similarity, not BERTScore: max(0, cosine of the mean unit word
/// vectors). Words without a vector are ignored; no vectors on a side gives 0.
double fallback_similarity(const Tokens& a, const Tokens& b,
                           const std::function<std::optional<Vector>(const std::string&)>& lookup);

struct SystemOutputs {
  std::string name;
  std::vector<Tokens> sentences;
  /// Optional bracketed parses, line-aligned; nullopt marks a missing line.
  std::vector<std::optional<ParseTree>> parses;
};

struct DiversityCell {
  double iou = 0.0;
  double wer = 0.0;
  double pted = 0.0;
  std::size_t pted_items = 0;     // items with both parses present
  std::size_t pted_excluded = 0;  // items lacking a parse
};

struct DiversityRow {
  double threshold = 0.0;
  std::size_t subset_size = 0;
  std::vector<DiversityCell> cells;  // one per system
};

struct DiversityReport {
  std::size_t total_items = 0;
  std::vector<std::string> systems;
  std::vector<DiversityRow> rows;

  /// threshold, subset, system, iou, wer_percent, pted, pted_items, pted_excluded
  void write_tsv(std::ostream& out) const;
  /// Aligned plain-text table: one line per (threshold, system).
  void write_text(std::ostream& out) const;
};

/// Diversity of each system's outputs against the inputs on the buckets where
/// both gating score tables pass the threshold. PTED compares pruned parses.
DiversityReport diversity_report(const std::vector<Tokens>& inputs,
                                 const std::vector<std::optional<ParseTree>>& input_parses,
                                 const std::vector<SystemOutputs>& systems, const ScoreTable& gate_a,
                                 const ScoreTable& gate_b, const std::vector<double>& thresholds);

/// One parse per line; blank or unparsable lines become nullopt.
std::vector<std::optional<ParseTree>> read_parses(std::istream& in);

}  // namespace paravmf
