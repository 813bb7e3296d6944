#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "paravmf/common.hpp"

namespace paravmf {

struct Sentence {
  std::vector<std::string> tokens;
  Lang lang = Lang::L1;

  std::size_t length() const { return tokens.size(); }
  bool operator==(const Sentence&) const = default;
};

/// Rule-based tokenizer. Splits punctuation from words (keeping decimal points
/// and commas between digits and hyphens inside words), splits English clitics
/// ('s 're 've 'll 'd 'm n't) off the end of a word and French elided articles
/// and pronouns (l' d' j' m' n' s' t' c' qu' jusqu' lorsqu' puisqu') off the
/// front. Both rule sets run for either language.
Sentence tokenize(std::string_view text, Lang lang);

/// Lowercases ASCII letters; other bytes are copied unchanged.
std::string ascii_lower(std::string_view text);

/// Maps the lowercased form of a token to its most frequent casing in
/// non-initial positions.
class CaseModel {
 public:
  static CaseModel train(const std::vector<Sentence>& corpus);

  /// Rewrites only the sentence-initial token. Tokens never seen mid-sentence
  /// are lowercased.
  Sentence apply(Sentence sentence) const;

  std::optional<std::string> best_casing(std::string_view token) const;

  void write_tsv(std::ostream& out) const;
  static CaseModel read_tsv(std::istream& in);

 private:
  std::unordered_map<std::string, std::string> best_;
};

struct VocabEntry {
  std::string token;
  std::int64_t freq = 0;
  bool operator==(const VocabEntry&) const = default;
};

/// Top `max_size` tokens of `lang` sentences by frequency; ties keep first
/// occurrence order. Tokens spelled like a reserved special are skipped.
std::vector<VocabEntry> build_vocab(const std::vector<Sentence>& corpus, Lang lang, std::size_t max_size);

void write_vocab_tsv(std::ostream& out, const std::vector<VocabEntry>& entries);
std::vector<VocabEntry> read_vocab_tsv(std::istream& in);

/// Combined bilingual vocabulary. Layout: specials, then the L1 block, then the
/// L2 block. A spelling present in both languages gets two ids.
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kStartL1 = 3;
  static constexpr TokenId kStartL2 = 4;
  static constexpr TokenId kNumSpecials = 5;

  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnkToken = "<unk>";
  static constexpr std::string_view kEosToken = "</s>";
  static constexpr std::string_view kStartL1Token = "<2L1>";
  static constexpr std::string_view kStartL2Token = "<2L2>";

  Vocabulary() : Vocabulary({}, {}) {}
  Vocabulary(const std::vector<VocabEntry>& l1, const std::vector<VocabEntry>& l2);

  static bool is_special_spelling(std::string_view token);
  static TokenId start_token(Lang lang) { return lang == Lang::L1 ? kStartL1 : kStartL2; }
  static std::string_view start_spelling(Lang lang) { return lang == Lang::L1 ? kStartL1Token : kStartL2Token; }

  /// Id of `token` in `lang`, falling back to UNK. Special spellings resolve to
  /// their reserved ids.
  TokenId id(std::string_view token, Lang lang) const;
  std::optional<TokenId> find(std::string_view token, Lang lang) const;
  bool contains(std::string_view token, Lang lang) const { return find(token, lang).has_value(); }

  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::int64_t freq(TokenId id) const { return freqs_.at(static_cast<std::size_t>(id)); }
  /// nullopt for specials.
  std::optional<Lang> lang_of(TokenId id) const;
  static bool is_special(TokenId id) { return id >= 0 && id < kNumSpecials; }

  std::size_t size() const { return tokens_.size(); }
  std::size_t lang_size(Lang lang) const { return lang == Lang::L1 ? l1_size_ : l2_size_; }
  TokenId lang_begin(Lang lang) const;
  TokenId lang_end(Lang lang) const { return lang_begin(lang) + static_cast<TokenId>(lang_size(lang)); }

  std::vector<TokenId> ids(const Sentence& sentence) const;
  /// Spellings of the `lang` block in id order.
  std::vector<std::string> lang_words(Lang lang) const;

  /// `token<TAB>id<TAB>freq` rows preceded by a `#lang_sizes` header line.
  void write_tsv(std::ostream& out) const;
  static Vocabulary read_tsv(std::istream& in);

 private:
  std::vector<std::string> tokens_;
  std::vector<std::int64_t> freqs_;
  std::size_t l1_size_ = 0;
  std::size_t l2_size_ = 0;
  std::unordered_map<std::string, TokenId> l1_index_;
  std::unordered_map<std::string, TokenId> l2_index_;
};

struct NoiseConfig {
  bool enabled = false;
  double p_drop = 0.1;
  std::size_t k_window = 3;
};

/// Drops each token with probability p_drop, then shuffles the survivors
/// locally so that no token moves more than k_window - 1 positions.
std::vector<std::string> add_noise(const std::vector<std::string>& tokens, double p_drop, std::size_t k_window,
                                   std::uint64_t seed);

enum class TaskKind : std::uint8_t { S2T = 0, T2S = 1, AE = 2 };
std::string_view task_name(TaskKind kind);

struct TaskExample {
  Sentence source;  // tokens[0] is the start token of target.lang
  Sentence target;
  TaskKind kind = TaskKind::S2T;
};

struct ParallelCorpus {
  std::vector<Sentence> l1;
  std::vector<Sentence> l2;

  std::size_t size() const { return l1.size(); }
};

/// Two line-aligned plain-text files, tokenized with `tokenize`.
ParallelCorpus read_parallel(const std::filesystem::path& l1_path, const std::filesystem::path& l2_path);
std::vector<Sentence> read_sentences(const std::filesystem::path& path, Lang lang);
std::vector<Sentence> read_sentences(std::istream& in, Lang lang);

/// Size of the autoencoding sample: exactly one of the two fields is set.
struct AeAmount {
  std::optional<double> fraction;
  std::optional<std::size_t> count;

  static AeAmount of_fraction(double f) { return {f, std::nullopt}; }
  static AeAmount of_count(std::size_t n) { return {std::nullopt, n}; }
  /// Number of AE examples for a corpus of `n` pairs. A positive fraction that
  /// rounds to zero yields one example and sets `*clamped`.
  std::size_t resolve(std::size_t n, bool* clamped = nullptr) const;
};

struct TaskMix {
  bool s2t = true;
  bool t2s = true;
};

/// The mixed three-task training stream. The autoencoding subset is sampled once
/// at construction; `epoch` re-shuffles the order (and re-draws AE noise) per
/// epoch from the seed.
class TaskStream {
 public:
  TaskStream(const ParallelCorpus& corpus, AeAmount ae, NoiseConfig noise, std::uint64_t seed, TaskMix mix = {});

  std::vector<TaskExample> epoch(std::size_t index) const;

  std::size_t size() const { return base_.size(); }
  std::size_t count(TaskKind kind) const;
  const std::vector<std::size_t>& ae_indices() const { return ae_indices_; }
  bool ae_clamped() const { return ae_clamped_; }

 private:
  std::vector<TaskExample> base_;
  std::vector<std::size_t> ae_indices_;
  NoiseConfig noise_;
  std::uint64_t seed_;
  bool ae_clamped_ = false;
};

TaskExample make_example(const Sentence& source, const Sentence& target, TaskKind kind);

std::vector<TaskExample> make_task_stream(const ParallelCorpus& corpus, AeAmount ae, NoiseConfig noise,
                                          std::uint64_t seed);

/// Examples of one update, padded to common lengths. Lengths count sentence
/// tokens; the source start token and the target EOS are not counted.
struct Batch {
  std::vector<TaskExample> examples;
  std::size_t padded_source_length = 0;  // including the start token
  std::size_t padded_target_length = 0;

  std::size_t target_tokens() const;
  /// True when position `pos` of example `i`'s target row is padding.
  bool target_is_pad(std::size_t i, std::size_t pos) const;
  bool source_is_pad(std::size_t i, std::size_t pos) const;
};

struct BatchingResult {
  std::vector<Batch> batches;
  std::size_t skipped = 0;
};

/// Greedy length-sorted packing: examples are sorted by (target, source) length
/// and cut into batches whose summed target length stays within the budget.
/// Examples longer than the budget are skipped.
BatchingResult make_batches(const std::vector<TaskExample>& stream, std::size_t token_budget);

}  // namespace paravmf
