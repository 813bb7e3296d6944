#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "paravmf/common.hpp"
#include "paravmf/corpus.hpp"
#include "paravmf/embeddings.hpp"
#include "paravmf/model.hpp"

namespace paravmf {

enum class SearchRegion : std::uint8_t { Combined, TargetOnly };
std::string_view region_name(SearchRegion region);
SearchRegion parse_region(std::string_view text);

struct DecodeConfig {
  Lang target = Lang::L1;
  std::size_t max_length = 100;
  bool postprocess = true;
  SearchRegion region = SearchRegion::Combined;
};

struct DecodeResult {
  Sentence output;
  std::vector<TokenId> ids;
  /// Cosine of each chosen word (VMF) or its softmax probability (CE).
  std::vector<double> scores;
  bool truncated = false;
};

/// Table rows a VMF step may emit: every word row plus EOS and UNK for the
/// combined region; the target-language block plus EOS and UNK otherwise. PAD and
/// the start tokens are never emitted. Sorted ascending.
std::vector<Eigen::Index> candidate_rows(const Vocabulary& vocab, SearchRegion region, Lang target);

/// One greedy step over the candidate rows: argmax cosine (VMF, against the
/// unit table) or argmax logit (CE). Ties go to the lowest id.
TokenId pick_token(HeadKind head, const Eigen::Ref<const Vector>& output, const Matrix& unit_table,
                   const std::vector<Eigen::Index>& candidates, double* score);

class Decoder {
 public:
  /// `unit_table` must hold unit rows indexed like `vocab`.
  Decoder(const Seq2Seq& model, const Vocabulary& vocab, const Matrix& unit_table);

  /// Greedy decoding of an already tokenized source (words only, no start token).
  /// `source.lang` selects the vocabulary used to map words to ids.
  DecodeResult decode(const Sentence& source, const DecodeConfig& cfg,
                      const BilingualLexicon* lexicon = nullptr) const;

 private:
  const Seq2Seq& model_;
  const Vocabulary& vocab_;
  const Matrix& table_;
};

/// Replaces tokens that are L2 words (and not also L1 words) by their lexicon
/// image. L1 words, specials and unknown tokens are left alone.
std::vector<std::string> postprocess_lexicon(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                                             const BilingualLexicon& lexicon);

/// L1 -> L2 with the first model, discretized, then L2 -> L1 with the second.
DecodeResult pivot_paraphrase(const Decoder& l1_to_l2, const Decoder& l2_to_l1, const Sentence& input,
                              std::size_t max_length, SearchRegion region = SearchRegion::TargetOnly);

/// Fraction of tokens of `tokens` that are words of `lang` (and not of the other
/// language only). Specials and unknown tokens count as not in `lang`.
double language_rate(const std::vector<std::string>& tokens, const Vocabulary& vocab, Lang lang);

}  // namespace paravmf
