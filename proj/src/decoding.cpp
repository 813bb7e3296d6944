#include "paravmf/decoding.hpp"

#include <cmath>
#include <limits>

#include <spdlog/spdlog.h>

namespace paravmf {

std::string_view region_name(SearchRegion region) {
  return region == SearchRegion::Combined ? "combined" : "target-only";
}

SearchRegion parse_region(std::string_view text) {
  if (text == "combined") return SearchRegion::Combined;
  if (text == "target-only") return SearchRegion::TargetOnly;
  throw ConfigError("unknown vocabulary region: " + std::string(text));
}

std::vector<Eigen::Index> candidate_rows(const Vocabulary& vocab, SearchRegion region, Lang target) {
  std::vector<Eigen::Index> rows{Vocabulary::kUnk, Vocabulary::kEos};
  auto add_block = [&](Lang lang) {
    for (TokenId id = vocab.lang_begin(lang); id < vocab.lang_end(lang); ++id) rows.push_back(id);
  };
  if (region == SearchRegion::Combined) {
    add_block(Lang::L1);
    add_block(Lang::L2);
  } else {
    add_block(target);
  }
  return rows;
}

TokenId pick_token(HeadKind head, const Eigen::Ref<const Vector>& output, const Matrix& unit_table,
                   const std::vector<Eigen::Index>& candidates, double* score) {
  if (head == HeadKind::VMF) {
    const Neighbor best = nearest_unit_row(unit_table, output, candidates);
    if (score != nullptr) *score = best.cosine;
    return static_cast<TokenId>(best.row);
  }
  if (candidates.empty()) throw ConfigError("empty candidate set");
  Eigen::Index best = candidates.front();
  for (Eigen::Index r : candidates) {
    if (output[r] > output[best]) best = r;
  }
  if (score != nullptr) {
    double z = 0.0;
    for (Eigen::Index r : candidates) z += std::exp(output[r] - output[best]);
    *score = 1.0 / z;
  }
  return static_cast<TokenId>(best);
}

Decoder::Decoder(const Seq2Seq& model, const Vocabulary& vocab, const Matrix& unit_table)
    : model_(model), vocab_(vocab), table_(unit_table) {
  if (static_cast<std::size_t>(unit_table.rows()) != vocab.size()) {
    throw ConfigError("embedding table rows do not match the vocabulary");
  }
}

DecodeResult Decoder::decode(const Sentence& source, const DecodeConfig& cfg, const BilingualLexicon* lexicon) const {
  if (cfg.max_length < 1) throw ConfigError("decode max_length must be >= 1");
  std::vector<TokenId> src{Vocabulary::start_token(cfg.target)};
  for (const auto& tok : source.tokens) src.push_back(vocab_.id(tok, source.lang));
  const EncoderStates enc = model_.encode(src);
  const auto candidates = candidate_rows(vocab_, cfg.region, cfg.target);

  DecodeResult result;
  result.output.lang = cfg.target;
  result.truncated = true;
  std::vector<TokenId> prefix{Vocabulary::start_token(cfg.target)};
  while (result.ids.size() < cfg.max_length) {
    const Vector out = model_.next_output(enc, prefix);
    double score = 0.0;
    const TokenId id = pick_token(model_.head(), out, table_, candidates, &score);
    if (id == Vocabulary::kEos) {
      result.truncated = false;
      break;
    }
    result.ids.push_back(id);
    result.scores.push_back(score);
    result.output.tokens.push_back(vocab_.token(id));
    prefix.push_back(id);
  }
  if (cfg.postprocess && lexicon != nullptr && cfg.target == Lang::L1) {
    result.output.tokens = postprocess_lexicon(result.output.tokens, vocab_, *lexicon);
  }
  return result;
}

std::vector<std::string> postprocess_lexicon(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                                             const BilingualLexicon& lexicon) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& tok : tokens) {
    if (vocab.contains(tok, Lang::L2) && !vocab.contains(tok, Lang::L1)) {
      const std::string* image = lexicon.lookup(tok);
      out.push_back(image != nullptr ? *image : tok);
    } else {
      out.push_back(tok);
    }
  }
  return out;
}

DecodeResult pivot_paraphrase(const Decoder& l1_to_l2, const Decoder& l2_to_l1, const Sentence& input,
                              std::size_t max_length, SearchRegion region) {
  DecodeConfig first{Lang::L2, max_length, false, region};
  DecodeResult mid = l1_to_l2.decode(input, first);
  if (mid.output.tokens.empty()) {
    spdlog::warn("pivot: empty intermediate translation");
    DecodeResult empty;
    empty.output.lang = Lang::L1;
    return empty;
  }
  DecodeConfig second{Lang::L1, max_length, false, region};
  return l2_to_l1.decode(mid.output, second);
}

double language_rate(const std::vector<std::string>& tokens, const Vocabulary& vocab, Lang lang) {
  if (tokens.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& t : tokens) {
    if (vocab.contains(t, lang)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(tokens.size());
}

}  // namespace paravmf
