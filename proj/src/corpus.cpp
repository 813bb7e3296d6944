#include "paravmf/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include <spdlog/spdlog.h>

namespace paravmf {

Lang parse_lang(std::string_view text) {
  if (text == "L1" || text == "l1") return Lang::L1;
  if (text == "L2" || text == "l2") return Lang::L2;
  throw ConfigError("unknown language id: " + std::string(text));
}

// ---------------------------------------------------------------------------
// Tokenizer

namespace {

constexpr std::string_view kAsciiPunct = ".,!?;:()[]{}\"<>/\\|*+=%&#@$^`~";
constexpr std::array<std::string_view, 6> kMultiBytePunct = {"«", "»", "“", "”", "…",
                                                             "—"};
constexpr std::array<std::string_view, 6> kEnglishSuffixes = {"'s", "'re", "'ve", "'ll", "'d", "'m"};
constexpr std::array<std::string_view, 12> kFrenchPrefixes = {"jusqu'", "lorsqu'", "puisqu'", "qu'", "l'", "d'",
                                                              "j'",     "m'",      "n'",      "s'",  "t'", "c'"};

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_word_byte(char c) {
  const auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) != 0 || u >= 0x80;
}

void split_clitics(std::string word, std::vector<std::string>& out) {
  const std::string lower = ascii_lower(word);
  if (word.find('\'') == std::string::npos) {
    out.push_back(std::move(word));
    return;
  }
  if (lower.size() > 3 && lower.ends_with("n't")) {
    out.push_back(word.substr(0, word.size() - 3));
    out.push_back(word.substr(word.size() - 3));
    return;
  }
  for (std::string_view suffix : kEnglishSuffixes) {
    if (lower.size() > suffix.size() && lower.ends_with(suffix)) {
      out.push_back(word.substr(0, word.size() - suffix.size()));
      out.push_back(word.substr(word.size() - suffix.size()));
      return;
    }
  }
  for (std::string_view prefix : kFrenchPrefixes) {
    if (lower.size() > prefix.size() && lower.starts_with(prefix) && is_word_byte(lower[prefix.size()])) {
      out.push_back(word.substr(0, prefix.size()));
      split_clitics(word.substr(prefix.size()), out);
      return;
    }
  }
  // Stray quote marks at either end are punctuation.
  if (word.size() > 1 && word.front() == '\'') {
    out.emplace_back("'");
    split_clitics(word.substr(1), out);
    return;
  }
  if (word.size() > 1 && word.back() == '\'') {
    split_clitics(word.substr(0, word.size() - 1), out);
    out.emplace_back("'");
    return;
  }
  out.push_back(std::move(word));
}

}  // namespace

std::string ascii_lower(std::string_view text) {
  std::string out(text);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

Sentence tokenize(std::string_view text, Lang lang) {
  Sentence sentence;
  sentence.lang = lang;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) split_clitics(std::move(word), sentence.tokens);
    word.clear();
  };
  for (std::size_t i = 0; i < text.size();) {
    const char c = text[i];
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      flush();
      ++i;
      continue;
    }
    bool matched = false;
    for (std::string_view mb : kMultiBytePunct) {
      if (text.substr(i).starts_with(mb)) {
        flush();
        sentence.tokens.emplace_back(mb);
        i += mb.size();
        matched = true;
        break;
      }
    }
    if (matched) continue;
    const bool prev_digit = i > 0 && is_digit(text[i - 1]);
    const bool next_digit = i + 1 < text.size() && is_digit(text[i + 1]);
    const bool numeric_sep = (c == '.' || c == ',') && prev_digit && next_digit && !word.empty();
    const bool inner_hyphen = c == '-' && !word.empty() && i + 1 < text.size() && is_word_byte(text[i + 1]);
    if (!numeric_sep && (kAsciiPunct.find(c) != std::string_view::npos || (c == '-' && !inner_hyphen))) {
      flush();
      // Runs of the same mark ("...", "--") stay one token.
      std::size_t j = i + 1;
      while (j < text.size() && text[j] == c) ++j;
      sentence.tokens.emplace_back(text.substr(i, j - i));
      i = j;
      continue;
    }
    word.push_back(c);
    ++i;
  }
  flush();
  return sentence;
}

// ---------------------------------------------------------------------------
// Truecasing

CaseModel CaseModel::train(const std::vector<Sentence>& corpus) {
  struct Counts {
    std::vector<std::pair<std::string, std::int64_t>> forms;  // first-seen order
  };
  std::unordered_map<std::string, Counts> counts;
  for (const auto& s : corpus) {
    for (std::size_t i = 1; i < s.tokens.size(); ++i) {
      auto& forms = counts[ascii_lower(s.tokens[i])].forms;
      auto it = std::find_if(forms.begin(), forms.end(), [&](const auto& f) { return f.first == s.tokens[i]; });
      if (it == forms.end()) {
        forms.emplace_back(s.tokens[i], 1);
      } else {
        ++it->second;
      }
    }
  }
  CaseModel model;
  for (auto& [key, c] : counts) {
    const auto best = std::max_element(c.forms.begin(), c.forms.end(),
                                       [](const auto& a, const auto& b) { return a.second < b.second; });
    model.best_.emplace(key, best->first);
  }
  return model;
}

std::optional<std::string> CaseModel::best_casing(std::string_view token) const {
  auto it = best_.find(ascii_lower(token));
  if (it == best_.end()) return std::nullopt;
  return it->second;
}

Sentence CaseModel::apply(Sentence sentence) const {
  if (sentence.tokens.empty()) return sentence;
  auto& first = sentence.tokens.front();
  first = best_casing(first).value_or(ascii_lower(first));
  return sentence;
}

void CaseModel::write_tsv(std::ostream& out) const {
  std::map<std::string, std::string> sorted(best_.begin(), best_.end());
  for (const auto& [k, v] : sorted) out << k << '\t' << v << '\n';
}

CaseModel CaseModel::read_tsv(std::istream& in) {
  CaseModel model;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw FormatError("case model line without a tab");
    model.best_.emplace(line.substr(0, tab), line.substr(tab + 1));
  }
  return model;
}

// ---------------------------------------------------------------------------
// Vocabulary

std::vector<VocabEntry> build_vocab(const std::vector<Sentence>& corpus, Lang lang, std::size_t max_size) {
  if (max_size < 1) throw ConfigError("vocabulary max_size must be >= 1");
  std::unordered_map<std::string, std::size_t> index;
  std::vector<VocabEntry> entries;
  for (const auto& s : corpus) {
    if (s.lang != lang) continue;
    for (const auto& tok : s.tokens) {
      if (Vocabulary::is_special_spelling(tok)) continue;
      auto [it, inserted] = index.emplace(tok, entries.size());
      if (inserted) entries.push_back({tok, 0});
      ++entries[it->second].freq;
    }
  }
  std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.freq > b.freq; });
  if (entries.size() > max_size) entries.resize(max_size);
  return entries;
}

void write_vocab_tsv(std::ostream& out, const std::vector<VocabEntry>& entries) {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    out << entries[i].token << '\t' << i << '\t' << entries[i].freq << '\n';
  }
}

std::vector<VocabEntry> read_vocab_tsv(std::istream& in) {
  std::vector<VocabEntry> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    std::istringstream fields(line);
    std::string token, id, freq;
    if (!std::getline(fields, token, '\t') || !std::getline(fields, id, '\t') || !std::getline(fields, freq)) {
      throw FormatError("vocabulary line must be token<TAB>id<TAB>freq: " + line);
    }
    entries.push_back({token, std::stoll(freq)});
  }
  return entries;
}

Vocabulary::Vocabulary(const std::vector<VocabEntry>& l1, const std::vector<VocabEntry>& l2) {
  for (std::string_view s : {kPadToken, kUnkToken, kEosToken, kStartL1Token, kStartL2Token}) {
    tokens_.emplace_back(s);
    freqs_.push_back(0);
  }
  auto add_block = [&](const std::vector<VocabEntry>& block, std::unordered_map<std::string, TokenId>& index) {
    std::size_t n = 0;
    for (const auto& e : block) {
      if (is_special_spelling(e.token)) throw ConfigError("vocabulary token collides with a special: " + e.token);
      if (!index.emplace(e.token, static_cast<TokenId>(tokens_.size())).second) {
        throw ConfigError("duplicate vocabulary token: " + e.token);
      }
      tokens_.push_back(e.token);
      freqs_.push_back(e.freq);
      ++n;
    }
    return n;
  };
  l1_size_ = add_block(l1, l1_index_);
  l2_size_ = add_block(l2, l2_index_);
}

bool Vocabulary::is_special_spelling(std::string_view token) {
  return token == kPadToken || token == kUnkToken || token == kEosToken || token == kStartL1Token ||
         token == kStartL2Token;
}

std::optional<TokenId> Vocabulary::find(std::string_view token, Lang lang) const {
  const auto& index = lang == Lang::L1 ? l1_index_ : l2_index_;
  auto it = index.find(std::string(token));
  if (it == index.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::id(std::string_view token, Lang lang) const {
  if (is_special_spelling(token)) {
    for (TokenId i = 0; i < kNumSpecials; ++i) {
      if (tokens_[static_cast<std::size_t>(i)] == token) return i;
    }
  }
  return find(token, lang).value_or(kUnk);
}

std::optional<Lang> Vocabulary::lang_of(TokenId id) const {
  if (id < kNumSpecials) return std::nullopt;
  return id < lang_end(Lang::L1) ? Lang::L1 : Lang::L2;
}

TokenId Vocabulary::lang_begin(Lang lang) const {
  return lang == Lang::L1 ? kNumSpecials : kNumSpecials + static_cast<TokenId>(l1_size_);
}

std::vector<TokenId> Vocabulary::ids(const Sentence& sentence) const {
  std::vector<TokenId> out;
  out.reserve(sentence.tokens.size());
  for (const auto& t : sentence.tokens) out.push_back(id(t, sentence.lang));
  return out;
}

std::vector<std::string> Vocabulary::lang_words(Lang lang) const {
  return {tokens_.begin() + lang_begin(lang), tokens_.begin() + lang_end(lang)};
}

void Vocabulary::write_tsv(std::ostream& out) const {
  out << "#lang_sizes\t" << l1_size_ << '\t' << l2_size_ << '\n';
  for (std::size_t i = 0; i < tokens_.size(); ++i) out << tokens_[i] << '\t' << i << '\t' << freqs_[i] << '\n';
}

Vocabulary Vocabulary::read_tsv(std::istream& in) {
  std::string header;
  if (!std::getline(in, header) || !header.starts_with("#lang_sizes\t")) {
    throw FormatError("combined vocabulary must start with a #lang_sizes line");
  }
  std::istringstream hs(header.substr(12));
  std::size_t n1 = 0, n2 = 0;
  if (!(hs >> n1 >> n2)) throw FormatError("bad #lang_sizes line");
  auto all = read_vocab_tsv(in);
  if (all.size() != n1 + n2 + kNumSpecials) throw FormatError("vocabulary size does not match #lang_sizes");
  std::vector<VocabEntry> l1(all.begin() + kNumSpecials, all.begin() + kNumSpecials + static_cast<long>(n1));
  std::vector<VocabEntry> l2(all.begin() + kNumSpecials + static_cast<long>(n1), all.end());
  return Vocabulary(l1, l2);
}

// ---------------------------------------------------------------------------
// Noise and task streams

std::vector<std::string> add_noise(const std::vector<std::string>& tokens, double p_drop, std::size_t k_window,
                                   std::uint64_t seed) {
  if (!(p_drop >= 0.0 && p_drop < 1.0)) throw ConfigError("p_drop must be in [0, 1)");
  if (k_window < 1) throw ConfigError("k_window must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::string> kept;
  for (const auto& t : tokens) {
    if (p_drop == 0.0 || unit(rng) >= p_drop) kept.push_back(t);
  }
  // Sorting by i + U[0, k) moves a token past at most k - 1 others.
  std::vector<std::pair<double, std::size_t>> keys(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) {
    keys[i] = {static_cast<double>(i) + unit(rng) * static_cast<double>(k_window), i};
  }
  std::stable_sort(keys.begin(), keys.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::string> out;
  out.reserve(kept.size());
  for (const auto& [key, i] : keys) out.push_back(std::move(kept[i]));
  return out;
}

std::string_view task_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::S2T: return "S2T";
    case TaskKind::T2S: return "T2S";
    case TaskKind::AE: return "AE";
  }
  return "?";
}

TaskExample make_example(const Sentence& source, const Sentence& target, TaskKind kind) {
  TaskExample ex;
  ex.kind = kind;
  ex.source.lang = source.lang;
  ex.source.tokens.reserve(source.tokens.size() + 1);
  ex.source.tokens.emplace_back(Vocabulary::start_spelling(target.lang));
  ex.source.tokens.insert(ex.source.tokens.end(), source.tokens.begin(), source.tokens.end());
  ex.target = target;
  return ex;
}

std::vector<Sentence> read_sentences(std::istream& in, Lang lang) {
  std::vector<Sentence> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(tokenize(line, lang));
  return out;
}

std::vector<Sentence> read_sentences(const std::filesystem::path& path, Lang lang) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus file: " + path.string());
  return read_sentences(in, lang);
}

ParallelCorpus read_parallel(const std::filesystem::path& l1_path, const std::filesystem::path& l2_path) {
  ParallelCorpus corpus{read_sentences(l1_path, Lang::L1), read_sentences(l2_path, Lang::L2)};
  if (corpus.l1.size() != corpus.l2.size()) {
    throw FormatError("parallel files are not line-aligned: " + l1_path.string() + " vs " + l2_path.string());
  }
  return corpus;
}

std::size_t AeAmount::resolve(std::size_t n, bool* clamped) const {
  if (fraction.has_value() == count.has_value()) {
    throw ConfigError("exactly one of ae_fraction / ae_count must be set");
  }
  if (clamped != nullptr) *clamped = false;
  if (count) {
    if (*count > n) throw ConfigError("ae_count exceeds the corpus size");
    return *count;
  }
  const double f = *fraction;
  if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("ae_fraction must be in [0, 1]");
  auto k = static_cast<std::size_t>(std::llround(f * static_cast<double>(n)));
  if (f > 0.0 && k < 1 && n > 0) {
    k = 1;
    if (clamped != nullptr) *clamped = true;
  }
  return k;
}

TaskStream::TaskStream(const ParallelCorpus& corpus, AeAmount ae, NoiseConfig noise, std::uint64_t seed, TaskMix mix)
    : noise_(noise), seed_(seed) {
  if (corpus.l1.size() != corpus.l2.size()) throw ConfigError("parallel corpus sides differ in length");
  const std::size_t n = corpus.size();
  const std::size_t ae_count = ae.resolve(n, &ae_clamped_);
  if (ae_clamped_) spdlog::warn("ae_fraction * N < 1; emitting one autoencoding example");

  for (std::size_t i = 0; i < n; ++i) {
    if (mix.s2t) base_.push_back(make_example(corpus.l1[i], corpus.l2[i], TaskKind::S2T));
    if (mix.t2s) base_.push_back(make_example(corpus.l2[i], corpus.l1[i], TaskKind::T2S));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  ae_indices_.assign(order.begin(), order.begin() + static_cast<long>(ae_count));
  for (std::size_t idx : ae_indices_) base_.push_back(make_example(corpus.l1[idx], corpus.l1[idx], TaskKind::AE));
}

std::size_t TaskStream::count(TaskKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(base_.begin(), base_.end(), [&](const TaskExample& e) { return e.kind == kind; }));
}

std::vector<TaskExample> TaskStream::epoch(std::size_t index) const {
  std::vector<TaskExample> out = base_;
  std::mt19937_64 rng(seed_ ^ (0x9e3779b97f4a7c15ULL * (index + 1)));
  if (noise_.enabled) {
    for (auto& ex : out) {
      if (ex.kind != TaskKind::AE) continue;
      std::vector<std::string> words(ex.source.tokens.begin() + 1, ex.source.tokens.end());
      words = add_noise(words, noise_.p_drop, noise_.k_window, rng());
      ex.source.tokens.resize(1);
      ex.source.tokens.insert(ex.source.tokens.end(), words.begin(), words.end());
    }
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

std::vector<TaskExample> make_task_stream(const ParallelCorpus& corpus, AeAmount ae, NoiseConfig noise,
                                          std::uint64_t seed) {
  return TaskStream(corpus, ae, noise, seed).epoch(0);
}

// ---------------------------------------------------------------------------
// Batching

std::size_t Batch::target_tokens() const {
  std::size_t n = 0;
  for (const auto& ex : examples) n += ex.target.length();
  return n;
}

bool Batch::target_is_pad(std::size_t i, std::size_t pos) const { return pos >= examples.at(i).target.length(); }

bool Batch::source_is_pad(std::size_t i, std::size_t pos) const { return pos >= examples.at(i).source.length(); }

BatchingResult make_batches(const std::vector<TaskExample>& stream, std::size_t token_budget) {
  BatchingResult result;
  std::vector<std::size_t> order;
  order.reserve(stream.size());
  for (std::size_t i = 0; i < stream.size(); ++i) {
    if (stream[i].target.length() > token_budget) {
      ++result.skipped;
      continue;
    }
    order.push_back(i);
  }
  if (result.skipped > 0) spdlog::warn("skipped {} examples longer than the token budget", result.skipped);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ea = stream[a];
    const auto& eb = stream[b];
    if (ea.target.length() != eb.target.length()) return ea.target.length() < eb.target.length();
    return ea.source.length() < eb.source.length();
  });
  Batch current;
  std::size_t tokens = 0;
  auto close = [&] {
    if (current.examples.empty()) return;
    for (const auto& ex : current.examples) {
      current.padded_source_length = std::max(current.padded_source_length, ex.source.length());
      current.padded_target_length = std::max(current.padded_target_length, ex.target.length());
    }
    result.batches.push_back(std::move(current));
    current = Batch{};
    tokens = 0;
  };
  for (std::size_t i : order) {
    const std::size_t len = stream[i].target.length();
    if (tokens + len > token_budget) close();
    current.examples.push_back(stream[i]);
    tokens += len;
  }
  close();
  return result;
}

}  // namespace paravmf
