#include "paravmf/embeddings.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

#include <spdlog/spdlog.h>

namespace paravmf {

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  std::string field;
  while (in >> field) out.push_back(std::move(field));
  return out;
}

double parse_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw FormatError("not a number in word-vector file: " + s);
  }
  if (used != s.size()) throw FormatError("not a number in word-vector file: " + s);
  return v;
}

}  // namespace

Vector fallback_vector(std::string_view word, Eigen::Index dim) {
  std::mt19937_64 rng(fnv1a(word));
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v[i] = normal(rng);
  return v / v.norm();
}

void normalize_rows(Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double n = m.row(i).norm();
    if (n > 0.0) m.row(i) /= n;
  }
}

WordVectors read_word_vectors(std::istream& in) {
  WordVectors out;
  std::vector<std::vector<double>> rows;
  std::string line;
  long dim = -1;
  bool first = true;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto fields = split_ws(line);
    if (fields.empty()) continue;
    if (first) {
      first = false;
      if (fields.size() == 2 && fields[0].find_first_not_of("0123456789") == std::string::npos &&
          fields[1].find_first_not_of("0123456789") == std::string::npos) {
        dim = std::stol(fields[1]);
        if (dim <= 0) throw FormatError("word-vector header declares dimension <= 0");
        continue;
      }
    }
    const long d = static_cast<long>(fields.size()) - 1;
    if (d <= 0) throw FormatError("word-vector line " + std::to_string(line_no) + " has no values");
    if (dim < 0) dim = d;
    if (d != dim) {
      throw FormatError("word-vector line " + std::to_string(line_no) + " has dimension " + std::to_string(d) +
                        ", expected " + std::to_string(dim));
    }
    std::vector<double> row(static_cast<std::size_t>(d));
    for (long j = 0; j < d; ++j) row[static_cast<std::size_t>(j)] = parse_double(fields[static_cast<std::size_t>(j + 1)]);
    out.words.push_back(fields[0]);
    rows.push_back(std::move(row));
  }
  if (dim <= 0) throw FormatError("word-vector file has no vectors");
  out.vectors.resize(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (long j = 0; j < dim; ++j) out.vectors(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
  }
  return out;
}

WordVectors read_word_vectors(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open word-vector file: " + path.string());
  return read_word_vectors(in);
}

void write_word_vectors(std::ostream& out, const std::vector<std::string>& words, const Matrix& vectors) {
  out << vectors.rows() << ' ' << vectors.cols() << '\n';
  out << std::setprecision(17);
  for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
    out << words.at(static_cast<std::size_t>(i));
    for (Eigen::Index j = 0; j < vectors.cols(); ++j) out << ' ' << vectors(i, j);
    out << '\n';
  }
}

EmbeddingTable make_table(const WordVectors& source, const std::vector<std::string>& words, Lang lang) {
  std::unordered_map<std::string, Eigen::Index> index;
  for (std::size_t i = 0; i < source.words.size(); ++i) index.emplace(source.words[i], static_cast<Eigen::Index>(i));
  EmbeddingTable table;
  table.lang = lang;
  table.words = words;
  const Eigen::Index d = source.vectors.cols();
  table.vectors.resize(static_cast<Eigen::Index>(words.size()), d);
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    auto it = index.find(words[i]);
    const double n = it == index.end() ? 0.0 : source.vectors.row(it->second).norm();
    if (n > 0.0) {
      table.vectors.row(r) = source.vectors.row(it->second) / n;
    } else {
      table.vectors.row(r) = fallback_vector(words[i], d).transpose();
      ++table.fallback_count;
    }
  }
  if (table.fallback_count > 0) {
    spdlog::info("{} of {} {} words use fallback vectors", table.fallback_count, words.size(), lang_name(lang));
  }
  return table;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path, const std::vector<std::string>& words, Lang lang) {
  return make_table(read_word_vectors(path), words, lang);
}

double AlignmentMap::orthogonality_error() const {
  const Matrix gram = w.transpose() * w;
  return (gram - Matrix::Identity(w.cols(), w.cols())).cwiseAbs().maxCoeff();
}

namespace {

Matrix solve_procrustes(const Matrix& source, const Matrix& target, const std::vector<SeedPair>& seed) {
  const Eigen::Index d = source.cols();
  Matrix cross = Matrix::Zero(d, d);
  for (const auto& p : seed) cross.noalias() += source.row(p.source).transpose() * target.row(p.target);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().transpose();
}

}  // namespace

AlignmentMap procrustes_align(const Matrix& source, const Matrix& target, const std::vector<SeedPair>& seed,
                              int self_learn_iters) {
  if (source.cols() != target.cols()) throw ConfigError("embedding dimensions differ between languages");
  if (seed.empty()) throw ConfigError("procrustes alignment needs a non-empty seed lexicon");
  if (static_cast<Eigen::Index>(seed.size()) < source.cols()) {
    spdlog::warn("seed lexicon has {} pairs for dimension {}; the alignment is under-determined", seed.size(),
                 source.cols());
  }
  AlignmentMap map{solve_procrustes(source, target, seed)};
  for (int it = 0; it < self_learn_iters; ++it) {
    const auto mapping = induce_mapping(source, target, map);
    std::vector<SeedPair> pairs;
    pairs.reserve(mapping.size());
    for (std::size_t i = 0; i < mapping.size(); ++i) pairs.push_back({static_cast<Eigen::Index>(i), mapping[i].row});
    map.w = solve_procrustes(source, target, pairs);
  }
  return map;
}

std::vector<SeedPair> identical_spelling_seed(const std::vector<std::string>& source_words,
                                              const std::vector<std::string>& target_words) {
  std::unordered_map<std::string, Eigen::Index> target_index;
  for (std::size_t i = 0; i < target_words.size(); ++i) {
    target_index.emplace(target_words[i], static_cast<Eigen::Index>(i));
  }
  std::vector<SeedPair> seed;
  for (std::size_t i = 0; i < source_words.size(); ++i) {
    auto it = target_index.find(source_words[i]);
    if (it != target_index.end()) seed.push_back({static_cast<Eigen::Index>(i), it->second});
  }
  return seed;
}

std::vector<Neighbor> nearest_neighbors(const Matrix& table, const Eigen::Ref<const Vector>& query, std::size_t k,
                                        Eigen::Index begin, Eigen::Index end) {
  if (k < 1) throw ConfigError("nearest_neighbors needs k >= 1");
  if (table.cols() != query.size()) throw ConfigError("query dimension does not match the table");
  begin = std::max<Eigen::Index>(begin, 0);
  end = std::min(end, table.rows());
  const double qn = query.norm();
  std::vector<Neighbor> all;
  all.reserve(static_cast<std::size_t>(std::max<Eigen::Index>(end - begin, 0)));
  for (Eigen::Index r = begin; r < end; ++r) {
    const double denom = table.row(r).norm() * qn;
    all.push_back({r, denom > 0.0 ? table.row(r).dot(query) / denom : 0.0});
  }
  auto better = [](const Neighbor& a, const Neighbor& b) {
    return a.cosine > b.cosine || (a.cosine == b.cosine && a.row < b.row);
  };
  const std::size_t keep = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<long>(keep), all.end(), better);
  all.resize(keep);
  return all;
}

std::vector<Neighbor> nearest_neighbors(const Matrix& table, const Eigen::Ref<const Vector>& query, std::size_t k) {
  return nearest_neighbors(table, query, k, 0, table.rows());
}

Neighbor nearest_unit_row(const Matrix& unit_table, const Eigen::Ref<const Vector>& query,
                          const std::vector<Eigen::Index>& candidates) {
  if (candidates.empty()) throw ConfigError("nearest-neighbor search over an empty candidate set");
  const double qn = query.norm();
  Neighbor best{-1, -std::numeric_limits<double>::infinity()};
  for (Eigen::Index r : candidates) {
    const double s = unit_table.row(r).dot(query);
    if (s > best.cosine) best = {r, s};
  }
  best.cosine = qn > 0.0 ? best.cosine / qn : 0.0;
  return best;
}

BilingualLexicon::BilingualLexicon(std::vector<LexiconEntry> entries) : entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) index_.emplace(entries_[i].source, i);
}

const std::string* BilingualLexicon::lookup(std::string_view source) const {
  auto it = index_.find(std::string(source));
  return it == index_.end() ? nullptr : &entries_[it->second].target;
}

void BilingualLexicon::write_tsv(std::ostream& out) const {
  out << std::setprecision(9);
  for (const auto& e : entries_) out << e.source << '\t' << e.target << '\t' << e.cosine << '\n';
}

BilingualLexicon BilingualLexicon::read_tsv(std::istream& in) {
  std::vector<LexiconEntry> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    LexiconEntry e;
    std::string score;
    if (!std::getline(fields, e.source, '\t') || !std::getline(fields, e.target, '\t') ||
        !std::getline(fields, score)) {
      throw FormatError("lexicon line must be l2_word<TAB>l1_word<TAB>cosine: " + line);
    }
    e.cosine = parse_double(score);
    entries.push_back(std::move(e));
  }
  return BilingualLexicon(std::move(entries));
}

std::vector<Neighbor> induce_mapping(const Matrix& source, const Matrix& target, const AlignmentMap& map) {
  Matrix mapped = map.apply(source);
  normalize_rows(mapped);
  Matrix tgt = target;
  normalize_rows(tgt);
  const Matrix scores = mapped * tgt.transpose();
  std::vector<Neighbor> out(static_cast<std::size_t>(source.rows()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Neighbor best{0, -std::numeric_limits<double>::infinity()};
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      if (scores(i, j) > best.cosine) best = {j, scores(i, j)};
    }
    best.cosine = std::clamp(best.cosine, -1.0, 1.0);
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

BilingualLexicon induce_lexicon(const EmbeddingTable& l2, const EmbeddingTable& l1, const AlignmentMap& map) {
  const auto mapping = induce_mapping(l2.vectors, l1.vectors, map);
  std::vector<LexiconEntry> entries;
  entries.reserve(mapping.size());
  for (std::size_t i = 0; i < mapping.size(); ++i) {
    entries.push_back({l2.words.at(i), l1.words.at(static_cast<std::size_t>(mapping[i].row)), mapping[i].cosine});
  }
  return BilingualLexicon(std::move(entries));
}

void write_matrix_text(std::ostream& out, const Matrix& m) {
  out << std::setprecision(17);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? " " : "") << m(i, j);
    out << '\n';
  }
}

Matrix read_matrix_text(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    auto fields = split_ws(line);
    if (fields.empty()) continue;
    std::vector<double> row;
    for (const auto& f : fields) row.push_back(parse_double(f));
    if (!rows.empty() && row.size() != rows.front().size()) throw FormatError("ragged matrix text");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError("empty matrix text");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return m;
}

Matrix combined_table(const Vocabulary& vocab, const EmbeddingTable& l1, const EmbeddingTable& l2,
                      const AlignmentMap* align) {
  if (l1.dim() != l2.dim()) throw ConfigError("embedding dimensions differ between languages");
  if (static_cast<std::size_t>(l1.rows()) != vocab.lang_size(Lang::L1) ||
      static_cast<std::size_t>(l2.rows()) != vocab.lang_size(Lang::L2)) {
    throw ConfigError("embedding tables do not cover the vocabulary");
  }
  const Eigen::Index d = l1.dim();
  Matrix out(static_cast<Eigen::Index>(vocab.size()), d);
  for (TokenId i = 0; i < Vocabulary::kNumSpecials; ++i) out.row(i) = fallback_vector(vocab.token(i), d).transpose();
  out.middleRows(vocab.lang_begin(Lang::L1), l1.rows()) = l1.vectors;
  Matrix mapped = align != nullptr ? align->apply(l2.vectors) : l2.vectors;
  normalize_rows(mapped);
  out.middleRows(vocab.lang_begin(Lang::L2), l2.rows()) = mapped;
  return out;
}

}  // namespace paravmf
