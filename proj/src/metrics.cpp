#include "paravmf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace paravmf {

double iou(const Tokens& a, const Tokens& b) {
  const std::set<std::string> sa(a.begin(), a.end());
  const std::set<std::string> sb(b.begin(), b.end());
  if (sa.empty() && sb.empty()) return 100.0;
  std::size_t inter = 0;
  for (const auto& t : sa) inter += sb.count(t);
  const std::size_t uni = sa.size() + sb.size() - inter;
  return 100.0 * static_cast<double>(inter) / static_cast<double>(uni);
}

std::size_t edit_distance(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double wer(const Tokens& hypothesis, const Tokens& reference) {
  if (reference.empty()) throw DomainError("WER needs a non-empty reference");
  return 100.0 * static_cast<double>(edit_distance(hypothesis, reference)) / static_cast<double>(reference.size());
}

// ---------------------------------------------------------------------------
// Parse trees

std::size_t ParseTree::size() const {
  std::size_t n = 1;
  for (const auto& c : children) n += c.size();
  return n;
}

std::size_t ParseTree::height() const {
  std::size_t h = 0;
  for (const auto& c : children) h = std::max(h, c.height() + 1);
  return h;
}

std::string ParseTree::to_string() const {
  if (terminal) return label;
  std::string out = "(" + label;
  for (const auto& c : children) out += " " + c.to_string();
  return out + ")";
}

namespace {

class BracketParser {
 public:
  explicit BracketParser(std::string_view text) : text_(text) {}

  ParseTree parse() {
    skip_space();
    if (pos_ >= text_.size()) throw ParseError("empty tree", pos_);
    if (text_[pos_] != '(') throw ParseError("expected '('", pos_);
    ParseTree tree = node();
    skip_space();
    if (pos_ != text_.size()) throw ParseError("trailing text after the tree", pos_);
    return tree;
  }

 private:
  ParseTree node() {
    const std::size_t open = pos_;
    ++pos_;  // '('
    skip_space();
    ParseTree tree;
    tree.label = token();
    if (tree.label.empty()) throw ParseError("missing node label", pos_);
    for (;;) {
      skip_space();
      if (pos_ >= text_.size()) throw ParseError("unbalanced parentheses: node opened here is never closed", open);
      const char c = text_[pos_];
      if (c == ')') {
        ++pos_;
        return tree;
      }
      if (c == '(') {
        tree.children.push_back(node());
      } else {
        ParseTree leaf;
        leaf.label = token();
        leaf.terminal = true;
        tree.children.push_back(std::move(leaf));
      }
    }
  }

  std::string token() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_])) && text_[pos_] != '(' &&
           text_[pos_] != ')') {
      ++pos_;
    }
    return std::string(text_.substr(start, pos_ - start));
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

ParseTree truncate(const ParseTree& t, std::size_t depth, std::size_t max_depth) {
  ParseTree out;
  out.label = t.label;
  out.terminal = t.terminal;
  if (depth < max_depth) {
    for (const auto& c : t.children) out.children.push_back(truncate(c, depth + 1, max_depth));
  }
  return out;
}

void drop_leaves(ParseTree& t) {
  std::vector<ParseTree> kept;
  for (auto& c : t.children) {
    if (c.children.empty()) continue;
    drop_leaves(c);
    kept.push_back(std::move(c));
  }
  t.children = std::move(kept);
}

struct Flat {
  std::vector<const std::string*> labels;  // postorder
  std::vector<std::size_t> lml;           // leftmost leaf descendant, postorder index
  std::vector<std::size_t> keyroots;
};

std::size_t flatten(const ParseTree& t, Flat& f) {
  std::size_t leftmost = SIZE_MAX;
  for (const auto& c : t.children) {
    const std::size_t l = flatten(c, f);
    if (leftmost == SIZE_MAX) leftmost = l;
  }
  const std::size_t index = f.labels.size();
  f.labels.push_back(&t.label);
  f.lml.push_back(leftmost == SIZE_MAX ? index : leftmost);
  return f.lml.back();
}

Flat make_flat(const ParseTree& t) {
  Flat f;
  flatten(t, f);
  std::vector<bool> seen(f.labels.size(), false);
  for (std::size_t i = f.labels.size(); i-- > 0;) {
    if (!seen[f.lml[i]]) {
      seen[f.lml[i]] = true;
      f.keyroots.push_back(i);
    }
  }
  std::sort(f.keyroots.begin(), f.keyroots.end());
  return f;
}

}  // namespace

ParseTree parse_bracketed(std::string_view text) { return BracketParser(text).parse(); }

ParseTree prune_for_pted(const ParseTree& tree) {
  ParseTree out = truncate(tree, 0, 2);
  drop_leaves(out);
  return out;
}

std::size_t tree_edit_distance(const ParseTree& a, const ParseTree& b) {
  const Flat fa = make_flat(a);
  const Flat fb = make_flat(b);
  const std::size_t na = fa.labels.size();
  const std::size_t nb = fb.labels.size();
  std::vector<std::size_t> td(na * nb, 0);
  std::vector<std::size_t> fd((na + 1) * (nb + 1), 0);
  const std::size_t stride = nb + 1;
  for (std::size_t i : fa.keyroots) {
    for (std::size_t j : fb.keyroots) {
      const std::size_t li = fa.lml[i];
      const std::size_t lj = fb.lml[j];
      auto at = [&](std::size_t x, std::size_t y) -> std::size_t& { return fd[x * stride + y]; };
      at(0, 0) = 0;
      for (std::size_t x = 1; x <= i - li + 1; ++x) at(x, 0) = at(x - 1, 0) + 1;
      for (std::size_t y = 1; y <= j - lj + 1; ++y) at(0, y) = at(0, y - 1) + 1;
      for (std::size_t i1 = li; i1 <= i; ++i1) {
        for (std::size_t j1 = lj; j1 <= j; ++j1) {
          const std::size_t x = i1 - li + 1;
          const std::size_t y = j1 - lj + 1;
          const std::size_t del = at(x - 1, y) + 1;
          const std::size_t ins = at(x, y - 1) + 1;
          if (fa.lml[i1] == li && fb.lml[j1] == lj) {
            const std::size_t rel = at(x - 1, y - 1) + (*fa.labels[i1] == *fb.labels[j1] ? 0 : 1);
            at(x, y) = std::min({del, ins, rel});
            td[i1 * nb + j1] = at(x, y);
          } else {
            const std::size_t sub = at(fa.lml[i1] - li, fb.lml[j1] - lj) + td[i1 * nb + j1];
            at(x, y) = std::min({del, ins, sub});
          }
        }
      }
    }
  }
  return td[(na - 1) * nb + (nb - 1)];
}

// ---------------------------------------------------------------------------
// Score tables and bucketing

ScoreTable read_score_table(std::istream& in, std::string label) {
  std::vector<std::optional<double>> slots;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw FormatError(fmt::format("score line {} lacks a tab", line_no));
    std::size_t index = 0;
    double score = 0.0;
    try {
      std::size_t used = 0;
      const long long raw = std::stoll(line.substr(0, tab), &used);
      if (raw < 0 || used != tab) throw std::invalid_argument("index");
      index = static_cast<std::size_t>(raw);
      score = std::stod(line.substr(tab + 1), &used);
      if (used != line.size() - tab - 1) throw std::invalid_argument("score");
    } catch (const std::exception&) {
      throw FormatError(fmt::format("score line {} must be line_index<TAB>score", line_no));
    }
    if (!std::isfinite(score) || score < 0.0 || score > 1.0) {
      throw FormatError(fmt::format("score line {}: score {} outside [0, 1]", line_no, score));
    }
    if (index >= slots.size()) slots.resize(index + 1);
    if (slots[index]) throw FormatError(fmt::format("score line {}: duplicate index {}", line_no, index));
    slots[index] = score;
  }
  ScoreTable table;
  table.label = std::move(label);
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (!slots[i]) throw FormatError(fmt::format("score table has no entry for line {}", i));
    table.scores.push_back(*slots[i]);
  }
  return table;
}

ScoreTable read_score_table(const std::filesystem::path& path, std::string label) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open score file: " + path.string());
  return read_score_table(in, label.empty() ? path.filename().string() : std::move(label));
}

void write_score_table(std::ostream& out, const ScoreTable& table) {
  out << std::setprecision(10);
  for (std::size_t i = 0; i < table.scores.size(); ++i) out << i << '\t' << table.scores[i] << '\n';
}

std::vector<std::vector<std::size_t>> bucket_subsets(const ScoreTable& a, const ScoreTable& b,
                                                     const std::vector<double>& thresholds) {
  if (a.size() != b.size()) {
    throw FormatError(fmt::format("score tables differ in length ({} vs {})", a.size(), b.size()));
  }
  std::vector<std::vector<std::size_t>> out;
  for (double tau : thresholds) {
    std::vector<std::size_t> subset;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a.scores[i] >= tau && b.scores[i] >= tau) subset.push_back(i);
    }
    out.push_back(std::move(subset));
  }
  return out;
}

double fallback_similarity(const Tokens& a, const Tokens& b,
                           const std::function<std::optional<Vector>(const std::string&)>& lookup) {
  auto mean = [&](const Tokens& t) -> std::optional<Vector> {
    std::optional<Vector> sum;
    for (const auto& w : t) {
      auto v = lookup(w);
      if (!v || v->norm() == 0.0) continue;
      const Vector unit = *v / v->norm();
      if (sum) {
        *sum += unit;
      } else {
        sum = unit;
      }
    }
    return sum;
  };
  const auto ma = mean(a);
  const auto mb = mean(b);
  if (!ma || !mb || ma->norm() == 0.0 || mb->norm() == 0.0) return 0.0;
  return std::clamp(ma->dot(*mb) / (ma->norm() * mb->norm()), 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Diversity report

std::vector<std::optional<ParseTree>> read_parses(std::istream& in) {
  std::vector<std::optional<ParseTree>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) {
      out.emplace_back();
      continue;
    }
    try {
      out.emplace_back(parse_bracketed(line));
    } catch (const ParseError& e) {
      spdlog::warn("parse line {}: {}", out.size(), e.what());
      out.emplace_back();
    }
  }
  return out;
}

DiversityReport diversity_report(const std::vector<Tokens>& inputs,
                                 const std::vector<std::optional<ParseTree>>& input_parses,
                                 const std::vector<SystemOutputs>& systems, const ScoreTable& gate_a,
                                 const ScoreTable& gate_b, const std::vector<double>& thresholds) {
  const std::size_t n = inputs.size();
  if (gate_a.size() != n || gate_b.size() != n) throw FormatError("score tables are not line-aligned with the inputs");
  for (const auto& s : systems) {
    if (s.sentences.size() != n) throw FormatError("outputs of " + s.name + " are not line-aligned with the inputs");
  }
  std::vector<std::optional<ParseTree>> pruned_inputs(n);
  for (std::size_t i = 0; i < n && i < input_parses.size(); ++i) {
    if (input_parses[i]) pruned_inputs[i] = prune_for_pted(*input_parses[i]);
  }
  std::vector<std::vector<std::optional<ParseTree>>> pruned_outputs;
  for (const auto& s : systems) {
    std::vector<std::optional<ParseTree>> p(n);
    for (std::size_t i = 0; i < n && i < s.parses.size(); ++i) {
      if (s.parses[i]) p[i] = prune_for_pted(*s.parses[i]);
    }
    pruned_outputs.push_back(std::move(p));
  }

  DiversityReport report;
  report.total_items = n;
  for (const auto& s : systems) report.systems.push_back(s.name);
  const auto subsets = bucket_subsets(gate_a, gate_b, thresholds);
  for (std::size_t t = 0; t < thresholds.size(); ++t) {
    DiversityRow row;
    row.threshold = thresholds[t];
    row.subset_size = subsets[t].size();
    for (std::size_t s = 0; s < systems.size(); ++s) {
      DiversityCell cell;
      double iou_sum = 0.0, wer_sum = 0.0, pted_sum = 0.0;
      std::size_t wer_items = 0;
      for (std::size_t i : subsets[t]) {
        const Tokens& out = systems[s].sentences[i];
        iou_sum += iou(out, inputs[i]);
        if (!inputs[i].empty()) {
          wer_sum += wer(out, inputs[i]);
          ++wer_items;
        }
        if (pruned_inputs[i] && pruned_outputs[s][i]) {
          pted_sum += static_cast<double>(tree_edit_distance(*pruned_outputs[s][i], *pruned_inputs[i]));
          ++cell.pted_items;
        } else {
          ++cell.pted_excluded;
        }
      }
      const double k = static_cast<double>(subsets[t].size());
      cell.iou = subsets[t].empty() ? 0.0 : iou_sum / k;
      cell.wer = wer_items ? wer_sum / static_cast<double>(wer_items) : 0.0;
      cell.pted = cell.pted_items ? pted_sum / static_cast<double>(cell.pted_items) : 0.0;
      row.cells.push_back(cell);
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

void DiversityReport::write_tsv(std::ostream& out) const {
  out << "threshold\tsubset\tsystem\tiou\twer_percent\tpted\tpted_items\tpted_excluded\n";
  for (const auto& row : rows) {
    for (std::size_t s = 0; s < systems.size(); ++s) {
      const auto& c = row.cells[s];
      out << fmt::format("{:.2f}\t{}\t{}\t{:.4f}\t{:.4f}\t{:.4f}\t{}\t{}\n", row.threshold, row.subset_size,
                         systems[s], c.iou, c.wer, c.pted, c.pted_items, c.pted_excluded);
    }
  }
}

void DiversityReport::write_text(std::ostream& out) const {
  std::size_t name_width = 6;
  for (const auto& s : systems) name_width = std::max(name_width, s.size());
  const std::string subset_header = fmt::format("# (out of {})", total_items);
  const std::size_t subset_width = std::max<std::size_t>(subset_header.size(), 6);
  out << fmt::format("{:<9}  {:>{}}  {:<{}}  {:>6}  {:>7}  {:>6}\n", "Threshold", subset_header, subset_width,
                     "System", name_width, "IoU", "WER(%)", "PTED");
  for (const auto& row : rows) {
    for (std::size_t s = 0; s < systems.size(); ++s) {
      const auto& c = row.cells[s];
      const std::string thr = s == 0 ? fmt::format("{:.2f}", row.threshold) : "";
      const std::string size = s == 0 ? std::to_string(row.subset_size) : "";
      out << fmt::format("{:<9}  {:>{}}  {:<{}}  {:>6.1f}  {:>7.1f}  {:>6.2f}\n", thr, size, subset_width, systems[s],
                         name_width, c.iou, c.wer, c.pted);
    }
  }
}

}  // namespace paravmf
