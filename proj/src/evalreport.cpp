#include "paravmf/evalreport.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace paravmf {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) return out;
    start = tab + 1;
  }
}

std::string escape_field(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  return out;
}

std::string unescape_field(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\' || i + 1 == s.size()) {
      out += s[i];
      continue;
    }
    const char n = s[++i];
    out += n == 't' ? '\t' : n == 'n' ? '\n' : n == 'r' ? '\r' : n;
  }
  return out;
}

std::uint64_t parse_u64(const std::string& s, std::string_view what) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(s, &used);
    if (used != s.size() || s.empty() || s[0] == '-') throw std::invalid_argument("x");
    return v;
  } catch (const std::exception&) {
    throw FormatError(fmt::format("bad {} '{}'", what, s));
  }
}

bool valid_name(std::string_view s) {
  if (s.empty()) return false;
  return std::none_of(s.begin(), s.end(), [](char c) { return c == '\t' || c == '\n' || c == '\r'; });
}

}  // namespace

// ---------------------------------------------------------------------------
// Meaning table

MeaningTable meaning_table(const std::vector<std::string>& systems, const std::vector<MeaningColumn>& columns,
                           const std::vector<std::vector<ScoreTable>>& tables) {
  if (tables.size() != systems.size()) throw FormatError("one row of score tables per system is required");
  MeaningTable t;
  t.systems = systems;
  t.columns = columns;
  for (std::size_t s = 0; s < systems.size(); ++s) {
    if (tables[s].size() != columns.size()) {
      throw FormatError(fmt::format("system {} has {} score tables for {} columns", systems[s], tables[s].size(),
                                    columns.size()));
    }
    std::vector<double> row;
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const ScoreTable& st = tables[s][c];
      if (st.size() != tables[0][c].size()) {
        throw FormatError(fmt::format("length mismatch in column {} {}: {} vs {}", columns[c].group,
                                      columns[c].metric, st.size(), tables[0][c].size()));
      }
      if (st.scores.empty()) throw FormatError("empty score table for " + systems[s]);
      const double sum = std::accumulate(st.scores.begin(), st.scores.end(), 0.0);
      row.push_back(100.0 * sum / static_cast<double>(st.size()));
    }
    t.cells.push_back(std::move(row));
  }
  return t;
}

void MeaningTable::write_text(std::ostream& out) const {
  std::size_t name_width = 5;
  for (const auto& s : systems) name_width = std::max(name_width, s.size());
  std::vector<std::size_t> widths;
  for (const auto& c : columns) widths.push_back(std::max<std::size_t>(c.metric.size(), 5));

  std::string groups = fmt::format("{:<{}}", "", name_width);
  for (std::size_t c = 0; c < columns.size();) {
    std::size_t end = c;
    std::size_t span = 0;
    while (end < columns.size() && columns[end].group == columns[c].group) span += widths[end++] + 2;
    groups += fmt::format("  {:<{}}", columns[c].group, span - 2);
    c = end;
  }
  while (!groups.empty() && groups.back() == ' ') groups.pop_back();
  out << groups << '\n';

  out << fmt::format("{:<{}}", "Model", name_width);
  for (std::size_t c = 0; c < columns.size(); ++c) out << fmt::format("  {:>{}}", columns[c].metric, widths[c]);
  out << '\n';
  for (std::size_t s = 0; s < systems.size(); ++s) {
    out << fmt::format("{:<{}}", systems[s], name_width);
    for (std::size_t c = 0; c < columns.size(); ++c) out << fmt::format("  {:>{}.1f}", cells[s][c], widths[c]);
    out << '\n';
  }
}

void MeaningTable::write_tsv(std::ostream& out) const {
  out << "system\tgroup\tmetric\tscore\n";
  for (std::size_t s = 0; s < systems.size(); ++s) {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      out << fmt::format("{}\t{}\t{}\t{:.4f}\n", systems[s], columns[c].group, columns[c].metric, cells[s][c]);
    }
  }
}

// ---------------------------------------------------------------------------
// Agreement

std::string_view choice_name(Choice c) {
  switch (c) {
    case Choice::First: return "first";
    case Choice::Second: return "second";
    case Choice::Neither: return "neither";
  }
  return "neither";
}

Choice parse_choice(std::string_view text) {
  if (text == "first") return Choice::First;
  if (text == "second") return Choice::Second;
  if (text == "neither") return Choice::Neither;
  throw FormatError(fmt::format("choice must be first, second or neither, got '{}'", text));
}

std::string_view vote_name(Vote v) {
  switch (v) {
    case Vote::A: return "A";
    case Vote::B: return "B";
    case Vote::Neither: return "neither";
  }
  return "neither";
}

KappaResult cohen_kappa(const Contingency& counts) {
  KappaResult r;
  std::array<std::size_t, 3> rows{}, cols{};
  std::size_t agree = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      r.items += counts[i][j];
      rows[i] += counts[i][j];
      cols[j] += counts[i][j];
    }
    agree += counts[i][i];
  }
  if (r.items == 0) return r;
  // Integer numerators keep textbook cases exact: kappa = (n*agree - sum m) / (n^2 - sum m).
  std::size_t marg = 0;
  for (std::size_t k = 0; k < 3; ++k) marg += rows[k] * cols[k];
  const double n = static_cast<double>(r.items);
  r.p_o = static_cast<double>(agree) / n;
  r.p_e = static_cast<double>(marg) / (n * n);
  const std::size_t n2 = r.items * r.items;
  if (marg == n2) return r;
  r.kappa = (static_cast<double>(r.items * agree) - static_cast<double>(marg)) / static_cast<double>(n2 - marg);
  return r;
}

KappaResult cohen_kappa(const std::vector<Vote>& r1, const std::vector<Vote>& r2) {
  if (r1.size() != r2.size()) throw DomainError("raters must rate the same items");
  Contingency c{};
  for (std::size_t i = 0; i < r1.size(); ++i) ++c[static_cast<std::size_t>(r1[i])][static_cast<std::size_t>(r2[i])];
  return cohen_kappa(c);
}

// ---------------------------------------------------------------------------
// Sessions

Vote AbItem::resolve(Choice c) const {
  if (c == Choice::Neither) return Vote::Neither;
  const bool picked_first = c == Choice::First;
  return picked_first == a_first ? Vote::A : Vote::B;
}

bool a_first_from_seed(std::uint64_t shuffle_seed) {
  std::mt19937_64 rng(shuffle_seed);
  return (rng() >> 63) == 0;
}

bool AbSession::has_annotator(const std::string& name) const {
  return annotators.empty() || std::find(annotators.begin(), annotators.end(), name) != annotators.end();
}

bool AbSession::operator==(const AbSession& o) const {
  auto item_eq = [](const AbItem& a, const AbItem& b) {
    return a.id == b.id && a.line == b.line && a.input == b.input && a.candidate_a == b.candidate_a &&
           a.candidate_b == b.candidate_b && a.shuffle_seed == b.shuffle_seed && a.a_first == b.a_first;
  };
  return id == o.id && system_a == o.system_a && system_b == o.system_b && seed == o.seed &&
         annotators == o.annotators && status == o.status &&
         std::equal(items.begin(), items.end(), o.items.begin(), o.items.end(), item_eq);
}

void AbSession::write(std::ostream& out) const {
  std::string roster;
  for (std::size_t i = 0; i < annotators.size(); ++i) roster += (i ? "," : "") + annotators[i];
  out << "#session\t" << escape_field(id) << '\n';
  out << "#systems\t" << escape_field(system_a) << '\t' << escape_field(system_b) << '\n';
  out << "#seed\t" << seed << '\n';
  out << "#annotators\t" << escape_field(roster) << '\n';
  out << "#status\t" << status << '\n';
  out << "item\tline\tshuffle_seed\torder\tinput\tcandidate_a\tcandidate_b\n";
  for (const auto& it : items) {
    out << it.id << '\t' << it.line << '\t' << it.shuffle_seed << '\t' << (it.a_first ? "AB" : "BA") << '\t'
        << escape_field(it.input) << '\t' << escape_field(it.candidate_a) << '\t' << escape_field(it.candidate_b)
        << '\n';
  }
}

AbSession AbSession::read(std::istream& in) {
  AbSession s;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    if (line[0] == '#') {
      if (f[0] == "#session" && f.size() == 2) {
        s.id = unescape_field(f[1]);
      } else if (f[0] == "#systems" && f.size() == 3) {
        s.system_a = unescape_field(f[1]);
        s.system_b = unescape_field(f[2]);
      } else if (f[0] == "#seed" && f.size() == 2) {
        s.seed = parse_u64(f[1], "seed");
      } else if (f[0] == "#annotators" && f.size() == 2) {
        const std::string roster = unescape_field(f[1]);
        std::stringstream ss(roster);
        std::string name;
        while (std::getline(ss, name, ',')) {
          if (!name.empty()) s.annotators.push_back(name);
        }
      } else if (f[0] == "#status" && f.size() == 2) {
        s.status = f[1];
      } else {
        throw FormatError("unknown session header: " + f[0]);
      }
      continue;
    }
    if (!header_seen) {
      if (f.size() != 7 || f[0] != "item") throw FormatError("session file lacks the item header row");
      header_seen = true;
      continue;
    }
    if (f.size() != 7) throw FormatError(fmt::format("session item row has {} fields, expected 7", f.size()));
    AbItem it;
    it.id = parse_u64(f[0], "item id");
    it.line = parse_u64(f[1], "line");
    it.shuffle_seed = parse_u64(f[2], "shuffle seed");
    if (f[3] != "AB" && f[3] != "BA") throw FormatError("order must be AB or BA");
    it.a_first = f[3] == "AB";
    if (it.a_first != a_first_from_seed(it.shuffle_seed)) {
      throw FormatError(fmt::format("item {}: stored order disagrees with its shuffle seed", it.id));
    }
    it.input = unescape_field(f[4]);
    it.candidate_a = unescape_field(f[5]);
    it.candidate_b = unescape_field(f[6]);
    if (it.id != s.items.size()) throw FormatError("session items must be numbered 0..n-1 in order");
    s.items.push_back(std::move(it));
  }
  if (s.id.empty()) throw FormatError("session file has no #session header");
  return s;
}

AbSession create_session(std::string id, const std::vector<std::string>& inputs,
                         const std::vector<std::string>& outputs_a, const std::vector<std::string>& outputs_b,
                         std::size_t n_items, std::uint64_t seed, std::string system_a, std::string system_b) {
  if (!valid_name(id) || id.find('/') != std::string::npos || id.find("..") != std::string::npos) {
    throw ConfigError("invalid session id: '" + id + "'");
  }
  if (inputs.size() != outputs_a.size() || inputs.size() != outputs_b.size()) {
    throw FormatError(fmt::format("inputs and outputs are not line-aligned ({}, {}, {} lines)", inputs.size(),
                                  outputs_a.size(), outputs_b.size()));
  }
  if (n_items == 0 || n_items > inputs.size()) {
    throw ConfigError(fmt::format("n_items must be in [1, {}], got {}", inputs.size(), n_items));
  }
  AbSession s;
  s.id = std::move(id);
  s.system_a = std::move(system_a);
  s.system_b = std::move(system_b);
  s.seed = seed;
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> lines(inputs.size());
  std::iota(lines.begin(), lines.end(), std::size_t{0});
  // Partial Fisher-Yates: the first n_items entries are a uniform sample.
  for (std::size_t i = 0; i < n_items; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, lines.size() - 1);
    std::swap(lines[i], lines[pick(rng)]);
  }
  for (std::size_t i = 0; i < n_items; ++i) {
    AbItem it;
    it.id = i;
    it.line = lines[i];
    it.input = inputs[it.line];
    it.candidate_a = outputs_a[it.line];
    it.candidate_b = outputs_b[it.line];
    it.shuffle_seed = rng();
    it.a_first = a_first_from_seed(it.shuffle_seed);
    s.items.push_back(std::move(it));
  }
  return s;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}.{:03}Z", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                     tm.tm_hour, tm.tm_min, tm.tm_sec, ms);
}

std::string_view status_message(JudgmentStatus s) {
  switch (s) {
    case JudgmentStatus::Accepted: return "accepted";
    case JudgmentStatus::Duplicate: return "this annotator already judged this item";
    case JudgmentStatus::UnknownSession: return "unknown session";
    case JudgmentStatus::UnknownItem: return "unknown item";
    case JudgmentStatus::UnknownAnnotator: return "annotator is not on the session roster";
  }
  return "unknown";
}

SessionStore::SessionStore(std::filesystem::path root) : root_(std::move(root)) {
  std::filesystem::create_directories(root_ / "sessions");
  load();
}

std::filesystem::path SessionStore::session_path(const std::string& id) const {
  return root_ / "sessions" / (id + ".tsv");
}

void SessionStore::load() {
  for (const auto& entry : std::filesystem::directory_iterator(root_ / "sessions")) {
    if (entry.path().extension() != ".tsv") continue;
    std::ifstream in(entry.path());
    AbSession s = AbSession::read(in);
    const std::string id = s.id;
    sessions_.emplace(id, std::move(s));
  }
  std::ifstream in(judgment_log(), std::ios::binary);
  if (in) {
    in.seekg(0, std::ios::end);
    if (in.tellg() > 0) {
      in.seekg(-1, std::ios::end);
      log_needs_newline_ = in.get() != '\n';
    }
    in.clear();
    in.seekg(0);
  }
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    if (f.size() != 5) {
      // A torn final write leaves a partial line; everything before it is intact.
      spdlog::warn("{}:{}: skipping malformed judgment record", judgment_log().string(), line_no);
      continue;
    }
    JudgmentRecord rec{f[0], static_cast<std::size_t>(parse_u64(f[1], "item")), f[2], parse_choice(f[3]), f[4]};
    if (!seen_.emplace(rec.session, rec.item, rec.annotator).second) {
      spdlog::warn("{}:{}: duplicate judgment ignored", judgment_log().string(), line_no);
      continue;
    }
    records_.push_back(std::move(rec));
  }
}

void SessionStore::add(const AbSession& session) {
  std::lock_guard lock(mutex_);
  const auto path = session_path(session.id);
  if (sessions_.count(session.id) || std::filesystem::exists(path)) {
    throw Error("session already exists: " + session.id);
  }
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    session.write(out);
    if (!out) throw Error("cannot write session file " + tmp);
  }
  std::filesystem::rename(tmp, path);
  sessions_.emplace(session.id, session);
}

std::optional<AbSession> SessionStore::session(const std::string& id) const {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> SessionStore::session_ids() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> ids;
  for (const auto& [id, s] : sessions_) ids.push_back(id);
  return ids;
}

JudgmentStatus SessionStore::record(JudgmentRecord rec) {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(rec.session);
  if (it == sessions_.end()) return JudgmentStatus::UnknownSession;
  if (rec.item >= it->second.items.size()) return JudgmentStatus::UnknownItem;
  if (!valid_name(rec.annotator) || !it->second.has_annotator(rec.annotator)) {
    return JudgmentStatus::UnknownAnnotator;
  }
  if (seen_.count({rec.session, rec.item, rec.annotator})) return JudgmentStatus::Duplicate;
  if (rec.timestamp.empty()) rec.timestamp = utc_timestamp();
  {
    std::ofstream out(judgment_log(), std::ios::app);
    // Terminate a torn tail so the new record starts on its own line.
    if (log_needs_newline_) out << '\n';
    out << rec.session << '\t' << rec.item << '\t' << rec.annotator << '\t' << choice_name(rec.choice) << '\t'
        << rec.timestamp << '\n';
    out.flush();
    if (!out) throw Error("cannot append to " + judgment_log().string());
    log_needs_newline_ = false;
  }
  seen_.emplace(rec.session, rec.item, rec.annotator);
  records_.push_back(std::move(rec));
  return JudgmentStatus::Accepted;
}

std::vector<JudgmentRecord> SessionStore::judgments(const std::string& session_id) const {
  std::lock_guard lock(mutex_);
  std::vector<JudgmentRecord> out;
  for (const auto& r : records_) {
    if (r.session == session_id) out.push_back(r);
  }
  return out;
}

std::optional<std::size_t> SessionStore::next_item(const std::string& session_id,
                                                   const std::string& annotator) const {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(session_id);
  if (it == sessions_.end()) return std::nullopt;
  for (std::size_t i = 0; i < it->second.items.size(); ++i) {
    if (!seen_.count({session_id, i, annotator})) return i;
  }
  return std::nullopt;
}

std::size_t SessionStore::judged_count(const std::string& session_id, const std::string& annotator) const {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(session_id);
  if (it == sessions_.end()) return 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < it->second.items.size(); ++i) n += seen_.count({session_id, i, annotator});
  return n;
}

// ---------------------------------------------------------------------------
// Report

bool session_complete(const AbSession& session, const std::vector<JudgmentRecord>& judgments) {
  std::vector<std::set<std::string>> by_item(session.items.size());
  for (const auto& j : judgments) {
    if (j.session == session.id && j.item < by_item.size()) by_item[j.item].insert(j.annotator);
  }
  for (const auto& raters : by_item) {
    if (session.annotators.empty()) {
      if (raters.size() < 2) return false;
    } else if (!std::all_of(session.annotators.begin(), session.annotators.end(),
                            [&](const std::string& a) { return raters.count(a) > 0; })) {
      return false;
    }
  }
  return true;
}

AbReport ab_report(const AbSession& session, const std::vector<JudgmentRecord>& judgments,
                   const AbReportOptions& options) {
  if (!options.force && !session_complete(session, judgments)) {
    throw Error("session " + session.id + " is incomplete; use force to report it anyway");
  }
  AbReport r;
  r.system_a = session.system_a;
  r.system_b = session.system_b;
  r.items = session.items.size();

  // votes[item][annotator]
  std::vector<std::map<std::string, Vote>> votes(session.items.size());
  std::set<std::string> raters;
  for (const auto& j : judgments) {
    if (j.session != session.id) continue;
    if (j.item >= session.items.size()) throw FormatError(fmt::format("judgment for unknown item {}", j.item));
    votes[j.item].emplace(j.annotator, session.items[j.item].resolve(j.choice));
    raters.insert(j.annotator);
  }

  auto tally = [&](Vote v) {
    (v == Vote::A ? r.votes_a : v == Vote::B ? r.votes_b : r.votes_neither) += 1;
  };
  for (const auto& item_votes : votes) {
    if (item_votes.empty()) continue;
    ++r.judged_items;
    if (!options.require_majority) {
      for (const auto& [who, v] : item_votes) tally(v);
      continue;
    }
    std::array<std::size_t, 3> count{};
    for (const auto& [who, v] : item_votes) ++count[static_cast<std::size_t>(v)];
    const auto best = std::max_element(count.begin(), count.end());
    if (2 * *best > item_votes.size()) {
      ++r.agreed;
      tally(static_cast<Vote>(best - count.begin()));
    } else {
      ++r.no_majority;
    }
  }
  const std::size_t ab = r.votes_a + r.votes_b;
  if (ab > 0) {
    r.percent_a = 100.0 * static_cast<double>(r.votes_a) / static_cast<double>(ab);
    r.percent_b = 100.0 * static_cast<double>(r.votes_b) / static_cast<double>(ab);
  } else {
    spdlog::warn("session {}: no votes for either system; percentages are empty", session.id);
  }

  KappaReport& k = r.agreement;
  k.no_majority = r.no_majority;
  const std::vector<std::string> names(raters.begin(), raters.end());
  double kappa_sum = 0.0, po_sum = 0.0, pe_sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t a = 0; a < names.size(); ++a) {
    for (std::size_t b = a + 1; b < names.size(); ++b) {
      Contingency c{};
      for (const auto& item_votes : votes) {
        const auto va = item_votes.find(names[a]);
        const auto vb = item_votes.find(names[b]);
        if (va == item_votes.end() || vb == item_votes.end()) continue;
        ++c[static_cast<std::size_t>(va->second)][static_cast<std::size_t>(vb->second)];
      }
      PairKappa p{names[a], names[b], cohen_kappa(c)};
      if (p.result.kappa) {
        kappa_sum += *p.result.kappa;
        po_sum += p.result.p_o;
        pe_sum += p.result.p_e;
        ++defined;
      }
      k.pairs.push_back(std::move(p));
    }
  }
  if (defined > 0) {
    k.average_kappa = kappa_sum / static_cast<double>(defined);
    k.p_o = po_sum / static_cast<double>(defined);
    k.p_e = pe_sum / static_cast<double>(defined);
  }
  return r;
}

void AbReport::write_text(std::ostream& out) const {
  const std::size_t name_width = std::max({system_a.size(), system_b.size(), std::size_t{5}});
  auto row = [&](const std::string& name, std::size_t votes, const std::optional<double>& pct) {
    const std::string share = pct ? fmt::format("{} ({:.1f}%)", votes, *pct) : fmt::format("{} (-)", votes);
    out << fmt::format("{:<{}}  {}\n", name, name_width, share);
  };
  out << fmt::format("{:<{}}  {}\n", "Model", name_width, "Votes (%)");
  row(system_b, votes_b, percent_b);
  row(system_a, votes_a, percent_a);
  out << '\n';
  out << fmt::format("items {}  judged {}  agreed {}  no-majority {}  neither {}\n", items, judged_items, agreed,
                     no_majority, votes_neither);
  for (const auto& p : agreement.pairs) {
    const std::string kappa = p.result.kappa ? fmt::format("{:.3f}", *p.result.kappa) : "undefined";
    out << fmt::format("kappa {} {}: {} (p_o {:.3f}, p_e {:.3f}, n {})\n", p.annotator_1, p.annotator_2, kappa,
                       p.result.p_o, p.result.p_e, p.result.items);
  }
  out << "pairwise-average kappa: "
      << (agreement.average_kappa ? fmt::format("{:.3f}", *agreement.average_kappa) : std::string("undefined"))
      << '\n';
}

}  // namespace paravmf
