#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "paravmf/common.hpp"
#include "paravmf/metrics.hpp"

namespace paravmf {

// ---------------------------------------------------------------------------
// Meaning-preservation table

struct MeaningColumn {
  std::string group;   // e.g. "English"
  std::string metric;  // e.g. "BS"
};

struct MeaningTable {
  std::vector<MeaningColumn> columns;
  std::vector<std::string> systems;
  /// cells[system][column] = mean score * 100.
  std::vector<std::vector<double>> cells;

  void write_text(std::ostream& out) const;
  void write_tsv(std::ostream& out) const;
};

/// tables[system][column]; every table in a column must have the same length.
MeaningTable meaning_table(const std::vector<std::string>& systems, const std::vector<MeaningColumn>& columns,
                           const std::vector<std::vector<ScoreTable>>& tables);

// ---------------------------------------------------------------------------
// Agreement

/// A, B (the two systems) or neither.
enum class Vote : std::uint8_t { A = 0, B = 1, Neither = 2 };
/// Presented position chosen by the annotator.
enum class Choice : std::uint8_t { First = 0, Second = 1, Neither = 2 };

std::string_view choice_name(Choice c);
Choice parse_choice(std::string_view text);
std::string_view vote_name(Vote v);

/// counts[i][j]: items rater 1 put in category i and rater 2 in category j.
using Contingency = std::array<std::array<std::size_t, 3>, 3>;

struct KappaResult {
  std::size_t items = 0;
  double p_o = 0.0;
  double p_e = 0.0;
  /// Undefined (nullopt) when p_e = 1 or there are no items.
  std::optional<double> kappa;
};

KappaResult cohen_kappa(const Contingency& counts);
/// Both lists rate the same items in the same order.
KappaResult cohen_kappa(const std::vector<Vote>& r1, const std::vector<Vote>& r2);

struct PairKappa {
  std::string annotator_1;
  std::string annotator_2;
  KappaResult result;
};

struct KappaReport {
  std::vector<PairKappa> pairs;
  /// Means over the pairs with a defined kappa.
  double p_o = 0.0;
  double p_e = 0.0;
  std::optional<double> average_kappa;
  std::size_t no_majority = 0;
};

// ---------------------------------------------------------------------------
// A/B sessions

struct AbItem {
  std::size_t id = 0;
  std::size_t line = 0;  // line index in the source files
  std::string input;
  std::string candidate_a;
  std::string candidate_b;
  std::uint64_t shuffle_seed = 0;
  bool a_first = true;  // derived from shuffle_seed

  /// Maps a presented position to the system behind it.
  Vote resolve(Choice c) const;
  const std::string& first() const { return a_first ? candidate_a : candidate_b; }
  const std::string& second() const { return a_first ? candidate_b : candidate_a; }
};

/// Presentation order implied by a per-item seed.
bool a_first_from_seed(std::uint64_t shuffle_seed);

struct AbSession {
  std::string id;
  std::string system_a;  // never sent to annotators
  std::string system_b;
  std::uint64_t seed = 0;
  std::vector<AbItem> items;
  std::vector<std::string> annotators;  // empty: anyone may judge
  std::string status = "open";

  bool has_annotator(const std::string& name) const;
  void write(std::ostream& out) const;
  static AbSession read(std::istream& in);
  bool operator==(const AbSession&) const;
};

/// Uniform subsample of n_items lines without replacement, in sampled order, with
/// a per-item shuffle. Fails on misaligned inputs or n_items > corpus size.
AbSession create_session(std::string id, const std::vector<std::string>& inputs,
                         const std::vector<std::string>& outputs_a, const std::vector<std::string>& outputs_b,
                         std::size_t n_items, std::uint64_t seed, std::string system_a = "A",
                         std::string system_b = "B");

struct JudgmentRecord {
  std::string session;
  std::size_t item = 0;
  std::string annotator;
  Choice choice = Choice::Neither;
  std::string timestamp;  // ISO 8601 UTC
};

std::string utc_timestamp();

enum class JudgmentStatus { Accepted, Duplicate, UnknownSession, UnknownItem, UnknownAnnotator };
std::string_view status_message(JudgmentStatus s);

/// Session files plus one append-only judgment log, all under `root`. Safe for
/// concurrent use: (session, item, annotator) uniqueness is checked and the
/// record appended under one lock.
class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path root);

  /// Persists a new session; throws Error when the id already exists.
  void add(const AbSession& session);
  std::optional<AbSession> session(const std::string& id) const;
  std::vector<std::string> session_ids() const;

  JudgmentStatus record(JudgmentRecord rec);
  /// Snapshot of the judgments of one session, in arrival order.
  std::vector<JudgmentRecord> judgments(const std::string& session_id) const;
  /// First item the annotator has not judged yet.
  std::optional<std::size_t> next_item(const std::string& session_id, const std::string& annotator) const;
  std::size_t judged_count(const std::string& session_id, const std::string& annotator) const;

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path judgment_log() const { return root_ / "judgments.tsv"; }

 private:
  std::filesystem::path session_path(const std::string& id) const;
  void load();

  std::filesystem::path root_;
  mutable std::mutex mutex_;
  std::map<std::string, AbSession> sessions_;
  std::vector<JudgmentRecord> records_;
  std::set<std::tuple<std::string, std::size_t, std::string>> seen_;
  bool log_needs_newline_ = false;
};

struct AbReportOptions {
  /// Count only items whose votes have a strict majority; otherwise count every vote.
  bool require_majority = true;
  /// Report an incomplete session instead of failing.
  bool force = false;
};

struct AbReport {
  std::string system_a;
  std::string system_b;
  std::size_t items = 0;
  std::size_t judged_items = 0;  // items with at least one vote
  std::size_t agreed = 0;        // items with a strict majority
  std::size_t no_majority = 0;   // discarded
  std::size_t votes_a = 0;
  std::size_t votes_b = 0;
  std::size_t votes_neither = 0;
  /// Shares of votes_a / votes_b among A+B votes; nullopt with no such votes.
  std::optional<double> percent_a;
  std::optional<double> percent_b;
  KappaReport agreement;

  void write_text(std::ostream& out) const;
};

/// A session is complete when every listed annotator judged every item (or, with
/// an open roster, when every item has at least two judgments).
bool session_complete(const AbSession& session, const std::vector<JudgmentRecord>& judgments);

AbReport ab_report(const AbSession& session, const std::vector<JudgmentRecord>& judgments,
                   const AbReportOptions& options = {});

}  // namespace paravmf
