#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "generators.hpp"
#include "paravmf/evalreport.hpp"

using namespace paravmf;
namespace fs = std::filesystem;

namespace {

Contingency table(std::size_t aa, std::size_t ab, std::size_t ba, std::size_t bb) {
  Contingency c{};
  c[0][0] = aa;
  c[0][1] = ab;
  c[1][0] = ba;
  c[1][1] = bb;
  return c;
}

std::vector<std::string> numbered(const std::string& prefix, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + " " + std::to_string(i));
  return out;
}

// The choice an annotator must make to vote for `v` on `item`.
Choice choice_for(const AbItem& item, Vote v) {
  if (v == Vote::Neither) return Choice::Neither;
  return (v == Vote::A) == item.a_first ? Choice::First : Choice::Second;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// Textbook Cohen's kappa with doubles.
double textbook_kappa(const std::vector<Vote>& x, const std::vector<Vote>& y) {
  const double n = static_cast<double>(x.size());
  double agree = 0, px[3] = {0, 0, 0}, py[3] = {0, 0, 0};
  for (std::size_t i = 0; i < x.size(); ++i) {
    agree += x[i] == y[i] ? 1 : 0;
    px[static_cast<int>(x[i])] += 1;
    py[static_cast<int>(y[i])] += 1;
  }
  const double po = agree / n;
  double pe = 0;
  for (int k = 0; k < 3; ++k) pe += (px[k] / n) * (py[k] / n);
  return (po - pe) / (1 - pe);
}

}  // namespace

TEST_CASE("kappa worked examples") {
  const KappaResult r = cohen_kappa(table(40, 20, 10, 30));
  REQUIRE(r.kappa.has_value());
  CHECK(*r.kappa == 0.4);
  CHECK(r.p_o == 0.7);
  CHECK(r.p_e == 0.5);
  CHECK(r.items == 100);
  const KappaResult opposed = cohen_kappa(table(0, 50, 50, 0));
  REQUIRE(opposed.kappa.has_value());
  CHECK(*opposed.kappa == -1.0);
  const std::vector<Vote> v{Vote::A, Vote::B, Vote::Neither, Vote::A};
  CHECK(cohen_kappa(v, v).kappa == std::optional<double>(1.0));
}

TEST_CASE("kappa is undefined when chance agreement is certain or there are no items") {
  CHECK_FALSE(cohen_kappa(table(10, 0, 0, 0)).kappa.has_value());
  CHECK_FALSE(cohen_kappa(Contingency{}).kappa.has_value());
  CHECK_THROWS_AS(cohen_kappa(std::vector<Vote>{Vote::A}, std::vector<Vote>{}), DomainError);
}

TEST_CASE("kappa agrees with the textbook formula on random ratings") {
  gen::Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Vote> x, y;
    const std::size_t n = gen::uniform(rng, 2, 40);
    for (std::size_t i = 0; i < n; ++i) {
      x.push_back(static_cast<Vote>(gen::uniform(rng, 0, 2)));
      y.push_back(gen::uniform(rng, 0, 3) == 0 ? static_cast<Vote>(gen::uniform(rng, 0, 2)) : x.back());
    }
    const KappaResult r = cohen_kappa(x, y);
    if (!r.kappa) continue;
    CHECK(*r.kappa == doctest::Approx(textbook_kappa(x, y)).epsilon(1e-12));
    CHECK(*r.kappa <= 1.0);
  }
}

TEST_CASE("choices and votes") {
  CHECK(parse_choice("second") == Choice::Second);
  CHECK_THROWS_AS(parse_choice("A"), FormatError);
  CHECK(choice_name(Choice::Neither) == "neither");
  CHECK(vote_name(Vote::B) == "B");
  AbItem item;
  item.a_first = false;
  CHECK(item.resolve(Choice::First) == Vote::B);
  CHECK(item.resolve(Choice::Second) == Vote::A);
  CHECK(item.resolve(Choice::Neither) == Vote::Neither);
}

TEST_CASE("session creation samples distinct lines with a seeded order") {
  const auto in = numbered("in", 50), a = numbered("a", 50), b = numbered("b", 50);
  const AbSession s = create_session("s1", in, a, b, 20, 42, "ParaVMF", "Pivot");
  REQUIRE(s.items.size() == 20);
  std::set<std::size_t> lines;
  std::size_t a_first = 0;
  for (std::size_t i = 0; i < s.items.size(); ++i) {
    const AbItem& it = s.items[i];
    CHECK(it.id == i);
    lines.insert(it.line);
    CHECK(it.input == in[it.line]);
    CHECK(it.candidate_a == a[it.line]);
    CHECK(it.candidate_b == b[it.line]);
    CHECK(it.a_first == a_first_from_seed(it.shuffle_seed));
    a_first += it.a_first ? 1 : 0;
  }
  CHECK(lines.size() == 20);
  CHECK(a_first > 0);
  CHECK(a_first < 20);
  CHECK(create_session("s1", in, a, b, 20, 42) .items[3].line == s.items[3].line);
  CHECK(create_session("s1", in, a, b, 20, 43).items[0].shuffle_seed != s.items[0].shuffle_seed);

  CHECK_THROWS_AS(create_session("s1", in, a, b, 0, 1), ConfigError);
  CHECK_THROWS_AS(create_session("s1", in, a, b, 51, 1), ConfigError);
  CHECK_THROWS_AS(create_session("../x", in, a, b, 5, 1), ConfigError);
  CHECK_THROWS_AS(create_session("s1", in, numbered("a", 49), b, 5, 1), FormatError);
}

TEST_CASE("session files round trip, including awkward text") {
  AbSession s = create_session("round", {"tab\there", "new\nline", "back\\slash"}, {"x", "y", "z"},
                               {"p\r", "q", "r"}, 3, 7, "Sys A", "Sys B");
  s.annotators = {"ann1", "ann2"};
  std::stringstream buf;
  s.write(buf);
  const AbSession back = AbSession::read(buf);
  CHECK(back == s);
  CHECK(back.annotators == s.annotators);
  CHECK(back.has_annotator("ann2"));
  CHECK_FALSE(back.has_annotator("ann3"));
}

TEST_CASE("session files with a tampered order are rejected") {
  const AbSession s = create_session("t", numbered("in", 5), numbered("a", 5), numbered("b", 5), 5, 3);
  std::stringstream buf;
  s.write(buf);
  std::string text = buf.str();
  const auto pos = text.find(s.items[0].a_first ? "\tAB\t" : "\tBA\t");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 4, s.items[0].a_first ? "\tBA\t" : "\tAB\t");
  std::stringstream tampered(text);
  CHECK_THROWS_AS(AbSession::read(tampered), FormatError);
  std::stringstream empty("");
  CHECK_THROWS_AS(AbSession::read(empty), FormatError);
}

TEST_CASE("the store rejects duplicates and unknowns, and survives a restart") {
  TempDir dir("paravmf_store_test");
  const auto in = numbered("in", 10);
  AbSession s = create_session("s1", in, numbered("a", 10), numbered("b", 10), 4, 1, "X", "Y");
  s.annotators = {"ann1", "ann2"};
  {
    SessionStore store(dir.path);
    store.add(s);
    CHECK_THROWS_AS(store.add(s), Error);
    CHECK(store.session_ids() == std::vector<std::string>{"s1"});
    CHECK(store.record({"s1", 0, "ann1", Choice::First, utc_timestamp()}) == JudgmentStatus::Accepted);
    CHECK(store.record({"s1", 0, "ann1", Choice::Second, utc_timestamp()}) == JudgmentStatus::Duplicate);
    CHECK(store.record({"s1", 9, "ann1", Choice::First, ""}) == JudgmentStatus::UnknownItem);
    CHECK(store.record({"nope", 0, "ann1", Choice::First, ""}) == JudgmentStatus::UnknownSession);
    CHECK(store.record({"s1", 0, "intruder", Choice::First, ""}) == JudgmentStatus::UnknownAnnotator);
    CHECK(store.next_item("s1", "ann1") == std::optional<std::size_t>(1));
    CHECK(store.judged_count("s1", "ann1") == 1);
    CHECK(store.next_item("s1", "ann2") == std::optional<std::size_t>(0));
  }
  // A torn line at the end of the log is skipped on reload.
  std::ofstream(dir.path / "judgments.tsv", std::ios::app) << "s1\t1\tann2";
  SessionStore reopened(dir.path);
  REQUIRE(reopened.session("s1").has_value());
  CHECK(*reopened.session("s1") == s);
  const auto js = reopened.judgments("s1");
  REQUIRE(js.size() == 1);
  CHECK(js[0].choice == Choice::First);
  CHECK(js[0].timestamp.size() == 24);
  CHECK(js[0].timestamp.back() == 'Z');
  CHECK(reopened.record({"s1", 0, "ann1", Choice::Neither, ""}) == JudgmentStatus::Duplicate);
  CHECK(reopened.record({"s1", 1, "ann2", Choice::Neither, ""}) == JudgmentStatus::Accepted);
  SessionStore again(dir.path);
  CHECK(again.judgments("s1").size() == 2);
}

TEST_CASE("concurrent judgments: exactly one per (item, annotator) wins") {
  TempDir dir("paravmf_store_race");
  SessionStore store(dir.path);
  store.add(create_session("race", numbered("in", 5), numbered("a", 5), numbered("b", 5), 5, 2));
  std::atomic<int> accepted{0};
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] {
      for (std::size_t item = 0; item < 5; ++item) {
        for (const char* who : {"u1", "u2"}) {
          if (store.record({"race", item, who, t % 2 ? Choice::First : Choice::Second, utc_timestamp()}) ==
              JudgmentStatus::Accepted) {
            ++accepted;
          }
        }
      }
    });
  }
  for (auto& th : threads) th.join();
  CHECK(accepted == 10);
  CHECK(store.judgments("race").size() == 10);
  SessionStore reread(dir.path);
  CHECK(reread.judgments("race").size() == 10);
}

TEST_CASE("three annotators, twenty items: report matches a hand tally") {
  const auto in = numbered("in", 30);
  AbSession s = create_session("script", in, numbered("a", 30), numbered("b", 30), 20, 5, "ParaVMF", "Pivot");
  s.annotators = {"r1", "r2", "r3"};
  // Votes per item for r1, r2, r3.
  const char* script[20] = {"AAA", "AAB", "ABN", "BBB", "BBA", "NNA", "ANN", "AAA", "BAB", "ABA",
                            "NNN", "AAB", "BBN", "ABN", "AAA", "BNB", "NAN", "AAN", "BBB", "ABB"};
  auto vote = [](char c) { return c == 'A' ? Vote::A : c == 'B' ? Vote::B : Vote::Neither; };
  std::vector<JudgmentRecord> js;
  std::vector<Vote> r1, r2, r3;
  std::size_t expect_a = 0, expect_b = 0, expect_n = 0, expect_none = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    std::size_t counts[3] = {0, 0, 0};
    for (int k = 0; k < 3; ++k) {
      const Vote v = vote(script[i][k]);
      ++counts[static_cast<int>(v)];
      (k == 0 ? r1 : k == 1 ? r2 : r3).push_back(v);
      js.push_back({"script", i, s.annotators[static_cast<std::size_t>(k)], choice_for(s.items[i], v), ""});
    }
    if (counts[0] >= 2) ++expect_a;
    else if (counts[1] >= 2) ++expect_b;
    else if (counts[2] >= 2) ++expect_n;
    else ++expect_none;
  }
  CHECK(session_complete(s, js));
  const AbReport r = ab_report(s, js);
  CHECK(r.items == 20);
  CHECK(r.judged_items == 20);
  CHECK(r.votes_a == expect_a);
  CHECK(r.votes_b == expect_b);
  CHECK(r.votes_neither == expect_n);
  CHECK(r.no_majority == expect_none);
  CHECK(r.agreed == 20 - expect_none);
  REQUIRE(r.percent_a.has_value());
  CHECK(*r.percent_a == doctest::Approx(100.0 * expect_a / (expect_a + expect_b)));
  CHECK(*r.percent_a + *r.percent_b == doctest::Approx(100.0));
  REQUIRE(r.agreement.pairs.size() == 3);
  const double k12 = textbook_kappa(r1, r2), k13 = textbook_kappa(r1, r3), k23 = textbook_kappa(r2, r3);
  CHECK(*r.agreement.pairs[0].result.kappa == doctest::Approx(k12).epsilon(1e-12));
  CHECK(*r.agreement.pairs[1].result.kappa == doctest::Approx(k13).epsilon(1e-12));
  CHECK(*r.agreement.pairs[2].result.kappa == doctest::Approx(k23).epsilon(1e-12));
  CHECK(*r.agreement.average_kappa == doctest::Approx((k12 + k13 + k23) / 3).epsilon(1e-12));

  // Counting every vote instead of majorities.
  AbReportOptions all;
  all.require_majority = false;
  const AbReport every = ab_report(s, js, all);
  CHECK(every.votes_a + every.votes_b + every.votes_neither == 60);
}

TEST_CASE("incomplete sessions need force") {
  AbSession s = create_session("inc", numbered("in", 3), numbered("a", 3), numbered("b", 3), 3, 1);
  s.annotators = {"r1", "r2"};
  const std::vector<JudgmentRecord> js{{"inc", 0, "r1", Choice::First, ""}};
  CHECK_FALSE(session_complete(s, js));
  CHECK_THROWS_AS(ab_report(s, js), Error);
  AbReportOptions force;
  force.force = true;
  const AbReport r = ab_report(s, js, force);
  CHECK(r.judged_items == 1);
  CHECK(r.agreement.pairs.empty());
  CHECK_FALSE(r.agreement.average_kappa.has_value());

  AbSession open = s;
  open.annotators.clear();
  std::vector<JudgmentRecord> two;
  for (std::size_t i = 0; i < 3; ++i) {
    two.push_back({"inc", i, "x", Choice::Neither, ""});
    CHECK_FALSE(session_complete(open, two));
    two.push_back({"inc", i, "y", Choice::Neither, ""});
  }
  CHECK(session_complete(open, two));
  const AbReport neither = ab_report(open, two);
  CHECK_FALSE(neither.percent_a.has_value());
}

TEST_CASE("meaning table averages and checks alignment") {
  const MeaningTable t = meaning_table({"S1"}, {{"English", "BS"}, {"English", "MET"}},
                                       {{ScoreTable{{0.5, 1.0}, ""}, ScoreTable{{0.25, 0.25}, ""}}});
  CHECK(t.cells[0][0] == doctest::Approx(75.0));
  CHECK(t.cells[0][1] == doctest::Approx(25.0));
  CHECK_THROWS_AS(meaning_table({"S1"}, {{"E", "BS"}}, {{ScoreTable{}}}), FormatError);
  CHECK_THROWS_AS(meaning_table({"S1", "S2"}, {{"E", "BS"}}, {{ScoreTable{{0.5}, ""}}, {ScoreTable{{0.5, 0.1}, ""}}}),
                  FormatError);
}
