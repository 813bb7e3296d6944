// Acceptance run: one PASS/FAIL line per primary criterion.
//
//   acceptance [--only NAME]... [--strict] [--list]
//
// Exits 1 when a criterion fails that is not on the known-failure list (or any
// failure under --strict), 0 otherwise.

#include <fmt/core.h>

#include <Eigen/QR>
#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "generators.hpp"
#include "golden_fixtures.hpp"
#include "oracles.hpp"
#include "paravmf/decoding.hpp"
#include "paravmf/embeddings.hpp"
#include "paravmf/evalreport.hpp"
#include "paravmf/metrics.hpp"
#include "paravmf/training.hpp"
#include "paravmf/vmf.hpp"
#include "toy_harness.hpp"

using namespace paravmf;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  std::function<Outcome()> run;
};

// Criteria expected to fail with the current toy setup. They still print FAIL
// but do not make the exit status nonzero unless --strict is given.
// ablation: the no_encoder_start_token arm keeps decoding L1 on the toy task.
const std::set<std::string> kKnownFailures{"ablation"};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// vMF loss

Outcome vmf_gradient() {
  const auto t0 = std::chrono::steady_clock::now();
  gen::Rng rng(101);
  const std::array<int, 3> dims{4, 16, 300};
  double worst = 0.0;
  std::string worst_at;
  for (int draw = 0; draw < 1000; ++draw) {
    VmfConfig cfg;
    cfg.dim = dims[static_cast<std::size_t>(draw % 3)];
    const double kappa = gen::log_uniform(rng, 1e-3, 200.0);
    const Vector pred = kappa * gen::unit(rng, cfg.dim);
    const Vector target = gen::unit(rng, cfg.dim);
    const VmfEvaluation ev = nll_vmf(pred, target, cfg);

    const double h = 1e-3 * kappa;
    Vector numeric(cfg.dim);
    Vector p = pred;
    auto f = [&](Eigen::Index j, double step) {
      p[j] = pred[j] + step;
      const double v = nll_vmf_value(p, target, cfg);
      p[j] = pred[j];
      return v;
    };
    for (Eigen::Index j = 0; j < cfg.dim; ++j) {
      numeric[j] = (8 * (f(j, h) - f(j, -h)) - (f(j, 2 * h) - f(j, -2 * h))) / (12 * h);
    }
    const double err = (ev.grad - numeric).norm() / std::max(numeric.norm(), 1e-12);
    if (err > worst) {
      worst = err;
      worst_at = fmt::format("d={} kappa={:.4g}", cfg.dim, kappa);
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 60.0,
          fmt::format("max rel error {:.2e} at {} over 1000 draws, {:.1f}s (limits 1e-4, 60s)", worst, worst_at, secs)};
}

Outcome bessel_accuracy() {
  double worst = 0.0;
  std::string worst_at;
  for (double v : {0.0, 1.0, 7.0, 149.0}) {
    for (int i = 0; i <= 2000; ++i) {
      const double kappa = std::exp(std::log(1e-4) + (std::log(50.0) - std::log(1e-4)) * i / 2000.0);
      // Relative error of I_v itself.
      const double err = std::abs(std::expm1(log_bessel_i(v, kappa) - oracle::log_bessel_series(v, kappa)));
      if (err > worst) {
        worst = err;
        worst_at = fmt::format("v={} kappa={:.4g}", v, kappa);
      }
    }
  }
  double jump = 0.0;
  std::string jump_at;
  for (double v : {0.0, 0.5, 1.0, 2.0, 5.5, 6.0, 7.0, 12.0, 20.0, 149.0}) {
    const double k = bessel_detail::series_limit(v);
    const double d =
        std::abs(std::expm1(bessel_detail::log_bessel_i_series(v, k) - bessel_detail::log_bessel_i_asymptotic(v, k)));
    if (d > jump) {
      jump = d;
      jump_at = fmt::format("v={} kappa={}", v, k);
    }
  }
  return {worst < 1e-8 && jump < 1e-6,
          fmt::format("max rel error {:.2e} at {} (limit 1e-8); crossover jump {:.2e} at {} (limit 1e-6)", worst,
                      worst_at, jump, jump_at)};
}

Outcome norm_const_monotone() {
  std::size_t violations = 0;
  for (int d : {2, 4, 300}) {
    double prev = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < 1000; ++i) {
      const double kappa = 0.1 + (200.0 - 0.1) * i / 999.0;
      const double f = -log_norm_const(d, kappa);
      if (!(f > prev)) ++violations;
      prev = f;
    }
  }
  return {violations == 0, fmt::format("{} violations on 3 x 1000 grid points", violations)};
}

// ---------------------------------------------------------------------------
// Model and training

Outcome model_gradcheck() {
  const ToyTask task = make_toy_task(ToyTaskConfig{});
  const Vocabulary vocab = testing::toy_vocab(task);
  const Matrix table = testing::toy_table(task, vocab);
  std::vector<EncodedExample> batch;
  for (std::size_t i = 0; i < 6; ++i) {
    const TaskKind kind = static_cast<TaskKind>(i % 3);
    const Sentence& src = kind == TaskKind::T2S ? task.train.l2[i] : task.train.l1[i];
    const Sentence& tgt = kind == TaskKind::S2T ? task.train.l2[i] : task.train.l1[i];
    batch.push_back(encode_example(make_example(src, tgt, kind), vocab));
  }
  GradCheckOptions opts;
  opts.coords_per_param = 50;
  std::string detail;
  bool ok = true;
  for (HeadKind head : {HeadKind::VMF, HeadKind::CE}) {
    ModelConfig mc = ModelConfig::toy();
    mc.head = head;
    mc.dropout = 0.0;
    mc.embed_dim = static_cast<int>(table.cols());
    Transformer model(mc, table, 7);
    const double err = model_gradient_check(model, batch, opts).max_rel_error();
    ok = ok && err < 1e-3;
    detail += fmt::format("{}{} {:.2e}", detail.empty() ? "" : ", ", head_name(head), err);
  }
  return {ok, "max rel error " + detail + " (limit 1e-3)"};
}

struct ToyResult {
  testing::ToyScores scores;
  double seconds = 0.0;
  std::size_t steps = 0;
};

// Toy runs are shared between criteria and trained on first use.
class ToyRuns {
 public:
  const ToyResult& get(const std::string& variant) {
    auto it = cache_.find(variant);
    if (it != cache_.end()) return it->second;
    TrainConfig tc = testing::toy_train_config(1);
    if (variant == "no_autoencoding") tc.no_autoencoding = true;
    if (variant == "no_encoder_start_token") tc.no_encoder_start_token = true;
    if (variant == "ae_0.01") tc.ae = AeAmount::of_fraction(0.01);
    if (variant == "ae_0.5") tc.ae = AeAmount::of_fraction(0.5);
    const testing::ToyRun run = testing::run_toy(task_, testing::toy_model_config(), tc, 1);
    ToyResult r{testing::score_toy(run, task_), run.seconds, run.report.steps};
    fmt::print("  [{}: {} steps, {:.1f}s, translation {:.2f}, autoencoding {:.2f}, L1 rate {:.3f}, IoU {:.1f}]\n",
               variant, r.steps, r.seconds, r.scores.translation_exact, r.scores.ae_exact, r.scores.l1_rate,
               r.scores.mean_iou);
    std::fflush(stdout);
    return cache_.emplace(variant, r).first->second;
  }

 private:
  ToyTask task_ = make_toy_task(ToyTaskConfig{});
  std::map<std::string, ToyResult> cache_;
};

ToyRuns& toy_runs() {
  static ToyRuns runs;
  return runs;
}

Outcome toy_training() {
  const ToyResult& r = toy_runs().get("full");
  const auto& s = r.scores;
  return {s.translation_exact >= 0.9 && s.ae_exact >= 0.9 && r.seconds < 600.0,
          fmt::format("translation {:.2f}, autoencoding {:.2f} on 50 test sentences, {:.1f}s (limits 0.90, 600s)",
                      s.translation_exact, s.ae_exact, r.seconds)};
}

Outcome ablation() {
  const double full = toy_runs().get("full").scores.l1_rate;
  const double no_ae = toy_runs().get("no_autoencoding").scores.l1_rate;
  const double no_start = toy_runs().get("no_encoder_start_token").scores.l1_rate;
  return {full >= 0.9 && no_ae < 0.5 && no_start < 0.5,
          fmt::format("L1 token rate: full {:.3f} (>= 0.90), no_autoencoding {:.3f} (< 0.50), "
                      "no_encoder_start_token {:.3f} (< 0.50)",
                      full, no_ae, no_start)};
}

Outcome ae_fraction_copy() {
  const double low = toy_runs().get("ae_0.01").scores.mean_iou;
  const double high = toy_runs().get("ae_0.5").scores.mean_iou;
  return {high > low, fmt::format("mean output/input IoU {:.1f} at ae_fraction 0.01, {:.1f} at 0.5", low, high)};
}

// ---------------------------------------------------------------------------
// Decoding

Outcome decode_argmax() {
  gen::Rng rng(202);
  Matrix table = gen::gaussian(rng, 10000, 300);
  normalize_rows(table);
  std::vector<Eigen::Index> candidates(static_cast<std::size_t>(table.rows()));
  for (Eigen::Index i = 0; i < table.rows(); ++i) candidates[static_cast<std::size_t>(i)] = i;
  std::size_t mismatches = 0;
  for (int s = 0; s < 1000; ++s) {
    const Vector state = gen::gaussian(rng, 300) * gen::log_uniform(rng, 1e-2, 1e2);
    double score = 0.0;
    const TokenId got = pick_token(HeadKind::VMF, state, table, candidates, &score);
    Eigen::Index best = 0;
    double best_cos = -2.0;
    for (Eigen::Index i = 0; i < table.rows(); ++i) {
      const double c = table.row(i).dot(state) / (table.row(i).norm() * state.norm());
      if (c > best_cos) {
        best_cos = c;
        best = i;
      }
    }
    if (static_cast<Eigen::Index>(got) != best) ++mismatches;
  }
  return {mismatches == 0, fmt::format("{} mismatches on 1000 states over 10000 rows", mismatches)};
}

// ---------------------------------------------------------------------------
// Tree edit distance

// Preorder node pointers of a tree, for relabelling in place.
std::vector<ParseTree*> preorder(ParseTree& t) {
  std::vector<ParseTree*> out;
  std::function<void(ParseTree&)> walk = [&](ParseTree& n) {
    out.push_back(&n);
    for (auto& c : n.children) walk(c);
  };
  walk(t);
  return out;
}

using Mapping = std::vector<std::pair<int, int>>;

// Inclusion-maximal valid edit mappings between two shapes. Adding a pair to a
// mapping changes its cost by -2 (plus 1 on a label mismatch), so the minimum
// over all mappings is always attained on a maximal one.
std::vector<Mapping> maximal_mappings(const oracle::FlatTree& a, const oracle::FlatTree& b) {
  const int n = static_cast<int>(a.labels.size()), m = static_cast<int>(b.labels.size());
  auto compatible = [&](const Mapping& map, int i, int j) {
    for (const auto& [pi, pj] : map) {
      if (pi == i || pj == j) return false;
      if ((pi < i) != (pj < j)) return false;
      const auto ui = static_cast<std::size_t>(i), uj = static_cast<std::size_t>(j);
      const auto upi = static_cast<std::size_t>(pi), upj = static_cast<std::size_t>(pj);
      if (a.ancestor[upi][ui] != b.ancestor[upj][uj]) return false;
      if (a.ancestor[ui][upi] != b.ancestor[uj][upj]) return false;
    }
    return true;
  };
  std::vector<Mapping> all;
  Mapping cur;
  std::function<void(int)> rec = [&](int i) {
    if (i == n) {
      all.push_back(cur);
      return;
    }
    rec(i + 1);
    for (int j = cur.empty() ? 0 : cur.back().second + 1; j < m; ++j) {
      if (!compatible(cur, i, j)) continue;
      cur.emplace_back(i, j);
      rec(i + 1);
      cur.pop_back();
    }
  };
  rec(0);
  std::vector<Mapping> out;
  for (const Mapping& map : all) {
    bool extendable = false;
    for (int i = 0; i < n && !extendable; ++i) {
      for (int j = 0; j < m && !extendable; ++j) extendable = compatible(map, i, j);
    }
    if (!extendable) out.push_back(map);
  }
  return out;
}

Outcome ted_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  struct Shape {
    ParseTree tree;
    oracle::FlatTree flat;
  };
  std::vector<Shape> shapes;
  for (std::size_t k = 1; k <= 6; ++k) {
    for (auto& s : gen::all_shapes(k)) shapes.push_back({s, oracle::FlatTree(s)});
  }

  // Both distances only compare labels for equality, so one labelling per
  // partition of the nodes into at most three label classes (first use of a
  // class in preorder, tree a then tree b) covers every labelling over three
  // letters up to renaming.
  std::size_t pairs = 0, mismatches = 0;
  std::string first_mismatch;
  for (const Shape& sa : shapes) {
    for (const Shape& sb : shapes) {
      ParseTree a = sa.tree, b = sb.tree;
      std::vector<ParseTree*> nodes = preorder(a);
      const std::size_t na = nodes.size();
      for (ParseTree* p : preorder(b)) nodes.push_back(p);
      const std::vector<Mapping> maps = maximal_mappings(sa.flat, sb.flat);
      std::vector<int> label(nodes.size());
      std::function<void(std::size_t, int)> rec = [&](std::size_t k, int used) {
        if (k == nodes.size()) {
          std::size_t best = nodes.size();
          for (const Mapping& map : maps) {
            std::size_t cost = nodes.size() - 2 * map.size();
            for (const auto& [i, j] : map) cost += label[static_cast<std::size_t>(i)] != label[na + static_cast<std::size_t>(j)];
            best = std::min(best, cost);
          }
          const std::size_t got = tree_edit_distance(a, b);
          ++pairs;
          if (got != best && mismatches++ == 0) {
            first_mismatch = fmt::format(" (first: {} vs {}: {} != {})", a.to_string(), b.to_string(), got, best);
          }
          return;
        }
        for (int l = 0; l < std::min(used + 1, 3); ++l) {
          label[k] = l;
          nodes[k]->label = std::string(1, static_cast<char>('A' + l));
          rec(k + 1, std::max(used, l + 1));
        }
      };
      rec(0, 0);
    }
  }

  // The pruned oracle agrees with the full mapping search.
  gen::Rng rng(303);
  std::size_t oracle_disagreements = 0;
  for (int i = 0; i < 2000; ++i) {
    const ParseTree a = gen::tree(rng, gen::uniform(rng, 1, 6), 3);
    const ParseTree b = gen::tree(rng, gen::uniform(rng, 1, 6), 3);
    const oracle::FlatTree fa(a), fb(b);
    std::size_t best = fa.labels.size() + fb.labels.size();
    for (const Mapping& map : maximal_mappings(fa, fb)) {
      std::size_t cost = fa.labels.size() + fb.labels.size() - 2 * map.size();
      for (const auto& [x, y] : map) {
        cost += fa.labels[static_cast<std::size_t>(x)] != fb.labels[static_cast<std::size_t>(y)];
      }
      best = std::min(best, cost);
    }
    if (best != oracle::tree_distance(a, b)) ++oracle_disagreements;
  }

  // Metric axioms on larger random trees.
  std::size_t axiom_failures = 0;
  for (int i = 0; i < 10000; ++i) {
    const ParseTree a = gen::tree(rng, gen::uniform(rng, 1, 15), 3);
    const ParseTree b = gen::tree(rng, gen::uniform(rng, 1, 15), 3);
    const ParseTree c = gen::tree(rng, gen::uniform(rng, 1, 15), 3);
    const std::size_t ab = tree_edit_distance(a, b), ba = tree_edit_distance(b, a);
    const std::size_t bc = tree_edit_distance(b, c), ac = tree_edit_distance(a, c);
    const bool ok = tree_edit_distance(a, a) == 0 && ab == ba && (ab == 0) == (a == b) && ac <= ab + bc;
    if (!ok) ++axiom_failures;
  }

  return {mismatches == 0 && oracle_disagreements == 0 && axiom_failures == 0,
          fmt::format("{} mismatches on {} tree pairs up to 6 nodes{}; {} oracle cross-check failures; "
                      "{} axiom failures on 10000 random triples, {:.0f}s",
                      mismatches, pairs, first_mismatch, oracle_disagreements, axiom_failures, seconds_since(t0))};
}

// ---------------------------------------------------------------------------
// Surface metrics and reports

Outcome wer_iou() {
  std::vector<std::string> failed;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) failed.push_back(what);
  };
  const Tokens cat{"the", "cat", "sat"}, slept{"the", "cat", "slept"};
  expect(iou(cat, slept) == 50.0, "iou example");
  expect(iou(cat, cat) == 100.0, "iou identical");
  expect(iou(cat, Tokens{"a", "dog"}) == 0.0, "iou disjoint");
  expect(wer(cat, cat) == 0.0, "wer identical");
  expect(fmt::format("{:.2f}", wer({"a", "x", "c"}, {"a", "b", "c"})) == "33.33" &&
             std::abs(wer({"a", "x", "c"}, {"a", "b", "c"}) - 100.0 / 3.0) < 1e-12,
         "wer substitution");
  expect(wer({}, {"a", "b", "c", "d"}) == 100.0, "wer empty hypothesis");

  gen::Rng rng(404);
  std::size_t random_failures = 0;
  for (int i = 0; i < 200; ++i) {
    const Tokens a = gen::tokens(rng, 8, 6);
    Tokens b = gen::tokens(rng, 8, 6);
    if (b.empty()) b.push_back("w0");
    const std::size_t lev = oracle::levenshtein(a, b);
    const bool ok = edit_distance(a, b) == lev &&
                    wer(a, b) == 100.0 * static_cast<double>(lev) / static_cast<double>(b.size()) &&
                    iou(a, b) == oracle::jaccard_percent(a, b);
    if (!ok) ++random_failures;
  }
  std::string detail = fmt::format("6 worked examples, {} failed; {} of 200 random cases differ from the oracles",
                                   failed.size(), random_failures);
  for (const auto& f : failed) detail += "; failed: " + f;
  return {failed.empty() && random_failures == 0, detail};
}

Outcome bucketing() {
  gen::Rng rng(505);
  std::size_t violations = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = gen::uniform(rng, 0, 40);
    std::vector<double> thresholds(gen::uniform(rng, 1, 6));
    for (double& x : thresholds) x = std::round(gen::uniform_real(rng, 0.0, 1.0) * 20) / 20;
    ScoreTable a, b;
    for (std::size_t i = 0; i < n; ++i) {
      // Scores on the threshold grid half the time, so ties with a threshold occur.
      const bool grid = gen::uniform(rng, 0, 1) == 0;
      auto draw = [&] {
        const double x = gen::uniform_real(rng, 0.0, 1.0);
        return grid ? std::round(x * 20) / 20 : x;
      };
      a.scores.push_back(draw());
      b.scores.push_back(draw());
    }
    const auto subsets = bucket_subsets(a, b, thresholds);
    for (std::size_t k = 0; k < thresholds.size(); ++k) {
      std::vector<std::size_t> expected;
      for (std::size_t i = 0; i < n; ++i) {
        if (a.scores[i] >= thresholds[k] && b.scores[i] >= thresholds[k]) expected.push_back(i);
      }
      if (subsets[k] != expected) ++violations;
      for (std::size_t l = 0; l < thresholds.size(); ++l) {
        if (thresholds[l] > thresholds[k] ||
            std::includes(subsets[l].begin(), subsets[l].end(), subsets[k].begin(), subsets[k].end())) {
          continue;
        }
        ++violations;
      }
    }
  }

  const auto worked = bucket_subsets(ScoreTable{{0.96, 0.86, 0.70}, "a"}, ScoreTable{{0.90, 0.95, 0.99}, "b"},
                                     {0.85, 0.90, 0.95});
  const bool worked_ok = worked == std::vector<std::vector<std::size_t>>{{0, 1}, {0}, {}};

  std::vector<std::string> changed;
  for (const auto& [name, text] : fixtures::renderings()) {
    std::ifstream in(fs::path(PARAVMF_GOLDEN_DIR) / name, std::ios::binary);
    std::ostringstream golden;
    golden << in.rdbuf();
    if (!in || golden.str() != text) changed.push_back(name);
  }
  std::string detail = fmt::format("{} violations on 1000 random tables; worked example {}; {} of 5 golden renderings differ",
                                   violations, worked_ok ? "exact" : "WRONG", changed.size());
  for (const auto& c : changed) detail += " " + c;
  return {violations == 0 && worked_ok && changed.empty(), detail};
}

// ---------------------------------------------------------------------------
// Embedding alignment

Outcome procrustes() {
  gen::Rng rng(606);
  const Eigen::Index words = 1000, dim = 50;
  const Matrix rotation = Eigen::HouseholderQR<Matrix>(gen::gaussian(rng, dim, dim)).householderQ();
  Matrix l1 = gen::gaussian(rng, words, dim);
  normalize_rows(l1);

  std::vector<SeedPair> seed;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(words));
  for (Eigen::Index i = 0; i < words; ++i) order[static_cast<std::size_t>(i)] = i;
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < 100; ++i) seed.push_back({order[i], order[i]});

  const Matrix exact_l2 = l1 * rotation.transpose();
  const double exact_err = (procrustes_align(exact_l2, l1, seed).w - rotation).norm();

  Matrix noisy_l2 = exact_l2 + 0.01 * gen::gaussian(rng, words, dim);
  normalize_rows(noisy_l2);
  const AlignmentMap map = procrustes_align(noisy_l2, l1, seed, 3);
  const std::vector<Neighbor> induced = induce_mapping(noisy_l2, l1, map);
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < words; ++i) hits += induced[static_cast<std::size_t>(i)].row == i;
  const double p1 = static_cast<double>(hits) / static_cast<double>(words);
  return {p1 >= 0.99 && exact_err < 1e-5,
          fmt::format("precision@1 {:.3f} with noise 0.01 (limit 0.99); exact case |W - R|_F {:.2e} (limit 1e-5)", p1,
                      exact_err)};
}

// ---------------------------------------------------------------------------
// Output head cost

Outcome head_benchmark() {
  HeadBenchConfig cfg;
  cfg.steps = 7;
  const HeadBenchResult at50 = benchmark_heads(cfg);
  cfg.vocab_size = 100000;
  const HeadBenchResult at100 = benchmark_heads(cfg);
  const double drift = at100.vmf_seconds / at50.vmf_seconds - 1.0;
  return {at50.ratio() > 1.5 && std::abs(drift) < 0.10,
          fmt::format("|V|=50K: ce {:.3f}s, vmf {:.3f}s per step, ratio {:.2f} (limit 1.5); vmf at 100K {:.3f}s, "
                      "change {:+.1f}% (limit 10%); ce at 100K {:.3f}s",
                      at50.ce_seconds, at50.vmf_seconds, at50.ratio(), at100.vmf_seconds, 100 * drift,
                      at100.ce_seconds)};
}

// ---------------------------------------------------------------------------
// Annotator agreement

Outcome kappa() {
  Contingency first{};
  first[0][0] = 40;
  first[1][1] = 30;
  first[0][1] = 20;
  first[1][0] = 10;
  Contingency second{};
  second[0][1] = 50;
  second[1][0] = 50;
  const KappaResult k1 = cohen_kappa(first), k2 = cohen_kappa(second);

  gen::Rng rng(707);
  std::size_t self_failures = 0;
  for (int t = 0; t < 100; ++t) {
    std::vector<Vote> votes(gen::uniform(rng, 2, 50));
    for (auto& v : votes) v = static_cast<Vote>(gen::uniform(rng, 0, 2));
    votes[0] = Vote::A;
    votes[1] = Vote::B;
    const KappaResult self = cohen_kappa(votes, votes);
    if (!self.kappa || std::abs(*self.kappa - 1.0) > 1e-12) ++self_failures;
  }
  const bool ok = k1.kappa && std::abs(*k1.kappa - 0.40) < 1e-12 && std::abs(k1.p_o - 0.70) < 1e-12 &&
                  std::abs(k1.p_e - 0.50) < 1e-12 && k2.kappa && std::abs(*k2.kappa + 1.0) < 1e-12 &&
                  self_failures == 0;
  return {ok, fmt::format("kappa {:.4f} (p_o {:.2f}, p_e {:.2f}) and {:.4f}; self-agreement off on {} of 100",
                          k1.kappa.value_or(NAN), k1.p_o, k1.p_e, k2.kappa.value_or(NAN), self_failures)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {"vmf_gradient", vmf_gradient},         {"bessel", bessel_accuracy},
      {"norm_const_monotone", norm_const_monotone}, {"model_gradcheck", model_gradcheck},
      {"toy_training", toy_training},         {"ablation", ablation},
      {"ae_fraction_copy", ae_fraction_copy}, {"decode_argmax", decode_argmax},
      {"tree_edit_distance", ted_oracle},     {"wer_iou", wer_iou},
      {"bucketing", bucketing},               {"procrustes", procrustes},
      {"head_benchmark", head_benchmark},     {"kappa", kappa}};

  std::set<std::string> only;
  bool strict = false;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--strict") == 0) {
      strict = true;
    } else if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
      only.insert(argv[++i]);
    } else if (std::strcmp(argv[i], "--list") == 0) {
      for (const auto& c : criteria) fmt::print("{}\n", c.name);
      return 0;
    } else {
      fmt::print(stderr, "usage: acceptance [--only NAME]... [--strict] [--list]\n");
      return 2;
    }
  }

  std::size_t passed = 0, failed = 0, known = 0, unexpected = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.name)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const bool is_known = kKnownFailures.count(c.name) > 0;
    fmt::print("{} {}: {}{}\n", o.pass ? "PASS" : "FAIL", c.name, o.detail,
               !o.pass && is_known ? " [known failure]" : "");
    std::fflush(stdout);
    if (o.pass) {
      ++passed;
    } else {
      ++failed;
      (is_known ? known : unexpected) += 1;
    }
  }
  fmt::print("{} passed, {} failed ({} known, {} unexpected)\n", passed, failed, known, unexpected);
  return (unexpected > 0 || (strict && failed > 0)) ? 1 : 0;
}
