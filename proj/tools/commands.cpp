#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/sinks/basic_file_sink.h>
#include <spdlog/spdlog.h>

#include "cli.hpp"
#include "paravmf/abserver.hpp"
#include "paravmf/artifacts.hpp"
#include "paravmf/config.hpp"
#include "paravmf/decoding.hpp"
#include "paravmf/embeddings.hpp"
#include "paravmf/evalreport.hpp"
#include "paravmf/metrics.hpp"
#include "paravmf/toy.hpp"
#include "paravmf/training.hpp"

namespace paravmf::cli {

// ---------------------------------------------------------------------------
// Helpers

void RunDir::claim(const std::vector<std::string>& names) {
  std::vector<std::string> all = names;
  all.push_back("log.txt");
  all.push_back("invocation.txt");
  if (!overwrite_) {
    for (const auto& n : all) {
      if (std::filesystem::exists(dir_ / n)) {
        throw UsageError(fmt::format("{} already exists; pass --overwrite to replace it", (dir_ / n).string()));
      }
    }
  }
  std::filesystem::create_directories(dir_);
  auto sink = std::make_shared<spdlog::sinks::basic_file_sink_mt>((dir_ / "log.txt").string(), /*truncate=*/true);
  spdlog::default_logger()->sinks().push_back(sink);
  write_text_file(dir_ / "invocation.txt", invocation_);
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
  if (!out) throw Error("cannot write " + path.string());
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

void require_file(const std::filesystem::path& path, const std::string& flag) {
  if (path.empty()) throw UsageError(flag + " is required");
  if (!std::filesystem::is_regular_file(path)) throw UsageError(fmt::format("{}: no such file {}", flag, path.string()));
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, sep)) out.push_back(part);
  return out;
}

namespace {

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) out += (i ? " " : "") + tokens[i];
  return out;
}

template <typename T>
std::string tsv_of(const T& object) {
  std::ostringstream out;
  object.write_tsv(out);
  return out.str();
}

template <typename T>
std::string text_of(const T& object) {
  std::ostringstream out;
  object.write_text(out);
  return out.str();
}

Lang lang_flag(const std::string& text, const std::string& flag) {
  try {
    return parse_lang(text);
  } catch (const Error&) {
    throw UsageError(fmt::format("{} must be L1 or L2, got '{}'", flag, text));
  }
}

std::vector<double> parse_thresholds(const std::string& text) {
  std::vector<double> out;
  for (const auto& part : split(text, ',')) {
    try {
      std::size_t used = 0;
      const double v = std::stod(part, &used);
      if (used != part.size() || !(v >= 0.0 && v <= 1.0)) throw std::invalid_argument(part);
      out.push_back(v);
    } catch (const std::exception&) {
      throw UsageError("--thresholds must be comma-separated numbers in [0, 1], got '" + part + "'");
    }
  }
  if (out.empty()) throw UsageError("--thresholds is empty");
  return out;
}

std::vector<Sentence> prepare_all(const std::vector<std::string>& lines, Lang lang, const CaseModel& case_model) {
  std::vector<Sentence> out;
  out.reserve(lines.size());
  for (const auto& l : lines) out.push_back(prepare(l, lang, case_model));
  return out;
}

void apply_case(std::vector<Sentence>& sentences, const CaseModel& case_model) {
  for (auto& s : sentences) s = case_model.apply(std::move(s));
}

}  // namespace

// ---------------------------------------------------------------------------
// Data preparation

int run_build_vocab(const BuildVocabOptions& o, RunDir& run) {
  require_file(o.l1, "--l1");
  require_file(o.l2, "--l2");
  if (o.max_size < 1) throw UsageError("--max-size must be >= 1");
  run.claim({"vocab.tsv", "truecase.l1.tsv", "truecase.l2.tsv"});
  ParallelCorpus corpus = read_parallel(o.l1, o.l2);
  const CaseModel l1_case = CaseModel::train(corpus.l1);
  const CaseModel l2_case = CaseModel::train(corpus.l2);
  apply_case(corpus.l1, l1_case);
  apply_case(corpus.l2, l2_case);
  const Vocabulary vocab(build_vocab(corpus.l1, Lang::L1, o.max_size), build_vocab(corpus.l2, Lang::L2, o.max_size));
  write_text_file(run.file("vocab.tsv"), tsv_of(vocab));
  write_text_file(run.file("truecase.l1.tsv"), tsv_of(l1_case));
  write_text_file(run.file("truecase.l2.tsv"), tsv_of(l2_case));
  spdlog::info("vocabulary: {} L1 + {} L2 words ({} ids)", vocab.lang_size(Lang::L1), vocab.lang_size(Lang::L2),
               vocab.size());
  return kExitOk;
}

int run_align(const AlignOptions& o, RunDir& run) {
  require_file(o.source_vectors, "--source-vectors");
  require_file(o.target_vectors, "--target-vectors");
  if (!o.seed_lexicon.empty()) require_file(o.seed_lexicon, "--seed-lexicon");
  run.claim({"alignment.txt", "aligned.vec"});
  WordVectors src = read_word_vectors(o.source_vectors);
  WordVectors tgt = read_word_vectors(o.target_vectors);
  if (src.vectors.cols() != tgt.vectors.cols()) {
    throw FormatError(fmt::format("vector dimensions differ: {} vs {}", src.vectors.cols(), tgt.vectors.cols()));
  }
  normalize_rows(src.vectors);
  normalize_rows(tgt.vectors);
  std::vector<SeedPair> seed;
  if (o.seed_lexicon.empty()) {
    seed = identical_spelling_seed(src.words, tgt.words);
  } else {
    std::unordered_map<std::string, Eigen::Index> src_row, tgt_row;
    for (Eigen::Index i = static_cast<Eigen::Index>(src.words.size()); i-- > 0;) src_row[src.words[i]] = i;
    for (Eigen::Index i = static_cast<Eigen::Index>(tgt.words.size()); i-- > 0;) tgt_row[tgt.words[i]] = i;
    for (const auto& line : read_lines(o.seed_lexicon)) {
      const auto f = split(line, '\t');
      if (f.size() < 2) continue;
      const auto s = src_row.find(f[0]);
      const auto t = tgt_row.find(f[1]);
      if (s != src_row.end() && t != tgt_row.end()) seed.push_back({s->second, t->second});
    }
  }
  if (seed.empty()) throw Error("no seed pairs: the vector files share no words and no seed lexicon matched");
  spdlog::info("aligning with {} seed pairs, {} self-learning iterations", seed.size(), o.self_learn);
  const AlignmentMap map = procrustes_align(src.vectors, tgt.vectors, seed, static_cast<int>(o.self_learn));
  {
    std::ofstream out(run.file("alignment.txt"));
    write_matrix_text(out, map.w);
  }
  {
    std::ofstream out(run.file("aligned.vec"));
    write_word_vectors(out, src.words, map.apply(src.vectors));
  }
  spdlog::info("orthogonality error {:.3e}", map.orthogonality_error());
  return kExitOk;
}

int run_lexicon(const LexiconOptions& o, RunDir& run) {
  require_file(o.l1_vectors, "--l1-vectors");
  require_file(o.l2_vectors, "--l2-vectors");
  require_file(o.alignment, "--alignment");
  if (!o.vocab.empty()) require_file(o.vocab, "--vocab");
  run.claim({"lexicon.tsv"});
  AlignmentMap map;
  {
    std::ifstream in(o.alignment);
    map.w = read_matrix_text(in);
  }
  const WordVectors l1 = read_word_vectors(o.l1_vectors);
  const WordVectors l2 = read_word_vectors(o.l2_vectors);
  std::vector<std::string> l1_words = l1.words, l2_words = l2.words;
  if (!o.vocab.empty()) {
    std::ifstream in(o.vocab);
    const Vocabulary vocab = Vocabulary::read_tsv(in);
    l1_words = vocab.lang_words(Lang::L1);
    l2_words = vocab.lang_words(Lang::L2);
  }
  const EmbeddingTable t1 = make_table(l1, l1_words, Lang::L1);
  const EmbeddingTable t2 = make_table(l2, l2_words, Lang::L2);
  if (map.w.rows() != t2.dim() || map.w.cols() != t1.dim()) throw FormatError("alignment matrix has the wrong shape");
  const BilingualLexicon lex = induce_lexicon(t2, t1, map);
  write_text_file(run.file("lexicon.tsv"), tsv_of(lex));
  spdlog::info("lexicon with {} entries", lex.size());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Training

int run_train(const TrainOptions& o, RunDir& run) {
  KeyValueConfig kv;
  if (!o.config.empty()) {
    require_file(o.config, "--config");
    kv = KeyValueConfig::load(o.config);
  }
  for (const auto& assignment : o.set) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + assignment + "'");
    kv.set(assignment.substr(0, eq), assignment.substr(eq + 1));
  }
  if (o.seed >= 0) kv.set("seed", std::to_string(o.seed));
  ExperimentConfig cfg = resolve_experiment(kv);
  const DataPaths& d = cfg.data;
  require_file(d.train_l1, "data.train_l1");
  require_file(d.train_l2, "data.train_l2");
  require_file(d.dev_l1, "data.dev_l1");
  require_file(d.l1_vectors, "data.l1_vectors");
  require_file(d.l2_vectors, "data.l2_vectors");
  if (!d.vocab.empty()) require_file(d.vocab, "data.vocab");
  run.claim({"config.txt", "model.ckpt", "train_report.tsv"});

  TrainData data;
  data.train = read_parallel(d.train_l1, d.train_l2);
  const CaseModel l1_case = CaseModel::train(data.train.l1);
  const CaseModel l2_case = CaseModel::train(data.train.l2);
  apply_case(data.train.l1, l1_case);
  apply_case(data.train.l2, l2_case);
  data.dev_l1 = read_sentences(d.dev_l1, Lang::L1);
  apply_case(data.dev_l1, l1_case);

  Vocabulary vocab;
  if (!d.vocab.empty()) {
    std::ifstream in(d.vocab);
    vocab = Vocabulary::read_tsv(in);
  } else {
    vocab = Vocabulary(build_vocab(data.train.l1, Lang::L1, d.max_vocab),
                       build_vocab(data.train.l2, Lang::L2, d.max_vocab));
  }
  const EmbeddingTable l1 = load_embeddings(d.l1_vectors, vocab.lang_words(Lang::L1), Lang::L1);
  const EmbeddingTable l2 = load_embeddings(d.l2_vectors, vocab.lang_words(Lang::L2), Lang::L2);
  if (l1.dim() != l2.dim()) throw ConfigError("L1 and L2 vectors differ in dimension");
  if (cfg.embed_dim_set && cfg.model.embed_dim != l1.dim()) {
    throw ConfigError(fmt::format("embed_dim = {} but the vectors have dimension {}", cfg.model.embed_dim, l1.dim()));
  }
  cfg.model.embed_dim = static_cast<int>(l1.dim());
  cfg.embed_dim_set = true;
  spdlog::info("embeddings: {} L1 / {} L2 words without a vector got fallback vectors", l1.fallback_count,
               l2.fallback_count);

  const std::string resolved = resolved_text(cfg);
  write_text_file(run.file("config.txt"), resolved);
  spdlog::info("resolved config:\n{}", resolved);

  Transformer model(cfg.model, combined_table(vocab, l1, l2, nullptr), cfg.train.seed, cfg.vmf);
  Adam adam(model.params(), cfg.train.adam);
  const TrainReport report = train(
      model, vocab, data, cfg.train,
      [](const TrainRecord& r) {
        spdlog::info("step {} epoch {}: s2t {:.4f} t2s {:.4f} ae {:.4f} ae-dev {:.4f} ({:.1f} ms/step)", r.step,
                     r.epoch, r.loss[0], r.loss[1], r.loss[2], r.dev_loss, 1000.0 * r.seconds_per_step);
      },
      &adam);
  write_text_file(run.file("train_report.tsv"), tsv_of(report));
  save_checkpoint(run.file("model.ckpt"), bundle_checkpoint(model, vocab, l1_case, l2_case, resolved, &adam));
  spdlog::info("stopped after {} steps ({}); selected step {} with AE dev loss {:.4f}", report.steps,
               report.stop_reason, report.selected_step, report.selected_dev_loss);
  if (report.diverged) throw NonFiniteError("training diverged: " + report.stop_reason);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Decoding

namespace {

std::optional<BilingualLexicon> load_lexicon(const std::string& path) {
  if (path.empty()) return std::nullopt;
  require_file(path, "--lexicon");
  std::ifstream in(path);
  return BilingualLexicon::read_tsv(in);
}

void write_decodes(RunDir& run, const std::vector<DecodeResult>& results) {
  std::string text;
  std::size_t truncated = 0;
  for (const auto& r : results) {
    text += join(r.output.tokens) + "\n";
    truncated += r.truncated ? 1 : 0;
  }
  write_text_file(run.file("outputs.txt"), text);
  spdlog::info("decoded {} sentences, {} hit the length limit", results.size(), truncated);
}

}  // namespace

int run_paraphrase(const DecodeOptions& o, RunDir& run) {
  require_file(o.model, "--model");
  require_file(o.input, "--input");
  const Lang source = lang_flag(o.source_lang, "--source-lang");
  const Lang target = lang_flag(o.target_lang, "--target-lang");
  DecodeConfig dc;
  dc.target = target;
  dc.max_length = o.max_length;
  dc.region = o.region.empty() ? SearchRegion::Combined : parse_region(o.region);
  const auto lexicon = load_lexicon(o.lexicon);
  dc.postprocess = !o.no_postprocess && lexicon.has_value();
  run.claim({"outputs.txt"});

  const ModelBundle bundle = load_bundle(o.model);
  const Decoder decoder(*bundle.model, bundle.vocab, bundle.model->table());
  const auto inputs = prepare_all(read_lines(o.input), source, source == Lang::L1 ? bundle.l1_case : bundle.l2_case);
  std::vector<DecodeResult> results;
  results.reserve(inputs.size());
  for (const auto& s : inputs) results.push_back(decoder.decode(s, dc, lexicon ? &*lexicon : nullptr));
  write_decodes(run, results);
  return kExitOk;
}

int run_pivot(const DecodeOptions& o, RunDir& run) {
  require_file(o.model, "--model");
  require_file(o.input, "--input");
  if (!o.backward_model.empty()) require_file(o.backward_model, "--backward-model");
  const SearchRegion region = o.region.empty() ? SearchRegion::TargetOnly : parse_region(o.region);
  run.claim({"outputs.txt"});

  const ModelBundle forward = load_bundle(o.model);
  const ModelBundle backward = o.backward_model.empty() ? ModelBundle{} : load_bundle(o.backward_model);
  const ModelBundle& back = o.backward_model.empty() ? forward : backward;
  const Decoder to_l2(*forward.model, forward.vocab, forward.model->table());
  const Decoder to_l1(*back.model, back.vocab, back.model->table());
  const auto inputs = prepare_all(read_lines(o.input), Lang::L1, forward.l1_case);
  std::vector<DecodeResult> results;
  results.reserve(inputs.size());
  for (const auto& s : inputs) results.push_back(pivot_paraphrase(to_l2, to_l1, s, o.max_length, region));
  write_decodes(run, results);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Scoring and reports

int run_score(const ScoreOptions& o, RunDir& run) {
  require_file(o.inputs, "--inputs");
  require_file(o.outputs, "--outputs");
  bool want_iou = false, want_wer = false, want_sim = false;
  for (const auto& m : split(o.metrics, ',')) {
    if (m == "iou") {
      want_iou = true;
    } else if (m == "wer") {
      want_wer = true;
    } else if (m == "similarity") {
      want_sim = true;
    } else {
      throw UsageError("--metrics accepts iou, wer and similarity; got '" + m + "'");
    }
  }
  if (want_sim) require_file(o.vectors, "--vectors");
  std::vector<std::string> outputs = {"scores.tsv"};
  if (want_sim) outputs.push_back("similarity.scores");
  run.claim(outputs);

  const auto in_lines = read_lines(o.inputs);
  const auto out_lines = read_lines(o.outputs);
  if (in_lines.size() != out_lines.size()) {
    throw FormatError(fmt::format("--inputs has {} lines but --outputs has {}", in_lines.size(), out_lines.size()));
  }
  std::unordered_map<std::string, Vector> vectors;
  if (want_sim) {
    const WordVectors wv = read_word_vectors(o.vectors);
    for (std::size_t i = wv.words.size(); i-- > 0;) vectors[wv.words[i]] = wv.vectors.row(static_cast<Eigen::Index>(i));
  }
  auto lookup = [&](const std::string& w) -> std::optional<Vector> {
    const auto it = vectors.find(w);
    if (it == vectors.end()) return std::nullopt;
    return it->second;
  };

  std::string table = "line";
  if (want_iou) table += "\tiou";
  if (want_wer) table += "\twer_percent";
  if (want_sim) table += "\tsimilarity";
  table += "\n";
  ScoreTable sim;
  sim.label = "fallback-cosine";
  double iou_sum = 0.0, wer_sum = 0.0, sim_sum = 0.0;
  std::size_t wer_n = 0;
  for (std::size_t i = 0; i < in_lines.size(); ++i) {
    const Tokens in = tokenize(in_lines[i], Lang::L1).tokens;
    const Tokens out = tokenize(out_lines[i], Lang::L1).tokens;
    table += std::to_string(i);
    if (want_iou) {
      const double v = iou(out, in);
      iou_sum += v;
      table += fmt::format("\t{:.4f}", v);
    }
    if (want_wer) {
      if (in.empty()) {
        table += "\t-";
      } else {
        const double v = wer(out, in);
        wer_sum += v;
        ++wer_n;
        table += fmt::format("\t{:.4f}", v);
      }
    }
    if (want_sim) {
      const double v = fallback_similarity(out, in, lookup);
      sim.scores.push_back(v);
      sim_sum += v;
      table += fmt::format("\t{:.4f}", v);
    }
    table += "\n";
  }
  write_text_file(run.file("scores.tsv"), table);
  if (want_sim) {
    std::ofstream out(run.file("similarity.scores"));
    write_score_table(out, sim);
  }
  const double n = std::max<double>(1.0, static_cast<double>(in_lines.size()));
  std::string summary = "metric\tmean\n";
  if (want_iou) summary += fmt::format("iou\t{:.2f}\n", iou_sum / n);
  if (want_wer) summary += fmt::format("wer_percent\t{:.2f}\n", wer_n ? wer_sum / static_cast<double>(wer_n) : 0.0);
  if (want_sim) summary += fmt::format("similarity_fallback\t{:.4f}\n", sim_sum / n);
  fmt::print("{}", summary);
  return kExitOk;
}

namespace {

AbReport ab_report_from_store(const ReportOptions& o) {
  if (o.store.empty() || o.session.empty()) throw UsageError("--store and --session are required");
  if (!std::filesystem::is_directory(o.store)) throw UsageError("--store: no such directory " + o.store);
  const SessionStore store(o.store);
  const auto session = store.session(o.session);
  if (!session) throw UsageError("unknown session: " + o.session);
  AbReportOptions opt;
  opt.force = o.force;
  opt.require_majority = !o.all_votes;
  return ab_report(*session, store.judgments(o.session), opt);
}

std::vector<std::optional<ParseTree>> load_parses(const std::string& path, std::size_t expected) {
  if (path.empty()) return std::vector<std::optional<ParseTree>>(expected);
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path);
  auto parses = read_parses(in);
  if (parses.size() > expected) throw FormatError(path + " has more lines than the inputs");
  parses.resize(expected);
  return parses;
}

}  // namespace

int run_report(const ReportOptions& o, RunDir& run) {
  if (o.mode == "diversity") {
    require_file(o.inputs, "--inputs");
    const auto thresholds = parse_thresholds(o.thresholds);
    if (o.systems.empty() || o.systems.size() > 2) {
      throw UsageError("diversity reports take one or two --system NAME,OUTPUTS,SCORES[,PARSES]");
    }
    run.claim({"diversity.tsv", "diversity.txt"});
    std::vector<Tokens> inputs;
    for (const auto& l : read_lines(o.inputs)) inputs.push_back(tokenize(l, Lang::L1).tokens);
    const auto input_parses = load_parses(o.input_parses, inputs.size());
    std::vector<SystemOutputs> systems;
    std::vector<ScoreTable> gates;
    for (const auto& spec : o.systems) {
      const auto f = split(spec, ',');
      if (f.size() < 3 || f.size() > 4) throw UsageError("--system expects NAME,OUTPUTS,SCORES[,PARSES]: " + spec);
      require_file(f[1], "--system outputs");
      require_file(f[2], "--system scores");
      SystemOutputs s;
      s.name = f[0];
      for (const auto& l : read_lines(f[1])) s.sentences.push_back(tokenize(l, Lang::L1).tokens);
      s.parses = load_parses(f.size() == 4 ? f[3] : "", inputs.size());
      systems.push_back(std::move(s));
      gates.push_back(read_score_table(std::filesystem::path(f[2])));
    }
    const ScoreTable& gate_b = gates.size() == 2 ? gates[1] : gates[0];
    const DiversityReport rep = diversity_report(inputs, input_parses, systems, gates[0], gate_b, thresholds);
    write_text_file(run.file("diversity.tsv"), tsv_of(rep));
    const std::string text = text_of(rep);
    write_text_file(run.file("diversity.txt"), text);
    fmt::print("{}", text);
    return kExitOk;
  }
  if (o.mode == "meaning") {
    if (o.scores.empty()) throw UsageError("meaning reports need --scores SYSTEM,GROUP,METRIC,FILE");
    run.claim({"meaning.tsv", "meaning.txt"});
    std::vector<std::string> systems;
    std::vector<MeaningColumn> columns;
    std::map<std::pair<std::size_t, std::size_t>, ScoreTable> cells;
    for (const auto& spec : o.scores) {
      const auto f = split(spec, ',');
      if (f.size() != 4) throw UsageError("--scores expects SYSTEM,GROUP,METRIC,FILE: " + spec);
      require_file(f[3], "--scores file");
      auto s_it = std::find(systems.begin(), systems.end(), f[0]);
      if (s_it == systems.end()) s_it = systems.insert(systems.end(), f[0]);
      auto c_it = std::find_if(columns.begin(), columns.end(),
                               [&](const MeaningColumn& c) { return c.group == f[1] && c.metric == f[2]; });
      if (c_it == columns.end()) c_it = columns.insert(columns.end(), MeaningColumn{f[1], f[2]});
      const std::pair<std::size_t, std::size_t> key(s_it - systems.begin(), c_it - columns.begin());
      if (!cells.emplace(key, read_score_table(std::filesystem::path(f[3]))).second) {
        throw UsageError("duplicate --scores cell: " + spec);
      }
    }
    std::vector<std::vector<ScoreTable>> tables(systems.size(), std::vector<ScoreTable>(columns.size()));
    for (std::size_t s = 0; s < systems.size(); ++s) {
      for (std::size_t c = 0; c < columns.size(); ++c) {
        const auto it = cells.find({s, c});
        if (it == cells.end()) {
          throw UsageError(fmt::format("missing --scores for {} {} {}", systems[s], columns[c].group, columns[c].metric));
        }
        tables[s][c] = it->second;
      }
    }
    const MeaningTable table = meaning_table(systems, columns, tables);
    write_text_file(run.file("meaning.tsv"), tsv_of(table));
    const std::string text = text_of(table);
    write_text_file(run.file("meaning.txt"), text);
    fmt::print("{}", text);
    return kExitOk;
  }
  if (o.mode == "ab") {
    run.claim({"ab_report.txt", "ab_report.json"});
    const AbReport rep = ab_report_from_store(o);
    const std::string text = text_of(rep);
    write_text_file(run.file("ab_report.txt"), text);
    write_text_file(run.file("ab_report.json"), report_payload(rep, /*include_names=*/true).dump(2) + "\n");
    fmt::print("{}", text);
    return kExitOk;
  }
  throw UsageError("--mode must be diversity, meaning or ab");
}

// ---------------------------------------------------------------------------
// A/B testing

int run_ab_new(const AbNewOptions& o) {
  if (o.store.empty()) throw UsageError("--store is required");
  require_file(o.inputs, "--inputs");
  require_file(o.outputs_a, "--outputs-a");
  require_file(o.outputs_b, "--outputs-b");
  SessionStore store(o.store);
  AbSession session = create_session(o.session, read_lines(o.inputs), read_lines(o.outputs_a),
                                     read_lines(o.outputs_b), o.items, o.seed, o.name_a, o.name_b);
  for (const auto& a : split(o.annotators, ',')) {
    if (!a.empty()) session.annotators.push_back(a);
  }
  store.add(session);
  spdlog::info("session {} with {} items stored in {}", session.id, session.items.size(), o.store);
  return kExitOk;
}

int run_ab_serve(const ServeOptions& o) {
  if (o.store.empty()) throw UsageError("--store is required");
  if (!std::filesystem::is_directory(o.store)) throw UsageError("--store: no such directory " + o.store);
  SessionStore store(o.store);
  serve(store, o.host, o.port, [&] {
    spdlog::info("serving {} sessions on http://{}:{}", store.session_ids().size(), o.host, o.port);
  });
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Diagnostics

int run_gradcheck(const GradcheckOptions& o, RunDir& run) {
  std::vector<HeadKind> heads;
  if (o.head == "both") {
    heads = {HeadKind::VMF, HeadKind::CE};
  } else {
    try {
      heads = {parse_head(o.head)};
    } catch (const Error&) {
      throw UsageError("--head must be vmf, ce or both");
    }
  }
  run.claim({"gradcheck.tsv"});
  ToyTaskConfig tc;
  tc.seed = o.seed;
  const ToyTask task = make_toy_task(tc);
  std::vector<Sentence> all = task.train.l1;
  all.insert(all.end(), task.train.l2.begin(), task.train.l2.end());
  const Vocabulary vocab(build_vocab(all, Lang::L1, 50000), build_vocab(all, Lang::L2, 50000));
  const EmbeddingTable l1 = make_table(task.l1_vectors, vocab.lang_words(Lang::L1), Lang::L1);
  const EmbeddingTable l2 = make_table(task.l2_vectors, vocab.lang_words(Lang::L2), Lang::L2);
  const Matrix table = combined_table(vocab, l1, l2, nullptr);

  std::vector<EncodedExample> batch;
  for (std::size_t i = 0; i < o.sentences && i < task.train.size(); ++i) {
    const TaskKind kind = static_cast<TaskKind>(i % 3);
    const Sentence& src = kind == TaskKind::T2S ? task.train.l2[i] : task.train.l1[i];
    const Sentence& tgt = kind == TaskKind::S2T ? task.train.l2[i] : task.train.l1[i];
    batch.push_back(encode_example(make_example(src, tgt, kind), vocab));
  }
  GradCheckOptions gopt;
  gopt.epsilon = o.epsilon;
  gopt.coords_per_param = o.coords;
  gopt.seed = o.seed;

  std::string tsv = "head\tparameter\tcoordinates\tmax_rel_error\n";
  double worst = 0.0;
  for (HeadKind head : heads) {
    ModelConfig mc = ModelConfig::toy();
    mc.head = head;
    mc.dropout = 0.0;
    mc.embed_dim = static_cast<int>(table.cols());
    Transformer model(mc, table, o.seed);
    const GradCheckReport rep = model_gradient_check(model, batch, gopt);
    for (const auto& e : rep.entries) {
      tsv += fmt::format("{}\t{}\t{}\t{:.3e}\n", head_name(head), e.name, e.coordinates, e.max_rel_error);
    }
    fmt::print("{}\tmax_rel_error\t{:.3e}\n", head_name(head), rep.max_rel_error());
    worst = std::max(worst, rep.max_rel_error());
  }
  write_text_file(run.file("gradcheck.tsv"), tsv);
  if (worst >= o.tolerance) throw Error(fmt::format("gradient check failed: {:.3e} >= {:.1e}", worst, o.tolerance));
  return kExitOk;
}

int run_bench(const BenchOptions& o, RunDir& run) {
  run.claim({"bench.tsv"});
  HeadBenchConfig cfg;
  cfg.vocab_size = o.vocab_size;
  cfg.steps = o.steps;
  cfg.batch_sentences = o.batch;
  cfg.sentence_length = o.length;
  cfg.seed = o.seed;
  const HeadBenchResult r = benchmark_heads(cfg);
  write_text_file(run.file("bench.tsv"),
                  fmt::format("head\tvocab\tseconds_per_step\thead_parameters\nvmf\t{}\t{:.6f}\t{}\nce\t{}\t{:.6f}\t{}\n",
                              o.vocab_size, r.vmf_seconds, r.vmf_head_params, o.vocab_size, r.ce_seconds,
                              r.ce_head_params));
  fmt::print("vmf {:.3f}s/step  ce {:.3f}s/step  ratio {:.2f}\n", r.vmf_seconds, r.ce_seconds, r.ratio());
  return kExitOk;
}

int run_make_toy(const MakeToyOptions& o, RunDir& run) {
  run.claim({"train.l1", "train.l2", "dev.l1", "test.l1", "test.l2", "l1.vec", "l2.vec", "gold.lex", "toy.cfg"});
  ToyTaskConfig cfg;
  cfg.words = o.words;
  cfg.train_pairs = o.pairs;
  cfg.dev_sentences = o.dev;
  cfg.test_sentences = o.test;
  cfg.dim = o.dim;
  cfg.noise = o.noise;
  cfg.seed = o.seed;
  write_toy_task(make_toy_task(cfg), run.dir());
  write_text_file(run.file("toy.cfg"),
                  "# Toy language pair; paths are relative to this file.\n"
                  "profile = toy\n"
                  "data.train_l1 = train.l1\n"
                  "data.train_l2 = train.l2\n"
                  "data.dev_l1 = dev.l1\n"
                  "data.l1_vectors = l1.vec\n"
                  "data.l2_vectors = l2.vec\n");
  spdlog::info("toy task written to {}", run.dir().string());
  return kExitOk;
}

}  // namespace paravmf::cli
