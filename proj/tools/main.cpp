// paravmf: command-line entry point. Every subcommand writes its outputs, the
// invocation and a log into its run directory.
#include <functional>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "cli.hpp"

namespace {

using namespace paravmf::cli;

void print_error(std::string_view kind, std::string_view message) {
  std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << '\n';
}

struct RunFlags {
  std::string dir;
  bool overwrite = false;
};

void add_run_flags(CLI::App* sub, RunFlags& flags, const std::string& default_dir) {
  flags.dir = default_dir;
  sub->add_option("--run-dir", flags.dir, "Directory for outputs, the invocation and the log");
  sub->add_flag("--overwrite", flags.overwrite, "Replace outputs already present in the run directory");
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("paravmf");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%Y-%m-%d %H:%M:%S.%e] [%l] %v");

  CLI::App app{"Zero-shot paraphrasing with continuous-output translation models", "paravmf"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.fallthrough();
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  std::function<int()> action;
  RunFlags run_flags;
  auto with_run = [&](CLI::App* sub, auto fn) {
    sub->callback([&, sub, fn] {
      action = [&, sub, fn] {
        RunDir run(run_flags.dir, run_flags.overwrite);
        run.set_invocation(sub->config_to_str(/*default_also=*/true, /*write_description=*/false));
        return fn(run);
      };
    });
  };

  // build-vocab
  BuildVocabOptions bv;
  auto* s_bv = app.add_subcommand("build-vocab", "Tokenize and truecase a parallel corpus and build the vocabulary");
  s_bv->add_option("--l1", bv.l1, "L1 side of the parallel corpus (raw text, one sentence per line)")->required();
  s_bv->add_option("--l2", bv.l2, "L2 side, line-aligned with --l1")->required();
  s_bv->add_option("--max-size", bv.max_size, "Maximum words per language");
  add_run_flags(s_bv, run_flags, "runs/build-vocab");
  with_run(s_bv, [&](RunDir& r) { return run_build_vocab(bv, r); });

  // align-embeddings
  AlignOptions al;
  auto* s_al = app.add_subcommand("align-embeddings", "Orthogonal Procrustes alignment of L2 vectors onto L1 vectors");
  s_al->add_option("--source-vectors", al.source_vectors, "L2 word vectors (text format)")->required();
  s_al->add_option("--target-vectors", al.target_vectors, "L1 word vectors (text format)")->required();
  s_al->add_option("--seed-lexicon", al.seed_lexicon,
                   "TSV of L2<TAB>L1 seed pairs; identically spelled words are used when omitted");
  s_al->add_option("--self-learn", al.self_learn, "Self-learning refinement iterations");
  add_run_flags(s_al, run_flags, "runs/align-embeddings");
  with_run(s_al, [&](RunDir& r) { return run_align(al, r); });

  // induce-lexicon
  LexiconOptions lx;
  auto* s_lx = app.add_subcommand("induce-lexicon", "Nearest-neighbour L2 -> L1 lexicon under an alignment");
  s_lx->add_option("--l1-vectors", lx.l1_vectors, "L1 word vectors")->required();
  s_lx->add_option("--l2-vectors", lx.l2_vectors, "L2 word vectors")->required();
  s_lx->add_option("--alignment", lx.alignment, "alignment.txt from align-embeddings")->required();
  s_lx->add_option("--vocab", lx.vocab, "Restrict both sides to the words of this vocabulary");
  add_run_flags(s_lx, run_flags, "runs/induce-lexicon");
  with_run(s_lx, [&](RunDir& r) { return run_lexicon(lx, r); });

  // train
  TrainOptions tr;
  auto* s_tr = app.add_subcommand("train", "Joint translation and autoencoding training");
  s_tr->add_option("--config", tr.config, "Experiment config file (key = value)");
  s_tr->add_option("--seed", tr.seed, "Override the config seed (-1 keeps it)");
  s_tr->add_option("--set", tr.set, "Override one config key, key=value (repeatable)");
  add_run_flags(s_tr, run_flags, "runs/train");
  with_run(s_tr, [&](RunDir& r) { return run_train(tr, r); });

  // paraphrase
  DecodeOptions pp;
  auto* s_pp = app.add_subcommand("paraphrase", "Greedy decoding into the requested language");
  s_pp->add_option("--model", pp.model, "model.ckpt from train")->required();
  s_pp->add_option("--input", pp.input, "Raw input sentences, one per line")->required();
  s_pp->add_option("--source-lang", pp.source_lang, "Language of the input")->check(CLI::IsMember({"L1", "L2"}));
  s_pp->add_option("--target-lang", pp.target_lang, "Language to generate")->check(CLI::IsMember({"L1", "L2"}));
  s_pp->add_option("--region", pp.region, "Nearest-neighbour search region: combined or target (default combined)")
      ->check(CLI::IsMember({"combined", "target"}));
  s_pp->add_option("--lexicon", pp.lexicon, "Lexicon used to replace stray L2 words in L1 output");
  s_pp->add_option("--max-length", pp.max_length, "Maximum output tokens");
  s_pp->add_flag("--no-postprocess", pp.no_postprocess, "Keep stray L2 words even with --lexicon");
  add_run_flags(s_pp, run_flags, "runs/paraphrase");
  with_run(s_pp, [&](RunDir& r) { return run_paraphrase(pp, r); });

  // pivot
  DecodeOptions pv;
  auto* s_pv = app.add_subcommand("pivot", "Back-translation baseline: L1 -> L2 -> L1");
  s_pv->add_option("--model", pv.model, "Model used for L1 -> L2")->required();
  s_pv->add_option("--backward-model", pv.backward_model, "Model used for L2 -> L1 (default: --model)");
  s_pv->add_option("--input", pv.input, "Raw L1 sentences, one per line")->required();
  s_pv->add_option("--region", pv.region, "Search region of both passes: combined or target (default target)")
      ->check(CLI::IsMember({"combined", "target"}));
  s_pv->add_option("--max-length", pv.max_length, "Maximum output tokens per pass");
  add_run_flags(s_pv, run_flags, "runs/pivot");
  with_run(s_pv, [&](RunDir& r) { return run_pivot(pv, r); });

  // score
  ScoreOptions sc;
  auto* s_sc = app.add_subcommand("score", "Per-line IoU, WER and fallback similarity of outputs against inputs");
  s_sc->add_option("--inputs", sc.inputs, "Input sentences")->required();
  s_sc->add_option("--outputs", sc.outputs, "System outputs, line-aligned with --inputs")->required();
  s_sc->add_option("--metrics", sc.metrics, "Comma-separated subset of iou, wer, similarity");
  s_sc->add_option("--vectors", sc.vectors, "Word vectors for the similarity metric");
  add_run_flags(s_sc, run_flags, "runs/score");
  with_run(s_sc, [&](RunDir& r) { return run_score(sc, r); });

  // report
  ReportOptions rp;
  auto* s_rp = app.add_subcommand("report", "Diversity, meaning-preservation and A/B tables");
  s_rp->add_option("--mode", rp.mode, "diversity, meaning or ab")
      ->required()
      ->check(CLI::IsMember({"diversity", "meaning", "ab"}));
  s_rp->add_option("--inputs", rp.inputs, "diversity: input sentences");
  s_rp->add_option("--input-parses", rp.input_parses, "diversity: bracketed parses of the inputs");
  s_rp->add_option("--system", rp.systems, "diversity: NAME,OUTPUTS,SCORES[,PARSES] (one or two)");
  s_rp->add_option("--thresholds", rp.thresholds, "diversity: comma-separated similarity thresholds");
  s_rp->add_option("--scores", rp.scores, "meaning: SYSTEM,GROUP,METRIC,FILE (repeatable)");
  s_rp->add_option("--store", rp.store, "ab: session store directory");
  s_rp->add_option("--session", rp.session, "ab: session id");
  s_rp->add_flag("--force", rp.force, "ab: report an incomplete session");
  s_rp->add_flag("--all-votes", rp.all_votes, "ab: count every vote instead of majority items");
  add_run_flags(s_rp, run_flags, "runs/report");
  with_run(s_rp, [&](RunDir& r) { return run_report(rp, r); });

  // abtest
  auto* s_ab = app.add_subcommand("abtest", "Blind A/B human evaluation");
  s_ab->require_subcommand(1);
  AbNewOptions an;
  auto* s_an = s_ab->add_subcommand("new", "Create a session from two systems' outputs");
  s_an->add_option("--store", an.store, "Session store directory")->required();
  s_an->add_option("--session", an.session, "New session id")->required();
  s_an->add_option("--inputs", an.inputs, "Input sentences")->required();
  s_an->add_option("--outputs-a", an.outputs_a, "Outputs of system A")->required();
  s_an->add_option("--outputs-b", an.outputs_b, "Outputs of system B")->required();
  s_an->add_option("--name-a", an.name_a, "Name of system A (reports only)");
  s_an->add_option("--name-b", an.name_b, "Name of system B (reports only)");
  s_an->add_option("--annotators", an.annotators, "Comma-separated roster; empty accepts anyone");
  s_an->add_option("--items", an.items, "Items sampled without replacement");
  s_an->add_option("--seed", an.seed, "Sampling and shuffling seed");
  s_an->callback([&] { action = [&] { return run_ab_new(an); }; });

  ServeOptions sv;
  auto* s_sv = s_ab->add_subcommand("serve", "Serve the judging API over HTTP");
  s_sv->add_option("--store", sv.store, "Session store directory")->required();
  s_sv->add_option("--host", sv.host, "Listen address");
  s_sv->add_option("--port", sv.port, "Listen port");
  s_sv->callback([&] { action = [&] { return run_ab_serve(sv); }; });

  ReportOptions ar;
  ar.mode = "ab";
  auto* s_ar = s_ab->add_subcommand("report", "Vote table and agreement of a session");
  s_ar->add_option("--store", ar.store, "Session store directory")->required();
  s_ar->add_option("--session", ar.session, "Session id")->required();
  s_ar->add_flag("--force", ar.force, "Report an incomplete session");
  s_ar->add_flag("--all-votes", ar.all_votes, "Count every vote instead of majority items");
  add_run_flags(s_ar, run_flags, "runs/abtest-report");
  with_run(s_ar, [&](RunDir& r) { return run_report(ar, r); });

  // gradcheck
  GradcheckOptions gc;
  auto* s_gc = app.add_subcommand("gradcheck", "Finite-difference check of the toy model gradients");
  s_gc->add_option("--head", gc.head, "vmf, ce or both")->check(CLI::IsMember({"vmf", "ce", "both"}));
  s_gc->add_option("--seed", gc.seed, "Toy task and initialization seed");
  s_gc->add_option("--coords", gc.coords, "Coordinates sampled per parameter");
  s_gc->add_option("--sentences", gc.sentences, "Examples in the checked batch");
  s_gc->add_option("--epsilon", gc.epsilon, "Finite-difference step");
  s_gc->add_option("--tolerance", gc.tolerance, "Fail when the max relative error reaches this");
  add_run_flags(s_gc, run_flags, "runs/gradcheck");
  with_run(s_gc, [&](RunDir& r) { return run_gradcheck(gc, r); });

  // bench-heads
  BenchOptions bh;
  auto* s_bh = app.add_subcommand("bench-heads", "Training-step time of the vMF and softmax heads");
  s_bh->add_option("--vocab-size", bh.vocab_size, "Words in the output table");
  s_bh->add_option("--steps", bh.steps, "Timed steps per head");
  s_bh->add_option("--batch", bh.batch, "Sentences per batch");
  s_bh->add_option("--length", bh.length, "Tokens per sentence");
  s_bh->add_option("--seed", bh.seed, "Random seed");
  add_run_flags(s_bh, run_flags, "runs/bench-heads");
  with_run(s_bh, [&](RunDir& r) { return run_bench(bh, r); });

  // make-toy
  MakeToyOptions mt;
  auto* s_mt = app.add_subcommand("make-toy", "Write the synthetic toy language pair and a matching config");
  s_mt->add_option("--words", mt.words, "Words per language");
  s_mt->add_option("--pairs", mt.pairs, "Training sentence pairs");
  s_mt->add_option("--dev", mt.dev, "Dev sentences");
  s_mt->add_option("--test", mt.test, "Test sentences");
  s_mt->add_option("--dim", mt.dim, "Vector dimension");
  s_mt->add_option("--noise", mt.noise, "Noise added to the rotated L2 vectors");
  s_mt->add_option("--seed", mt.seed, "Random seed");
  add_run_flags(s_mt, run_flags, "runs/toy");
  with_run(s_mt, [&](RunDir& r) { return run_make_toy(mt, r); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and --version arrive here as well, with exit code 0.
    if (e.get_exit_code() == 0) return app.exit(e);
    print_error("usage", e.what());
    return kExitUsage;
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    return action ? action() : kExitUsage;
  } catch (const UsageError& e) {
    print_error("usage", e.what());
    return kExitUsage;
  } catch (const paravmf::ConfigError& e) {
    print_error("config", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    print_error("failure", e.what());
    return kExitFailure;
  }
}
