// Shared pieces of the paravmf command-line tool.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "paravmf/common.hpp"

namespace paravmf::cli {

/// Bad flags, missing inputs, conflicting options: exit code 2.
struct UsageError : Error {
  using Error::Error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Output directory of one invocation.
class RunDir {
 public:
  RunDir(std::filesystem::path dir, bool overwrite) : dir_(std::move(dir)), overwrite_(overwrite) {}

  /// Creates the directory and refuses (UsageError) when any of `names` already
  /// exists there and --overwrite was not given. Also starts log.txt and writes
  /// invocation.txt.
  void claim(const std::vector<std::string>& names);
  std::filesystem::path file(const std::string& name) const { return dir_ / name; }
  const std::filesystem::path& dir() const { return dir_; }
  /// Every option of the subcommand with its value, defaults included.
  void set_invocation(std::string text) { invocation_ = std::move(text); }

 private:
  std::filesystem::path dir_;
  bool overwrite_;
  std::string invocation_;
};

void write_text_file(const std::filesystem::path& path, const std::string& content);
std::vector<std::string> read_lines(const std::filesystem::path& path);
void require_file(const std::filesystem::path& path, const std::string& flag);
std::vector<std::string> split(const std::string& text, char sep);

// Command options. Defaults here are the ones shown by --help.

struct BuildVocabOptions {
  std::string l1, l2;
  std::size_t max_size = 50000;
};

struct AlignOptions {
  std::string source_vectors, target_vectors, seed_lexicon;
  std::size_t self_learn = 0;
};

struct LexiconOptions {
  std::string l1_vectors, l2_vectors, alignment, vocab;
};

struct TrainOptions {
  std::string config;
  std::int64_t seed = -1;
  std::vector<std::string> set;
};

struct DecodeOptions {
  std::string model, backward_model, input, lexicon;
  std::string source_lang = "L1", target_lang = "L1";
  std::string region;
  std::size_t max_length = 100;
  bool no_postprocess = false;
};

struct ScoreOptions {
  std::string inputs, outputs, vectors;
  std::string metrics = "iou,wer";
};

struct ReportOptions {
  std::string mode;
  std::string inputs, input_parses;
  std::vector<std::string> systems;
  std::vector<std::string> scores;
  std::string thresholds = "0.85,0.9,0.95";
  std::string store, session;
  bool force = false, all_votes = false;
};

struct AbNewOptions {
  std::string store, session, inputs, outputs_a, outputs_b;
  std::string name_a = "A", name_b = "B";
  std::string annotators;
  std::size_t items = 200;
  std::uint64_t seed = 1;
};

struct ServeOptions {
  std::string store;
  std::string host = "127.0.0.1";
  int port = 8080;
};

struct GradcheckOptions {
  std::string head = "both";
  std::uint64_t seed = 5;
  std::size_t coords = 200;
  std::size_t sentences = 4;
  double epsilon = 1e-4;
  double tolerance = 1e-3;
};

struct BenchOptions {
  std::size_t vocab_size = 50000;
  std::size_t steps = 5;
  std::size_t batch = 8;
  std::size_t length = 16;
  std::uint64_t seed = 3;
};

struct MakeToyOptions {
  std::size_t words = 50, pairs = 200, dev = 50, test = 50;
  long dim = 32;
  double noise = 0.05;
  std::uint64_t seed = 11;
};

int run_build_vocab(const BuildVocabOptions& o, RunDir& run);
int run_align(const AlignOptions& o, RunDir& run);
int run_lexicon(const LexiconOptions& o, RunDir& run);
int run_train(const TrainOptions& o, RunDir& run);
int run_paraphrase(const DecodeOptions& o, RunDir& run);
int run_pivot(const DecodeOptions& o, RunDir& run);
int run_score(const ScoreOptions& o, RunDir& run);
int run_report(const ReportOptions& o, RunDir& run);
int run_ab_new(const AbNewOptions& o);
int run_ab_serve(const ServeOptions& o);
int run_gradcheck(const GradcheckOptions& o, RunDir& run);
int run_bench(const BenchOptions& o, RunDir& run);
int run_make_toy(const MakeToyOptions& o, RunDir& run);

}  // namespace paravmf::cli
