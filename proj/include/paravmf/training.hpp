#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "paravmf/compute.hpp"
#include "paravmf/corpus.hpp"
#include "paravmf/model.hpp"

namespace paravmf {

struct TrainConfig {
  AeAmount ae = AeAmount::of_fraction(0.01);
  NoiseConfig noise;
  TaskMix mix;
  /// At least one of the two limits must be set (0 = unset).
  std::size_t max_steps = 0;
  std::size_t max_epochs = 0;
  std::size_t eval_every = 500;
  std::size_t patience = 5;
  std::size_t token_budget = 4096;
  std::uint64_t seed = 1;
  bool no_encoder_start_token = false;
  bool no_autoencoding = false;
  AdamConfig adam;

  void validate() const;
  /// The AE amount after applying the no_autoencoding ablation.
  AeAmount effective_ae() const { return no_autoencoding ? AeAmount::of_count(0) : ae; }
};

struct TrainRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double loss[3] = {0, 0, 0};  // mean token loss per task kind since the last record
  double dev_loss = 0.0;
  double seconds_per_step = 0.0;
};

struct TrainReport {
  std::vector<TrainRecord> records;
  std::size_t steps = 0;
  std::size_t epochs = 0;
  std::size_t selected_step = 0;
  double selected_dev_loss = 0.0;
  std::size_t examples_by_kind[3] = {0, 0, 0};
  std::size_t skipped_examples = 0;
  bool diverged = false;
  std::string stop_reason;

  /// step, epoch, per-kind losses, AE dev loss, wall-clock per step.
  void write_tsv(std::ostream& out) const;
};

struct TrainData {
  ParallelCorpus train;
  /// Held-out L1 sentences; their autoencoding loss drives early stopping.
  std::vector<Sentence> dev_l1;
};

/// Joint S2T/T2S/AE training with Adam and early stopping on the AE dev loss.
/// On return the model holds the parameters of the selected evaluation. A
/// non-finite loss stops training with `diverged` set and the best parameters
/// restored. When `optimizer` is given it is used (and left holding the moments
/// of the selected evaluation) instead of a fresh Adam built from cfg.adam.
TrainReport train(Transformer& model, const Vocabulary& vocab, const TrainData& data, const TrainConfig& cfg,
                  const std::function<void(const TrainRecord&)>& on_record = {}, Adam* optimizer = nullptr);

/// Mean AE token loss over the dev sentences.
double ae_dev_loss(Transformer& model, const Vocabulary& vocab, const std::vector<Sentence>& dev_l1,
                   std::size_t token_budget);

/// Gradient check of the full model loss on `batch` with dropout off.
GradCheckReport model_gradient_check(Transformer& model, const std::vector<EncodedExample>& batch,
                                     const GradCheckOptions& opts = {});

struct HeadBenchConfig {
  ModelConfig model = ModelConfig::paper();
  std::size_t vocab_size = 50000;  // per combined table, specials excluded
  std::size_t batch_sentences = 8;
  std::size_t sentence_length = 16;
  std::size_t warmup_steps = 1;
  std::size_t steps = 5;
  std::uint64_t seed = 3;
};

struct HeadBenchResult {
  double vmf_seconds = 0.0;  // median training-step time
  double ce_seconds = 0.0;
  std::size_t vmf_head_params = 0;
  std::size_t ce_head_params = 0;
  double ratio() const { return ce_seconds / vmf_seconds; }
};

/// Times full training steps (forward, backward, Adam) of identical trunks with
/// the two output heads on the same random batch.
HeadBenchResult benchmark_heads(const HeadBenchConfig& cfg);

}  // namespace paravmf
