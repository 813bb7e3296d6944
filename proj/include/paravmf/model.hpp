#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "paravmf/common.hpp"
#include "paravmf/compute.hpp"
#include "paravmf/corpus.hpp"
#include "paravmf/graph.hpp"
#include "paravmf/vmf.hpp"

namespace paravmf {

enum class HeadKind : std::uint8_t { VMF, CE };
std::string_view head_name(HeadKind head);
HeadKind parse_head(std::string_view text);

struct ModelConfig {
  // Defaults are the toy profile.
  std::string profile = "toy";
  int layers = 1;
  int heads = 4;
  int width = 64;
  int ff_width = 128;
  int embed_dim = 32;
  double dropout = 0.0;
  HeadKind head = HeadKind::VMF;
  /// When false the encoder input omits the target-language start token.
  bool encoder_start_token = true;

  /// 6 layers, 4 heads, width 512, feed-forward 1024, 300-d embeddings, dropout 0.3.
  static ModelConfig paper();
  static ModelConfig toy();
  static ModelConfig for_profile(std::string_view name);
  void validate() const;
};

/// One example as token ids. `source` starts with the target-language start
/// token; `target` holds the words only (EOS is appended by the model).
struct EncodedExample {
  std::vector<TokenId> source;
  std::vector<TokenId> target;
  Lang target_lang = Lang::L1;
  TaskKind kind = TaskKind::S2T;
};

EncodedExample encode_example(const TaskExample& ex, const Vocabulary& vocab);

struct EncoderStates {
  Matrix states;                 // one row per encoder position
  std::vector<TokenId> source;  // as fed to the encoder
};

struct LossBreakdown {
  double mean = 0.0;           // loss / tokens
  double total = 0.0;
  std::size_t tokens = 0;      // target positions including EOS
  double by_kind[3] = {0, 0, 0};
  std::size_t tokens_by_kind[3] = {0, 0, 0};
};

/// Inference surface shared by the trained model and decoding test stubs.
class Seq2Seq {
 public:
  virtual ~Seq2Seq() = default;
  virtual HeadKind head() const = 0;
  virtual EncoderStates encode(const std::vector<TokenId>& source) const = 0;
  /// Head output at the last position of `prefix` (which starts with the
  /// target start token): the predicted vector for VMF, logits for CE.
  virtual Vector next_output(const EncoderStates& enc, const std::vector<TokenId>& prefix) const = 0;
};

/// Pre-norm transformer encoder-decoder over a frozen combined embedding table.
/// Parameters are language-agnostic; the start tokens and vocabulary rows are the
/// only language signals.
class Transformer : public Seq2Seq {
 public:
  /// `table` holds one unit row per combined-vocabulary id, EOS included.
  Transformer(ModelConfig cfg, Matrix table, std::uint64_t seed, VmfConfig vmf = {});

  const ModelConfig& config() const { return cfg_; }
  const VmfConfig& vmf_config() const { return vmf_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }
  const Matrix& table() const { return store_.at("embed.table").value; }
  Eigen::Index vocab_size() const { return table().rows(); }
  std::size_t head_parameter_count() const;

  /// Records the mean token loss of `batch` on `g`. Dropout is active only when
  /// `train` is set and the graph records.
  Var loss(Graph& g, const std::vector<EncodedExample>& batch, bool train, LossBreakdown* breakdown = nullptr);

  /// Forward-only loss.
  LossBreakdown evaluate(const std::vector<EncodedExample>& batch);

  HeadKind head() const override { return cfg_.head; }
  EncoderStates encode(const std::vector<TokenId>& source) const override;
  Vector next_output(const EncoderStates& enc, const std::vector<TokenId>& prefix) const override;
  /// Head outputs for every position of `prefix`.
  Matrix decode_all(const EncoderStates& enc, const std::vector<TokenId>& prefix) const;

 private:
  void init_params(std::uint64_t seed);
  std::vector<TokenId> encoder_input(const std::vector<TokenId>& source) const;
  Var embed(Graph& g, const std::vector<TokenId>& ids, const std::vector<Segment>& segs, bool train) const;
  Var attention_block(Graph& g, const std::string& prefix, Var x, Var memory, const std::vector<Segment>& q_segs,
                      const std::vector<Segment>& k_segs, bool causal, bool train) const;
  Var ffn_block(Graph& g, const std::string& prefix, Var x, bool train) const;
  Var norm(Graph& g, const std::string& prefix, Var x) const;
  Var linear(Graph& g, const std::string& prefix, Var x) const;
  Var run_encoder(Graph& g, const std::vector<TokenId>& ids, const std::vector<Segment>& segs, bool train) const;
  Var run_decoder(Graph& g, Var memory, const std::vector<Segment>& mem_segs, const std::vector<TokenId>& ids,
                  const std::vector<Segment>& segs, bool train) const;
  Var apply_head(Graph& g, Var hidden) const;

  ParameterStore::Entry& p(const std::string& name) const { return store_.at(name); }

  ModelConfig cfg_;
  VmfConfig vmf_;
  // Inference builds non-recording graphs over the same parameter entries.
  mutable ParameterStore store_;
};

/// Sinusoidal position encodings for positions [0, n).
Matrix positional_encoding(Eigen::Index n, Eigen::Index width);

}  // namespace paravmf
