#include <doctest.h>

#include <set>

#include "generators.hpp"
#include "paravmf/embeddings.hpp"
#include "paravmf/model.hpp"
#include "paravmf/training.hpp"

using namespace paravmf;

namespace {

constexpr int kDim = 8;

// 5 specials + 6 L1 words + 6 L2 words.
Matrix unit_table(std::uint64_t seed, Eigen::Index rows = 17) {
  gen::Rng rng(seed);
  Matrix t = gen::gaussian(rng, rows, kDim);
  normalize_rows(t);
  return t;
}

ModelConfig tiny(HeadKind head) {
  ModelConfig cfg;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.width = 8;
  cfg.ff_width = 12;
  cfg.embed_dim = kDim;
  cfg.head = head;
  return cfg;
}

std::vector<EncodedExample> tiny_batch() {
  return {
      {{Vocabulary::kStartL2, 5, 6, 7}, {11, 12}, Lang::L2, TaskKind::S2T},
      {{Vocabulary::kStartL1, 12, 13}, {6, 7, 8}, Lang::L1, TaskKind::T2S},
      {{Vocabulary::kStartL1, 9}, {9}, Lang::L1, TaskKind::AE},
  };
}

}  // namespace

TEST_CASE("model gradients match finite differences for both heads") {
  for (HeadKind head : {HeadKind::VMF, HeadKind::CE}) {
    CAPTURE(head_name(head));
    Transformer model(tiny(head), unit_table(1), 3, VmfConfig{kDim, 0.02});
    GradCheckOptions opts;
    opts.coords_per_param = 30;
    const GradCheckReport report = model_gradient_check(model, tiny_batch(), opts);
    CHECK(report.max_rel_error() < 1e-4);
    CHECK_FALSE(report.entries.empty());
    for (const auto& e : report.entries) CHECK(e.name != "embed.table");
  }
}

TEST_CASE("encoder produces one state per source position") {
  Transformer model(tiny(HeadKind::VMF), unit_table(2), 4, VmfConfig{kDim, 0.02});
  const EncoderStates enc = model.encode({Vocabulary::kStartL1, 5, 6, 7});
  CHECK(enc.states.rows() == 4);
  CHECK(enc.states.cols() == 8);
  CHECK(enc.source.front() == Vocabulary::kStartL1);
}

TEST_CASE("the encoder start token can be switched off") {
  ModelConfig cfg = tiny(HeadKind::VMF);
  cfg.encoder_start_token = false;
  Transformer model(cfg, unit_table(2), 4, VmfConfig{kDim, 0.02});
  const EncoderStates enc = model.encode({Vocabulary::kStartL1, 5, 6});
  CHECK(enc.states.rows() == 2);
  CHECK(enc.source == std::vector<TokenId>{5, 6});
  // The start token is then invisible to the encoder.
  CHECK(model.encode({Vocabulary::kStartL2, 5, 6}).states == enc.states);
  CHECK(model.encode({Vocabulary::kStartL1}).states.rows() == 1);
}

TEST_CASE("swapping the start token changes the encoding") {
  Transformer model(tiny(HeadKind::VMF), unit_table(2), 4, VmfConfig{kDim, 0.02});
  const Matrix a = model.encode({Vocabulary::kStartL1, 5, 6}).states;
  const Matrix b = model.encode({Vocabulary::kStartL2, 5, 6}).states;
  CHECK((a - b).norm() > 1e-6);
}

TEST_CASE("decoding is causal: a prefix's outputs do not depend on later tokens") {
  Transformer model(tiny(HeadKind::CE), unit_table(3), 5, VmfConfig{kDim, 0.02});
  const EncoderStates enc = model.encode({Vocabulary::kStartL1, 5, 6, 7});
  const Matrix full = model.decode_all(enc, {Vocabulary::kStartL1, 8, 9, 10});
  const Matrix part = model.decode_all(enc, {Vocabulary::kStartL1, 8});
  CHECK(full.topRows(2).isApprox(part, 1e-12));
  CHECK(model.next_output(enc, {Vocabulary::kStartL1, 8}).isApprox(part.row(1).transpose(), 1e-12));
  CHECK(full.cols() == 17);
}

TEST_CASE("head output sizes") {
  Transformer vmf(tiny(HeadKind::VMF), unit_table(1), 1, VmfConfig{kDim, 0.02});
  Transformer ce(tiny(HeadKind::CE), unit_table(1), 1, VmfConfig{kDim, 0.02});
  const EncoderStates enc = vmf.encode({Vocabulary::kStartL1, 5});
  CHECK(vmf.next_output(enc, {Vocabulary::kStartL1}).size() == kDim);
  CHECK(ce.next_output(ce.encode({Vocabulary::kStartL1, 5}), {Vocabulary::kStartL1}).size() == 17);
  CHECK(vmf.head_parameter_count() == 8 * kDim + kDim);
  CHECK(ce.head_parameter_count() == 8 * 17 + 17);
}

TEST_CASE("trunk parameters carry no language-specific blocks") {
  Transformer model(tiny(HeadKind::VMF), unit_table(1), 1, VmfConfig{kDim, 0.02});
  for (const auto& e : model.params().entries()) {
    CHECK(e.name.find("l1") == std::string::npos);
    CHECK(e.name.find("l2") == std::string::npos);
  }
  CHECK_FALSE(model.params().at("embed.table").trainable);
}

TEST_CASE("same seed, same parameters") {
  Transformer a(tiny(HeadKind::VMF), unit_table(1), 9, VmfConfig{kDim, 0.02});
  Transformer b(tiny(HeadKind::VMF), unit_table(1), 9, VmfConfig{kDim, 0.02});
  for (std::size_t i = 0; i < a.params().entries().size(); ++i) {
    CHECK(a.params().entries()[i].value == b.params().entries()[i].value);
  }
}

TEST_CASE("evaluate reports per-kind token counts") {
  Transformer model(tiny(HeadKind::VMF), unit_table(1), 1, VmfConfig{kDim, 0.02});
  const LossBreakdown lb = model.evaluate(tiny_batch());
  CHECK(lb.tokens == 3 + 4 + 2);
  CHECK(lb.tokens_by_kind[0] == 3);
  CHECK(lb.tokens_by_kind[1] == 4);
  CHECK(lb.tokens_by_kind[2] == 2);
  CHECK(lb.mean == doctest::Approx(lb.total / 9.0));
}

TEST_CASE("invalid configurations are rejected") {
  ModelConfig cfg = tiny(HeadKind::VMF);
  cfg.width = 9;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny(HeadKind::VMF);
  cfg.dropout = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS(Transformer(tiny(HeadKind::VMF), unit_table(1).leftCols(4), 1), ConfigError);
  CHECK_THROWS_AS(ModelConfig::for_profile("huge"), ConfigError);
  CHECK(ModelConfig::paper().layers == 6);
  CHECK(ModelConfig::paper().width == 512);
  Transformer model(tiny(HeadKind::VMF), unit_table(1), 1, VmfConfig{kDim, 0.02});
  CHECK_THROWS_AS(model.encode({}), ConfigError);
  std::vector<EncodedExample> bad{{{5, 6}, {7}, Lang::L1, TaskKind::AE}};
  CHECK_THROWS_AS(model.evaluate(bad), ConfigError);
}

TEST_CASE("encode_example maps tokens through the vocabulary") {
  const Vocabulary vocab({{"a", 1}, {"b", 1}}, {{"x", 1}});
  const TaskExample ex = make_example(Sentence{{"a", "zz"}, Lang::L1}, Sentence{{"x"}, Lang::L2}, TaskKind::S2T);
  const EncodedExample enc = encode_example(ex, vocab);
  CHECK(enc.source == std::vector<TokenId>{Vocabulary::kStartL2, 5, Vocabulary::kUnk});
  CHECK(enc.target == std::vector<TokenId>{7});
  CHECK(enc.target_lang == Lang::L2);
}
