#include "paravmf/model.hpp"

#include <cmath>
#include <random>

#include <fmt/format.h>

namespace paravmf {

std::string_view head_name(HeadKind head) { return head == HeadKind::VMF ? "vmf" : "ce"; }

HeadKind parse_head(std::string_view text) {
  if (text == "vmf" || text == "VMF") return HeadKind::VMF;
  if (text == "ce" || text == "CE") return HeadKind::CE;
  throw ConfigError("unknown head kind: " + std::string(text));
}

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.profile = "paper";
  c.layers = 6;
  c.heads = 4;
  c.width = 512;
  c.ff_width = 1024;
  c.embed_dim = 300;
  c.dropout = 0.3;
  return c;
}

ModelConfig ModelConfig::toy() { return ModelConfig{}; }

ModelConfig ModelConfig::for_profile(std::string_view name) {
  if (name == "paper") return paper();
  if (name == "toy") return toy();
  throw ConfigError("unknown profile: " + std::string(name));
}

void ModelConfig::validate() const {
  if (layers < 1) throw ConfigError("layers must be >= 1");
  if (heads < 1 || width < 1 || width % heads != 0) throw ConfigError("width must be a positive multiple of heads");
  if (ff_width < 1) throw ConfigError("ff_width must be >= 1");
  if (embed_dim < 2) throw ConfigError("embed_dim must be >= 2");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
}

EncodedExample encode_example(const TaskExample& ex, const Vocabulary& vocab) {
  EncodedExample out;
  out.kind = ex.kind;
  out.target_lang = ex.target.lang;
  out.source = vocab.ids(ex.source);
  out.target = vocab.ids(ex.target);
  if (out.source.empty() || out.source.front() != Vocabulary::start_token(ex.target.lang)) {
    throw ConfigError("example source must begin with the target-language start token");
  }
  return out;
}

Matrix positional_encoding(Eigen::Index n, Eigen::Index width) {
  Matrix pe(n, width);
  for (Eigen::Index pos = 0; pos < n; ++pos) {
    for (Eigen::Index i = 0; i < width; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(width));
      const double angle = static_cast<double>(pos) * freq;
      pe(pos, i) = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

Transformer::Transformer(ModelConfig cfg, Matrix table, std::uint64_t seed, VmfConfig vmf)
    : cfg_(std::move(cfg)), vmf_(vmf) {
  cfg_.validate();
  if (table.cols() != cfg_.embed_dim) {
    throw ConfigError(fmt::format("embedding table has dimension {}, model expects {}", table.cols(), cfg_.embed_dim));
  }
  if (table.rows() < Vocabulary::kNumSpecials) throw ConfigError("embedding table lacks the special rows");
  vmf_.dim = cfg_.embed_dim;
  vmf_.validate();
  store_.add("embed.table", std::move(table), /*trainable=*/false);
  init_params(seed);
}

void Transformer::init_params(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto xavier = [&](Eigen::Index rows, Eigen::Index cols) {
    const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-a, a);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return m;
  };
  const Eigen::Index w = cfg_.width;
  auto add_linear = [&](const std::string& name, Eigen::Index in, Eigen::Index out) {
    store_.add(name + ".w", xavier(in, out));
    store_.add(name + ".b", Matrix::Zero(1, out));
  };
  auto add_norm = [&](const std::string& name) {
    store_.add(name + ".g", Matrix::Ones(1, w));
    store_.add(name + ".b", Matrix::Zero(1, w));
  };
  auto add_attention = [&](const std::string& name) {
    add_linear(name + ".q", w, w);
    // No key bias: it shifts every score of a query equally and cancels in the softmax.
    store_.add(name + ".k.w", xavier(w, w));
    add_linear(name + ".v", w, w);
    add_linear(name + ".o", w, w);
  };
  auto add_ffn = [&](const std::string& name) {
    add_linear(name + ".in", w, cfg_.ff_width);
    add_linear(name + ".out", cfg_.ff_width, w);
  };

  add_linear("embed.proj", cfg_.embed_dim, w);
  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string e = fmt::format("enc.{}", l);
    add_norm(e + ".ln_attn");
    add_attention(e + ".attn");
    add_norm(e + ".ln_ffn");
    add_ffn(e + ".ffn");
  }
  add_norm("enc.ln_out");
  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string d = fmt::format("dec.{}", l);
    add_norm(d + ".ln_self");
    add_attention(d + ".self");
    add_norm(d + ".ln_cross");
    add_attention(d + ".cross");
    add_norm(d + ".ln_ffn");
    add_ffn(d + ".ffn");
  }
  add_norm("dec.ln_out");
  // The head is drawn last so both head kinds share identical trunk weights.
  if (cfg_.head == HeadKind::VMF) {
    add_linear("head.vmf", w, cfg_.embed_dim);
  } else {
    add_linear("head.ce", w, vocab_size());
  }
}

std::size_t Transformer::head_parameter_count() const {
  const std::string base = cfg_.head == HeadKind::VMF ? "head.vmf" : "head.ce";
  return static_cast<std::size_t>(store_.at(base + ".w").value.size() + store_.at(base + ".b").value.size());
}

std::vector<TokenId> Transformer::encoder_input(const std::vector<TokenId>& source) const {
  if (source.empty()) throw ConfigError("cannot encode an empty source");
  if (cfg_.encoder_start_token) return source;
  std::vector<TokenId> words(source.begin() + 1, source.end());
  // A source with no words still needs one position to attend to.
  if (words.empty()) words.push_back(Vocabulary::kEos);
  return words;
}

Var Transformer::linear(Graph& g, const std::string& prefix, Var x) const {
  return g.add_row(g.matmul(x, g.param(p(prefix + ".w"))), g.param(p(prefix + ".b")));
}

Var Transformer::norm(Graph& g, const std::string& prefix, Var x) const {
  return g.layer_norm(x, g.param(p(prefix + ".g")), g.param(p(prefix + ".b")));
}

Var Transformer::embed(Graph& g, const std::vector<TokenId>& ids, const std::vector<Segment>& segs, bool train) const {
  Var rows = g.gather_rows(g.param(p("embed.table")), ids);
  Var x = linear(g, "embed.proj", rows);
  Eigen::Index longest = 0;
  for (const auto& s : segs) longest = std::max(longest, s.length);
  const Matrix pe = positional_encoding(longest, cfg_.width);
  Matrix pos(static_cast<Eigen::Index>(ids.size()), cfg_.width);
  for (const auto& s : segs) pos.middleRows(s.start, s.length) = pe.topRows(s.length);
  x = g.add(x, g.constant(std::move(pos)));
  return g.dropout(x, train ? cfg_.dropout : 0.0);
}

Var Transformer::attention_block(Graph& g, const std::string& prefix, Var x, Var memory,
                                 const std::vector<Segment>& q_segs, const std::vector<Segment>& k_segs, bool causal,
                                 bool train) const {
  Var q = linear(g, prefix + ".q", x);
  Var k = g.matmul(memory, g.param(p(prefix + ".k.w")));
  Var v = linear(g, prefix + ".v", memory);
  Var a = g.attention(q, k, v, cfg_.heads, q_segs, k_segs, causal);
  return g.dropout(linear(g, prefix + ".o", a), train ? cfg_.dropout : 0.0);
}

Var Transformer::ffn_block(Graph& g, const std::string& prefix, Var x, bool train) const {
  Var h = g.gelu(linear(g, prefix + ".in", x));
  return g.dropout(linear(g, prefix + ".out", h), train ? cfg_.dropout : 0.0);
}

Var Transformer::run_encoder(Graph& g, const std::vector<TokenId>& ids, const std::vector<Segment>& segs,
                             bool train) const {
  Var x = embed(g, ids, segs, train);
  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string e = fmt::format("enc.{}", l);
    Var h = norm(g, e + ".ln_attn", x);
    x = g.add(x, attention_block(g, e + ".attn", h, h, segs, segs, false, train));
    x = g.add(x, ffn_block(g, e + ".ffn", norm(g, e + ".ln_ffn", x), train));
  }
  return norm(g, "enc.ln_out", x);
}

Var Transformer::run_decoder(Graph& g, Var memory, const std::vector<Segment>& mem_segs,
                             const std::vector<TokenId>& ids, const std::vector<Segment>& segs, bool train) const {
  Var x = embed(g, ids, segs, train);
  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string d = fmt::format("dec.{}", l);
    Var h = norm(g, d + ".ln_self", x);
    x = g.add(x, attention_block(g, d + ".self", h, h, segs, segs, true, train));
    x = g.add(x, attention_block(g, d + ".cross", norm(g, d + ".ln_cross", x), memory, segs, mem_segs, false, train));
    x = g.add(x, ffn_block(g, d + ".ffn", norm(g, d + ".ln_ffn", x), train));
  }
  return norm(g, "dec.ln_out", x);
}

Var Transformer::apply_head(Graph& g, Var hidden) const {
  return linear(g, cfg_.head == HeadKind::VMF ? "head.vmf" : "head.ce", hidden);
}

Var Transformer::loss(Graph& g, const std::vector<EncodedExample>& batch, bool train, LossBreakdown* breakdown) {
  if (batch.empty()) throw ConfigError("loss over an empty batch");
  std::vector<TokenId> src_ids, dec_ids, out_ids;
  std::vector<Segment> src_segs, dec_segs;
  std::vector<TaskKind> row_kind;
  for (const auto& ex : batch) {
    if (ex.source.empty() || ex.source.front() != Vocabulary::start_token(ex.target_lang)) {
      throw ConfigError("example source must begin with the target-language start token");
    }
    const auto src = encoder_input(ex.source);
    src_segs.push_back({static_cast<Eigen::Index>(src_ids.size()), static_cast<Eigen::Index>(src.size())});
    src_ids.insert(src_ids.end(), src.begin(), src.end());
    dec_segs.push_back({static_cast<Eigen::Index>(dec_ids.size()), static_cast<Eigen::Index>(ex.target.size() + 1)});
    dec_ids.push_back(Vocabulary::start_token(ex.target_lang));
    dec_ids.insert(dec_ids.end(), ex.target.begin(), ex.target.end());
    out_ids.insert(out_ids.end(), ex.target.begin(), ex.target.end());
    out_ids.push_back(Vocabulary::kEos);
    row_kind.insert(row_kind.end(), ex.target.size() + 1, ex.kind);
  }
  Var memory = run_encoder(g, src_ids, src_segs, train);
  Var hidden = run_decoder(g, memory, src_segs, dec_ids, dec_segs, train);
  Var out = apply_head(g, hidden);
  std::vector<double> per_row;
  Var total;
  if (cfg_.head == HeadKind::VMF) {
    const Matrix& tbl = table();
    Matrix targets(static_cast<Eigen::Index>(out_ids.size()), tbl.cols());
    for (std::size_t i = 0; i < out_ids.size(); ++i) targets.row(static_cast<Eigen::Index>(i)) = tbl.row(out_ids[i]);
    total = g.vmf_loss(out, std::move(targets), vmf_, &per_row);
  } else {
    total = g.cross_entropy(out, out_ids, &per_row);
  }
  const double n = static_cast<double>(out_ids.size());
  if (breakdown != nullptr) {
    *breakdown = LossBreakdown{};
    breakdown->total = g.value(total)(0, 0);
    breakdown->tokens = out_ids.size();
    breakdown->mean = breakdown->total / n;
    for (std::size_t i = 0; i < per_row.size(); ++i) {
      const auto k = static_cast<std::size_t>(row_kind[i]);
      breakdown->by_kind[k] += per_row[i];
      ++breakdown->tokens_by_kind[k];
    }
  }
  return g.scale(total, 1.0 / n);
}

LossBreakdown Transformer::evaluate(const std::vector<EncodedExample>& batch) {
  Graph g(/*record=*/false);
  LossBreakdown out;
  loss(g, batch, false, &out);
  return out;
}

EncoderStates Transformer::encode(const std::vector<TokenId>& source) const {
  Graph g(/*record=*/false);
  EncoderStates enc;
  enc.source = encoder_input(source);
  const std::vector<Segment> segs{{0, static_cast<Eigen::Index>(enc.source.size())}};
  enc.states = g.value(run_encoder(g, enc.source, segs, false));
  return enc;
}

Matrix Transformer::decode_all(const EncoderStates& enc, const std::vector<TokenId>& prefix) const {
  if (prefix.empty()) throw ConfigError("decoder prefix must start with a start token");
  Graph g(/*record=*/false);
  Var memory = g.constant(enc.states);
  const std::vector<Segment> mem_segs{{0, enc.states.rows()}};
  const std::vector<Segment> segs{{0, static_cast<Eigen::Index>(prefix.size())}};
  Var hidden = run_decoder(g, memory, mem_segs, prefix, segs, false);
  return g.value(apply_head(g, hidden));
}

Vector Transformer::next_output(const EncoderStates& enc, const std::vector<TokenId>& prefix) const {
  const Matrix all = decode_all(enc, prefix);
  return all.row(all.rows() - 1).transpose();
}

}  // namespace paravmf
