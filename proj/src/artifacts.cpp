#include "paravmf/artifacts.hpp"

#include <sstream>

namespace paravmf {

namespace {

constexpr const char* kFormat = "paravmf-model 1";

template <typename T>
std::string to_text(const T& object) {
  std::ostringstream out;
  object.write_tsv(out);
  return out.str();
}

}  // namespace

Checkpoint bundle_checkpoint(const Transformer& model, const Vocabulary& vocab, const CaseModel& l1_case,
                             const CaseModel& l2_case, const std::string& config_text, const Adam* adam) {
  Checkpoint ckpt;
  ckpt.texts.emplace_back("format", kFormat);
  ckpt.texts.emplace_back("config", config_text);
  ckpt.texts.emplace_back("vocab", to_text(vocab));
  ckpt.texts.emplace_back("truecase.l1", to_text(l1_case));
  ckpt.texts.emplace_back("truecase.l2", to_text(l2_case));
  store_to_checkpoint(model.params(), adam, ckpt);
  return ckpt;
}

ModelBundle load_bundle(const std::filesystem::path& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  if (!ckpt.has_text("format") || ckpt.text("format") != kFormat) {
    throw FormatError(path.string() + " is not a model checkpoint");
  }
  ModelBundle b;
  b.config_text = ckpt.text("config");
  std::istringstream cfg_in(b.config_text);
  b.config = resolve_experiment(KeyValueConfig::parse(cfg_in, path.string() + ":config"));
  std::istringstream vocab_in(ckpt.text("vocab"));
  b.vocab = Vocabulary::read_tsv(vocab_in);
  std::istringstream l1_in(ckpt.text("truecase.l1"));
  b.l1_case = CaseModel::read_tsv(l1_in);
  std::istringstream l2_in(ckpt.text("truecase.l2"));
  b.l2_case = CaseModel::read_tsv(l2_in);
  const Matrix& table = ckpt.matrix("param/embed.table");
  if (static_cast<std::size_t>(table.rows()) != b.vocab.size()) {
    throw FormatError("checkpoint table and vocabulary sizes differ");
  }
  b.model = std::make_unique<Transformer>(b.config.model, table, b.config.train.seed, b.config.vmf);
  store_from_checkpoint(ckpt, b.model->params(), nullptr);
  return b;
}

Sentence prepare(std::string_view text, Lang lang, const CaseModel& case_model) {
  return case_model.apply(tokenize(text, lang));
}

}  // namespace paravmf
