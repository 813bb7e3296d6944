#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "paravmf/compute.hpp"
#include "paravmf/config.hpp"
#include "paravmf/corpus.hpp"
#include "paravmf/model.hpp"

namespace paravmf {

/// A trained model with everything needed to run it on raw text.
struct ModelBundle {
  ExperimentConfig config;
  std::string config_text;
  Vocabulary vocab;
  CaseModel l1_case;
  CaseModel l2_case;
  std::unique_ptr<Transformer> model;
};

/// Text sections "format", "config", "vocab", "truecase.l1", "truecase.l2";
/// parameters and (when given) Adam state as in store_to_checkpoint.
Checkpoint bundle_checkpoint(const Transformer& model, const Vocabulary& vocab, const CaseModel& l1_case,
                             const CaseModel& l2_case, const std::string& config_text, const Adam* adam);

ModelBundle load_bundle(const std::filesystem::path& path);

/// Tokenizes and truecases one line of raw text.
Sentence prepare(std::string_view text, Lang lang, const CaseModel& case_model);

}  // namespace paravmf
