#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "paravmf/model.hpp"
#include "paravmf/training.hpp"
#include "paravmf/vmf.hpp"

namespace paravmf {

/// `key = value` lines; `#` starts a comment, blank lines are ignored. A key may
/// appear once per file.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in, const std::string& source = "<config>");
  static KeyValueConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  std::optional<std::string> get(const std::string& key) const;
  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

  /// Relative data paths are resolved against this directory (the directory of
  /// the loaded file).
  std::filesystem::path base_dir;

 private:
  std::map<std::string, std::string> values_;
};

/// Data files of a training run. Empty paths are unset.
struct DataPaths {
  std::filesystem::path train_l1;
  std::filesystem::path train_l2;
  std::filesystem::path dev_l1;
  std::filesystem::path l1_vectors;
  std::filesystem::path l2_vectors;
  std::filesystem::path vocab;  // optional; built from the training data when unset
  std::size_t max_vocab = 50000;
};

struct ExperimentConfig {
  ModelConfig model;
  VmfConfig vmf;
  TrainConfig train;
  DataPaths data;
  /// Whether embed_dim was given explicitly (otherwise taken from the vectors).
  bool embed_dim_set = false;
};

/// Every key understood by resolve_experiment, in documentation order.
const std::vector<std::string>& experiment_keys();

/// Applies the profile defaults, then every other key. Unknown keys, malformed
/// values and conflicting keys raise ConfigError.
ExperimentConfig resolve_experiment(const KeyValueConfig& kv);

/// All keys with their resolved values, one `key = value` per line, in the order
/// of experiment_keys(). Parsing the text back yields the same configuration.
std::string resolved_text(const ExperimentConfig& cfg);

}  // namespace paravmf
