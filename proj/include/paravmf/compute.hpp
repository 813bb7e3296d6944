#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "paravmf/common.hpp"

namespace paravmf {

/// Named dense parameters in insertion order. Frozen entries carry no gradient
/// buffer and are never touched by the optimizer.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Matrix value;
    Matrix grad;  // empty when frozen
    bool trainable = true;
  };

  Entry& add(std::string name, Matrix init, bool trainable = true);

  Entry& at(const std::string& name);
  const Entry& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  void zero_grad();
  std::size_t num_values(bool trainable_only = false) const;

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class LrSchedule { Constant, InverseSqrt };

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.998;
  double eps = 1e-9;
  LrSchedule schedule = LrSchedule::Constant;
  std::size_t warmup = 4000;

  /// Learning rate for the 1-based step `step`. The inverse-square-root schedule
  /// ramps linearly to `lr` over `warmup` steps, then decays as sqrt(warmup/step).
  double rate(std::uint64_t step) const;
};

class Adam {
 public:
  Adam(const ParameterStore& store, AdamConfig cfg);

  /// One bias-corrected Adam update from the gradients held in `store`.
  void step(ParameterStore& store);

  std::uint64_t steps() const { return step_; }
  const AdamConfig& config() const { return cfg_; }

  // Moments are indexed like store.entries(); frozen entries have empty moments.
  std::vector<Matrix>& first_moments() { return m_; }
  std::vector<Matrix>& second_moments() { return v_; }
  const std::vector<Matrix>& first_moments() const { return m_; }
  const std::vector<Matrix>& second_moments() const { return v_; }
  void set_steps(std::uint64_t step) { step_ = step; }

 private:
  AdamConfig cfg_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::uint64_t step_ = 0;
};

struct GradCheckEntry {
  std::string name;
  std::size_t coordinates = 0;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  double epsilon = 0.0;
  std::vector<GradCheckEntry> entries;

  double max_rel_error() const;
};

struct GradCheckOptions {
  double epsilon = 1e-4;
  std::size_t coords_per_param = 200;
  std::uint64_t seed = 17;
};

/// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

/// Compares gradients produced by `loss_and_grad` (which must zero and fill the
/// store's gradient buffers and return the loss) against fourth-order central
/// differences of `loss` on a random subset of coordinates of every trainable
/// parameter.
GradCheckReport gradient_check(ParameterStore& store, const std::function<double()>& loss_and_grad,
                               const std::function<double()>& loss, const GradCheckOptions& opts = {});

/// Binary container of named text sections and named matrices. Matrices are
/// stored as raw little-endian IEEE doubles, so a round trip is bit-exact.
struct Checkpoint {
  std::vector<std::pair<std::string, std::string>> texts;
  std::vector<std::pair<std::string, Matrix>> matrices;

  const std::string& text(const std::string& name) const;
  const Matrix& matrix(const std::string& name) const;
  bool has_text(const std::string& name) const;
  bool has_matrix(const std::string& name) const;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Parameter blobs go under "param/<name>", Adam moments under "adam.m/<name>"
/// and "adam.v/<name>", the step counter under the "adam.step" text section.
void store_to_checkpoint(const ParameterStore& store, const Adam* adam, Checkpoint& ckpt);
void store_from_checkpoint(const Checkpoint& ckpt, ParameterStore& store, Adam* adam);

}  // namespace paravmf
