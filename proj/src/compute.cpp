#include "paravmf/compute.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>

namespace paravmf {

ParameterStore::Entry& ParameterStore::add(std::string name, Matrix init, bool trainable) {
  if (index_.count(name) != 0) throw ConfigError("duplicate parameter name: " + name);
  Entry entry;
  entry.name = name;
  entry.trainable = trainable;
  if (trainable) entry.grad = Matrix::Zero(init.rows(), init.cols());
  entry.value = std::move(init);
  index_.emplace(std::move(name), entries_.size());
  entries_.push_back(std::move(entry));
  return entries_.back();
}

ParameterStore::Entry& ParameterStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return entries_[it->second];
}

const ParameterStore::Entry& ParameterStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return entries_[it->second];
}

void ParameterStore::zero_grad() {
  for (auto& e : entries_) {
    if (e.trainable) e.grad.setZero();
  }
}

std::size_t ParameterStore::num_values(bool trainable_only) const {
  std::size_t n = 0;
  for (const auto& e : entries_) {
    if (!trainable_only || e.trainable) n += static_cast<std::size_t>(e.value.size());
  }
  return n;
}

double AdamConfig::rate(std::uint64_t step) const {
  if (schedule == LrSchedule::Constant || warmup == 0) return lr;
  const double s = static_cast<double>(std::max<std::uint64_t>(step, 1));
  const double w = static_cast<double>(warmup);
  return lr * std::min(s / w, std::sqrt(w / s));
}

Adam::Adam(const ParameterStore& store, AdamConfig cfg) : cfg_(cfg) {
  for (const auto& e : store.entries()) {
    if (e.trainable) {
      m_.push_back(Matrix::Zero(e.value.rows(), e.value.cols()));
      v_.push_back(Matrix::Zero(e.value.rows(), e.value.cols()));
    } else {
      m_.emplace_back();
      v_.emplace_back();
    }
  }
}

void Adam::step(ParameterStore& store) {
  auto& entries = store.entries();
  if (entries.size() != m_.size()) throw ConfigError("optimizer state does not match parameter store");
  ++step_;
  const double t = static_cast<double>(step_);
  const double bias1 = 1.0 - std::pow(cfg_.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg_.beta2, t);
  const double lr = cfg_.rate(step_);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& e = entries[i];
    if (!e.trainable) continue;
    auto& m = m_[i];
    auto& v = v_[i];
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * e.grad;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * e.grad.cwiseAbs2();
    e.value.array() -= lr * (m.array() / bias1) / ((v.array() / bias2).sqrt() + cfg_.eps);
  }
}

double GradCheckReport::max_rel_error() const {
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.max_rel_error);
  return worst;
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport gradient_check(ParameterStore& store, const std::function<double()>& loss_and_grad,
                               const std::function<double()>& loss, const GradCheckOptions& opts) {
  GradCheckReport report;
  report.epsilon = opts.epsilon;
  loss_and_grad();
  std::mt19937_64 rng(opts.seed);
  const double h = opts.epsilon;
  for (auto& e : store.entries()) {
    if (!e.trainable) continue;
    const auto size = static_cast<std::size_t>(e.value.size());
    std::vector<std::size_t> coords(size);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (size > opts.coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opts.coords_per_param);
    }
    GradCheckEntry entry;
    entry.name = e.name;
    entry.coordinates = coords.size();
    double* data = e.value.data();
    const Matrix analytic = e.grad;
    for (std::size_t c : coords) {
      const double saved = data[c];
      auto at = [&](double offset) {
        data[c] = saved + offset;
        return loss();
      };
      // Grouped as differences so an unused coordinate gives exactly zero.
      const double numeric = (8 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12 * h);
      data[c] = saved;
      entry.max_rel_error = std::max(entry.max_rel_error, relative_error(analytic.data()[c], numeric));
    }
    report.entries.push_back(std::move(entry));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Checkpoint container

namespace {

constexpr char kMagic[] = "PARAVMF-CKPT\n";
constexpr std::uint32_t kVersion = 1;

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char buf[8];
  if (!in.read(reinterpret_cast<char*>(buf), 8)) throw FormatError("truncated checkpoint");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  put_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  const auto n = get_u64(in);
  if (n > (std::uint64_t{1} << 40)) throw FormatError("corrupt checkpoint string length");
  std::string s(n, '\0');
  if (!in.read(s.data(), static_cast<std::streamsize>(n))) throw FormatError("truncated checkpoint");
  return s;
}

}  // namespace

const std::string& Checkpoint::text(const std::string& name) const {
  for (const auto& [k, v] : texts) {
    if (k == name) return v;
  }
  throw FormatError("checkpoint has no text section: " + name);
}

const Matrix& Checkpoint::matrix(const std::string& name) const {
  for (const auto& [k, v] : matrices) {
    if (k == name) return v;
  }
  throw FormatError("checkpoint has no matrix: " + name);
}

bool Checkpoint::has_text(const std::string& name) const {
  return std::any_of(texts.begin(), texts.end(), [&](const auto& kv) { return kv.first == name; });
}

bool Checkpoint::has_matrix(const std::string& name) const {
  return std::any_of(matrices.begin(), matrices.end(), [&](const auto& kv) { return kv.first == name; });
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out.write(kMagic, sizeof(kMagic) - 1);
  put_u64(out, kVersion);
  put_u64(out, ckpt.texts.size());
  for (const auto& [name, body] : ckpt.texts) {
    put_string(out, name);
    put_string(out, body);
  }
  put_u64(out, ckpt.matrices.size());
  for (const auto& [name, m] : ckpt.matrices) {
    put_string(out, name);
    put_u64(out, static_cast<std::uint64_t>(m.rows()));
    put_u64(out, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) put_u64(out, std::bit_cast<std::uint64_t>(m.data()[i]));
  }
  if (!out) throw Error("failed to write checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[sizeof(kMagic) - 1];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw FormatError("not a checkpoint file");
  }
  if (get_u64(in) != kVersion) throw FormatError("unsupported checkpoint version");
  Checkpoint ckpt;
  const auto ntexts = get_u64(in);
  for (std::uint64_t i = 0; i < ntexts; ++i) {
    auto name = get_string(in);
    auto body = get_string(in);
    ckpt.texts.emplace_back(std::move(name), std::move(body));
  }
  const auto nmats = get_u64(in);
  for (std::uint64_t i = 0; i < nmats; ++i) {
    auto name = get_string(in);
    const auto rows = get_u64(in);
    const auto cols = get_u64(in);
    if (rows * cols > (std::uint64_t{1} << 36)) throw FormatError("corrupt checkpoint matrix shape");
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = std::bit_cast<double>(get_u64(in));
    ckpt.matrices.emplace_back(std::move(name), std::move(m));
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path.string());
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path.string());
  return read_checkpoint(in);
}

void store_to_checkpoint(const ParameterStore& store, const Adam* adam, Checkpoint& ckpt) {
  const auto& entries = store.entries();
  for (const auto& e : entries) ckpt.matrices.emplace_back("param/" + e.name, e.value);
  if (adam == nullptr) return;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!entries[i].trainable) continue;
    ckpt.matrices.emplace_back("adam.m/" + entries[i].name, adam->first_moments()[i]);
    ckpt.matrices.emplace_back("adam.v/" + entries[i].name, adam->second_moments()[i]);
  }
  ckpt.texts.emplace_back("adam.step", std::to_string(adam->steps()));
}

void store_from_checkpoint(const Checkpoint& ckpt, ParameterStore& store, Adam* adam) {
  auto& entries = store.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& e = entries[i];
    const Matrix& m = ckpt.matrix("param/" + e.name);
    if (m.rows() != e.value.rows() || m.cols() != e.value.cols()) {
      throw FormatError("checkpoint shape mismatch for " + e.name);
    }
    e.value = m;
    if (adam != nullptr && e.trainable && ckpt.has_matrix("adam.m/" + e.name)) {
      adam->first_moments()[i] = ckpt.matrix("adam.m/" + e.name);
      adam->second_moments()[i] = ckpt.matrix("adam.v/" + e.name);
    }
  }
  if (adam != nullptr && ckpt.has_text("adam.step")) adam->set_steps(std::stoull(ckpt.text("adam.step")));
}

}  // namespace paravmf
