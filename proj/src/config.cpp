#include "paravmf/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>

#include <fmt/format.h>

namespace paravmf {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError(fmt::format("{}: '{}' is not a valid number", key, text));
  }
  return value;
}

double parse_double(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size() || !std::isfinite(v)) {
    throw ConfigError(fmt::format("{}: '{}' is not a finite number", key, text));
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError(fmt::format("{}: '{}' is not a boolean (true/false)", key, text));
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

std::string schedule_name(LrSchedule s) { return s == LrSchedule::Constant ? "constant" : "inverse_sqrt"; }

LrSchedule parse_schedule(const std::string& text) {
  if (text == "constant") return LrSchedule::Constant;
  if (text == "inverse_sqrt") return LrSchedule::InverseSqrt;
  throw ConfigError("adam.schedule: expected constant or inverse_sqrt, got '" + text + "'");
}

void apply_profile_defaults(ExperimentConfig& cfg, const std::string& profile) {
  cfg.model = ModelConfig::for_profile(profile);
  TrainConfig& t = cfg.train;
  if (profile == "toy") {
    t.ae = AeAmount::of_fraction(0.25);
    t.max_epochs = 250;
    t.eval_every = 250;
    t.patience = 5;
    t.token_budget = 64;
    t.adam.lr = 1e-3;
    t.adam.schedule = LrSchedule::Constant;
  } else {
    // No AE amount and no training length: both must come from the config.
    t.ae = AeAmount{};
    t.max_epochs = 0;
    t.max_steps = 0;
    t.eval_every = 500;
    t.patience = 5;
    t.token_budget = 4096;
    t.adam.lr = 2e-4;
    t.adam.schedule = LrSchedule::InverseSqrt;
    t.adam.warmup = 4000;
  }
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::istream& in, const std::string& source) {
  KeyValueConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("{}:{}: expected key = value", source, line_no));
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    if (key.empty()) throw ConfigError(fmt::format("{}:{}: empty key", source, line_no));
    if (cfg.values_.count(key)) throw ConfigError(fmt::format("{}:{}: duplicate key '{}'", source, line_no, key));
    cfg.values_[key] = value;
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  KeyValueConfig cfg = parse(in, path.string());
  cfg.base_dir = path.parent_path();
  return cfg;
}

std::optional<std::string> KeyValueConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

const std::vector<std::string>& experiment_keys() {
  static const std::vector<std::string> keys = {
      "profile", "head", "layers", "heads", "width", "ff_width", "embed_dim", "dropout", "vmf.lambda1",
      "ae_fraction", "ae_count", "noise.enabled", "noise.p_drop", "noise.k_window", "mix.s2t", "mix.t2s",
      "max_steps", "max_epochs", "eval_every", "patience", "token_budget", "seed", "no_encoder_start_token",
      "no_autoencoding", "adam.lr", "adam.beta1", "adam.beta2", "adam.eps", "adam.schedule", "adam.warmup",
      "data.train_l1", "data.train_l2", "data.dev_l1", "data.l1_vectors", "data.l2_vectors", "data.vocab",
      "data.max_vocab"};
  return keys;
}

ExperimentConfig resolve_experiment(const KeyValueConfig& kv) {
  const auto& known = experiment_keys();
  for (const auto& [key, value] : kv.values()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError("unknown config key: " + key);
  }
  ExperimentConfig cfg;
  const std::string profile = kv.get("profile").value_or("toy");
  if (profile != "toy" && profile != "paper") throw ConfigError("profile must be toy or paper, got '" + profile + "'");
  apply_profile_defaults(cfg, profile);

  auto with = [&](const std::string& key, auto&& apply) {
    if (const auto v = kv.get(key)) apply(*v);
  };
  auto as_int = [](const std::string& key, const std::string& v) { return parse_number<int>(key, v); };
  auto as_size = [](const std::string& key, const std::string& v) { return parse_number<std::size_t>(key, v); };
  auto path = [&](const std::string& v) {
    std::filesystem::path p(v);
    if (p.is_relative() && !kv.base_dir.empty()) p = kv.base_dir / p;
    return std::filesystem::absolute(p).lexically_normal();
  };

  ModelConfig& m = cfg.model;
  with("head", [&](const std::string& v) {
    try {
      m.head = parse_head(v);
    } catch (const Error& e) {
      throw ConfigError(std::string("head: ") + e.what());
    }
  });
  with("layers", [&](const std::string& v) { m.layers = as_int("layers", v); });
  with("heads", [&](const std::string& v) { m.heads = as_int("heads", v); });
  with("width", [&](const std::string& v) { m.width = as_int("width", v); });
  with("ff_width", [&](const std::string& v) { m.ff_width = as_int("ff_width", v); });
  with("embed_dim", [&](const std::string& v) {
    m.embed_dim = as_int("embed_dim", v);
    cfg.embed_dim_set = true;
  });
  with("dropout", [&](const std::string& v) { m.dropout = parse_double("dropout", v); });
  with("vmf.lambda1", [&](const std::string& v) { cfg.vmf.lambda1 = parse_double("vmf.lambda1", v); });

  TrainConfig& t = cfg.train;
  const auto frac = kv.get("ae_fraction");
  const auto count = kv.get("ae_count");
  if (frac && count) throw ConfigError("ae_fraction and ae_count are mutually exclusive");
  if (frac) t.ae = AeAmount::of_fraction(parse_double("ae_fraction", *frac));
  if (count) t.ae = AeAmount::of_count(as_size("ae_count", *count));
  with("noise.enabled", [&](const std::string& v) { t.noise.enabled = parse_bool("noise.enabled", v); });
  with("noise.p_drop", [&](const std::string& v) { t.noise.p_drop = parse_double("noise.p_drop", v); });
  with("noise.k_window", [&](const std::string& v) { t.noise.k_window = as_size("noise.k_window", v); });
  with("mix.s2t", [&](const std::string& v) { t.mix.s2t = parse_bool("mix.s2t", v); });
  with("mix.t2s", [&](const std::string& v) { t.mix.t2s = parse_bool("mix.t2s", v); });
  with("max_steps", [&](const std::string& v) { t.max_steps = as_size("max_steps", v); });
  with("max_epochs", [&](const std::string& v) { t.max_epochs = as_size("max_epochs", v); });
  with("eval_every", [&](const std::string& v) { t.eval_every = as_size("eval_every", v); });
  with("patience", [&](const std::string& v) { t.patience = as_size("patience", v); });
  with("token_budget", [&](const std::string& v) { t.token_budget = as_size("token_budget", v); });
  with("seed", [&](const std::string& v) { t.seed = parse_number<std::uint64_t>("seed", v); });
  with("no_encoder_start_token",
       [&](const std::string& v) { t.no_encoder_start_token = parse_bool("no_encoder_start_token", v); });
  with("no_autoencoding", [&](const std::string& v) { t.no_autoencoding = parse_bool("no_autoencoding", v); });
  with("adam.lr", [&](const std::string& v) { t.adam.lr = parse_double("adam.lr", v); });
  with("adam.beta1", [&](const std::string& v) { t.adam.beta1 = parse_double("adam.beta1", v); });
  with("adam.beta2", [&](const std::string& v) { t.adam.beta2 = parse_double("adam.beta2", v); });
  with("adam.eps", [&](const std::string& v) { t.adam.eps = parse_double("adam.eps", v); });
  with("adam.schedule", [&](const std::string& v) { t.adam.schedule = parse_schedule(v); });
  with("adam.warmup", [&](const std::string& v) { t.adam.warmup = as_size("adam.warmup", v); });
  m.encoder_start_token = !t.no_encoder_start_token;

  DataPaths& d = cfg.data;
  with("data.train_l1", [&](const std::string& v) { d.train_l1 = path(v); });
  with("data.train_l2", [&](const std::string& v) { d.train_l2 = path(v); });
  with("data.dev_l1", [&](const std::string& v) { d.dev_l1 = path(v); });
  with("data.l1_vectors", [&](const std::string& v) { d.l1_vectors = path(v); });
  with("data.l2_vectors", [&](const std::string& v) { d.l2_vectors = path(v); });
  with("data.vocab", [&](const std::string& v) { d.vocab = path(v); });
  with("data.max_vocab", [&](const std::string& v) { d.max_vocab = as_size("data.max_vocab", v); });

  if (!t.ae.fraction && !t.ae.count && !t.no_autoencoding) {
    throw ConfigError("profile " + profile + " needs ae_fraction or ae_count");
  }
  if (!t.ae.fraction && !t.ae.count) t.ae = AeAmount::of_count(0);
  try {
    m.validate();
    t.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

std::string resolved_text(const ExperimentConfig& cfg) {
  const ModelConfig& m = cfg.model;
  const TrainConfig& t = cfg.train;
  const DataPaths& d = cfg.data;
  std::map<std::string, std::string> v;
  v["profile"] = m.profile;
  v["head"] = std::string(head_name(m.head));
  v["layers"] = std::to_string(m.layers);
  v["heads"] = std::to_string(m.heads);
  v["width"] = std::to_string(m.width);
  v["ff_width"] = std::to_string(m.ff_width);
  v["embed_dim"] = std::to_string(m.embed_dim);
  v["dropout"] = fmt::format("{}", m.dropout);
  v["vmf.lambda1"] = fmt::format("{}", cfg.vmf.lambda1);
  if (t.ae.fraction) v["ae_fraction"] = fmt::format("{}", *t.ae.fraction);
  if (t.ae.count) v["ae_count"] = std::to_string(*t.ae.count);
  v["noise.enabled"] = bool_text(t.noise.enabled);
  v["noise.p_drop"] = fmt::format("{}", t.noise.p_drop);
  v["noise.k_window"] = std::to_string(t.noise.k_window);
  v["mix.s2t"] = bool_text(t.mix.s2t);
  v["mix.t2s"] = bool_text(t.mix.t2s);
  v["max_steps"] = std::to_string(t.max_steps);
  v["max_epochs"] = std::to_string(t.max_epochs);
  v["eval_every"] = std::to_string(t.eval_every);
  v["patience"] = std::to_string(t.patience);
  v["token_budget"] = std::to_string(t.token_budget);
  v["seed"] = std::to_string(t.seed);
  v["no_encoder_start_token"] = bool_text(t.no_encoder_start_token);
  v["no_autoencoding"] = bool_text(t.no_autoencoding);
  v["adam.lr"] = fmt::format("{}", t.adam.lr);
  v["adam.beta1"] = fmt::format("{}", t.adam.beta1);
  v["adam.beta2"] = fmt::format("{}", t.adam.beta2);
  v["adam.eps"] = fmt::format("{}", t.adam.eps);
  v["adam.schedule"] = schedule_name(t.adam.schedule);
  v["adam.warmup"] = std::to_string(t.adam.warmup);
  auto put_path = [&](const std::string& key, const std::filesystem::path& p) {
    if (!p.empty()) v[key] = p.string();
  };
  put_path("data.train_l1", d.train_l1);
  put_path("data.train_l2", d.train_l2);
  put_path("data.dev_l1", d.dev_l1);
  put_path("data.l1_vectors", d.l1_vectors);
  put_path("data.l2_vectors", d.l2_vectors);
  put_path("data.vocab", d.vocab);
  v["data.max_vocab"] = std::to_string(d.max_vocab);

  std::string out;
  for (const auto& key : experiment_keys()) {
    const auto it = v.find(key);
    if (it != v.end()) out += key + " = " + it->second + "\n";
  }
  return out;
}

}  // namespace paravmf
