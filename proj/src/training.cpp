#include "paravmf/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <random>

#include <spdlog/spdlog.h>

namespace paravmf {

void TrainConfig::validate() const {
  if (max_steps == 0 && max_epochs == 0) throw ConfigError("set train.max_steps or train.max_epochs");
  if (patience < 1) throw ConfigError("train.patience must be >= 1");
  if (eval_every < 1) throw ConfigError("train.eval_every must be >= 1");
  if (token_budget < 1) throw ConfigError("train.token_budget must be >= 1");
  if (ae.fraction.has_value() == ae.count.has_value()) {
    throw ConfigError("exactly one of train.ae_fraction / train.ae_count must be set");
  }
  if (ae.fraction && !(*ae.fraction >= 0.0 && *ae.fraction <= 1.0)) throw ConfigError("ae_fraction must be in [0, 1]");
  if (noise.enabled && !(noise.p_drop >= 0.0 && noise.p_drop < 1.0)) throw ConfigError("noise.p_drop must be in [0, 1)");
  if (noise.enabled && noise.k_window < 1) throw ConfigError("noise.k_window must be >= 1");
}

void TrainReport::write_tsv(std::ostream& out) const {
  out << "step\tepoch\tloss_s2t\tloss_t2s\tloss_ae\tae_dev_loss\tseconds_per_step\n";
  out << std::setprecision(10);
  for (const auto& r : records) {
    out << r.step << '\t' << r.epoch << '\t' << r.loss[0] << '\t' << r.loss[1] << '\t' << r.loss[2] << '\t'
        << r.dev_loss << '\t' << r.seconds_per_step << '\n';
  }
}

namespace {

std::vector<std::vector<EncodedExample>> encode_batches(const std::vector<Batch>& batches, const Vocabulary& vocab) {
  std::vector<std::vector<EncodedExample>> out;
  out.reserve(batches.size());
  for (const auto& b : batches) {
    std::vector<EncodedExample> enc;
    enc.reserve(b.examples.size());
    for (const auto& ex : b.examples) enc.push_back(encode_example(ex, vocab));
    out.push_back(std::move(enc));
  }
  return out;
}

struct Snapshot {
  std::vector<Matrix> values;
  std::vector<Matrix> m, v;
  std::uint64_t adam_steps = 0;

  static Snapshot take(const ParameterStore& store, const Adam& adam) {
    Snapshot s;
    for (const auto& e : store.entries()) s.values.push_back(e.trainable ? e.value : Matrix());
    s.m = adam.first_moments();
    s.v = adam.second_moments();
    s.adam_steps = adam.steps();
    return s;
  }
  void restore(ParameterStore& store, Adam& adam) const {
    auto& entries = store.entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (entries[i].trainable) entries[i].value = values[i];
    }
    adam.first_moments() = m;
    adam.second_moments() = v;
    adam.set_steps(adam_steps);
  }
};

}  // namespace

double ae_dev_loss(Transformer& model, const Vocabulary& vocab, const std::vector<Sentence>& dev_l1,
                   std::size_t token_budget) {
  std::vector<TaskExample> stream;
  stream.reserve(dev_l1.size());
  for (const auto& s : dev_l1) stream.push_back(make_example(s, s, TaskKind::AE));
  const auto batches = encode_batches(make_batches(stream, token_budget).batches, vocab);
  double total = 0.0;
  std::size_t tokens = 0;
  for (const auto& b : batches) {
    const LossBreakdown l = model.evaluate(b);
    total += l.total;
    tokens += l.tokens;
  }
  return tokens == 0 ? 0.0 : total / static_cast<double>(tokens);
}

TrainReport train(Transformer& model, const Vocabulary& vocab, const TrainData& data, const TrainConfig& cfg,
                  const std::function<void(const TrainRecord&)>& on_record, Adam* optimizer) {
  cfg.validate();
  if (cfg.no_encoder_start_token == model.config().encoder_start_token) {
    throw ConfigError("train.no_encoder_start_token disagrees with the model configuration");
  }
  if (data.dev_l1.empty()) throw ConfigError("early stopping needs a non-empty L1 dev set");
  TrainReport report;
  ParameterStore& store = model.params();
  std::optional<Adam> own_adam;
  if (!optimizer) own_adam.emplace(store, cfg.adam);
  Adam& adam = optimizer ? *optimizer : *own_adam;
  const TaskStream stream(data.train, cfg.effective_ae(), cfg.noise, cfg.seed, cfg.mix);
  std::mt19937_64 order_rng(cfg.seed * 0x2545F4914F6CDD1DULL + 1);

  Snapshot best = Snapshot::take(store, adam);
  double best_dev = std::numeric_limits<double>::infinity();
  std::size_t bad_evals = 0;
  bool stop = false;

  double window_loss[3] = {0, 0, 0};
  std::size_t window_tokens[3] = {0, 0, 0};
  double window_seconds = 0.0;
  std::size_t window_steps = 0;

  auto evaluate_now = [&](std::size_t epoch) {
    TrainRecord rec;
    rec.step = report.steps;
    rec.epoch = epoch;
    for (int k = 0; k < 3; ++k) {
      rec.loss[k] = window_tokens[k] ? window_loss[k] / static_cast<double>(window_tokens[k]) : 0.0;
      window_loss[k] = 0.0;
      window_tokens[k] = 0;
    }
    rec.seconds_per_step = window_steps ? window_seconds / static_cast<double>(window_steps) : 0.0;
    window_seconds = 0.0;
    window_steps = 0;
    rec.dev_loss = ae_dev_loss(model, vocab, data.dev_l1, cfg.token_budget);
    report.records.push_back(rec);
    if (on_record) on_record(rec);
    if (rec.dev_loss < best_dev) {
      best_dev = rec.dev_loss;
      best = Snapshot::take(store, adam);
      report.selected_step = rec.step;
      report.selected_dev_loss = rec.dev_loss;
      bad_evals = 0;
    } else if (++bad_evals >= cfg.patience) {
      report.stop_reason = "early stopping";
      stop = true;
    }
  };

  std::size_t epoch = 0;
  bool last_step_evaluated = false;
  while (!stop) {
    if (cfg.max_epochs != 0 && epoch >= cfg.max_epochs) {
      report.stop_reason = "max_epochs";
      break;
    }
    BatchingResult batching = make_batches(stream.epoch(epoch), cfg.token_budget);
    report.skipped_examples += batching.skipped;
    auto batches = encode_batches(batching.batches, vocab);
    std::shuffle(batches.begin(), batches.end(), order_rng);
    for (const auto& batch : batches) {
      if (cfg.max_steps != 0 && report.steps >= cfg.max_steps) {
        report.stop_reason = "max_steps";
        stop = true;
        break;
      }
      const auto t0 = std::chrono::steady_clock::now();
      store.zero_grad();
      Graph g(/*record=*/true, cfg.seed ^ (0x9E3779B97F4A7C15ULL * (report.steps + 1)));
      LossBreakdown lb;
      Var loss = model.loss(g, batch, /*train=*/true, &lb);
      if (!std::isfinite(lb.total)) {
        const auto where = g.first_non_finite();
        spdlog::error("non-finite training loss at step {} ({}); keeping the best checkpoint", report.steps + 1,
                      where.value_or("loss"));
        report.diverged = true;
        report.stop_reason = "diverged: " + where.value_or("non-finite loss");
        stop = true;
        break;
      }
      g.backward(loss);
      adam.step(store);
      ++report.steps;
      last_step_evaluated = false;
      for (const auto& ex : batch) ++report.examples_by_kind[static_cast<std::size_t>(ex.kind)];
      for (int k = 0; k < 3; ++k) {
        window_loss[k] += lb.by_kind[k];
        window_tokens[k] += lb.tokens_by_kind[k];
      }
      window_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      ++window_steps;
      if (report.steps % cfg.eval_every == 0) {
        evaluate_now(epoch);
        last_step_evaluated = true;
        if (stop) break;
      }
    }
    ++epoch;
  }
  report.epochs = epoch;
  if (!report.diverged && !last_step_evaluated && report.steps > 0) evaluate_now(epoch);
  if (std::isfinite(best_dev)) best.restore(store, adam);
  return report;
}

GradCheckReport model_gradient_check(Transformer& model, const std::vector<EncodedExample>& batch,
                                     const GradCheckOptions& opts) {
  ParameterStore& store = model.params();
  auto loss_and_grad = [&] {
    store.zero_grad();
    Graph g(/*record=*/true, 0);
    Var loss = model.loss(g, batch, /*train=*/false);
    const double value = g.value(loss)(0, 0);
    g.backward(loss);
    return value;
  };
  auto loss_only = [&] { return model.evaluate(batch).mean; };
  return gradient_check(store, loss_and_grad, loss_only, opts);
}

HeadBenchResult benchmark_heads(const HeadBenchConfig& cfg) {
  HeadBenchResult result;
  const auto n_rows = static_cast<Eigen::Index>(cfg.vocab_size) + Vocabulary::kNumSpecials;
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix table(n_rows, cfg.model.embed_dim);
  for (Eigen::Index i = 0; i < table.size(); ++i) table.data()[i] = normal(rng);
  table.rowwise().normalize();

  std::uniform_int_distribution<TokenId> word(Vocabulary::kNumSpecials, static_cast<TokenId>(n_rows - 1));
  std::vector<EncodedExample> batch(cfg.batch_sentences);
  for (auto& ex : batch) {
    ex.source.push_back(Vocabulary::kStartL2);
    for (std::size_t i = 0; i < cfg.sentence_length; ++i) ex.source.push_back(word(rng));
    for (std::size_t i = 0; i < cfg.sentence_length; ++i) ex.target.push_back(word(rng));
    ex.target_lang = Lang::L2;
  }

  auto time_head = [&](HeadKind head, std::size_t* head_params) {
    ModelConfig mc = cfg.model;
    mc.head = head;
    mc.dropout = 0.0;
    Transformer model(mc, table, cfg.seed);
    *head_params = model.head_parameter_count();
    Adam adam(model.params(), AdamConfig{});
    std::vector<double> times;
    for (std::size_t s = 0; s < cfg.warmup_steps + cfg.steps; ++s) {
      const auto t0 = std::chrono::steady_clock::now();
      model.params().zero_grad();
      Graph g(true, cfg.seed);
      Var loss = model.loss(g, batch, true);
      g.backward(loss);
      adam.step(model.params());
      const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (s >= cfg.warmup_steps) times.push_back(dt);
    }
    std::sort(times.begin(), times.end());
    return times.empty() ? 0.0 : times[times.size() / 2];
  };
  result.vmf_seconds = time_head(HeadKind::VMF, &result.vmf_head_params);
  result.ce_seconds = time_head(HeadKind::CE, &result.ce_head_params);
  return result;
}

}  // namespace paravmf
