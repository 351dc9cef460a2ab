#include "tae/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

namespace tae {

std::string_view to_string(EmbeddingRouting r) { return r == EmbeddingRouting::frozen ? "frozen" : "decoder-side"; }

EmbeddingRouting embedding_routing_from_string(std::string_view s) {
  if (s == "decoder-side") return EmbeddingRouting::decoder_side;
  if (s == "frozen") return EmbeddingRouting::frozen;
  throw std::invalid_argument("unknown embedding routing '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
  if (!(encoder_lr > 0.0) || !(decoder_lr > 0.0)) throw std::invalid_argument("learning rates must be positive");
  if (!(polyak_momentum >= 0.0 && polyak_momentum < 1.0)) throw std::invalid_argument("polyak momentum must be in [0, 1)");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) throw std::invalid_argument("label smoothing must be in [0, 1)");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (mono_ratio < 0.0) throw std::invalid_argument("mono ratio must be >= 0");
  if (patience < 1 || max_epochs < 1) throw std::invalid_argument("patience and max epochs must be >= 1");
  if (synthetic_weight < 0.0) throw std::invalid_argument("synthetic weight must be >= 0");
}

std::vector<double> smoothed_target(int gold, double eps, int vocab) {
  if (vocab < 2) throw std::invalid_argument("smoothed_target: vocabulary needs at least two classes");
  if (gold < 0 || gold >= vocab) throw std::out_of_range("smoothed_target: gold id outside vocabulary");
  std::vector<double> q(static_cast<std::size_t>(vocab), eps / vocab);
  q[static_cast<std::size_t>(gold)] += 1.0 - eps;
  return q;
}

template <typename T>
void polyak_update(std::span<T> shadow, std::span<const T> current, double m) {
  if (shadow.size() != current.size()) throw std::invalid_argument("polyak_update: shape mismatch");
  const T a = static_cast<T>(m), b = static_cast<T>(1.0 - m);
  for (std::size_t i = 0; i < shadow.size(); ++i) shadow[i] = a * shadow[i] + b * current[i];
}

template void polyak_update<float>(std::span<float>, std::span<const float>, double);
template void polyak_update<double>(std::span<double>, std::span<const double>, double);

// --- Adam --------------------------------------------------------------------

Adam::Adam(const ParameterStore<float>& store, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : store) state_.push_back({std::vector<float>(p.size()), std::vector<float>(p.size()), 0});
}

void Adam::step(ParameterStore<float>& store, const std::function<double(const Parameter<float>&)>& lr) {
  if (store.size() != state_.size()) throw std::invalid_argument("optimizer built for a different store");
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& p = store[i];
    if (!p.touched) continue;
    auto& s = state_[i];
    ++s.t;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(s.t));
    const float rate = static_cast<float>(lr(p) / c1);
    const float b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
    const float inv_c2 = static_cast<float>(1.0 / c2), eps = static_cast<float>(eps_);
    for (std::size_t j = 0; j < p.size(); ++j) {
      const float g = p.grad[j];
      s.m[j] = b1 * s.m[j] + (1.0f - b1) * g;
      s.v[j] = b2 * s.v[j] + (1.0f - b2) * g * g;
      p.value[j] -= rate * s.m[j] / (std::sqrt(s.v[j] * inv_c2) + eps);
    }
  }
}

// --- Trainer -----------------------------------------------------------------

namespace {

void copy_store(const ParameterStore<float>& from, ParameterStore<float>& to) {
  for (const auto& p : from) to.add(p.name, p.partition, p.rows, p.cols).value = p.value;
}

enum Branch { kSup = 0, kMono = 1 };

}  // namespace

Trainer::Trainer(Seq2SeqModel<float>& model, TrainConfig cfg)
    : model_(model), cfg_(std::move(cfg)), adam_(model.params()) {
  cfg_.validate();
  copy_store(model.params(), shadow_);
}

double Trainer::accumulate(std::span<const EncodedPair> batch, int branch, double batch_weight) {
  ForwardMode mode;
  mode.train = true;
  if (branch == kMono) {
    mode.encoder_grad = !cfg_.freeze_encoder_on_mono;
    mode.embedding_grad = cfg_.embedding_routing == EmbeddingRouting::decoder_side;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& ex = batch[i];
    Rng drop(cfg_.seed, "dropout", static_cast<std::uint64_t>(step_),
             (static_cast<std::uint64_t>(branch) << 32) | i);
    mode.dropout_rng = &drop;
    const double w = batch_weight / static_cast<double>(batch.size()) * (ex.synthetic ? cfg_.synthetic_weight : 1.0);
    Tape<float> tape;
    const Var loss = model_.sequence_loss(tape, ex.src, ex.tgt, cfg_.label_smoothing, mode, w);
    total += tape.scalar(loss);
    tape.backward(loss);
  }
  return total;
}

void Trainer::apply() {
  auto& store = model_.params();
  adam_.step(store, [this](const Parameter<float>& p) {
    return p.partition == Partition::encoder ? cfg_.encoder_lr : cfg_.decoder_lr;
  });
  double m = cfg_.polyak_momentum;
  if (cfg_.polyak_warmup) m = std::min(m, (1.0 + static_cast<double>(step_)) / (10.0 + static_cast<double>(step_)));
  for (std::size_t i = 0; i < store.size(); ++i)
    if (store[i].touched) polyak_update<float>(shadow_[i].value, store[i].value, m);
  ++step_;
}

StepLoss Trainer::mixed_step(std::span<const EncodedPair> sup, std::span<const EncodedPair> mono) {
  if (sup.empty() && mono.empty()) throw std::invalid_argument("training step on an empty batch");
  model_.params().zero_grad();
  StepLoss l;
  if (!sup.empty()) l.sup = accumulate(sup, kSup, 1.0);
  if (!mono.empty()) l.mono = accumulate(mono, kMono, 1.0);
  apply();
  return l;
}

double Trainer::supervised_step(std::span<const EncodedPair> batch) {
  if (batch.empty()) throw std::invalid_argument("supervised step on an empty batch");
  return mixed_step(batch, {}).sup;
}

double Trainer::mono_step(std::span<const EncodedPair> batch) {
  if (batch.empty()) throw std::invalid_argument("monolingual step on an empty batch");
  return mixed_step({}, batch).mono;
}

double Trainer::tae_step(std::span<const TokenIds> batch) {
  std::vector<EncodedPair> pairs;
  pairs.reserve(batch.size());
  for (const auto& y : batch) pairs.push_back({y, y, false});
  return mono_step(pairs);
}

void Trainer::export_shadow(Seq2SeqModel<float>& dst) const { dst.params().copy_values_from(shadow_); }

// --- epoch loop ----------------------------------------------------------------

std::string to_json_line(const EpochRecord& r) {
  return nlohmann::json{{"epoch", r.epoch},         {"sup_loss", r.sup_loss}, {"mono_loss", r.mono_loss},
                        {"dev_metric", r.dev_metric}, {"is_best", r.is_best}, {"steps", r.steps}}
      .dump();
}

TrainingResult run_training(Seq2SeqModel<float>& model, const TrainConfig& cfg,
                            std::span<const EncodedPair> labeled, std::span<const EncodedPair> mono,
                            const DevMetric& dev, Seq2SeqModel<float>& best, std::ostream* log) {
  if (labeled.empty()) throw std::invalid_argument("run_training: no labeled examples");
  Trainer trainer(model, cfg);
  Seq2SeqModel<float> snapshot(model.config(), 0);
  const auto bsz = static_cast<std::size_t>(cfg.batch_size);
  const auto mono_per_step = mono.empty() ? std::size_t{0}
                                          : static_cast<std::size_t>(std::llround(cfg.mono_ratio * static_cast<double>(bsz)));
  std::vector<std::size_t> mono_order;
  std::size_t mono_cursor = 0, mono_pass = 0;
  TrainingResult res;
  int since_best = 0;
  std::vector<EncodedPair> sup_batch, mono_batch;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto order = Rng(cfg.seed, "data_order", static_cast<std::uint64_t>(epoch)).permutation(labeled.size());
    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t n_steps = 0;
    for (std::size_t start = 0; start < order.size(); start += bsz) {
      sup_batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + bsz); ++i) sup_batch.push_back(labeled[order[i]]);
      mono_batch.clear();
      for (std::size_t k = 0; k < mono_per_step; ++k) {
        if (mono_cursor == mono_order.size()) {
          mono_order = Rng(cfg.seed, "mono_order", mono_pass++).permutation(mono.size());
          mono_cursor = 0;
        }
        mono_batch.push_back(mono[mono_order[mono_cursor++]]);
      }
      const auto l = trainer.mixed_step(sup_batch, mono_batch);
      rec.sup_loss += l.sup;
      rec.mono_loss += l.mono;
      ++n_steps;
    }
    rec.sup_loss /= static_cast<double>(n_steps);
    rec.mono_loss /= static_cast<double>(n_steps);
    rec.steps = trainer.steps();
    trainer.export_shadow(snapshot);
    rec.dev_metric = dev(snapshot);
    rec.is_best = res.log.empty() || rec.dev_metric > res.best_dev;
    if (rec.is_best) {
      res.best_dev = rec.dev_metric;
      res.best_epoch = epoch;
      best.params().copy_values_from(snapshot.params());
      since_best = 0;
    } else {
      ++since_best;
    }
    res.log.push_back(rec);
    if (log) *log << to_json_line(rec) << '\n' << std::flush;
    if (since_best >= cfg.patience) break;
  }
  res.steps = trainer.steps();
  return res;
}

TrainedModel train_seq2seq(const ModelConfig& model_cfg, const TrainConfig& cfg,
                           std::span<const EncodedPair> labeled, std::span<const EncodedPair> mono,
                           const DevMetric& dev, std::ostream* log) {
  Seq2SeqModel<float> model(model_cfg, derive_seed(cfg.seed, "init"));
  TrainedModel out;
  out.model = std::make_unique<Seq2SeqModel<float>>(model_cfg, 0);
  out.result = run_training(model, cfg, labeled, mono, dev, *out.model, log);
  return out;
}

}  // namespace tae
