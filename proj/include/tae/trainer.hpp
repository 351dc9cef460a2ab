#pragma once

// Supervised and target-autoencoding updates with partition-aware gradient
// routing, Adam, Polyak averaging and the epoch loop with early stopping.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tae/model.hpp"
#include "tae/parameters.hpp"

namespace tae {

enum class EmbeddingRouting { decoder_side, frozen };

std::string_view to_string(EmbeddingRouting r);
EmbeddingRouting embedding_routing_from_string(std::string_view s);

struct TrainConfig {
  double encoder_lr = 1e-5;
  double decoder_lr = 7.5e-5;  // also used for the shared embeddings
  double label_smoothing = 0.1;
  double polyak_momentum = 0.999;
  // Caps the momentum at (1 + t) / (10 + t) so the shadow tracks early steps.
  bool polyak_warmup = true;
  int batch_size = 16;
  // Monolingual examples per step = round(mono_ratio * batch_size).
  double mono_ratio = 1.0;
  int patience = 10;
  int max_epochs = 50;
  std::uint64_t seed = 1;
  bool freeze_encoder_on_mono = true;
  EmbeddingRouting embedding_routing = EmbeddingRouting::decoder_side;
  double synthetic_weight = 1.0;  // loss weight of back-translated pairs

  void validate() const;
};

/// Token-level training pair. For target autoencoding src == tgt.
struct EncodedPair {
  TokenIds src;
  TokenIds tgt;
  bool synthetic = false;
};

/// q = (1 - eps) * onehot(gold) + eps / V.
std::vector<double> smoothed_target(int gold, double eps, int vocab);

/// shadow = m * shadow + (1 - m) * current, elementwise.
template <typename T>
void polyak_update(std::span<T> shadow, std::span<const T> current, double m);

class Adam {
 public:
  explicit Adam(const ParameterStore<float>& store, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  /// One update of every parameter whose gradient was touched since the
  /// last zero_grad(); others (and their moments) are left untouched.
  void step(ParameterStore<float>& store, const std::function<double(const Parameter<float>&)>& lr);

  struct Moments {
    std::vector<float> m, v;
    std::int64_t t = 0;
  };
  const Moments& state(std::size_t i) const { return state_.at(i); }

 private:
  double beta1_, beta2_, eps_;
  std::vector<Moments> state_;
};

struct StepLoss {
  double sup = 0.0;
  double mono = 0.0;
  double total() const { return sup + mono; }
};

/// Training state of one seq2seq model: optimizer, Polyak shadow and the
/// random substreams that drive dropout.
class Trainer {
 public:
  Trainer(Seq2SeqModel<float>& model, TrainConfig cfg);

  const TrainConfig& config() const { return cfg_; }
  std::int64_t steps() const { return step_; }
  const ParameterStore<float>& shadow() const { return shadow_; }
  const Adam& optimizer() const { return adam_; }

  /// L_sup on a batch of pairs; updates every partition.
  double supervised_step(std::span<const EncodedPair> batch);
  /// Autoencoding on monolingual programs (each used as source and target).
  double tae_step(std::span<const TokenIds> batch);
  /// Monolingual-branch update on arbitrary pairs (dummy sources).
  double mono_step(std::span<const EncodedPair> batch);
  /// One update on L_sup + L_mono; either batch may be empty, not both.
  StepLoss mixed_step(std::span<const EncodedPair> sup, std::span<const EncodedPair> mono);

  /// Copies the Polyak shadow into `dst` (same architecture).
  void export_shadow(Seq2SeqModel<float>& dst) const;

 private:
  double accumulate(std::span<const EncodedPair> batch, int branch, double batch_weight);
  void apply();

  Seq2SeqModel<float>& model_;
  TrainConfig cfg_;
  Adam adam_;
  ParameterStore<float> shadow_;
  std::int64_t step_ = 0;
};

struct EpochRecord {
  int epoch = 0;
  double sup_loss = 0.0;
  double mono_loss = 0.0;
  double dev_metric = 0.0;
  bool is_best = false;
  std::int64_t steps = 0;
};

std::string to_json_line(const EpochRecord& r);

struct TrainingResult {
  std::vector<EpochRecord> log;
  int best_epoch = 0;
  double best_dev = 0.0;
  std::int64_t steps = 0;
};

/// Dev metric evaluated on a model holding the Polyak parameters; higher is better.
using DevMetric = std::function<double(const Seq2SeqModel<float>&)>;

/// Epoch loop over `labeled` (shuffled per epoch) with monolingual batches
/// drawn cyclically from `mono`. After each epoch the Polyak parameters are
/// scored on dev; the best ones are copied into `best` and training stops
/// after `patience` epochs without improvement. `log` (optional) receives
/// one JSON line per epoch.
TrainingResult run_training(Seq2SeqModel<float>& model, const TrainConfig& cfg,
                            std::span<const EncodedPair> labeled, std::span<const EncodedPair> mono,
                            const DevMetric& dev, Seq2SeqModel<float>& best, std::ostream* log = nullptr);

struct TrainedModel {
  std::unique_ptr<Seq2SeqModel<float>> model;  // best-dev Polyak parameters
  TrainingResult result;
};

/// Fresh model initialized from the "init" substream of cfg.seed, trained
/// with run_training.
TrainedModel train_seq2seq(const ModelConfig& model_cfg, const TrainConfig& cfg,
                           std::span<const EncodedPair> labeled, std::span<const EncodedPair> mono,
                           const DevMetric& dev, std::ostream* log = nullptr);

}  // namespace tae
