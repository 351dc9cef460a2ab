#pragma once

// Beam search with length normalization, greedy decoding, language-model
// training and step-wise shallow fusion.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tae/language_model.hpp"
#include "tae/model.hpp"
#include "tae/tokenizer.hpp"

namespace tae {

struct Hypothesis {
  TokenIds tokens;  // generated ids after BOS; ends with EOS when finished
  double raw = 0.0;
  double normalized = 0.0;
  bool finished = false;
};

/// lp(|Y|) = ((5 + |Y|) / 6)^alpha; |Y| counts EOS.
double length_penalty(int length, double alpha);

/// Per-step next-token log-probabilities for a set of prefix states.
class StepScorer {
 public:
  virtual ~StepScorer() = default;
  virtual int vocab_size() const = 0;
  /// Resets to the single BOS state and returns its distribution.
  virtual std::vector<double> start() = 0;
  /// New state i extends state parents[i] with tokens[i]; the previous
  /// states are discarded. Returns one distribution per new state.
  virtual std::vector<std::vector<double>> advance(std::span<const int> parents, std::span<const int> tokens) = 0;
};

/// Copy-attention translation model over one fixed source.
class Seq2SeqScorer final : public StepScorer {
 public:
  Seq2SeqScorer(const Seq2SeqModel<float>& model, std::span<const int> src);
  int vocab_size() const override { return model_.config().vocab_size; }
  std::vector<double> start() override;
  std::vector<std::vector<double>> advance(std::span<const int> parents, std::span<const int> tokens) override;

 private:
  std::vector<std::vector<double>> run(std::span<const int> tokens);

  const Seq2SeqModel<float>& model_;
  EncoderState<float> state_;
  CrossMemory<float> memory_;
  std::vector<DecoderCache<float>> caches_;
};

struct FusionConfig {
  double lambda = 0.0;
  double tau = 1.0;
  void validate() const;
};

/// score(y) = tm[y] + lambda * log_softmax(lm_logits / tau)[y].
std::vector<double> fused_logprob(std::span<const double> tm_logprob, std::span<const float> lm_logits,
                                  const FusionConfig& fusion);

/// Adds the fused language-model term to another scorer at every step. The
/// LM term is evaluated even at lambda == 0, which then adds exactly zero.
class FusedScorer final : public StepScorer {
 public:
  FusedScorer(StepScorer& tm, const LanguageModel<float>& lm, FusionConfig fusion);
  int vocab_size() const override { return tm_.vocab_size(); }
  std::vector<double> start() override;
  std::vector<std::vector<double>> advance(std::span<const int> parents, std::span<const int> tokens) override;

 private:
  StepScorer& tm_;
  const LanguageModel<float>& lm_;
  FusionConfig fusion_;
  std::vector<DecoderCache<float>> caches_;
};

struct DecodeOptions {
  int beam_size = 10;
  double alpha = 0.6;
  int max_len = 64;  // generated tokens including EOS
};

/// Keeps the beam_size best expansions by raw log-probability each step
/// (ties: lower token id, then lower parent index). Expansions ending in EOS
/// leave the beam. Finished hypotheses are ranked by normalized score (ties:
/// shorter, then lexicographically smaller ids). If nothing finished within
/// max_len the best unfinished hypothesis is returned with finished = false.
Hypothesis beam_search(StepScorer& scorer, const DecodeOptions& opts);

/// Argmax (lowest id on ties) until EOS or max_len.
TokenIds greedy_decode(StepScorer& scorer, int max_len);

struct LmTrainConfig {
  double lr = 1e-3;
  int epochs = 10;
  int batch_size = 16;
  double label_smoothing = 0.0;
  std::uint64_t seed = 1;
};

struct LmTrainingResult {
  std::unique_ptr<LanguageModel<float>> lm;
  std::vector<double> epoch_loss;
};

LmTrainingResult train_lm(std::span<const TokenIds> corpus, const ModelConfig& cfg, const LmTrainConfig& train);

struct DecodedRecord {
  std::size_t id = 0;
  std::string prediction;
  double raw = 0.0;
  double normalized = 0.0;
  bool finished = true;
};

/// Decodes every source (concurrently; results in input order). With
/// beam_size == 1 this is greedy search.
std::vector<DecodedRecord> decode_corpus(const Seq2SeqModel<float>& model, const SubwordModel& tokenizer,
                                         std::span<const TokenIds> sources, const DecodeOptions& opts,
                                         const LanguageModel<float>* lm = nullptr, FusionConfig fusion = {});

void write_decode_file(const std::filesystem::path& path, std::span<const DecodedRecord> records);
std::vector<DecodedRecord> read_decode_file(const std::filesystem::path& path);

struct SweepRow {
  double lambda = 0.0;
  double tau = 1.0;
  double metric = 0.0;
};

using CorpusMetric = std::function<double(const std::vector<std::string>& predictions)>;

/// Scores fused decoding of `sources` for every (lambda, tau) pair, in grid order.
std::vector<SweepRow> fusion_sweep(const Seq2SeqModel<float>& model, const LanguageModel<float>& lm,
                                   const SubwordModel& tokenizer, std::span<const TokenIds> sources,
                                   std::span<const double> lambdas, std::span<const double> taus,
                                   const DecodeOptions& opts, const CorpusMetric& metric);

void write_sweep_table(const std::filesystem::path& path, std::span<const SweepRow> rows);

}  // namespace tae
