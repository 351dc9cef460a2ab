#pragma once

// Transformer encoder-decoder with token and positional embeddings shared
// between both sides, and a pointer-generator output layer: the final
// decoder state gates between a vocabulary softmax and a copy distribution
// given by the head-averaged cross-attention of the last decoder layer.

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "tae/autodiff.hpp"
#include "tae/parameters.hpp"
#include "tae/rng.hpp"
#include "tae/tokenizer.hpp"

namespace tae {

struct ModelConfig {
  int vocab_size = 1000;
  int d_model = 128;
  int n_heads = 4;
  int encoder_layers = 2;
  int decoder_layers = 4;
  int ff_dim = 256;
  double dropout = 0.1;
  int max_positions = 128;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// How a forward pass is recorded.
struct ForwardMode {
  bool train = false;          // dropout active
  bool encoder_grad = true;    // encoder stack (and its embedding lookups) tracked
  bool embedding_grad = true;  // decoder-side embedding lookups tracked
  Rng* dropout_rng = nullptr;  // required when train && dropout > 0
};

template <typename T>
struct LayerNormParams {
  Parameter<T>* gamma = nullptr;
  Parameter<T>* beta = nullptr;
};

template <typename T>
struct AttentionParams {
  Parameter<T>*wq = nullptr, *bq = nullptr, *wk = nullptr, *bk = nullptr;
  Parameter<T>*wv = nullptr, *bv = nullptr, *wo = nullptr, *bo = nullptr;
};

template <typename T>
struct FeedForwardParams {
  Parameter<T>*w1 = nullptr, *b1 = nullptr, *w2 = nullptr, *b2 = nullptr;
};

template <typename T>
struct EncoderLayerParams {
  LayerNormParams<T> ln_self, ln_ff;
  AttentionParams<T> self;
  FeedForwardParams<T> ff;
};

template <typename T>
struct DecoderLayerParams {
  LayerNormParams<T> ln_self, ln_cross, ln_ff;
  AttentionParams<T> self, cross;  // cross unused without a memory
  FeedForwardParams<T> ff;
};

/// Shared token / position tables.
template <typename T>
struct Embeddings {
  Parameter<T>* tokens = nullptr;
  Parameter<T>* positions = nullptr;

  Var lookup(Tape<T>& tape, std::span<const int> ids, bool track, const ModelConfig& cfg) const;
};

/// Source-side seam: anything that maps token ids to per-position vectors of
/// width d_model can stand in for the transformer encoder.
template <typename T>
class SourceEncoder {
 public:
  virtual ~SourceEncoder() = default;
  virtual Var encode(Tape<T>& tape, std::span<const int> src, const ForwardMode& mode) const = 0;
};

template <typename T>
class TransformerEncoder final : public SourceEncoder<T> {
 public:
  TransformerEncoder(ParameterStore<T>& store, const ModelConfig& cfg, const Embeddings<T>& emb);
  Var encode(Tape<T>& tape, std::span<const int> src, const ForwardMode& mode) const override;

 private:
  const ModelConfig& cfg_;
  const Embeddings<T>& emb_;
  std::vector<EncoderLayerParams<T>> layers_;
  LayerNormParams<T> final_ln_;
};

/// Per-hypothesis state of incremental decoding.
template <typename T>
struct DecoderCache {
  int length = 0;  // positions consumed
  std::vector<std::vector<T>> keys, values;  // per layer, length * d_model
};

/// Cross-attention keys / values of one encoded source, per decoder layer.
template <typename T>
struct CrossMemory {
  int length = 0;
  std::vector<char> valid;
  std::vector<std::vector<T>> keys, values;
};

template <typename T>
struct StepRows {
  int rows = 0;
  std::vector<T> hidden;        // rows x d_model, after the final layer norm
  std::vector<T> cross_weights; // rows x memory length (empty without memory)
};

/// Stack of pre-norm decoder layers. Built with `cross == false` it is a
/// decoder-only language model body.
template <typename T>
class DecoderStack {
 public:
  DecoderStack(ParameterStore<T>& store, const ModelConfig& cfg, int layers, bool cross,
               std::string_view prefix);

  /// Taped forward over a whole prefix. `memory` may be invalid when the
  /// stack has no cross-attention. Returns the normalized hidden rows and,
  /// via `last_cross`, the head-averaged last-layer cross-attention weights.
  Var forward(Tape<T>& tape, Var x, Var memory, std::span<const char> memory_valid,
              const ForwardMode& mode, Var* last_cross) const;

  CrossMemory<T> prepare_memory(std::span<const T> memory, int length,
                                std::span<const char> valid) const;
  DecoderCache<T> empty_cache() const;

  /// Advances every cache by one position given its input embedding row.
  StepRows<T> step(std::span<const T> inputs, std::span<DecoderCache<T>* const> caches,
                   const CrossMemory<T>* memory) const;

  bool has_cross() const { return cross_; }

 private:
  const ModelConfig& cfg_;
  bool cross_;
  std::vector<DecoderLayerParams<T>> layers_;
  LayerNormParams<T> final_ln_;
};

template <typename T>
struct EncoderState {
  int length = 0;
  int width = 0;
  std::vector<T> hidden;       // length x width
  TokenIds src_ids;
  std::vector<char> valid;     // 0 at PAD positions
};

template <typename T>
struct DecoderStepOutput {
  std::vector<T> logits;        // vocabulary
  std::vector<T> copy_weights;  // source positions
  T gate = T(1);                // probability of generating
};

/// P(y) = gate * softmax(logits)[y] + (1 - gate) * sum of copy weight on
/// source positions holding y.
template <typename T>
std::vector<double> output_distribution(const DecoderStepOutput<T>& step, std::span<const int> src_ids);

template <typename T>
class Seq2SeqModel {
 public:
  Seq2SeqModel(const ModelConfig& cfg, std::uint64_t seed);
  Seq2SeqModel(const Seq2SeqModel&) = delete;
  Seq2SeqModel& operator=(const Seq2SeqModel&) = delete;

  const ModelConfig& config() const { return *cfg_; }
  ParameterStore<T>& params() { return store_; }
  const ParameterStore<T>& params() const { return store_; }
  const Embeddings<T>& embeddings() const { return emb_; }
  const DecoderStack<T>& decoder() const { return *decoder_; }

  /// Swaps in another source encoder. It must register its parameters in
  /// params() under the encoder partition.
  void set_encoder(std::unique_ptr<SourceEncoder<T>> encoder) { encoder_ = std::move(encoder); }

  struct DecoderVars {
    Var logits;        // steps x vocab
    Var copy_weights;  // steps x source length
    Var gate;          // steps x 1
  };

  Var encode(Tape<T>& tape, std::span<const int> src, const ForwardMode& mode);
  DecoderVars decode(Tape<T>& tape, Var memory, std::span<const int> src,
                     std::span<const int> prefix, const ForwardMode& mode);
  /// Mean smoothed cross-entropy over non-PAD target positions (tgt is
  /// BOS ... EOS; positions 1.. are predicted), multiplied by `weight`.
  Var sequence_loss(Tape<T>& tape, std::span<const int> src, std::span<const int> tgt,
                    double smoothing, const ForwardMode& mode, double weight = 1.0);

  // Evaluation-mode helpers; thread-safe on a fixed parameter snapshot.
  EncoderState<T> encode(std::span<const int> src) const;
  /// Outputs at every prefix position.
  std::vector<DecoderStepOutput<T>> decode_positions(const EncoderState<T>& state,
                                                     std::span<const int> prefix) const;
  DecoderStepOutput<T> decode_step(const EncoderState<T>& state, std::span<const int> prefix) const;

  CrossMemory<T> prepare_memory(const EncoderState<T>& state) const;
  std::vector<DecoderStepOutput<T>> step(const CrossMemory<T>& memory,
                                         std::span<DecoderCache<T>* const> caches,
                                         std::span<const int> tokens) const;

 private:
  void check_ids(std::span<const int> ids, const char* what) const;

  std::unique_ptr<ModelConfig> cfg_;
  ParameterStore<T> store_;
  Embeddings<T> emb_;
  std::unique_ptr<SourceEncoder<T>> encoder_;
  std::unique_ptr<DecoderStack<T>> decoder_;
  Parameter<T>* out_w_ = nullptr;
  Parameter<T>* out_b_ = nullptr;
  Parameter<T>* gate_w_ = nullptr;
  Parameter<T>* gate_b_ = nullptr;
};

/// Initializes all parameters deterministically from `seed`.
template <typename T>
void initialize_parameters(ParameterStore<T>& store, std::uint64_t seed);

/// Row-wise x[n, in] * W + b written to `out` (n x out), untaped.
template <typename T>
void linear_rows(std::span<const T> x, int n, const Parameter<T>& w, const Parameter<T>& b, T* out);

}  // namespace tae
