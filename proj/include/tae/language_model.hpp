#pragma once

// Decoder-only transformer over program tokens, used for shallow fusion.

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "tae/model.hpp"

namespace tae {

template <typename T>
class LanguageModel {
 public:
  /// Uses every field of `cfg` except encoder_layers.
  LanguageModel(const ModelConfig& cfg, std::uint64_t seed);
  LanguageModel(const LanguageModel&) = delete;
  LanguageModel& operator=(const LanguageModel&) = delete;

  const ModelConfig& config() const { return *cfg_; }
  ParameterStore<T>& params() { return store_; }
  const ParameterStore<T>& params() const { return store_; }

  /// Logits for every position of `ids` (BOS ...): rows = ids.size().
  Var logits(Tape<T>& tape, std::span<const int> ids, const ForwardMode& mode);
  /// Mean smoothed cross-entropy of predicting ids[1..] from ids[..n-1].
  Var loss(Tape<T>& tape, std::span<const int> ids, double smoothing, const ForwardMode& mode);

  DecoderCache<T> empty_cache() const { return body_->empty_cache(); }
  /// Advances each cache by one token; returns rows x vocab logits.
  std::vector<T> step(std::span<DecoderCache<T>* const> caches, std::span<const int> tokens) const;

  /// exp(mean negative log-likelihood per predicted token).
  double perplexity(std::span<const TokenIds> seqs) const;

 private:
  std::unique_ptr<ModelConfig> cfg_;
  ParameterStore<T> store_;
  Embeddings<T> emb_;
  std::unique_ptr<DecoderStack<T>> body_;
  Parameter<T>* out_w_ = nullptr;
  Parameter<T>* out_b_ = nullptr;
};

}  // namespace tae
