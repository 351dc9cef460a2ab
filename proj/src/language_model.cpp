#include "tae/language_model.hpp"

#include <cmath>
#include <stdexcept>

namespace tae {

template <typename T>
LanguageModel<T>::LanguageModel(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_(std::make_unique<ModelConfig>(cfg)) {
  cfg.validate();
  const int d = cfg.d_model;
  emb_.tokens = &store_.add("lm.embed.tokens", Partition::decoder, cfg.vocab_size, d);
  emb_.positions = &store_.add("lm.embed.positions", Partition::decoder, cfg.max_positions, d);
  body_ = std::make_unique<DecoderStack<T>>(store_, *cfg_, cfg.decoder_layers, false, "lm");
  out_w_ = &store_.add("lm.out.w", Partition::decoder, d, cfg.vocab_size);
  out_b_ = &store_.add("lm.out.b", Partition::decoder, 1, cfg.vocab_size);
  initialize_parameters(store_, seed);
}

template <typename T>
Var LanguageModel<T>::logits(Tape<T>& tape, std::span<const int> ids, const ForwardMode& mode) {
  if (ids.empty()) throw std::invalid_argument("language model input is empty");
  for (int id : ids)
    if (id < 0 || id >= cfg_->vocab_size) throw std::out_of_range("language model input id outside vocabulary");
  Var x = emb_.lookup(tape, ids, true, *cfg_);
  if (mode.train && cfg_->dropout > 0.0) {
    if (!mode.dropout_rng) throw std::invalid_argument("training forward pass needs a dropout stream");
    x = ops::dropout(tape, x, cfg_->dropout, *mode.dropout_rng);
  }
  const Var h = body_->forward(tape, x, Var{}, {}, mode, nullptr);
  return ops::linear(tape, h, tape.param(*out_w_), tape.param(*out_b_));
}

template <typename T>
Var LanguageModel<T>::loss(Tape<T>& tape, std::span<const int> ids, double smoothing, const ForwardMode& mode) {
  if (ids.size() < 2) throw std::invalid_argument("language model sequence needs at least two ids");
  const Var l = logits(tape, ids.first(ids.size() - 1), mode);
  const auto gold = ids.subspan(1);
  return ops::softmax_cross_entropy(tape, l, gold, smoothing, special::pad, 1.0 / static_cast<double>(gold.size()));
}

template <typename T>
std::vector<T> LanguageModel<T>::step(std::span<DecoderCache<T>* const> caches, std::span<const int> tokens) const {
  const int n = static_cast<int>(caches.size());
  const int d = cfg_->d_model;
  if (static_cast<int>(tokens.size()) != n) throw std::invalid_argument("step: one token per cache");
  std::vector<T> x(static_cast<std::size_t>(n) * d);
  for (int i = 0; i < n; ++i) {
    const int pos = caches[i]->length;
    if (pos >= cfg_->max_positions) throw std::length_error("prefix longer than max_positions");
    for (int j = 0; j < d; ++j)
      x[static_cast<std::size_t>(i) * d + j] = emb_.tokens->value[static_cast<std::size_t>(tokens[i]) * d + j] +
                                               emb_.positions->value[static_cast<std::size_t>(pos) * d + j];
  }
  const auto rows = body_->step(x, caches, nullptr);
  std::vector<T> out(static_cast<std::size_t>(n) * cfg_->vocab_size);
  linear_rows<T>(rows.hidden, n, *out_w_, *out_b_, out.data());
  return out;
}

template <typename T>
double LanguageModel<T>::perplexity(std::span<const TokenIds> seqs) const {
  double nll = 0.0;
  std::size_t count = 0;
  auto* self = const_cast<LanguageModel<T>*>(this);  // untracked tape: parameters are only read
  for (const auto& s : seqs) {
    if (s.size() < 2) continue;
    Tape<T> tape(false);
    const Var l = self->logits(tape, std::span<const int>(s).first(s.size() - 1), ForwardMode{});
    const auto v = tape.value(l);
    const int vocab = cfg_->vocab_size;
    for (std::size_t t = 0; t + 1 < s.size(); ++t) {
      const T* row = v.data() + t * vocab;
      double mx = row[0];
      for (int y = 1; y < vocab; ++y) mx = std::max(mx, static_cast<double>(row[y]));
      double z = 0.0;
      for (int y = 0; y < vocab; ++y) z += std::exp(static_cast<double>(row[y]) - mx);
      nll -= static_cast<double>(row[s[t + 1]]) - mx - std::log(z);
      ++count;
    }
  }
  if (count == 0) throw std::invalid_argument("perplexity: no predicted tokens");
  return std::exp(nll / static_cast<double>(count));
}

template class LanguageModel<float>;
template class LanguageModel<double>;

}  // namespace tae
