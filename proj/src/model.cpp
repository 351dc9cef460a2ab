#include "tae/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "tae/kernels.hpp"

namespace tae {

using kernels::Trans;

void ModelConfig::validate() const {
  if (vocab_size <= special::count) throw std::invalid_argument("model: vocab_size too small");
  if (d_model <= 0 || n_heads <= 0 || d_model % n_heads != 0)
    throw std::invalid_argument("model: d_model must be divisible by n_heads");
  if (encoder_layers < 1) throw std::invalid_argument("model: encoder_layers must be >= 1");
  if (decoder_layers < 1) throw std::invalid_argument("model: decoder_layers must be >= 1");
  if (ff_dim <= 0) throw std::invalid_argument("model: ff_dim must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("model: dropout must be in [0, 1)");
  if (max_positions < 2) throw std::invalid_argument("model: max_positions must be >= 2");
}

namespace {

template <typename T>
LayerNormParams<T> make_ln(ParameterStore<T>& s, const std::string& name, Partition part, int d) {
  return {&s.add(name + ".gamma", part, 1, d), &s.add(name + ".beta", part, 1, d)};
}

template <typename T>
AttentionParams<T> make_attention(ParameterStore<T>& s, const std::string& name, Partition part, int d) {
  AttentionParams<T> a;
  a.wq = &s.add(name + ".wq", part, d, d);
  a.bq = &s.add(name + ".bq", part, 1, d);
  a.wk = &s.add(name + ".wk", part, d, d);
  a.bk = &s.add(name + ".bk", part, 1, d);
  a.wv = &s.add(name + ".wv", part, d, d);
  a.bv = &s.add(name + ".bv", part, 1, d);
  a.wo = &s.add(name + ".wo", part, d, d);
  a.bo = &s.add(name + ".bo", part, 1, d);
  return a;
}

template <typename T>
FeedForwardParams<T> make_ff(ParameterStore<T>& s, const std::string& name, Partition part, int d, int ff) {
  return {&s.add(name + ".w1", part, d, ff), &s.add(name + ".b1", part, 1, ff),
          &s.add(name + ".w2", part, ff, d), &s.add(name + ".b2", part, 1, d)};
}

// Taped building blocks. `track` selects whether parameters get gradients.
template <typename T>
struct Block {
  Tape<T>& t;
  bool track;

  Var p(Parameter<T>* x) const { return t.param(*x, track); }

  Var ln(Var x, const LayerNormParams<T>& l) const { return ops::layer_norm(t, x, p(l.gamma), p(l.beta)); }

  Var attention(Var q_in, Var kv_in, const AttentionParams<T>& a, int heads, bool causal,
                std::span<const char> valid, Var* weights_out) const {
    const Var q = ops::linear(t, q_in, p(a.wq), p(a.bq));
    const Var k = ops::linear(t, kv_in, p(a.wk), p(a.bk));
    const Var v = ops::linear(t, kv_in, p(a.wv), p(a.bv));
    const Var w = ops::attention_weights(t, q, k, heads, causal, valid);
    if (weights_out) *weights_out = w;
    return ops::linear(t, ops::attention_context(t, w, v, heads), p(a.wo), p(a.bo));
  }

  Var ff(Var x, const FeedForwardParams<T>& f) const {
    return ops::linear(t, ops::gelu(t, ops::linear(t, x, p(f.w1), p(f.b1))), p(f.w2), p(f.b2));
  }

  Var drop(Var x, const ForwardMode& mode, double rate) const {
    if (!mode.train || rate <= 0.0) return x;
    if (!mode.dropout_rng) throw std::invalid_argument("training forward pass needs a dropout stream");
    return ops::dropout(t, x, rate, *mode.dropout_rng);
  }
};

// Untaped helpers for incremental decoding.
template <typename T>
void layer_norm_rows(std::span<const T> x, int n, int d, const LayerNormParams<T>& l, std::vector<T>& out) {
  out.resize(static_cast<std::size_t>(n) * d);
  std::vector<T> inv(static_cast<std::size_t>(n));
  kernels::layer_norm_rows(x.data(), out.data(), inv.data(), n, d, T(1e-5));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) {
      T& y = out[static_cast<std::size_t>(i) * d + j];
      y = y * l.gamma->value[j] + l.beta->value[j];
    }
}

// Attention of one query row over `len` key rows (row stride d) per head.
template <typename T>
void attend_row(const T* q, const T* keys, const T* values, int len, int d, int heads,
                std::span<const char> valid, T* ctx, T* mean_weights) {
  const int dh = d / heads;
  const T sc = T(1) / std::sqrt(T(dh));
  std::vector<T> w(static_cast<std::size_t>(len));
  std::fill(ctx, ctx + d, T(0));
  if (mean_weights) std::fill(mean_weights, mean_weights + len, T(0));
  for (int h = 0; h < heads; ++h) {
    kernels::gemm(Trans::no, Trans::yes, 1, len, dh, sc, q + h * dh, d, keys + h * dh, d, T(0), w.data(), len);
    for (int j = 0; j < len; ++j)
      if (!valid.empty() && !valid[j]) w[j] = -std::numeric_limits<T>::infinity();
    kernels::softmax_rows(w.data(), 1, len);
    kernels::gemm(Trans::no, Trans::no, 1, dh, len, T(1), w.data(), len, values + h * dh, d, T(0),
                  ctx + h * dh, d);
    if (mean_weights)
      for (int j = 0; j < len; ++j) mean_weights[j] += w[j] / T(heads);
  }
}

}  // namespace

template <typename T>
void linear_rows(std::span<const T> x, int n, const Parameter<T>& w, const Parameter<T>& b, T* out) {
  const int in = w.rows, outc = w.cols;
  for (int i = 0; i < n; ++i) std::copy(b.value.begin(), b.value.end(), out + static_cast<long>(i) * outc);
  kernels::gemm(Trans::no, Trans::no, n, outc, in, T(1), x.data(), in, w.value.data(), outc, T(1), out, outc);
}

template <typename T>
void initialize_parameters(ParameterStore<T>& store, std::uint64_t seed) {
  for (auto& p : store) {
    Rng rng(seed, "init", fnv1a(p.name));
    const auto dot = p.name.rfind('.');
    const std::string leaf = dot == std::string::npos ? p.name : p.name.substr(dot + 1);
    if (leaf == "gamma") {
      std::fill(p.value.begin(), p.value.end(), T(1));
    } else if (leaf == "beta" || leaf[0] == 'b') {
      std::fill(p.value.begin(), p.value.end(), T(0));
    } else if (leaf == "tokens" || leaf == "positions") {
      const double sd = 1.0 / std::sqrt(static_cast<double>(p.cols));
      for (auto& v : p.value) v = static_cast<T>(rng.normal() * sd);
    } else {
      const double lim = std::sqrt(6.0 / static_cast<double>(p.rows + p.cols));
      for (auto& v : p.value) v = static_cast<T>((2.0 * rng.uniform() - 1.0) * lim);
    }
  }
}

template <typename T>
Var Embeddings<T>::lookup(Tape<T>& tape, std::span<const int> ids, bool track, const ModelConfig& cfg) const {
  const int n = static_cast<int>(ids.size());
  if (n > cfg.max_positions) throw std::length_error("sequence longer than max_positions");
  std::vector<int> pos(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) pos[i] = i;
  return ops::add(tape, ops::embedding(tape, tape.param(*tokens, track), ids),
                  ops::embedding(tape, tape.param(*positions, track), std::span<const int>(pos)));
}

// --- encoder -----------------------------------------------------------------

template <typename T>
TransformerEncoder<T>::TransformerEncoder(ParameterStore<T>& store, const ModelConfig& cfg,
                                          const Embeddings<T>& emb)
    : cfg_(cfg), emb_(emb) {
  const int d = cfg.d_model;
  for (int l = 0; l < cfg.encoder_layers; ++l) {
    const std::string n = "encoder.layer" + std::to_string(l);
    EncoderLayerParams<T> layer;
    layer.ln_self = make_ln(store, n + ".ln_self", Partition::encoder, d);
    layer.self = make_attention(store, n + ".self", Partition::encoder, d);
    layer.ln_ff = make_ln(store, n + ".ln_ff", Partition::encoder, d);
    layer.ff = make_ff(store, n + ".ff", Partition::encoder, d, cfg.ff_dim);
    layers_.push_back(layer);
  }
  final_ln_ = make_ln(store, "encoder.final_ln", Partition::encoder, d);
}

template <typename T>
Var TransformerEncoder<T>::encode(Tape<T>& tape, std::span<const int> src, const ForwardMode& mode) const {
  const Block<T> b{tape, mode.encoder_grad};
  std::vector<char> valid(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) valid[i] = src[i] != special::pad;
  Var x = b.drop(emb_.lookup(tape, src, mode.encoder_grad, cfg_), mode, cfg_.dropout);
  for (const auto& layer : layers_) {
    const Var h = b.ln(x, layer.ln_self);
    x = ops::add(tape, x, b.drop(b.attention(h, h, layer.self, cfg_.n_heads, false, valid, nullptr), mode, cfg_.dropout));
    x = ops::add(tape, x, b.drop(b.ff(b.ln(x, layer.ln_ff), layer.ff), mode, cfg_.dropout));
  }
  return b.ln(x, final_ln_);
}

// --- decoder stack -------------------------------------------------------------

template <typename T>
DecoderStack<T>::DecoderStack(ParameterStore<T>& store, const ModelConfig& cfg, int layers, bool cross,
                              std::string_view prefix)
    : cfg_(cfg), cross_(cross) {
  const int d = cfg.d_model;
  const std::string pre(prefix);
  for (int l = 0; l < layers; ++l) {
    const std::string n = pre + ".layer" + std::to_string(l);
    DecoderLayerParams<T> layer;
    layer.ln_self = make_ln(store, n + ".ln_self", Partition::decoder, d);
    layer.self = make_attention(store, n + ".self", Partition::decoder, d);
    if (cross) {
      layer.ln_cross = make_ln(store, n + ".ln_cross", Partition::decoder, d);
      layer.cross = make_attention(store, n + ".cross", Partition::decoder, d);
    }
    layer.ln_ff = make_ln(store, n + ".ln_ff", Partition::decoder, d);
    layer.ff = make_ff(store, n + ".ff", Partition::decoder, d, cfg.ff_dim);
    layers_.push_back(layer);
  }
  final_ln_ = make_ln(store, pre + ".final_ln", Partition::decoder, d);
}

template <typename T>
Var DecoderStack<T>::forward(Tape<T>& tape, Var x, Var memory, std::span<const char> memory_valid,
                             const ForwardMode& mode, Var* last_cross) const {
  const Block<T> b{tape, true};
  const int heads = cfg_.n_heads;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    const Var h = b.ln(x, layer.ln_self);
    x = ops::add(tape, x, b.drop(b.attention(h, h, layer.self, heads, true, {}, nullptr), mode, cfg_.dropout));
    if (cross_) {
      Var w;
      const Var a = b.attention(b.ln(x, layer.ln_cross), memory, layer.cross, heads, false, memory_valid, &w);
      if (last_cross && l + 1 == layers_.size()) *last_cross = ops::head_mean(tape, w, heads);
      x = ops::add(tape, x, b.drop(a, mode, cfg_.dropout));
    }
    x = ops::add(tape, x, b.drop(b.ff(b.ln(x, layer.ln_ff), layer.ff), mode, cfg_.dropout));
  }
  return b.ln(x, final_ln_);
}

template <typename T>
CrossMemory<T> DecoderStack<T>::prepare_memory(std::span<const T> memory, int length,
                                               std::span<const char> valid) const {
  CrossMemory<T> m;
  m.length = length;
  m.valid.assign(valid.begin(), valid.end());
  const std::size_t n = static_cast<std::size_t>(length) * cfg_.d_model;
  for (const auto& layer : layers_) {
    m.keys.emplace_back(n);
    m.values.emplace_back(n);
    linear_rows(memory, length, *layer.cross.wk, *layer.cross.bk, m.keys.back().data());
    linear_rows(memory, length, *layer.cross.wv, *layer.cross.bv, m.values.back().data());
  }
  return m;
}

template <typename T>
DecoderCache<T> DecoderStack<T>::empty_cache() const {
  DecoderCache<T> c;
  c.keys.resize(layers_.size());
  c.values.resize(layers_.size());
  return c;
}

template <typename T>
StepRows<T> DecoderStack<T>::step(std::span<const T> inputs, std::span<DecoderCache<T>* const> caches,
                                  const CrossMemory<T>* memory) const {
  const int n = static_cast<int>(caches.size());
  const int d = cfg_.d_model;
  const int heads = cfg_.n_heads;
  const std::size_t rows = static_cast<std::size_t>(n) * d;
  if (inputs.size() != rows) throw std::invalid_argument("decoder step: input rows mismatch");
  if (cross_ && !memory) throw std::invalid_argument("decoder step: memory required");
  std::vector<T> x(inputs.begin(), inputs.end());
  std::vector<T> h, q(rows), k(rows), v(rows), ctx(rows), a(rows);
  std::vector<T> ff1(static_cast<std::size_t>(n) * cfg_.ff_dim);
  StepRows<T> out;
  out.rows = n;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    layer_norm_rows<T>(x, n, d, layer.ln_self, h);
    linear_rows<T>(h, n, *layer.self.wq, *layer.self.bq, q.data());
    linear_rows<T>(h, n, *layer.self.wk, *layer.self.bk, k.data());
    linear_rows<T>(h, n, *layer.self.wv, *layer.self.bv, v.data());
    for (int i = 0; i < n; ++i) {
      auto& c = *caches[i];
      c.keys[l].insert(c.keys[l].end(), k.begin() + i * d, k.begin() + (i + 1) * d);
      c.values[l].insert(c.values[l].end(), v.begin() + i * d, v.begin() + (i + 1) * d);
      const int len = static_cast<int>(c.keys[l].size()) / d;
      attend_row(q.data() + i * d, c.keys[l].data(), c.values[l].data(), len, d, heads, {}, ctx.data() + i * d,
                 static_cast<T*>(nullptr));
    }
    linear_rows<T>(ctx, n, *layer.self.wo, *layer.self.bo, a.data());
    for (std::size_t j = 0; j < rows; ++j) x[j] += a[j];

    if (cross_) {
      const bool last = l + 1 == layers_.size();
      if (last) out.cross_weights.assign(static_cast<std::size_t>(n) * memory->length, T(0));
      layer_norm_rows<T>(x, n, d, layer.ln_cross, h);
      linear_rows<T>(h, n, *layer.cross.wq, *layer.cross.bq, q.data());
      for (int i = 0; i < n; ++i)
        attend_row(q.data() + i * d, memory->keys[l].data(), memory->values[l].data(), memory->length, d, heads,
                   memory->valid, ctx.data() + i * d,
                   last ? out.cross_weights.data() + static_cast<std::size_t>(i) * memory->length : nullptr);
      linear_rows<T>(ctx, n, *layer.cross.wo, *layer.cross.bo, a.data());
      for (std::size_t j = 0; j < rows; ++j) x[j] += a[j];
    }

    layer_norm_rows<T>(x, n, d, layer.ln_ff, h);
    linear_rows<T>(h, n, *layer.ff.w1, *layer.ff.b1, ff1.data());
    for (auto& f : ff1) f = kernels::gelu(f);
    linear_rows<T>(ff1, n, *layer.ff.w2, *layer.ff.b2, a.data());
    for (std::size_t j = 0; j < rows; ++j) x[j] += a[j];
  }
  for (auto* c : caches) ++c->length;
  layer_norm_rows<T>(x, n, d, final_ln_, out.hidden);
  return out;
}

// --- seq2seq -----------------------------------------------------------------

template <typename T>
Seq2SeqModel<T>::Seq2SeqModel(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_(std::make_unique<ModelConfig>(cfg)) {
  cfg.validate();
  const int d = cfg.d_model;
  emb_.tokens = &store_.add("embed.tokens", Partition::shared_embedding, cfg.vocab_size, d);
  emb_.positions = &store_.add("embed.positions", Partition::shared_embedding, cfg.max_positions, d);
  encoder_ = std::make_unique<TransformerEncoder<T>>(store_, *cfg_, emb_);
  decoder_ = std::make_unique<DecoderStack<T>>(store_, *cfg_, cfg.decoder_layers, true, "decoder");
  out_w_ = &store_.add("decoder.out.w", Partition::decoder, d, cfg.vocab_size);
  out_b_ = &store_.add("decoder.out.b", Partition::decoder, 1, cfg.vocab_size);
  gate_w_ = &store_.add("decoder.copy_gate.w", Partition::decoder, d, 1);
  gate_b_ = &store_.add("decoder.copy_gate.b", Partition::decoder, 1, 1);
  initialize_parameters(store_, seed);
}

template <typename T>
void Seq2SeqModel<T>::check_ids(std::span<const int> ids, const char* what) const {
  if (ids.empty()) throw std::invalid_argument(std::string(what) + " is empty");
  if (static_cast<int>(ids.size()) > cfg_->max_positions)
    throw std::length_error(std::string(what) + " longer than max_positions");
  for (int id : ids)
    if (id < 0 || id >= cfg_->vocab_size) throw std::out_of_range(std::string(what) + " holds an id outside the vocabulary");
}

template <typename T>
Var Seq2SeqModel<T>::encode(Tape<T>& tape, std::span<const int> src, const ForwardMode& mode) {
  check_ids(src, "source");
  return encoder_->encode(tape, src, mode);
}

template <typename T>
typename Seq2SeqModel<T>::DecoderVars Seq2SeqModel<T>::decode(Tape<T>& tape, Var memory, std::span<const int> src,
                                                             std::span<const int> prefix, const ForwardMode& mode) {
  check_ids(prefix, "prefix");
  if (prefix[0] != special::bos) throw std::invalid_argument("prefix must start with BOS");
  std::vector<char> valid(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) valid[i] = src[i] != special::pad;
  const Var x = Block<T>{tape, mode.embedding_grad}.drop(emb_.lookup(tape, prefix, mode.embedding_grad, *cfg_),
                                                        mode, cfg_->dropout);
  Var copy;
  const Var h = decoder_->forward(tape, x, memory, valid, mode, &copy);
  DecoderVars out;
  out.logits = ops::linear(tape, h, tape.param(*out_w_), tape.param(*out_b_));
  out.gate = ops::sigmoid(tape, ops::linear(tape, h, tape.param(*gate_w_), tape.param(*gate_b_)));
  out.copy_weights = copy;
  return out;
}

template <typename T>
Var Seq2SeqModel<T>::sequence_loss(Tape<T>& tape, std::span<const int> src, std::span<const int> tgt,
                                   double smoothing, const ForwardMode& mode, double weight) {
  if (tgt.size() < 2) throw std::invalid_argument("target must hold BOS and EOS");
  const Var memory = encode(tape, src, mode);
  const auto prefix = tgt.first(tgt.size() - 1);
  const auto gold = tgt.subspan(1);
  const auto dv = decode(tape, memory, src, prefix, mode);
  const auto counted = std::count_if(gold.begin(), gold.end(), [](int id) { return id != special::pad; });
  const double scale = counted > 0 ? weight / static_cast<double>(counted) : 0.0;
  return ops::copy_mixture_loss(tape, dv.logits, dv.copy_weights, dv.gate, src, gold, smoothing, special::pad, scale);
}

template <typename T>
EncoderState<T> Seq2SeqModel<T>::encode(std::span<const int> src) const {
  check_ids(src, "source");
  Tape<T> tape(false);
  const Var m = encoder_->encode(tape, src, ForwardMode{});
  EncoderState<T> s;
  s.length = static_cast<int>(src.size());
  s.width = cfg_->d_model;
  s.hidden.assign(tape.value(m).begin(), tape.value(m).end());
  s.src_ids.assign(src.begin(), src.end());
  s.valid.resize(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) s.valid[i] = src[i] != special::pad;
  return s;
}

template <typename T>
std::vector<DecoderStepOutput<T>> Seq2SeqModel<T>::decode_positions(const EncoderState<T>& state,
                                                                    std::span<const int> prefix) const {
  Tape<T> tape(false);
  const Var memory = tape.constant(state.length, state.width, state.hidden);
  auto* self = const_cast<Seq2SeqModel<T>*>(this);  // untracked tape: parameters are only read
  const auto dv = self->decode(tape, memory, state.src_ids, prefix, ForwardMode{});
  const int steps = static_cast<int>(prefix.size());
  const int vocab = cfg_->vocab_size;
  std::vector<DecoderStepOutput<T>> out(static_cast<std::size_t>(steps));
  const auto logits = tape.value(dv.logits);
  const auto copy = tape.value(dv.copy_weights);
  const auto gate = tape.value(dv.gate);
  for (int s = 0; s < steps; ++s) {
    out[s].logits.assign(logits.begin() + static_cast<long>(s) * vocab, logits.begin() + static_cast<long>(s + 1) * vocab);
    out[s].copy_weights.assign(copy.begin() + static_cast<long>(s) * state.length,
                               copy.begin() + static_cast<long>(s + 1) * state.length);
    out[s].gate = gate[s];
  }
  return out;
}

template <typename T>
DecoderStepOutput<T> Seq2SeqModel<T>::decode_step(const EncoderState<T>& state, std::span<const int> prefix) const {
  return decode_positions(state, prefix).back();
}

template <typename T>
CrossMemory<T> Seq2SeqModel<T>::prepare_memory(const EncoderState<T>& state) const {
  return decoder_->prepare_memory(state.hidden, state.length, state.valid);
}

template <typename T>
std::vector<DecoderStepOutput<T>> Seq2SeqModel<T>::step(const CrossMemory<T>& memory,
                                                        std::span<DecoderCache<T>* const> caches,
                                                        std::span<const int> tokens) const {
  const int n = static_cast<int>(caches.size());
  const int d = cfg_->d_model;
  if (static_cast<int>(tokens.size()) != n) throw std::invalid_argument("step: one token per cache");
  std::vector<T> x(static_cast<std::size_t>(n) * d);
  for (int i = 0; i < n; ++i) {
    const int pos = caches[i]->length;
    if (pos >= cfg_->max_positions) throw std::length_error("prefix longer than max_positions");
    if (tokens[i] < 0 || tokens[i] >= cfg_->vocab_size) throw std::out_of_range("step: token outside vocabulary");
    for (int j = 0; j < d; ++j)
      x[static_cast<std::size_t>(i) * d + j] = emb_.tokens->value[static_cast<std::size_t>(tokens[i]) * d + j] +
                                               emb_.positions->value[static_cast<std::size_t>(pos) * d + j];
  }
  const auto rows = decoder_->step(x, caches, &memory);
  const int vocab = cfg_->vocab_size;
  std::vector<T> logits(static_cast<std::size_t>(n) * vocab);
  std::vector<T> gate(static_cast<std::size_t>(n));
  linear_rows<T>(rows.hidden, n, *out_w_, *out_b_, logits.data());
  linear_rows<T>(rows.hidden, n, *gate_w_, *gate_b_, gate.data());
  std::vector<DecoderStepOutput<T>> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    out[i].logits.assign(logits.begin() + static_cast<long>(i) * vocab, logits.begin() + static_cast<long>(i + 1) * vocab);
    out[i].copy_weights.assign(rows.cross_weights.begin() + static_cast<long>(i) * memory.length,
                               rows.cross_weights.begin() + static_cast<long>(i + 1) * memory.length);
    out[i].gate = T(1) / (T(1) + std::exp(-gate[i]));
  }
  return out;
}

template <typename T>
std::vector<double> output_distribution(const DecoderStepOutput<T>& step, std::span<const int> src_ids) {
  const std::size_t vocab = step.logits.size();
  if (step.copy_weights.size() != src_ids.size())
    throw std::invalid_argument("output_distribution: copy weights do not match the source");
  std::vector<double> p(step.logits.begin(), step.logits.end());
  const double mx = *std::max_element(p.begin(), p.end());
  double z = 0.0;
  for (auto& v : p) z += (v = std::exp(v - mx));
  const double g = static_cast<double>(step.gate);
  for (auto& v : p) v = g * v / z;
  for (std::size_t j = 0; j < src_ids.size(); ++j) {
    const auto id = static_cast<std::size_t>(src_ids[j]);
    if (id >= vocab) throw std::out_of_range("output_distribution: source id outside vocabulary");
    p[id] += (1.0 - g) * static_cast<double>(step.copy_weights[j]);
  }
  return p;
}

template void linear_rows<float>(std::span<const float>, int, const Parameter<float>&, const Parameter<float>&, float*);
template void linear_rows<double>(std::span<const double>, int, const Parameter<double>&, const Parameter<double>&, double*);
template void initialize_parameters<float>(ParameterStore<float>&, std::uint64_t);
template void initialize_parameters<double>(ParameterStore<double>&, std::uint64_t);
template std::vector<double> output_distribution<float>(const DecoderStepOutput<float>&, std::span<const int>);
template std::vector<double> output_distribution<double>(const DecoderStepOutput<double>&, std::span<const int>);
template struct Embeddings<float>;
template struct Embeddings<double>;
template class TransformerEncoder<float>;
template class TransformerEncoder<double>;
template class DecoderStack<float>;
template class DecoderStack<double>;
template class Seq2SeqModel<float>;
template class Seq2SeqModel<double>;

}  // namespace tae
