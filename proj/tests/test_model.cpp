#include <doctest.h>

#include <cmath>
#include <cstring>
#include <numeric>

#include "support.hpp"
#include "tae/dataset.hpp"
#include "tae/eval.hpp"
#include "tae/inference.hpp"
#include "tae/kernels.hpp"
#include "tae/model.hpp"
#include "tae/trainer.hpp"

using namespace tae;

namespace {

TokenIds random_ids(Rng& rng, int n, int vocab, bool sentinels = true) {
  TokenIds ids;
  if (sentinels) ids.push_back(special::bos);
  for (int i = 0; i < n; ++i) ids.push_back(static_cast<int>(rng.uniform_int(special::count, vocab - 1)));
  if (sentinels) ids.push_back(special::eos);
  return ids;
}

template <typename T>
void check_distribution(const std::vector<double>& p) {
  double s = 0;
  for (double v : p) {
    CHECK(v >= 0.0);
    s += v;
  }
  CHECK(std::abs(s - 1.0) < 1e-6);
}

}  // namespace

TEST_CASE("configuration validation") {
  auto c = testing::tiny_model(30);
  CHECK_NOTHROW(c.validate());
  c.n_heads = 3;
  CHECK_THROWS(c.validate());
  c = testing::tiny_model(3);
  CHECK_THROWS(c.validate());
}

TEST_CASE("embeddings are one table shared by encoder and decoder") {
  Seq2SeqModel<float> model(testing::tiny_model(30), 1);
  CHECK(model.embeddings().tokens == &model.params().get("embed.tokens"));
  CHECK(model.embeddings().positions == &model.params().get("embed.positions"));
  int tables = 0;
  for (const auto& p : model.params())
    if (p.rows == 30 && p.cols == 16 && p.name.find("out") == std::string::npos) ++tables;
  CHECK(tables == 1);
  CHECK(model.params().get("embed.tokens").partition == Partition::shared_embedding);
  // Both stacks route gradient into the same table.
  Tape<float> tape;
  const TokenIds src = {2, 7, 8, 3}, tgt = {2, 9, 3};
  tape.backward(model.sequence_loss(tape, src, tgt, 0.0, ForwardMode{}));
  const auto& tok = model.params().get("embed.tokens");
  auto row_norm = [&](int id) {
    double s = 0;
    for (int j = 0; j < 16; ++j) s += std::abs(tok.grad[id * 16 + j]);
    return s;
  };
  CHECK(row_norm(7) > 0);  // source only
  CHECK(row_norm(9) > 0);  // target only
}

TEST_CASE("encoder state shape, determinism and padding") {
  Seq2SeqModel<float> model(testing::tiny_model(30), 2);
  CHECK(model.encode(TokenIds{special::bos, special::eos}).length == 2);
  const TokenIds src = {2, 10, 11, 12, 3};
  TokenIds padded = src;
  padded.insert(padded.end(), {special::pad, special::pad, special::pad});
  const auto a = model.encode(src);
  const auto b = model.encode(padded);
  for (std::size_t i = 0; i < a.hidden.size(); ++i) CHECK(std::abs(a.hidden[i] - b.hidden[i]) < 1e-6);
  Seq2SeqModel<float> again(testing::tiny_model(30), 2);
  const auto c = again.encode(src);
  CHECK(std::memcmp(a.hidden.data(), c.hidden.data(), a.hidden.size() * sizeof(float)) == 0);
  // Padding carries no copy mass.
  const auto out = model.decode_step(b, TokenIds{special::bos});
  for (std::size_t j = src.size(); j < padded.size(); ++j) CHECK(out.copy_weights[j] == 0.0f);
  CHECK_THROWS(model.encode(TokenIds(65, 5)));
  CHECK_THROWS(model.encode(TokenIds{2, 30, 3}));
  CHECK_THROWS(model.decode_step(a, TokenIds{5}));
}

TEST_CASE("decoder outputs are causal") {
  Seq2SeqModel<double> model(testing::tiny_model(40), 3);
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const auto src = random_ids(rng, 6, 40);
    const auto state = model.encode(src);
    auto prefix = random_ids(rng, 5, 40, false);
    prefix.insert(prefix.begin(), special::bos);
    auto changed = prefix;
    const int cut = static_cast<int>(rng.uniform_int(1, prefix.size() - 1));
    for (std::size_t t = cut; t < changed.size(); ++t) changed[t] = static_cast<int>(rng.uniform_int(5, 39));
    const auto a = model.decode_positions(state, prefix);
    const auto b = model.decode_positions(state, changed);
    for (int t = 0; t < cut; ++t) {
      for (std::size_t y = 0; y < a[t].logits.size(); ++y) CHECK(std::abs(a[t].logits[y] - b[t].logits[y]) < 1e-9);
      CHECK(std::abs(a[t].gate - b[t].gate) < 1e-9);
    }
    // Extending the prefix keeps earlier positions.
    auto longer = prefix;
    longer.push_back(17);
    const auto c = model.decode_positions(state, longer);
    for (std::size_t t = 0; t < prefix.size(); ++t)
      for (std::size_t y = 0; y < a[t].logits.size(); ++y) CHECK(std::abs(a[t].logits[y] - c[t].logits[y]) < 1e-6);
  }
}

TEST_CASE("copy weights are normalized over non-pad source positions") {
  Seq2SeqModel<float> model(testing::tiny_model(40), 4);
  Rng rng(3);
  for (int k = 1; k <= 8; ++k) {
    auto src = random_ids(rng, k, 40);
    src.push_back(special::pad);
    const auto state = model.encode(src);
    const auto out = model.decode_step(state, TokenIds{special::bos, 9});
    const double s = std::accumulate(out.copy_weights.begin(), out.copy_weights.end(), 0.0);
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
}

TEST_CASE("incremental decoding matches the full forward pass") {
  Seq2SeqModel<float> model(testing::tiny_model(40), 5);
  const TokenIds src = {2, 12, 13, 14, 3};
  const TokenIds prefix = {2, 20, 21, 22, 23};
  const auto state = model.encode(src);
  const auto full = model.decode_positions(state, prefix);
  const auto memory = model.prepare_memory(state);
  auto cache = model.decoder().empty_cache();
  DecoderCache<float>* caches[] = {&cache};
  for (std::size_t t = 0; t < prefix.size(); ++t) {
    const int tok[] = {prefix[t]};
    const auto step = model.step(memory, caches, tok);
    for (std::size_t y = 0; y < step[0].logits.size(); ++y) CHECK(std::abs(step[0].logits[y] - full[t].logits[y]) < 1e-4);
    for (std::size_t j = 0; j < src.size(); ++j)
      CHECK(std::abs(step[0].copy_weights[j] - full[t].copy_weights[j]) < 1e-5);
    CHECK(std::abs(step[0].gate - full[t].gate) < 1e-5);
  }
}

TEST_CASE("output distribution endpoints and brute-force mixture") {
  DecoderStepOutput<double> s;
  s.logits = {0.2, -1.0, 0.5, 2.0, 0.0, 0.0};
  const TokenIds src = {4, 4};
  s.copy_weights = {0.3, 0.7};
  s.gate = 1.0;
  auto p = output_distribution(s, src);
  std::vector<double> soft = s.logits;
  kernels::reference::softmax_rows(soft.data(), 1, 6);
  for (int y = 0; y < 6; ++y) CHECK(p[y] == doctest::Approx(soft[y]).epsilon(1e-15));
  s.gate = 0.0;
  p = output_distribution(s, src);
  CHECK(p[4] == doctest::Approx(1.0).epsilon(1e-15));
  for (int y = 0; y < 6; ++y)
    if (y != 4) CHECK(p[y] == 0.0);

  // Three-token vocabulary, two-token source.
  DecoderStepOutput<double> m;
  m.logits = {1.0, 0.0, -1.0};
  m.copy_weights = {0.25, 0.75};
  m.gate = 0.5;
  const TokenIds src2 = {2, 0};
  const double z = std::exp(1.0) + 1.0 + std::exp(-1.0);
  const std::vector<double> want = {0.5 * std::exp(1.0) / z + 0.5 * 0.75, 0.5 / z,
                                    0.5 * std::exp(-1.0) / z + 0.5 * 0.25};
  p = output_distribution(m, src2);
  for (int y = 0; y < 3; ++y) CHECK(p[y] == doctest::Approx(want[y]).epsilon(1e-14));
}

TEST_CASE("output distribution is valid on random model steps") {
  Seq2SeqModel<float> model(testing::tiny_model(50), 6);
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const auto src = random_ids(rng, static_cast<int>(rng.uniform_int(1, 10)), 50);
    const auto state = model.encode(src);
    auto prefix = random_ids(rng, static_cast<int>(rng.uniform_int(0, 6)), 50, false);
    prefix.insert(prefix.begin(), special::bos);
    check_distribution<float>(output_distribution(model.decode_step(state, prefix), src));
  }
}

TEST_CASE("sequence loss closed forms") {
  Tape<double> tape(false);
  const int vocab = 7;
  const TokenIds src = {2, 5, 3};
  const int gold[] = {5, 6, 3};
  SUBCASE("uniform model gives ln V per position") {
    const Var logits = tape.zeros(3, vocab);
    const Var copy = tape.constant(3, 3, std::vector<double>(9, 1.0 / 3));
    const Var gate = tape.constant(3, 1, {1, 1, 1});
    const Var loss = ops::copy_mixture_loss(tape, logits, copy, gate, src, gold, 0.0, special::pad, 1.0 / 3);
    CHECK(tape.scalar(loss) == doctest::Approx(std::log(7.0)).epsilon(1e-14));
    const Var smoothed = ops::copy_mixture_loss(tape, logits, copy, gate, src, gold, 0.1, special::pad, 1.0 / 3);
    CHECK(tape.scalar(smoothed) == doctest::Approx(std::log(7.0)).epsilon(1e-14));
  }
  SUBCASE("certain model gives zero loss at eps = 0") {
    std::vector<double> l(3 * vocab, 0.0);
    for (int s = 0; s < 3; ++s) l[s * vocab + gold[s]] = 800.0;
    const Var loss = ops::copy_mixture_loss(tape, tape.constant(3, vocab, l), tape.constant(3, 3, std::vector<double>(9, 1.0 / 3)),
                                            tape.constant(3, 1, {1, 1, 1}), src, gold, 0.0, special::pad, 1.0);
    CHECK(std::abs(tape.scalar(loss)) < 1e-12);
  }
  SUBCASE("pad positions are excluded") {
    const int padded[] = {5, special::pad, 3};
    const Var logits = tape.zeros(3, vocab);
    const Var copy = tape.constant(3, 3, std::vector<double>(9, 1.0 / 3));
    const Var gate = tape.constant(3, 1, {1, 1, 1});
    const Var loss = ops::copy_mixture_loss(tape, logits, copy, gate, src, padded, 0.0, special::pad, 1.0);
    CHECK(tape.scalar(loss) == doctest::Approx(2 * std::log(7.0)).epsilon(1e-14));
  }
}

TEST_CASE("sequence loss of a random tiny model matches an independent sum") {
  Seq2SeqModel<double> model(testing::tiny_model(20), 7);
  const TokenIds src = {2, 8, 9, 8, 3};
  const TokenIds tgt = {2, 8, 15, 3};
  const double eps = 0.1;
  const auto state = model.encode(src);
  const auto outs = model.decode_positions(state, std::span<const int>(tgt).first(3));
  double total = 0;
  for (int t = 0; t < 3; ++t) {
    const auto p = output_distribution(outs[t], src);
    for (int y = 0; y < 20; ++y) {
      const double q = eps / 20 + (y == tgt[t + 1] ? 1 - eps : 0.0);
      total -= q * std::log(p[y]);
    }
  }
  Tape<double> tape(false);
  const Var loss = model.sequence_loss(tape, src, tgt, eps, ForwardMode{});
  CHECK(tape.scalar(loss) == doctest::Approx(total / 3).epsilon(1e-10));
}

TEST_CASE("full model gradient check in double precision") {
  Seq2SeqModel<double> model(testing::tiny_model(24), 9);
  const TokenIds s1 = {2, 6, 7, 8, 3}, t1 = {2, 7, 20, 3};
  const TokenIds s2 = {2, 9, 9, 3}, t2 = {2, 21, 9, 22, 3};
  auto build = [&](Tape<double>& tape) {
    const Var l1 = model.sequence_loss(tape, s1, t1, 0.1, ForwardMode{}, 0.5);
    const Var l2 = model.sequence_loss(tape, s2, t2, 0.1, ForwardMode{}, 0.5);
    const Var parts[] = {l1, l2};
    return ops::sum(tape, std::span<const Var>(parts));
  };
  const auto res = grad_check(model.params(), build, 1e-5, 6, 3);
  CHECK(res.excluded == 0);
  CHECK(res.checked > 100);
  CHECK(res.max_relative_error < 1e-3);
}

TEST_CASE("overfitting a few toy examples copies source identifiers") {
  const auto split = generate_toy_dataset(21, 50, 0, 0, 0);
  const auto tok = SubwordModel::train(testing::all_texts(split), 400);
  ModelConfig cfg = testing::tiny_model(tok.size());
  cfg.d_model = 32;
  cfg.ff_dim = 64;
  cfg.decoder_layers = 2;
  TrainConfig tc;
  tc.encoder_lr = tc.decoder_lr = 3e-3;
  tc.label_smoothing = 0.0;
  tc.batch_size = 10;
  tc.polyak_momentum = 0.0;
  Seq2SeqModel<float> model(cfg, 4);
  Trainer trainer(model, tc);
  const auto pairs = encode_pairs(tok, split.labeled);
  for (int epoch = 0; epoch < 120; ++epoch)
    for (std::size_t i = 0; i < pairs.size(); i += 10)
      trainer.supervised_step(std::span(pairs).subspan(i, 10));
  std::vector<TokenIds> srcs;
  for (const auto& p : pairs) srcs.push_back(p.src);
  DecodeOptions o;
  o.beam_size = 1;
  o.max_len = 40;
  const auto dec = decode_corpus(model, tok, srcs, o);
  std::size_t hit = 0, total = 0;
  for (std::size_t i = 0; i < dec.size(); ++i) {
    const auto gold = split_copy_generation(split.labeled[i].source, split.labeled[i].target).copy;
    const auto pred = split_copy_generation(split.labeled[i].source, dec[i].prediction).copy;
    for (std::size_t k = 0; k < gold.size(); ++k) hit += k < pred.size() && pred[k] == gold[k];
    total += gold.size();
  }
  const double acc = static_cast<double>(hit) / static_cast<double>(total);
  MESSAGE("copied identifier accuracy " << acc);
  CHECK(acc >= 0.99);
}
