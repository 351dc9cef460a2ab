#include <doctest.h>

#include <cmath>
#include <cstring>
#include <functional>
#include <map>

#include "oracles.hpp"
#include "support.hpp"
#include "tae/dataset.hpp"
#include "tae/eval.hpp"
#include "tae/inference.hpp"
#include "tae/trainer.hpp"

using namespace tae;
using oracle::TableScorer;

namespace {

struct Trained {
  SubwordModel tok;
  std::unique_ptr<Seq2SeqModel<float>> model;
  std::vector<ParallelExample> dev;
  std::vector<TokenIds> mono;
};

// A small model trained briefly so that it emits EOS.
const Trained& trained() {
  static const Trained t = [] {
    const auto split = generate_toy_dataset(41, 40, 40, 10, 0);
    Trained out{SubwordModel::train(testing::all_texts(split), 300), nullptr, split.dev, {}};
    auto cfg = testing::tiny_model(out.tok.size());
    cfg.d_model = 32;
    cfg.ff_dim = 64;
    out.model = std::make_unique<Seq2SeqModel<float>>(cfg, 3);
    TrainConfig tc;
    tc.encoder_lr = tc.decoder_lr = 3e-3;
    Trainer trainer(*out.model, tc);
    const auto pairs = encode_pairs(out.tok, split.labeled);
    for (int e = 0; e < 25; ++e)
      for (std::size_t i = 0; i + 8 <= pairs.size(); i += 8) trainer.supervised_step(std::span(pairs).subspan(i, 8));
    out.mono = encode_targets(out.tok, split.monolingual);
    return out;
  }();
  return t;
}

std::vector<TokenIds> dev_sources() {
  std::vector<TokenIds> s;
  for (const auto& e : trained().dev) s.push_back(trained().tok.encode(e.source));
  return s;
}

}  // namespace

TEST_CASE("length penalty") {
  for (double a : {0.0, 0.3, 0.6, 1.7}) CHECK(length_penalty(1, a) == 1.0);
  CHECK(length_penalty(7, 0.6) == doctest::Approx(std::pow(2.0, 0.6)).epsilon(1e-15));
  CHECK(length_penalty(9, 0.0) == 1.0);
}

TEST_CASE("beam search matches exhaustive enumeration over three steps") {
  const int vocab = 6;
  for (std::uint64_t seed = 1; seed <= 20; ++seed)
    for (double alpha : {0.0, 0.6, 1.0}) {
      const auto table = oracle::random_table(vocab, seed, 1.0);
      TableScorer scorer(vocab, table);
      DecodeOptions o;
      o.beam_size = vocab * vocab;  // wide enough to hold every prefix
      o.alpha = alpha;
      o.max_len = 3;
      const auto got = beam_search(scorer, o);
      const auto want = oracle::exhaustive(table, vocab, 3, alpha);
      CHECK(got.finished);
      CHECK(got.tokens == want.tokens);
      CHECK(got.normalized == doctest::Approx(want.normalized).epsilon(1e-12));
    }
}

TEST_CASE("alpha zero ranks finished hypotheses by raw score") {
  const int vocab = 6;
  const auto table = oracle::random_table(vocab, 77, 0.5);
  TableScorer scorer(vocab, table);
  DecodeOptions o;
  o.beam_size = 36;
  o.alpha = 0.0;
  o.max_len = 3;
  const auto h = beam_search(scorer, o);
  CHECK(h.raw == h.normalized);
  CHECK(h.raw == doctest::Approx(oracle::exhaustive(table, vocab, 3, 0.0).normalized).epsilon(1e-12));
}

TEST_CASE("hand-set distributions") {
  const int vocab = 8;
  const double lo = std::log(1e-6);
  // Step 1: token 5 (0.6) or 6 (0.4). After 5: 7 (0.55) or EOS (0.45).
  // After 6: EOS (0.95). After 5 7: EOS (1).
  auto table = [=](const TokenIds& p) {
    std::vector<double> l(vocab, lo);
    if (p.empty()) { l[5] = std::log(0.6); l[6] = std::log(0.4); }
    else if (p == TokenIds{5}) { l[7] = std::log(0.55); l[special::eos] = std::log(0.45); }
    else if (p == TokenIds{6}) { l[special::eos] = std::log(0.95); }
    else { l[special::eos] = 0.0; }
    return l;
  };
  TableScorer greedy(vocab, table);
  CHECK(greedy_decode(greedy, 10) == TokenIds{5, 7, special::eos});
  // Raw scores: [5 7 EOS] 0.33, [5 EOS] 0.27, [6 EOS] 0.38.
  TableScorer beam(vocab, table);
  DecodeOptions o;
  o.beam_size = 2;
  o.alpha = 0.0;
  const auto h = beam_search(beam, o);
  CHECK(h.tokens == TokenIds{6, special::eos});
  CHECK(h.raw == doctest::Approx(std::log(0.38)).epsilon(1e-12));

  auto eos_first = [=](const TokenIds&) {
    std::vector<double> l(vocab, -INFINITY);
    l[special::eos] = 0.0;
    return l;
  };
  TableScorer e(vocab, eos_first);
  CHECK(greedy_decode(e, 10) == TokenIds{special::eos});
  const SubwordModel tok = SubwordModel::from_pieces({"<pad>", "<unk>", "<s>", "</s>", "<zero>", "a", "b", "c"});
  CHECK(tok.decode(greedy_decode(e, 10)).empty());
}

TEST_CASE("unfinished search returns the best partial hypothesis flagged") {
  const int vocab = 6;
  auto never = [=](const TokenIds&) {
    std::vector<double> l(vocab, std::log(0.25));
    l[special::eos] = -INFINITY;
    l[0] = l[1] = -INFINITY;
    return l;
  };
  TableScorer s(vocab, never);
  DecodeOptions o;
  o.beam_size = 3;
  o.max_len = 4;
  const auto h = beam_search(s, o);
  CHECK_FALSE(h.finished);
  CHECK(h.tokens.size() == 4);
  o.beam_size = 0;
  CHECK_THROWS(beam_search(s, o));
}

TEST_CASE("beam size one is greedy decoding") {
  const auto& t = trained();
  const auto srcs = dev_sources();
  REQUIRE(srcs.size() == 10);
  DecodeOptions o;
  o.beam_size = 1;
  o.max_len = 40;
  const auto beam = decode_corpus(*t.model, t.tok, srcs, o);
  int finished = 0;
  for (std::size_t i = 0; i < srcs.size(); ++i) {
    Seq2SeqScorer sc(*t.model, srcs[i]);
    const auto g = greedy_decode(sc, 40);
    CHECK(t.tok.decode(g) == beam[i].prediction);
    Seq2SeqScorer sc2(*t.model, srcs[i]);
    CHECK(beam_search(sc2, o).tokens == g);
    finished += beam[i].finished;
  }
  CHECK(finished > 0);
}

TEST_CASE("fused log-probabilities") {
  const std::vector<double> tm = {std::log(0.1), std::log(0.2), std::log(0.3), std::log(0.4)};
  const std::vector<float> lm = {1.0f, -0.5f, 2.0f, 0.0f};
  FusionConfig f{0.2, 2.0};
  const auto got = fused_logprob(tm, lm, f);
  double z = 0;
  for (float l : lm) z += std::exp(l / 2.0);
  for (int y = 0; y < 4; ++y) CHECK(got[y] == doctest::Approx(tm[y] + 0.2 * (lm[y] / 2.0 - std::log(z))).epsilon(1e-12));

  const auto zero = fused_logprob(tm, lm, FusionConfig{0.0, 1.0});
  CHECK(std::memcmp(zero.data(), tm.data(), tm.size() * sizeof(double)) == 0);

  // Large tau flattens the LM term; the TM argmax survives a strong LM preference.
  const std::vector<double> tm3 = {std::log(0.5), std::log(0.3), std::log(0.2)};
  const std::vector<float> lm3 = {-5.0f, 0.0f, 5.0f};
  const auto sharp = fused_logprob(tm3, lm3, FusionConfig{1.0, 1.0});
  CHECK(std::max_element(sharp.begin(), sharp.end()) - sharp.begin() == 2);
  const auto flat = fused_logprob(tm3, lm3, FusionConfig{1.0, 1e6});
  CHECK(std::max_element(flat.begin(), flat.end()) - flat.begin() == 0);
  CHECK_THROWS(FusionConfig({0.1, 0.0}).validate());
}

TEST_CASE("language model training") {
  const auto split = generate_toy_dataset(51, 0, 20, 0, 0);
  const auto tok = SubwordModel::train(testing::all_texts(split), 200);
  const auto corpus = encode_targets(tok, split.monolingual);
  auto cfg = testing::tiny_model(tok.size());
  cfg.d_model = 32;
  cfg.ff_dim = 64;
  LanguageModel<float> untrained(cfg, 5);
  const double p0 = untrained.perplexity(corpus);
  MESSAGE("untrained perplexity " << p0 << " for vocabulary " << tok.size());
  CHECK(p0 == doctest::Approx(tok.size()).epsilon(0.2));
  LmTrainConfig lc;
  lc.lr = 3e-3;
  lc.epochs = 60;
  lc.batch_size = 5;
  const auto r = train_lm(corpus, cfg, lc);
  const double p1 = r.lm->perplexity(corpus);
  MESSAGE("trained perplexity " << p1);
  CHECK(p1 < 1.5);
  CHECK(r.epoch_loss.size() == 60);
  CHECK(r.epoch_loss.back() < r.epoch_loss.front());
  const auto again = train_lm(corpus, cfg, lc);
  for (std::size_t i = 0; i < r.lm->params().size(); ++i) CHECK(r.lm->params()[i].value == again.lm->params()[i].value);
  CHECK_THROWS(train_lm({}, cfg, lc));
}

TEST_CASE("fusion with lambda zero is byte-identical to unfused decoding") {
  const auto& t = trained();
  LanguageModel<float> lm(t.model->config(), 9);
  const auto srcs = dev_sources();
  DecodeOptions o;
  o.beam_size = 4;
  o.max_len = 40;
  const auto plain = decode_corpus(*t.model, t.tok, srcs, o);
  const auto fused = decode_corpus(*t.model, t.tok, srcs, o, &lm, FusionConfig{0.0, 2.0});
  for (std::size_t i = 0; i < srcs.size(); ++i) {
    CHECK(plain[i].prediction == fused[i].prediction);
    CHECK(std::memcmp(&plain[i].raw, &fused[i].raw, sizeof(double)) == 0);
    CHECK(std::memcmp(&plain[i].normalized, &fused[i].normalized, sizeof(double)) == 0);
  }
  const auto strong = decode_corpus(*t.model, t.tok, srcs, o, &lm, FusionConfig{5.0, 1.0});
  bool any_diff = false;
  for (std::size_t i = 0; i < srcs.size(); ++i) any_diff |= plain[i].raw != strong[i].raw;
  CHECK(any_diff);
}

TEST_CASE("fusion sweep") {
  const auto& t = trained();
  LanguageModel<float> lm(t.model->config(), 9);
  const auto srcs = dev_sources();
  std::vector<std::string> golds;
  for (const auto& e : t.dev) golds.push_back(e.target);
  const CorpusMetric metric = [&](const std::vector<std::string>& preds) { return corpus_bleu(preds, golds); };
  DecodeOptions o;
  o.beam_size = 3;
  o.max_len = 40;
  std::vector<std::string> base;
  for (const auto& d : decode_corpus(*t.model, t.tok, srcs, o)) base.push_back(d.prediction);
  const double baseline = metric(base);
  const std::vector<double> zero = {0.0}, one = {1.0};
  const auto single = fusion_sweep(*t.model, lm, t.tok, srcs, zero, one, o, metric);
  REQUIRE(single.size() == 1);
  CHECK(single[0].metric == baseline);
  const std::vector<double> lambdas = {0.0, 0.3, 1.0}, taus = {1.0, 5.0};
  const auto grid = fusion_sweep(*t.model, lm, t.tok, srcs, lambdas, taus, o, metric);
  CHECK(grid.size() == 6);
  for (const auto& r : grid)
    if (r.lambda == 0.0) CHECK(r.metric == baseline);
  const auto rerun = fusion_sweep(*t.model, lm, t.tok, srcs, lambdas, taus, o, metric);
  for (std::size_t i = 0; i < grid.size(); ++i) CHECK(grid[i].metric == rerun[i].metric);
  const auto dir = testing::scratch_dir("sweep");
  write_sweep_table(dir / "sweep.tsv", grid);
  const auto text = testing::read_file(dir / "sweep.tsv");
  CHECK(text.rfind("lambda\ttau\tmetric\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 7);
}

TEST_CASE("decode file round trip") {
  const auto dir = testing::scratch_dir("decode_io");
  const std::vector<DecodedRecord> recs = {{0, "x = f ( y )", -1.25, -0.5, true}, {1, "", -3.0, -2.0, false}};
  write_decode_file(dir / "p.jsonl", recs);
  const auto back = read_decode_file(dir / "p.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[0].prediction == "x = f ( y )");
  CHECK(back[1].raw == -3.0);
  CHECK_FALSE(back[1].finished);
}

TEST_CASE("parallel corpus decoding is deterministic") {
  const auto& t = trained();
  const auto srcs = dev_sources();
  DecodeOptions o;
  o.beam_size = 5;
  o.max_len = 40;
  const auto a = decode_corpus(*t.model, t.tok, srcs, o);
  const auto b = decode_corpus(*t.model, t.tok, srcs, o);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].id == i);
    CHECK(a[i].prediction == b[i].prediction);
    CHECK(a[i].raw == b[i].raw);
  }
}
