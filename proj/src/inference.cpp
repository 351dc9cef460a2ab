#include "tae/inference.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "tae/trainer.hpp"

namespace tae {

double length_penalty(int length, double alpha) { return std::pow((5.0 + length) / 6.0, alpha); }

// --- scorers -----------------------------------------------------------------

Seq2SeqScorer::Seq2SeqScorer(const Seq2SeqModel<float>& model, std::span<const int> src)
    : model_(model), state_(model.encode(src)), memory_(model.prepare_memory(state_)) {}

std::vector<std::vector<double>> Seq2SeqScorer::run(std::span<const int> tokens) {
  std::vector<DecoderCache<float>*> ptrs;
  for (auto& c : caches_) ptrs.push_back(&c);
  const auto outs = model_.step(memory_, ptrs, tokens);
  std::vector<std::vector<double>> res;
  res.reserve(outs.size());
  for (const auto& o : outs) {
    auto p = output_distribution(o, state_.src_ids);
    for (auto& v : p) v = std::log(v);
    res.push_back(std::move(p));
  }
  return res;
}

std::vector<double> Seq2SeqScorer::start() {
  caches_.assign(1, model_.decoder().empty_cache());
  const int bos = special::bos;
  return run(std::span<const int>(&bos, 1)).front();
}

std::vector<std::vector<double>> Seq2SeqScorer::advance(std::span<const int> parents, std::span<const int> tokens) {
  std::vector<DecoderCache<float>> next;
  next.reserve(parents.size());
  for (int p : parents) next.push_back(caches_.at(static_cast<std::size_t>(p)));
  caches_ = std::move(next);
  return run(tokens);
}

void FusionConfig::validate() const {
  if (!(lambda >= 0.0)) throw std::invalid_argument("fusion lambda must be >= 0");
  if (!(tau > 0.0)) throw std::invalid_argument("fusion tau must be > 0");
}

std::vector<double> fused_logprob(std::span<const double> tm, std::span<const float> lm, const FusionConfig& f) {
  if (tm.size() != lm.size()) throw std::invalid_argument("fused_logprob: vocabulary sizes differ");
  f.validate();
  double mx = -std::numeric_limits<double>::infinity();
  for (float l : lm) mx = std::max(mx, static_cast<double>(l) / f.tau);
  double z = 0.0;
  for (float l : lm) z += std::exp(static_cast<double>(l) / f.tau - mx);
  const double lse = mx + std::log(z);
  std::vector<double> out(tm.size());
  for (std::size_t y = 0; y < tm.size(); ++y) out[y] = tm[y] + f.lambda * (static_cast<double>(lm[y]) / f.tau - lse);
  return out;
}

FusedScorer::FusedScorer(StepScorer& tm, const LanguageModel<float>& lm, FusionConfig fusion)
    : tm_(tm), lm_(lm), fusion_(fusion) {
  fusion_.validate();
  if (lm.config().vocab_size != tm.vocab_size()) throw std::invalid_argument("language model vocabulary differs");
}

std::vector<double> FusedScorer::start() {
  const auto tm = tm_.start();
  caches_.assign(1, lm_.empty_cache());
  std::vector<DecoderCache<float>*> ptrs{&caches_[0]};
  const int bos = special::bos;
  const auto logits = lm_.step(ptrs, std::span<const int>(&bos, 1));
  return fused_logprob(tm, logits, fusion_);
}

std::vector<std::vector<double>> FusedScorer::advance(std::span<const int> parents, std::span<const int> tokens) {
  const auto tm = tm_.advance(parents, tokens);
  std::vector<DecoderCache<float>> next;
  next.reserve(parents.size());
  for (int p : parents) next.push_back(caches_.at(static_cast<std::size_t>(p)));
  caches_ = std::move(next);
  std::vector<DecoderCache<float>*> ptrs;
  for (auto& c : caches_) ptrs.push_back(&c);
  const auto logits = lm_.step(ptrs, tokens);
  const auto vocab = static_cast<std::size_t>(vocab_size());
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < tm.size(); ++i)
    out.push_back(fused_logprob(tm[i], std::span<const float>(logits).subspan(i * vocab, vocab), fusion_));
  return out;
}

// --- search ------------------------------------------------------------------

namespace {

struct Candidate {
  double score;
  int token;
  int parent;
};

bool better(const Candidate& a, const Candidate& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.token != b.token) return a.token < b.token;
  return a.parent < b.parent;
}

bool ranks_before(const Hypothesis& a, const Hypothesis& b) {
  if (a.normalized != b.normalized) return a.normalized > b.normalized;
  if (a.tokens.size() != b.tokens.size()) return a.tokens.size() < b.tokens.size();
  return a.tokens < b.tokens;
}

}  // namespace

Hypothesis beam_search(StepScorer& scorer, const DecodeOptions& opts) {
  if (opts.beam_size < 1) throw std::invalid_argument("beam size must be >= 1");
  if (opts.max_len < 1) throw std::invalid_argument("max_len must be >= 1");
  const auto beam = static_cast<std::size_t>(opts.beam_size);
  const double lp_max = length_penalty(opts.max_len, opts.alpha);
  std::vector<Hypothesis> active(1);
  std::vector<std::vector<double>> dists{scorer.start()};
  std::vector<Hypothesis> finished;
  std::vector<Candidate> cands;
  for (int t = 1; t <= opts.max_len; ++t) {
    cands.clear();
    for (std::size_t i = 0; i < active.size(); ++i)
      for (std::size_t y = 0; y < dists[i].size(); ++y) {
        const double s = active[i].raw + dists[i][y];
        if (s > -std::numeric_limits<double>::infinity()) cands.push_back({s, static_cast<int>(y), static_cast<int>(i)});
      }
    const auto keep = std::min(beam, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<long>(keep), cands.end(), better);
    std::vector<Hypothesis> next;
    std::vector<int> parents, tokens;
    for (std::size_t c = 0; c < keep; ++c) {
      const auto& cd = cands[c];
      Hypothesis h;
      h.tokens = active[static_cast<std::size_t>(cd.parent)].tokens;
      h.tokens.push_back(cd.token);
      h.raw = cd.score;
      h.normalized = h.raw / length_penalty(static_cast<int>(h.tokens.size()), opts.alpha);
      if (cd.token == special::eos) {
        h.finished = true;
        finished.push_back(std::move(h));
      } else {
        parents.push_back(cd.parent);
        tokens.push_back(cd.token);
        next.push_back(std::move(h));
      }
    }
    active = std::move(next);
    if (active.empty() || t == opts.max_len) break;
    if (finished.size() >= beam) {
      std::sort(finished.begin(), finished.end(), ranks_before);
      const double worst = finished[beam - 1].normalized;
      double best_raw = -std::numeric_limits<double>::infinity();
      for (const auto& h : active) best_raw = std::max(best_raw, h.raw);
      if (best_raw / lp_max < worst) break;
    }
    dists = scorer.advance(parents, tokens);
  }
  if (!finished.empty()) return *std::min_element(finished.begin(), finished.end(), ranks_before);
  if (active.empty()) return Hypothesis{};
  return *std::min_element(active.begin(), active.end(), ranks_before);
}

TokenIds greedy_decode(StepScorer& scorer, int max_len) {
  TokenIds out;
  auto dist = scorer.start();
  for (int t = 1; t <= max_len; ++t) {
    const auto best = static_cast<int>(std::max_element(dist.begin(), dist.end()) - dist.begin());
    out.push_back(best);
    if (best == special::eos || t == max_len) break;
    const int parent = 0;
    dist = scorer.advance(std::span<const int>(&parent, 1), std::span<const int>(&best, 1)).front();
  }
  return out;
}

// --- language model training -----------------------------------------------------

LmTrainingResult train_lm(std::span<const TokenIds> corpus, const ModelConfig& cfg, const LmTrainConfig& train) {
  if (corpus.empty()) throw std::invalid_argument("train_lm: empty corpus");
  if (train.batch_size < 1 || train.epochs < 1 || !(train.lr > 0.0))
    throw std::invalid_argument("train_lm: invalid training settings");
  LmTrainingResult res;
  res.lm = std::make_unique<LanguageModel<float>>(cfg, derive_seed(train.seed, "lm_init"));
  auto& lm = *res.lm;
  Adam adam(lm.params());
  std::int64_t step = 0;
  const auto bsz = static_cast<std::size_t>(train.batch_size);
  for (int epoch = 1; epoch <= train.epochs; ++epoch) {
    const auto order = Rng(train.seed, "lm_order", static_cast<std::uint64_t>(epoch)).permutation(corpus.size());
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += bsz, ++step, ++batches) {
      lm.params().zero_grad();
      const std::size_t end = std::min(order.size(), start + bsz);
      for (std::size_t i = start; i < end; ++i) {
        Rng drop(train.seed, "lm_dropout", static_cast<std::uint64_t>(step), i - start);
        ForwardMode mode;
        mode.train = true;
        mode.dropout_rng = &drop;
        Tape<float> tape;
        Var loss = lm.loss(tape, corpus[order[i]], train.label_smoothing, mode);
        loss = ops::scale(tape, loss, 1.0f / static_cast<float>(end - start));
        total += tape.scalar(loss);
        tape.backward(loss);
      }
      adam.step(lm.params(), [&](const Parameter<float>&) { return train.lr; });
    }
    res.epoch_loss.push_back(total / static_cast<double>(batches));
  }
  return res;
}

// --- corpus decoding ---------------------------------------------------------

std::vector<DecodedRecord> decode_corpus(const Seq2SeqModel<float>& model, const SubwordModel& tokenizer,
                                         std::span<const TokenIds> sources, const DecodeOptions& opts,
                                         const LanguageModel<float>* lm, FusionConfig fusion) {
  DecodeOptions o = opts;
  o.max_len = std::min(o.max_len, model.config().max_positions);
  if (lm) o.max_len = std::min(o.max_len, lm->config().max_positions);
  std::vector<DecodedRecord> out(sources.size());
  const long n = static_cast<long>(sources.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (long i = 0; i < n; ++i) {
    Seq2SeqScorer tm(model, sources[static_cast<std::size_t>(i)]);
    Hypothesis h;
    if (lm) {
      FusedScorer fused(tm, *lm, fusion);
      h = beam_search(fused, o);
    } else {
      h = beam_search(tm, o);
    }
    auto& r = out[static_cast<std::size_t>(i)];
    r.id = static_cast<std::size_t>(i);
    r.prediction = tokenizer.decode(h.tokens);
    r.raw = h.raw;
    r.normalized = h.normalized;
    r.finished = h.finished;
  }
  return out;
}

void write_decode_file(const std::filesystem::path& path, std::span<const DecodedRecord> records) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  for (const auto& r : records)
    os << nlohmann::json{{"id", r.id},
                         {"prediction", r.prediction},
                         {"raw_score", r.raw},
                         {"normalized_score", r.normalized},
                         {"finished", r.finished}}
              .dump()
       << '\n';
}

std::vector<DecodedRecord> read_decode_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::vector<DecodedRecord> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    DecodedRecord r;
    r.id = j.at("id").get<std::size_t>();
    r.prediction = j.at("prediction").get<std::string>();
    r.raw = j.at("raw_score").get<double>();
    r.normalized = j.at("normalized_score").get<double>();
    r.finished = j.value("finished", true);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<SweepRow> fusion_sweep(const Seq2SeqModel<float>& model, const LanguageModel<float>& lm,
                                   const SubwordModel& tokenizer, std::span<const TokenIds> sources,
                                   std::span<const double> lambdas, std::span<const double> taus,
                                   const DecodeOptions& opts, const CorpusMetric& metric) {
  if (lambdas.empty() || taus.empty()) throw std::invalid_argument("fusion sweep grids must be nonempty");
  std::vector<SweepRow> rows;
  for (double l : lambdas)
    for (double t : taus) {
      const auto decoded = decode_corpus(model, tokenizer, sources, opts, &lm, FusionConfig{l, t});
      std::vector<std::string> preds;
      for (const auto& d : decoded) preds.push_back(d.prediction);
      rows.push_back({l, t, metric(preds)});
    }
  return rows;
}

void write_sweep_table(const std::filesystem::path& path, std::span<const SweepRow> rows) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "lambda\ttau\tmetric\n";
  for (const auto& r : rows) os << r.lambda << '\t' << r.tau << '\t' << r.metric << '\n';
}

}  // namespace tae
