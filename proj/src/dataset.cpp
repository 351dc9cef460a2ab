#include "tae/dataset.hpp"

#include <algorithm>
#include <stdexcept>

#include "tae/eval.hpp"

namespace tae {

std::vector<EncodedPair> encode_pairs(const SubwordModel& tok, std::span<const ParallelExample> records, bool reverse) {
  std::vector<EncodedPair> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    auto s = tok.encode(r.source), t = tok.encode(r.target);
    if (reverse) std::swap(s, t);
    out.push_back({std::move(s), std::move(t), r.synthetic});
  }
  return out;
}

std::vector<EncodedPair> encode_autoencoding(const SubwordModel& tok, std::span<const MonolingualExample> records) {
  std::vector<EncodedPair> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    auto t = tok.encode(r.target);
    out.push_back({t, t, false});
  }
  return out;
}

std::vector<TokenIds> encode_targets(const SubwordModel& tok, std::span<const MonolingualExample> records) {
  std::vector<TokenIds> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(tok.encode(r.target));
  return out;
}

void check_lengths(std::span<const EncodedPair> pairs, int max_positions, const std::string& what) {
  for (std::size_t i = 0; i < pairs.size(); ++i)
    if (static_cast<int>(std::max(pairs[i].src.size(), pairs[i].tgt.size())) > max_positions)
      throw std::length_error(what + " record " + std::to_string(i + 1) + " is longer than max_positions (" +
                              std::to_string(max_positions) + ")");
}

int decode_length_limit(std::span<const EncodedPair> pairs, int floor) {
  std::size_t longest = 0;
  for (const auto& p : pairs) longest = std::max(longest, p.tgt.size());
  return std::max(floor, static_cast<int>(longest) + 8);
}

namespace {

DevMetric greedy_metric(const SubwordModel& tok, std::span<const ParallelExample> dev, int max_len, bool reverse,
                        bool bleu) {
  std::vector<TokenIds> sources;
  std::vector<std::string> golds, src_text;
  for (const auto& r : dev) {
    sources.push_back(tok.encode(reverse ? r.target : r.source));
    golds.push_back(reverse ? r.source : r.target);
  }
  return [&tok, sources = std::move(sources), golds = std::move(golds), max_len, bleu](const Seq2SeqModel<float>& m) {
    if (sources.empty()) return 0.0;
    DecodeOptions o;
    o.beam_size = 1;
    o.max_len = max_len;
    const auto dec = decode_corpus(m, tok, sources, o);
    std::vector<std::string> preds;
    for (const auto& d : dec) preds.push_back(d.prediction);
    if (bleu) return corpus_bleu(preds, golds);
    double em = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) em += exact_match(preds[i], golds[i]);
    return em / static_cast<double>(preds.size());
  };
}

}  // namespace

DevMetric exact_match_metric(const SubwordModel& tok, std::span<const ParallelExample> dev, int max_len) {
  return greedy_metric(tok, dev, max_len, false, false);
}

DevMetric backward_bleu_metric(const SubwordModel& tok, std::span<const ParallelExample> dev, int max_len) {
  return greedy_metric(tok, dev, max_len, true, true);
}

}  // namespace tae
