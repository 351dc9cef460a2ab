#include "tae/augmentation.hpp"

#include "tae/dataset.hpp"
#include "tae/inference.hpp"

namespace tae {

TrainedModel train_backward(std::span<const ParallelExample> bitext, std::span<const ParallelExample> dev,
                            const SubwordModel& tok, const ModelConfig& model_cfg, const TrainConfig& cfg,
                            std::ostream* log) {
  const auto pairs = encode_pairs(tok, bitext, true);
  check_lengths(pairs, model_cfg.max_positions, "bitext");
  TrainConfig c = cfg;
  c.seed = derive_seed(cfg.seed, "backward");
  const auto metric = backward_bleu_metric(tok, dev, std::min(model_cfg.max_positions, decode_length_limit(pairs)));
  return train_seq2seq(model_cfg, c, pairs, {}, metric, log);
}

std::vector<ParallelExample> synthesize_sources(const Seq2SeqModel<float>& backward, const SubwordModel& tok,
                                                std::span<const MonolingualExample> mono, int max_len) {
  std::vector<TokenIds> srcs;
  srcs.reserve(mono.size());
  for (const auto& m : mono) srcs.push_back(tok.encode(m.target));
  DecodeOptions o;
  o.beam_size = 1;
  o.max_len = max_len;
  const auto dec = decode_corpus(backward, tok, srcs, o);
  std::vector<ParallelExample> out;
  out.reserve(mono.size());
  for (std::size_t i = 0; i < mono.size(); ++i) out.push_back({dec[i].prediction, mono[i].target, mono[i].str_map, true});
  return out;
}

TrainedModel merge_and_train(std::span<const ParallelExample> bitext, std::span<const ParallelExample> synthetic,
                             std::span<const ParallelExample> dev, const SubwordModel& tok,
                             const ModelConfig& model_cfg, const TrainConfig& cfg, std::ostream* log) {
  std::vector<ParallelExample> merged(bitext.begin(), bitext.end());
  merged.insert(merged.end(), synthetic.begin(), synthetic.end());
  const auto pairs = encode_pairs(tok, merged);
  check_lengths(pairs, model_cfg.max_positions, "merged bitext");
  const int limit = decode_length_limit(encode_pairs(tok, bitext));
  const auto metric = exact_match_metric(tok, dev, std::min(model_cfg.max_positions, limit));
  return train_seq2seq(model_cfg, cfg, pairs, {}, metric, log);
}

}  // namespace tae
