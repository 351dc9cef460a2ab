#pragma once

// Back-translation: a code -> utterance model with the forward architecture
// synthesizes sources for monolingual programs, which are merged with the
// bitext to train a forward model.

#include <iosfwd>
#include <span>
#include <vector>

#include "tae/corpus.hpp"
#include "tae/model.hpp"
#include "tae/tokenizer.hpp"
#include "tae/trainer.hpp"

namespace tae {

/// Trains target -> source, early-stopping on greedy dev BLEU.
TrainedModel train_backward(std::span<const ParallelExample> bitext, std::span<const ParallelExample> dev,
                            const SubwordModel& tok, const ModelConfig& model_cfg, const TrainConfig& cfg,
                            std::ostream* log = nullptr);

/// One greedy utterance per program, in order, flagged synthetic.
std::vector<ParallelExample> synthesize_sources(const Seq2SeqModel<float>& backward, const SubwordModel& tok,
                                                std::span<const MonolingualExample> mono, int max_len);

/// Forward training on bitext followed by the synthetic pairs (their loss
/// weight is cfg.synthetic_weight).
TrainedModel merge_and_train(std::span<const ParallelExample> bitext, std::span<const ParallelExample> synthetic,
                             std::span<const ParallelExample> dev, const SubwordModel& tok,
                             const ModelConfig& model_cfg, const TrainConfig& cfg, std::ostream* log = nullptr);

}  // namespace tae
