#pragma once

// Glue between text records and token-level training: encoding of record
// lists and the dev metrics used for early stopping.

#include <span>
#include <string>
#include <vector>

#include "tae/corpus.hpp"
#include "tae/inference.hpp"
#include "tae/tokenizer.hpp"
#include "tae/trainer.hpp"

namespace tae {

/// Encodes (source, target) pairs; with `reverse` the roles are swapped.
std::vector<EncodedPair> encode_pairs(const SubwordModel& tok, std::span<const ParallelExample> records,
                                      bool reverse = false);
/// Each program becomes a pair with itself as the source.
std::vector<EncodedPair> encode_autoencoding(const SubwordModel& tok, std::span<const MonolingualExample> records);
std::vector<TokenIds> encode_targets(const SubwordModel& tok, std::span<const MonolingualExample> records);

/// Throws if any sequence exceeds `max_positions`.
void check_lengths(std::span<const EncodedPair> pairs, int max_positions, const std::string& what);

/// Greedy exact-match rate of targets given sources.
DevMetric exact_match_metric(const SubwordModel& tok, std::span<const ParallelExample> dev, int max_len);
/// Greedy corpus BLEU of sources given targets (backward direction).
DevMetric backward_bleu_metric(const SubwordModel& tok, std::span<const ParallelExample> dev, int max_len);

/// Decoding step limit: longest target plus 8, and at least `floor`.
int decode_length_limit(std::span<const EncodedPair> pairs, int floor = 16);

}  // namespace tae
