#pragma once

// Exact match, corpus BLEU, the copy / generation split of gold programs,
// multi-seed aggregation and a one-tailed Welch t-test.

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace tae {

/// Whitespace split, with every punctuation character (except '_') as its
/// own token.
std::vector<std::string> word_tokens(std::string_view text);

/// 1 iff the whitespace-separated token lists are identical.
int exact_match(std::string_view pred, std::string_view gold);

/// 4-gram corpus BLEU in [0, 100] with brevity penalty over word_tokens.
/// Zero n-gram match counts are replaced by `smoothing_eps` (add-epsilon),
/// orders without any hypothesis n-gram count as precision 1, and
/// a corpus without any unigram match scores 0.
double corpus_bleu(std::span<const std::string> preds, std::span<const std::string> golds,
                   double smoothing_eps = 0.1);

struct CopyGenerationSplit {
  std::vector<std::string> copy;
  std::vector<std::string> generation;
};

/// Gold tokens found in the source token multiset (each source occurrence
/// used at most once) go to `copy`, the rest to `generation`; both keep
/// gold order.
CopyGenerationSplit split_copy_generation(std::string_view source, std::string_view gold);

struct CopyGenerationBits {
  int copy = 0;
  int generation = 0;
};
CopyGenerationBits copy_generation_accuracy(std::string_view source, std::string_view pred, std::string_view gold);

struct Aggregate {
  std::size_t n = 0;
  double mean = 0.0;
  std::optional<double> std;  // sample standard deviation; absent for a single run
};
Aggregate aggregate(std::span<const double> runs);

struct ComparisonResult {
  Aggregate a, b;
  double t = 0.0;
  double df = 0.0;
  double p_value = 0.5;  // P(T >= t) for H1: mean_a > mean_b
};

/// Welch two-sample t-test, one-tailed for mean_a > mean_b. Needs >= 2 runs per side.
ComparisonResult aggregate_and_test(std::span<const double> runs_a, std::span<const double> runs_b);

struct EvalReport {
  std::vector<int> exact;  // per example
  // Rates in [0, 1]; BLEU in [0, 100].
  double exact_match = 0.0;
  double bleu = 0.0;
  double copy_accuracy = 0.0;
  double generation_accuracy = 0.0;
  std::size_t n = 0;
};

EvalReport evaluate(std::span<const std::string> sources, std::span<const std::string> preds,
                    std::span<const std::string> golds);

nlohmann::json to_json(const EvalReport& r);
std::string format_report(const EvalReport& r);

/// Per-mode metric arrays over seeds, e.g. results["tae"]["exact_match"].
using SeedResults = std::map<std::string, std::map<std::string, std::vector<double>>>;

/// Table of mean +- std per mode and metric, plus p-values of every mode
/// against the first one.
std::string format_comparison(const SeedResults& results, const std::vector<std::string>& modes);
nlohmann::json comparison_json(const SeedResults& results, const std::vector<std::string>& modes);

}  // namespace tae
