#pragma once

// Parallel / monolingual records, the preprocessing rules applied to program
// text, low-resource splitting and the synthetic toy corpus.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace tae {

/// Ordered (placeholder, original quoted literal) pairs, e.g. ("str0", "\"a\"").
using StrMap = std::vector<std::pair<std::string, std::string>>;

struct ParallelExample {
  std::string source;
  std::string target;
  StrMap str_map;
  bool synthetic = false;

  bool operator==(const ParallelExample&) const = default;
};

struct MonolingualExample {
  std::string target;
  StrMap str_map;

  bool operator==(const MonolingualExample&) const = default;
};

struct CorpusSplit {
  std::vector<ParallelExample> labeled;
  std::vector<MonolingualExample> monolingual;
  std::vector<ParallelExample> dev;
  std::vector<ParallelExample> test;
};

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Word used for the dummy-source ablation; the tokenizer maps it to ZERO.
inline constexpr std::string_view kZeroWord = "<zero>";

// Record files: one JSON object per line.
std::vector<ParallelExample> load_parallel(const std::filesystem::path& path);
std::vector<MonolingualExample> load_monolingual(const std::filesystem::path& path);
void save_parallel(const std::filesystem::path& path, const std::vector<ParallelExample>& records);
void save_monolingual(const std::filesystem::path& path,
                      const std::vector<MonolingualExample>& records);

/// Parses one record line; `line_no` is only used in error messages.
ParallelExample parse_parallel_record(std::string_view line, std::size_t line_no);
MonolingualExample parse_monolingual_record(std::string_view line, std::size_t line_no);
std::string format_record(const ParallelExample& ex);
std::string format_record(const MonolingualExample& ex);

struct Anonymized {
  std::string code;
  StrMap str_map;
};

/// Replaces each quoted literal, left to right, with 'str0', 'str1', ...
/// Quotes are matched pairwise without escape handling.
Anonymized anonymize_strings(std::string_view code);
/// Exact inverse of anonymize_strings.
std::string deanonymize(std::string_view code, const StrMap& str_map);

/// Newlines become '#', camel-case words are split at lower-to-upper
/// boundaries and punctuation characters become standalone tokens.
std::string normalize_java(std::string_view code);

struct LowResourceSplit {
  std::vector<ParallelExample> labeled;
  std::vector<MonolingualExample> monolingual;
};

/// Keeps round(fraction * |bitext|) seeded-random labeled pairs (in original
/// order) and turns every target of the bitext into a monolingual record.
LowResourceSplit make_low_resource_split(const std::vector<ParallelExample>& bitext,
                                         double fraction, std::uint64_t seed);

/// Pairs each program with a source of 1..max_len zero words.
std::vector<ParallelExample> attach_dummy_sources(const std::vector<MonolingualExample>& mono,
                                                  std::uint64_t seed, int max_len);

/// Deterministic templated corpus of English commands and short programs.
/// Labeled pairs use a small identifier pool; monolingual, dev and test
/// programs draw from a larger pool that contains it.
CorpusSplit generate_toy_dataset(std::uint64_t seed, int n_bitext, int n_mono, int n_dev,
                                 int n_test);

/// Closed set of program tokens that the toy generator emits without them
/// appearing in the source.
const std::vector<std::string>& toy_keywords();

}  // namespace tae
