#pragma once

// End-to-end jobs behind the command-line subcommands. Each job writes its
// artifacts, including a run manifest, under the configured out_dir.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "tae/config.hpp"
#include "tae/eval.hpp"
#include "tae/trainer.hpp"

namespace tae {

inline constexpr const char* kToolkitVersion = "1.0.0";

/// Digest over the bytes of every existing file, in order.
std::string content_digest(const std::vector<std::filesystem::path>& files);

/// Writes manifest.json and config.resolved; called before a job does work.
void write_manifest(const std::filesystem::path& dir, const std::string& command, const Config& cfg,
                    const std::vector<std::filesystem::path>& inputs, const std::vector<std::filesystem::path>& outputs);

struct ToyDataOptions {
  std::uint64_t seed = 1;
  int n_bitext = 200;
  int n_mono = 2000;
  int n_dev = 100;
  int n_test = 100;
};
/// labeled.jsonl, mono.jsonl, dev.jsonl, test.jsonl.
void run_gen_toy_data(const std::filesystem::path& out_dir, const ToyDataOptions& opts);

struct RunResult {
  EvalReport test;
  TrainingResult training;
  std::filesystem::path dir;
};

/// Trains per cfg["mode"], keeps the best-dev checkpoint, decodes the test
/// set with beam search and evaluates it.
RunResult run_train(const Config& cfg, std::ostream* progress = nullptr);

/// Checkpoint + parallel records -> predictions.jsonl (and report when the
/// records carry targets).
void run_decode(const Config& cfg, const std::filesystem::path& checkpoint, const std::filesystem::path& input,
                const std::filesystem::path& lm_checkpoint);

/// predictions.jsonl + gold parallel records -> report.json / report.txt.
EvalReport run_eval(const Config& cfg, const std::filesystem::path& predictions, const std::filesystem::path& gold);

/// Backward model + synthetic.jsonl for the monolingual file.
void run_backtranslate(const Config& cfg, std::ostream* progress = nullptr);

/// Trains (or loads) a language model on the monolingual file and writes
/// sweep.tsv of dev exact match over the lambda x tau grid.
std::vector<SweepRow> run_fuse_sweep(const Config& cfg, const std::filesystem::path& checkpoint,
                                     const std::filesystem::path& lm_checkpoint, std::ostream* progress = nullptr);

/// Runs every mode for every seed under out_dir/<mode>/seed<N>, then writes
/// comparison.txt and comparison.json.
SeedResults run_compare(const Config& cfg, const std::vector<std::string>& modes,
                        const std::vector<std::uint64_t>& seeds, std::ostream* progress = nullptr);

void save_language_model(const std::filesystem::path& path, const LanguageModel<float>& lm);
std::unique_ptr<LanguageModel<float>> load_language_model(const std::filesystem::path& path);

}  // namespace tae
