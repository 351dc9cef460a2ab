#include <doctest.h>

#include <json.hpp>

#include "support.hpp"
#include "tae/cli.hpp"
#include "tae/config.hpp"
#include "tae/corpus.hpp"

using namespace tae;
namespace fs = std::filesystem;

namespace {

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "tae");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

// Small enough to train in about a second.
std::vector<std::string> tiny_flags(const fs::path& data, const fs::path& out) {
  return {"--labeled", (data / "labeled.jsonl").string(), "--dev", (data / "dev.jsonl").string(),
          "--test", (data / "test.jsonl").string(), "--out-dir", out.string(),
          "--d-model", "16", "--n-heads", "2", "--encoder-layers", "1", "--decoder-layers", "1",
          "--ff-dim", "32", "--vocab-size", "200", "--max-epochs", "2", "--beam-size", "2", "--max-len", "32"};
}

const fs::path& toy_data() {
  static const fs::path dir = [] {
    const auto d = testing::scratch_dir("cli_data");
    REQUIRE(cli({"gen-toy-data", "--out-dir", d.string(), "--n-bitext", "20", "--n-mono", "20", "--n-dev", "5",
                 "--n-test", "5"}) == exit_code::ok);
    return d;
  }();
  return dir;
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("usage errors exit with status 2") {
  CHECK(cli({"train", "--no-such-flag", "1"}) == exit_code::usage);
  CHECK(cli({}) == exit_code::usage);
  CHECK(cli({"frobnicate"}) == exit_code::usage);
  CHECK(cli({"decode", "--input", "x"}) == exit_code::usage);  // --checkpoint is required
}

TEST_CASE("missing inputs exit with status 3") {
  const auto out = testing::scratch_dir("cli_missing");
  CHECK(cli({"train", "--labeled", (out / "nope.jsonl").string(), "--dev", "a", "--test", "b", "--out-dir",
             out.string()}) == exit_code::missing_input);
  CHECK(cli({"train", "--out-dir", out.string()}) == exit_code::missing_input);
  CHECK(cli({"decode", "--checkpoint", (out / "none.ckpt").string(), "--input", "x", "--out-dir", out.string()}) ==
        exit_code::missing_input);
}

TEST_CASE("configuration conflicts exit with status 4") {
  const auto out = testing::scratch_dir("cli_conflict");
  CHECK(cli(concat({"train", "--mode", "tae"}, tiny_flags(toy_data(), out))) == exit_code::config_conflict);
  CHECK(cli(concat({"train", "--mode", "bogus"}, tiny_flags(toy_data(), out))) == exit_code::config_conflict);
  CHECK(cli(concat({"train", "--preset", "huge"}, tiny_flags(toy_data(), out))) == exit_code::config_conflict);
  CHECK(cli(concat({"train", "--dropout", "abc"}, tiny_flags(toy_data(), out))) == exit_code::config_conflict);
}

TEST_CASE("baseline training needs no monolingual data and writes a manifest") {
  const auto out = testing::scratch_dir("cli_train");
  REQUIRE(cli(concat({"train", "--mode", "baseline", "--seed", "3"}, tiny_flags(toy_data(), out))) == exit_code::ok);
  for (const char* f : {"manifest.json", "config.resolved", "vocab.txt", "model.ckpt", "predictions.jsonl",
                        "report.json", "report.txt", "train_log.jsonl"})
    CHECK_MESSAGE(fs::exists(out / f), f);
  const auto m = nlohmann::json::parse(testing::read_file(out / "manifest.json"));
  CHECK(m["command"] == "train");
  CHECK(m["seed"] == "3");
  CHECK(m["config"]["d_model"] == "16");
  CHECK(m["corpus_digest"].get<std::string>().size() == 16);
  CHECK(m.contains("toolkit_version"));

  // Decode and evaluate with the trained checkpoint.
  const auto dec = testing::scratch_dir("cli_decode");
  REQUIRE(cli({"decode", "--checkpoint", (out / "model.ckpt").string(), "--input",
               (toy_data() / "test.jsonl").string(), "--out-dir", dec.string(), "--beam-size", "2", "--max-len",
               "32"}) == exit_code::ok);
  CHECK(testing::content_equal(dec / "predictions.jsonl", out / "predictions.jsonl"));
  const auto ev = testing::scratch_dir("cli_eval");
  CHECK(cli({"eval", "--predictions", (dec / "predictions.jsonl").string(), "--gold",
             (toy_data() / "test.jsonl").string(), "--out-dir", ev.string()}) == exit_code::ok);
  CHECK(fs::exists(ev / "report.json"));
}

TEST_CASE("flags override the config file, which overrides the preset") {
  const auto dir = testing::scratch_dir("cli_precedence");
  {
    std::ofstream os(dir / "run.cfg");
    os << "# test config\nd_model = 24\nn_heads = 2\nseed=9\n";
  }
  const auto c = Config::resolve(parse_config_file(dir / "run.cfg"), {{"d_model", "32"}});
  CHECK(c.integer("d_model") == 32);
  CHECK(c.integer("n_heads") == 2);
  CHECK(c.u64("seed") == 9);
  CHECK(c.str("preset") == "toy");
  CHECK(c.real("decoder_lr") == Config::defaults("toy").real("decoder_lr"));
  const auto p = Config::resolve({{"preset", "paper"}}, {});
  CHECK(p.real("encoder_lr") == 1e-5);
  CHECK(p.real("decoder_lr") == 7.5e-5);
  CHECK_THROWS_AS(parse_config_text("no_such_key = 1\n"), ConfigConflict);
  CHECK_THROWS(parse_config_text("missing equals\n"));
  CHECK_THROWS_AS(Config::resolve({}, {}).boolean("d_model"), ConfigConflict);

  const auto out = dir / "out";
  auto args = concat({"train", "--config", (dir / "run.cfg").string()}, tiny_flags(toy_data(), out));
  REQUIRE(cli(args) == exit_code::ok);
  const auto resolved = parse_config_text(testing::read_file(out / "config.resolved"));
  CHECK(resolved.at("d_model") == "16");  // flag beats the file's 24
  CHECK(resolved.at("seed") == "9");      // file beats the preset
}

TEST_CASE("compare writes a table with one row per mode") {
  const auto out = testing::scratch_dir("cli_compare");
  auto args = concat({"compare", "--modes", "baseline,tae", "--seeds", "2", "--mono",
                      (toy_data() / "mono.jsonl").string()},
                     tiny_flags(toy_data(), out));
  REQUIRE(cli(args) == exit_code::ok);
  const auto table = testing::read_file(out / "comparison.txt");
  std::vector<std::string> lines;
  std::stringstream ss(table);
  for (std::string l; std::getline(ss, l);)
    if (!l.empty()) lines.push_back(l);
  REQUIRE(lines.size() == 3);
  CHECK(lines[0].rfind("mode", 0) == 0);
  CHECK(lines[1].rfind("baseline", 0) == 0);
  CHECK(lines[2].rfind("tae", 0) == 0);
  CHECK(lines[1].find("+-") != std::string::npos);
  for (const char* run : {"baseline/seed1", "baseline/seed2", "tae/seed1", "tae/seed2"})
    CHECK_MESSAGE(fs::exists(out / run / "report.json"), run);
  const auto j = nlohmann::json::parse(testing::read_file(out / "comparison.json"));
  CHECK(j.is_object());
}

TEST_CASE("backtranslation, fusion sweep and the other training modes") {
  const auto mono = (toy_data() / "mono.jsonl").string();
  const auto bt = testing::scratch_dir("cli_bt");
  REQUIRE(cli(concat({"backtranslate", "--mono", mono}, tiny_flags(toy_data(), bt))) == exit_code::ok);
  CHECK(fs::exists(bt / "backward.ckpt"));
  const auto synthetic = load_parallel(bt / "synthetic.jsonl");
  CHECK(synthetic.size() == load_monolingual(mono).size());

  fs::path bt_run;
  for (const char* mode : {"backtranslation", "dummy-source", "tae-nofreeze"}) {
    const auto out = testing::scratch_dir(std::string("cli_mode_") + mode);
    if (bt_run.empty()) bt_run = out;
    CHECK_MESSAGE(cli(concat({"train", "--mode", mode, "--mono", mono}, tiny_flags(toy_data(), out))) == exit_code::ok,
                  mode);
    CHECK(fs::exists(out / "report.json"));
  }
  CHECK(fs::exists(bt_run / "synthetic.jsonl"));

  const auto train_dir = testing::scratch_dir("cli_sweep_model");
  REQUIRE(cli(concat({"train"}, tiny_flags(toy_data(), train_dir))) == exit_code::ok);
  const auto sweep = testing::scratch_dir("cli_sweep");
  const std::vector<std::string> args = {"fuse-sweep", "--checkpoint", (train_dir / "model.ckpt").string(),
                                         "--mono", mono, "--dev", (toy_data() / "dev.jsonl").string(),
                                         "--out-dir", sweep.string(), "--lm-epochs", "2", "--lm-layers", "1",
                                         "--lambdas", "0,0.5", "--taus", "1,2", "--beam-size", "2", "--max-len", "32"};
  REQUIRE(cli(args) == exit_code::ok);
  const auto tsv = testing::read_file(sweep / "sweep.tsv");
  CHECK(std::count(tsv.begin(), tsv.end(), '\n') == 5);
  CHECK(fs::exists(sweep / "lm.ckpt"));
  // The saved language model can be reused for fused decoding.
  const auto dec = testing::scratch_dir("cli_fused_decode");
  CHECK(cli({"decode", "--checkpoint", (train_dir / "model.ckpt").string(), "--input",
             (toy_data() / "dev.jsonl").string(), "--lm-checkpoint", (sweep / "lm.ckpt").string(), "--lambda", "0.3",
             "--tau", "2", "--out-dir", dec.string(), "--beam-size", "2", "--max-len", "32"}) == exit_code::ok);
  CHECK(cli({"fuse-sweep", "--checkpoint", (train_dir / "model.ckpt").string(), "--dev",
             (toy_data() / "dev.jsonl").string(), "--out-dir", sweep.string()}) == exit_code::config_conflict);
}
