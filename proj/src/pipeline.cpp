#include "tae/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "tae/augmentation.hpp"
#include "tae/checkpoint.hpp"
#include "tae/corpus.hpp"
#include "tae/dataset.hpp"
#include "tae/kernels.hpp"

namespace tae {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string> kModes = {"baseline", "tae", "tae-nofreeze", "dummy-source", "backtranslation"};

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << text;
}

fs::path require_file(const Config& cfg, const std::string& key) {
  const auto& v = cfg.str(key);
  if (v.empty()) throw MissingInput("no " + key + " file given (--" + key + ")");
  if (!fs::is_regular_file(v)) throw MissingInput(key + " file not found: " + v);
  return v;
}

fs::path require_path(const fs::path& p, const std::string& what) {
  if (p.empty()) throw MissingInput("no " + what + " given");
  if (!fs::is_regular_file(p)) throw MissingInput(what + " not found: " + p.string());
  return p;
}

void apply_threads(const Config& cfg) {
  if (const int t = cfg.integer("threads"); t > 0) kernels::set_threads(t);
}

void say(std::ostream* os, const std::string& msg) {
  if (os) *os << msg << std::endl;
}

SubwordModel train_tokenizer(const Config& cfg, const std::vector<ParallelExample>& labeled,
                             const std::vector<MonolingualExample>& mono) {
  std::vector<std::string> texts;
  for (const auto& e : labeled) {
    texts.push_back(e.source);
    texts.push_back(e.target);
  }
  for (const auto& m : mono) texts.push_back(m.target);
  return SubwordModel::train(texts, cfg.integer("vocab_size"));
}

ModelConfig model_config(const Config& cfg, const SubwordModel& tok) {
  auto m = cfg.model();
  m.vocab_size = tok.size();
  return m;
}

json report_json(const EvalReport& r, const Config& cfg, const TrainingResult* tr) {
  json j = to_json(r);
  j["mode"] = cfg.str("mode");
  j["seed"] = cfg.u64("seed");
  if (tr) {
    j["best_epoch"] = tr->best_epoch;
    j["best_dev_exact_match"] = tr->best_dev;
    j["epochs_run"] = tr->log.size();
    j["steps"] = tr->steps;
  }
  return j;
}

EvalReport evaluate_records(const std::vector<ParallelExample>& gold, const std::vector<DecodedRecord>& decoded) {
  std::vector<std::string> srcs, preds, golds;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    srcs.push_back(gold[i].source);
    golds.push_back(gold[i].target);
    preds.push_back(decoded.at(i).prediction);
  }
  return evaluate(srcs, preds, golds);
}

}  // namespace

std::string content_digest(const std::vector<fs::path>& files) {
  std::uint64_t h = fnv1a("");
  for (const auto& f : files) {
    if (f.empty() || !fs::is_regular_file(f)) continue;
    h = fnv1a(read_file(f), h);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_manifest(const fs::path& dir, const std::string& command, const Config& cfg,
                    const std::vector<fs::path>& inputs, const std::vector<fs::path>& outputs) {
  fs::create_directories(dir);
  json j;
  j["command"] = command;
  j["toolkit_version"] = kToolkitVersion;
  j["seed"] = cfg.str("seed");
  j["config"] = cfg.values();
  auto& in = j["inputs"] = json::array();
  for (const auto& p : inputs) in.push_back(p.string());
  auto& out = j["outputs"] = json::array();
  for (const auto& p : outputs) out.push_back(p.string());
  j["corpus_digest"] = content_digest(inputs);
  write_text(dir / "manifest.json", j.dump(2) + "\n");
  write_text(dir / "config.resolved", cfg.dump());
}

void run_gen_toy_data(const fs::path& out_dir, const ToyDataOptions& o) {
  fs::create_directories(out_dir);
  json j{{"command", "gen-toy-data"},
         {"toolkit_version", kToolkitVersion},
         {"seed", o.seed},
         {"config", {{"n_bitext", o.n_bitext}, {"n_mono", o.n_mono}, {"n_dev", o.n_dev}, {"n_test", o.n_test}}},
         {"outputs", {"labeled.jsonl", "mono.jsonl", "dev.jsonl", "test.jsonl"}}};
  write_text(out_dir / "manifest.json", j.dump(2) + "\n");
  const auto split = generate_toy_dataset(o.seed, o.n_bitext, o.n_mono, o.n_dev, o.n_test);
  save_parallel(out_dir / "labeled.jsonl", split.labeled);
  save_monolingual(out_dir / "mono.jsonl", split.monolingual);
  save_parallel(out_dir / "dev.jsonl", split.dev);
  save_parallel(out_dir / "test.jsonl", split.test);
}

RunResult run_train(const Config& cfg, std::ostream* progress) {
  const auto mode = cfg.str("mode");
  if (std::find(kModes.begin(), kModes.end(), mode) == kModes.end())
    throw ConfigConflict("unknown training mode '" + mode + "'");
  const bool needs_mono = mode != "baseline";
  if (needs_mono && cfg.str("mono").empty())
    throw ConfigConflict("mode " + mode + " needs a monolingual file (--mono)");
  cfg.model();  // validate before touching any file
  const auto train_cfg = cfg.train();
  const auto decode_opts = cfg.decode();
  const auto labeled_path = require_file(cfg, "labeled");
  const auto dev_path = require_file(cfg, "dev");
  const auto test_path = require_file(cfg, "test");
  fs::path mono_path;
  if (!cfg.str("mono").empty()) mono_path = require_file(cfg, "mono");

  const fs::path dir = cfg.str("out_dir");
  std::vector<fs::path> outputs = {"vocab.txt", "train_log.jsonl", "model.ckpt", "predictions.jsonl", "report.json",
                                   "report.txt"};
  if (mode == "backtranslation")
    for (const char* p : {"backward.ckpt", "backward_log.jsonl", "synthetic.jsonl"}) outputs.emplace_back(p);
  write_manifest(dir, "train", cfg, {labeled_path, mono_path, dev_path, test_path}, outputs);
  apply_threads(cfg);

  const auto labeled = load_parallel(labeled_path);
  const auto dev = load_parallel(dev_path);
  const auto test = load_parallel(test_path);
  std::vector<MonolingualExample> mono;
  if (!mono_path.empty()) mono = load_monolingual(mono_path);
  if (labeled.empty()) throw ConfigConflict("labeled file is empty");
  if (needs_mono && mono.empty()) throw ConfigConflict("mode " + mode + " needs a nonempty monolingual file");

  const auto tok = train_tokenizer(cfg, labeled, mono);
  tok.save(dir / "vocab.txt");
  const auto mc = model_config(cfg, tok);
  const auto labeled_pairs = encode_pairs(tok, labeled);
  check_lengths(labeled_pairs, mc.max_positions, "labeled");
  const int dev_len = std::min(mc.max_positions, decode_length_limit(labeled_pairs));
  const auto dev_metric = exact_match_metric(tok, dev, dev_len);
  say(progress, "[" + mode + " seed " + cfg.str("seed") + "] vocabulary " + std::to_string(tok.size()) + ", " +
                    std::to_string(labeled.size()) + " labeled, " + std::to_string(mono.size()) + " monolingual");

  std::ofstream log(dir / "train_log.jsonl", std::ios::trunc);
  TrainedModel trained;
  if (mode == "baseline") {
    trained = train_seq2seq(mc, train_cfg, labeled_pairs, {}, dev_metric, &log);
  } else if (mode == "tae" || mode == "tae-nofreeze") {
    const auto mono_pairs = encode_autoencoding(tok, mono);
    check_lengths(mono_pairs, mc.max_positions, "monolingual");
    trained = train_seq2seq(mc, train_cfg, labeled_pairs, mono_pairs, dev_metric, &log);
  } else if (mode == "dummy-source") {
    const auto dummy = attach_dummy_sources(mono, derive_seed(train_cfg.seed, "dummy_lengths"),
                                            cfg.integer("dummy_max_len"));
    const auto mono_pairs = encode_pairs(tok, dummy);
    check_lengths(mono_pairs, mc.max_positions, "dummy-source");
    trained = train_seq2seq(mc, train_cfg, labeled_pairs, mono_pairs, dev_metric, &log);
  } else {
    std::ofstream blog(dir / "backward_log.jsonl", std::ios::trunc);
    auto backward = train_backward(labeled, dev, tok, mc, train_cfg, &blog);
    save_model(dir / "backward.ckpt", *backward.model, tok, {{"direction", "backward"}});
    int src_len = 16;
    for (const auto& e : labeled) src_len = std::max(src_len, static_cast<int>(tok.encode(e.source).size()) + 8);
    const auto synthetic = synthesize_sources(*backward.model, tok, mono, std::min(mc.max_positions, src_len));
    save_parallel(dir / "synthetic.jsonl", synthetic);
    say(progress, "[" + mode + "] backward dev BLEU " + std::to_string(backward.result.best_dev) + ", " +
                      std::to_string(synthetic.size()) + " synthetic pairs");
    trained = merge_and_train(labeled, synthetic, dev, tok, mc, train_cfg, &log);
  }
  save_model(dir / "model.ckpt", *trained.model, tok, {{"mode", mode}, {"seed", train_cfg.seed}});

  std::vector<TokenIds> srcs;
  for (const auto& e : test) srcs.push_back(tok.encode(e.source));
  const auto decoded = decode_corpus(*trained.model, tok, srcs, decode_opts);
  write_decode_file(dir / "predictions.jsonl", decoded);
  RunResult res;
  res.test = evaluate_records(test, decoded);
  res.training = std::move(trained.result);
  res.dir = dir;
  write_text(dir / "report.json", report_json(res.test, cfg, &res.training).dump(2) + "\n");
  write_text(dir / "report.txt", format_report(res.test));
  say(progress, "[" + mode + " seed " + cfg.str("seed") + "] best dev EM " + std::to_string(res.training.best_dev) +
                    " at epoch " + std::to_string(res.training.best_epoch) + "; test EM " +
                    std::to_string(res.test.exact_match));
  return res;
}

void run_decode(const Config& cfg, const fs::path& checkpoint, const fs::path& input, const fs::path& lm_checkpoint) {
  require_path(checkpoint, "checkpoint");
  require_path(input, "input records");
  if (!lm_checkpoint.empty()) require_path(lm_checkpoint, "language model checkpoint");
  const fs::path dir = cfg.str("out_dir");
  write_manifest(dir, "decode", cfg, {checkpoint, input, lm_checkpoint}, {"predictions.jsonl", "report.json"});
  apply_threads(cfg);
  const auto loaded = load_model(checkpoint);
  const auto records = load_parallel(input);
  std::vector<TokenIds> srcs;
  for (const auto& e : records) srcs.push_back(loaded.tokenizer.encode(e.source));
  std::unique_ptr<LanguageModel<float>> lm;
  if (!lm_checkpoint.empty()) lm = load_language_model(lm_checkpoint);
  const auto decoded = decode_corpus(*loaded.model, loaded.tokenizer, srcs, cfg.decode(), lm.get(), cfg.fusion());
  write_decode_file(dir / "predictions.jsonl", decoded);
  const auto report = evaluate_records(records, decoded);
  write_text(dir / "report.json", report_json(report, cfg, nullptr).dump(2) + "\n");
  write_text(dir / "report.txt", format_report(report));
}

EvalReport run_eval(const Config& cfg, const fs::path& predictions, const fs::path& gold) {
  require_path(predictions, "predictions file");
  require_path(gold, "gold records");
  const fs::path dir = cfg.str("out_dir");
  write_manifest(dir, "eval", cfg, {predictions, gold}, {"report.json", "report.txt"});
  const auto decoded = read_decode_file(predictions);
  const auto records = load_parallel(gold);
  if (decoded.size() != records.size())
    throw ConfigConflict("predictions (" + std::to_string(decoded.size()) + ") and gold records (" +
                         std::to_string(records.size()) + ") differ in count");
  const auto report = evaluate_records(records, decoded);
  write_text(dir / "report.json", report_json(report, cfg, nullptr).dump(2) + "\n");
  write_text(dir / "report.txt", format_report(report));
  return report;
}

void run_backtranslate(const Config& cfg, std::ostream* progress) {
  if (cfg.str("mono").empty()) throw ConfigConflict("backtranslate needs a monolingual file (--mono)");
  const auto labeled_path = require_file(cfg, "labeled");
  const auto dev_path = require_file(cfg, "dev");
  const auto mono_path = require_file(cfg, "mono");
  const fs::path dir = cfg.str("out_dir");
  write_manifest(dir, "backtranslate", cfg, {labeled_path, mono_path, dev_path},
                 {"vocab.txt", "backward.ckpt", "backward_log.jsonl", "synthetic.jsonl"});
  apply_threads(cfg);
  const auto labeled = load_parallel(labeled_path);
  const auto dev = load_parallel(dev_path);
  const auto mono = load_monolingual(mono_path);
  const auto tok = train_tokenizer(cfg, labeled, mono);
  tok.save(dir / "vocab.txt");
  const auto mc = model_config(cfg, tok);
  std::ofstream blog(dir / "backward_log.jsonl", std::ios::trunc);
  auto backward = train_backward(labeled, dev, tok, mc, cfg.train(), &blog);
  save_model(dir / "backward.ckpt", *backward.model, tok, {{"direction", "backward"}});
  int src_len = 16;
  for (const auto& e : labeled) src_len = std::max(src_len, static_cast<int>(tok.encode(e.source).size()) + 8);
  const auto synthetic = synthesize_sources(*backward.model, tok, mono, std::min(mc.max_positions, src_len));
  save_parallel(dir / "synthetic.jsonl", synthetic);
  say(progress, "backward dev BLEU " + std::to_string(backward.result.best_dev) + ", " +
                    std::to_string(synthetic.size()) + " synthetic pairs");
}

void save_language_model(const fs::path& path, const LanguageModel<float>& lm) {
  save_checkpoint(path, lm.params(), {{"kind", "lm"}, {"model", to_json(lm.config())}});
}

std::unique_ptr<LanguageModel<float>> load_language_model(const fs::path& path) {
  const auto ck = load_checkpoint(path);
  if (ck.meta.value("kind", "") != "lm") throw std::runtime_error(path.string() + " is not a language model checkpoint");
  auto lm = std::make_unique<LanguageModel<float>>(model_config_from_json(ck.meta.at("model")), 0);
  apply_checkpoint(ck, lm->params());
  return lm;
}

std::vector<SweepRow> run_fuse_sweep(const Config& cfg, const fs::path& checkpoint, const fs::path& lm_checkpoint,
                                     std::ostream* progress) {
  require_path(checkpoint, "checkpoint");
  const auto dev_path = require_file(cfg, "dev");
  fs::path mono_path;
  if (lm_checkpoint.empty()) {
    if (cfg.str("mono").empty()) throw ConfigConflict("fuse-sweep needs --mono or --lm-checkpoint");
    mono_path = require_file(cfg, "mono");
  } else {
    require_path(lm_checkpoint, "language model checkpoint");
  }
  const fs::path dir = cfg.str("out_dir");
  write_manifest(dir, "fuse-sweep", cfg, {checkpoint, lm_checkpoint, mono_path, dev_path}, {"lm.ckpt", "sweep.tsv", "sweep.json"});
  apply_threads(cfg);
  const auto loaded = load_model(checkpoint);
  const auto& tok = loaded.tokenizer;
  std::unique_ptr<LanguageModel<float>> lm;
  json meta;
  if (lm_checkpoint.empty()) {
    auto lc = loaded.model->config();
    lc.decoder_layers = cfg.integer("lm_layers");
    const auto corpus = encode_targets(tok, load_monolingual(mono_path));
    auto trained = train_lm(corpus, lc, cfg.lm());
    meta["lm_epoch_loss"] = trained.epoch_loss;
    lm = std::move(trained.lm);
    save_language_model(dir / "lm.ckpt", *lm);
    say(progress, "language model trained, final epoch loss " + std::to_string(trained.epoch_loss.back()));
  } else {
    lm = load_language_model(lm_checkpoint);
  }
  const auto dev = load_parallel(dev_path);
  std::vector<TokenIds> srcs;
  std::vector<std::string> golds;
  for (const auto& e : dev) {
    srcs.push_back(tok.encode(e.source));
    golds.push_back(e.target);
  }
  const CorpusMetric metric = [&golds](const std::vector<std::string>& preds) {
    double em = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) em += exact_match(preds[i], golds[i]);
    return preds.empty() ? 0.0 : em / static_cast<double>(preds.size());
  };
  const auto opts = cfg.decode();
  std::vector<std::string> base_preds;
  for (const auto& d : decode_corpus(*loaded.model, tok, srcs, opts)) base_preds.push_back(d.prediction);
  const double baseline = metric(base_preds);
  const auto lambdas = cfg.reals("lambdas");
  const auto taus = cfg.reals("taus");
  const auto rows = fusion_sweep(*loaded.model, *lm, tok, srcs, lambdas, taus, opts, metric);
  write_sweep_table(dir / "sweep.tsv", rows);
  meta["unfused_metric"] = baseline;
  auto& arr = meta["rows"] = json::array();
  for (const auto& r : rows) arr.push_back({{"lambda", r.lambda}, {"tau", r.tau}, {"metric", r.metric}});
  write_text(dir / "sweep.json", meta.dump(2) + "\n");
  return rows;
}

SeedResults run_compare(const Config& cfg, const std::vector<std::string>& modes,
                        const std::vector<std::uint64_t>& seeds, std::ostream* progress) {
  if (modes.empty() || seeds.empty()) throw ConfigConflict("compare needs at least one mode and one seed");
  for (const auto& m : modes)
    if (std::find(kModes.begin(), kModes.end(), m) == kModes.end()) throw ConfigConflict("unknown training mode '" + m + "'");
  const fs::path dir = cfg.str("out_dir");
  write_manifest(dir, "compare", cfg,
                 {cfg.str("labeled"), cfg.str("mono"), cfg.str("dev"), cfg.str("test")},
                 {"comparison.txt", "comparison.json"});
  SeedResults results;
  for (const auto& mode : modes)
    for (const auto seed : seeds) {
      Config c = cfg;
      c.set("mode", mode);
      c.set("seed", std::to_string(seed));
      c.set("out_dir", (dir / mode / ("seed" + std::to_string(seed))).string());
      const auto r = run_train(c, progress);
      auto& m = results[mode];
      m["exact_match"].push_back(r.test.exact_match);
      m["bleu"].push_back(r.test.bleu);
      m["copy_accuracy"].push_back(r.test.copy_accuracy);
      m["generation_accuracy"].push_back(r.test.generation_accuracy);
    }
  json j = comparison_json(results, modes);
  j["seeds"] = seeds;
  write_text(dir / "comparison.json", j.dump(2) + "\n");
  write_text(dir / "comparison.txt", format_comparison(results, modes));
  return results;
}

}  // namespace tae
