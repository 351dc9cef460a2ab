#include "tae/cli.hpp"

#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include <CLI11.hpp>

#include "tae/config.hpp"
#include "tae/corpus.hpp"
#include "tae/pipeline.hpp"

namespace tae {

namespace {

std::string flag_name(const std::string& key) {
  std::string f = key;
  for (auto& c : f)
    if (c == '_') c = '-';
  return "--" + f;
}

// Every config key is also a flag; only flags given on the command line
// override the config file.
struct ConfigFlags {
  std::string file;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App* sub) {
    sub->add_option("--config", file, "key = value config file");
    for (const auto& k : Config::keys()) options[k.name] = sub->add_option(flag_name(k.name), values[k.name], k.help);
  }

  Config resolve() const {
    KeyValues file_kv;
    if (!file.empty()) file_kv = parse_config_file(file);
    KeyValues flags;
    for (const auto& [k, opt] : options)
      if (opt->count() > 0) flags[k] = values.at(k);
    return Config::resolve(file_kv, flags);
  }
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Target autoencoding toolkit: train, decode and evaluate copy-attention seq2seq parsers"};
  app.require_subcommand(1);

  ToyDataOptions toy;
  std::string toy_out = "data";
  auto* gen = app.add_subcommand("gen-toy-data", "write a synthetic toy corpus");
  gen->add_option("--seed", toy.seed, "generator seed");
  gen->add_option("--n-bitext", toy.n_bitext);
  gen->add_option("--n-mono", toy.n_mono);
  gen->add_option("--n-dev", toy.n_dev);
  gen->add_option("--n-test", toy.n_test);
  gen->add_option("--out-dir", toy_out);

  std::map<std::string, std::unique_ptr<ConfigFlags>> flags;
  auto with_config = [&](const char* name, const char* help) {
    auto* sub = app.add_subcommand(name, help);
    flags[name] = std::make_unique<ConfigFlags>();
    flags[name]->attach(sub);
    return sub;
  };

  auto* train = with_config("train", "train one model (--mode) and evaluate it on the test set");
  std::string checkpoint, input, lm_checkpoint, predictions, gold;
  auto* decode = with_config("decode", "decode parallel records with a checkpoint");
  decode->add_option("--checkpoint", checkpoint)->required();
  decode->add_option("--input", input)->required();
  decode->add_option("--lm-checkpoint", lm_checkpoint, "fuse with this language model (--lambda, --tau)");
  auto* eval = with_config("eval", "score a predictions file against gold records");
  eval->add_option("--predictions", predictions)->required();
  eval->add_option("--gold", gold)->required();
  auto* bt = with_config("backtranslate", "train a backward model and synthesize sources for --mono");
  auto* sweep = with_config("fuse-sweep", "dev exact match over the lambda x tau fusion grid");
  sweep->add_option("--checkpoint", checkpoint)->required();
  sweep->add_option("--lm-checkpoint", lm_checkpoint, "reuse a language model instead of training one on --mono");
  std::string modes = "baseline,tae";
  int n_seeds = 5;
  auto* compare = with_config("compare", "run several modes over several seeds and test the difference");
  compare->add_option("--modes", modes, "comma-separated modes; the first is the reference");
  compare->add_option("--seeds", n_seeds, "number of seeds (1..N)")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_code::usage;
  }

  try {
    if (gen->parsed()) {
      run_gen_toy_data(toy_out, toy);
      return exit_code::ok;
    }
    for (auto* sub : {train, decode, eval, bt, sweep, compare}) {
      if (!sub->parsed()) continue;
      const Config cfg = flags.at(sub->get_name())->resolve();
      if (sub == train) {
        run_train(cfg, &std::cerr);
      } else if (sub == decode) {
        run_decode(cfg, checkpoint, input, lm_checkpoint);
      } else if (sub == eval) {
        std::cout << format_report(run_eval(cfg, predictions, gold));
      } else if (sub == bt) {
        run_backtranslate(cfg, &std::cerr);
      } else if (sub == sweep) {
        run_fuse_sweep(cfg, checkpoint, lm_checkpoint, &std::cerr);
      } else {
        const auto mode_list = split_list(modes);
        std::vector<std::uint64_t> seeds;
        for (int s = 1; s <= n_seeds; ++s) seeds.push_back(static_cast<std::uint64_t>(s));
        const auto results = run_compare(cfg, mode_list, seeds, &std::cerr);
        std::cout << format_comparison(results, mode_list);
      }
      return exit_code::ok;
    }
  } catch (const MissingInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code::missing_input;
  } catch (const ConfigConflict& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code::config_conflict;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code::failure;
  }
  return exit_code::failure;
}

}  // namespace tae
