#include "tae/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace tae {

const std::vector<ConfigKey>& Config::keys() {
  // The toy preset is sized for minutes-per-run CPU training on the
  // synthetic corpus; "paper" carries the full-scale hyperparameters.
  static const std::vector<ConfigKey> k = {
      {"preset", "toy", "paper", "default set: toy | paper"},
      {"mode", "baseline", "baseline", "baseline | tae | tae-nofreeze | dummy-source | backtranslation"},
      {"seed", "1", "1", "run seed; every random stream derives from it"},
      {"labeled", "", "", "parallel training records"},
      {"mono", "", "", "monolingual program records"},
      {"dev", "", "", "parallel dev records"},
      {"test", "", "", "parallel test records"},
      {"out_dir", "out", "out", "artifact directory"},
      {"threads", "0", "0", "kernel threads (0 = OpenMP default)"},
      {"vocab_size", "1000", "1000", "subword vocabulary size"},
      {"d_model", "64", "128", "model width"},
      {"n_heads", "4", "4", "attention heads"},
      {"encoder_layers", "2", "2", "encoder layers"},
      {"decoder_layers", "4", "4", "decoder layers"},
      {"ff_dim", "128", "256", "feed-forward width"},
      {"dropout", "0.1", "0.1", "dropout rate"},
      {"max_positions", "128", "128", "longest sequence"},
      {"encoder_lr", "1e-3", "1e-5", "encoder learning rate"},
      {"decoder_lr", "2e-3", "7.5e-5", "decoder and embedding learning rate"},
      {"label_smoothing", "0.1", "0.1", "label smoothing"},
      {"polyak_momentum", "0.999", "0.999", "Polyak averaging momentum"},
      {"polyak_warmup", "true", "true", "cap momentum at (1+t)/(10+t)"},
      {"batch_size", "16", "16", "labeled examples per step"},
      {"mono_ratio", "1.0", "1.0", "monolingual examples per labeled example in a step"},
      {"patience", "10", "10", "epochs without dev improvement before stopping"},
      {"max_epochs", "60", "100", "epoch limit"},
      {"embedding_routing", "decoder-side", "decoder-side", "decoder-side | frozen"},
      {"synthetic_weight", "1.0", "1.0", "loss weight of back-translated pairs"},
      {"dummy_max_len", "10", "10", "longest dummy source"},
      {"beam_size", "10", "10", "test-time beam"},
      {"alpha", "0.6", "0.6", "length normalization exponent"},
      {"max_len", "64", "64", "longest decoded output (tokens incl. EOS)"},
      {"lm_epochs", "10", "10", "language model epochs"},
      {"lm_lr", "1e-3", "1e-3", "language model learning rate"},
      {"lm_layers", "2", "4", "language model layers"},
      {"lambda", "0", "0", "fusion weight"},
      {"tau", "1", "1", "fusion temperature"},
      {"lambdas", "0,0.1,0.2,0.3,0.5", "0,0.1,0.2,0.3,0.5", "sweep grid for lambda"},
      {"taus", "1,2,5", "1,2,5", "sweep grid for tau"},
  };
  return k;
}

bool Config::known(std::string_view key) {
  for (const auto& k : keys())
    if (k.name == key) return true;
  return false;
}

Config Config::defaults(std::string_view preset) {
  if (preset != "toy" && preset != "paper") throw ConfigConflict("unknown preset '" + std::string(preset) + "'");
  Config c;
  for (const auto& k : keys()) c.values_[k.name] = preset == "toy" ? k.toy : k.paper;
  return c;
}

Config Config::resolve(const KeyValues& file, const KeyValues& flags) {
  std::string preset = "toy";
  if (auto it = file.find("preset"); it != file.end()) preset = it->second;
  if (auto it = flags.find("preset"); it != flags.end()) preset = it->second;
  Config c = defaults(preset);
  for (const auto& [k, v] : file) c.set(k, v);
  for (const auto& [k, v] : flags) c.set(k, v);
  return c;
}

void Config::set(const std::string& key, const std::string& value) {
  if (!known(key)) throw ConfigConflict("unknown config key '" + key + "'");
  values_[key] = value;
}

const std::string& Config::str(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigConflict("unknown config key '" + key + "'");
  return it->second;
}

namespace {

template <typename N>
N parse_number(const std::string& key, const std::string& s) {
  N v{};
  const auto* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end) throw ConfigConflict("config key '" + key + "': cannot parse '" + s + "'");
  return v;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

int Config::integer(const std::string& key) const { return parse_number<int>(key, str(key)); }
std::uint64_t Config::u64(const std::string& key) const { return parse_number<std::uint64_t>(key, str(key)); }
double Config::real(const std::string& key) const { return parse_number<double>(key, str(key)); }

bool Config::boolean(const std::string& key) const {
  const auto& v = str(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigConflict("config key '" + key + "': expected true or false, got '" + v + "'");
}

std::vector<double> Config::reals(const std::string& key) const {
  std::vector<double> out;
  std::stringstream ss(str(key));
  for (std::string item; std::getline(ss, item, ',');) out.push_back(parse_number<double>(key, trim(item)));
  if (out.empty()) throw ConfigConflict("config key '" + key + "' is empty");
  return out;
}

ModelConfig Config::model() const {
  ModelConfig m;
  m.vocab_size = integer("vocab_size");
  m.d_model = integer("d_model");
  m.n_heads = integer("n_heads");
  m.encoder_layers = integer("encoder_layers");
  m.decoder_layers = integer("decoder_layers");
  m.ff_dim = integer("ff_dim");
  m.dropout = real("dropout");
  m.max_positions = integer("max_positions");
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigConflict(e.what());
  }
  return m;
}

TrainConfig Config::train() const {
  TrainConfig t;
  t.encoder_lr = real("encoder_lr");
  t.decoder_lr = real("decoder_lr");
  t.label_smoothing = real("label_smoothing");
  t.polyak_momentum = real("polyak_momentum");
  t.polyak_warmup = boolean("polyak_warmup");
  t.batch_size = integer("batch_size");
  t.mono_ratio = real("mono_ratio");
  t.patience = integer("patience");
  t.max_epochs = integer("max_epochs");
  t.seed = u64("seed");
  t.freeze_encoder_on_mono = str("mode") != "tae-nofreeze";
  try {
    t.embedding_routing = embedding_routing_from_string(str("embedding_routing"));
    t.synthetic_weight = real("synthetic_weight");
    t.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigConflict(e.what());
  }
  return t;
}

DecodeOptions Config::decode() const {
  DecodeOptions d;
  d.beam_size = integer("beam_size");
  d.alpha = real("alpha");
  d.max_len = integer("max_len");
  if (d.beam_size < 1 || d.max_len < 1) throw ConfigConflict("beam_size and max_len must be >= 1");
  return d;
}

LmTrainConfig Config::lm() const {
  LmTrainConfig l;
  l.lr = real("lm_lr");
  l.epochs = integer("lm_epochs");
  l.batch_size = integer("batch_size");
  l.seed = derive_seed(u64("seed"), "lm");
  return l;
}

FusionConfig Config::fusion() const {
  FusionConfig f{real("lambda"), real("tau")};
  try {
    f.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigConflict(e.what());
  }
  return f;
}

std::string Config::dump() const {
  std::string out;
  for (const auto& k : keys()) out += k.name + " = " + values_.at(k.name) + "\n";
  return out;
}

KeyValues parse_config_text(std::string_view text) {
  KeyValues kv;
  std::stringstream ss{std::string(text)};
  int line_no = 0;
  for (std::string line; std::getline(ss, line);) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const auto t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigConflict("config line " + std::to_string(line_no) + ": expected key = value");
    const auto key = trim(std::string_view(t).substr(0, eq));
    if (!Config::known(key)) throw ConfigConflict("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    kv[key] = trim(std::string_view(t).substr(eq + 1));
  }
  return kv;
}

KeyValues parse_config_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw MissingInput("config file not found: " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str());
}

}  // namespace tae
