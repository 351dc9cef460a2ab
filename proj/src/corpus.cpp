#include "tae/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "tae/rng.hpp"

namespace tae {
namespace {

using nlohmann::json;

std::string line_error(std::size_t line_no, const std::string& what) {
  return "line " + std::to_string(line_no) + ": " + what;
}

json parse_object(std::string_view line, std::size_t line_no) {
  std::vector<std::set<std::string>> seen;
  std::string duplicate;
  json::parser_callback_t cb = [&](int depth, json::parse_event_t event, json& parsed) {
    if (event == json::parse_event_t::object_start) {
      seen.emplace_back();
    } else if (event == json::parse_event_t::object_end) {
      seen.pop_back();
    } else if (event == json::parse_event_t::key && depth == 1 && !seen.empty()) {
      const auto key = parsed.get<std::string>();
      if (!seen.back().insert(key).second && duplicate.empty()) duplicate = key;
    }
    return true;
  };
  json j;
  try {
    j = json::parse(line.begin(), line.end(), cb);
  } catch (const json::parse_error& e) {
    throw CorpusError(line_error(line_no, std::string("malformed record: ") + e.what()));
  }
  if (!duplicate.empty()) throw CorpusError(line_error(line_no, "duplicate field '" + duplicate + "'"));
  if (!j.is_object()) throw CorpusError(line_error(line_no, "record is not an object"));
  return j;
}

std::string string_field(const json& j, const char* name, std::size_t line_no) {
  auto it = j.find(name);
  if (it == j.end()) throw CorpusError(line_error(line_no, std::string("missing field '") + name + "'"));
  if (!it->is_string()) throw CorpusError(line_error(line_no, std::string("field '") + name + "' is not a string"));
  return it->get<std::string>();
}

std::size_t count_occurrences(std::string_view hay, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + 1)) ++n;
  return n;
}

StrMap parse_str_map(const json& j, std::string_view target, std::size_t line_no) {
  StrMap map;
  auto it = j.find("str_map");
  if (it == j.end()) return map;
  if (!it->is_array()) throw CorpusError(line_error(line_no, "str_map is not a list"));
  for (const auto& pair : *it) {
    if (!pair.is_array() || pair.size() != 2 || !pair[0].is_string() || !pair[1].is_string())
      throw CorpusError(line_error(line_no, "str_map entries must be [placeholder, literal]"));
    map.emplace_back(pair[0].get<std::string>(), pair[1].get<std::string>());
  }
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (map[i].first != "str" + std::to_string(i))
      throw CorpusError(line_error(line_no, "placeholders must be numbered str0, str1, ... in order"));
    if (count_occurrences(target, "'" + map[i].first + "'") != 1)
      throw CorpusError(line_error(line_no, "placeholder " + map[i].first + " must occur exactly once in target"));
  }
  return map;
}

void check_fields(const json& j, std::initializer_list<const char*> allowed, std::size_t line_no) {
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw CorpusError(line_error(line_no, "unexpected field '" + key + "'"));
  }
}

json map_to_json(const StrMap& map) {
  json arr = json::array();
  for (const auto& [k, v] : map) arr.push_back(json::array({k, v}));
  return arr;
}

template <typename Record, typename Parse>
std::vector<Record> load_lines(const std::filesystem::path& path, Parse parse) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open corpus file " + path.string());
  std::vector<Record> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) throw CorpusError(line_error(line_no, "empty record"));
    out.push_back(parse(line, line_no));
  }
  return out;
}

template <typename Record>
void save_lines(const std::filesystem::path& path, const std::vector<Record>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError("cannot write corpus file " + path.string());
  for (const auto& r : records) out << format_record(r) << '\n';
}

bool is_punct(unsigned char c) { return std::ispunct(c) && c != '_'; }

}  // namespace

ParallelExample parse_parallel_record(std::string_view line, std::size_t line_no) {
  const json j = parse_object(line, line_no);
  check_fields(j, {"source", "target", "str_map", "synthetic"}, line_no);
  ParallelExample ex;
  ex.source = string_field(j, "source", line_no);
  ex.target = string_field(j, "target", line_no);
  ex.str_map = parse_str_map(j, ex.target, line_no);
  if (auto it = j.find("synthetic"); it != j.end()) {
    if (!it->is_boolean()) throw CorpusError(line_error(line_no, "field 'synthetic' is not a boolean"));
    ex.synthetic = it->get<bool>();
  }
  return ex;
}

MonolingualExample parse_monolingual_record(std::string_view line, std::size_t line_no) {
  const json j = parse_object(line, line_no);
  check_fields(j, {"target", "str_map"}, line_no);
  MonolingualExample ex;
  ex.target = string_field(j, "target", line_no);
  ex.str_map = parse_str_map(j, ex.target, line_no);
  return ex;
}

std::string format_record(const ParallelExample& ex) {
  json j;
  j["source"] = ex.source;
  j["target"] = ex.target;
  if (!ex.str_map.empty()) j["str_map"] = map_to_json(ex.str_map);
  if (ex.synthetic) j["synthetic"] = true;
  return j.dump();
}

std::string format_record(const MonolingualExample& ex) {
  json j;
  j["target"] = ex.target;
  if (!ex.str_map.empty()) j["str_map"] = map_to_json(ex.str_map);
  return j.dump();
}

std::vector<ParallelExample> load_parallel(const std::filesystem::path& path) {
  return load_lines<ParallelExample>(path, parse_parallel_record);
}

std::vector<MonolingualExample> load_monolingual(const std::filesystem::path& path) {
  return load_lines<MonolingualExample>(path, parse_monolingual_record);
}

void save_parallel(const std::filesystem::path& path, const std::vector<ParallelExample>& records) {
  save_lines(path, records);
}

void save_monolingual(const std::filesystem::path& path,
                      const std::vector<MonolingualExample>& records) {
  save_lines(path, records);
}

Anonymized anonymize_strings(std::string_view code) {
  Anonymized out;
  std::size_t i = 0;
  while (i < code.size()) {
    const char c = code[i];
    if (c != '\'' && c != '"') {
      out.code.push_back(c);
      ++i;
      continue;
    }
    const auto close = code.find(c, i + 1);
    if (close == std::string_view::npos)
      throw CorpusError("unbalanced quote at offset " + std::to_string(i));
    std::string placeholder = "str" + std::to_string(out.str_map.size());
    out.code += "'" + placeholder + "'";
    out.str_map.emplace_back(std::move(placeholder), std::string(code.substr(i, close - i + 1)));
    i = close + 1;
  }
  return out;
}

std::string deanonymize(std::string_view code, const StrMap& str_map) {
  std::vector<bool> used(str_map.size(), false);
  std::string out;
  std::size_t i = 0;
  while (i < code.size()) {
    bool replaced = false;
    if (code[i] == '\'' && code.compare(i + 1, 3, "str") == 0) {
      std::size_t j = i + 4;
      while (j < code.size() && std::isdigit(static_cast<unsigned char>(code[j]))) ++j;
      if (j > i + 4 && j < code.size() && code[j] == '\'') {
        const std::string_view name = code.substr(i + 1, j - i - 1);
        for (std::size_t k = 0; k < str_map.size(); ++k) {
          if (str_map[k].first == name) {
            out += str_map[k].second;
            used[k] = true;
            replaced = true;
            i = j + 1;
            break;
          }
        }
      }
    }
    if (!replaced) out.push_back(code[i++]);
  }
  for (std::size_t k = 0; k < str_map.size(); ++k)
    if (!used[k]) throw CorpusError("placeholder " + str_map[k].first + " does not occur in code");
  return out;
}

std::string normalize_java(std::string_view code) {
  std::string spaced;
  for (std::size_t i = 0; i < code.size(); ++i) {
    const auto c = static_cast<unsigned char>(code[i]);
    if (c == '\n') {
      spaced += " # ";
    } else if (is_punct(c)) {
      spaced += ' ';
      spaced += static_cast<char>(c);
      spaced += ' ';
    } else {
      if (std::isupper(c) && i > 0 && std::islower(static_cast<unsigned char>(code[i - 1])))
        spaced += ' ';
      spaced += static_cast<char>(c);
    }
  }
  std::istringstream words(spaced);
  std::string out, w;
  while (words >> w) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

LowResourceSplit make_low_resource_split(const std::vector<ParallelExample>& bitext,
                                         double fraction, std::uint64_t seed) {
  if (bitext.empty()) throw std::invalid_argument("make_low_resource_split: empty bitext");
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw std::invalid_argument("make_low_resource_split: fraction must be in (0, 1]");
  const auto n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(bitext.size())));
  if (n < 1) throw std::invalid_argument("make_low_resource_split: labeled subset would be empty");
  Rng rng(seed, "low_resource_split");
  auto order = rng.permutation(bitext.size());
  order.resize(n);
  std::sort(order.begin(), order.end());
  LowResourceSplit split;
  split.labeled.reserve(n);
  for (auto i : order) split.labeled.push_back(bitext[i]);
  split.monolingual.reserve(bitext.size());
  for (const auto& ex : bitext) split.monolingual.push_back({ex.target, ex.str_map});
  return split;
}

std::vector<ParallelExample> attach_dummy_sources(const std::vector<MonolingualExample>& mono,
                                                  std::uint64_t seed, int max_len) {
  if (max_len < 1) throw std::invalid_argument("attach_dummy_sources: max_len must be >= 1");
  Rng rng(seed, "dummy_source_lengths");
  std::vector<ParallelExample> out;
  out.reserve(mono.size());
  for (const auto& m : mono) {
    const auto len = rng.uniform_int(1, max_len);
    std::string src;
    for (std::int64_t i = 0; i < len; ++i) {
      if (i) src += ' ';
      src += kZeroWord;
    }
    out.push_back({std::move(src), m.target, m.str_map, false});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Toy corpus

namespace {

const std::vector<std::string> kVars = {
    "user",  "item",   "items",  "path",     "name",     "value",  "key",   "result",
    "data",  "node",   "line",   "lines",    "count",    "index",  "size",  "text",
    "token", "tokens", "field",  "fields",   "row",      "rows",   "form",  "request",
    "cache", "config", "parts",  "buffer",   "response", "options"};
const std::vector<std::string> kFuncs = {"get_value",  "parse_args",  "load_config", "render_page",
                                         "save_file",  "update_cache", "validate",   "force_text",
                                         "smart_split", "escape_html", "make_key",   "to_list"};
const std::vector<std::string> kMethods = {"close", "flush", "strip", "lower",  "keys",
                                           "copy",  "clear", "reset", "encode", "split"};
const std::vector<std::string> kModules = {"os", "re", "json", "copy", "time"};
const std::vector<std::string> kImported = {"path", "dumps", "loads", "deepcopy", "sleep", "sub"};
const std::vector<std::string> kExceptions = {"valueerror", "typeerror", "keyerror", "indexerror",
                                              "runtimeerror"};
const std::vector<std::string> kLiterals = {"'utf-8'", "'id'",     "\"name\"", "'invalid value'",
                                            "\"%s\"",  "'default'", "'ascii'", "\"error: %s\""};

// Pieces for monolingual-only identifiers.
const std::vector<std::string> kPrefixes = {"old", "new", "raw",  "full",  "tmp",  "base", "max",
                                            "min", "last", "first", "next", "total", "local"};
const std::vector<std::string> kVerbs = {"get",  "set",   "load",  "save",  "parse", "build",
                                         "make", "read",  "write", "check", "clean", "format"};

struct Pools {
  std::vector<std::string> vars, funcs, methods, modules, imported, exceptions;
};

Pools bitext_pools() { return {kVars, kFuncs, kMethods, kModules, kImported, kExceptions}; }

Pools mono_pools() {
  Pools p = bitext_pools();
  for (const auto& pre : kPrefixes)
    for (const auto& v : kVars) p.vars.push_back(pre + "_" + v);
  for (const auto& verb : kVerbs)
    for (const auto& v : kVars) p.funcs.push_back(verb + "_" + v);
  for (const auto& verb : kVerbs) p.methods.push_back(verb);
  return p;
}

class ToyGenerator {
 public:
  ToyGenerator(Rng& rng, const Pools& pools) : rng_(rng), pools_(pools) {}

  // Returns a raw (unanonymized) pair; the source already names literals by
  // their placeholder.
  std::pair<std::string, std::string> next() {
    switch (rng_.uniform_int(0, 13)) {
      case 0: return call_assign();
      case 1: return define();
      case 2: return compare();
      case 3: return for_loop();
      case 4: return get_attribute();
      case 5: return append();
      case 6: return length();
      case 7: return ternary();
      case 8: return import_from();
      case 9: return raise_error();
      case 10: return chain();
      case 11: return while_loop();
      case 12: return return_call();
      default: return method_assign();
    }
  }

 private:
  const std::string& pick(const std::vector<std::string>& v) {
    return v[static_cast<std::size_t>(rng_.uniform_int(0, static_cast<std::int64_t>(v.size()) - 1))];
  }
  // `k` distinct entries.
  std::vector<std::string> distinct(const std::vector<std::string>& v, int k) {
    std::vector<std::string> out;
    while (static_cast<int>(out.size()) < k) {
      const auto& c = pick(v);
      if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
    }
    return out;
  }
  std::string digit() { return std::to_string(rng_.uniform_int(0, 9)); }

  static std::string nl_list(const std::vector<std::string>& xs) {
    std::string s;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (i > 0) s += i + 1 == xs.size() ? " and " : " , ";
      s += xs[i];
    }
    return s;
  }
  static std::string code_list(const std::vector<std::string>& xs) {
    std::string s;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (i) s += " , ";
      s += xs[i];
    }
    return s;
  }
  std::string arg_phrase(const std::vector<std::string>& args) {
    if (args.size() == 1) return "an argument " + args[0];
    return std::to_string(args.size()) + " arguments : " + nl_list(args);
  }

  std::pair<std::string, std::string> call_assign() {
    const auto v = distinct(pools_.vars, 4);
    const int k = static_cast<int>(rng_.uniform_int(1, 3));
    const std::vector<std::string> args(v.begin() + 1, v.begin() + 1 + k);
    const auto& f = pick(pools_.funcs);
    return {"call the function " + f + " with " + arg_phrase(args) + " , substitute the result for " + v[0] + " .",
            v[0] + " = " + f + " ( " + code_list(args) + " )"};
  }

  std::pair<std::string, std::string> define() {
    const int k = static_cast<int>(rng_.uniform_int(1, 3));
    const auto args = distinct(pools_.vars, k);
    const auto& f = pick(pools_.funcs);
    std::vector<std::string> nl, code;
    for (int i = 0; i < k; ++i) {
      const bool last = i + 1 == k;
      const auto mode = last ? rng_.uniform_int(0, 2) : 0;
      if (mode == 1) {
        nl.push_back(args[i] + " defaulting to none");
        code.push_back(args[i] + " = none");
      } else if (mode == 2) {
        const auto d = digit();
        nl.push_back(args[i] + " defaulting to integer " + d);
        code.push_back(args[i] + " = " + d);
      } else {
        nl.push_back(args[i]);
        code.push_back(args[i]);
      }
    }
    return {"define the function " + f + " with " + (k == 1 ? "an argument " : "arguments ") + nl_list(nl) + " .",
            "def " + f + " ( " + code_list(code) + " ) : pass"};
  }

  std::pair<std::string, std::string> compare() {
    static const std::vector<std::pair<std::string, std::string>> kOps = {
        {"is greater than", ">"}, {"is smaller than", "<"}, {"equals", "=="}, {"is not equal to", "!="}};
    const auto v = distinct(pools_.vars, 3);
    const auto& op = kOps[static_cast<std::size_t>(rng_.uniform_int(0, 3))];
    const auto& ret = v[static_cast<std::size_t>(rng_.uniform_int(0, 2))];
    return {"if " + v[0] + " " + op.first + " " + v[1] + " , return " + ret + " .",
            "if " + v[0] + " " + op.second + " " + v[1] + " : return " + ret};
  }

  std::pair<std::string, std::string> for_loop() {
    const auto v = distinct(pools_.vars, 3);
    const auto& m = pick(pools_.methods);
    return {"for every " + v[0] + " in " + v[1] + " , call the method " + m + " on " + v[2] +
                " with an argument " + v[0] + " .",
            "for " + v[0] + " in " + v[1] + " : " + v[2] + " . " + m + " ( " + v[0] + " )"};
  }

  std::pair<std::string, std::string> get_attribute() {
    const auto v = distinct(pools_.vars, 2);
    return {"get the attribute str0 of the object " + v[1] + " , substitute it for " + v[0] + " .",
            v[0] + " = getattr ( " + v[1] + " , " + pick(kLiterals) + " )"};
  }

  std::pair<std::string, std::string> append() {
    const auto v = distinct(pools_.vars, 2);
    return {"append " + v[0] + " to the list " + v[1] + " .", v[1] + " . append ( " + v[0] + " )"};
  }

  std::pair<std::string, std::string> length() {
    const auto v = distinct(pools_.vars, 2);
    if (rng_.uniform_int(0, 1) == 0)
      return {"return the length of " + v[0] + " .", "return len ( " + v[0] + " )"};
    return {"substitute the length of " + v[1] + " for " + v[0] + " .", v[0] + " = len ( " + v[1] + " )"};
  }

  std::pair<std::string, std::string> ternary() {
    const auto v = distinct(pools_.vars, 3);
    const auto a = digit(), b = digit();
    return {"assign integer " + a + " to " + v[0] + " if " + v[1] + " equals " + v[2] +
                " , otherwise assign it integer " + b + " .",
            v[0] + " = " + a + " if " + v[1] + " == " + v[2] + " else " + b};
  }

  std::pair<std::string, std::string> import_from() {
    const auto& m = pick(pools_.modules);
    const auto names = distinct(pools_.imported, static_cast<int>(rng_.uniform_int(2, 3)));
    return {"from the module " + m + " import " + nl_list(names) + " .",
            "from " + m + " import " + code_list(names)};
  }

  std::pair<std::string, std::string> raise_error() {
    const auto& e = pick(pools_.exceptions);
    return {"raise an exception " + e + " with an argument string str0 .",
            "raise " + e + " ( " + pick(kLiterals) + " )"};
  }

  std::pair<std::string, std::string> chain() {
    const auto v = distinct(pools_.vars, 2);
    const auto& f = pick(pools_.funcs);
    const auto& m = pick(pools_.methods);
    return {"call the method " + m + " on the result of the function " + f + " called with an argument " +
                v[1] + " , substitute it for " + v[0] + " .",
            v[0] + " = " + f + " ( " + v[1] + " ) . " + m + " ( )"};
  }

  std::pair<std::string, std::string> while_loop() {
    const auto v = distinct(pools_.vars, 2);
    return {"while " + v[0] + " is not none , substitute field " + v[1] + " of " + v[0] + " for " + v[0] + " .",
            "while " + v[0] + " is not none : " + v[0] + " = " + v[0] + " . " + v[1]};
  }

  std::pair<std::string, std::string> return_call() {
    const int k = static_cast<int>(rng_.uniform_int(1, 3));
    const auto args = distinct(pools_.vars, k);
    const auto& f = pick(pools_.funcs);
    return {"return the result of the function " + f + " called with " + arg_phrase(args) + " .",
            "return " + f + " ( " + code_list(args) + " )"};
  }

  std::pair<std::string, std::string> method_assign() {
    const auto v = distinct(pools_.vars, 3);
    const auto& m = pick(pools_.methods);
    return {"call the method " + m + " of " + v[1] + " with an argument " + v[2] + " , substitute the result for " +
                v[0] + " .",
            v[0] + " = " + v[1] + " . " + m + " ( " + v[2] + " )"};
  }

  Rng& rng_;
  const Pools& pools_;
};

}  // namespace

const std::vector<std::string>& toy_keywords() {
  static const std::vector<std::string> kw = {
      "=",   "(",  ")",     ",",    "def",    ":",      "pass", "none",   "if",    ">",
      "<",   "!",  "return", "for", "in",     ".",      "getattr", "'",   "append", "len",
      "else", "from", "import", "raise", "while", "is", "not"};
  return kw;
}

CorpusSplit generate_toy_dataset(std::uint64_t seed, int n_bitext, int n_mono, int n_dev,
                                 int n_test) {
  if (n_bitext < 0 || n_mono < 0 || n_dev < 0 || n_test < 0)
    throw std::invalid_argument("generate_toy_dataset: sizes must be non-negative");
  Rng rng(seed, "toy_corpus");
  const Pools bitext = bitext_pools();
  const Pools mono = mono_pools();
  ToyGenerator para_gen(rng, bitext);
  ToyGenerator mono_gen(rng, mono);
  std::unordered_set<std::string> seen;
  constexpr int kMaxAttempts = 1000;

  auto fresh_pair = [&](ToyGenerator& gen) {
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
      auto [src, raw] = gen.next();
      auto anon = anonymize_strings(raw);
      if (seen.insert(anon.code).second)
        return ParallelExample{std::move(src), std::move(anon.code), std::move(anon.str_map), false};
    }
    throw std::runtime_error("generate_toy_dataset: could not draw a new distinct program");
  };

  CorpusSplit split;
  for (int i = 0; i < n_bitext; ++i) split.labeled.push_back(fresh_pair(para_gen));
  // Held-out programs use the full identifier pool, most of which the small
  // labeled set never shows but the monolingual programs do.
  for (int i = 0; i < n_dev; ++i) split.dev.push_back(fresh_pair(mono_gen));
  for (int i = 0; i < n_test; ++i) split.test.push_back(fresh_pair(mono_gen));
  for (int i = 0; i < n_mono; ++i) {
    auto ex = fresh_pair(mono_gen);
    split.monolingual.push_back({std::move(ex.target), std::move(ex.str_map)});
  }
  return split;
}

}  // namespace tae
