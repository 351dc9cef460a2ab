#pragma once

// Flat key = value run configuration. Every key has a default per preset;
// values from a config file override the preset and command-line values
// override the file.

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tae/inference.hpp"
#include "tae/model.hpp"
#include "tae/trainer.hpp"

namespace tae {

/// A combination of settings that cannot work together.
class ConfigConflict : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A required input file is absent.
class MissingInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ConfigKey {
  std::string name;
  std::string toy;    // default under preset "toy"
  std::string paper;  // default under preset "paper"
  std::string help;
};

using KeyValues = std::map<std::string, std::string>;

class Config {
 public:
  static const std::vector<ConfigKey>& keys();
  static bool known(std::string_view key);
  static Config defaults(std::string_view preset);
  /// Preset (from flags, else file, else "toy") defaults <- file <- flags.
  static Config resolve(const KeyValues& file, const KeyValues& flags);

  void set(const std::string& key, const std::string& value);
  const std::string& str(const std::string& key) const;
  int integer(const std::string& key) const;
  std::uint64_t u64(const std::string& key) const;
  double real(const std::string& key) const;
  bool boolean(const std::string& key) const;
  std::vector<double> reals(const std::string& key) const;  // comma separated

  ModelConfig model() const;
  TrainConfig train() const;
  DecodeOptions decode() const;
  LmTrainConfig lm() const;
  FusionConfig fusion() const;

  /// "key = value" lines in registry order.
  std::string dump() const;
  const KeyValues& values() const { return values_; }

 private:
  KeyValues values_;
};

/// Parses "key = value" lines; '#' starts a comment. Unknown keys are errors.
KeyValues parse_config_text(std::string_view text);
KeyValues parse_config_file(const std::filesystem::path& path);

}  // namespace tae
