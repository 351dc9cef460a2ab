#pragma once

// Shared fixtures for the unit tests.

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "tae/corpus.hpp"
#include "tae/model.hpp"
#include "tae/rng.hpp"
#include "tae/tokenizer.hpp"

namespace tae::testing {

inline Parameter<double>& param_with(ParameterStore<double>& store, const char* name, int r, int c,
                                     std::vector<double> v) {
  auto& p = store.add(name, Partition::decoder, r, c);
  p.value = std::move(v);
  return p;
}

inline ModelConfig tiny_model(int vocab) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.d_model = 16;
  c.n_heads = 2;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.ff_dim = 32;
  c.dropout = 0.0;
  c.max_positions = 64;
  return c;
}

/// Every text of a corpus split, for tokenizer training.
inline std::vector<std::string> all_texts(const CorpusSplit& s) {
  std::vector<std::string> out;
  for (const auto& e : s.labeled) { out.push_back(e.source); out.push_back(e.target); }
  for (const auto& e : s.monolingual) out.push_back(e.target);
  for (const auto& e : s.dev) { out.push_back(e.source); out.push_back(e.target); }
  for (const auto& e : s.test) { out.push_back(e.source); out.push_back(e.target); }
  return out;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("tae_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline bool content_equal(const std::filesystem::path& a, const std::filesystem::path& b) {
  return std::filesystem::exists(a) && std::filesystem::exists(b) && read_file(a) == read_file(b);
}

inline std::vector<float> random_values(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(scale * rng.normal());
  return v;
}

}  // namespace tae::testing
