#pragma once

// Self-describing parameter container:
//   "TAECKPT1" | u64 header length | JSON header | raw little-endian values
// The header lists every parameter (name, partition, shape, dtype, byte
// offset) and carries free-form metadata such as the model config and the
// tokenizer pieces.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "tae/model.hpp"
#include "tae/parameters.hpp"
#include "tae/tokenizer.hpp"

namespace tae {

struct ParameterRecord {
  std::string name;
  Partition partition = Partition::decoder;
  int rows = 0;
  int cols = 0;
  std::vector<float> values;
};

struct Checkpoint {
  nlohmann::json meta;
  std::vector<ParameterRecord> params;
};

void save_checkpoint(const std::filesystem::path& path, const ParameterStore<float>& store,
                     const nlohmann::json& meta);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Writes record values into a store with the same names, partitions and shapes.
void apply_checkpoint(const Checkpoint& ckpt, ParameterStore<float>& store);

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Seq2seq model plus the tokenizer it was trained with.
void save_model(const std::filesystem::path& path, const Seq2SeqModel<float>& model,
                const SubwordModel& tokenizer, nlohmann::json extra = nlohmann::json::object());

struct LoadedModel {
  std::unique_ptr<Seq2SeqModel<float>> model;
  SubwordModel tokenizer;
  nlohmann::json meta;
};
LoadedModel load_model(const std::filesystem::path& path);

}  // namespace tae
