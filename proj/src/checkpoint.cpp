#include "tae/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace tae {

namespace {

constexpr char kMagic[8] = {'T', 'A', 'E', 'C', 'K', 'P', 'T', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void write_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }

std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParameterStore<float>& store,
                     const nlohmann::json& meta) {
  nlohmann::json header;
  header["meta"] = meta;
  header["dtype"] = "f32le";
  auto& list = header["params"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& p : store) {
    list.push_back({{"name", p.name},
                    {"partition", std::string(to_string(p.partition))},
                    {"shape", {p.rows, p.cols}},
                    {"offset", offset}});
    offset += p.size() * sizeof(float);
  }
  const std::string text = header.dump();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
  os.write(kMagic, sizeof kMagic);
  write_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : store)
    os.write(reinterpret_cast<const char*>(p.value.data()), static_cast<std::streamsize>(p.size() * sizeof(float)));
  if (!os) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw std::runtime_error(path.string() + " is not a checkpoint");
  const auto len = read_u64(is);
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  if (!is) throw std::runtime_error("truncated checkpoint header in " + path.string());
  const auto header = nlohmann::json::parse(text);
  if (header.at("dtype") != "f32le") throw std::runtime_error("unsupported checkpoint dtype");
  Checkpoint ck;
  ck.meta = header.at("meta");
  std::uint64_t expect = 0;
  for (const auto& e : header.at("params")) {
    ParameterRecord r;
    r.name = e.at("name").get<std::string>();
    r.partition = partition_from_string(e.at("partition").get<std::string>());
    r.rows = e.at("shape").at(0).get<int>();
    r.cols = e.at("shape").at(1).get<int>();
    if (e.at("offset").get<std::uint64_t>() != expect) throw std::runtime_error("checkpoint offsets are not contiguous");
    r.values.resize(static_cast<std::size_t>(r.rows) * r.cols);
    is.read(reinterpret_cast<char*>(r.values.data()), static_cast<std::streamsize>(r.values.size() * sizeof(float)));
    if (!is) throw std::runtime_error("truncated checkpoint data for " + r.name);
    expect += r.values.size() * sizeof(float);
    ck.params.push_back(std::move(r));
  }
  return ck;
}

void apply_checkpoint(const Checkpoint& ckpt, ParameterStore<float>& store) {
  if (ckpt.params.size() != store.size()) throw std::runtime_error("checkpoint parameter count mismatch");
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& p = store[i];
    const auto& r = ckpt.params[i];
    if (r.name != p.name || r.partition != p.partition || r.rows != p.rows || r.cols != p.cols)
      throw std::runtime_error("checkpoint does not match parameter " + p.name);
    p.value = r.values;
  }
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"d_model", c.d_model},         {"n_heads", c.n_heads},
          {"encoder_layers", c.encoder_layers}, {"decoder_layers", c.decoder_layers}, {"ff_dim", c.ff_dim},
          {"dropout", c.dropout},       {"max_positions", c.max_positions}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.encoder_layers = j.at("encoder_layers").get<int>();
  c.decoder_layers = j.at("decoder_layers").get<int>();
  c.ff_dim = j.at("ff_dim").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.max_positions = j.at("max_positions").get<int>();
  c.validate();
  return c;
}

void save_model(const std::filesystem::path& path, const Seq2SeqModel<float>& model,
                const SubwordModel& tokenizer, nlohmann::json extra) {
  extra["kind"] = "seq2seq";
  extra["model"] = to_json(model.config());
  extra["tokenizer"] = tokenizer.pieces();
  save_checkpoint(path, model.params(), extra);
}

LoadedModel load_model(const std::filesystem::path& path) {
  auto ck = load_checkpoint(path);
  if (ck.meta.value("kind", "") != "seq2seq") throw std::runtime_error(path.string() + " is not a seq2seq checkpoint");
  LoadedModel out;
  out.tokenizer = SubwordModel::from_pieces(ck.meta.at("tokenizer").get<std::vector<std::string>>());
  out.model = std::make_unique<Seq2SeqModel<float>>(model_config_from_json(ck.meta.at("model")), 0);
  apply_checkpoint(ck, out.model->params());
  out.meta = std::move(ck.meta);
  return out;
}

}  // namespace tae
