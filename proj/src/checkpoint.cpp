#include "repcount/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "repcount/config.hpp"
#include "repcount/errors.hpp"

namespace repcount {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are written via raw f32 stores and assume a little-endian host");

namespace {

using nlohmann::json;

void check_params_match(const ModelConfig& cfg, const ModelParams& params) {
  auto expected = param_shapes(cfg);
  if (params.items.size() != expected.size())
    throw validation_error("checkpoint: parameter count does not match config");
  for (size_t i = 0; i < expected.size(); ++i) {
    if (params.items[i].first != expected[i].first)
      throw validation_error("checkpoint: parameter order broke at " + expected[i].first);
    if (params.items[i].second.shape != expected[i].second)
      throw validation_error("checkpoint: shape mismatch for " + expected[i].first);
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& cfg, const ModelParams& params) {
  cfg.validate();
  check_params_match(cfg, params);

  json tensors = json::object();
  int64_t offset = 0;
  for (auto& [name, t] : params.items) {
    tensors[name] = {{"offset", offset}, {"shape", t.shape}};
    offset += t.numel() * 4;
  }
  json header = {{"config", model_config_to_json(cfg)}, {"tensors", tensors}};

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot write checkpoint: " + path);
  out << header.dump() << '\n';
  std::vector<float> buf;
  for (auto& [name, t] : params.items) {
    buf.resize(static_cast<size_t>(t.numel()));
    for (int64_t i = 0; i < t.numel(); ++i) buf[static_cast<size_t>(i)] = static_cast<float>(t.data()[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw io_error("short write while saving checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open checkpoint: " + path);
  std::string line;
  if (!std::getline(in, line)) throw io_error("checkpoint missing header line: " + path);
  json header = json::parse(line, nullptr, false);
  if (header.is_discarded() || !header.is_object() || !header.contains("config") ||
      !header.contains("tensors"))
    throw validation_error("checkpoint header is not the expected JSON record: " + path);

  Checkpoint ck;
  ck.config = model_config_from_json(header["config"]);
  auto expected = param_shapes(ck.config);
  const json& tensors = header["tensors"];
  if (!tensors.is_object() || tensors.size() != expected.size())
    throw validation_error("checkpoint tensor directory does not match config: " + path);

  int64_t offset = 0;
  for (auto& [name, shape] : expected) {
    if (!tensors.contains(name))
      throw validation_error("checkpoint missing tensor: " + name);
    const json& entry = tensors[name];
    if (!entry.is_object() || !entry.contains("offset") || !entry.contains("shape"))
      throw validation_error("checkpoint tensor entry malformed: " + name);
    std::vector<int> stored = entry["shape"].get<std::vector<int>>();
    if (stored != shape) throw validation_error("checkpoint shape mismatch for " + name);
    if (entry["offset"].get<int64_t>() != offset)
      throw validation_error("checkpoint offset mismatch for " + name);
    Tensor t = Tensor::zeros(shape);
    offset += t.numel() * 4;
  }

  std::vector<char> blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (static_cast<int64_t>(blob.size()) != offset)
    throw validation_error("checkpoint blob size mismatch: expected " + std::to_string(offset) +
                           " bytes, found " + std::to_string(blob.size()));

  size_t pos = 0;
  std::vector<float> buf;
  for (auto& [name, shape] : expected) {
    Tensor t = Tensor::zeros(shape);
    buf.resize(static_cast<size_t>(t.numel()));
    std::memcpy(buf.data(), blob.data() + pos, buf.size() * sizeof(float));
    pos += buf.size() * sizeof(float);
    for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<double>(buf[static_cast<size_t>(i)]);
    if (!t.all_finite()) throw validation_error("checkpoint tensor has non-finite values: " + name);
    ck.params.items.emplace_back(name, std::move(t));
  }
  return ck;
}

}  // namespace repcount
