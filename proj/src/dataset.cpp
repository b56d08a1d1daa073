#include "repcount/dataset.hpp"

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "repcount/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "on-disk format is little-endian; big-endian hosts unsupported");

namespace repcount {

namespace fs = std::filesystem;
using nlohmann::json;

void write_dataset(const std::string& dir, const std::vector<FeatureSequence>& sequences) {
  fs::create_directories(dir);
  json manifest = json::array();
  for (const FeatureSequence& seq : sequences) {
    seq.validate();
    json cycles = json::array();
    for (const CycleSpan& c : seq.cycles) cycles.push_back({c.start, c.end});
    manifest.push_back({{"id", seq.id},
                        {"length", seq.length()},
                        {"feature_dim", seq.feature_dim()},
                        {"count", seq.count},
                        {"cycles", cycles}});

    std::vector<float> buf(static_cast<size_t>(seq.features.numel()));
    for (size_t i = 0; i < buf.size(); ++i)
      buf[i] = static_cast<float>(seq.features.data()[i]);
    std::ofstream f(fs::path(dir) / (seq.id + ".f32"), std::ios::binary | std::ios::trunc);
    if (!f) throw io_error("cannot write " + seq.id + ".f32 in " + dir);
    f.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!f) throw io_error("short write on " + seq.id + ".f32");
  }
  std::ofstream m(fs::path(dir) / "manifest.json", std::ios::trunc);
  if (!m) throw io_error("cannot write manifest.json in " + dir);
  m << manifest.dump(2) << "\n";
}

std::vector<FeatureSequence> read_dataset(const std::string& dir) {
  std::ifstream m(fs::path(dir) / "manifest.json");
  if (!m) throw io_error("missing manifest.json in " + dir);
  json manifest;
  try {
    m >> manifest;
  } catch (const json::exception& e) {
    throw io_error(std::string("malformed manifest.json: ") + e.what());
  }
  if (!manifest.is_array()) throw io_error("manifest.json: expected an array");

  std::vector<FeatureSequence> out;
  out.reserve(manifest.size());
  for (const json& rec : manifest) {
    FeatureSequence seq;
    try {
      seq.id = rec.at("id").get<std::string>();
      const int length = rec.at("length").get<int>();
      const int dim = rec.at("feature_dim").get<int>();
      seq.count = rec.at("count").get<int>();
      for (const json& c : rec.at("cycles"))
        seq.cycles.push_back({c.at(0).get<int>(), c.at(1).get<int>()});
      if (length < 1 || dim < 1)
        throw validation_error("sequence '" + seq.id + "': bad length/feature_dim");

      const fs::path blob = fs::path(dir) / (seq.id + ".f32");
      std::ifstream f(blob, std::ios::binary);
      if (!f) throw io_error("missing " + blob.string());
      f.seekg(0, std::ios::end);
      const auto bytes = static_cast<uint64_t>(f.tellg());
      const uint64_t expect = static_cast<uint64_t>(length) * dim * sizeof(float);
      if (bytes != expect)
        throw validation_error("sequence '" + seq.id + "': file size " + std::to_string(bytes) +
                               " != expected " + std::to_string(expect));
      f.seekg(0);
      std::vector<float> buf(static_cast<size_t>(length) * dim);
      f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(expect));
      if (!f) throw io_error("short read on " + blob.string());
      seq.features = Tensor::zeros({length, dim});
      for (size_t i = 0; i < buf.size(); ++i) seq.features.data()[i] = buf[i];
    } catch (const json::exception& e) {
      throw io_error(std::string("malformed manifest record: ") + e.what());
    }
    seq.validate();
    out.push_back(std::move(seq));
  }
  return out;
}

}  // namespace repcount
