#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <unistd.h>

#include "repcount/dataset.hpp"
#include "repcount/errors.hpp"
#include "repcount/rng.hpp"
#include "repcount/sequence.hpp"

namespace fs = std::filesystem;
using repcount::FeatureSequence;
using repcount::SplitMix64;
using repcount::Tensor;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("repcount_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::vector<FeatureSequence> sample_sequences() {
  SplitMix64 rng(109);
  std::vector<FeatureSequence> out;
  for (int k = 0; k < 3; ++k) {
    FeatureSequence s;
    s.id = "seq" + std::to_string(k);
    int L = 12 + 4 * k;
    s.features = Tensor::zeros({L, 3});
    for (int64_t i = 0; i < s.features.numel(); ++i)
      s.features.at(static_cast<int>(i)) = static_cast<float>(rng.uniform(-1.0, 1.0));
    s.cycles = {{1, 3}, {5, 8}};
    s.count = 2;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

TEST_CASE("write then read round-trips ids, spans, counts, and features") {
  TempDir dir("roundtrip");
  auto seqs = sample_sequences();
  repcount::write_dataset(dir.path.string(), seqs);
  CHECK(fs::exists(dir.path / "manifest.json"));
  CHECK(fs::exists(dir.path / "seq0.f32"));

  auto back = repcount::read_dataset(dir.path.string());
  REQUIRE(back.size() == seqs.size());
  for (size_t i = 0; i < seqs.size(); ++i) {
    CHECK(back[i].id == seqs[i].id);
    CHECK(back[i].count == seqs[i].count);
    REQUIRE(back[i].cycles.size() == seqs[i].cycles.size());
    for (size_t c = 0; c < seqs[i].cycles.size(); ++c) {
      CHECK(back[i].cycles[c].start == seqs[i].cycles[c].start);
      CHECK(back[i].cycles[c].end == seqs[i].cycles[c].end);
    }
    REQUIRE(back[i].features.same_shape(seqs[i].features));
    // features were already f32-representable, so the round trip is exact
    for (int64_t j = 0; j < seqs[i].features.numel(); ++j)
      CHECK(back[i].features.at(static_cast<int>(j)) == seqs[i].features.at(static_cast<int>(j)));
  }
}

TEST_CASE("write rejects an invalid sequence before touching the manifest") {
  TempDir dir("invalid");
  auto seqs = sample_sequences();
  seqs[1].count = 99;
  CHECK_THROWS_AS(repcount::write_dataset(dir.path.string(), seqs), repcount::validation_error);
}

TEST_CASE("read fails cleanly on a missing directory") {
  CHECK_THROWS_AS(repcount::read_dataset("/nonexistent/repcount_nowhere"), repcount::io_error);
}

TEST_CASE("read rejects a malformed manifest") {
  TempDir dir("badjson");
  std::ofstream(dir.path / "manifest.json") << "{not json";
  CHECK_THROWS_AS(repcount::read_dataset(dir.path.string()), repcount::io_error);
}

TEST_CASE("read rejects a missing feature blob") {
  TempDir dir("missingblob");
  auto seqs = sample_sequences();
  repcount::write_dataset(dir.path.string(), seqs);
  fs::remove(dir.path / "seq1.f32");
  CHECK_THROWS_AS(repcount::read_dataset(dir.path.string()), repcount::io_error);
}

TEST_CASE("read rejects a truncated feature blob") {
  TempDir dir("truncblob");
  auto seqs = sample_sequences();
  repcount::write_dataset(dir.path.string(), seqs);
  fs::resize_file(dir.path / "seq0.f32", 8);
  CHECK_THROWS_AS(repcount::read_dataset(dir.path.string()), repcount::validation_error);
}

TEST_CASE("read rejects manifest records whose spans overlap") {
  TempDir dir("overlap");
  auto seqs = sample_sequences();
  repcount::write_dataset(dir.path.string(), seqs);
  // rewrite the manifest with an overlapping span pair for seq0
  nlohmann::json manifest;
  std::ifstream(dir.path / "manifest.json") >> manifest;
  manifest[0]["cycles"][0][1] = 6;  // [1,6] now overlaps [5,8]
  std::ofstream(dir.path / "manifest.json", std::ios::trunc) << manifest.dump(2);
  CHECK_THROWS_AS(repcount::read_dataset(dir.path.string()), repcount::validation_error);
}

TEST_CASE("written bytes are stable for identical input") {
  TempDir a("stable_a"), b("stable_b");
  auto seqs = sample_sequences();
  repcount::write_dataset(a.path.string(), seqs);
  repcount::write_dataset(b.path.string(), seqs);
  for (const char* name : {"manifest.json", "seq0.f32", "seq1.f32", "seq2.f32"}) {
    std::ifstream fa(a.path / name, std::ios::binary), fb(b.path / name, std::ios::binary);
    std::string ca((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    std::string cb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    CHECK(ca == cb);
  }
}
