#include <gtest/gtest.h>

#include <fstream>
#include <atomic>
#include <limits>
#include <thread>

#include "synthetic.hpp"
#include "tajweed/error.hpp"
#include "tajweed/ingest.hpp"
#include "tajweed/tensor_cache.hpp"

namespace fs = std::filesystem;
using namespace tajweed;
namespace synth = tajweed::testing;
using namespace tajweed::dsp;

namespace {

SpectrogramTensor ramp(const std::string& id, float scale = 1.0f) {
  SpectrogramTensor t;
  t.clip_id = id;
  for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = scale * static_cast<float>(i % 997) - 3.25f;
  return t;
}

}  // namespace

TEST(TensorFile, HeaderAndLayout) {
  synth::TempDir tmp;
  const auto t = ramp("x");
  write_tensor_file(tmp / "x.mst", t);
  std::ifstream in(tmp / "x.mst", std::ios::binary);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "224 224 3");
  float first = 0.0f;
  in.read(reinterpret_cast<char*>(&first), 4);
  EXPECT_EQ(first, -3.25f);
  EXPECT_EQ(fs::file_size(tmp / "x.mst"), 10u + SpectrogramTensor::kSize * 4u);
  EXPECT_EQ(read_tensor_file(tmp / "x.mst").data, t.data);
}

TEST(TensorFile, RejectsBadFiles) {
  synth::TempDir tmp;
  std::ofstream(tmp / "shape.mst") << "224 100 3\n";
  EXPECT_THROW(read_tensor_file(tmp / "shape.mst"), DataError);

  write_tensor_file(tmp / "short.mst", ramp("s"));
  fs::resize_file(tmp / "short.mst", 1000);
  EXPECT_THROW(read_tensor_file(tmp / "short.mst"), DataError);

  auto bad = ramp("n");
  bad.data[5] = std::numeric_limits<float>::quiet_NaN();
  write_tensor_file(tmp / "nan.mst", bad);
  EXPECT_THROW(read_tensor_file(tmp / "nan.mst"), DataError);

  EXPECT_THROW(read_tensor_file(tmp / "absent.mst"), DataError);
}

TEST(TensorCache, KeyedByConfigHash) {
  synth::TempDir tmp;
  DspConfig a;
  DspConfig b;
  b.hop = 128;
  TensorCache ca(tmp.path(), a), cb(tmp.path(), b);
  EXPECT_NE(ca.path_for("S1_1"), cb.path_for("S1_1"));
  EXPECT_EQ(ca.path_for("S1_1").filename().string(), "S1_1." + a.hash() + ".mst");

  EXPECT_TRUE(ca.insert(ramp("S1_1")));
  EXPECT_TRUE(ca.contains("S1_1"));
  EXPECT_FALSE(cb.contains("S1_1"));
  EXPECT_FALSE(ca.insert(ramp("S1_1", 2.0f)));  // keeps the first entry
  EXPECT_EQ(ca.load("S1_1")->data, ramp("S1_1").data);
  EXPECT_FALSE(ca.load("S9_9").has_value());
  EXPECT_THROW(ca.insert(ramp("")), UsageError);
}

TEST(TensorCache, GetOrComputeMatchesDirectPreprocess) {
  synth::TempDir tmp;
  synth::CorpusSpec spec;
  spec.n_clips = 3;
  spec.seconds = 0.4;
  synth::write_corpus(tmp / "corpus", spec);
  const auto records = load_corpus(tmp / "corpus");
  TensorCache cache(tmp / "cache", DspConfig{});
  bool hit = true;
  const auto first = cache.get_or_compute(records[1], &hit);
  EXPECT_FALSE(hit);
  const auto second = cache.get_or_compute(records[1], &hit);
  EXPECT_TRUE(hit);
  EXPECT_EQ(first.data, second.data);
  EXPECT_EQ(first.data, preprocess_clip(records[1], DspConfig{}).data);
}

TEST(TensorCache, ConcurrentInsertLeavesOneCompleteFile) {
  synth::TempDir tmp;
  TensorCache cache(tmp.path(), DspConfig{});
  std::vector<std::thread> threads;
  std::atomic<int> winners{0};
  for (int i = 0; i < 8; ++i) {
    threads.emplace_back([&, i] { winners += cache.insert(ramp("S2_2", 1.0f + static_cast<float>(i))); });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(winners.load(), 1);
  const auto loaded = cache.load("S2_2");
  ASSERT_TRUE(loaded);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(tmp.path())) files += e.is_regular_file();
  EXPECT_EQ(files, 1u);
}
