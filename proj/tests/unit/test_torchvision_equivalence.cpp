#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>

#include <nlohmann/json.hpp>

#include "tajweed/model.hpp"

namespace fs = std::filesystem;
using namespace tajweed;

// Fixture produced by tools/export_backbone_weights.py --random-init --fixture.
TEST(TorchvisionEquivalence, PooledFeaturesMatch) {
  const char* dir = std::getenv("TAJWEED_BACKBONE_FIXTURE_DIR");
  if (!dir || !fs::exists(fs::path(dir) / "backbone.tjw")) GTEST_SKIP() << "fixture not generated";
  const fs::path root(dir);

  ModelConfig c;
  c.pretrained = true;
  c.pretrained_weights = (root / "backbone.tjw").string();
  auto net = model::build_model(c, 0);
  net->eval();

  const auto fx = nlohmann::json::parse(std::ifstream(root / "backbone.fixture.json"));
  const auto input = fx.at("input").get<std::vector<float>>();
  const auto want = fx.at("pooled").get<std::vector<float>>();
  ASSERT_EQ(input.size(), 3u * 224 * 224);
  ASSERT_EQ(want.size(), 1280u);

  torch::NoGradGuard ng;
  const auto x = torch::from_blob(const_cast<float*>(input.data()), {1, 3, 224, 224}).clone();
  const auto got = net->pooled_features(x).contiguous();
  const auto ref = torch::from_blob(const_cast<float*>(want.data()), {1, 1280}).clone();
  const double max_abs = (got - ref).abs().max().item<double>();
  const double scale = ref.abs().max().item<double>();
  EXPECT_LE(max_abs, 1e-4 * std::max(1.0, scale)) << "max |diff| " << max_abs << ", max |ref| " << scale;
}
