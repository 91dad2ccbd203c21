#include <gtest/gtest.h>

#include <fstream>

#include "synthetic.hpp"
#include "tajweed/config.hpp"
#include "tajweed/error.hpp"
#include "tajweed/hashing.hpp"

using namespace tajweed;
namespace synth = tajweed::testing;

TEST(Sha256, KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Sha256, IncrementalMatchesOneShot) {
  Sha256 h;
  h.update("ab");
  h.update("c");
  const auto d = h.finish();
  EXPECT_EQ(to_hex(d), sha256_hex("abc"));

  synth::TempDir tmp;
  std::ofstream(tmp / "f") << "abc";
  EXPECT_EQ(sha256_file_hex(tmp / "f"), sha256_hex("abc"));
}

TEST(PipelineConfig, DefaultsArePinned) {
  const PipelineConfig c;
  EXPECT_EQ(c.dsp.target_rate_hz, 11025);
  EXPECT_EQ(c.dsp.n_mels, 224);
  EXPECT_EQ(c.model.dropout_p, 0.7);
  EXPECT_EQ(c.model.se_hidden(), 80);
  EXPECT_EQ(c.train.learning_rate, 1e-4);
  EXPECT_EQ(c.train.batch_size, 16);
  EXPECT_EQ(c.train.loss_weights, (std::array<double, 3>{1.0, 0.19, 0.95}));
  EXPECT_NO_THROW(c.validate());
}

TEST(PipelineConfig, JsonRoundTripAndFile) {
  PipelineConfig c;
  c.train.epochs = 7;
  c.model.se_placement = SePlacement::kNone;
  c.dsp.hop = 128;
  EXPECT_EQ(PipelineConfig::from_json(c.to_json()), c);

  synth::TempDir tmp;
  c.save(tmp / "c.json");
  EXPECT_EQ(PipelineConfig::load(tmp / "c.json"), c);
}

TEST(PipelineConfig, MissingKeysKeepDefaultsUnknownRejected) {
  const auto c = PipelineConfig::from_json({{"epochs", 3}});
  EXPECT_EQ(c.train.epochs, 3);
  EXPECT_EQ(c.train.batch_size, 16);
  EXPECT_THROW(PipelineConfig::from_json({{"epoch", 3}}), UsageError);
  EXPECT_THROW(PipelineConfig::from_json({{"dsp", {{"hop", 1}}}}), UsageError);
  EXPECT_THROW(PipelineConfig::from_json(nlohmann::json::array()), UsageError);
}

TEST(PipelineConfig, Overrides) {
  PipelineConfig c;
  c.apply_overrides({"epochs=5", "learning_rate=0.001", "se_placement=none", "loss_weights=[1,1,1]"});
  EXPECT_EQ(c.train.epochs, 5);
  EXPECT_EQ(c.train.learning_rate, 0.001);
  EXPECT_EQ(c.model.se_placement, SePlacement::kNone);
  EXPECT_EQ(c.train.loss_weights, (std::array<double, 3>{1, 1, 1}));
  EXPECT_THROW(c.apply_overrides({"nonsense=1"}), UsageError);
  EXPECT_THROW(c.apply_overrides({"epochs"}), UsageError);
}

TEST(PipelineConfig, ValidationErrors) {
  auto bad = [](auto mutate) {
    PipelineConfig c;
    mutate(c);
    return c;
  };
  EXPECT_THROW(bad([](auto& c) { c.train.epochs = 0; }).validate(), UsageError);
  EXPECT_THROW(bad([](auto& c) { c.train.learning_rate = 0; }).validate(), UsageError);
  EXPECT_THROW(bad([](auto& c) { c.train.loss_weights[1] = 0; }).validate(), UsageError);
  EXPECT_THROW(bad([](auto& c) { c.train.threshold = 1.0; }).validate(), UsageError);
  EXPECT_THROW(bad([](auto& c) { c.model.se_reduction = 7; }).validate(), UsageError);
  EXPECT_THROW(bad([](auto& c) { c.model.dropout_p = 1.0; }).validate(), UsageError);
  EXPECT_THROW(bad([](auto& c) { c.model.se_placement = SePlacement::kBeforePool; }).validate(), UsageError);
  EXPECT_THROW(bad([](auto& c) { c.train.optimizer = "sgd"; }).validate(), UsageError);
  EXPECT_THROW(parse_se_placement("sideways"), UsageError);
  EXPECT_EQ(parse_se_placement(to_string(SePlacement::kAfterPool)), SePlacement::kAfterPool);
}
