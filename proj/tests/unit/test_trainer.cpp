#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "oracles.hpp"
#include "synthetic.hpp"
#include "tajweed/error.hpp"
#include "tajweed/trainer.hpp"

namespace fs = std::filesystem;
using namespace tajweed;
using namespace tajweed::train;
namespace synth = tajweed::testing;

namespace {

torch::Tensor pw_tensor(const std::array<double, 3>& pw) {
  return torch::tensor(std::vector<double>(pw.begin(), pw.end()), torch::kFloat64);
}

TensorSet random_set(std::size_t n, std::uint64_t seed, const std::string& prefix) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g;
  std::vector<dsp::SpectrogramTensor> tensors(n);
  std::vector<RuleLabels> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    tensors[i].clip_id = prefix + std::to_string(i);
    // identical channel planes, as produced by preprocessing
    for (std::size_t p = 0; p < 224 * 224; ++p) {
      const float v = g(rng);
      for (int c = 0; c < 3; ++c) tensors[i].data[p * 3 + c] = v;
    }
    labels[i] = RuleLabels{std::uint8_t(rng() % 2), std::uint8_t(rng() % 2), std::uint8_t(rng() % 2)};
  }
  return make_tensor_set(tensors, labels);
}

model::TajweedNet scratch_net(std::uint64_t seed) {
  ModelConfig c;
  c.pretrained = false;
  return model::build_model(c, seed);
}

TrainConfig tiny_config(int epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 3;
  c.seed = 5;
  return c;
}

}  // namespace

TEST(PosWeights, Reciprocal) {
  const auto pw = compute_pos_weights({1.0, 0.19, 0.95});
  EXPECT_DOUBLE_EQ(pw[0], 1.0);
  EXPECT_DOUBLE_EQ(pw[1], 1.0 / 0.19);
  EXPECT_DOUBLE_EQ(pw[2], 1.0 / 0.95);
  EXPECT_THROW(compute_pos_weights({1.0, 0.0, 1.0}), UsageError);
  EXPECT_THROW(compute_pos_weights({1.0, -2.0, 1.0}), UsageError);
}

TEST(WeightedBce, KnownValues) {
  const auto pw = pw_tensor({1.0, 1.0, 1.0});
  const auto z = torch::zeros({1, 3}, torch::kFloat64);
  EXPECT_NEAR(weighted_bce_logits(z, torch::ones({1, 3}, torch::kFloat64), pw).item<double>(), std::log(2.0), 1e-15);
  EXPECT_NEAR(weighted_bce_logits(z, torch::zeros({1, 3}, torch::kFloat64), pw).item<double>(), std::log(2.0), 1e-15);
  // positive weight 4 on a target-1 element at z = 0: 4 ln 2
  const auto one = torch::tensor({{1.0, 0.0, 0.0}}, torch::kFloat64);
  EXPECT_NEAR(weighted_bce_logits(z, one, pw_tensor({4.0, 1.0, 1.0})).item<double>(), (4.0 + 2.0) * std::log(2.0) / 3.0,
              1e-15);
}

TEST(WeightedBce, MatchesOracleAndStaysFinite) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-8.0, 8.0);
  const std::array<double, 3> pw{1.0, 1.0 / 0.19, 1.0 / 0.95};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> z(15), y(15);
    for (auto& v : z) v = u(rng);
    for (auto& v : y) v = static_cast<double>(rng() % 2);
    const auto got = weighted_bce_logits(torch::tensor(z, torch::kFloat64).view({5, 3}),
                                         torch::tensor(y, torch::kFloat64).view({5, 3}), pw_tensor(pw))
                         .item<double>();
    ASSERT_NEAR(got, oracle::weighted_bce(z, y, pw), 1e-12);
  }
  const auto big = torch::tensor({{100.0, -100.0, 100.0}}, torch::kFloat32);
  const auto tgt = torch::tensor({{0.0, 1.0, 1.0}}, torch::kFloat32);
  const double v = weighted_bce_logits(big, tgt, pw_tensor(pw).to(torch::kFloat32)).item<double>();
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_NEAR(v, (100.0 + pw[1] * 100.0) / 3.0, 1e-3);
}

TEST(WeightedBce, PermutationInvariantAndGradientMatchesFiniteDifference) {
  const auto z = torch::randn({6, 3}, torch::kFloat64).requires_grad_(true);
  const auto y = torch::randint(0, 2, {6, 3}, torch::kFloat64);
  const auto pw = pw_tensor({1.0, 5.0, 1.2});
  const auto perm = torch::randperm(6);
  const auto a = weighted_bce_logits(z, y, pw);
  const auto b = weighted_bce_logits(z.index_select(0, perm), y.index_select(0, perm), pw);
  EXPECT_NEAR(a.item<double>(), b.item<double>(), 1e-14);

  a.backward();
  const auto grad = z.grad().clone();
  torch::NoGradGuard ng;
  const double h = 1e-6;
  for (std::int64_t i = 0; i < 18; ++i) {
    auto zp = z.detach().clone().view(-1);
    auto zm = zp.clone();
    zp[i] += h;
    zm[i] -= h;
    const double fd = (weighted_bce_logits(zp.view({6, 3}), y, pw).item<double>() -
                       weighted_bce_logits(zm.view({6, 3}), y, pw).item<double>()) /
                      (2.0 * h);
    EXPECT_NEAR(grad.view(-1)[i].item<double>(), fd, 1e-8);
  }
}

TEST(WeightedBce, ShapeErrors) {
  const auto pw = pw_tensor({1, 1, 1});
  EXPECT_THROW(weighted_bce_logits(torch::zeros({2, 3}), torch::zeros({3, 3}), pw), DataError);
  EXPECT_THROW(weighted_bce_logits(torch::zeros({2, 3}), torch::zeros({2, 3}), torch::ones({2})), DataError);
}

TEST(Predictions, ThresholdIsInclusive) {
  const auto logits = torch::tensor({{0.0, -0.01, 0.01}, {5.0, -5.0, 0.0}});
  const auto p = predictions_from_logits(logits, 0.5);
  ASSERT_EQ(p.verdicts.size(), 2u);
  EXPECT_EQ(p.verdicts[0], (LabelRow{1, 0, 1}));
  EXPECT_EQ(p.verdicts[1], (LabelRow{1, 0, 1}));
  EXPECT_DOUBLE_EQ(p.probabilities[0][0], 0.5);
  EXPECT_NEAR(p.probabilities[1][0], oracle::sigmoid(5.0), 1e-7);
  EXPECT_EQ(predictions_from_logits(logits, 0.9).verdicts[1], (LabelRow{1, 0, 0}));
}

TEST(TensorSetTest, ImagesTileThePlane) {
  const auto set = random_set(3, 2, "S1_");
  const auto img = set.images(torch::tensor({2, 0}, torch::kLong));
  EXPECT_EQ(img.sizes(), (std::vector<std::int64_t>{2, 3, 224, 224}));
  EXPECT_TRUE(torch::equal(img[0][1], set.planes[2]));
  EXPECT_TRUE(torch::equal(img[1][2], set.planes[0]));
  EXPECT_EQ(set.labels().size(), 3u);
}

TEST(Train, SmallLearningRateStepReducesLoss) {
  auto net = scratch_net(3);
  const auto set = random_set(4, 3, "S2_");
  const auto pw = torch::tensor({1.0f, 1.0f / 0.19f, 1.0f / 0.95f});
  const auto idx = torch::arange(4);
  net->eval();  // fixed BN statistics and no dropout so the two losses are comparable
  torch::optim::Adam opt(net->parameters(), torch::optim::AdamOptions(1e-5));
  const auto before = weighted_bce_logits(net->forward_nchw(set.images(idx)), set.targets, pw);
  before.backward();
  opt.step();
  torch::NoGradGuard ng;
  const auto after = weighted_bce_logits(net->forward_nchw(set.images(idx)), set.targets, pw);
  EXPECT_LT(after.item<double>(), before.item<double>());
}

TEST(Train, RejectsBadConfigAndEmptySets) {
  auto net = scratch_net(1);
  const auto set = random_set(2, 1, "S3_");
  EXPECT_THROW(train::train(net, set, set, tiny_config(0)), UsageError);
  EXPECT_THROW(train::train(net, TensorSet{{}, torch::zeros({0, 224, 224}), torch::zeros({0, 3})}, set, tiny_config(1)),
               DataError);
}

TEST(Train, WritesRunArtifactsAndIsReproducible) {
  synth::TempDir tmp;
  const auto train_set = random_set(6, 10, "S4_");
  const auto test_set = random_set(2, 11, "S5_");

  auto net = scratch_net(7);
  int callbacks = 0;
  TrainOptions opts;
  opts.run_dir = tmp / "run";
  opts.on_epoch = [&](const EpochMetrics&) { ++callbacks; };
  opts.checkpoint_extra = {{"note", "x"}};
  const auto r = train::train(net, train_set, test_set, tiny_config(2), opts);

  ASSERT_EQ(r.metrics.size(), 2u);
  EXPECT_EQ(callbacks, 2);
  EXPECT_EQ(eval::read_metrics_csv(tmp / "run" / "metrics.csv"), r.metrics);
  for (const auto* f : {"checkpoint_best", "checkpoint_final", "curves.png", "curves.json"}) {
    EXPECT_TRUE(fs::exists(tmp / "run" / f)) << f;
  }
  const double min_loss = std::min(r.metrics[0].test_loss, r.metrics[1].test_loss);
  EXPECT_EQ(r.best_test_loss, min_loss);

  // the final checkpoint reproduces the last logged test loss
  auto final_ck = model::load_checkpoint(tmp / "run" / "checkpoint_final");
  EXPECT_EQ(final_ck.checksum, r.final_checkpoint_id);
  EXPECT_EQ(final_ck.metadata.at("note"), "x");
  EXPECT_EQ(final_ck.metadata.at("epoch"), 2);
  const auto pw_values = compute_pos_weights(TrainConfig{}.loss_weights);
  const auto pw = torch::tensor(std::vector<double>(pw_values.begin(), pw_values.end()), torch::kFloat32);
  const auto ev = evaluate_set(final_ck.net, test_set, pw, 0.5, 3);
  EXPECT_EQ(ev.loss, r.metrics.back().test_loss);

  auto again = scratch_net(7);
  const auto r2 = train::train(again, train_set, test_set, tiny_config(2));
  EXPECT_EQ(r2.metrics, r.metrics);
}

TEST(Train, NonFiniteLossWritesDiagnostic) {
  synth::TempDir tmp;
  auto set = random_set(3, 4, "S6_");
  set.targets[1][0] = std::numeric_limits<float>::quiet_NaN();
  auto net = scratch_net(2);
  TrainOptions opts;
  opts.run_dir = tmp.path();
  EXPECT_THROW(train::train(net, set, set, tiny_config(1), opts), RuntimeFailure);
  ASSERT_TRUE(fs::exists(tmp / "nonfinite_batch.json"));
  const auto diag = nlohmann::json::parse(std::ifstream(tmp / "nonfinite_batch.json"));
  const auto ids = diag.at("clip_ids").get<std::vector<std::string>>();
  EXPECT_NE(std::find(ids.begin(), ids.end(), "S6_1"), ids.end());
}
