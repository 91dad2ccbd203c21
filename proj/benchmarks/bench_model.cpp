#include <benchmark/benchmark.h>

#include "tajweed/model.hpp"
#include "tajweed/trainer.hpp"

using namespace tajweed;

namespace {

model::TajweedNet scratch() {
  ModelConfig c;
  c.pretrained = false;
  return model::build_model(c, 0);
}

}  // namespace

static void BM_ForwardEval(benchmark::State& state) {
  auto net = scratch();
  net->eval();
  torch::NoGradGuard ng;
  const auto x = torch::randn({state.range(0), 224, 224, 3});
  for (auto _ : state) benchmark::DoNotOptimize(net->forward(x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardEval)->Arg(1)->Arg(16)->Unit(benchmark::kMillisecond);

static void BM_TrainStep(benchmark::State& state) {
  auto net = scratch();
  net->train();
  torch::optim::Adam opt(net->parameters(), torch::optim::AdamOptions(1e-4));
  const auto x = torch::randn({state.range(0), 3, 224, 224});
  const auto y = torch::randint(0, 2, {state.range(0), 3}).to(torch::kFloat32);
  const auto pw = torch::tensor({1.0f, 1.0f / 0.19f, 1.0f / 0.95f});
  for (auto _ : state) {
    opt.zero_grad();
    auto loss = train::weighted_bce_logits(net->forward_nchw(x), y, pw);
    loss.backward();
    opt.step();
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TrainStep)->Arg(16)->Unit(benchmark::kMillisecond)->Iterations(3);

static void BM_ChannelGate(benchmark::State& state) {
  model::ChannelGate g(1280, 80);
  torch::NoGradGuard ng;
  const auto v = torch::rand({16, 1280});
  for (auto _ : state) benchmark::DoNotOptimize(g->forward(v));
}
BENCHMARK(BM_ChannelGate)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
