#include <gtest/gtest.h>

#include <thread>

#include <httplib.h>

#include "synthetic.hpp"
#include "tajweed/error.hpp"
#include "tajweed/service.hpp"
#include "tajweed/trainer.hpp"

namespace fs = std::filesystem;
using namespace tajweed;
using namespace tajweed::service;
namespace synth = tajweed::testing;

namespace {

std::string wav_body(double seconds, int rate = 11025, double freq = 440.0) {
  const auto bytes = encode_wav_pcm16(synth::tone(freq, seconds, rate, 0.4, 0.01, 3));
  return {reinterpret_cast<const char*>(bytes.data()), bytes.size()};
}

std::span<const std::byte> as_bytes(const std::string& s) {
  return {reinterpret_cast<const std::byte*>(s.data()), s.size()};
}

std::string make_checkpoint(const fs::path& path, std::uint64_t seed, const nlohmann::json& extra = {}) {
  ModelConfig c;
  c.pretrained = false;
  auto net = model::build_model(c, seed);
  return model::save_checkpoint(net, path, extra);
}

// One model shared by every test in this file; building it dominates runtime.
class ServiceTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new synth::TempDir("svc");
    id_a_ = make_checkpoint(*dir_ / "a", 1);
    id_b_ = make_checkpoint(*dir_ / "b", 2);
  }
  static void TearDownTestSuite() { delete dir_; }

  static ServiceOptions options(const fs::path& ckpt) {
    ServiceOptions o;
    o.checkpoint = ckpt;
    o.host = "127.0.0.1";
    o.allowed_origins = {"https://coach.example"};
    return o;
  }

  static synth::TempDir* dir_;
  static std::string id_a_, id_b_;
};

synth::TempDir* ServiceTest::dir_ = nullptr;
std::string ServiceTest::id_a_;
std::string ServiceTest::id_b_;

// Serves on an ephemeral port for the lifetime of the object.
struct Running {
  explicit Running(InferenceService& s) : svc(s), port(s.bind_any_port()), th([this] { svc.listen_after_bind(); }) {
    svc.wait_until_running();
  }
  ~Running() {
    svc.stop();
    th.join();
  }
  httplib::Client client() const { return httplib::Client("127.0.0.1", port); }

  InferenceService& svc;
  int port;
  std::thread th;
};

}  // namespace

TEST(ContentType, WavVariants) {
  for (const auto* t : {"audio/wav", "audio/x-wav", "audio/wave", "audio/vnd.wave", "AUDIO/WAV; charset=binary",
                        "application/octet-stream"}) {
    EXPECT_TRUE(is_wav_content_type(t)) << t;
  }
  for (const auto* t : {"audio/mpeg", "text/plain", "", "audio/wavx"}) EXPECT_FALSE(is_wav_content_type(t)) << t;
}

TEST(RulesJson, OrderAndKeys) {
  const auto j = rules_json();
  ASSERT_EQ(j.at("rules").size(), 3u);
  EXPECT_EQ(j["rules"][0]["key"], "separate_stretching");
  EXPECT_EQ(j["rules"][1]["name"], "Ghunnah");
  EXPECT_EQ(j["rules"][2]["index"], 2);
  EXPECT_EQ(j["rules"][2]["name"], "Ikhfaa");
}

TEST_F(ServiceTest, PredictMatchesLocalModel) {
  InferenceService svc(options(*dir_ / "a"));
  ASSERT_TRUE(svc.ready());
  EXPECT_EQ(svc.model_id(), id_a_);
  const auto body = wav_body(1.2, 16000);
  const auto r = svc.predict("audio/wav", as_bytes(body));
  ASSERT_EQ(r.status, 200) << r.body.dump();
  EXPECT_EQ(r.body.at("model_id"), id_a_);
  EXPECT_EQ(r.body.at("dsp_config_hash"), dsp::DspConfig{}.hash());
  EXPECT_NEAR(r.body.at("duration_s").get<double>(), 1.2, 1e-3);
  EXPECT_EQ(r.body.at("clip_token").get<std::string>().size(), 16u);

  auto local = model::load_checkpoint(*dir_ / "a");
  const auto t = dsp::preprocess_waveform(decode_wav(as_bytes(body)), dsp::DspConfig{});
  const auto p = train::predict_batch(local.net, model::to_batch(std::span(&t, 1)), 0.5);
  for (int j = 0; j < 3; ++j) {
    EXPECT_NEAR(r.body["probabilities"][j].get<double>(), p.probabilities[0][j], 1e-6);
    EXPECT_EQ(r.body["verdicts"][j].get<int>(), p.verdicts[0][j]);
  }
  // repeated submissions are answered identically
  EXPECT_EQ(svc.predict("audio/wav", as_bytes(body)).body, r.body);
}

TEST_F(ServiceTest, RejectionsCarryReasons) {
  auto opts = options(*dir_ / "a");
  opts.max_body_bytes = 200000;
  InferenceService svc(opts);
  const auto ok = wav_body(1.0);
  EXPECT_EQ(svc.predict("audio/mpeg", as_bytes(ok)).status, 415);
  EXPECT_EQ(svc.predict("audio/wav", as_bytes(std::string("RIFF garbage"))).status, 400);
  const auto short_r = svc.predict("audio/wav", as_bytes(wav_body(0.2)));
  EXPECT_EQ(short_r.status, 400);
  EXPECT_EQ(short_r.body.at("reason"), "too short");
  const auto big = wav_body(10.0, 11025);  // ~220 kB, over the body cap
  const auto big_r = svc.predict("audio/wav", as_bytes(big));
  EXPECT_EQ(big_r.status, 400);
  EXPECT_EQ(big_r.body.at("reason"), "too long");
  EXPECT_EQ(svc.predict("audio/wav", as_bytes(wav_body(0.25, 8000))).status, 200);
}

TEST_F(ServiceTest, DegradedThenSwapToReady) {
  InferenceService svc(options(*dir_ / "nope"));
  EXPECT_FALSE(svc.ready());
  EXPECT_EQ(svc.health().status, 503);
  EXPECT_TRUE(svc.health().body.at("model_id").is_null());
  EXPECT_EQ(svc.predict("audio/wav", as_bytes(wav_body(1.0))).status, 503);

  svc.swap_checkpoint(*dir_ / "a");
  EXPECT_TRUE(svc.ready());
  EXPECT_EQ(svc.health().status, 200);
  EXPECT_EQ(svc.health().body.at("model_id"), id_a_);
}

TEST_F(ServiceTest, FailedSwapKeepsPreviousModel) {
  InferenceService svc(options(*dir_ / "a"));
  EXPECT_THROW(svc.swap_checkpoint(*dir_ / "missing"), DataError);
  EXPECT_EQ(svc.model_id(), id_a_);
  EXPECT_TRUE(svc.ready());
}

TEST_F(ServiceTest, CheckpointPipelineConfigDrivesDsp) {
  dsp::DspConfig custom;
  custom.hop = 128;
  PipelineConfig pc;
  pc.dsp = custom;
  make_checkpoint(*dir_ / "c", 3, {{"pipeline_config", pc.to_json()}});
  InferenceService svc(options(*dir_ / "c"));
  EXPECT_EQ(svc.health().body.at("dsp_config_hash"), custom.hash());
}

TEST_F(ServiceTest, HotSwapUnderConcurrentRequests) {
  InferenceService svc(options(*dir_ / "a"));
  Running run(svc);
  const auto body = wav_body(0.5);
  std::atomic<int> bad{0};
  std::atomic<bool> done{false};
  std::vector<std::thread> clients;
  for (int c = 0; c < 2; ++c) {
    clients.emplace_back([&] {
      auto cli = run.client();
      while (!done) {
        const auto r = cli.Post("/predict", body, "audio/wav");
        if (!r || r->status != 200) {
          ++bad;
          continue;
        }
        const auto id = nlohmann::json::parse(r->body).at("model_id").get<std::string>();
        if (id != id_a_ && id != id_b_) ++bad;
      }
    });
  }
  std::this_thread::sleep_for(std::chrono::milliseconds(300));
  svc.swap_checkpoint(*dir_ / "b");
  std::this_thread::sleep_for(std::chrono::milliseconds(300));
  done = true;
  for (auto& t : clients) t.join();
  EXPECT_EQ(bad.load(), 0);
  EXPECT_EQ(svc.model_id(), id_b_);
  auto cli = run.client();
  const auto r = cli.Post("/predict", body, "audio/wav");
  ASSERT_TRUE(r);
  EXPECT_EQ(nlohmann::json::parse(r->body).at("model_id"), id_b_);
}

TEST_F(ServiceTest, HttpRoutesAndCors) {
  InferenceService svc(options(*dir_ / "a"));
  Running run(svc);
  auto cli = run.client();

  const auto rules = cli.Get("/rules");
  ASSERT_TRUE(rules);
  EXPECT_EQ(rules->status, 200);
  EXPECT_EQ(nlohmann::json::parse(rules->body), rules_json());

  const auto allowed = cli.Get("/health", {{"Origin", "https://coach.example"}});
  ASSERT_TRUE(allowed);
  EXPECT_EQ(allowed->get_header_value("Access-Control-Allow-Origin"), "https://coach.example");

  const auto other = cli.Get("/health", {{"Origin", "https://evil.example"}});
  ASSERT_TRUE(other);
  EXPECT_FALSE(other->has_header("Access-Control-Allow-Origin"));

  const auto pre = cli.Options("/predict", {{"Origin", "https://coach.example"},
                                            {"Access-Control-Request-Method", "POST"}});
  ASSERT_TRUE(pre);
  EXPECT_EQ(pre->status, 204);
  EXPECT_NE(pre->get_header_value("Access-Control-Allow-Methods").find("POST"), std::string::npos);
  const auto pre_bad = cli.Options("/predict", {{"Origin", "https://evil.example"}});
  ASSERT_TRUE(pre_bad);
  EXPECT_EQ(pre_bad->status, 403);

  const auto wrong_type = cli.Post("/predict", wav_body(1.0), "text/plain");
  ASSERT_TRUE(wrong_type);
  EXPECT_EQ(wrong_type->status, 415);

  const auto missing = cli.Get("/nothing");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
}
