#include "tajweed/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <mutex>
#include <shared_mutex>

#include "tajweed/config.hpp"
#include "tajweed/error.hpp"
#include "tajweed/hashing.hpp"
#include "tajweed/log.hpp"
#include "tajweed/model.hpp"
#include "tajweed/rules.hpp"
#include "tajweed/trainer.hpp"
#include "tajweed/wav.hpp"

namespace tajweed::service {

namespace {

Reply error_reply(int status, std::string_view error, std::string_view reason) {
  return {status, {{"error", error}, {"reason", reason}}};
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

}  // namespace

bool is_wav_content_type(std::string_view content_type) {
  auto media = lower(content_type.substr(0, content_type.find(';')));
  media.erase(std::remove_if(media.begin(), media.end(), [](unsigned char c) { return std::isspace(c); }),
              media.end());
  return media == "audio/wav" || media == "audio/wave" || media == "audio/x-wav" || media == "audio/vnd.wave" ||
         media == "application/octet-stream";
}

nlohmann::json rules_json() {
  nlohmann::json rules = nlohmann::json::array();
  for (std::size_t i = 0; i < kNumRules; ++i) {
    rules.push_back({{"index", i},
                     {"key", kRules[i].key},
                     {"name", kRules[i].name},
                     {"english", kRules[i].english},
                     {"description", kRules[i].description}});
  }
  return {{"rules", rules},
          {"ordering", "probabilities[i] and verdicts[i] refer to rules[i]"}};
}

struct InferenceService::State {
  mutable std::shared_mutex mutex;
  model::TajweedNet net{nullptr};
  std::string model_id;
  dsp::DspConfig dsp;
  std::string load_error;
};

struct InferenceService::Http {
  httplib::Server server;
};

InferenceService::InferenceService(ServiceOptions options)
    : options_(std::move(options)),
      started_(std::chrono::steady_clock::now()),
      state_(std::make_unique<State>()),
      http_(std::make_unique<Http>()) {
  state_->dsp = options_.dsp;
  if (options_.checkpoint.empty()) {
    state_->load_error = "no checkpoint configured";
  } else {
    try {
      swap_checkpoint(options_.checkpoint);
    } catch (const std::exception& e) {
      state_->load_error = e.what();
      log::warn(std::string("service starting degraded: ") + e.what());
    }
  }
  install_routes();
}

InferenceService::~InferenceService() { stop(); }

void InferenceService::swap_checkpoint(const std::filesystem::path& path) {
  auto loaded = model::load_checkpoint(path);
  dsp::DspConfig dsp_cfg = options_.dsp;
  if (loaded.metadata.contains("pipeline_config")) {
    dsp_cfg = PipelineConfig::from_json(loaded.metadata.at("pipeline_config")).dsp;
  }
  dsp_cfg.validate();
  std::unique_lock lock(state_->mutex);
  state_->net = loaded.net;
  state_->model_id = loaded.checksum;
  state_->dsp = dsp_cfg;
  state_->load_error.clear();
  log::info("serving model " + loaded.checksum + " (dsp " + dsp_cfg.hash() + ")");
}

bool InferenceService::ready() const {
  std::shared_lock lock(state_->mutex);
  return !state_->net.is_empty();
}

std::string InferenceService::model_id() const {
  std::shared_lock lock(state_->mutex);
  return state_->model_id;
}

Reply InferenceService::predict(std::string_view content_type, std::span<const std::byte> body) const {
  if (!is_wav_content_type(content_type)) {
    return error_reply(415, "unsupported media type", "expected audio/wav, got '" + std::string(content_type) + "'");
  }
  if (body.size() > options_.max_body_bytes) return error_reply(400, "invalid audio", "too long");

  std::shared_lock lock(state_->mutex);
  if (state_->net.is_empty()) return error_reply(503, "model not loaded", state_->load_error);

  Waveform wave;
  try {
    wave = decode_wav(body);
  } catch (const std::exception& e) {
    return error_reply(400, "invalid audio", std::string("undecodable: ") + e.what());
  }
  const double duration = wave.duration_s();
  if (duration < options_.min_duration_s) return error_reply(400, "invalid audio", "too short");
  if (duration > options_.max_duration_s) return error_reply(400, "invalid audio", "too long");

  dsp::SpectrogramTensor tensor;
  try {
    tensor = dsp::preprocess_waveform(wave, state_->dsp);
  } catch (const DataError& e) {
    return error_reply(400, "invalid audio", e.what());
  }

  torch::NoGradGuard no_grad;
  const auto batch = model::to_batch(std::span<const dsp::SpectrogramTensor>(&tensor, 1));
  const auto pred = train::predictions_from_logits(state_->net->forward(batch), options_.threshold);

  nlohmann::json probabilities = nlohmann::json::array();
  nlohmann::json verdicts = nlohmann::json::array();
  for (std::size_t j = 0; j < kNumRules; ++j) {
    probabilities.push_back(pred.probabilities[0][j]);
    verdicts.push_back(pred.verdicts[0][j] == 1);
  }
  const auto token = sha256_hex(std::string_view(reinterpret_cast<const char*>(body.data()), body.size()));
  return {200,
          {{"clip_token", token.substr(0, 16)},
           {"probabilities", probabilities},
           {"verdicts", verdicts},
           {"model_id", state_->model_id},
           {"dsp_config_hash", state_->dsp.hash()},
           {"duration_s", duration}}};
}

Reply InferenceService::health() const {
  const double uptime = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
  std::shared_lock lock(state_->mutex);
  if (state_->net.is_empty()) {
    return {503, {{"status", "degraded"}, {"model_id", nullptr}, {"uptime_s", uptime}, {"reason", state_->load_error}}};
  }
  return {200,
          {{"status", "ready"},
           {"model_id", state_->model_id},
           {"dsp_config_hash", state_->dsp.hash()},
           {"uptime_s", uptime}}};
}

Reply InferenceService::rules() const { return {200, rules_json()}; }

void InferenceService::install_routes() {
  auto& srv = http_->server;
  srv.set_payload_max_length(std::max<std::size_t>(options_.max_body_bytes * 4, 1u << 20));

  const auto allowed = options_.allowed_origins;
  auto origin_ok = [allowed](const std::string& origin) {
    return std::any_of(allowed.begin(), allowed.end(),
                       [&](const std::string& a) { return a == "*" || a == origin; });
  };
  srv.set_post_routing_handler([origin_ok](const httplib::Request& req, httplib::Response& res) {
    if (!req.has_header("Origin")) return;
    const auto origin = req.get_header_value("Origin");
    if (!origin_ok(origin)) return;
    res.set_header("Access-Control-Allow-Origin", origin);
    res.set_header("Vary", "Origin");
  });

  auto send = [](httplib::Response& res, const Reply& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };

  srv.Options(R"(/.*)", [origin_ok](const httplib::Request& req, httplib::Response& res) {
    if (!origin_ok(req.get_header_value("Origin"))) {
      res.status = 403;
      return;
    }
    res.status = 204;
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.set_header("Access-Control-Max-Age", "600");
  });

  srv.Post("/predict", [this, send](const httplib::Request& req, httplib::Response& res) {
    const auto* p = reinterpret_cast<const std::byte*>(req.body.data());
    const auto reply = predict(req.get_header_value("Content-Type"), {p, req.body.size()});
    if (reply.status != 200) {
      log::info("POST /predict -> " + std::to_string(reply.status) + " (" + reply.body.value("reason", "") + ")");
    }
    send(res, reply);
  });
  srv.Get("/health", [this, send](const httplib::Request&, httplib::Response& res) { send(res, health()); });
  srv.Get("/rules", [this, send](const httplib::Request&, httplib::Response& res) { send(res, rules()); });

  srv.set_exception_handler([send](const httplib::Request& req, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "unknown error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    log::error(req.method + " " + req.path + ": " + what);
    send(res, error_reply(500, "internal error", what));
  });
}

bool InferenceService::listen() {
  log::info("listening on " + options_.host + ":" + std::to_string(options_.port));
  return http_->server.listen(options_.host, options_.port);
}

int InferenceService::bind_any_port() { return http_->server.bind_to_any_port(options_.host); }

bool InferenceService::listen_after_bind() { return http_->server.listen_after_bind(); }

void InferenceService::stop() {
  if (http_ && http_->server.is_running()) http_->server.stop();
}

void InferenceService::wait_until_running() const { http_->server.wait_until_ready(); }

}  // namespace tajweed::service
