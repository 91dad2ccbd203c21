#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tajweed/dsp.hpp"

namespace tajweed::service {

struct ServiceOptions {
  std::filesystem::path checkpoint;
  std::string host = "0.0.0.0";
  int port = 8080;
  /// Origins echoed in Access-Control-Allow-Origin. "*" allows any.
  std::vector<std::string> allowed_origins;
  double min_duration_s = 0.25;
  double max_duration_s = 30.0;
  /// Hard cap on the request body, checked before decoding.
  std::size_t max_body_bytes = 16u << 20;
  /// Used when the checkpoint carries no pipeline config.
  dsp::DspConfig dsp;
  double threshold = 0.5;
};

struct Reply {
  int status = 200;
  nlohmann::json body;
};

/// Model holder plus request handlers. Handlers can be called directly (the
/// HTTP layer is a thin adapter around them) and are safe to call
/// concurrently; swap_checkpoint waits for in-flight predictions to finish.
class InferenceService {
 public:
  /// Loads options.checkpoint if set. A missing or bad checkpoint leaves the
  /// service running in the degraded state.
  explicit InferenceService(ServiceOptions options);
  ~InferenceService();

  InferenceService(const InferenceService&) = delete;
  InferenceService& operator=(const InferenceService&) = delete;

  /// Replaces the model. On failure the previous model stays loaded and the
  /// error is rethrown.
  void swap_checkpoint(const std::filesystem::path& path);

  bool ready() const;
  std::string model_id() const;

  Reply predict(std::string_view content_type, std::span<const std::byte> body) const;
  Reply health() const;
  Reply rules() const;

  /// Binds and serves until stop(). Returns false if the port could not be bound.
  bool listen();
  /// Binds to options.host on an ephemeral port; returns it (or -1). Call
  /// listen_after_bind() to serve.
  int bind_any_port();
  bool listen_after_bind();
  void stop();
  /// Blocks until the server accepts connections.
  void wait_until_running() const;

  const ServiceOptions& options() const { return options_; }

 private:
  struct State;
  struct Http;

  void install_routes();

  ServiceOptions options_;
  std::chrono::steady_clock::time_point started_;
  std::unique_ptr<State> state_;
  std::unique_ptr<Http> http_;
};

/// Rules metadata as served by GET /rules.
nlohmann::json rules_json();

bool is_wav_content_type(std::string_view content_type);

}  // namespace tajweed::service
