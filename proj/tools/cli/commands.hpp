#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "manifest.hpp"

namespace tajweed::cli {

struct Context {
  bool json = false;
  ManifestEntry* entry = nullptr;
};

struct PrepareArgs {
  std::string config;
  std::string root;
  std::string labels;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool exclude_imputed = false;
  bool decode = false;
};

struct PreprocessArgs {
  std::string config;
  std::string root;
  std::string cache_dir;
  int jobs = 1;
};

struct TrainArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<int> epochs;
  std::string root;
  std::string run_dir;
};

struct EvaluateArgs {
  std::string checkpoint;
  std::string root;
  std::string split;
  std::string cache_dir;
  std::string out;
};

struct PredictArgs {
  std::string checkpoint;
  std::vector<std::string> files;
};

struct ServeArgs {
  std::string checkpoint;
  std::string host = "0.0.0.0";
  int port = 8080;
  std::vector<std::string> allowed_origins;
};

// Each command returns its process exit status and records inputs/outputs
// in ctx.entry. Failures are reported by throwing tajweed::Error.
int run_prepare(const PrepareArgs& args, Context& ctx);
int run_preprocess(const PreprocessArgs& args, Context& ctx);
int run_train(const TrainArgs& args, Context& ctx);
int run_evaluate(const EvaluateArgs& args, Context& ctx);
int run_predict(const PredictArgs& args, Context& ctx);
int run_serve(const ServeArgs& args, Context& ctx);

}  // namespace tajweed::cli
