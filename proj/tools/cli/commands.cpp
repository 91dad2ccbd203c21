#include "commands.hpp"

#include <atomic>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include "tajweed/config.hpp"
#include "tajweed/error.hpp"
#include "tajweed/evaluator.hpp"
#include "tajweed/hashing.hpp"
#include "tajweed/ingest.hpp"
#include "tajweed/log.hpp"
#include "tajweed/model.hpp"
#include "tajweed/rules.hpp"
#include "tajweed/service.hpp"
#include "tajweed/tensor_cache.hpp"
#include "tajweed/trainer.hpp"
#include "tajweed/wav.hpp"

namespace fs = std::filesystem;

namespace tajweed::cli {

namespace {

PipelineConfig load_config(const std::string& path, Context& ctx) {
  if (path.empty()) return PipelineConfig{};
  if (!fs::exists(path)) throw UsageError("config file not found: " + path);
  ctx.entry->config_path = path;
  ctx.entry->hash_input(path);
  return PipelineConfig::load(path);
}

void emit(const Context& ctx, const nlohmann::json& result, const std::string& human) {
  if (ctx.json) {
    std::cout << result.dump(2) << std::endl;
  } else {
    std::cout << human << std::flush;
  }
}

std::string percent_triplet(const std::array<double, kNumRules>& v) {
  std::string out;
  for (std::size_t j = 0; j < kNumRules; ++j) {
    if (j) out += ", ";
    out += std::string(kRules[j].name) + " " + eval::format_percent(v[j]);
  }
  return out;
}

nlohmann::json per_rule(const std::array<double, kNumRules>& v) {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t i = 0; i < kNumRules; ++i) j[std::string(kRules[i].key)] = v[i];
  return j;
}

DatasetSplit load_or_make_split(const std::vector<ClipRecord>& corpus, const fs::path& manifest, std::uint64_t seed,
                                Context& ctx) {
  if (fs::exists(manifest)) {
    ctx.entry->hash_input(manifest);
    auto split = apply_split_manifest(corpus, manifest);
    log::info("using split manifest " + manifest.string());
    return split;
  }
  auto split = split_dataset(corpus, seed);
  write_split_manifest(split, manifest);
  ctx.entry->add_output(manifest);
  log::info("wrote split manifest " + manifest.string());
  return split;
}

/// Cached tensors for every record, computing and storing missing ones.
std::size_t fill_cache(std::span<const ClipRecord> records, const dsp::TensorCache& cache) {
  std::size_t computed = 0;
  for (const auto& r : records) {
    bool hit = false;
    cache.get_or_compute(r, &hit);
    if (!hit) ++computed;
  }
  return computed;
}

std::atomic<int> g_signal{0};

extern "C" void on_signal(int sig) { g_signal.store(sig); }

}  // namespace

int run_prepare(const PrepareArgs& args, Context& ctx) {
  auto cfg = load_config(args.config, ctx);
  const fs::path root = args.root.empty() ? fs::path(cfg.paths.data_root) : fs::path(args.root);
  const fs::path labels = args.labels.empty() ? root / "labels.csv" : fs::path(args.labels);
  const fs::path out = args.out.empty() ? fs::path(cfg.paths.split_manifest) : fs::path(args.out);
  const std::uint64_t seed = args.seed.value_or(cfg.train.seed);
  ctx.entry->seed = seed;

  if (!fs::is_regular_file(labels)) throw DataError("labels file not found: " + labels.string());
  ctx.entry->hash_input(labels);

  IngestOptions opts;
  opts.exclude_imputed = args.exclude_imputed;
  opts.decode_audio = args.decode;
  const auto corpus = load_corpus(root, labels, opts);
  const auto dist = class_distribution(corpus);
  const auto split = split_dataset(corpus, seed);
  write_split_manifest(split, out);
  ctx.entry->add_output(out);
  const auto manifest_hash = sha256_file_hex(out);

  std::vector<std::string> imputed;
  for (const auto& r : corpus) {
    if (r.imputed) imputed.push_back(r.clip_id);
  }

  const nlohmann::json result = {{"root", root.string()},
                                 {"clips", corpus.size()},
                                 {"imputed", imputed},
                                 {"negative_fraction", per_rule(dist)},
                                 {"train", split.train.size()},
                                 {"test", split.test.size()},
                                 {"seed", seed},
                                 {"split_manifest", out.string()},
                                 {"split_manifest_sha256", manifest_hash}};
  ctx.entry->details = result;

  std::string human = std::to_string(corpus.size()) + " clips";
  if (!imputed.empty()) {
    human += " (" + std::to_string(imputed.size()) + " with imputed labels:";
    for (const auto& id : imputed) human += " " + id;
    human += ")";
  }
  human += "\nnegatives: " + percent_triplet(dist) + "\n";
  human += "split: " + std::to_string(split.train.size()) + " train / " + std::to_string(split.test.size()) +
           " test, seed " + std::to_string(seed) + "\n";
  human += "manifest: " + out.string() + " sha256 " + manifest_hash + "\n";
  emit(ctx, result, human);
  return 0;
}

int run_preprocess(const PreprocessArgs& args, Context& ctx) {
  auto cfg = load_config(args.config, ctx);
  const fs::path root = args.root.empty() ? fs::path(cfg.paths.data_root) : fs::path(args.root);
  const fs::path cache_dir = args.cache_dir.empty() ? fs::path(cfg.paths.cache_dir) : fs::path(args.cache_dir);
  cfg.dsp.validate();
  if (args.jobs < 1) throw UsageError("--jobs must be at least 1");

  const fs::path labels = root / "labels.csv";
  if (!fs::is_regular_file(labels)) throw DataError("labels file not found: " + labels.string());
  ctx.entry->hash_input(labels);
  IngestOptions ingest;
  ingest.check_audio = false;  // a bad file is reported per clip below
  const auto corpus = load_corpus(root, labels, ingest);
  const dsp::TensorCache cache(cache_dir, cfg.dsp);

  std::atomic<std::size_t> next{0}, computed{0}, cached{0};
  std::mutex failures_mutex;
  nlohmann::json failures = nlohmann::json::array();
  auto worker = [&] {
    for (std::size_t i = next++; i < corpus.size(); i = next++) {
      const auto& r = corpus[i];
      try {
        bool hit = false;
        cache.get_or_compute(r, &hit);
        if (hit) {
          log::info("cached " + r.clip_id + ", skipped");
          ++cached;
        } else {
          log::debug("computed " + r.clip_id);
          ++computed;
        }
      } catch (const std::exception& e) {
        log::error(e.what());
        std::lock_guard lock(failures_mutex);
        failures.push_back({{"clip_id", r.clip_id}, {"error", e.what()}});
      }
    }
  };
  const int n_workers = std::min<int>(args.jobs, static_cast<int>(std::max<std::size_t>(corpus.size(), 1)));
  std::vector<std::thread> pool;
  for (int w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  ctx.entry->add_output(cache_dir);
  const nlohmann::json result = {{"clips", corpus.size()},
                                 {"computed", computed.load()},
                                 {"cached", cached.load()},
                                 {"failed", failures},
                                 {"cache_dir", cache_dir.string()},
                                 {"dsp_config_hash", cfg.dsp.hash()}};
  ctx.entry->details = {{"clips", corpus.size()}, {"failed", failures}, {"dsp_config_hash", cfg.dsp.hash()}};
  const std::string human = std::to_string(corpus.size()) + " clips: " + std::to_string(computed.load()) +
                            " computed, " + std::to_string(cached.load()) + " cached, " +
                            std::to_string(failures.size()) + " failed -> " + cache_dir.string() + "\n";
  emit(ctx, result, human);
  if (!failures.empty()) {
    std::string ids;
    for (const auto& f : failures) ids += (ids.empty() ? "" : ", ") + f["clip_id"].get<std::string>();
    throw DataError(std::to_string(failures.size()) + " clip(s) failed preprocessing: " + ids);
  }
  return 0;
}

int run_train(const TrainArgs& args, Context& ctx) {
  auto cfg = load_config(args.config, ctx);
  cfg.apply_overrides(args.overrides);
  if (args.epochs) cfg.train.epochs = *args.epochs;
  if (!args.root.empty()) cfg.paths.data_root = args.root;
  cfg.validate();
  ctx.entry->seed = cfg.train.seed;

  const fs::path root = cfg.paths.data_root;
  const fs::path labels = root / "labels.csv";
  if (!fs::is_regular_file(labels)) throw DataError("labels file not found: " + labels.string());
  ctx.entry->hash_input(labels);
  const auto corpus = load_corpus(root, labels);
  const auto split = load_or_make_split(corpus, cfg.paths.split_manifest, cfg.train.seed, ctx);
  if (split.train.empty() || split.test.empty()) throw DataError("split has an empty train or test subset");

  const dsp::TensorCache cache(cfg.paths.cache_dir, cfg.dsp);
  const auto computed = fill_cache(split.train, cache) + fill_cache(split.test, cache);
  if (computed > 0) log::info("preprocessed " + std::to_string(computed) + " uncached clip(s)");
  const auto train_set = train::load_tensor_set(split.train, cache);
  const auto test_set = train::load_tensor_set(split.test, cache);

  if (cfg.model.pretrained) ctx.entry->hash_input(cfg.model.pretrained_weights);
  auto net = model::build_model(cfg.model, cfg.train.seed);
  const auto c = model::census(net);
  log::info("model: " + std::to_string(c.total) + " parameters (" + std::to_string(c.trainable) + " trainable)");

  fs::path run_dir = args.run_dir;
  if (run_dir.empty()) {
    run_dir = fs::path(cfg.paths.runs_dir) / utc_stamp();
    for (int k = 1; fs::exists(run_dir); ++k) {
      run_dir = fs::path(cfg.paths.runs_dir) / (utc_stamp() + "-" + std::to_string(k));
    }
  }
  fs::create_directories(run_dir);
  cfg.save(run_dir / "config.json");
  write_split_manifest(split, run_dir / "split.csv");
  ctx.entry->details["run_dir"] = run_dir.string();

  train::TrainOptions options;
  options.run_dir = run_dir;
  options.checkpoint_extra = {{"pipeline_config", cfg.to_json()},
                              {"split_manifest_sha256", sha256_file_hex(run_dir / "split.csv")},
                              {"train_clips", split.train.size()},
                              {"test_clips", split.test.size()}};
  const auto result = train::train(net, train_set, test_set, cfg.train, options);

  for (const char* name : {"config.json", "split.csv", "metrics.csv", "curves.png", "curves.json",
                           "checkpoint_best", "checkpoint_final"}) {
    ctx.entry->add_output(run_dir / name);
  }
  const auto& last = result.metrics.back();
  const nlohmann::json out = {{"run_dir", run_dir.string()},
                              {"epochs", result.metrics.size()},
                              {"train_clips", split.train.size()},
                              {"test_clips", split.test.size()},
                              {"final_train_loss", last.train_loss},
                              {"final_test_loss", last.test_loss},
                              {"final_test_accuracy", per_rule(last.test_accuracy)},
                              {"best_epoch", result.best_epoch},
                              {"best_test_loss", result.best_test_loss},
                              {"final_checkpoint", (run_dir / "checkpoint_final").string()},
                              {"final_checkpoint_id", result.final_checkpoint_id},
                              {"best_checkpoint_id", result.best_checkpoint_id}};
  ctx.entry->details = out;
  const std::string human = "trained " + std::to_string(result.metrics.size()) + " epoch(s) -> " +
                            run_dir.string() + "\nfinal test accuracy: " + percent_triplet(last.test_accuracy) +
                            "\nbest test loss " + std::to_string(result.best_test_loss) + " at epoch " +
                            std::to_string(result.best_epoch) + "\n";
  emit(ctx, out, human);
  return 0;
}

int run_evaluate(const EvaluateArgs& args, Context& ctx) {
  const fs::path ckpt = args.checkpoint;
  if (!fs::is_regular_file(ckpt)) throw DataError("checkpoint not found: " + ckpt.string());
  auto loaded = model::load_checkpoint(ckpt);
  ctx.entry->input_hashes[ckpt.string()] = loaded.checksum;

  PipelineConfig cfg;
  if (loaded.metadata.contains("pipeline_config")) {
    cfg = PipelineConfig::from_json(loaded.metadata.at("pipeline_config"));
  } else {
    log::warn("checkpoint carries no pipeline config; using defaults");
  }
  if (!args.root.empty()) cfg.paths.data_root = args.root;
  if (!args.cache_dir.empty()) cfg.paths.cache_dir = args.cache_dir;
  fs::path split_path = args.split;
  if (split_path.empty()) {
    split_path = ckpt.parent_path() / "split.csv";
    if (!fs::exists(split_path)) split_path = cfg.paths.split_manifest;
  }
  if (!fs::is_regular_file(split_path)) throw DataError("split manifest not found: " + split_path.string());
  ctx.entry->seed = cfg.train.seed;

  const fs::path root = cfg.paths.data_root;
  ctx.entry->hash_input(root / "labels.csv");
  ctx.entry->hash_input(split_path);
  const auto corpus = load_corpus(root);
  const auto split = apply_split_manifest(corpus, split_path);
  if (split.test.empty()) throw DataError("split manifest has no test clips");

  const dsp::TensorCache cache(cfg.paths.cache_dir, cfg.dsp);
  fill_cache(split.test, cache);
  const auto test_set = train::load_tensor_set(split.test, cache);

  const auto pw = train::compute_pos_weights(cfg.train.loss_weights);
  const auto pos_weights = torch::tensor(std::vector<double>(pw.begin(), pw.end()), torch::kFloat32);
  const auto ev = train::evaluate_set(loaded.net, test_set, pos_weights, cfg.train.threshold, cfg.train.batch_size);
  const auto report = eval::make_report(ev.predictions.verdicts, test_set.labels(), loaded.checksum,
                                        sha256_file_hex(split_path));

  nlohmann::json out = report.to_json();
  out["test_loss"] = ev.loss;
  out["checkpoint"] = ckpt.string();

  // Cross-check against the training log when this is a run directory.
  const fs::path metrics_path = ckpt.parent_path() / "metrics.csv";
  if (fs::exists(metrics_path) && loaded.metadata.contains("epoch")) {
    const int epoch = loaded.metadata.at("epoch").get<int>();
    for (const auto& m : eval::read_metrics_csv(metrics_path)) {
      if (m.epoch != epoch) continue;
      out["logged_epoch"] = epoch;
      out["logged_test_accuracy"] = per_rule(m.test_accuracy);
      out["matches_training_log"] = m.test_accuracy == ev.accuracy;
    }
  }

  const fs::path report_path =
      args.out.empty() ? ckpt.parent_path() / ("report_" + ckpt.stem().string() + ".json") : fs::path(args.out);
  if (report_path.has_parent_path()) fs::create_directories(report_path.parent_path());
  std::ofstream(report_path) << out.dump(2) << '\n';
  ctx.entry->add_output(report_path);
  ctx.entry->details = {{"report", report_path.string()}, {"accuracy", per_rule(ev.accuracy)}};

  std::string human = "test clips: " + std::to_string(report.n_clips) + "\naccuracy: " +
                      percent_triplet(report.accuracy) + "\naverage: " +
                      eval::format_percent(report.average_accuracy) + ", all three correct: " +
                      eval::format_percent(report.subset_accuracy) + "\nreport: " + report_path.string() + "\n";
  if (out.contains("matches_training_log")) {
    human += std::string("matches training log (epoch ") + std::to_string(out["logged_epoch"].get<int>()) +
             "): " + (out["matches_training_log"].get<bool>() ? "yes" : "no") + "\n";
  }
  emit(ctx, out, human);
  return 0;
}

int run_predict(const PredictArgs& args, Context& ctx) {
  if (args.files.empty()) throw UsageError("predict needs at least one WAV file");
  const fs::path ckpt = args.checkpoint;
  if (!fs::is_regular_file(ckpt)) throw DataError("checkpoint not found: " + ckpt.string());
  auto loaded = model::load_checkpoint(ckpt);
  ctx.entry->input_hashes[ckpt.string()] = loaded.checksum;
  PipelineConfig cfg;
  if (loaded.metadata.contains("pipeline_config")) {
    cfg = PipelineConfig::from_json(loaded.metadata.at("pipeline_config"));
  }

  nlohmann::json results = nlohmann::json::array();
  for (const auto& f : args.files) {
    ctx.entry->hash_input(f);
    const auto wave = read_wav_file(f);
    const auto tensor = dsp::preprocess_waveform(wave, cfg.dsp, fs::path(f).stem().string());
    const auto batch = model::to_batch(std::span<const dsp::SpectrogramTensor>(&tensor, 1));
    const auto pred = train::predict_batch(loaded.net, batch, cfg.train.threshold);
    nlohmann::json rules = nlohmann::json::array();
    for (std::size_t j = 0; j < kNumRules; ++j) {
      rules.push_back({{"key", kRules[j].key},
                       {"name", kRules[j].name},
                       {"probability", pred.probabilities[0][j]},
                       {"verdict", pred.verdicts[0][j] == 1}});
    }
    nlohmann::json probs = nlohmann::json::array(), verdicts = nlohmann::json::array();
    for (std::size_t j = 0; j < kNumRules; ++j) {
      probs.push_back(pred.probabilities[0][j]);
      verdicts.push_back(pred.verdicts[0][j] == 1);
    }
    results.push_back({{"file", f},
                       {"probabilities", probs},
                       {"verdicts", verdicts},
                       {"rules", rules},
                       {"model_id", loaded.checksum},
                       {"dsp_config_hash", cfg.dsp.hash()}});
  }
  const auto out = results.size() == 1 ? results[0] : results;
  std::cout << out.dump(2) << std::endl;
  return 0;
}

int run_serve(const ServeArgs& args, Context& ctx) {
  service::ServiceOptions opts;
  opts.checkpoint = args.checkpoint;
  opts.host = args.host;
  opts.port = args.port;
  opts.allowed_origins = args.allowed_origins;
  if (!args.checkpoint.empty()) ctx.entry->hash_input(args.checkpoint);

  service::InferenceService svc(opts);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::signal(SIGHUP, on_signal);

  std::atomic<bool> done{false}, stopping{false};
  std::thread watcher([&] {
    while (!done) {
      const int sig = g_signal.exchange(0);
      if (sig == SIGINT || sig == SIGTERM) {
        log::info("shutting down");
        stopping = true;
        svc.stop();
        return;
      }
      if (sig == SIGHUP && !args.checkpoint.empty()) {
        try {
          svc.swap_checkpoint(args.checkpoint);
        } catch (const std::exception& e) {
          log::error(std::string("reload failed, keeping current model: ") + e.what());
        }
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
  });
  const bool ok = svc.listen();
  done = true;
  watcher.join();
  ctx.entry->details = {{"port", args.port}, {"model_id", svc.model_id()}};
  if (!ok && !stopping) {
    throw RuntimeFailure("could not listen on " + args.host + ":" + std::to_string(args.port));
  }
  return 0;
}

}  // namespace tajweed::cli
