// tajweed: prepare / preprocess / train / evaluate / predict / serve.
//
// Exit status: 0 ok, 1 usage error, 2 data error, 3 runtime failure.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

#include "commands.hpp"
#include "manifest.hpp"
#include "tajweed/error.hpp"
#include "tajweed/log.hpp"

namespace {

using namespace tajweed;
using namespace tajweed::cli;

std::string default_manifest() {
  if (const char* env = std::getenv("TAJWEED_MANIFEST")) return env;
  return "runs/manifest.jsonl";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tajweed rule scoring: data preparation, training, evaluation and serving"};
  app.require_subcommand(1);

  bool json = false;
  std::string manifest = default_manifest();
  std::string log_level = "info";
  app.add_flag("--json", json, "Machine-readable JSON on stdout");
  app.add_option("--manifest", manifest, "Run manifest (JSON lines), appended once per command")
      ->capture_default_str();
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off")->capture_default_str();

  PrepareArgs prepare;
  auto* c_prepare = app.add_subcommand("prepare", "Validate the corpus, report class balance, write the split manifest");
  c_prepare->add_option("--root", prepare.root, "Corpus directory (labels.csv + audio/)");
  c_prepare->add_option("--config", prepare.config, "Pipeline config JSON");
  c_prepare->add_option("--labels", prepare.labels, "Labels CSV (default <root>/labels.csv)");
  c_prepare->add_option("--out", prepare.out, "Split manifest path (default from config)");
  c_prepare->add_option("--seed", prepare.seed, "Split seed (default from config)");
  c_prepare->add_flag("--exclude-imputed", prepare.exclude_imputed, "Drop clips whose labels were imputed");
  c_prepare->add_flag("--decode", prepare.decode, "Fully decode every WAV");

  PreprocessArgs preprocess;
  auto* c_pre = app.add_subcommand("preprocess", "Compute mel-spectrogram tensors into the cache");
  c_pre->add_option("--root", preprocess.root, "Corpus directory");
  c_pre->add_option("--config", preprocess.config, "Pipeline config JSON");
  c_pre->add_option("--cache", preprocess.cache_dir, "Tensor cache directory (default from config)");
  c_pre->add_option("-j,--jobs", preprocess.jobs, "Worker threads")->capture_default_str();

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Train and write a run directory");
  c_train->add_option("--config", train.config, "Pipeline config JSON");
  c_train->add_option("--set", train.overrides, "Override a config key: key=value (repeatable)");
  c_train->add_option("--epochs", train.epochs, "Override the epoch count");
  c_train->add_option("--root", train.root, "Corpus directory (overrides data_root)");
  c_train->add_option("--run-dir", train.run_dir, "Output directory (default <runs_dir>/<UTC timestamp>)");

  EvaluateArgs evaluate;
  auto* c_eval = app.add_subcommand("evaluate", "Per-rule accuracy of a checkpoint on the test split");
  c_eval->add_option("--checkpoint", evaluate.checkpoint, "Checkpoint file")->required();
  c_eval->add_option("--root", evaluate.root, "Corpus directory (default from the checkpoint's config)");
  c_eval->add_option("--split", evaluate.split, "Split manifest (default: split.csv next to the checkpoint)");
  c_eval->add_option("--cache", evaluate.cache_dir, "Tensor cache directory");
  c_eval->add_option("--out", evaluate.out, "Report path (default report_<checkpoint>.json next to it)");

  PredictArgs predict;
  auto* c_predict = app.add_subcommand("predict", "Score WAV files; prints JSON");
  c_predict->add_option("--checkpoint", predict.checkpoint, "Checkpoint file")->required();
  c_predict->add_option("files", predict.files, "WAV files")->required();

  ServeArgs serve;
  auto* c_serve = app.add_subcommand("serve", "HTTP inference service");
  c_serve->add_option("--checkpoint", serve.checkpoint, "Checkpoint file")->envname("TAJWEED_CHECKPOINT");
  c_serve->add_option("--host", serve.host, "Bind address")->capture_default_str();
  c_serve->add_option("--port", serve.port, "Port")->envname("TAJWEED_PORT")->capture_default_str();
  c_serve->add_option("--allowed-origin", serve.allowed_origins, "CORS origin (repeatable, * for any)")
      ->envname("TAJWEED_ALLOWED_ORIGIN");

  ManifestEntry entry;
  entry.argv.assign(argv, argv + argc);
  entry.command = argc > 1 ? argv[1] : "";

  int status = 0;
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    status = 1;
    entry.error = e.what();
  }

  if (status == 0) {
    entry.command = app.get_subcommands().front()->get_name();
    Context ctx{json, &entry};
    try {
      log::init(log_level);
      if (c_prepare->parsed()) status = run_prepare(prepare, ctx);
      if (c_pre->parsed()) status = run_preprocess(preprocess, ctx);
      if (c_train->parsed()) status = run_train(train, ctx);
      if (c_eval->parsed()) status = run_evaluate(evaluate, ctx);
      if (c_predict->parsed()) status = run_predict(predict, ctx);
      if (c_serve->parsed()) status = run_serve(serve, ctx);
    } catch (const Error& e) {
      status = e.exit_code();
      entry.error = e.what();
    } catch (const std::exception& e) {
      status = static_cast<int>(ErrorKind::kRuntime);
      entry.error = e.what();
    }
    if (!entry.error.empty()) std::cerr << "error: " << entry.error << '\n';
  }

  entry.exit_status = status;
  try {
    append_manifest(manifest, entry);
  } catch (const std::exception& e) {
    std::cerr << "warning: " << e.what() << '\n';
  }
  return status;
}
