// impsy command line: run, train, bench, dataset, corpus, model, preset.
// Exit codes: 0 ok, 1 runtime error, 2 usage or config error.

#include <atomic>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "impsy/bench.hpp"
#include "impsy/config.hpp"
#include "impsy/corpus.hpp"
#include "impsy/dataset.hpp"
#include "impsy/mdrnn.hpp"
#include "impsy/midi_device.hpp"
#include "impsy/runtime.hpp"
#include "impsy/service.hpp"
#include "impsy/session_log.hpp"
#include "impsy/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

namespace impsy_cli {

struct RunArgs {
  std::string config = "config.json";
  bool virtual_midi = false;
  double duration = 0.0;
  std::string host = "127.0.0.1";
  bool lan = false;
  int http_port = 8000;
  bool no_http = false;
  std::string static_dir;
};

int run(const RunArgs& args) {
  const auto t0 = std::chrono::steady_clock::now();
  impsy::EngineConfig config;
  try {
    config = impsy::load_config_file(args.config);
  } catch (const impsy::ConfigError& e) {
    std::cerr << "invalid config " << args.config << ":\n";
    for (const auto& v : e.violations()) std::cerr << "  " << v << "\n";
    return kExitUsage;
  }
  const fs::path base = fs::path(args.config).parent_path();
  const auto model_path = impsy::resolve_path(base, config.model_file);
  if (!fs::is_regular_file(model_path)) {
    std::cerr << "model file not found: " << model_path.string() << "\n";
    return kExitUsage;
  }
  std::shared_ptr<const impsy::MdrnnParams> model;
  try {
    model = std::make_shared<const impsy::MdrnnParams>(impsy::load_weights(model_path));
  } catch (const std::exception& e) {
    std::cerr << model_path.string() << ": " << e.what() << "\n";
    return kExitUsage;
  }

  std::unique_ptr<impsy::MidiBackend> backend;
  if (args.virtual_midi) {
    auto virt = std::make_unique<impsy::VirtualMidiBackend>();
    std::set<std::string> names;
    for (const auto& r : config.inputs) names.insert(r.device.empty() ? "virtual" : r.device);
    for (const auto& r : config.outputs) names.insert(r.device.empty() ? "virtual" : r.device);
    if (config.passthrough) names.insert(*config.passthrough);
    for (const auto& n : names) virt->create_device(n);
    backend = std::move(virt);
  } else {
    backend = std::make_unique<impsy::RawMidiBackend>();
  }

  impsy::RuntimeOptions options;
  options.base_dir = base;
  std::unique_ptr<impsy::Runtime> runtime;
  try {
    runtime = std::make_unique<impsy::Runtime>(config, model, *backend, options);
    runtime->open_devices(true);
  } catch (const impsy::DeviceNotFound& e) {
    std::cerr << e.what() << "\navailable devices:\n";
    for (const auto& c : e.candidates()) std::cerr << "  " << c << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "startup failed: " << e.what() << "\n";
    return kExitRuntime;
  }

  std::unique_ptr<impsy::Service> service;
  if (!args.no_http) {
    impsy::ServiceOptions sopts;
    sopts.host = args.lan ? "0.0.0.0" : args.host;
    sopts.port = args.http_port;
    sopts.config_path = args.config;
    sopts.static_dir = args.static_dir;
    service = std::make_unique<impsy::Service>(*runtime, sopts);
    try {
      service->start();
    } catch (const std::exception& e) {
      std::cerr << e.what() << "\n";
      return kExitRuntime;
    }
  }
  runtime->start();
  const double ready_s = seconds_since(t0);
  std::cout << json{{"event", "ready"},
                    {"time_to_ready_ms", ready_s * 1000.0},
                    {"http_port", service ? service->port() : 0},
                    {"websocket_port", runtime->websocket_port()},
                    {"log_file", runtime->status().log_file}}
                   .dump()
            << std::endl;

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  const auto started = std::chrono::steady_clock::now();
  while (!g_stop && (args.duration <= 0.0 || seconds_since(started) < args.duration)) {
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  runtime->stop();
  if (service) service->stop();
  runtime->flush_outputs();
  std::cout << impsy::to_json(runtime->status()).dump() << std::endl;
  return kExitOk;
}

struct TrainArgs {
  std::string data;
  int dim = 1;
  impsy::MdrnnShape shape;
  impsy::TrainHyper hyper;
  std::uint64_t seed = 1;
  std::string out = "model.mdrnn";
  std::string init;
  double dt_max = impsy::kDefaultDtMax;
};

impsy::Dataset load_training_data(const fs::path& data, int dim, double dt_max) {
  if (fs::is_regular_file(data)) {
    if (data.extension() == ".csv") return impsy::build_dataset({data}, dim, dt_max);
    return impsy::load_dataset(data);
  }
  impsy::BuildReport report;
  auto dataset = impsy::build_dataset(impsy::list_sessions(data), dim, dt_max, &report);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
  return dataset;
}

int train(TrainArgs args) {
  const auto t0 = std::chrono::steady_clock::now();
  args.shape.dim = args.dim;
  impsy::Dataset dataset;
  try {
    dataset = load_training_data(args.data, args.dim, args.dt_max);
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kExitRuntime;
  }
  if (dataset.dimension != args.dim) {
    std::cerr << "dataset dimension " << dataset.dimension << " does not match --dim " << args.dim << "\n";
    return kExitUsage;
  }
  std::optional<impsy::MdrnnParams> init;
  if (!args.init.empty()) init = impsy::load_weights(args.init);

  impsy::Rng rng(args.seed);
  impsy::TrainResult result;
  try {
    result = impsy::train(dataset, args.shape, args.hyper, init, rng, [](const impsy::EpochLoss& e) {
      std::cout << "epoch " << e.epoch << "  train " << e.train << "  validation " << e.validation
                << std::endl;
    });
  } catch (const impsy::TrainingError& e) {
    std::cerr << "training failed: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::invalid_argument& e) {
    std::cerr << e.what() << "\n";
    return kExitUsage;
  }
  impsy::save_weights(result.params, args.out);
  const double wall = seconds_since(t0);

  json history = json::array();
  for (const auto& e : result.history) {
    history.push_back({{"epoch", e.epoch},
                       {"train", e.train},
                       {"validation", std::isnan(e.validation) ? json(nullptr) : json(e.validation)}});
  }
  const json report = {
      {"weights", args.out},
      {"shape", {{"dim", args.shape.dim}, {"layers", args.shape.layers}, {"units", args.shape.units},
                 {"mixtures", args.shape.mixtures}}},
      {"hyper", {{"seq_len", args.hyper.seq_len}, {"batch_size", args.hyper.batch_size},
                 {"learning_rate", args.hyper.learning_rate}, {"epochs", args.hyper.epochs},
                 {"clip_norm", args.hyper.clip_norm}, {"validation_split", args.hyper.validation_split}}},
      {"seed", args.seed},
      {"sequences", dataset.sequences.size()},
      {"frames", dataset.frame_count()},
      {"history", history},
      {"best_epoch", result.best_epoch},
      {"wall_s", wall}};
  std::ofstream(args.out + ".loss.json") << report.dump(2) << "\n";
  std::cout << "wrote " << args.out << " (best epoch " << result.best_epoch << ") in " << wall
            << " s" << std::endl;
  return kExitOk;
}

struct BenchArgs {
  std::vector<int> units{64, 128, 256, 512};
  int layers = 2;
  int dims = 8;
  int mixtures = 5;
  int iters = 1000;
  int warmup = impsy::kBenchWarmup;
  std::uint64_t seed = 1;
  std::string csv;
};

int bench(const BenchArgs& args) {
  if (args.iters < impsy::kBenchMinIters) {
    std::cerr << "--iters must be at least " << impsy::kBenchMinIters << "\n";
    return kExitUsage;
  }
  std::vector<impsy::BenchRow> rows;
  for (int u : args.units) {
    impsy::MdrnnShape shape{args.dims, args.layers, u, args.mixtures};
    rows.push_back(impsy::bench_predict(shape, args.iters, args.warmup, args.seed));
  }
  std::cout << impsy::bench_table(rows);
  const auto csv = impsy::bench_csv(rows);
  if (args.csv.empty() || args.csv == "-") {
    std::cout << "\n" << csv;
  } else {
    std::ofstream(args.csv) << csv;
  }
  return kExitOk;
}

struct DatasetArgs {
  std::string logs;
  int dim = 1;
  std::string out = "dataset.impd";
  double dt_max = impsy::kDefaultDtMax;
};

int dataset(const DatasetArgs& args) {
  impsy::BuildReport report;
  impsy::Dataset ds;
  try {
    ds = impsy::build_dataset(impsy::list_sessions(args.logs), args.dim, args.dt_max, &report);
  } catch (const impsy::DatasetError& e) {
    std::cerr << e.what() << "\n";
    return kExitRuntime;
  }
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
  impsy::save_dataset(ds, args.out);
  std::cout << json{{"out", args.out},
                    {"sequences", ds.sequences.size()},
                    {"frames", ds.frame_count()},
                    {"lines_parsed", report.lines_parsed},
                    {"lines_skipped", report.lines_skipped}}
                   .dump()
            << std::endl;
  return kExitOk;
}

struct CorpusArgs {
  std::string out = "corpus";
  impsy::CorpusOptions options;
  int sessions = 1;
};

int corpus(const CorpusArgs& args) {
  const auto base = std::chrono::time_point_cast<std::chrono::milliseconds>(std::chrono::system_clock::now());
  std::size_t total = 0;
  for (int s = 0; s < args.sessions; ++s) {
    auto opts = args.options;
    opts.seconds = args.options.seconds / args.sessions;
    opts.seed = args.options.seed + static_cast<std::uint64_t>(s);
    const auto start = base + std::chrono::hours(s);
    const auto records = impsy::synth_gestures(opts, start);
    const auto path = impsy::write_session(records, opts.dim, args.out);
    total += records.size();
    std::cout << path.string() << " " << records.size() << " records\n";
  }
  std::cout << json{{"out", args.out}, {"records", total}}.dump() << std::endl;
  return kExitOk;
}

struct ModelArgs {
  impsy::MdrnnShape shape;
  std::uint64_t seed = 1;
  std::string out = "model.mdrnn";
};

int model(const ModelArgs& args) {
  impsy::check_shape(args.shape);
  impsy::Rng rng(args.seed);
  impsy::save_weights(impsy::MdrnnParams::initialize(args.shape, rng), args.out);
  std::cout << "wrote " << args.out << "\n";
  return kExitOk;
}

int preset(const std::string& name, const std::string& model_file, const std::string& out) {
  impsy::EngineConfig config;
  if (name == "volca") {
    config = impsy::presets::volca(model_file);
  } else if (name == "microfreak") {
    config = impsy::presets::microfreak(model_file);
  } else if (name == "daw") {
    config = impsy::presets::daw(model_file);
  } else if (name == "intelligent") {
    config = impsy::presets::intelligent_setup(model_file);
  } else {
    std::cerr << "unknown preset " << name << "\n";
    return kExitUsage;
  }
  impsy::save_config_file(config, out);
  std::cout << "wrote " << out << " (dimension " << config.dimension << ")\n";
  return kExitOk;
}

}  // namespace impsy_cli

int main(int argc, char** argv) {
  CLI::App app{"impsy: interactive MIDI generation engine"};
  app.require_subcommand(1);

  impsy_cli::RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run the engine with MIDI, logging, network and HTTP service");
  run_cmd->add_option("--config", run.config, "Config file")->envname("IMPSY_CONFIG");
  run_cmd->add_flag("--virtual", run.virtual_midi, "Use in-process virtual MIDI devices");
  run_cmd->add_option("--duration", run.duration, "Stop after this many seconds (0 = until signal)");
  run_cmd->add_option("--host", run.host, "HTTP bind address");
  run_cmd->add_flag("--lan", run.lan, "Bind the HTTP service on all interfaces");
  run_cmd->add_option("--http-port", run.http_port, "HTTP port (0 picks a free one)");
  run_cmd->add_flag("--no-http", run.no_http, "Do not start the HTTP service");
  run_cmd->add_option("--static", run.static_dir, "Directory with the built web UI");

  impsy_cli::TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model from session logs or a dataset file");
  train_cmd->add_option("--data", tr.data, "Log directory, .csv log or packed dataset")->required();
  train_cmd->add_option("--dim", tr.dim, "Values per frame")->required();
  train_cmd->add_option("--units", tr.shape.units, "LSTM units per layer");
  train_cmd->add_option("--layers", tr.shape.layers, "LSTM layers");
  train_cmd->add_option("--mixtures", tr.shape.mixtures, "Mixture components");
  train_cmd->add_option("--seq-len", tr.hyper.seq_len, "BPTT window length");
  train_cmd->add_option("--batch-size", tr.hyper.batch_size, "Windows per update");
  train_cmd->add_option("--lr", tr.hyper.learning_rate, "Adam learning rate");
  train_cmd->add_option("--epochs", tr.hyper.epochs, "Epochs");
  train_cmd->add_option("--clip", tr.hyper.clip_norm, "Global gradient norm clip");
  train_cmd->add_option("--val-split", tr.hyper.validation_split, "Validation fraction");
  train_cmd->add_option("--dt-max", tr.dt_max, "dt cap when building from logs");
  train_cmd->add_option("--seed", tr.seed, "Random seed");
  train_cmd->add_option("--init", tr.init, "Start from these weights");
  train_cmd->add_option("--out", tr.out, "Weight file to write");

  impsy_cli::BenchArgs be;
  auto* bench_cmd = app.add_subcommand("bench", "Time predict_next for several network sizes");
  bench_cmd->add_option("--units", be.units, "Comma separated unit counts")->delimiter(',');
  bench_cmd->add_option("--layers", be.layers, "LSTM layers");
  bench_cmd->add_option("--dims", be.dims, "Values per frame");
  bench_cmd->add_option("--mixtures", be.mixtures, "Mixture components");
  bench_cmd->add_option("--iters", be.iters, "Timed iterations (>= 100)");
  bench_cmd->add_option("--warmup", be.warmup, "Untimed iterations first");
  bench_cmd->add_option("--seed", be.seed, "Random seed");
  bench_cmd->add_option("--csv", be.csv, "Write CSV here (default: stdout)");

  impsy_cli::DatasetArgs ds;
  auto* dataset_cmd = app.add_subcommand("dataset", "Pack session logs into a dataset file");
  dataset_cmd->add_option("--logs", ds.logs, "Log directory")->required();
  dataset_cmd->add_option("--dim", ds.dim, "Values per frame")->required();
  dataset_cmd->add_option("--out", ds.out, "Dataset file");
  dataset_cmd->add_option("--dt-max", ds.dt_max, "dt cap");

  impsy_cli::CorpusArgs co;
  auto* corpus_cmd = app.add_subcommand("corpus", "Write a synthetic gesture corpus as session logs");
  corpus_cmd->add_option("--out", co.out, "Output directory");
  corpus_cmd->add_option("--seconds", co.options.seconds, "Total performance length");
  corpus_cmd->add_option("--dim", co.options.dim, "Values per frame");
  corpus_cmd->add_option("--seed", co.options.seed, "Random seed");
  corpus_cmd->add_option("--sessions", co.sessions, "Split into this many session files")
      ->check(CLI::PositiveNumber);

  impsy_cli::ModelArgs mo;
  auto* model_cmd = app.add_subcommand("model", "Write a randomly initialised weight file");
  model_cmd->add_option("--dim", mo.shape.dim, "Values per frame")->required();
  model_cmd->add_option("--units", mo.shape.units, "LSTM units per layer");
  model_cmd->add_option("--layers", mo.shape.layers, "LSTM layers");
  model_cmd->add_option("--mixtures", mo.shape.mixtures, "Mixture components");
  model_cmd->add_option("--seed", mo.seed, "Random seed");
  model_cmd->add_option("--out", mo.out, "Weight file");

  std::string preset_name, preset_model = "model.mdrnn", preset_out = "config.json";
  auto* preset_cmd = app.add_subcommand("preset", "Write a preset config (volca, microfreak, daw, intelligent)");
  preset_cmd->add_option("name", preset_name, "Preset name")->required();
  preset_cmd->add_option("--model", preset_model, "model_file entry");
  preset_cmd->add_option("--out", preset_out, "Config file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*run_cmd) return impsy_cli::run(run);
    if (*train_cmd) return impsy_cli::train(tr);
    if (*bench_cmd) return impsy_cli::bench(be);
    if (*dataset_cmd) return impsy_cli::dataset(ds);
    if (*corpus_cmd) return impsy_cli::corpus(co);
    if (*model_cmd) return impsy_cli::model(mo);
    if (*preset_cmd) return impsy_cli::preset(preset_name, preset_model, preset_out);
  } catch (const std::invalid_argument& e) {
    std::cerr << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
