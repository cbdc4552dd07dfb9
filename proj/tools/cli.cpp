#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gesturebench/bench.hpp"
#include "gesturebench/checkpoint.hpp"
#include "gesturebench/cnn3d.hpp"
#include "gesturebench/dataset.hpp"
#include "gesturebench/lstm.hpp"
#include "gesturebench/stream.hpp"
#include "gesturebench/synth.hpp"
#include "gesturebench/trainer.hpp"

namespace gesturebench::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Bad flags or flag values: exit code 2. Everything else thrown is a
// runtime failure (exit 1).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr const char* kLandmarkFile = "landmarks.jsonl";
constexpr const char* kVolumeDir = "volumes";

std::uint64_t default_seed(std::uint64_t fallback) {
  const char* env = std::getenv("GESTUREBENCH_SEED");
  if (env == nullptr || *env == '\0') return fallback;
  try {
    std::size_t used = 0;
    const auto v = std::stoull(env, &used);
    if (used != std::string(env).size()) throw std::invalid_argument(env);
    return v;
  } catch (const std::exception&) {
    throw UsageError(std::string("GESTUREBENCH_SEED is not an unsigned integer: '") + env + "'");
  }
}

struct ConfigFile {
  json model = json::object();
  json train = json::object();
  json stream = json::object();
  json bench = json::object();
};

ConfigFile read_config(const std::string& path) {
  ConfigFile c;
  if (path.empty()) return c;
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path + ": malformed JSON at byte " + std::to_string(e.byte));
  }
  if (!j.is_object()) throw std::runtime_error(path + ": config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!value.is_object()) throw std::runtime_error(path + ": section '" + key + "' must be an object");
    if (key == "model") c.model = value;
    else if (key == "train") c.train = value;
    else if (key == "stream") c.stream = value;
    else if (key == "bench") c.bench = value;
    else throw std::runtime_error(path + ": unknown section '" + key + "'");
  }
  return c;
}

// Prefixes invalid_argument from config parsing with the file name so the
// diagnostic names both the file and the key.
template <typename F>
auto from_config(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

fs::path resolve_data(const fs::path& path, Family family) {
  if (!fs::exists(path)) throw std::runtime_error("data path '" + path.string() + "' not found");
  if (!fs::is_directory(path)) return path;
  if (family == Family::lstm) {
    if (fs::exists(path / kLandmarkFile)) return path / kLandmarkFile;
  } else {
    if (fs::exists(path / kVolumeDir / "manifest.json")) return path / kVolumeDir;
  }
  return path;
}

Shape parse_dims(const std::string& text) {
  Shape dims;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(part, &used);
      if (used != part.size() || v == 0) throw std::invalid_argument(part);
      dims.push_back(v);
    } catch (const std::exception&) {
      throw UsageError("--volumes expects TxHxWxC with positive integers, got '" + text + "'");
    }
  }
  if (dims.size() != 4) throw UsageError("--volumes expects TxHxWxC, got '" + text + "'");
  return dims;
}

std::string write_jsonl_frames(const std::vector<LandmarkFrame>& frames) {
  std::string out;
  for (const auto& f : frames) {
    out += json{{"frame", f}}.dump();
    out += '\n';
  }
  return out;
}

// Split used by train and (with --split test) by eval: 80/20 stratified.
std::pair<Dataset, Dataset> test_split(const Dataset& data, std::uint64_t seed) {
  return split_dataset(data, 0.2, seed);
}

fs::path history_path(const fs::path& ckpt) { return ckpt.string() + ".history.json"; }

// ---------------------------------------------------------------- commands

struct GenDataArgs {
  std::size_t classes = 10;
  std::size_t samples = 60;
  std::size_t frames = 30;
  double noise = 0.01;
  std::optional<std::uint64_t> seed;
  std::uint64_t template_seed = kDefaultTemplateSeed;
  std::string out;
  std::string volumes;
  double blob_sigma = 1.5;
  std::size_t pauses = 0;
  std::size_t pause_gap = 10;
  std::size_t edge_idle = 0;
};

int gen_data(const GenDataArgs& a, std::ostream& out) {
  if (a.classes < 2) throw UsageError("--classes must be >= 2");
  if (a.samples < 2) throw UsageError("--samples-per-class must be >= 2");
  if (a.frames < 2) throw UsageError("--frames must be >= 2");
  if (!(a.noise >= 0.0)) throw UsageError("--noise must be >= 0");
  if (a.pauses > 0 && (a.pause_gap == 0 || a.pause_gap >= a.frames)) {
    throw UsageError("--pause-gap must be in [1, frames)");
  }
  if (2 * a.edge_idle >= a.frames) throw UsageError("--edge-idle must be < frames/2");
  GenerateOptions o;
  o.num_classes = a.classes;
  o.samples_per_class = a.samples;
  o.frames = a.frames;
  o.noise_sigma = a.noise;
  o.seed = a.seed ? *a.seed : default_seed(42);
  o.template_seed = a.template_seed;
  o.blob_sigma_px = a.blob_sigma;
  o.pause_samples = a.pauses;
  o.pause_gap = a.pause_gap;
  o.edge_idle = a.edge_idle;
  if (!a.volumes.empty()) o.volume_dims = parse_dims(a.volumes);

  const auto samples = generate_dataset(o);
  std::vector<LandmarkSequence> seqs;
  std::vector<FrameVolume> vols;
  for (const auto& s : samples) {
    seqs.push_back(s.sequence);
    if (s.volume) vols.push_back(*s.volume);
  }
  const fs::path dir(a.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw std::runtime_error("cannot create output directory '" + a.out + "'");
  }
  write_landmark_dataset(dir / kLandmarkFile, seqs);
  if (!vols.empty()) write_volume_dataset(dir / kVolumeDir, vols, a.classes);
  out << "wrote " << seqs.size() << " sequences (" << a.classes << " classes x " << a.samples
      << (a.pauses ? ", " + std::to_string(a.pauses) + " pause clips" : std::string()) << ")"
      << (vols.empty() ? "" : " and " + std::to_string(vols.size()) + " volumes") << " to "
      << a.out << " (seed " << o.seed << ")\n";
  return kExitOk;
}

struct TrainArgs {
  std::string model;
  std::string data;
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

std::unique_ptr<Model> build_model(Family family, const json& section, const Dataset& data,
                                   std::uint64_t seed, const std::string& config_path) {
  json cfg = section;
  if (cfg.contains("family")) {
    if (!cfg["family"].is_string() || family_from_string(cfg["family"].get<std::string>()) != family) {
      throw UsageError("config model.family does not match --model " + to_string(family));
    }
    cfg.erase("family");
  }
  return from_config(config_path, [&]() -> std::unique_ptr<Model> {
    if (family == Family::lstm) {
      LstmConfig c = LstmConfig::from_json(cfg);
      if (!cfg.contains("num_classes")) c.num_classes = data.num_classes;
      return std::make_unique<LstmModel>(c, seed);
    }
    Cnn3dConfig c = Cnn3dConfig::from_json(cfg);
    if (!cfg.contains("num_classes")) c.num_classes = data.num_classes;
    if (!cfg.contains("input_dims") && !data.samples.empty()) {
      c.input_dims = data.samples.front().input.shape();
    }
    c.validate();
    return std::make_unique<Cnn3dModel>(c, seed);
  });
}

int train_cmd(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const Family family = [&] {
    try {
      return family_from_string(a.model);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }();
  const ConfigFile cf = read_config(a.config);
  TrainConfig tc = from_config(a.config, [&] { return TrainConfig::from_json(cf.train); });
  if (a.seed) {
    tc.seed = *a.seed;
  } else if (!cf.train.contains("seed")) {
    tc.seed = default_seed(tc.seed);
  }

  const Dataset data = load_dataset(resolve_data(a.data, family));
  auto [rest, test] = test_split(data, tc.seed);
  auto [train_set, val_set] = split_dataset(rest, 0.2, child_seed(tc.seed, 1));
  const auto initial = build_model(family, cf.model, data, tc.seed, a.config);
  check_modality(*initial, data);

  auto progress = [&](std::size_t epoch, const EpochRecord& r) {
    if (a.quiet) return;
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "epoch %3zu  loss %.4f  acc %.4f  val_loss %.4f  val_acc %.4f  (%.1fs)\n", epoch,
                  r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy, r.seconds);
    err << buf << std::flush;
  };
  const TrainResult result = train(*initial, train_set, val_set, tc, progress);
  const EvalMetrics test_metrics = evaluate(*result.model, test);

  json history{{"model", result.model->descriptor()},
               {"train_config", tc.to_json()},
               {"split",
                {{"seed", tc.seed},
                 {"train", train_set.size()},
                 {"val", val_set.size()},
                 {"test", test.size()}}},
               {"epochs", result.history.to_json(true)},
               {"best_epoch", result.history.best_epoch},
               {"stopped_early", result.history.stopped_early},
               {"test_accuracy", test_metrics.accuracy}};
  save_checkpoint(a.out, *result.model);
  write_file_atomic(history_path(a.out), history.dump(2) + "\n");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", test_metrics.accuracy);
  out << "trained " << to_string(family) << ": " << train_set.size() << " train / "
      << val_set.size() << " val / " << test.size() << " test, best epoch "
      << result.history.best_epoch << " of " << result.history.epochs.size()
      << ", test accuracy " << buf << " -> " << a.out << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string ckpt;
  std::string data;
  std::string split = "test";
  std::optional<std::uint64_t> seed;
};

int eval_cmd(const EvalArgs& a, std::ostream& out) {
  if (a.split != "test" && a.split != "all") throw UsageError("--split must be test or all");
  const auto model = load_checkpoint(a.ckpt);
  Dataset data = load_dataset(resolve_data(a.data, model->family()), model->num_classes());
  if (a.split == "test") data = test_split(data, a.seed ? *a.seed : default_seed(42)).second;
  out << evaluate(*model, data).to_json().dump(2) << "\n";
  return kExitOk;
}

struct BenchArgs {
  std::string lstm;
  std::string cnn;
  std::string out;
  std::string config;
  std::string data;
  std::optional<std::size_t> trials;
  std::optional<std::size_t> warmup;
  std::optional<std::uint64_t> seed;
};

double bench_accuracy(const Model& m, const std::string& ckpt, const std::string& data,
                      std::uint64_t seed) {
  if (!data.empty()) {
    const Dataset d = load_dataset(resolve_data(data, m.family()), m.num_classes());
    return evaluate(m, test_split(d, seed).second).accuracy;
  }
  const fs::path h = history_path(ckpt);
  if (!fs::exists(h)) {
    throw std::runtime_error("no accuracy for '" + ckpt + "': pass --data or keep " + h.string());
  }
  try {
    return json::parse(read_file(h)).at("test_accuracy").get<double>();
  } catch (const json::exception& e) {
    throw std::runtime_error(h.string() + ": " + e.what());
  }
}

int bench_cmd(const BenchArgs& a, std::ostream& out) {
  const ConfigFile cf = read_config(a.config);
  BenchConfig bc = from_config(a.config, [&] { return BenchConfig::from_json(cf.bench); });
  if (a.trials) bc.trials = *a.trials;
  if (a.warmup) bc.warmup = *a.warmup;
  if (bc.trials == 0) throw UsageError("--trials must be >= 1");
  const auto lstm = load_checkpoint(a.lstm);
  const auto cnn = load_checkpoint(a.cnn);
  if (lstm->family() != Family::lstm) throw std::runtime_error(a.lstm + " is not an lstm checkpoint");
  if (cnn->family() != Family::cnn3d) throw std::runtime_error(a.cnn + " is not a cnn3d checkpoint");
  const std::uint64_t seed = a.seed ? *a.seed : default_seed(42);
  const auto lm = measure_model(*lstm, bench_accuracy(*lstm, a.lstm, a.data, seed), bc);
  const auto cm = measure_model(*cnn, bench_accuracy(*cnn, a.cnn, a.data, seed), bc);
  const ComparisonReport report = compare(lm, cm);
  write_file_atomic(a.out, render_report(report, ReportFormat::json));
  out << render_report(report, ReportFormat::text);
  return kExitOk;
}

struct StreamArgs {
  std::string ckpt;
  std::string config;
};

int stream_cmd(const StreamArgs& a, std::istream& in, std::ostream& out) {
  const ConfigFile cf = read_config(a.config);
  const StreamConfig sc = from_config(a.config, [&] { return StreamConfig::from_json(cf.stream); });
  const auto model = load_checkpoint(a.ckpt);
  auto pipeline = StreamPipeline::for_model(*model, sc);
  std::string line;
  std::size_t line_no = 0;
  std::vector<double> frame;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<PredictionEvent> events;
    std::string problem;
    try {
      const json j = json::parse(line);
      if (!j.is_object() || !j.contains("frame") || !j["frame"].is_array()) {
        problem = "expected {\"frame\": [63 numbers]}";
      } else {
        frame = j["frame"].get<std::vector<double>>();
      }
    } catch (const json::exception&) {
      problem = "malformed JSON";
    }
    if (problem.empty()) {
      events = pipeline.push_frame(frame);
    } else {
      PredictionEvent d;
      d.kind = PredictionEvent::Kind::diagnostic;
      d.at_frame = pipeline.frames_accepted();
      d.message = problem;
      events.push_back(d);
    }
    for (auto& e : events) {
      if (e.kind == PredictionEvent::Kind::diagnostic) {
        e.message = "line " + std::to_string(line_no) + ": " + e.message;
      }
      out << e.to_json().dump() << "\n";
    }
    out.flush();
  }
  return kExitOk;
}

struct GenStreamArgs {
  std::string text;
  std::size_t classes = 10;
  std::size_t frames = 30;
  std::size_t gap = 10;
  double noise = 0.01;
  std::optional<std::uint64_t> seed;
  std::uint64_t template_seed = kDefaultTemplateSeed;
  std::string charset = kDefaultCharset;
  std::string out;
};

int gen_stream_cmd(const GenStreamArgs& a, std::ostream& out) {
  if (a.classes < 2) throw UsageError("--classes must be >= 2");
  if (a.charset.size() < a.classes) throw UsageError("--charset is shorter than --classes");
  if (a.text.empty()) throw UsageError("--text must not be empty");
  std::vector<std::size_t> labels;
  for (char ch : a.text) {
    const auto pos = a.charset.find(ch);
    if (pos == std::string::npos || pos >= a.classes) {
      throw UsageError(std::string("character '") + ch + "' is not one of the first " +
                       std::to_string(a.classes) + " charset entries");
    }
    labels.push_back(pos);
  }
  const auto frames = generate_stream(default_templates(a.classes, a.template_seed), labels,
                                      a.frames, a.gap, a.noise,
                                      a.seed ? *a.seed : default_seed(42));
  const std::string text = write_jsonl_frames(frames);
  if (a.out.empty() || a.out == "-") {
    out << text;
  } else {
    write_file_atomic(a.out, text);
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"LSTM vs 3D CNN gesture classification benchmark"};
  app.name(args.empty() ? "gesturebench" : fs::path(args[0]).filename().string());
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  GenDataArgs gd;
  auto* c_gen = app.add_subcommand("gen-data", "generate a synthetic landmark (+ volume) dataset");
  c_gen->add_option("--classes", gd.classes, "number of classes")->capture_default_str();
  c_gen->add_option("--samples-per-class", gd.samples, "samples per class")->capture_default_str();
  c_gen->add_option("--frames", gd.frames, "frames per sequence")->capture_default_str();
  c_gen->add_option("--noise", gd.noise, "landmark noise sigma")->capture_default_str();
  c_gen->add_option("--seed", gd.seed, "dataset seed (default $GESTUREBENCH_SEED or 42)");
  c_gen->add_option("--template-seed", gd.template_seed, "gesture template seed")
      ->capture_default_str();
  c_gen->add_option("--out", gd.out, "output directory")->required();
  c_gen->add_option("--volumes", gd.volumes, "also render paired volumes, e.g. 16x32x32x1");
  c_gen->add_option("--blob-sigma", gd.blob_sigma, "landmark blob sigma in pixels")
      ->capture_default_str();
  c_gen->add_option("--pauses", gd.pauses, "extra no-gesture clips (label -1)")
      ->capture_default_str();
  c_gen->add_option("--pause-gap", gd.pause_gap, "idle frames inside each pause clip")
      ->capture_default_str();
  c_gen->add_option("--edge-idle", gd.edge_idle, "shift gestures by up to this many idle frames")
      ->capture_default_str();

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "train one model and write a checkpoint");
  c_train->add_option("--model", tr.model, "lstm or cnn3d")->required();
  c_train->add_option("--data", tr.data, "gen-data directory, landmark JSONL or volume dir")
      ->required();
  c_train->add_option("--config", tr.config, "JSON config file");
  c_train->add_option("--out", tr.out, "checkpoint path")->required();
  c_train->add_option("--seed", tr.seed, "split and training seed");
  c_train->add_flag("--quiet", tr.quiet, "no per-epoch progress");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "evaluate a checkpoint, print metrics JSON");
  c_eval->add_option("--ckpt", ev.ckpt, "checkpoint")->required();
  c_eval->add_option("--data", ev.data, "dataset")->required();
  c_eval->add_option("--split", ev.split, "test (held-out 20%) or all")->capture_default_str();
  c_eval->add_option("--seed", ev.seed, "split seed (match the one used for train)");

  BenchArgs bn;
  auto* c_bench = app.add_subcommand("bench", "compare an lstm and a cnn3d checkpoint");
  c_bench->add_option("--ckpt-lstm", bn.lstm, "lstm checkpoint")->required();
  c_bench->add_option("--ckpt-cnn", bn.cnn, "cnn3d checkpoint")->required();
  c_bench->add_option("--out", bn.out, "report JSON path")->required();
  c_bench->add_option("--trials", bn.trials, "timed trials per model (default 100)");
  c_bench->add_option("--warmup", bn.warmup, "untimed warmup runs (default 10)");
  c_bench->add_option("--config", bn.config, "JSON config file");
  c_bench->add_option("--data", bn.data, "gen-data directory for test accuracy");
  c_bench->add_option("--seed", bn.seed, "split seed used with --data");

  StreamArgs st;
  auto* c_stream = app.add_subcommand("stream", "JSONL frames on stdin -> events on stdout");
  c_stream->add_option("--ckpt", st.ckpt, "lstm checkpoint")->required();
  c_stream->add_option("--config", st.config, "JSON config file");

  GenStreamArgs gs;
  auto* c_gs = app.add_subcommand("gen-stream", "write a scripted landmark stream as JSONL");
  c_gs->add_option("--text", gs.text, "characters to sign")->required();
  c_gs->add_option("--classes", gs.classes, "number of classes")->capture_default_str();
  c_gs->add_option("--frames", gs.frames, "frames per gesture")->capture_default_str();
  c_gs->add_option("--gap", gs.gap, "idle frames around each gesture")->capture_default_str();
  c_gs->add_option("--noise", gs.noise, "landmark noise sigma")->capture_default_str();
  c_gs->add_option("--seed", gs.seed, "stream seed");
  c_gs->add_option("--template-seed", gs.template_seed, "gesture template seed")
      ->capture_default_str();
  c_gs->add_option("--charset", gs.charset, "class characters");
  c_gs->add_option("--out", gs.out, "output file (default stdout)");

  try {
    std::vector<std::string> rev(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
    std::reverse(rev.begin(), rev.end());
    app.parse(std::move(rev));
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*c_gen) return gen_data(gd, out);
    if (*c_train) return train_cmd(tr, out, err);
    if (*c_eval) return eval_cmd(ev, out);
    if (*c_bench) return bench_cmd(bn, out);
    if (*c_stream) return stream_cmd(st, in, out);
    if (*c_gs) return gen_stream_cmd(gs, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace gesturebench::cli
