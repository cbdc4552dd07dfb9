#include "gesturebench/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "json_util.hpp"

namespace gesturebench {

using nlohmann::json;

namespace {

// NaN/inf do not survive JSON; ratios with a zero denominator are stored as null.
json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double num_from(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

double ratio(double a, double b) {
  if (b == 0.0) return a == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  return a / b;
}

template <typename F>
auto parse_section(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed ") + what + ": " + e.what());
  }
}

}  // namespace

json LatencyStats::to_json() const {
  return {{"trials", trials},
          {"mean_ms", mean_ms},
          {"p50_ms", p50_ms},
          {"p95_ms", p95_ms},
          {"min_ms", min_ms}};
}

LatencyStats LatencyStats::from_json(const json& j) {
  return parse_section("latency", [&] {
    LatencyStats s;
    s.trials = j.at("trials").get<std::size_t>();
    s.mean_ms = j.at("mean_ms").get<double>();
    s.p50_ms = j.at("p50_ms").get<double>();
    s.p95_ms = j.at("p95_ms").get<double>();
    s.min_ms = j.at("min_ms").get<double>();
    return s;
  });
}

double percentile(std::vector<double> samples, double q) {
  if (samples.empty()) throw std::invalid_argument("percentile of an empty sample set");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("percentile q must be in [0,1]");
  std::sort(samples.begin(), samples.end());
  const double pos = q * static_cast<double>(samples.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, samples.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return samples[lo] + (samples[hi] - samples[lo]) * frac;
}

LatencyStats summarize_latency(const std::vector<double>& ms) {
  if (ms.empty()) throw std::invalid_argument("latency needs at least one trial");
  LatencyStats s;
  s.trials = ms.size();
  s.mean_ms = std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(ms.size());
  s.p50_ms = percentile(ms, 0.5);
  s.p95_ms = percentile(ms, 0.95);
  s.min_ms = *std::min_element(ms.begin(), ms.end());
  return s;
}

void BenchConfig::validate() const {
  if (trials == 0) throw std::invalid_argument("bench trials must be >= 1");
}

json BenchConfig::to_json() const { return {{"trials", trials}, {"warmup", warmup}}; }

BenchConfig BenchConfig::from_json(const json& j) {
  detail::reject_unknown_keys(j, {"trials", "warmup"}, "bench");
  BenchConfig c;
  detail::read_key(j, "trials", c.trials);
  detail::read_key(j, "warmup", c.warmup);
  c.validate();
  return c;
}

LatencyStats measure_latency(const Model& model, const Tensor& input, std::size_t trials,
                             std::size_t warmup) {
  if (trials == 0) throw std::invalid_argument("bench trials must be >= 1");
  model.check_input(input);
  for (std::size_t i = 0; i < warmup; ++i) (void)model.predict(input);
  std::vector<double> ms;
  ms.reserve(trials);
  for (std::size_t i = 0; i < trials; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const Tensor p = model.predict(input);
    const auto t1 = std::chrono::steady_clock::now();
    if (p.numel() == 0) throw std::logic_error("empty prediction");
    ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return summarize_latency(ms);
}

json MemoryEstimate::to_json() const {
  return {{"param_count", param_count},
          {"activation_elements", activation_elements},
          {"bytes_f64", bytes_f64},
          {"bytes_f32", bytes_f32},
          {"param_bytes_f64", param_bytes_f64},
          {"param_bytes_f32", param_bytes_f32},
          {"flop_estimate", flop_estimate}};
}

MemoryEstimate MemoryEstimate::from_json(const json& j) {
  return parse_section("memory", [&] {
    MemoryEstimate m;
    m.param_count = j.at("param_count").get<std::uint64_t>();
    m.activation_elements = j.at("activation_elements").get<std::uint64_t>();
    m.bytes_f64 = j.at("bytes_f64").get<std::uint64_t>();
    m.bytes_f32 = j.at("bytes_f32").get<std::uint64_t>();
    m.param_bytes_f64 = j.at("param_bytes_f64").get<std::uint64_t>();
    m.param_bytes_f32 = j.at("param_bytes_f32").get<std::uint64_t>();
    m.flop_estimate = j.at("flop_estimate").get<std::uint64_t>();
    return m;
  });
}

MemoryEstimate memory_estimate(std::uint64_t params, std::uint64_t activations,
                               std::uint64_t flops) {
  MemoryEstimate m;
  m.param_count = params;
  m.activation_elements = activations;
  m.param_bytes_f64 = params * 8;
  m.param_bytes_f32 = params * 4;
  m.bytes_f64 = (params + activations) * 8;
  m.bytes_f32 = (params + activations) * 4;
  m.flop_estimate = flops;
  return m;
}

MemoryEstimate estimate_memory(const Model& model) {
  return memory_estimate(model.param_count(), model.peak_activation_elements(),
                         model.flop_estimate());
}

json ModelMetrics::to_json() const {
  return {{"family", to_string(family)},
          {"input_shape", input_shape},
          {"accuracy", accuracy},
          {"latency", latency.to_json()},
          {"per_frame_ms", per_frame_ms},
          {"memory", memory.to_json()}};
}

ModelMetrics ModelMetrics::from_json(const json& j) {
  return parse_section("model metrics", [&] {
    ModelMetrics m;
    m.family = family_from_string(j.at("family").get<std::string>());
    m.input_shape = j.at("input_shape").get<Shape>();
    m.accuracy = j.at("accuracy").get<double>();
    m.latency = LatencyStats::from_json(j.at("latency"));
    m.per_frame_ms = j.at("per_frame_ms").get<double>();
    m.memory = MemoryEstimate::from_json(j.at("memory"));
    return m;
  });
}

ModelMetrics measure_model(const Model& model, double accuracy, const BenchConfig& config) {
  config.validate();
  ModelMetrics m;
  m.family = model.family();
  m.input_shape = model.nominal_input_shape();
  m.accuracy = accuracy;
  // Timings do not depend on values; a fixed ramp keeps runs reproducible.
  Tensor input(m.input_shape);
  for (std::size_t i = 0; i < input.numel(); ++i) {
    input[i] = static_cast<double>(i % 97) / 97.0;
  }
  m.latency = measure_latency(model, input, config.trials, config.warmup);
  m.per_frame_ms = m.latency.mean_ms / static_cast<double>(m.input_shape.at(0));
  m.memory = estimate_memory(model);
  return m;
}

ComparisonReport compare(const ModelMetrics& lstm, const ModelMetrics& cnn) {
  ComparisonReport r;
  r.lstm = lstm;
  r.cnn3d = cnn;
  r.latency_ratio = ratio(cnn.latency.mean_ms, lstm.latency.mean_ms);
  r.accuracy_delta = 100.0 * (cnn.accuracy - lstm.accuracy);
  r.param_ratio = ratio(static_cast<double>(cnn.memory.param_count),
                        static_cast<double>(lstm.memory.param_count));
  r.accuracy_trend = cnn.accuracy >= lstm.accuracy;
  r.latency_trend = cnn.latency.mean_ms > lstm.latency.mean_ms;
  r.params_trend = cnn.memory.param_count > lstm.memory.param_count;
  return r;
}

json ComparisonReport::to_json() const {
  return {{"lstm", lstm.to_json()},
          {"cnn3d", cnn3d.to_json()},
          {"derived",
           {{"latency_ratio", num(latency_ratio)},
            {"accuracy_delta", accuracy_delta},
            {"param_ratio", num(param_ratio)},
            {"trends",
             {{"accuracy", accuracy_trend}, {"latency", latency_trend}, {"params", params_trend}}}}}};
}

ComparisonReport ComparisonReport::from_json(const json& j) {
  return parse_section("report", [&] {
    ComparisonReport r;
    r.lstm = ModelMetrics::from_json(j.at("lstm"));
    r.cnn3d = ModelMetrics::from_json(j.at("cnn3d"));
    const auto& d = j.at("derived");
    r.latency_ratio = num_from(d.at("latency_ratio"));
    r.accuracy_delta = d.at("accuracy_delta").get<double>();
    r.param_ratio = num_from(d.at("param_ratio"));
    const auto& t = d.at("trends");
    r.accuracy_trend = t.at("accuracy").get<bool>();
    r.latency_trend = t.at("latency").get<bool>();
    r.params_trend = t.at("params").get<bool>();
    return r;
  });
}

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string count(std::uint64_t v) {
  std::string s = std::to_string(v);
  for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
  return s;
}

std::string mb(std::uint64_t bytes) { return fmt("%.2f MB", static_cast<double>(bytes) / 1e6); }

std::string render_text(const ComparisonReport& r) {
  struct Row {
    std::string name, lstm, cnn;
  };
  auto per_model = [](const ModelMetrics& m) {
    std::vector<std::string> v;
    v.push_back(shape_to_string(m.input_shape));
    v.push_back(fmt("%.1f%%", 100.0 * m.accuracy));
    v.push_back(count(m.memory.flop_estimate) + " FLOPs");
    v.push_back(count(m.memory.param_count) + " params");
    v.push_back(mb(m.memory.param_bytes_f64) + " / " + mb(m.memory.param_bytes_f32));
    v.push_back(mb(m.memory.bytes_f64) + " / " + mb(m.memory.bytes_f32));
    v.push_back(fmt("%.3f", m.latency.mean_ms) + " / " + fmt("%.3f", m.latency.p50_ms) + " / " +
                fmt("%.3f", m.latency.p95_ms) + " / " + fmt("%.3f", m.latency.min_ms));
    v.push_back(fmt("%.4f ms", m.per_frame_ms));
    v.push_back(m.latency.mean_ms > 0 ? fmt("%.1f windows/s", 1000.0 / m.latency.mean_ms) : "-");
    return v;
  };
  const char* names[] = {"Input",
                         "Accuracy",
                         "Computation",
                         "Model Size",
                         "Weights (f64 / f32)",
                         "Memory (f64 / f32)",
                         "Latency ms (mean/p50/p95/min)",
                         "Per-frame latency",
                         "Real-Time Capability"};
  const auto a = per_model(r.lstm);
  const auto b = per_model(r.cnn3d);
  std::vector<Row> rows{{"Parameters", "LSTM Model", "3D CNN Model"}};
  for (std::size_t i = 0; i < a.size(); ++i) rows.push_back({names[i], a[i], b[i]});

  std::size_t w0 = 0, w1 = 0, w2 = 0;
  for (const auto& row : rows) {
    w0 = std::max(w0, row.name.size());
    w1 = std::max(w1, row.lstm.size());
    w2 = std::max(w2, row.cnn.size());
  }
  std::string out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    out += row.name + std::string(w0 - row.name.size() + 2, ' ') + row.lstm +
           std::string(w1 - row.lstm.size() + 2, ' ') + row.cnn + "\n";
    if (i == 0) out += std::string(w0 + w1 + w2 + 4, '-') + "\n";
  }
  auto yn = [](bool f) { return f ? "yes" : "no"; };
  out += "\n";
  out += "latency ratio (cnn/lstm)   " + fmt("%.2f", r.latency_ratio) + "\n";
  out += "accuracy delta (points)    " + fmt("%+.2f", r.accuracy_delta) + "\n";
  out += "param ratio (cnn/lstm)     " + fmt("%.2f", r.param_ratio) + "\n";
  out += std::string("cnn accuracy >= lstm      ") + yn(r.accuracy_trend) + "\n";
  out += std::string("cnn slower than lstm      ") + yn(r.latency_trend) + "\n";
  out += std::string("cnn larger than lstm      ") + yn(r.params_trend) + "\n";
  return out;
}

}  // namespace

std::string render_report(const ComparisonReport& report, ReportFormat format) {
  if (format == ReportFormat::json) return report.to_json().dump(2) + "\n";
  return render_text(report);
}

}  // namespace gesturebench
