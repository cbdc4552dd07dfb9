#include <doctest/doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gesturebench/bench.hpp"
#include "gesturebench/cnn3d.hpp"
#include "gesturebench/lstm.hpp"
#include "support/oracles.hpp"

using namespace gesturebench;

namespace {

ModelMetrics fixture(Family f) {
  ModelMetrics m;
  m.family = f;
  if (f == Family::lstm) {
    m.input_shape = {30, 63};
    m.accuracy = 0.867;
    m.latency = {100, 20.3125, 20.0, 24.5, 19.75};
    m.memory = memory_estimate(142180, 5790, 8553600);
  } else {
    m.input_shape = {16, 32, 32, 1};
    m.accuracy = 0.924;
    m.latency = {100, 65.0, 64.25, 71.5, 63.0};
    m.memory = memory_estimate(164260, 230400, 37657600);
  }
  m.per_frame_ms = m.latency.mean_ms / static_cast<double>(m.input_shape[0]);
  return m;
}

std::string golden_path(const std::string& name) { return std::string(GB_GOLDEN_DIR) + "/" + name; }

// GB_UPDATE_GOLDEN=1 rewrites the fixture instead of comparing.
void check_golden(const std::string& name, const std::string& text) {
  const std::string path = golden_path(name);
  if (std::getenv("GB_UPDATE_GOLDEN")) {
    std::ofstream(path, std::ios::binary) << text;
  }
  std::ifstream in(path, std::ios::binary);
  REQUIRE_MESSAGE(in.good(), "missing golden file " << path);
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str() == text);
}

LstmConfig lstm_cfg() {
  LstmConfig c;
  c.input_size = 10;
  c.hidden_sizes = {6, 4};
  c.dense_size = 5;
  c.num_classes = 3;
  return c;
}

Cnn3dConfig cnn_cfg() {
  Cnn3dConfig c;
  c.input_dims = {8, 12, 12, 2};
  c.blocks = {Cnn3dBlock{3}, Cnn3dBlock{4}};
  c.blocks[1].kernel = {2, 2, 2};
  c.dense_size = 5;
  c.num_classes = 3;
  return c;
}

}  // namespace

TEST_CASE("percentiles and summaries") {
  const auto one = summarize_latency({4.25});
  CHECK(one.trials == 1);
  CHECK(one.mean_ms == 4.25);
  CHECK(one.p50_ms == 4.25);
  CHECK(one.p95_ms == 4.25);
  CHECK(one.min_ms == 4.25);

  CHECK(percentile({1, 2, 3, 4, 5}, 0.5) == 3.0);
  CHECK(percentile({5, 1, 4, 2, 3}, 0.95) == doctest::Approx(4.8));
  CHECK(percentile({10, 20}, 0.25) == doctest::Approx(12.5));
  CHECK_THROWS(percentile({}, 0.5));
  CHECK_THROWS(percentile({1}, 1.5));
  CHECK_THROWS(summarize_latency({}));

  Rng rng(4);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> s(1 + rng.below(50));
    for (double& v : s) v = rng.uniform(0, 10) * rng.uniform(0, 10);
    const auto st = summarize_latency(s);
    CHECK(st.min_ms <= st.p50_ms);
    CHECK(st.p50_ms <= st.p95_ms);
    CHECK(st.min_ms <= st.mean_ms);
  }
}

TEST_CASE("measured latency has the requested trial count and ordering") {
  const LstmModel m(lstm_cfg(), 1);
  const Tensor x({30, 10}, 0.1);
  const auto st = measure_latency(m, x, 1, 0);
  CHECK(st.trials == 1);
  CHECK(st.mean_ms == st.p50_ms);
  CHECK(st.mean_ms == st.p95_ms);
  const auto many = measure_latency(m, x, 25, 2);
  CHECK(many.trials == 25);
  CHECK(many.min_ms > 0.0);
  CHECK(many.min_ms <= many.p50_ms);
  CHECK(many.p50_ms <= many.p95_ms);
  CHECK_THROWS(measure_latency(m, x, 0, 0));
  CHECK_THROWS_AS(measure_latency(m, Tensor({8, 12, 12, 2}), 1, 0), DimensionError);
}

TEST_CASE("memory figures") {
  const auto one = memory_estimate(1, 0, 0);
  CHECK(one.bytes_f64 == 8);
  CHECK(one.bytes_f32 == 4);
  CHECK(one.param_bytes_f64 == 8);
  CHECK(dense_flops(4, 2) == 16);
  CHECK(lstm_step_flops(3, 2) == 2 * 4 * 2 * 5);
  CHECK(conv3d_flops(10, 2, 3, 3, 3, 1) == 10 * 2 * 2 * 27);

  const LstmModel l(lstm_cfg());
  const auto ml = estimate_memory(l);
  CHECK(ml.param_count == l.param_count());
  CHECK(ml.param_bytes_f64 == 8 * l.param_count());
  CHECK(ml.bytes_f64 == 8 * (l.param_count() + ml.activation_elements));
  CHECK(ml.bytes_f32 * 2 == ml.bytes_f64);
  // at least the whole first-layer output sequence
  CHECK(ml.activation_elements >= 30 * 6);

  const Cnn3dModel c(cnn_cfg());
  const auto mc = estimate_memory(c);
  CHECK(mc.param_bytes_f32 == 4 * c.param_count());
  for (const auto& s : cnn_cfg().block_shapes()) CHECK(mc.activation_elements >= shape_numel(s.conv));
  CHECK(mc.activation_elements >= shape_numel(cnn_cfg().input_dims));
}

TEST_CASE("FLOP estimates follow the per-layer formulas") {
  const auto lc = lstm_cfg();
  const std::uint64_t want_l = 30 * (lstm_step_flops(10, 6) + lstm_step_flops(6, 4)) +
                               dense_flops(4, 5) + dense_flops(5, 3);
  CHECK(LstmModel(lc).flop_estimate() == want_l);

  const auto cc = cnn_cfg();
  // 8x12x12 -> conv 6x10x10 -> pool 3x5x5 -> conv 2x4x4 -> pool 1x2x2
  const std::uint64_t want_c = conv3d_flops(600, 3, 3, 3, 3, 2) + conv3d_flops(32, 4, 2, 2, 2, 3) +
                               dense_flops(16, 5) + dense_flops(5, 3);
  CHECK(Cnn3dModel(cc).flop_estimate() == want_c);
}

TEST_CASE("FLOP estimates grow with every config dimension") {
  auto lstm_flops = [](const LstmConfig& c) { return LstmModel(c).flop_estimate(); };
  const auto base = lstm_cfg();
  const auto f0 = lstm_flops(base);
  for (int dim = 0; dim < 5; ++dim) {
    auto c = base;
    switch (dim) {
      case 0: c.input_size += 3; break;
      case 1: c.hidden_sizes[0] += 1; break;
      case 2: c.hidden_sizes[1] += 1; break;
      case 3: c.dense_size += 1; break;
      case 4: c.num_classes += 1; break;
    }
    INFO("lstm dim " << dim);
    CHECK(lstm_flops(c) > f0);
  }
  CHECK(LstmModel(base).flops(31) > LstmModel(base).flops(30));

  auto cnn_flops = [](const Cnn3dConfig& c) { return Cnn3dModel(c).flop_estimate(); };
  const auto cb = cnn_cfg();
  const auto g0 = cnn_flops(cb);
  for (int dim = 0; dim < 8; ++dim) {
    auto c = cb;
    switch (dim) {
      case 0: c.input_dims[0] += 2; break;
      case 1: c.input_dims[1] += 2; break;
      case 2: c.input_dims[2] += 2; break;
      case 3: c.input_dims[3] += 1; break;
      case 4: c.blocks[0].out_channels += 1; break;
      case 5: c.blocks[1].out_channels += 1; break;
      case 6: c.dense_size += 1; break;
      case 7: c.num_classes += 1; break;
    }
    INFO("cnn dim " << dim);
    CHECK(cnn_flops(c) > g0);
  }
}

TEST_CASE("comparison of reference figures") {
  ModelMetrics l, c;
  l.accuracy = 0.867;
  c.accuracy = 0.924;
  l.latency.mean_ms = 65.0 / 3.2;
  c.latency.mean_ms = 65.0;
  l.memory.param_count = 100;
  c.memory.param_count = 250;
  const auto r = compare(l, c);
  CHECK(r.accuracy_delta == doctest::Approx(5.7).epsilon(1e-12));
  CHECK(r.latency_ratio == doctest::Approx(3.2).epsilon(1e-12));
  CHECK(r.param_ratio == 2.5);
  CHECK(r.accuracy_trend);
  CHECK(r.latency_trend);
  CHECK(r.params_trend);
}

TEST_CASE("identical metrics: ratios 1, trends true/false/false") {
  const auto m = fixture(Family::lstm);
  const auto r = compare(m, m);
  CHECK(r.latency_ratio == 1.0);
  CHECK(r.param_ratio == 1.0);
  CHECK(r.accuracy_delta == 0.0);
  CHECK(r.accuracy_trend);  // ties count for accuracy
  CHECK_FALSE(r.latency_trend);
  CHECK_FALSE(r.params_trend);
}

TEST_CASE("report JSON: schema, round trip, stable bytes") {
  const auto r = compare(fixture(Family::lstm), fixture(Family::cnn3d));
  const std::string a = render_report(r, ReportFormat::json);
  CHECK(a == render_report(r, ReportFormat::json));
  const auto j = nlohmann::json::parse(a);
  CHECK(j.at("derived").at("trends").at("latency") == true);
  CHECK(j.at("derived").contains("param_ratio"));
  CHECK(j.at("lstm").at("family") == "lstm");
  CHECK(j.at("cnn3d").at("memory").at("param_count") == 164260);
  CHECK(ComparisonReport::from_json(j) == r);
  CHECK(render_report(ComparisonReport::from_json(j), ReportFormat::json) == a);
  auto broken = j;
  broken["lstm"].erase("latency");
  CHECK_THROWS(ComparisonReport::from_json(broken));
}

TEST_CASE("text table matches the golden fixture") {
  const auto r = compare(fixture(Family::lstm), fixture(Family::cnn3d));
  const std::string text = render_report(r, ReportFormat::text);
  CHECK(text.find("Real-Time Capability") != std::string::npos);
  CHECK(text == render_report(r, ReportFormat::text));
  check_golden("report_table.txt", text);
  check_golden("report.json", render_report(r, ReportFormat::json));
}

TEST_CASE("measure_model fills everything but accuracy") {
  BenchConfig cfg;
  cfg.trials = 3;
  cfg.warmup = 1;
  const LstmModel l(lstm_cfg(), 2);
  const auto m = measure_model(l, 0.5, cfg);
  CHECK(m.family == Family::lstm);
  CHECK(m.accuracy == 0.5);
  CHECK(m.input_shape == Shape{30, 10});
  CHECK(m.latency.trials == 3);
  CHECK(m.per_frame_ms == doctest::Approx(m.latency.mean_ms / 30));
  CHECK(m.memory == estimate_memory(l));
  CHECK(ModelMetrics::from_json(m.to_json()) == m);

  cfg.trials = 0;
  CHECK_THROWS(measure_model(l, 0.5, cfg));
  CHECK_THROWS_AS(BenchConfig::from_json({{"trials", 3}, {"warm", 1}}), std::invalid_argument);
}
