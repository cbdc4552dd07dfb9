#include <doctest/doctest.h>

#include <cmath>
#include <limits>

#include "gesturebench/cnn3d.hpp"
#include "gesturebench/lstm.hpp"
#include "gesturebench/stream.hpp"
#include "support/debounce_enum.hpp"
#include "support/oracles.hpp"

using namespace gesturebench;

namespace {

Predictor constant(std::size_t cls, std::size_t classes, double conf = 1.0) {
  return [=](const Tensor&) {
    Tensor p({classes}, (1.0 - conf) / static_cast<double>(classes - 1));
    p[cls] = conf;
    return p;
  };
}

std::vector<LandmarkFrame> idle(std::size_t n, std::uint64_t seed = 1) {
  return idle_frames(n, 0.01, seed);
}

std::size_t count(const std::vector<PredictionEvent>& ev, PredictionEvent::Kind k) {
  std::size_t n = 0;
  for (const auto& e : ev) n += e.kind == k ? 1 : 0;
  return n;
}

}  // namespace

TEST_CASE("29 frames produce no events") {
  StreamPipeline p({}, constant(0, 36), 36);
  const auto ev = p.run(idle(29));
  CHECK(ev.empty());
  CHECK(p.frames_accepted() == 29);
}

TEST_CASE("always class 2 at full confidence: one emit at frame 40 in 60 frames") {
  // inferences at 30, 35, ..., 60; the third agreeing one (frame 40) emits and
  // the run stays latched afterwards
  StreamPipeline p({}, constant(2, 36), 36);
  const auto ev = p.run(idle(60));
  CHECK(count(ev, PredictionEvent::Kind::candidate) == 7);
  REQUIRE(count(ev, PredictionEvent::Kind::emit) == 1);
  for (const auto& e : ev) {
    if (e.kind != PredictionEvent::Kind::emit) continue;
    CHECK(e.at_frame == 40);
    CHECK(e.character == 'C');
    CHECK(e.confidence == 1.0);
  }
  CHECK(assemble_sentence(ev) == "C");
}

TEST_CASE("alternating classes never emit") {
  std::size_t calls = 0;
  StreamPipeline p({}, [&](const Tensor&) {
    Tensor t({4}, 0.0);
    t[calls++ % 2] = 1.0;
    return t;
  }, 4);
  const auto ev = p.run(idle(300));
  CHECK(calls == 55);
  CHECK(count(ev, PredictionEvent::Kind::emit) == 0);
  CHECK(assemble_sentence(ev).empty());
}

TEST_CASE("low confidence never emits") {
  StreamPipeline p({}, constant(1, 5, 0.69), 5);
  CHECK(count(p.run(idle(200)), PredictionEvent::Kind::emit) == 0);
  StreamPipeline q({}, constant(1, 5, 0.7), 5);  // tau itself passes
  CHECK(count(q.run(idle(200)), PredictionEvent::Kind::emit) == 1);
}

TEST_CASE("sentence assembly keeps emit characters in order") {
  CHECK(assemble_sentence({}).empty());
  std::vector<PredictionEvent> ev;
  for (char c : std::string("HELLO")) {
    PredictionEvent cand;
    cand.character = 'Z';
    ev.push_back(cand);
    PredictionEvent e;
    e.kind = PredictionEvent::Kind::emit;
    e.character = c;
    ev.push_back(e);
  }
  CHECK(assemble_sentence(ev) == "HELLO");
}

TEST_CASE("held gestures separated by breaks spell a word") {
  // scripted predictor: class per inference index, low confidence in between
  const std::string script = "7...4...11...11...14";  // H E L L O in the default charset
  std::vector<std::pair<std::size_t, double>> plan;
  for (std::size_t i = 0; i < script.size();) {
    if (script[i] == '.') {
      plan.push_back({0, 0.2});
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < script.size() && script[j] != '.') ++j;
    const std::size_t cls = std::stoul(script.substr(i, j - i));
    for (int k = 0; k < 4; ++k) plan.push_back({cls, 0.95});
    i = j;
  }
  std::size_t at = 0;
  StreamPipeline p({}, [&](const Tensor&) {
    const auto [cls, conf] = plan[std::min(at++, plan.size() - 1)];
    Tensor t({36}, (1.0 - conf) / 35.0);
    t[cls] = conf;
    return t;
  }, 36);
  const auto ev = p.run(idle(30 + 5 * (plan.size() - 1)));
  CHECK(at == plan.size());
  CHECK(assemble_sentence(ev) == "HELLO");
}

TEST_CASE("random predictors respect the emit invariants") {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    StreamConfig cfg;
    cfg.window_len = 1 + rng.below(40);
    cfg.infer_every = 1 + rng.below(8);
    cfg.stability_count = 1 + rng.below(4);
    cfg.cooldown_frames = 1 + rng.below(40);
    cfg.confidence_threshold = rng.uniform(0.3, 0.95);
    const std::size_t classes = 2 + rng.below(3);
    Rng pr(child_seed(21, trial));
    std::size_t last = 0;
    StreamPipeline p(cfg, [&](const Tensor&) {
      // sticky random oracle so runs actually form
      if (pr.uniform() < 0.3) last = pr.below(classes);
      Tensor t({classes}, 0.0);
      const double conf = pr.uniform(0.2, 1.0);
      for (std::size_t c = 0; c < classes; ++c) t[c] = c == last ? conf : (1 - conf) / (classes - 1);
      return t;
    }, classes);
    const auto ev = p.run(idle(400, trial));
    std::vector<const PredictionEvent*> cands;
    std::optional<std::uint64_t> prev;
    for (const auto& e : ev) {
      if (e.kind == PredictionEvent::Kind::candidate) cands.push_back(&e);
      if (e.kind != PredictionEvent::Kind::emit) continue;
      INFO("trial " << trial << " emit at " << e.at_frame);
      CHECK(e.confidence >= cfg.confidence_threshold);
      REQUIRE(cands.size() >= cfg.stability_count);
      for (std::size_t k = cands.size() - cfg.stability_count; k < cands.size(); ++k) {
        CHECK(cands[k]->class_index == e.class_index);
        CHECK(cands[k]->confidence >= cfg.confidence_threshold);
      }
      if (prev) CHECK(e.at_frame - *prev > cfg.cooldown_frames);
      prev = e.at_frame;
    }
  }
}

TEST_CASE("exhaustive debouncer enumeration") {
  for (std::size_t m : {1, 2, 3}) {
    for (std::size_t cooldown : {5, 15, 16}) {
      StreamConfig cfg;
      cfg.stability_count = m;
      cfg.cooldown_frames = cooldown;
      const auto a = gbtest::audit_debouncer(cfg, 9, 50);
      INFO("m=" << m << " cooldown=" << cooldown);
      for (const auto& v : a.violations) INFO(v);
      CHECK(a.ok());
      CHECK(a.sequences == ((std::uint64_t{1} << 20) - 1) / 3);  // sum of 4^k, k = 0..9
      CHECK(a.emits > 0);
      CHECK(a.states > 4);
    }
  }
}

TEST_CASE("debouncer hand trace") {
  StreamConfig strict;
  const auto ok = gbtest::audit_debouncer(strict, 6, 20);
  CHECK(ok.ok());
  Debouncer d(strict);
  CHECK_FALSE(d.offer(0, 0.9, 30));
  CHECK_FALSE(d.offer(0, 0.9, 35));
  CHECK(d.offer(0, 0.9, 40));
  CHECK_FALSE(d.offer(0, 0.9, 45));  // latched
  CHECK_FALSE(d.offer(1, 0.9, 50));
  CHECK_FALSE(d.offer(1, 0.9, 55));
  CHECK(d.offer(1, 0.9, 60));  // 20 frames after the last emit
  d.reset();
  CHECK_FALSE(d.state().last_emit.has_value());
}

TEST_CASE("cooldown defers an emit until it has elapsed") {
  StreamConfig c;
  c.stability_count = 1;
  Debouncer d(c);
  CHECK(d.offer(0, 0.9, 30));
  CHECK_FALSE(d.offer(1, 0.9, 35));
  CHECK_FALSE(d.offer(1, 0.9, 45));  // 15 frames is not more than 15
  CHECK(d.offer(1, 0.9, 50));
}

TEST_CASE("malformed frames produce a diagnostic and the stream continues") {
  StreamPipeline p({}, constant(0, 36), 36);
  const std::vector<double> short_frame(62, 0.0);
  auto ev = p.push_frame(short_frame);
  REQUIRE(ev.size() == 1);
  CHECK(ev[0].kind == PredictionEvent::Kind::diagnostic);
  CHECK(ev[0].message.find("62") != std::string::npos);

  LandmarkFrame nan = idle(1)[0];
  nan[10] = std::numeric_limits<double>::quiet_NaN();
  ev = p.push_frame(nan);
  REQUIRE(ev.size() == 1);
  CHECK(ev[0].kind == PredictionEvent::Kind::diagnostic);

  LandmarkFrame flat{};
  ev = p.push_frame(flat);
  REQUIRE(ev.size() == 1);
  CHECK(ev[0].kind == PredictionEvent::Kind::diagnostic);
  CHECK(ev[0].to_json().at("kind") == "diagnostic");

  CHECK(p.frames_accepted() == 0);
  ev = p.run(idle(40));
  CHECK(count(ev, PredictionEvent::Kind::diagnostic) == 0);
  CHECK(count(ev, PredictionEvent::Kind::candidate) == 3);
}

TEST_CASE("raw frames are normalized before inference") {
  LstmConfig c;
  c.hidden_sizes = {6};
  c.dense_size = 5;
  c.num_classes = 4;
  const LstmModel m(c, 3);
  const auto norm = idle(40, 7);
  std::vector<LandmarkFrame> raw = norm;
  for (auto& f : raw) {
    for (std::size_t k = 0; k < kFrameWidth; ++k) f[k] = f[k] * 3.5 + (k % 3 == 0 ? 0.2 : -0.4);
  }
  StreamConfig sc;
  sc.charset = "ABCD";
  auto a = StreamPipeline::for_model(m, sc).run(norm);
  auto b = StreamPipeline::for_model(m, sc).run(raw);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].class_index == b[i].class_index);
    CHECK(std::abs(a[i].confidence - b[i].confidence) < 1e-9);
  }
}

TEST_CASE("replays are bit-identical") {
  LstmConfig c;
  c.hidden_sizes = {8};
  c.dense_size = 6;
  c.num_classes = 3;
  const LstmModel m(c, 4);
  StreamConfig sc;
  sc.confidence_threshold = 0.34;
  sc.stability_count = 2;
  const auto frames = idle(300, 9);
  const auto a = StreamPipeline::for_model(m, sc).run(frames);
  const auto b = StreamPipeline::for_model(m, sc).run(frames);
  CHECK(a == b);
  CHECK(count(a, PredictionEvent::Kind::candidate) == 55);
}

TEST_CASE("stream config validation and JSON") {
  StreamConfig c;
  CHECK(StreamConfig::from_json(c.to_json()).to_json() == c.to_json());
  CHECK_THROWS_AS(StreamConfig::from_json(nlohmann::json{{"window", 3}}), std::invalid_argument);
  c.charset = "AB";
  CHECK_THROWS_AS(c.validate(3), std::invalid_argument);
  c = StreamConfig{};
  c.confidence_threshold = 0.0;
  CHECK_THROWS_AS(c.validate(2), std::invalid_argument);
  c.confidence_threshold = 1.0;
  CHECK_NOTHROW(c.validate(2));
  c.stability_count = 0;
  CHECK_THROWS_AS(c.validate(2), std::invalid_argument);
  CHECK_THROWS_AS(StreamPipeline(StreamConfig{}, Predictor{}, 3), std::invalid_argument);

  PredictionEvent e;
  e.kind = PredictionEvent::Kind::emit;
  e.class_index = 7;
  e.character = 'H';
  e.confidence = 0.875;
  e.at_frame = 40;
  CHECK(e.to_json().dump() == R"({"at_frame":40,"char":"H","class":7,"confidence":0.875,"kind":"emit"})");
}

TEST_CASE("stream mode refuses a volume model") {
  Cnn3dConfig c;
  c.input_dims = {4, 6, 6, 1};
  Cnn3dBlock b{2};
  b.kernel = {2, 2, 2};
  c.blocks = {b};
  c.dense_size = 3;
  c.num_classes = 2;
  const Cnn3dModel m(c);
  CHECK_THROWS_AS(StreamPipeline::for_model(m, {}), std::invalid_argument);
}

TEST_CASE("a predictor with the wrong class count is an error") {
  StreamPipeline p({}, constant(0, 5), 4);
  CHECK_THROWS_AS(p.run(idle(30)), DimensionError);
}
