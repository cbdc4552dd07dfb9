#include <doctest/doctest.h>

#include <cmath>

#include "gesturebench/lstm.hpp"
#include "support/oracles.hpp"

using namespace gesturebench;

namespace {

LstmLayerParams random_layer(std::size_t in, std::size_t h, Rng& rng) {
  return {oracle::random_tensor({4 * h, in}, rng), oracle::random_tensor({4 * h, h}, rng),
          oracle::random_tensor({4 * h}, rng)};
}

std::vector<double> vec(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

LstmConfig tiny() {
  LstmConfig c;
  c.input_size = 5;
  c.hidden_sizes = {4, 3};
  c.dense_size = 6;
  c.num_classes = 4;
  return c;
}

}  // namespace

TEST_CASE("zero weights and zero cell give a zero step") {
  LstmLayerParams p{Tensor({8, 3}), Tensor({8, 2}), Tensor({8})};
  const auto out = lstm_cell_step(Tensor::from({0.3, -1.0, 2.0}), Tensor::from({0.5, -0.5}),
                                  Tensor({2}), p);
  CHECK(out.c == Tensor({2}));
  CHECK(out.h == Tensor({2}));
}

TEST_CASE("saturated gates remember the cell") {
  const std::size_t h = 3;
  Rng rng(2);
  LstmLayerParams p{Tensor({4 * h, 2}), Tensor({4 * h, h}), Tensor({4 * h})};
  for (std::size_t j = 0; j < h; ++j) {
    p.bias[j] = -50.0;          // input gate
    p.bias[h + j] = 50.0;       // forget gate
    p.bias[3 * h + j] = -50.0;  // output gate
  }
  const Tensor c = oracle::random_tensor({h}, rng);
  const auto out = lstm_cell_step(Tensor::from({0.1, 0.2}), Tensor({h}), c, p);
  CHECK(max_abs_diff(out.c, c) < 1e-12);
}

TEST_CASE("cell step matches the scalar oracle") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed == 0 ? 5 : seed + 100);
    const std::size_t in = seed == 0 ? 2 : 1 + rng.below(6);
    const std::size_t h = seed == 0 ? 3 : 1 + rng.below(6);
    const auto p = random_layer(in, h, rng);
    const Tensor x = oracle::random_tensor({in}, rng, -2, 2);
    const Tensor hp = oracle::random_tensor({h}, rng);
    const Tensor cp = oracle::random_tensor({h}, rng, -2, 2);
    const auto got = lstm_cell_step(x, hp, cp, p);
    const auto want = oracle::lstm_step(vec(x), vec(hp), vec(cp), p.input_weights,
                                        p.recurrent_weights, p.bias);
    INFO("seed " << seed);
    for (std::size_t j = 0; j < h; ++j) {
      CHECK(std::abs(got.h[j] - want.h[j]) < 1e-12);
      CHECK(std::abs(got.c[j] - want.c[j]) < 1e-12);
    }
  }
}

TEST_CASE("hidden state stays strictly inside (-1, 1)") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    auto p = random_layer(3, 4, rng);
    for (auto* t : {&p.input_weights, &p.recurrent_weights, &p.bias}) {
      for (double& v : t->data()) v *= 20.0;
    }
    const auto out = lstm_cell_step(oracle::random_tensor({3}, rng, -30, 30),
                                    oracle::random_tensor({4}, rng),
                                    oracle::random_tensor({4}, rng, -5, 5), p);
    for (double v : out.h.data()) CHECK(std::abs(v) < 1.0);
  }
}

TEST_CASE("cell rejects mismatched dimensions") {
  Rng rng(1);
  const auto p = random_layer(3, 2, rng);
  CHECK_THROWS_AS(lstm_cell_step(Tensor({3}), Tensor({3}), Tensor({3}), p), DimensionError);
  CHECK_THROWS_AS(lstm_cell_step(Tensor({3}), Tensor({2}), Tensor({5}), p), DimensionError);
  CHECK_THROWS(lstm_cell_step(Tensor({4}), Tensor({2}), Tensor({2}), p));
}

TEST_CASE("T=1 forward equals one cell step feeding the head") {
  LstmConfig c = tiny();
  c.hidden_sizes = {4};
  const LstmModel m(c, 7);
  Rng rng(7);
  const Tensor x = oracle::random_tensor({1, 5}, rng);
  const auto cell = lstm_cell_step(x.reshaped({5}), Tensor({4}), Tensor({4}), m.layer(0));
  const auto& ps = m.params();
  const Tensor hidden = ops::dense(cell.h, ps[3].value, ps[4].value, Activation::relu);
  const Tensor want = ops::softmax(ops::dense(hidden, ps[5].value, ps[6].value));
  CHECK(max_abs_diff(m.predict(x), want) < 1e-15);
}

TEST_CASE("whole-sequence forward equals step-by-step with carried state") {
  const LstmModel m(tiny(), 3);
  Rng rng(30);
  const Tensor x = oracle::random_tensor({30, 5}, rng);
  auto state = m.initial_state();
  for (std::size_t t = 0; t < 30; ++t) {
    Tensor frame({5});
    for (std::size_t k = 0; k < 5; ++k) frame[k] = x[t * 5 + k];
    m.step(state, frame);
  }
  CHECK(m.head(state) == m.predict(x));
}

TEST_CASE("output is a distribution for every length 1..60") {
  const LstmModel m(tiny(), 1);
  Rng rng(60);
  for (std::size_t T = 1; T <= 60; ++T) {
    const Tensor p = m.predict(oracle::random_tensor({T, 5}, rng, -3, 3));
    double s = 0;
    for (double v : p.data()) {
      CHECK(v >= 0.0);
      s += v;
    }
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("forward rejects bad input widths") {
  const LstmModel m(tiny(), 1);
  CHECK_THROWS_AS(m.predict(Tensor({4, 6})), DimensionError);
  CHECK_THROWS_AS(m.predict(Tensor({20})), DimensionError);
  CHECK_THROWS(Tensor({0, 5}));  // an empty sequence cannot even be built
}

TEST_CASE("forget-gate bias starts at 1, the rest of the bias at 0") {
  const LstmModel m(tiny(), 4);
  for (std::size_t l = 0; l < 2; ++l) {
    const auto b = m.layer(l).bias;
    const std::size_t h = b.numel() / 4;
    for (std::size_t k = 0; k < b.numel(); ++k) CHECK(b[k] == (k >= h && k < 2 * h ? 1.0 : 0.0));
  }
}

TEST_CASE("parameter count") {
  LstmConfig one;
  one.input_size = 1;
  one.hidden_sizes = {1};
  one.dense_size = 1;
  one.num_classes = 2;
  CHECK(lstm_param_count(one) == 18);
  CHECK(LstmModel(one).param_count() == 18);

  // default config summed matrix by matrix
  const std::uint64_t layer1 = 256 * 63 + 256 * 64 + 256;
  const std::uint64_t layer2 = 512 * 64 + 512 * 128 + 512;
  const std::uint64_t head = 128 * 64 + 64 + 64 * 36 + 36;
  CHECK(lstm_param_count(LstmConfig{}) == layer1 + layer2 + head);
  CHECK(LstmModel(LstmConfig{}).param_count() == layer1 + layer2 + head);

  for (std::size_t h : {1, 4, 16, 64}) {
    LstmConfig a = tiny(), b = tiny();
    a.hidden_sizes = {h};
    b.hidden_sizes = {2 * h};
    // dense bias and output layer do not depend on the width
    const std::uint64_t fixed = a.dense_size + a.dense_size * a.num_classes + a.num_classes;
    CHECK(lstm_param_count(b) - fixed > 2 * (lstm_param_count(a) - fixed));
  }
}

TEST_CASE("config validation and JSON round trip") {
  LstmConfig c = tiny();
  CHECK(LstmConfig::from_json(c.to_json()).to_json() == c.to_json());
  auto bad = c;
  bad.hidden_sizes = {};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = c;
  bad.num_classes = 1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = c;
  bad.dropout_rate = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = c;
  bad.hidden_sizes = {3, 0};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  auto j = c.to_json();
  j["hiden_sizes"] = {3};
  CHECK_THROWS_AS(LstmConfig::from_json(j), std::invalid_argument);
}

TEST_CASE("forward is bit-deterministic") {
  const LstmModel a(tiny(), 9), b(tiny(), 9);
  Rng r1(2), r2(2);
  const Tensor x = oracle::random_tensor({25, 5}, r1);
  CHECK(a.predict(x) == b.predict(oracle::random_tensor({25, 5}, r2)));
  CHECK(a.predict(x) == a.predict(x));
}

TEST_CASE("train mode needs an rng and applies dropout to the last hidden state") {
  const LstmModel m(tiny(), 2);
  Rng rng(3);
  const Tensor x = oracle::random_tensor({6, 5}, rng);
  Tape tape;
  const auto ps = m.bind(tape, false);
  CHECK_THROWS_AS(m.forward(tape, ps, x, Mode::train), std::invalid_argument);
  Rng d1(4), d2(4);
  Tape t1, t2;
  const Tensor a = m.forward(t1, m.bind(t1, false), x, Mode::train, &d1).value();
  const Tensor b = m.forward(t2, m.bind(t2, false), x, Mode::train, &d2).value();
  CHECK(a == b);
}
