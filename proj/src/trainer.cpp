#include "gesturebench/trainer.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "json_util.hpp"

namespace gesturebench {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw std::invalid_argument("beta1 must be in (0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw std::invalid_argument("beta2 must be in (0, 1)");
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be > 0");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate}, {"beta1", beta1},
          {"beta2", beta2},                 {"eps", eps},
          {"batch_size", batch_size},       {"epochs", epochs},
          {"seed", seed},                   {"early_stop_patience", early_stop_patience}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  detail::reject_unknown_keys(j,
                              {"learning_rate", "beta1", "beta2", "eps", "batch_size", "epochs",
                               "seed", "early_stop_patience"},
                              "train");
  TrainConfig c;
  detail::read_key(j, "learning_rate", c.learning_rate);
  detail::read_key(j, "beta1", c.beta1);
  detail::read_key(j, "beta2", c.beta2);
  detail::read_key(j, "eps", c.eps);
  detail::read_key(j, "batch_size", c.batch_size);
  detail::read_key(j, "epochs", c.epochs);
  detail::read_key(j, "seed", c.seed);
  detail::read_key(j, "early_stop_patience", c.early_stop_patience);
  c.validate();
  return c;
}

AdamState AdamState::zeros_like(const std::vector<NamedTensor>& params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.value.shape(), 0.0);
    s.v.emplace_back(p.value.shape(), 0.0);
  }
  return s;
}

void adam_step(std::vector<NamedTensor>& params, const std::vector<Tensor>& grads,
               AdamState& state, std::uint64_t t, const TrainConfig& c) {
  if (t == 0) throw std::invalid_argument("adam step index must be >= 1");
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw DimensionError("adam: " + std::to_string(params.size()) + " params, " +
                         std::to_string(grads.size()) + " grads, " +
                         std::to_string(state.m.size()) + " moment slots");
  }
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i].value;
    if (grads[i].shape() != p.shape() || state.m[i].shape() != p.shape() ||
        state.v[i].shape() != p.shape()) {
      throw DimensionError("adam: shape mismatch for '" + params[i].name + "': param " +
                           shape_to_string(p.shape()) + ", grad " +
                           shape_to_string(grads[i].shape()));
    }
    double* pd = p.raw();
    double* m = state.m[i].raw();
    double* v = state.v[i].raw();
    const double* g = grads[i].raw();
    for (std::size_t k = 0; k < p.numel(); ++k) {
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      pd[k] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

nlohmann::json TrainHistory::to_json(bool include_timing) const {
  nlohmann::json arr = nlohmann::json::array();
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    const auto& e = epochs[i];
    nlohmann::json r{{"epoch", i + 1},
                     {"train_loss", e.train_loss},
                     {"train_accuracy", e.train_accuracy},
                     {"val_loss", e.val_loss},
                     {"val_accuracy", e.val_accuracy}};
    if (include_timing) r["seconds"] = e.seconds;
    arr.push_back(std::move(r));
  }
  return arr;
}

void check_modality(const Model& model, const Dataset& data) {
  const Modality want = model.family() == Family::lstm ? Modality::landmarks : Modality::volumes;
  if (data.modality != want) {
    throw std::invalid_argument(std::string("modality mismatch: ") + to_string(model.family()) +
                                " model needs " +
                                (want == Modality::landmarks ? "landmark sequences"
                                                             : "frame volumes"));
  }
  if (!data.samples.empty()) model.check_input(data.samples.front().input);
  for (const auto& s : data.samples) {
    if (s.is_gesture() && s.label >= model.num_classes()) {
      throw std::invalid_argument("label " + std::to_string(s.label) + " exceeds model's " +
                                  std::to_string(model.num_classes()) + " classes");
    }
  }
}

namespace {
std::vector<double> uniform_target(const Model& model) {
  const std::size_t c = model.num_classes();
  return std::vector<double>(c, 1.0 / static_cast<double>(c));
}
}  // namespace

BatchGradient batch_gradient(const Model& model, const Dataset& data,
                             std::span<const std::size_t> indices, Rng& dropout_rng) {
  if (indices.empty()) throw std::invalid_argument("batch is empty");
  const auto& params = model.params();
  BatchGradient out;
  for (const auto& p : params) out.grads.emplace_back(p.value.shape(), 0.0);
  for (std::size_t idx : indices) {
    const Sample& s = data.samples.at(idx);
    Tape tape;
    const auto vars = model.bind(tape, true);
    BnStats stats;
    Var logits = model.forward(tape, vars, s.input, Mode::train, &dropout_rng, &stats);
    auto loss = s.is_gesture() ? ag::softmax_cross_entropy(logits, s.label)
                               : ag::softmax_cross_entropy(logits, uniform_target(model));
    tape.backward(loss.loss);
    out.loss += loss.loss.value()[0];
    if (s.is_gesture()) {
      ++out.gestures;
      if (ops::argmax(loss.probs.data()) == s.label) ++out.correct;
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Tensor& g = vars[i].grad();
      double* acc = out.grads[i].raw();
      for (std::size_t k = 0; k < g.numel(); ++k) acc[k] += g[k];
    }
    out.per_sample_bn.push_back(std::move(stats));
  }
  const double inv = 1.0 / static_cast<double>(indices.size());
  for (auto& g : out.grads) {
    for (double& x : g.data()) x *= inv;
  }
  out.loss *= inv;
  return out;
}

namespace {

struct LossAcc {
  double loss;
  double accuracy;
};

LossAcc infer_loss(const Model& model, const Dataset& data) {
  const auto uniform = uniform_target(model);
  double loss = 0.0;
  std::size_t correct = 0, gestures = 0;
  for (const auto& s : data.samples) {
    Tape tape;
    const auto vars = model.bind(tape, false);
    const Tensor logits = model.forward(tape, vars, s.input, Mode::infer).value();
    if (!s.is_gesture()) {
      loss += ops::softmax_cross_entropy(logits, uniform).loss;
      continue;
    }
    const auto r = ops::softmax_cross_entropy(logits, s.label);
    loss += r.loss;
    ++gestures;
    if (ops::argmax(r.probs.data()) == s.label) ++correct;
  }
  const auto n = static_cast<double>(data.samples.size());
  return {loss / n, gestures ? static_cast<double>(correct) / static_cast<double>(gestures) : 0.0};
}

}  // namespace

TrainResult train(const Model& initial, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.samples.empty()) throw std::invalid_argument("training set is empty");
  check_modality(initial, train_set);
  check_modality(initial, val_set);
  const Dataset& monitor = val_set.samples.empty() ? train_set : val_set;

  TrainResult result{initial.clone(), {}};
  if (config.epochs == 0) return result;

  std::unique_ptr<Model> model = initial.clone();
  AdamState adam = AdamState::zeros_like(model->params());
  Rng shuffle_rng(child_seed(config.seed, 0));
  Rng dropout_rng(child_seed(config.seed, 1));
  std::vector<std::size_t> order(train_set.samples.size());
  std::iota(order.begin(), order.end(), 0);

  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::uint64_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    shuffle_rng.shuffle(order.begin(), order.end());
    double loss_sum = 0.0;
    std::size_t correct = 0, gestures = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t len = std::min(config.batch_size, order.size() - start);
      const std::span<const std::size_t> batch(order.data() + start, len);
      BatchGradient bg = batch_gradient(*model, train_set, batch, dropout_rng);
      adam_step(model->params(), bg.grads, adam, ++step, config);
      for (const auto& stats : bg.per_sample_bn) {
        if (!stats.empty()) model->apply_bn_stats(stats);
      }
      loss_sum += bg.loss * static_cast<double>(len);
      correct += bg.correct;
      gestures += bg.gestures;
    }
    EpochRecord rec;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.train_accuracy =
        gestures ? static_cast<double>(correct) / static_cast<double>(gestures) : 0.0;
    const LossAcc v = infer_loss(*model, monitor);
    rec.val_loss = v.loss;
    rec.val_accuracy = v.accuracy;
    rec.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.epochs.push_back(rec);
    if (on_epoch) on_epoch(epoch, rec);

    if (v.loss < best_loss) {
      best_loss = v.loss;
      since_best = 0;
      result.history.best_epoch = epoch;
      result.model = model->clone();
    } else if (++since_best >= config.early_stop_patience && config.early_stop_patience > 0) {
      result.history.stopped_early = epoch < config.epochs;
      break;
    }
  }
  return result;
}

nlohmann::json EvalMetrics::to_json() const {
  return {{"accuracy", accuracy}, {"mean_loss", mean_loss}, {"samples", samples},
          {"confusion", confusion}, {"precision", precision}, {"recall", recall}};
}

EvalMetrics evaluate(const Model& model, const Dataset& data) {
  if (data.samples.empty()) throw std::invalid_argument("evaluation set is empty");
  check_modality(model, data);
  const std::size_t C = model.num_classes();
  EvalMetrics m;
  m.confusion.assign(C, std::vector<std::uint64_t>(C, 0));
  double loss = 0.0;
  for (const auto& s : data.samples) {
    if (!s.is_gesture()) continue;
    ++m.samples;
    Tape tape;
    const auto vars = model.bind(tape, false);
    const auto r = ops::softmax_cross_entropy(
        model.forward(tape, vars, s.input, Mode::infer).value(), s.label);
    loss += r.loss;
    ++m.confusion[s.label][ops::argmax(r.probs.data())];
  }
  std::uint64_t trace = 0;
  m.precision.assign(C, 0.0);
  m.recall.assign(C, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    trace += m.confusion[c][c];
    std::uint64_t row = 0, col = 0;
    for (std::size_t k = 0; k < C; ++k) {
      row += m.confusion[c][k];
      col += m.confusion[k][c];
    }
    if (col > 0) m.precision[c] = static_cast<double>(m.confusion[c][c]) / static_cast<double>(col);
    if (row > 0) m.recall[c] = static_cast<double>(m.confusion[c][c]) / static_cast<double>(row);
  }
  if (m.samples == 0) throw std::invalid_argument("evaluation set has no gesture samples");
  m.accuracy = static_cast<double>(trace) / static_cast<double>(m.samples);
  m.mean_loss = loss / static_cast<double>(m.samples);
  return m;
}

}  // namespace gesturebench
