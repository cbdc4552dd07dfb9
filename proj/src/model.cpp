#include "gesturebench/model.hpp"

#include <cmath>
#include <stdexcept>

#include "gesturebench/cnn3d.hpp"
#include "gesturebench/lstm.hpp"

namespace gesturebench {

std::string to_string(Family f) { return f == Family::lstm ? "lstm" : "cnn3d"; }

Family family_from_string(const std::string& s) {
  if (s == "lstm") return Family::lstm;
  if (s == "cnn3d") return Family::cnn3d;
  throw std::invalid_argument("unknown model family '" + s + "' (expected lstm or cnn3d)");
}

std::uint64_t Model::param_count() const {
  std::uint64_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

std::vector<Var> Model::bind(Tape& tape, bool requires_grad) const {
  std::vector<Var> vars;
  vars.reserve(params_.size());
  for (const auto& p : params_) vars.push_back(tape.leaf_ref(p.value, requires_grad));
  return vars;
}

Tensor Model::predict(const Tensor& input) const {
  Tape tape;
  const auto vars = bind(tape, false);
  return ops::softmax(forward(tape, vars, input, Mode::infer).value());
}

std::unique_ptr<Model> make_model(const nlohmann::json& descriptor, std::uint64_t seed) {
  if (!descriptor.is_object() || !descriptor.contains("family") ||
      !descriptor.contains("config")) {
    throw std::invalid_argument("model descriptor needs 'family' and 'config'");
  }
  const Family family = family_from_string(descriptor.at("family").get<std::string>());
  if (family == Family::lstm) {
    return std::make_unique<LstmModel>(LstmConfig::from_json(descriptor.at("config")), seed);
  }
  return std::make_unique<Cnn3dModel>(Cnn3dConfig::from_json(descriptor.at("config")), seed);
}

void init_uniform_fan_in(Tensor& t, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.data()) v = rng.uniform(-bound, bound);
}

}  // namespace gesturebench
