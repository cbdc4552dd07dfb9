#include "support/grad_cases.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "gesturebench/cnn3d.hpp"
#include "gesturebench/lstm.hpp"
#include "support/oracles.hpp"

namespace gradcases {

using namespace gesturebench;
using oracle::random_tensor;

namespace {

// Reduces any output to a scalar through a fixed random projection so every
// output element gets a distinct, non-trivial upstream gradient.
Var project(Tape& tape, Var out, std::uint64_t seed) {
  Rng rng(seed ^ 0xabcdefULL);
  Var r = tape.leaf(random_tensor(out.shape(), rng, 0.5, 1.5), false);
  return ag::sum(ag::mul(out, r));
}

Instance unary(std::uint64_t seed, const Shape& shape, std::function<Var(Var)> f,
               double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  return {[f, seed](Tape& tape, std::span<const Var> p) { return project(tape, f(p[0]), seed); },
          {random_tensor(shape, rng, lo, hi)}};
}

Shape small_shape(Rng& rng, std::size_t rank) {
  Shape s(rank);
  for (auto& d : s) d = 1 + rng.below(4);
  return s;
}

Case dense_case(Activation act, const char* name) {
  return {name, [act](std::uint64_t seed) -> Instance {
            Rng rng(seed);
            const std::size_t n = 1 + rng.below(3), in = 1 + rng.below(5), out = 1 + rng.below(4);
            std::vector<Tensor> ps{random_tensor({n, in}, rng), random_tensor({in, out}, rng),
                                   random_tensor({out}, rng)};
            return {[act, seed](Tape& tape, std::span<const Var> p) {
                      return project(tape, ag::dense(p[0], p[1], p[2], act), seed);
                    },
                    std::move(ps)};
          }};
}

Case activation_case(Activation act, const char* name) {
  return {name, [act](std::uint64_t seed) {
            Rng rng(seed);
            const Shape s = small_shape(rng, 2);
            return unary(seed + 1, s, [act](Var v) { return ag::activate(v, act); }, -3, 3);
          }};
}

}  // namespace

std::vector<Case> primitive_cases() {
  std::vector<Case> cases;
  cases.push_back({"conv3d", [](std::uint64_t seed) -> Instance {
                     Rng rng(seed);
                     Conv3dSpec s;
                     s.in_channels = 1 + rng.below(2);
                     s.out_channels = 1 + rng.below(3);
                     s.kernel = {1 + rng.below(3), 1 + rng.below(3), 1 + rng.below(3)};
                     s.stride = {1 + rng.below(2), 1 + rng.below(2), 1 + rng.below(2)};
                     const Shape in{s.kernel[0] + rng.below(3), s.kernel[1] + rng.below(3),
                                    s.kernel[2] + rng.below(3), s.in_channels};
                     std::vector<Tensor> ps{random_tensor(in, rng),
                                            random_tensor(s.weight_shape(), rng),
                                            random_tensor({s.out_channels}, rng)};
                     return {[s, seed](Tape& tape, std::span<const Var> p) {
                               return project(tape, ag::conv3d(p[0], p[1], p[2], s), seed);
                             },
                             std::move(ps)};
                   }});
  cases.push_back({"maxpool3d", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const Shape s{2 + rng.below(3), 2 + rng.below(3), 2 + rng.below(3),
                                   1 + rng.below(2)};
                     return unary(seed + 7, s, [](Var v) { return ag::maxpool3d(v); });
                   }});
  for (Mode mode : {Mode::train, Mode::infer}) {
    cases.push_back({mode == Mode::train ? "batchnorm(train)" : "batchnorm(infer)",
                     [mode](std::uint64_t seed) -> Instance {
                       Rng rng(seed);
                       const std::size_t C = 1 + rng.below(3);
                       const Shape s{2 + rng.below(2), 2 + rng.below(2), 1 + rng.below(2), C};
                       auto st = std::make_shared<ops::BatchNormState>(C);
                       st->running_mean = random_tensor({C}, rng);
                       st->running_var = random_tensor({C}, rng, 0.5, 2.0);
                       st->initialized = true;
                       std::vector<Tensor> ps{random_tensor(s, rng, -2, 3),
                                              random_tensor({C}, rng, 0.5, 1.5),
                                              random_tensor({C}, rng)};
                       return {[st, mode, seed](Tape& tape, std::span<const Var> p) {
                                 return project(tape, ag::batchnorm(p[0], p[1], p[2], *st, mode),
                                                seed);
                               },
                               std::move(ps)};
                     }});
  }
  cases.push_back({"dropout(train, fixed mask)", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const Shape s = small_shape(rng, 2);
                     return unary(seed, s, [seed](Var v) {
                       Rng mask(seed + 99);  // same mask on every evaluation
                       return ag::dropout(v, 0.3, Mode::train, mask);
                     });
                   }});
  cases.push_back(dense_case(Activation::none, "dense"));
  cases.push_back(dense_case(Activation::relu, "dense+relu"));
  cases.push_back(dense_case(Activation::tanh, "dense+tanh"));
  cases.push_back(dense_case(Activation::sigmoid, "dense+sigmoid"));
  cases.push_back(activation_case(Activation::relu, "relu"));
  cases.push_back(activation_case(Activation::tanh, "tanh"));
  cases.push_back(activation_case(Activation::sigmoid, "sigmoid"));
  cases.push_back({"matvec", [](std::uint64_t seed) -> Instance {
                     Rng rng(seed);
                     const std::size_t m = 1 + rng.below(4), n = 1 + rng.below(4);
                     return {[seed](Tape& tape, std::span<const Var> p) {
                               return project(tape, ag::matvec(p[0], p[1]), seed);
                             },
                             {random_tensor({m, n}, rng), random_tensor({n}, rng)}};
                   }});
  cases.push_back({"add/mul/scale", [](std::uint64_t seed) -> Instance {
                     Rng rng(seed);
                     const Shape s = small_shape(rng, 2);
                     return {[seed](Tape& tape, std::span<const Var> p) {
                               Var v = ag::add(ag::mul(p[0], p[1]), ag::scale(p[0], -1.7));
                               return project(tape, v, seed);
                             },
                             {random_tensor(s, rng), random_tensor(s, rng)}};
                   }});
  cases.push_back({"slice/reshape", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const Shape s{2 + rng.below(3), 2 + rng.below(3)};
                     const std::size_t n = s[0] * s[1];
                     const std::size_t start = rng.below(n - 1);
                     const std::size_t count = 1 + rng.below(n - start);
                     return unary(seed, s, [=](Var v) {
                       return ag::slice(ag::reshape(v, {s[1], s[0]}), start, count);
                     });
                   }});
  cases.push_back({"softmax_cross_entropy", [](std::uint64_t seed) -> Instance {
                     Rng rng(seed);
                     const std::size_t C = 2 + rng.below(6);
                     const std::size_t label = rng.below(C);
                     return {[label](Tape&, std::span<const Var> p) {
                               return ag::softmax_cross_entropy(p[0], label).loss;
                             },
                             {random_tensor({C}, rng, -2, 2)}};
                   }});
  cases.push_back({"softmax_cross_entropy(soft target)", [](std::uint64_t seed) -> Instance {
                     Rng rng(seed);
                     const std::size_t C = 2 + rng.below(6);
                     std::vector<double> t(C);
                     double s = 0;
                     for (auto& v : t) s += (v = rng.uniform(0.1, 1.0));
                     for (auto& v : t) v /= s;
                     return {[t](Tape&, std::span<const Var> p) {
                               return ag::softmax_cross_entropy(p[0], t).loss;
                             },
                             {random_tensor({C}, rng, -2, 2)}};
                   }});
  cases.push_back({"lstm_cell", [](std::uint64_t seed) -> Instance {
                     Rng rng(seed);
                     const std::size_t in = 1 + rng.below(4), h = 1 + rng.below(4);
                     std::vector<Tensor> ps{random_tensor({in}, rng), random_tensor({h}, rng),
                                            random_tensor({h}, rng),
                                            random_tensor({4 * h, in}, rng),
                                            random_tensor({4 * h, h}, rng),
                                            random_tensor({4 * h}, rng)};
                     return {[seed](Tape& tape, std::span<const Var> p) {
                               const auto o = ag::lstm_cell(p[0], p[1], p[2], p[3], p[4], p[5]);
                               return ag::add(project(tape, o.h, seed),
                                              project(tape, o.c, seed + 1));
                             },
                             std::move(ps)};
                   }});
  return cases;
}

Instance composed_instance(std::uint64_t seed) {
  Rng rng(seed + 1000);
  const Conv3dSpec s{1, 2};
  std::vector<Tensor> ps{random_tensor({5, 5, 5, 1}, rng), random_tensor(s.weight_shape(), rng),
                         random_tensor({2}, rng), random_tensor({2, 3}, rng),
                         random_tensor({3}, rng)};
  const std::size_t label = rng.below(3);
  return {[s, label](Tape&, std::span<const Var> p) {
            Var x = ag::conv3d(p[0], p[1], p[2], s);  // 3x3x3x2
            x = ag::maxpool3d(x);                     // 1x1x1x2
            x = ag::reshape(x, {2});
            x = ag::dense(x, p[3], p[4]);
            return ag::softmax_cross_entropy(x, label).loss;
          },
          std::move(ps)};
}

double min_nonzero_gradient(const Instance& inst) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& p : inst.params) vars.push_back(tape.leaf_ref(p, true));
  tape.backward(inst.build(tape, vars));
  double lo = std::numeric_limits<double>::infinity();
  for (const auto& v : vars) {
    for (double g : v.grad().data()) {
      if (g != 0.0) lo = std::min(lo, std::abs(g));
    }
  }
  return lo;
}

Conditioned conditioned_check(const std::function<Instance(std::uint64_t)>& make,
                              std::uint64_t seed, double min_grad, std::size_t max_redraws) {
  Conditioned out;
  for (std::size_t k = 0; k <= max_redraws; ++k) {
    const Instance inst = make(k == 0 ? seed : child_seed(seed, k));
    if (min_nonzero_gradient(inst) < min_grad) {
      ++out.redraws;
      continue;
    }
    out.found = true;
    out.result = grad_check(inst.build, inst.params);
    return out;
  }
  return out;
}

GradAudit grad_audit(const LossBuilder& build, std::vector<Tensor> params, double h) {
  std::vector<Tensor> analytic;
  double f0 = 0.0;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& p : params) vars.push_back(tape.leaf_ref(p, true));
    Var loss = build(tape, vars);
    f0 = loss.value()[0];
    tape.backward(loss);
    for (const auto& v : vars) analytic.push_back(v.grad());
  }
  auto evaluate = [&]() {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& p : params) vars.push_back(tape.leaf_ref(p, false));
    return build(tape, vars).value()[0];
  };

  GradAudit out;
  out.roundoff_bound =
      4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(f0)) / h;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p].numel(); ++i) {
      const double saved = params[p][i];
      params[p][i] = saved + h;
      const double up = evaluate();
      params[p][i] = saved - h;
      const double down = evaluate();
      params[p][i] = saved;
      const double n = (up - down) / (2.0 * h);
      const double a = analytic[p][i];
      const double abs_err = std::abs(a - n);
      const double rel = abs_err / std::max(1e-12, std::abs(a) + std::abs(n));
      ++out.coordinates;
      out.max_abs_error = std::max(out.max_abs_error, abs_err);
      if (rel >= 1e-6 && abs_err > out.roundoff_bound) ++out.unexplained;
      if (rel > out.max_rel_error) {
        out.max_rel_error = rel;
        out.worst_param = p;
        out.worst_index = i;
        out.analytic = a;
        out.numeric = n;
      }
    }
  }
  return out;
}

namespace {

GradAudit model_audit(const Model& model, const Tensor& input, std::size_t label, Mode mode,
                      std::uint64_t dropout_seed, const std::vector<bool>& frozen = {}) {
  const auto& mp = model.params();
  std::vector<Tensor> ps;
  std::vector<std::size_t> slot;  // checked param k -> model param index
  for (std::size_t i = 0; i < mp.size(); ++i) {
    if (i < frozen.size() && frozen[i]) continue;
    slot.push_back(i);
    ps.push_back(mp[i].value);
  }
  return grad_audit(
      [&](Tape& tape, std::span<const Var> p) {
        std::vector<Var> all;
        for (const auto& q : mp) all.push_back(tape.leaf_ref(q.value, false));
        for (std::size_t k = 0; k < slot.size(); ++k) all[slot[k]] = p[k];
        Rng drop(dropout_seed);
        Var logits = model.forward(tape, all, input, mode, &drop);
        return ag::softmax_cross_entropy(logits, label).loss;
      },
      ps);
}

Cnn3dModel tiny_cnn(std::uint64_t seed, Tensor& input) {
  Cnn3dConfig c;
  c.input_dims = {6, 8, 8, 1};
  Cnn3dBlock second{3};
  second.kernel = {1, 2, 2};
  second.pool = false;
  c.blocks = {Cnn3dBlock{2}, second};
  c.dense_size = 5;
  c.num_classes = 3;
  Cnn3dModel m(c, seed);
  Rng rng(seed);
  for (auto& st : m.bn_states()) {
    st.running_mean = random_tensor(st.running_mean.shape(), rng, -0.2, 0.2);
    st.running_var = random_tensor(st.running_var.shape(), rng, 0.5, 1.5);
    st.initialized = true;
  }
  input = random_tensor(c.input_dims, rng, 0.0, 1.0);
  return m;
}

std::vector<bool> conv_bias_mask(const Model& m) {
  std::vector<bool> mask;
  for (const auto& p : m.params()) mask.push_back(p.name.ends_with("conv.b"));
  return mask;
}

}  // namespace

GradAudit lstm_model_case(std::uint64_t seed, std::size_t steps) {
  LstmConfig c;
  c.input_size = 3;
  c.hidden_sizes = {3, 2};
  c.dense_size = 3;
  c.num_classes = 3;
  LstmModel m(c, seed);
  Rng rng(seed);
  const Tensor x = random_tensor({steps, 3}, rng);
  return model_audit(m, x, seed % 3, Mode::infer, 0);
}

GradAudit lstm_small_case(std::size_t steps, std::size_t hidden, std::uint64_t seed) {
  LstmConfig c;
  c.input_size = 3;
  c.hidden_sizes = {hidden};
  c.dense_size = 4;
  c.num_classes = 3;
  LstmModel m(c, seed);
  Rng rng(seed);
  const Tensor x = random_tensor({steps, 3}, rng);
  return model_audit(m, x, seed % 3, Mode::infer, 0);
}

GradAudit cnn_model_case(std::uint64_t seed, Mode mode) {
  Tensor x;
  const Cnn3dModel m = tiny_cnn(seed, x);
  const std::vector<bool> frozen = mode == Mode::train ? conv_bias_mask(m) : std::vector<bool>{};
  return model_audit(m, x, seed % 3, mode, seed + 5, frozen);
}

double cnn_train_conv_bias_grad(std::uint64_t seed) {
  Tensor x;
  const Cnn3dModel m = tiny_cnn(seed, x);
  Tape tape;
  std::vector<Var> vars;
  for (const auto& p : m.params()) vars.push_back(tape.leaf_ref(p.value, true));
  Rng drop(seed + 5);
  tape.backward(ag::softmax_cross_entropy(m.forward(tape, vars, x, Mode::train, &drop), seed % 3).loss);
  double worst = 0.0;
  const auto mask = conv_bias_mask(m);
  for (std::size_t i = 0; i < vars.size(); ++i) {
    if (!mask[i]) continue;
    for (double g : vars[i].grad().data()) worst = std::max(worst, std::abs(g));
  }
  return worst;
}

}  // namespace gradcases
