#include "gesturebench/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace gesturebench {

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node& n = nodes_.emplace_back();
  n.owned = std::move(value);
  n.requires_grad = requires_grad;
  return {this, nodes_.size() - 1};
}

Var Tape::leaf_ref(const Tensor& value, bool requires_grad) {
  Node& n = nodes_.emplace_back();
  n.external = &value;
  n.requires_grad = requires_grad;
  return {this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Var& v) { return v.requires_grad(); });
  Node& n = nodes_.emplace_back();
  n.owned = std::move(value);
  n.requires_grad = needs;
  if (needs) n.backward = std::move(backward);
  return {this, nodes_.size() - 1};
}

const Tensor& Tape::value(std::size_t id) const {
  const Node& n = nodes_.at(id);
  return n.external ? *n.external : n.owned;
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_.at(id);
  if (n.grad.empty()) n.grad = Tensor(value(id).shape(), 0.0);
  return n.grad;
}

const Tensor& Tape::grad(std::size_t id) { return grad_buffer(id); }

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw std::invalid_argument("loss belongs to a different tape");
  if (loss.value().numel() != 1) {
    throw std::invalid_argument("backward requires a scalar loss, got shape " +
                                shape_to_string(loss.shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  visits_.clear();
  grad_buffer(loss.id()).fill(1.0);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    visits_.push_back(i);
    n.backward(*this, n.grad);
  }
}

namespace ag {

namespace {

Tensor* grad_if(Tape& t, Var v) { return v.requires_grad() ? &t.grad_buffer(v.id()) : nullptr; }

void require_same_shape(Var a, Var b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(b.shape()));
  }
}

}  // namespace

Var conv3d(Var input, Var weights, Var bias, const Conv3dSpec& spec) {
  Tape& tape = *input.tape();
  Tensor out = ops::conv3d(input.value(), spec, weights.value(), bias.value());
  return tape.record(std::move(out), {input, weights, bias},
                     [input, weights, bias, spec](Tape& t, const Tensor& g) {
                       ops::conv3d_backward(input.value(), spec, weights.value(), g,
                                            grad_if(t, input), grad_if(t, weights),
                                            grad_if(t, bias));
                     });
}

Var maxpool3d(Var input, Dims3 window) {
  Tape& tape = *input.tape();
  ops::PoolResult r = ops::maxpool3d(input.value(), window);
  auto argmax = std::make_shared<std::vector<std::size_t>>(std::move(r.argmax));
  return tape.record(std::move(r.output), {input}, [input, argmax](Tape& t, const Tensor& g) {
    ops::maxpool3d_backward(*argmax, g, t.grad_buffer(input.id()));
  });
}

Var batchnorm(Var input, Var gamma, Var beta, const ops::BatchNormState& state, Mode mode,
              ops::BatchNormOptions options, ops::ChannelStats* batch_stats_out) {
  Tape& tape = *input.tape();
  if (state.channels() != gamma.value().numel()) {
    throw DimensionError("batchnorm running state channel count mismatch");
  }
  std::vector<double> mean, var;
  const bool batch_stats = mode == Mode::train;
  if (batch_stats) {
    ops::ChannelStats s = ops::channel_statistics(input.value());
    mean = std::move(s.mean);
    var = std::move(s.var);
  } else {
    if (!state.initialized) {
      throw UninitializedStatsError("batchnorm inference requested before any training update");
    }
    mean.assign(state.running_mean.data().begin(), state.running_mean.data().end());
    var.assign(state.running_var.data().begin(), state.running_var.data().end());
  }
  Tensor out = ops::batchnorm_apply(input.value(), gamma.value(), beta.value(), mean, var,
                                    options.eps);
  if (batch_stats && batch_stats_out) *batch_stats_out = {mean, var};
  const double eps = options.eps;
  return tape.record(std::move(out), {input, gamma, beta},
                     [input, gamma, beta, mean = std::move(mean), var = std::move(var), eps,
                      batch_stats](Tape& t, const Tensor& g) {
                       ops::batchnorm_backward(input.value(), gamma.value(), mean, var, eps,
                                               batch_stats, g, grad_if(t, input),
                                               grad_if(t, gamma), grad_if(t, beta));
                     });
}

Var dropout(Var input, double rate, Mode mode, Rng& rng) {
  ops::check_dropout_rate(rate);
  if (mode == Mode::infer || rate == 0.0) return input;
  Tape& tape = *input.tape();
  auto mask = std::make_shared<Tensor>(ops::dropout_mask(input.shape(), rate, rng));
  const double keep = 1.0 - rate;
  Tensor out = input.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = (*mask)[i] == 0.0 ? 0.0 : out[i] / keep;
  return tape.record(std::move(out), {input}, [input, mask, keep](Tape& t, const Tensor& g) {
    Tensor& gi = t.grad_buffer(input.id());
    for (std::size_t i = 0; i < gi.numel(); ++i) {
      if ((*mask)[i] != 0.0) gi[i] += g[i] / keep;
    }
  });
}

Var activate(Var input, Activation act) {
  if (act == Activation::none) return input;
  Tape& tape = *input.tape();
  // Derivatives are expressed through the output, which lands at this id.
  const std::size_t out_id = tape.size();
  return tape.record(ops::activate(input.value(), act), {input},
                     [input, out_id, act](Tape& t, const Tensor& g) {
                       Tensor d = ops::activation_backward(t.value(out_id), g, act);
                       Tensor& gi = t.grad_buffer(input.id());
                       for (std::size_t i = 0; i < gi.numel(); ++i) gi[i] += d[i];
                     });
}

Var dense(Var input, Var weights, Var bias, Activation act) {
  Tape& tape = *input.tape();
  Tensor out = ops::dense(input.value(), weights.value(), bias.value());
  Var lin = tape.record(std::move(out), {input, weights, bias},
                        [input, weights, bias](Tape& t, const Tensor& g) {
                          ops::dense_backward(input.value(), weights.value(), g,
                                              grad_if(t, input), grad_if(t, weights),
                                              grad_if(t, bias));
                        });
  return activate(lin, act);
}

Var matvec(Var matrix, Var vec) {
  Tape& tape = *matrix.tape();
  Tensor out = ops::matvec(matrix.value(), vec.value());
  return tape.record(std::move(out), {matrix, vec}, [matrix, vec](Tape& t, const Tensor& g) {
    const Tensor& a = matrix.value();
    const Tensor& x = vec.value();
    const std::size_t m = a.dim(0), n = a.dim(1);
    if (matrix.requires_grad()) {
      Tensor& ga = t.grad_buffer(matrix.id());
      for (std::size_t i = 0; i < m; ++i) {
        const double gi = g[i];
        double* row = ga.raw() + i * n;
        for (std::size_t j = 0; j < n; ++j) row[j] += gi * x[j];
      }
    }
    if (vec.requires_grad()) {
      Tensor& gx = t.grad_buffer(vec.id());
      for (std::size_t i = 0; i < m; ++i) {
        const double gi = g[i];
        const double* row = a.raw() + i * n;
        for (std::size_t j = 0; j < n; ++j) gx[j] += gi * row[j];
      }
    }
  });
}

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b.value()[i];
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    for (Var v : {a, b}) {
      if (!v.requires_grad()) continue;
      Tensor& gv = t.grad_buffer(v.id());
      for (std::size_t i = 0; i < gv.numel(); ++i) gv[i] += g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (a.requires_grad()) {
      Tensor& ga = t.grad_buffer(a.id());
      for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += g[i] * b.value()[i];
    }
    if (b.requires_grad()) {
      Tensor& gb = t.grad_buffer(b.id());
      for (std::size_t i = 0; i < gb.numel(); ++i) gb[i] += g[i] * a.value()[i];
    }
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (auto& v : out.data()) v *= factor;
  return a.tape()->record(std::move(out), {a}, [a, factor](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_buffer(a.id());
    for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += g[i] * factor;
  });
}

Var slice(Var input, std::size_t start, std::size_t count) {
  const Tensor& x = input.value();
  if (count == 0 || start + count > x.numel()) {
    throw DimensionError("slice [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") out of range for " +
                         std::to_string(x.numel()) + " elements");
  }
  std::vector<double> data(x.data().begin() + static_cast<std::ptrdiff_t>(start),
                           x.data().begin() + static_cast<std::ptrdiff_t>(start + count));
  return input.tape()->record(Tensor({count}, std::move(data)), {input},
                              [input, start](Tape& t, const Tensor& g) {
                                Tensor& gi = t.grad_buffer(input.id());
                                for (std::size_t i = 0; i < g.numel(); ++i) gi[start + i] += g[i];
                              });
}

Var reshape(Var input, Shape shape) {
  return input.tape()->record(input.value().reshaped(std::move(shape)), {input},
                              [input](Tape& t, const Tensor& g) {
                                Tensor& gi = t.grad_buffer(input.id());
                                for (std::size_t i = 0; i < g.numel(); ++i) gi[i] += g[i];
                              });
}

Var sum(Var input) {
  double total = 0.0;
  for (double v : input.value().data()) total += v;
  return input.tape()->record(Tensor::scalar(total), {input}, [input](Tape& t, const Tensor& g) {
    Tensor& gi = t.grad_buffer(input.id());
    for (auto& v : gi.data()) v += g[0];
  });
}

LossOutput softmax_cross_entropy(Var logits, std::size_t label) {
  ops::SoftmaxLoss r = ops::softmax_cross_entropy(logits.value(), label);
  auto probs = std::make_shared<Tensor>(r.probs);
  Var loss = logits.tape()->record(Tensor::scalar(r.loss), {logits},
                                   [logits, probs, label](Tape& t, const Tensor& g) {
                                     Tensor& gl = t.grad_buffer(logits.id());
                                     for (std::size_t i = 0; i < gl.numel(); ++i) {
                                       const double d = (*probs)[i] - (i == label ? 1.0 : 0.0);
                                       gl[i] += g[0] * d;
                                     }
                                   });
  return {loss, std::move(r.probs)};
}

LossOutput softmax_cross_entropy(Var logits, std::span<const double> target) {
  ops::SoftmaxLoss r = ops::softmax_cross_entropy(logits.value(), target);
  auto probs = std::make_shared<Tensor>(r.probs);
  auto tgt = std::make_shared<std::vector<double>>(target.begin(), target.end());
  double mass = 0.0;
  for (double t : target) mass += t;
  Var loss = logits.tape()->record(Tensor::scalar(r.loss), {logits},
                                   [logits, probs, tgt, mass](Tape& t, const Tensor& g) {
                                     Tensor& gl = t.grad_buffer(logits.id());
                                     for (std::size_t i = 0; i < gl.numel(); ++i) {
                                       gl[i] += g[0] * (mass * (*probs)[i] - (*tgt)[i]);
                                     }
                                   });
  return {loss, std::move(r.probs)};
}

}  // namespace ag

GradCheckResult grad_check(const LossBuilder& build, std::vector<Tensor> params, double h) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& p : params) vars.push_back(tape.leaf_ref(p, true));
    Var loss = build(tape, vars);
    tape.backward(loss);
    for (const auto& v : vars) analytic.push_back(v.grad());
  }

  auto evaluate = [&]() {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& p : params) vars.push_back(tape.leaf_ref(p, false));
    return build(tape, vars).value()[0];
  };

  GradCheckResult result;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p].numel(); ++i) {
      const double saved = params[p][i];
      params[p][i] = saved + h;
      const double up = evaluate();
      params[p][i] = saved - h;
      const double down = evaluate();
      params[p][i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[p][i];
      const double rel = std::abs(a - numeric) / std::max(1e-12, std::abs(a) + std::abs(numeric));
      if (rel > result.max_rel_error) result = {rel, p, i, a, numeric};
    }
  }
  return result;
}

}  // namespace gesturebench
