#include "gesturebench/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace gesturebench {

namespace {

const char* kAxisNames[] = {"time", "height", "width", "channels", "kernel"};

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(what) + " must have rank " + std::to_string(rank) +
                         ", got shape " + shape_to_string(t.shape()));
  }
}

}  // namespace

double ops::dot(const double* a, const double* b, std::size_t n) {
  // Four independent accumulators break the add-latency chain.
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    s0 += a[j] * b[j];
    s1 += a[j + 1] * b[j + 1];
    s2 += a[j + 2] * b[j + 2];
    s3 += a[j + 3] * b[j + 3];
  }
  for (; j < n; ++j) s0 += a[j] * b[j];
  return (s0 + s1) + (s2 + s3);
}

void Conv3dSpec::validate() const {
  if (in_channels == 0 || out_channels == 0) {
    throw std::invalid_argument("conv3d channel counts must be >= 1");
  }
  for (std::size_t a = 0; a < 3; ++a) {
    if (kernel[a] == 0) throw std::invalid_argument("conv3d kernel dims must be >= 1");
    if (stride[a] == 0) throw std::invalid_argument("conv3d stride dims must be >= 1");
  }
}

Shape Conv3dSpec::output_shape(const Shape& input) const {
  validate();
  if (input.size() != 4) {
    throw DimensionError("conv3d input must be [T,H,W,C], got " + shape_to_string(input));
  }
  if (input[3] != in_channels) {
    throw DimensionError("conv3d axis 3 (channels): input has " + std::to_string(input[3]) +
                         ", layer expects " + std::to_string(in_channels));
  }
  Shape out(4);
  for (std::size_t a = 0; a < 3; ++a) {
    if (input[a] < kernel[a]) {
      throw KernelTooLargeError("conv3d axis " + std::to_string(a) + " (" + kAxisNames[a] +
                                "): kernel " + std::to_string(kernel[a]) +
                                " exceeds input extent " + std::to_string(input[a]));
    }
    out[a] = (input[a] - kernel[a]) / stride[a] + 1;
  }
  out[3] = out_channels;
  return out;
}

Shape Conv3dSpec::weight_shape() const {
  return {out_channels, kernel[0], kernel[1], kernel[2], in_channels};
}

namespace ops {

namespace {

void check_conv_params(const Conv3dSpec& spec, const Tensor& weights, const Tensor& bias) {
  const Shape expected = spec.weight_shape();
  require_rank(weights, 5, "conv3d weights");
  for (std::size_t a = 0; a < 5; ++a) {
    if (weights.dim(a) != expected[a]) {
      throw DimensionError("conv3d weights axis " + std::to_string(a) + ": expected " +
                           std::to_string(expected[a]) + ", got " +
                           std::to_string(weights.dim(a)));
    }
  }
  if (bias.rank() != 1 || bias.numel() != spec.out_channels) {
    throw DimensionError("conv3d bias axis 0: expected " + std::to_string(spec.out_channels) +
                         ", got shape " + shape_to_string(bias.shape()));
  }
}

}  // namespace

Tensor conv3d(const Tensor& input, const Conv3dSpec& spec, const Tensor& weights,
              const Tensor& bias) {
  const Shape out_shape = spec.output_shape(input.shape());
  check_conv_params(spec, weights, bias);

  const std::size_t H = input.dim(1), W = input.dim(2), C = input.dim(3);
  const auto [kt, kh, kw] = spec.kernel;
  const auto [st, sh, sw] = spec.stride;
  const std::size_t K = spec.out_channels;
  const std::size_t run = kw * C;

  Tensor out(out_shape);
  const double* in = input.raw();
  const double* w = weights.raw();
  double* o = out.raw();
  // Gather each receptive field into a contiguous patch laid out like one
  // kernel, so every output channel is a single dot product.
  std::vector<double> patch(kt * kh * run);
  for (std::size_t ot = 0; ot < out_shape[0]; ++ot) {
    for (std::size_t oh = 0; oh < out_shape[1]; ++oh) {
      for (std::size_t ow = 0; ow < out_shape[2]; ++ow) {
        double* p = patch.data();
        for (std::size_t dt = 0; dt < kt; ++dt) {
          for (std::size_t dh = 0; dh < kh; ++dh) {
            const double* x = in + (((ot * st + dt) * H + oh * sh + dh) * W + ow * sw) * C;
            std::copy(x, x + run, p);
            p += run;
          }
        }
        for (std::size_t k = 0; k < K; ++k) {
          *o++ = bias[k] + dot(patch.data(), w + k * patch.size(), patch.size());
        }
      }
    }
  }
  return out;
}

void conv3d_backward(const Tensor& input, const Conv3dSpec& spec, const Tensor& weights,
                     const Tensor& grad_out, Tensor* grad_input, Tensor* grad_weights,
                     Tensor* grad_bias) {
  const Shape out_shape = spec.output_shape(input.shape());
  if (grad_out.shape() != out_shape) {
    throw DimensionError("conv3d grad_out shape " + shape_to_string(grad_out.shape()) +
                         " does not match output " + shape_to_string(out_shape));
  }
  const std::size_t H = input.dim(1), W = input.dim(2), C = input.dim(3);
  const auto [kt, kh, kw] = spec.kernel;
  const auto [st, sh, sw] = spec.stride;
  const std::size_t K = spec.out_channels;
  const std::size_t run = kw * C;

  const double* in = input.raw();
  const double* w = weights.raw();
  double* gi = grad_input ? grad_input->raw() : nullptr;
  double* gw = grad_weights ? grad_weights->raw() : nullptr;
  double* gb = grad_bias ? grad_bias->raw() : nullptr;
  const double* g = grad_out.raw();

  for (std::size_t ot = 0; ot < out_shape[0]; ++ot) {
    for (std::size_t oh = 0; oh < out_shape[1]; ++oh) {
      for (std::size_t ow = 0; ow < out_shape[2]; ++ow) {
        for (std::size_t k = 0; k < K; ++k) {
          const double gv = *g++;
          if (gb) gb[k] += gv;
          if (gv == 0.0) continue;
          for (std::size_t dt = 0; dt < kt; ++dt) {
            for (std::size_t dh = 0; dh < kh; ++dh) {
              const std::size_t in_off = (((ot * st + dt) * H + oh * sh + dh) * W + ow * sw) * C;
              const std::size_t w_off = ((k * kt + dt) * kh + dh) * run;
              if (gw) {
                for (std::size_t j = 0; j < run; ++j) gw[w_off + j] += gv * in[in_off + j];
              }
              if (gi) {
                for (std::size_t j = 0; j < run; ++j) gi[in_off + j] += gv * w[w_off + j];
              }
            }
          }
        }
      }
    }
  }
}

Shape maxpool3d_output_shape(const Shape& input, Dims3 window) {
  if (input.size() != 4) {
    throw DimensionError("maxpool3d input must be [T,H,W,C], got " + shape_to_string(input));
  }
  Shape out(4);
  for (std::size_t a = 0; a < 3; ++a) {
    if (window[a] == 0) throw std::invalid_argument("maxpool3d window dims must be >= 1");
    if (input[a] < window[a]) {
      throw KernelTooLargeError("maxpool3d axis " + std::to_string(a) + " (" + kAxisNames[a] +
                                "): window " + std::to_string(window[a]) +
                                " exceeds input extent " + std::to_string(input[a]));
    }
    out[a] = input[a] / window[a];
  }
  out[3] = input[3];
  return out;
}

PoolResult maxpool3d(const Tensor& input, Dims3 window) {
  const Shape out_shape = maxpool3d_output_shape(input.shape(), window);
  const std::size_t H = input.dim(1), W = input.dim(2), C = input.dim(3);
  PoolResult result{Tensor(out_shape), {}};
  result.argmax.resize(result.output.numel());
  const double* in = input.raw();
  std::size_t idx = 0;
  for (std::size_t ot = 0; ot < out_shape[0]; ++ot) {
    for (std::size_t oh = 0; oh < out_shape[1]; ++oh) {
      for (std::size_t ow = 0; ow < out_shape[2]; ++ow) {
        for (std::size_t c = 0; c < C; ++c, ++idx) {
          std::size_t best = ((ot * window[0] * H + oh * window[1]) * W + ow * window[2]) * C + c;
          double best_v = in[best];
          // Row-major scan; strict > keeps the lowest flat index on ties.
          for (std::size_t dt = 0; dt < window[0]; ++dt) {
            for (std::size_t dh = 0; dh < window[1]; ++dh) {
              for (std::size_t dw = 0; dw < window[2]; ++dw) {
                const std::size_t f = (((ot * window[0] + dt) * H + oh * window[1] + dh) * W +
                                       ow * window[2] + dw) * C + c;
                if (in[f] > best_v) {
                  best_v = in[f];
                  best = f;
                }
              }
            }
          }
          result.output[idx] = best_v;
          result.argmax[idx] = best;
        }
      }
    }
  }
  return result;
}

void maxpool3d_backward(std::span<const std::size_t> argmax, const Tensor& grad_out,
                        Tensor& grad_input) {
  if (argmax.size() != grad_out.numel()) {
    throw DimensionError("maxpool3d backward: argmax/grad size mismatch");
  }
  for (std::size_t i = 0; i < argmax.size(); ++i) grad_input[argmax[i]] += grad_out[i];
}

void BatchNormState::update(std::span<const double> batch_mean,
                            std::span<const double> batch_var, double momentum) {
  if (batch_mean.size() != channels() || batch_var.size() != channels()) {
    throw DimensionError("batchnorm state update: channel count mismatch");
  }
  for (std::size_t c = 0; c < channels(); ++c) {
    running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * batch_mean[c];
    running_var[c] = (1.0 - momentum) * running_var[c] + momentum * batch_var[c];
  }
  initialized = true;
}

ChannelStats channel_statistics(const Tensor& input) {
  const std::size_t C = input.shape().back();
  const std::size_t n = input.numel() / C;
  ChannelStats s{std::vector<double>(C, 0.0), std::vector<double>(C, 0.0)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < C; ++c) s.mean[c] += input[i * C + c];
  }
  for (auto& m : s.mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < C; ++c) {
      const double d = input[i * C + c] - s.mean[c];
      s.var[c] += d * d;
    }
  }
  for (auto& v : s.var) v /= static_cast<double>(n);
  return s;
}

namespace {

void check_bn_params(const Tensor& input, const Tensor& gamma, const Tensor& beta) {
  const std::size_t C = input.shape().back();
  if (gamma.numel() != C || beta.numel() != C) {
    throw DimensionError("batchnorm axis " + std::to_string(input.rank() - 1) +
                         " (channels): input has " + std::to_string(C) + ", gamma/beta have " +
                         std::to_string(gamma.numel()) + "/" + std::to_string(beta.numel()));
  }
}

}  // namespace

Tensor batchnorm_apply(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                       std::span<const double> mean, std::span<const double> var, double eps) {
  check_bn_params(input, gamma, beta);
  const std::size_t C = gamma.numel();
  std::vector<double> scale(C), shift(C);
  for (std::size_t c = 0; c < C; ++c) {
    scale[c] = gamma[c] / std::sqrt(var[c] + eps);
    shift[c] = beta[c] - mean[c] * scale[c];
  }
  Tensor out(input.shape());
  const std::size_t n = input.numel() / C;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < C; ++c) out[i * C + c] = input[i * C + c] * scale[c] + shift[c];
  }
  return out;
}

Tensor batchnorm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                 BatchNormState& state, Mode mode, BatchNormOptions options) {
  check_bn_params(input, gamma, beta);
  if (state.channels() != gamma.numel()) {
    throw DimensionError("batchnorm running state has " + std::to_string(state.channels()) +
                         " channels, expected " + std::to_string(gamma.numel()));
  }
  if (mode == Mode::train) {
    const ChannelStats s = channel_statistics(input);
    Tensor out = batchnorm_apply(input, gamma, beta, s.mean, s.var, options.eps);
    state.update(s.mean, s.var, options.momentum);
    return out;
  }
  if (!state.initialized) {
    throw UninitializedStatsError("batchnorm inference requested before any training update");
  }
  return batchnorm_apply(input, gamma, beta, state.running_mean.data(), state.running_var.data(),
                         options.eps);
}

void batchnorm_backward(const Tensor& input, const Tensor& gamma, std::span<const double> mean,
                        std::span<const double> var, double eps, bool batch_stats,
                        const Tensor& grad_out, Tensor* grad_input, Tensor* grad_gamma,
                        Tensor* grad_beta) {
  const std::size_t C = gamma.numel();
  const std::size_t n = input.numel() / C;
  std::vector<double> inv_std(C), sum_g(C, 0.0), sum_gx(C, 0.0);
  for (std::size_t c = 0; c < C; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < C; ++c) {
      const double g = grad_out[i * C + c];
      const double xhat = (input[i * C + c] - mean[c]) * inv_std[c];
      sum_g[c] += g;
      sum_gx[c] += g * xhat;
    }
  }
  if (grad_gamma) {
    for (std::size_t c = 0; c < C; ++c) (*grad_gamma)[c] += sum_gx[c];
  }
  if (grad_beta) {
    for (std::size_t c = 0; c < C; ++c) (*grad_beta)[c] += sum_g[c];
  }
  if (!grad_input) return;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < C; ++c) {
      const double g = grad_out[i * C + c];
      const double k = gamma[c] * inv_std[c];
      if (batch_stats) {
        const double xhat = (input[i * C + c] - mean[c]) * inv_std[c];
        (*grad_input)[i * C + c] += k * (g - sum_g[c] * inv_n - xhat * sum_gx[c] * inv_n);
      } else {
        (*grad_input)[i * C + c] += k * g;
      }
    }
  }
}

void check_dropout_rate(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("dropout rate must be in [0, 1), got " + std::to_string(rate));
  }
}

Tensor dropout_mask(const Shape& shape, double rate, Rng& rng) {
  check_dropout_rate(rate);
  Tensor mask(shape, 1.0);
  if (rate == 0.0) return mask;
  for (auto& m : mask.data()) m = rng.uniform() < rate ? 0.0 : 1.0;
  return mask;
}

Tensor dropout(const Tensor& input, double rate, Mode mode, Rng& rng) {
  check_dropout_rate(rate);
  if (mode == Mode::infer || rate == 0.0) return input;
  Tensor out = dropout_mask(input.shape(), rate, rng);
  const double keep = 1.0 - rate;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = out[i] == 0.0 ? 0.0 : input[i] / keep;
  return out;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor activate(const Tensor& x, Activation act) {
  Tensor out = x;
  switch (act) {
    case Activation::none:
      break;
    case Activation::relu:
      for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
      break;
    case Activation::tanh:
      for (auto& v : out.data()) v = std::tanh(v);
      break;
    case Activation::sigmoid:
      for (auto& v : out.data()) v = sigmoid(v);
      break;
  }
  return out;
}

Tensor activation_backward(const Tensor& output, const Tensor& grad_out, Activation act) {
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.numel(); ++i) {
    const double y = output[i];
    switch (act) {
      case Activation::none:
        break;
      case Activation::relu:
        if (y <= 0.0) g[i] = 0.0;
        break;
      case Activation::tanh:
        g[i] *= 1.0 - y * y;
        break;
      case Activation::sigmoid:
        g[i] *= y * (1.0 - y);
        break;
    }
  }
  return g;
}

namespace {

struct DenseDims {
  std::size_t rows, in, out;
};

DenseDims dense_dims(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  require_rank(weights, 2, "dense weights");
  if (input.rank() != 1 && input.rank() != 2) {
    throw DimensionError("dense input must be [in] or [N,in], got " +
                         shape_to_string(input.shape()));
  }
  const std::size_t in = input.shape().back();
  const std::size_t rows = input.rank() == 2 ? input.dim(0) : 1;
  if (weights.dim(0) != in) {
    throw DimensionError("dense axis " + std::to_string(input.rank() - 1) + ": input has " +
                         std::to_string(in) + " features, weights expect " +
                         std::to_string(weights.dim(0)));
  }
  if (bias.numel() != weights.dim(1)) {
    throw DimensionError("dense bias axis 0: expected " + std::to_string(weights.dim(1)) +
                         ", got " + std::to_string(bias.numel()));
  }
  return {rows, in, weights.dim(1)};
}

}  // namespace

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias, Activation act) {
  const auto [rows, in, out] = dense_dims(input, weights, bias);
  Shape shape = input.rank() == 2 ? Shape{rows, out} : Shape{out};
  Tensor y(shape);
  for (std::size_t r = 0; r < rows; ++r) {
    double* yr = y.raw() + r * out;
    for (std::size_t j = 0; j < out; ++j) yr[j] = bias[j];
    const double* xr = input.raw() + r * in;
    for (std::size_t i = 0; i < in; ++i) {
      const double xv = xr[i];
      if (xv == 0.0) continue;
      const double* wr = weights.raw() + i * out;
      for (std::size_t j = 0; j < out; ++j) yr[j] += xv * wr[j];
    }
  }
  return act == Activation::none ? y : activate(y, act);
}

void dense_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out,
                    Tensor* grad_input, Tensor* grad_weights, Tensor* grad_bias) {
  const std::size_t in = weights.dim(0), out = weights.dim(1);
  const std::size_t rows = input.numel() / in;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* g = grad_out.raw() + r * out;
    const double* x = input.raw() + r * in;
    if (grad_bias) {
      for (std::size_t j = 0; j < out; ++j) (*grad_bias)[j] += g[j];
    }
    for (std::size_t i = 0; i < in; ++i) {
      const double* wr = weights.raw() + i * out;
      if (grad_weights) {
        double* gw = grad_weights->raw() + i * out;
        const double xv = x[i];
        for (std::size_t j = 0; j < out; ++j) gw[j] += xv * g[j];
      }
      if (grad_input) (*grad_input)[r * in + i] += dot(wr, g, out);
    }
  }
}

Tensor matvec(const Tensor& matrix, const Tensor& vec) {
  require_rank(matrix, 2, "matvec matrix");
  if (vec.numel() != matrix.dim(1)) {
    throw DimensionError("matvec axis 1: matrix has " + std::to_string(matrix.dim(1)) +
                         " columns, vector has " + std::to_string(vec.numel()));
  }
  const std::size_t m = matrix.dim(0), n = matrix.dim(1);
  Tensor out({m});
  for (std::size_t i = 0; i < m; ++i) {
    out[i] = dot(matrix.raw() + i * n, vec.raw(), n);
  }
  return out;
}

Tensor softmax(const Tensor& logits) {
  const double mx = *std::max_element(logits.data().begin(), logits.data().end());
  Tensor p(logits.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < p.numel(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    total += p[i];
  }
  for (auto& v : p.data()) v /= total;
  return p;
}

SoftmaxLoss softmax_cross_entropy(const Tensor& logits, std::size_t label) {
  if (label >= logits.numel()) {
    throw std::out_of_range("label " + std::to_string(label) + " out of range for " +
                            std::to_string(logits.numel()) + " classes");
  }
  const double mx = *std::max_element(logits.data().begin(), logits.data().end());
  double total = 0.0;
  for (double v : logits.data()) total += std::exp(v - mx);
  SoftmaxLoss r{softmax(logits), 0.0};
  // log-sum-exp form keeps the loss finite even when p[label] underflows.
  r.loss = std::log(total) - (logits[label] - mx);
  return r;
}

SoftmaxLoss softmax_cross_entropy(const Tensor& logits, std::span<const double> target) {
  if (target.size() != logits.numel()) {
    throw DimensionError("soft target has " + std::to_string(target.size()) + " entries for " +
                         std::to_string(logits.numel()) + " classes");
  }
  const double mx = *std::max_element(logits.data().begin(), logits.data().end());
  double total = 0.0;
  for (double v : logits.data()) total += std::exp(v - mx);
  SoftmaxLoss r{softmax(logits), std::log(total)};
  double mass = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    r.loss -= target[i] * (logits[i] - mx);
    mass += target[i];
  }
  r.loss += (mass - 1.0) * std::log(total);
  return r;
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

}  // namespace ops
}  // namespace gesturebench
