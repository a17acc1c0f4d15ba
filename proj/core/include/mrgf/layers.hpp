#pragma once

#include "mrgf/nn_ops.hpp"
#include "mrgf/rng.hpp"

namespace mrgf {

enum class Act { none, relu, lrelu, sigmoid, tanh };

template <class S>
Tensor<S> apply_act(Tape<S>& tp, const Tensor<S>& x, Act a, double lrelu_slope = 0.2) {
  switch (a) {
    case Act::none: return x;
    case Act::relu: return relu(tp, x);
    case Act::lrelu: return lrelu(tp, x, lrelu_slope);
    case Act::sigmoid: return sigmoid(tp, x);
    case Act::tanh: return tanht(tp, x);
  }
  throw TensorError("unknown activation");
}

inline const char* act_name(Act a) {
  switch (a) {
    case Act::none: return "-";
    case Act::relu: return "ReLU";
    case Act::lrelu: return "LReLU";
    case Act::sigmoid: return "Sigmoid";
    case Act::tanh: return "Tanh";
  }
  return "?";
}

// y = x @ W^T + b with W [out,in], b [out]; x is [B,in].
template <class S>
Tensor<S> dense(Tape<S>& tp, const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
  if (x.rank() != 2) throw TensorError("dense: expects rank-2 input, got " + shape_str(x.shape()));
  if (w.rank() != 2 || w.dim(1) != x.dim(1))
    throw TensorError("dense: weight " + shape_str(w.shape()) + " does not match input " +
                      shape_str(x.shape()));
  auto y = matmul(tp, x, transpose2(tp, w));
  if (b.defined()) y = add(tp, y, reshape(tp, b, {1, b.size()}));
  return y;
}

enum class Pad { same, valid };

// Standard convolution, weights [O,C,k,k], optional bias [O].
template <class S>
Tensor<S> conv2d(Tape<S>& tp, const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b,
                 int64_t stride, Pad pad = Pad::same) {
  detail::check_rank4("conv2d", x.shape());
  ConvGeom g = pad == Pad::same ? conv_same_geom(x.dim(2), x.dim(3), w.dim(2), stride)
                                : conv_valid_geom(x.dim(2), x.dim(3), w.dim(2), stride);
  auto y = conv_fwd(tp, x, w, g);
  if (b.defined()) y = add(tp, y, reshape(tp, b, {1, b.size(), 1, 1}));
  return y;
}

// Transposed convolution (out = in * stride), weights [C_in,C_out,k,k],
// optional bias [C_out].
template <class S>
Tensor<S> conv2d_transpose(Tape<S>& tp, const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b,
                           int64_t stride) {
  auto y = conv_transpose(tp, x, w, stride);
  if (b.defined()) y = add(tp, y, reshape(tp, b, {1, b.size(), 1, 1}));
  return y;
}

// Per-channel batch normalization over (N,H,W). Batch statistics use the
// population variance (divide by count). Running stats are updated as
// moving = momentum * moving + (1-momentum) * batch and are only consumed in
// evaluation mode.
template <class S>
struct BatchNormState {
  Tensor<S> gamma, beta;        // trainable, [C]
  Tensor<S> mov_mean, mov_var;  // running statistics, [C]
  double eps = 1e-5;
  double momentum = 0.9;
};

template <class S>
Tensor<S> batchnorm(Tape<S>& tp, const Tensor<S>& x, BatchNormState<S>& bn, bool training) {
  detail::check_rank4("batchnorm", x.shape());
  const int64_t C = x.dim(1);
  if (bn.gamma.size() != C)
    throw TensorError("batchnorm: state sized for " + std::to_string(bn.gamma.size()) +
                      " channels, input has " + std::to_string(C));
  auto gamma4 = reshape(tp, bn.gamma, {1, C, 1, 1});
  auto beta4 = reshape(tp, bn.beta, {1, C, 1, 1});
  if (training) {
    if (x.dim(0) < 2)
      throw TensorError("batchnorm: training mode needs batch >= 2, got batch 1");
    auto mu = reduce_mean(tp, x, {0, 2, 3}, true);
    auto xc = sub(tp, x, mu);
    auto var = reduce_mean(tp, square(tp, xc), {0, 2, 3}, true);
    // Side effect on the running stats, from the batch values only.
    for (int64_t c = 0; c < C; ++c) {
      const double m = static_cast<double>(mu.v()[static_cast<size_t>(c)]);
      const double v = static_cast<double>(var.v()[static_cast<size_t>(c)]);
      auto& mm = bn.mov_mean.v()[static_cast<size_t>(c)];
      auto& mv = bn.mov_var.v()[static_cast<size_t>(c)];
      mm = static_cast<S>(bn.momentum * static_cast<double>(mm) + (1.0 - bn.momentum) * m);
      mv = static_cast<S>(bn.momentum * static_cast<double>(mv) + (1.0 - bn.momentum) * v);
    }
    auto xhat = mul(tp, xc, sdiv(tp, 1.0, sqrtt(tp, adds(tp, var, bn.eps))));
    return add(tp, mul(tp, xhat, gamma4), beta4);
  }
  auto mean4 = reshape(tp, bn.mov_mean, {1, C, 1, 1});
  auto var4 = reshape(tp, bn.mov_var, {1, C, 1, 1});
  auto xhat = mul(tp, sub(tp, x, mean4), sdiv(tp, 1.0, sqrtt(tp, adds(tp, var4, bn.eps))));
  return add(tp, mul(tp, xhat, gamma4), beta4);
}

// b = a / sqrt(mean_over_channels(a^2) + eps), per pixel.
template <class S>
Tensor<S> pixelnorm(Tape<S>& tp, const Tensor<S>& x, double eps = 1e-8) {
  detail::check_rank4("pixelnorm", x.shape());
  auto msq = reduce_mean(tp, square(tp, x), {1}, true);
  return mul(tp, x, sdiv(tp, 1.0, sqrtt(tp, adds(tp, msq, eps))));
}

// Appends one feature map holding the batch-wide statistic: per-location
// population standard deviation across the batch (no epsilon — two identical
// samples give an exactly-zero map), averaged over all locations and channels.
template <class S>
Tensor<S> minibatch_stddev(Tape<S>& tp, const Tensor<S>& x) {
  detail::check_rank4("minibatch_stddev", x.shape());
  if (x.dim(0) < 2)
    throw TensorError("minibatch_stddev: needs batch >= 2, got batch " + std::to_string(x.dim(0)));
  auto mu = reduce_mean(tp, x, {0}, true);
  auto var = reduce_mean(tp, square(tp, sub(tp, x, mu)), {0}, true);
  auto sd = sqrtt(tp, var);
  auto s = reduce_mean(tp, sd, {1, 2, 3}, true);
  auto map = broadcast_to(tp, s, {x.dim(0), 1, x.dim(2), x.dim(3)});
  return concat_ch(tp, x, map);
}

// Inverted dropout: kept activations are scaled by 1/(1-rate) so evaluation
// needs no rescaling. One uniform draw per element in row-major order.
template <class S>
Tensor<S> dropout(Tape<S>& tp, const Tensor<S>& x, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw TensorError("dropout: rate must be in [0,1)");
  if (rate == 0.0) return x;
  const double scale = 1.0 / (1.0 - rate);
  std::vector<S> m(static_cast<size_t>(x.size()));
  for (auto& e : m) e = rng.uniform() < rate ? S(0) : static_cast<S>(scale);
  auto mask = Tensor<S>::from(x.shape(), std::move(m));
  return mul(tp, x, mask);
}

}  // namespace mrgf
