#pragma once

#include <algorithm>
#include <memory>

#include "mrgf/tensor.hpp"

namespace mrgf {

// Geometry of one 2-D convolution, always described from the point of view of
// the *forward* convolution (in -> out). The same record drives the forward
// kernel, its input-gradient kernel and its weight-gradient kernel, which keeps
// the three mutually consistent and lets each one serve as a VJP for the
// others (transposed convolution is the input-gradient kernel applied
// forward).
struct ConvGeom {
  int64_t in_h = 0, in_w = 0;
  int64_t out_h = 0, out_w = 0;
  int64_t kh = 0, kw = 0;
  int64_t stride = 1;
  int64_t pad_top = 0, pad_left = 0;
};

// SAME padding: out = ceil(in/stride); padding is split with the smaller half
// leading (pad_total/2 at top/left, the remainder at bottom/right).
inline ConvGeom conv_same_geom(int64_t in_h, int64_t in_w, int64_t k, int64_t stride) {
  ConvGeom g;
  g.in_h = in_h;
  g.in_w = in_w;
  g.kh = g.kw = k;
  g.stride = stride;
  g.out_h = (in_h + stride - 1) / stride;
  g.out_w = (in_w + stride - 1) / stride;
  const int64_t pad_h = std::max<int64_t>((g.out_h - 1) * stride + k - in_h, 0);
  const int64_t pad_w = std::max<int64_t>((g.out_w - 1) * stride + k - in_w, 0);
  g.pad_top = pad_h / 2;
  g.pad_left = pad_w / 2;
  return g;
}

inline ConvGeom conv_valid_geom(int64_t in_h, int64_t in_w, int64_t k, int64_t stride) {
  if (in_h < k || in_w < k)
    throw TensorError("valid convolution: kernel " + std::to_string(k) + " larger than input " +
                      std::to_string(in_h) + "x" + std::to_string(in_w));
  ConvGeom g;
  g.in_h = in_h;
  g.in_w = in_w;
  g.kh = g.kw = k;
  g.stride = stride;
  g.out_h = (in_h - k) / stride + 1;
  g.out_w = (in_w - k) / stride + 1;
  return g;
}

// Geometry for a transposed convolution taking in_h -> in_h*stride: the
// forward direction of the underlying convolution runs out -> in.
inline ConvGeom convt_same_geom(int64_t in_h, int64_t in_w, int64_t k, int64_t stride) {
  return conv_same_geom(in_h * stride, in_w * stride, k, stride);
}

// Transposed convolution expanding a 1x1 input to k x k (the "full" start
// block of a generator). Underlying forward conv: k x k -> 1 x 1, valid.
inline ConvGeom convt_full_geom(int64_t k) { return conv_valid_geom(k, k, k, 1); }

namespace detail {

// col layout: rows are (c, i, j), columns are (p, q) of the output.
template <class S>
void im2col(const S* x, S* col, int64_t C, const ConvGeom& g) {
  const int64_t ohow = g.out_h * g.out_w;
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t i = 0; i < g.kh; ++i) {
      for (int64_t j = 0; j < g.kw; ++j) {
        S* row = col + ((c * g.kh + i) * g.kw + j) * ohow;
        for (int64_t p = 0; p < g.out_h; ++p) {
          const int64_t h = p * g.stride - g.pad_top + i;
          S* dst = row + p * g.out_w;
          if (h < 0 || h >= g.in_h) {
            std::fill(dst, dst + g.out_w, S(0));
            continue;
          }
          const S* src = x + (c * g.in_h + h) * g.in_w;
          for (int64_t q = 0; q < g.out_w; ++q) {
            const int64_t w = q * g.stride - g.pad_left + j;
            dst[q] = (w >= 0 && w < g.in_w) ? src[w] : S(0);
          }
        }
      }
    }
  }
}

// Scatter-add of a col buffer (double) back into an image accumulator.
inline void col2im_acc(const double* col, double* img, int64_t C, const ConvGeom& g) {
  const int64_t ohow = g.out_h * g.out_w;
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t i = 0; i < g.kh; ++i) {
      for (int64_t j = 0; j < g.kw; ++j) {
        const double* row = col + ((c * g.kh + i) * g.kw + j) * ohow;
        for (int64_t p = 0; p < g.out_h; ++p) {
          const int64_t h = p * g.stride - g.pad_top + i;
          if (h < 0 || h >= g.in_h) continue;
          double* dst = img + (c * g.in_h + h) * g.in_w;
          const double* src = row + p * g.out_w;
          for (int64_t q = 0; q < g.out_w; ++q) {
            const int64_t w = q * g.stride - g.pad_left + j;
            if (w >= 0 && w < g.in_w) dst[w] += src[q];
          }
        }
      }
    }
  }
}

// C[m x n] += A[m x k] * B[n x k]^T, accumulating in double.
template <class S>
void gemm_abt_acc(const S* A, const S* B, double* C, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const S* arow = A + i * k;
    double* crow = C + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const S* brow = B + j * k;
      double s = 0.0;
      for (int64_t p = 0; p < k; ++p) s += static_cast<double>(arow[p]) * static_cast<double>(brow[p]);
      crow[j] += s;
    }
  }
}

inline void check_rank4(const char* op, const Shape& s) {
  if (s.size() != 4)
    throw TensorError(std::string(op) + ": expects NCHW rank-4 input, got " + shape_str(s));
}

}  // namespace detail

template <class S>
Tensor<S> conv_dinput(Tape<S>& tp, const Tensor<S>& dy, const Tensor<S>& w, ConvGeom g);
template <class S>
Tensor<S> conv_dweight(Tape<S>& tp, const Tensor<S>& x, const Tensor<S>& dy, ConvGeom g);

// y[b,o,p,q] = sum_{c,i,j} x[b,c,ph,qw] * w[o,c,i,j]   (weights [O,C,kh,kw])
template <class S>
Tensor<S> conv_fwd(Tape<S>& tp, const Tensor<S>& x, const Tensor<S>& w, ConvGeom g) {
  detail::check_rank4("conv", x.shape());
  detail::check_rank4("conv", w.shape());
  const int64_t B = x.dim(0), C = x.dim(1), O = w.dim(0);
  if (w.dim(1) != C)
    throw TensorError("conv: weight channels " + shape_str(w.shape()) + " do not match input " +
                      shape_str(x.shape()));
  if (w.dim(2) != g.kh || w.dim(3) != g.kw || x.dim(2) != g.in_h || x.dim(3) != g.in_w)
    throw TensorError("conv: geometry mismatch for input " + shape_str(x.shape()) + ", weight " +
                      shape_str(w.shape()));
  const int64_t ckk = C * g.kh * g.kw;
  const int64_t ohow = g.out_h * g.out_w;
  std::vector<S> col(static_cast<size_t>(ckk * ohow));
  std::vector<double> acc(static_cast<size_t>(O * ohow));
  std::vector<S> out(static_cast<size_t>(B * O * ohow));
  for (int64_t b = 0; b < B; ++b) {
    detail::im2col(x.v().data() + b * C * g.in_h * g.in_w, col.data(), C, g);
    std::fill(acc.begin(), acc.end(), 0.0);
    detail::gemm_acc(w.v().data(), col.data(), acc.data(), O, ckk, ohow);
    S* dst = out.data() + b * O * ohow;
    for (int64_t i = 0; i < O * ohow; ++i) dst[i] = static_cast<S>(acc[static_cast<size_t>(i)]);
  }
  auto y = Tensor<S>::from({B, O, g.out_h, g.out_w}, std::move(out));
  tp.attach(y, {x, w},
            [x, w, g](Tape<S>& t, const Tensor<S>& gr) -> typename Tape<S>::GradList {
              return {conv_dinput(t, gr, w, g), conv_dweight(t, x, gr, g)};
            },
            "conv");
  return y;
}

// Input gradient of conv_fwd; applied forward this is a transposed
// convolution mapping [B,O,out_h,out_w] -> [B,C,in_h,in_w].
template <class S>
Tensor<S> conv_dinput(Tape<S>& tp, const Tensor<S>& dy, const Tensor<S>& w, ConvGeom g) {
  detail::check_rank4("conv_dinput", dy.shape());
  detail::check_rank4("conv_dinput", w.shape());
  const int64_t B = dy.dim(0), O = w.dim(0), C = w.dim(1);
  if (dy.dim(1) != O)
    throw TensorError("conv_dinput: channel mismatch, dy " + shape_str(dy.shape()) + " vs weight " +
                      shape_str(w.shape()));
  if (w.dim(2) != g.kh || w.dim(3) != g.kw || dy.dim(2) != g.out_h || dy.dim(3) != g.out_w)
    throw TensorError("conv_dinput: geometry mismatch for dy " + shape_str(dy.shape()) +
                      ", weight " + shape_str(w.shape()));
  const int64_t ckk = C * g.kh * g.kw;
  const int64_t ohow = g.out_h * g.out_w;
  // W^T as [ckk x O], materialized once.
  std::vector<S> wt(static_cast<size_t>(ckk * O));
  {
    const auto& wv = w.v();
    for (int64_t o = 0; o < O; ++o)
      for (int64_t r = 0; r < ckk; ++r)
        wt[static_cast<size_t>(r * O + o)] = wv[static_cast<size_t>(o * ckk + r)];
  }
  std::vector<double> colg(static_cast<size_t>(ckk * ohow));
  std::vector<double> img(static_cast<size_t>(C * g.in_h * g.in_w));
  std::vector<S> out(static_cast<size_t>(B * C * g.in_h * g.in_w));
  for (int64_t b = 0; b < B; ++b) {
    std::fill(colg.begin(), colg.end(), 0.0);
    detail::gemm_acc(wt.data(), dy.v().data() + b * O * ohow, colg.data(), ckk, O, ohow);
    std::fill(img.begin(), img.end(), 0.0);
    detail::col2im_acc(colg.data(), img.data(), C, g);
    S* dst = out.data() + b * C * g.in_h * g.in_w;
    for (size_t i = 0; i < img.size(); ++i) dst[i] = static_cast<S>(img[i]);
  }
  auto y = Tensor<S>::from({B, C, g.in_h, g.in_w}, std::move(out));
  tp.attach(y, {dy, w},
            [dy, w, g](Tape<S>& t, const Tensor<S>& gr) -> typename Tape<S>::GradList {
              // gr has the shape of the conv input; d/d(dy) re-runs the
              // forward conv on gr, d/dw correlates gr with dy.
              return {conv_fwd(t, gr, w, g), conv_dweight(t, gr, dy, g)};
            },
            "conv_dinput");
  return y;
}

// Weight gradient of conv_fwd: dw[o,c,i,j] = sum_{b,p,q} dy[b,o,p,q]*x[b,c,ph,qw].
template <class S>
Tensor<S> conv_dweight(Tape<S>& tp, const Tensor<S>& x, const Tensor<S>& dy, ConvGeom g) {
  detail::check_rank4("conv_dweight", x.shape());
  detail::check_rank4("conv_dweight", dy.shape());
  const int64_t B = x.dim(0), C = x.dim(1), O = dy.dim(1);
  if (dy.dim(0) != B)
    throw TensorError("conv_dweight: batch mismatch " + shape_str(x.shape()) + " vs " +
                      shape_str(dy.shape()));
  if (x.dim(2) != g.in_h || x.dim(3) != g.in_w || dy.dim(2) != g.out_h || dy.dim(3) != g.out_w)
    throw TensorError("conv_dweight: geometry mismatch for x " + shape_str(x.shape()) + ", dy " +
                      shape_str(dy.shape()));
  const int64_t ckk = C * g.kh * g.kw;
  const int64_t ohow = g.out_h * g.out_w;
  std::vector<S> col(static_cast<size_t>(ckk * ohow));
  std::vector<double> acc(static_cast<size_t>(O * ckk), 0.0);
  for (int64_t b = 0; b < B; ++b) {
    detail::im2col(x.v().data() + b * C * g.in_h * g.in_w, col.data(), C, g);
    detail::gemm_abt_acc(dy.v().data() + b * O * ohow, col.data(), acc.data(), O, ohow, ckk);
  }
  auto y = Tensor<S>::from({O, C, g.kh, g.kw}, detail::cast_from_double<S>(acc));
  tp.attach(y, {x, dy},
            [x, dy, g](Tape<S>& t, const Tensor<S>& gr) -> typename Tape<S>::GradList {
              // gr is weight-shaped: d/dx spreads it like a transposed conv of
              // dy, d/d(dy) is a forward conv of x with gr as the kernel.
              return {conv_dinput(t, dy, gr, g), conv_fwd(t, x, gr, g)};
            },
            "conv_dweight");
  return y;
}

// Transposed convolution with weights stored [C_in, C_out, k, k]: the
// input-gradient kernel of a (C_in out-channel) convolution, run forward.
template <class S>
Tensor<S> conv_transpose(Tape<S>& tp, const Tensor<S>& x, const Tensor<S>& w, int64_t stride) {
  detail::check_rank4("conv_transpose", x.shape());
  detail::check_rank4("conv_transpose", w.shape());
  if (w.dim(0) != x.dim(1))
    throw TensorError("conv_transpose: weight in-channels " + shape_str(w.shape()) +
                      " do not match input " + shape_str(x.shape()));
  ConvGeom g = convt_same_geom(x.dim(2), x.dim(3), w.dim(2), stride);
  return conv_dinput(tp, x, w, g);
}

// 1x1 -> kxk expansion used as the first generator block.
template <class S>
Tensor<S> conv_transpose_full(Tape<S>& tp, const Tensor<S>& x, const Tensor<S>& w) {
  detail::check_rank4("conv_transpose_full", x.shape());
  if (x.dim(2) != 1 || x.dim(3) != 1)
    throw TensorError("conv_transpose_full: expects 1x1 spatial input, got " + shape_str(x.shape()));
  if (w.dim(0) != x.dim(1))
    throw TensorError("conv_transpose_full: weight in-channels do not match input");
  return conv_dinput(tp, x, w, convt_full_geom(w.dim(2)));
}

// ---------------------------------------------------------------------------
// Resampling
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> avgpool2(Tape<S>& tp, const Tensor<S>& a);

template <class S>
Tensor<S> upsample2(Tape<S>& tp, const Tensor<S>& a) {
  detail::check_rank4("upsample2", a.shape());
  const int64_t B = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
  std::vector<S> out(static_cast<size_t>(B * C * 4 * H * W));
  const auto& av = a.v();
  for (int64_t bc = 0; bc < B * C; ++bc) {
    const S* src = av.data() + bc * H * W;
    S* dst = out.data() + bc * 4 * H * W;
    for (int64_t p = 0; p < H; ++p)
      for (int64_t q = 0; q < W; ++q) {
        const S v = src[p * W + q];
        S* o = dst + (2 * p) * (2 * W) + 2 * q;
        o[0] = v;
        o[1] = v;
        o[2 * W] = v;
        o[2 * W + 1] = v;
      }
  }
  auto y = Tensor<S>::from({B, C, 2 * H, 2 * W}, std::move(out));
  tp.attach(y, {a},
            [](Tape<S>& t, const Tensor<S>& g) -> typename Tape<S>::GradList {
              return {muls(t, avgpool2(t, g), 4.0)};
            },
            "upsample2");
  return y;
}

template <class S>
Tensor<S> avgpool2(Tape<S>& tp, const Tensor<S>& a) {
  detail::check_rank4("avgpool2", a.shape());
  const int64_t B = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
  if (H % 2 || W % 2)
    throw TensorError("avgpool2: spatial dims must be even, got " + shape_str(a.shape()));
  std::vector<S> out(static_cast<size_t>(B * C * (H / 2) * (W / 2)));
  const auto& av = a.v();
  for (int64_t bc = 0; bc < B * C; ++bc) {
    const S* src = av.data() + bc * H * W;
    S* dst = out.data() + bc * (H / 2) * (W / 2);
    for (int64_t p = 0; p < H / 2; ++p)
      for (int64_t q = 0; q < W / 2; ++q) {
        const double s = static_cast<double>(src[(2 * p) * W + 2 * q]) +
                         static_cast<double>(src[(2 * p) * W + 2 * q + 1]) +
                         static_cast<double>(src[(2 * p + 1) * W + 2 * q]) +
                         static_cast<double>(src[(2 * p + 1) * W + 2 * q + 1]);
        dst[p * (W / 2) + q] = static_cast<S>(s * 0.25);
      }
  }
  auto y = Tensor<S>::from({B, C, H / 2, W / 2}, std::move(out));
  tp.attach(y, {a},
            [](Tape<S>& t, const Tensor<S>& g) -> typename Tape<S>::GradList {
              return {muls(t, upsample2(t, g), 0.25)};
            },
            "avgpool2");
  return y;
}

// Generic index permutation/selection primitives: y[k] = a[idx[k]] and its
// scatter-add inverse. Together they make every index-based op (max pooling,
// pixel shuffle) differentiable to any order.
template <class S>
Tensor<S> scatter_flat(Tape<S>& tp, const Tensor<S>& a,
                       std::shared_ptr<const std::vector<int64_t>> idx, Shape out_shape);

template <class S>
Tensor<S> gather_flat(Tape<S>& tp, const Tensor<S>& a,
                      std::shared_ptr<const std::vector<int64_t>> idx, Shape out_shape) {
  if (static_cast<int64_t>(idx->size()) != shape_numel(out_shape))
    throw TensorError("gather_flat: index count does not match output shape");
  std::vector<S> out(idx->size());
  const auto& av = a.v();
  for (size_t k = 0; k < idx->size(); ++k) out[k] = av[static_cast<size_t>((*idx)[k])];
  auto y = Tensor<S>::from(out_shape, std::move(out));
  Shape as = a.shape();
  tp.attach(y, {a},
            [idx, as](Tape<S>& t, const Tensor<S>& g) -> typename Tape<S>::GradList {
              return {scatter_flat(t, g, idx, as)};
            },
            "gather_flat");
  return y;
}

template <class S>
Tensor<S> scatter_flat(Tape<S>& tp, const Tensor<S>& a,
                       std::shared_ptr<const std::vector<int64_t>> idx, Shape out_shape) {
  if (static_cast<int64_t>(idx->size()) != a.size())
    throw TensorError("scatter_flat: index count does not match input shape");
  std::vector<double> acc(static_cast<size_t>(shape_numel(out_shape)), 0.0);
  const auto& av = a.v();
  for (size_t k = 0; k < idx->size(); ++k)
    acc[static_cast<size_t>((*idx)[k])] += static_cast<double>(av[k]);
  auto y = Tensor<S>::from(out_shape, detail::cast_from_double<S>(acc));
  Shape as = a.shape();
  tp.attach(y, {a},
            [idx, as](Tape<S>& t, const Tensor<S>& g) -> typename Tape<S>::GradList {
              return {gather_flat(t, g, idx, as)};
            },
            "scatter_flat");
  return y;
}

// 2x2 stride-2 max pooling; ties go to the first element in scan order.
template <class S>
Tensor<S> maxpool2(Tape<S>& tp, const Tensor<S>& a) {
  detail::check_rank4("maxpool2", a.shape());
  const int64_t B = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
  if (H % 2 || W % 2)
    throw TensorError("maxpool2: spatial dims must be even, got " + shape_str(a.shape()));
  const int64_t oh = H / 2, ow = W / 2;
  auto idx = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(B * C * oh * ow));
  std::vector<S> out(idx->size());
  const auto& av = a.v();
  for (int64_t bc = 0; bc < B * C; ++bc) {
    const S* src = av.data() + bc * H * W;
    for (int64_t p = 0; p < oh; ++p)
      for (int64_t q = 0; q < ow; ++q) {
        int64_t best = (2 * p) * W + 2 * q;
        const int64_t cand[3] = {(2 * p) * W + 2 * q + 1, (2 * p + 1) * W + 2 * q,
                                 (2 * p + 1) * W + 2 * q + 1};
        for (int64_t c : cand)
          if (src[c] > src[best]) best = c;
        const size_t o = static_cast<size_t>(bc * oh * ow + p * ow + q);
        out[o] = src[best];
        (*idx)[o] = bc * H * W + best;
      }
  }
  Tensor<S> y = Tensor<S>::from({B, C, oh, ow}, std::move(out));
  Shape as = a.shape();
  tp.attach(y, {a},
            [idx, as](Tape<S>& t, const Tensor<S>& g) -> typename Tape<S>::GradList {
              return {scatter_flat(t, g, idx, as)};
            },
            "maxpool2");
  return y;
}

template <class S>
Tensor<S> pixelunshuffle(Tape<S>& tp, const Tensor<S>& a, int64_t r);

// Depth-to-space with upscale factor r: input channel c*r*r + dy*r + dx feeds
// output channel c at pixel offset (dy, dx).
template <class S>
Tensor<S> pixelshuffle(Tape<S>& tp, const Tensor<S>& a, int64_t r) {
  detail::check_rank4("pixelshuffle", a.shape());
  const int64_t B = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
  if (C % (r * r))
    throw TensorError("pixelshuffle: channels " + std::to_string(C) + " not divisible by r^2");
  const int64_t oc = C / (r * r);
  std::vector<S> out(static_cast<size_t>(a.size()));
  const auto& av = a.v();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < oc; ++c)
      for (int64_t dy = 0; dy < r; ++dy)
        for (int64_t dx = 0; dx < r; ++dx) {
          const S* src = av.data() + ((b * C + (c * r * r + dy * r + dx)) * H) * W;
          for (int64_t p = 0; p < H; ++p) {
            S* dst = out.data() + ((b * oc + c) * (H * r) + (p * r + dy)) * (W * r) + dx;
            for (int64_t q = 0; q < W; ++q) dst[q * r] = src[p * W + q];
          }
        }
  auto y = Tensor<S>::from({B, oc, H * r, W * r}, std::move(out));
  tp.attach(y, {a},
            [r](Tape<S>& t, const Tensor<S>& g) -> typename Tape<S>::GradList {
              return {pixelunshuffle(t, g, r)};
            },
            "pixelshuffle");
  return y;
}

template <class S>
Tensor<S> pixelunshuffle(Tape<S>& tp, const Tensor<S>& a, int64_t r) {
  detail::check_rank4("pixelunshuffle", a.shape());
  const int64_t B = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
  if (H % r || W % r)
    throw TensorError("pixelunshuffle: spatial dims not divisible by r");
  const int64_t oc = C * r * r, oh = H / r, ow = W / r;
  std::vector<S> out(static_cast<size_t>(a.size()));
  const auto& av = a.v();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t dy = 0; dy < r; ++dy)
        for (int64_t dx = 0; dx < r; ++dx) {
          S* dst = out.data() + ((b * oc + (c * r * r + dy * r + dx)) * oh) * ow;
          for (int64_t p = 0; p < oh; ++p) {
            const S* src = av.data() + ((b * C + c) * H + (p * r + dy)) * W + dx;
            for (int64_t q = 0; q < ow; ++q) dst[p * ow + q] = src[q * r];
          }
        }
  auto y = Tensor<S>::from({B, oc, oh, ow}, std::move(out));
  tp.attach(y, {a},
            [r](Tape<S>& t, const Tensor<S>& g) -> typename Tape<S>::GradList {
              return {pixelshuffle(t, g, r)};
            },
            "pixelunshuffle");
  return y;
}

// ---------------------------------------------------------------------------
// Channel slicing (concat is built from these)
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> narrow_ch(Tape<S>& tp, const Tensor<S>& a, int64_t start, int64_t len);

// Place `a`'s channels at [start, start+C) inside `total` channels, zeros
// elsewhere.
template <class S>
Tensor<S> pad_ch(Tape<S>& tp, const Tensor<S>& a, int64_t start, int64_t total) {
  detail::check_rank4("pad_ch", a.shape());
  const int64_t B = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
  if (start < 0 || start + C > total) throw TensorError("pad_ch: channel range out of bounds");
  std::vector<S> out(static_cast<size_t>(B * total * H * W), S(0));
  const auto& av = a.v();
  for (int64_t b = 0; b < B; ++b)
    std::copy(av.data() + b * C * H * W, av.data() + (b + 1) * C * H * W,
              out.data() + (b * total + start) * H * W);
  auto y = Tensor<S>::from({B, total, H, W}, std::move(out));
  tp.attach(y, {a},
            [start, C](Tape<S>& t, const Tensor<S>& g) -> typename Tape<S>::GradList {
              return {narrow_ch(t, g, start, C)};
            },
            "pad_ch");
  return y;
}

template <class S>
Tensor<S> narrow_ch(Tape<S>& tp, const Tensor<S>& a, int64_t start, int64_t len) {
  detail::check_rank4("narrow_ch", a.shape());
  const int64_t B = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
  if (start < 0 || len <= 0 || start + len > C) throw TensorError("narrow_ch: channel range out of bounds");
  std::vector<S> out(static_cast<size_t>(B * len * H * W));
  const auto& av = a.v();
  for (int64_t b = 0; b < B; ++b)
    std::copy(av.data() + (b * C + start) * H * W, av.data() + (b * C + start + len) * H * W,
              out.data() + b * len * H * W);
  auto y = Tensor<S>::from({B, len, H, W}, std::move(out));
  tp.attach(y, {a},
            [start, C](Tape<S>& t, const Tensor<S>& g) -> typename Tape<S>::GradList {
              return {pad_ch(t, g, start, C)};
            },
            "narrow_ch");
  return y;
}

template <class S>
Tensor<S> concat_ch(Tape<S>& tp, const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_rank4("concat_ch", a.shape());
  detail::check_rank4("concat_ch", b.shape());
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
    throw TensorError("concat_ch: non-channel dims differ, " + shape_str(a.shape()) + " vs " +
                      shape_str(b.shape()));
  const int64_t total = a.dim(1) + b.dim(1);
  return add(tp, pad_ch(tp, a, 0, total), pad_ch(tp, b, a.dim(1), total));
}

}  // namespace mrgf
