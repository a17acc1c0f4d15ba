#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mrgf/layers.hpp"
#include "mrgf/optim.hpp"

namespace mrgf {

// One executable step of a model graph. Visible nodes correspond one-to-one
// to rows of the architecture summaries printed by topology(); bookkeeping
// nodes (slot saves/restores) stay hidden.
enum class Op {
  input,        // validates the incoming tensor
  dense,        // flatten -> affine -> reshape to out_ch x out_h x out_w
  conv,         // conv2d, weights [O,C,k,k]
  convt,        // transposed conv, out = in * stride, weights [C_in,C_out,k,k]
  convt_full,   // 1x1 spatial input -> k x k output
  maxpool,      // 2x2 max
  avgpool,      // 2x2 mean
  upsample,     // nearest 2x
  pixelshuffle, // depth to space, r = 2
  mbstd,        // minibatch stddev feature map
  dropout,      // active only in training mode
  passthru,     // no-op body; exists to host bn/pn/act
  save,         // slots[slot] = cur
  use,          // cur = slots[slot]
  add_slot,     // cur = cur + slots[slot]
  concat_slot,  // cur = concat_ch(cur, slots[slot])
  blend,        // cur = alpha * cur + (1 - alpha) * slots[slot]
};

struct Node {
  Op op = Op::input;
  std::string label;   // row text, e.g. "Conv 3x3"
  int64_t out_ch = 0;  // produced channels (dense: reshape channels)
  int64_t out_h = 0, out_w = 0;  // dense reshape target; input: declared size
  int64_t kernel = 0;
  int64_t stride = 1;
  Pad pad = Pad::same;
  bool bn = false, pn = false;
  Act act = Act::none;
  double rate = 0.0;  // dropout
  std::string slot;
  bool visible = true;
  double wscale = 1.0;  // forward-time weight multiplier (dynamic scaling)
  // registry indices, -1 when absent
  int w = -1, b = -1, gamma = -1, beta = -1, mmean = -1, mvar = -1;
};

// Activation column as printed in the row dumps, e.g. "BN+ReLU".
inline std::string act_label(const Node& n) {
  std::string s;
  if (n.bn) s = "BN";
  if (n.pn) s += s.empty() ? "PN" : "+PN";
  if (n.act != Act::none) s += (s.empty() ? "" : "+") + std::string(act_name(n.act));
  return s.empty() ? "-" : s;
}

// Immutable layer graph plus its named parameter registry. Copies share
// parameter storage, so one instance should own a training run.
template <class S>
struct Model {
  std::string arch;
  int64_t base_filters = 0;
  int64_t in_ch = 0, in_h = 0, in_w = 0;
  bool flex_res = false;    // accepts any input size divisible by res_multiple
  int64_t res_multiple = 1;
  std::vector<Node> nodes;
  std::vector<Param<S>> params;
  // progressive-growing state; alpha is live (the schedule mutates it)
  int64_t stage_res = 0;
  bool transition = false;
  double alpha = 1.0;

  Tensor<S> forward(Tape<S>& tp, const Tensor<S>& x, bool training, Rng* rng = nullptr);
};

template <class S>
struct GanPair {
  Model<S> gen, disc;
};

// resolution is a power of two in [4, 256]; alpha must be 1 outside a
// transition and is the fade-in weight of the new block during one.
struct ProGANStage {
  int64_t resolution = 4;
  bool transition = false;
  double alpha = 1.0;
};

namespace detail {

inline bool is_pow2(int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

inline int64_t ilog2(int64_t v) {
  int64_t e = 0;
  while ((int64_t(1) << e) < v) ++e;
  return e;
}

// Incremental graph assembler: tracks the running (c, h, w) so each layer can
// size its weights, and draws every parameter from an rng stream derived from
// the parameter's name. Name-derived streams make shared layers of different
// progressive stages start from identical values without copying.
template <class S>
struct Net {
  Model<S>& m;
  Init scheme;
  uint64_t seed;
  bool mat;  // materialize: false leaves parameters zero-filled (shape-only use)
  int64_t c = 0, h = 0, w = 0;
  std::map<std::string, std::array<int64_t, 3>> slot_shape;

  enum Fill { zeros, ones, sampled };

  int param(const std::string& name, Shape shape, int64_t n_filters, int64_t fan_in,
            bool trainable, Fill fill) {
    Tensor<S> t;
    if (fill == sampled && mat) {
      Rng r(Rng::derive(seed, name));
      t = init_weights<S>(std::move(shape), scheme, r, n_filters, fan_in);
    } else {
      t = fill == ones ? Tensor<S>::ones(std::move(shape)) : Tensor<S>::zeros(std::move(shape));
    }
    t.set_requires_grad(trainable);
    m.params.push_back({name, t, trainable});
    return static_cast<int>(m.params.size()) - 1;
  }

  Node& push(Node n) {
    m.nodes.push_back(std::move(n));
    return m.nodes.back();
  }

  void attach_bn(Node& n, const std::string& name, int64_t ch) {
    n.bn = true;
    n.gamma = param(name + ".gamma", {ch}, 0, 0, true, ones);
    n.beta = param(name + ".beta", {ch}, 0, 0, true, zeros);
    n.mmean = param(name + ".mmean", {ch}, 0, 0, false, zeros);
    n.mvar = param(name + ".mvar", {ch}, 0, 0, false, ones);
  }

  void input(const std::string& label, int64_t ic, int64_t ih, int64_t iw) {
    Node n;
    n.op = Op::input;
    n.label = label;
    n.out_ch = ic;
    n.out_h = ih;
    n.out_w = iw;
    push(std::move(n));
    c = ic;
    h = ih;
    w = iw;
  }

  void conv(const std::string& name, int64_t k, int64_t stride, int64_t out, bool bn, Act act,
            Pad pad = Pad::same, bool pn = false, const char* label = nullptr) {
    Node n;
    n.op = Op::conv;
    n.label = label ? label : "Conv " + std::to_string(k) + "x" + std::to_string(k);
    n.kernel = k;
    n.stride = stride;
    n.pad = pad;
    n.out_ch = out;
    n.act = act;
    n.pn = pn;
    n.w = param(name + ".w", {out, c, k, k}, out, c * k * k, true, sampled);
    n.b = param(name + ".b", {out}, 0, 0, true, zeros);
    if (bn) attach_bn(n, name, out);
    if (scheme == Init::dynamic_scaled) n.wscale = he_paper_sigma(out);
    push(std::move(n));
    c = out;
    if (pad == Pad::same) {
      h = (h + stride - 1) / stride;
      w = (w + stride - 1) / stride;
    } else {
      h = (h - k) / stride + 1;
      w = (w - k) / stride + 1;
    }
  }

  void convt(const std::string& name, int64_t k, int64_t stride, int64_t out, bool bn, Act act) {
    Node n;
    n.op = Op::convt;
    n.label = "Conv Trans " + std::to_string(k) + "x" + std::to_string(k);
    n.kernel = k;
    n.stride = stride;
    n.out_ch = out;
    n.act = act;
    n.w = param(name + ".w", {c, out, k, k}, out, c * k * k, true, sampled);
    n.b = param(name + ".b", {out}, 0, 0, true, zeros);
    if (bn) attach_bn(n, name, out);
    if (scheme == Init::dynamic_scaled) n.wscale = he_paper_sigma(out);
    push(std::move(n));
    c = out;
    h *= stride;
    w *= stride;
  }

  void convt_full(const std::string& name, int64_t k, int64_t out, Act act) {
    Node n;
    n.op = Op::convt_full;
    n.label = "Conv " + std::to_string(k) + "x" + std::to_string(k);
    n.kernel = k;
    n.out_ch = out;
    n.act = act;
    n.w = param(name + ".w", {c, out, k, k}, out, c * k * k, true, sampled);
    n.b = param(name + ".b", {out}, 0, 0, true, zeros);
    if (scheme == Init::dynamic_scaled) n.wscale = he_paper_sigma(out);
    push(std::move(n));
    c = out;
    h = k;
    w = k;
  }

  void dense(const std::string& name, int64_t oc, int64_t oh, int64_t ow, bool bn, Act act) {
    Node n;
    n.op = Op::dense;
    n.label = "Dense";
    n.out_ch = oc;
    n.out_h = oh;
    n.out_w = ow;
    n.act = act;
    const int64_t units = oc * oh * ow, in = c * h * w;
    n.w = param(name + ".w", {units, in}, units, in, true, sampled);
    n.b = param(name + ".b", {units}, 0, 0, true, zeros);
    if (bn) attach_bn(n, name, oc);
    if (scheme == Init::dynamic_scaled) n.wscale = he_paper_sigma(units);
    push(std::move(n));
    c = oc;
    h = oh;
    w = ow;
  }

  void pool(Op op, Act act = Act::none, const char* label = "Downsample") {
    Node n;
    n.op = op;
    n.label = label;
    n.act = act;
    push(std::move(n));
    h /= 2;
    w /= 2;
  }

  void upsample(Act act = Act::none, const char* label = "Upsample") {
    Node n;
    n.op = Op::upsample;
    n.label = label;
    n.act = act;
    push(std::move(n));
    h *= 2;
    w *= 2;
  }

  void pixelshuffle(const std::string& bn_name, bool bn, Act act) {
    Node n;
    n.op = Op::pixelshuffle;
    n.label = "PixelShuffle";
    n.act = act;
    if (bn) attach_bn(n, bn_name, c / 4);
    push(std::move(n));
    c /= 4;
    h *= 2;
    w *= 2;
  }

  void mbstd() {
    Node n;
    n.op = Op::mbstd;
    n.label = "Minibatch std";
    push(std::move(n));
    c += 1;
  }

  void dropout(double rate) {
    Node n;
    n.op = Op::dropout;
    n.label = "Dropout";
    n.rate = rate;
    push(std::move(n));
  }

  void passthru(const std::string& bn_name, bool bn, Act act) {
    Node n;
    n.op = Op::passthru;
    n.label = "-";
    n.act = act;
    if (bn) attach_bn(n, bn_name, c);
    push(std::move(n));
  }

  void save(const std::string& slot) {
    Node n;
    n.op = Op::save;
    n.slot = slot;
    n.visible = false;
    push(std::move(n));
    slot_shape[slot] = {c, h, w};
  }

  void use(const std::string& slot) {
    Node n;
    n.op = Op::use;
    n.slot = slot;
    n.visible = false;
    push(std::move(n));
    auto s = slot_shape.at(slot);
    c = s[0];
    h = s[1];
    w = s[2];
  }

  void add_slot(const std::string& slot, Act act = Act::none) {
    Node n;
    n.op = Op::add_slot;
    n.label = "Add";
    n.slot = slot;
    n.act = act;
    push(std::move(n));
  }

  void concat_slot(const std::string& slot, const std::string& label) {
    Node n;
    n.op = Op::concat_slot;
    n.label = label;
    n.slot = slot;
    push(std::move(n));
    c += slot_shape.at(slot)[0];
  }

  void blend(const std::string& slot, Act act, const char* label = "Blend") {
    Node n;
    n.op = Op::blend;
    n.label = label;
    n.slot = slot;
    n.act = act;
    push(std::move(n));
  }
};

}  // namespace detail

template <class S>
Tensor<S> Model<S>::forward(Tape<S>& tp, const Tensor<S>& x, bool training, Rng* rng) {
  if (!x.defined() || x.rank() != 4)
    throw TensorError(arch + ": forward expects a [N,C,H,W] input");
  std::map<std::string, Tensor<S>> slots;
  Tensor<S> cur = x;

  auto weight = [&](const Node& n) {
    auto w = params[static_cast<size_t>(n.w)].t;
    return n.wscale == 1.0 ? w : muls(tp, w, n.wscale);
  };
  auto post = [&](const Node& n, Tensor<S> y) {
    if (n.bn) {
      BatchNormState<S> st;
      st.gamma = params[static_cast<size_t>(n.gamma)].t;
      st.beta = params[static_cast<size_t>(n.beta)].t;
      st.mov_mean = params[static_cast<size_t>(n.mmean)].t;
      st.mov_var = params[static_cast<size_t>(n.mvar)].t;
      y = batchnorm(tp, y, st, training);
    }
    if (n.pn) y = pixelnorm(tp, y);
    return apply_act(tp, y, n.act);
  };

  for (const Node& n : nodes) {
    switch (n.op) {
      case Op::input:
        if (x.dim(1) != n.out_ch)
          throw TensorError(arch + ": expects " + std::to_string(n.out_ch) +
                            " input channels, got " + shape_str(x.shape()));
        if (flex_res) {
          if (x.dim(2) % res_multiple || x.dim(3) % res_multiple)
            throw TensorError(arch + ": input spatial extent must be divisible by " +
                              std::to_string(res_multiple) + ", got " + shape_str(x.shape()));
        } else if (x.dim(2) != n.out_h || x.dim(3) != n.out_w) {
          throw TensorError(arch + ": expects " + std::to_string(n.out_h) + "x" +
                            std::to_string(n.out_w) + " input, got " + shape_str(x.shape()));
        }
        break;
      case Op::dense: {
        auto flat = reshape(tp, cur, {cur.dim(0), cur.dim(1) * cur.dim(2) * cur.dim(3)});
        auto y = mrgf::dense(tp, flat, weight(n), params[static_cast<size_t>(n.b)].t);
        cur = post(n, reshape(tp, y, {cur.dim(0), n.out_ch, n.out_h, n.out_w}));
        break;
      }
      case Op::conv:
        cur = post(n, conv2d(tp, cur, weight(n), params[static_cast<size_t>(n.b)].t, n.stride,
                             n.pad));
        break;
      case Op::convt:
        cur = post(n, conv2d_transpose(tp, cur, weight(n), params[static_cast<size_t>(n.b)].t,
                                       n.stride));
        break;
      case Op::convt_full: {
        auto y = conv_transpose_full(tp, cur, weight(n));
        auto b = params[static_cast<size_t>(n.b)].t;
        cur = post(n, add(tp, y, reshape(tp, b, {1, b.size(), 1, 1})));
        break;
      }
      case Op::maxpool: cur = post(n, maxpool2(tp, cur)); break;
      case Op::avgpool: cur = post(n, avgpool2(tp, cur)); break;
      case Op::upsample: cur = post(n, upsample2(tp, cur)); break;
      case Op::pixelshuffle: cur = post(n, mrgf::pixelshuffle(tp, cur, 2)); break;
      case Op::mbstd: cur = post(n, minibatch_stddev(tp, cur)); break;
      case Op::dropout:
        if (training && n.rate > 0.0) {
          if (!rng) throw TensorError(arch + ": dropout in training mode needs an rng");
          cur = mrgf::dropout(tp, cur, n.rate, *rng);
        }
        break;
      case Op::passthru: cur = post(n, cur); break;
      case Op::save: slots[n.slot] = cur; break;
      case Op::use: cur = slots.at(n.slot); break;
      case Op::add_slot: cur = post(n, add(tp, cur, slots.at(n.slot))); break;
      case Op::concat_slot: cur = post(n, concat_ch(tp, cur, slots.at(n.slot))); break;
      case Op::blend: {
        auto mixed =
            add(tp, muls(tp, cur, alpha), muls(tp, slots.at(n.slot), 1.0 - alpha));
        cur = post(n, mixed);
        break;
      }
    }
  }
  return cur;
}

struct ShapeRow {
  std::string label, act;
  int64_t c = 0, h = 0, w = 0;
};

inline bool operator==(const ShapeRow& a, const ShapeRow& b) {
  return a.label == b.label && a.act == b.act && a.c == b.c && a.h == b.h && a.w == b.w;
}

// Symbolic shape walk: one row per visible node, no tensor allocation.
template <class S>
std::vector<ShapeRow> forward_shapes(const Model<S>& m, int64_t c, int64_t h, int64_t w) {
  std::vector<ShapeRow> rows;
  std::map<std::string, std::array<int64_t, 3>> slots;
  auto fail = [&](const Node& n, const std::string& why) {
    throw TensorError("forward_shapes: at '" + n.label + "': " + why);
  };
  for (const Node& n : m.nodes) {
    switch (n.op) {
      case Op::input:
        if (c != n.out_ch) fail(n, "expected " + std::to_string(n.out_ch) + " channels");
        if (m.flex_res) {
          if (h % m.res_multiple || w % m.res_multiple)
            fail(n, "spatial extent must be divisible by " + std::to_string(m.res_multiple));
        } else if (h != n.out_h || w != n.out_w) {
          fail(n, "expected " + std::to_string(n.out_h) + "x" + std::to_string(n.out_w) +
                      " input, got " + std::to_string(h) + "x" + std::to_string(w));
        }
        break;
      case Op::dense:
        c = n.out_ch;
        h = n.out_h;
        w = n.out_w;
        break;
      case Op::conv:
        if (n.pad == Pad::valid && (n.kernel > h || n.kernel > w))
          fail(n, "kernel exceeds input extent");
        c = n.out_ch;
        if (n.pad == Pad::same) {
          h = (h + n.stride - 1) / n.stride;
          w = (w + n.stride - 1) / n.stride;
        } else {
          h = (h - n.kernel) / n.stride + 1;
          w = (w - n.kernel) / n.stride + 1;
        }
        break;
      case Op::convt:
        c = n.out_ch;
        h *= n.stride;
        w *= n.stride;
        break;
      case Op::convt_full:
        if (h != 1 || w != 1) fail(n, "expects 1x1 spatial input");
        c = n.out_ch;
        h = n.kernel;
        w = n.kernel;
        break;
      case Op::maxpool:
      case Op::avgpool:
        if (h % 2 || w % 2) fail(n, "odd spatial extent " + std::to_string(h) + "x" + std::to_string(w));
        h /= 2;
        w /= 2;
        break;
      case Op::upsample:
        h *= 2;
        w *= 2;
        break;
      case Op::pixelshuffle:
        if (c % 4) fail(n, "channels not divisible by 4");
        c /= 4;
        h *= 2;
        w *= 2;
        break;
      case Op::mbstd: c += 1; break;
      case Op::dropout:
      case Op::passthru: break;
      case Op::save: slots[n.slot] = {c, h, w}; break;
      case Op::use: {
        auto s = slots.at(n.slot);
        c = s[0];
        h = s[1];
        w = s[2];
        break;
      }
      case Op::add_slot:
      case Op::blend: {
        auto s = slots.at(n.slot);
        if (s[0] != c || s[1] != h || s[2] != w) fail(n, "operand shapes differ");
        break;
      }
      case Op::concat_slot: {
        auto s = slots.at(n.slot);
        if (s[1] != h || s[2] != w) fail(n, "spatial shapes differ");
        c += s[0];
        break;
      }
    }
    if (n.visible) rows.push_back({n.label, act_label(n), c, h, w});
  }
  return rows;
}

template <class S>
std::vector<ShapeRow> forward_shapes(const Model<S>& m) {
  return forward_shapes(m, m.in_ch, m.in_h, m.in_w);
}

// total counts every element including BN moving statistics; trainable
// excludes them.
template <class S>
std::pair<int64_t, int64_t> count_params(const Model<S>& m) {
  int64_t total = 0, trainable = 0;
  for (const auto& p : m.params) {
    total += p.t.size();
    if (p.trainable) trainable += p.t.size();
  }
  return {total, trainable};
}

// Human-readable table of the graph: layer | activation | C x H x W.
template <class S>
std::string topology(const Model<S>& m) {
  std::string out;
  for (const auto& r : forward_shapes(m)) {
    out += r.label + " | " + r.act + " | " + std::to_string(r.c) + " x " + std::to_string(r.h) +
           " x " + std::to_string(r.w) + "\n";
  }
  return out;
}

// --- builders -------------------------------------------------------------

// Encoder/decoder with skip concatenations; filters double per depth level.
// Batch normalization sits on the eighteen 3x3 convolutions only: the totals
// (8,641,697 / 8,635,809 trainable at 32 filters) reconcile exactly when the
// transposed convolutions and the final 1x1 stay bare — the 5,888 gap is
// twice the 3x3 channel sum 2944 (encoder 1984 + decoder 960), i.e. one
// moving mean and one moving variance per normalized channel.
template <class S>
Model<S> build_unet(int64_t base_filters, bool use_bn, double dropout_rate = 0.0,
                    Init scheme = Init::he_normal_fanin, uint64_t seed = 1, int64_t in_res = 128,
                    bool materialize = true) {
  if (base_filters != 8 && base_filters != 16 && base_filters != 32 && base_filters != 64)
    throw TensorError("build_unet: base_filters must be one of 8, 16, 32, 64");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw TensorError("build_unet: dropout rate must lie in [0,1)");
  if (in_res % 16)
    throw TensorError("build_unet: input resolution must be divisible by 16");
  Model<S> m;
  m.arch = "unet";
  m.base_filters = base_filters;
  m.in_ch = 1;
  m.in_h = in_res;
  m.in_w = in_res;
  m.flex_res = true;
  m.res_multiple = 16;
  detail::Net<S> b{m, scheme, seed, materialize};
  b.input("Input image", 1, in_res, in_res);
  int64_t ch = base_filters;
  for (int i = 1; i <= 4; ++i) {
    const std::string lv = "e" + std::to_string(i);
    b.conv(lv + "c1", 3, 1, ch, use_bn, Act::relu);
    b.conv(lv + "c2", 3, 1, ch, use_bn, Act::relu);
    b.save("l" + std::to_string(i));
    b.pool(Op::maxpool);
    if (dropout_rate > 0.0) b.dropout(dropout_rate);
    ch *= 2;
  }
  b.conv("b1", 3, 1, ch, use_bn, Act::relu);
  b.conv("b2", 3, 1, ch, use_bn, Act::relu);
  if (dropout_rate > 0.0) b.dropout(dropout_rate);
  for (int i = 4; i >= 1; --i) {
    ch /= 2;
    const std::string lv = "d" + std::to_string(i);
    b.convt(lv + "t", 3, 2, ch, false, Act::none);
    b.concat_slot("l" + std::to_string(i), "Concatenate l" + std::to_string(i));
    b.conv(lv + "c1", 3, 1, ch, use_bn, Act::relu);
    b.conv(lv + "c2", 3, 1, ch, use_bn, Act::relu);
  }
  b.conv("out", 1, 1, 1, false, Act::sigmoid);
  return m;
}

// Dense reshape to base_ch x base_res x base_res, then transposed 5x5 convs:
// paired stride-2/stride-1 blocks at full width for all but the last two
// doublings, which are single stride-2 layers at half then quarter width,
// and a final stride-1 tanh layer. The canonical 8 -> 256 instance walks the
// published ladder (256 ch through 64x64, then 128, 64, 1).
template <class S>
GanPair<S> build_dcgan(int64_t latent = 256, int64_t base_res = 8, int64_t target_res = 256,
                       int64_t base_ch = 256, int64_t disc_ch = 64,
                       Init scheme = Init::normal_002, uint64_t seed = 1,
                       bool materialize = true) {
  if (latent < 1) throw TensorError("build_dcgan: latent size must be positive");
  if (!detail::is_pow2(base_res) || base_res < 4)
    throw TensorError("build_dcgan: base_res must be a power of two >= 4");
  if (!detail::is_pow2(target_res) || target_res < 16)
    throw TensorError("build_dcgan: target_res must be a power of two >= 16");
  if (target_res <= base_res)
    throw TensorError("build_dcgan: target_res must exceed base_res");
  if (base_ch % 4)
    throw TensorError("build_dcgan: base_ch must be divisible by 4");
  const int64_t d = detail::ilog2(target_res / base_res);

  GanPair<S> pair;
  Model<S>& g = pair.gen;
  g.arch = "dcgan_gen";
  g.base_filters = base_ch;
  g.in_ch = latent;
  g.in_h = g.in_w = 1;
  {
    detail::Net<S> b{g, scheme, seed, materialize};
    b.input("Latent vector", latent, 1, 1);
    b.dense("g.fc", base_ch, base_res, base_res, true, Act::relu);
    int t = 0;
    for (int64_t i = 1; i <= d; ++i) {
      if (i <= d - 2) {
        b.convt("g.t" + std::to_string(t++), 5, 2, base_ch, true, Act::relu);
        b.convt("g.t" + std::to_string(t++), 5, 1, base_ch, true, Act::relu);
      } else {
        b.convt("g.t" + std::to_string(t++), 5, 2, base_ch >> (i - (d - 2)), true, Act::relu);
      }
    }
    b.convt("g.out", 5, 1, 1, false, Act::tanh);
  }

  Model<S>& dm = pair.disc;
  dm.arch = "dcgan_disc";
  dm.base_filters = disc_ch;
  dm.in_ch = 1;
  dm.in_h = dm.in_w = target_res;
  {
    detail::Net<S> b{dm, scheme, seed, materialize};
    b.input("Input image", 1, target_res, target_res);
    int64_t ch = disc_ch;
    for (int64_t j = 1; j <= d; ++j) {
      b.conv("d.c" + std::to_string(j), 5, 2, std::min<int64_t>(ch, 1024), j > 1, Act::lrelu);
      ch *= 2;
    }
    b.dense("d.fc1", b.c, 1, 1, false, Act::lrelu);
    b.dense("d.fc2", 1, 1, 1, false, Act::sigmoid);
  }
  return pair;
}

// Dense to gf x 16 x 16, n_res residual blocks, a bare BN+ReLU, the global
// skip add, one conv+pixelshuffle pair per doubling up to target_res, and a
// 9x9 tanh head. The discriminator ladders 4x4 stride-2 convs with two
// residual blocks per resolution and no batch normalization.
template <class S>
GanPair<S> build_srresgan(int64_t latent = 256, int64_t n_res = 16, int64_t target_res = 256,
                          int64_t gf = 64, int64_t df = 32,
                          Init scheme = Init::he_normal_paper, uint64_t seed = 1,
                          bool materialize = true) {
  if (latent < 1) throw TensorError("build_srresgan: latent size must be positive");
  if (n_res < 1) throw TensorError("build_srresgan: need at least one residual block");
  if (target_res < 16 || !detail::is_pow2(target_res))
    throw TensorError("build_srresgan: target_res must be 16 * 2^u for integer u >= 0");
  const int64_t u = detail::ilog2(target_res / 16);

  GanPair<S> pair;
  Model<S>& g = pair.gen;
  g.arch = "srresgan_gen";
  g.base_filters = gf;
  g.in_ch = latent;
  g.in_h = g.in_w = 1;
  {
    detail::Net<S> b{g, scheme, seed, materialize};
    b.input("Latent vector", latent, 1, 1);
    b.dense("g.fc", gf, 16, 16, true, Act::relu);
    b.save("skip0");
    for (int64_t r = 0; r < n_res; ++r) {
      const std::string blk = "g.r" + std::to_string(r);
      b.save("res");
      b.conv(blk + "c1", 3, 1, gf, true, Act::relu);
      b.conv(blk + "c2", 3, 1, gf, true, Act::none);
      b.add_slot("res");
    }
    b.passthru("g.post", true, Act::relu);
    b.add_slot("skip0");
    for (int64_t s = 0; s < u; ++s) {
      const std::string up = "g.up" + std::to_string(s);
      b.conv(up, 3, 1, 4 * gf, false, Act::none);
      b.pixelshuffle(up + ".ps", true, Act::relu);
    }
    b.conv("g.out", 9, 1, 1, false, Act::tanh);
  }

  Model<S>& dm = pair.disc;
  dm.arch = "srresgan_disc";
  dm.base_filters = df;
  dm.in_ch = 1;
  dm.in_h = dm.in_w = target_res;
  {
    detail::Net<S> b{dm, scheme, seed, materialize};
    b.input("Input image", 1, target_res, target_res);
    const int64_t stages = detail::ilog2(target_res / 4);
    int64_t ch = df;
    for (int64_t s = 0; s < stages; ++s) {
      b.conv("d.s" + std::to_string(s), 4, 2, ch, false, Act::lrelu);
      for (int t = 0; t < 2; ++t) {
        const std::string blk = "d.s" + std::to_string(s) + "r" + std::to_string(t);
        b.save("res");
        b.conv(blk + "c1", 3, 1, ch, false, Act::lrelu);
        b.conv(blk + "c2", 3, 1, ch, false, Act::none);
        b.add_slot("res", Act::lrelu);
      }
      ch *= 2;
    }
    b.conv("d.pen", 3, 2, ch, false, Act::lrelu);
    b.dense("d.fc", 1, 1, 1, false, Act::sigmoid);
  }
  return pair;
}

// Stage-truncated generator/discriminator with per-resolution toRGB/fromRGB
// heads. Channel width at resolution r is min(ch_max, ch_min * target / r).
// During a transition the generator output fades between the upsampled
// previous head and the new block, and the discriminator input symmetrically.
// Parameters are named by resolution, so consecutive stages share layers.
template <class S>
GanPair<S> build_progan(const ProGANStage& st, int64_t latent = 512, int64_t target_res = 256,
                        int64_t ch_max = 512, int64_t ch_min = 16,
                        Init scheme = Init::dynamic_scaled, uint64_t seed = 1,
                        bool materialize = true) {
  if (!detail::is_pow2(st.resolution) || st.resolution < 4 || st.resolution > 256)
    throw TensorError("build_progan: stage resolution must be a power of two in [4, 256]");
  if (st.resolution > target_res)
    throw TensorError("build_progan: stage resolution exceeds the target resolution");
  if (!detail::is_pow2(target_res) || target_res < 4 || target_res > 256)
    throw TensorError("build_progan: target_res must be a power of two in [4, 256]");
  if (st.alpha < 0.0 || st.alpha > 1.0)
    throw TensorError("build_progan: alpha must lie in [0, 1]");
  if (!st.transition && st.alpha != 1.0)
    throw TensorError("build_progan: alpha must be 1 outside a transition");
  if (st.transition && st.resolution < 8)
    throw TensorError("build_progan: the 4x4 stage has no previous stage to fade from");
  const int64_t R = st.resolution;
  auto ch = [&](int64_t r) { return std::min(ch_max, ch_min * (target_res / r)); };
  auto rs = [](int64_t r) { return std::to_string(r); };

  GanPair<S> pair;
  for (Model<S>* mp : {&pair.gen, &pair.disc}) {
    mp->stage_res = R;
    mp->transition = st.transition;
    mp->alpha = st.transition ? st.alpha : 1.0;
  }

  Model<S>& g = pair.gen;
  g.arch = "progan_gen";
  g.base_filters = ch_min;
  g.in_ch = latent;
  g.in_h = g.in_w = 1;
  {
    detail::Net<S> b{g, scheme, seed, materialize};
    b.input("Latent vector", latent, 1, 1);
    b.convt_full("g4.c1", 4, ch(4), Act::lrelu);
    b.conv("g4.c2", 3, 1, ch(4), false, Act::lrelu, Pad::same, true);
    for (int64_t r = 8; r <= R; r *= 2) {
      if (st.transition && r == R) {
        b.save("h");
        b.conv("torgb" + rs(R / 2), 1, 1, 1, false, Act::none);
        b.upsample(Act::none, "Upsample (skip)");
        b.save("rgb_prev");
        b.use("h");
      }
      b.upsample();
      b.conv("g" + rs(r) + ".c1", 5, 1, ch(r), false, Act::lrelu, Pad::same, true);
      b.conv("g" + rs(r) + ".c2", 5, 1, ch(r), false, Act::lrelu, Pad::same, true);
    }
    if (st.transition) {
      b.conv("torgb" + rs(R), 1, 1, 1, false, Act::none);
      b.blend("rgb_prev", Act::tanh);
    } else {
      b.conv("torgb" + rs(R), 1, 1, 1, false, Act::tanh);
    }
  }

  Model<S>& dm = pair.disc;
  dm.arch = "progan_disc";
  dm.base_filters = ch_min;
  dm.in_ch = 1;
  dm.in_h = dm.in_w = R;
  {
    detail::Net<S> b{dm, scheme, seed, materialize};
    b.input("Input image", 1, R, R);
    if (st.transition) {
      b.save("img");
      b.pool(Op::avgpool, Act::none, "Downsample (skip)");
      b.conv("fromrgb" + rs(R / 2), 1, 1, ch(R / 2), false, Act::lrelu);
      b.save("skip");
      b.use("img");
    }
    b.conv("fromrgb" + rs(R), 1, 1, ch(R), false, Act::lrelu);
    for (int64_t r = R; r >= 8; r /= 2) {
      b.conv("d" + rs(r) + ".c1", 5, 1, ch(r), false, Act::lrelu);
      b.conv("d" + rs(r) + ".c2", 5, 1, ch(r / 2), false, Act::none);
      b.pool(Op::avgpool, Act::lrelu);
      if (st.transition && r == R) b.blend("skip", Act::none);
    }
    b.mbstd();
    b.conv("d4.c1", 3, 1, ch(4), false, Act::lrelu);
    b.conv("d4.c2", 4, 1, ch(4), false, Act::lrelu, Pad::valid);
    b.dense("d.fc", 1, 1, 1, false, Act::sigmoid);
  }
  return pair;
}

}  // namespace mrgf
