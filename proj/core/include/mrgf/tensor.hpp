#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace mrgf {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

// Structural problems: bad shapes, invalid arguments, malformed files.
struct TensorError : std::runtime_error {
  explicit TensorError(const std::string& m) : std::runtime_error(m) {}
};

// Non-finite values where they must not appear (loss, gradients).
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& m) : std::runtime_error(m) {}
};

template <class S>
class Tape;

template <class S>
struct TensorData {
  Shape shape;
  std::vector<S> v;
  bool requires_grad = false;
  Tape<S>* tape = nullptr;  // producing tape; null for leaves
  int64_t node = -1;        // producing op index on that tape
  std::vector<S> grad;      // leaf gradient accumulator (lazily sized)
};

// Value handle with shared storage. Copies alias the same buffer; tape nodes
// and VJP closures keep buffers alive through the shared_ptr.
template <class S>
class Tensor {
public:
  Tensor() = default;

  static Tensor from(Shape shape, std::vector<S> vals) {
    for (int64_t e : shape)
      if (e <= 0) throw TensorError("tensor shape must have positive extents, got " + shape_str(shape));
    if (shape_numel(shape) != static_cast<int64_t>(vals.size()))
      throw TensorError("tensor value count " + std::to_string(vals.size()) +
                        " does not match shape " + shape_str(shape));
    Tensor t;
    t.d_ = std::make_shared<TensorData<S>>();
    t.d_->shape = std::move(shape);
    t.d_->v = std::move(vals);
    return t;
  }

  static Tensor full(Shape shape, S value) {
    auto n = shape_numel(shape);
    return from(std::move(shape), std::vector<S>(static_cast<size_t>(n), value));
  }
  static Tensor zeros(Shape shape) { return full(std::move(shape), S(0)); }
  static Tensor ones(Shape shape) { return full(std::move(shape), S(1)); }
  static Tensor scalar(S value) { return from({1}, {value}); }

  bool defined() const { return static_cast<bool>(d_); }
  const Shape& shape() const { return d_->shape; }
  int rank() const { return static_cast<int>(d_->shape.size()); }
  int64_t dim(int i) const { return d_->shape[static_cast<size_t>(i)]; }
  int64_t size() const { return static_cast<int64_t>(d_->v.size()); }
  std::vector<S>& v() { return d_->v; }
  const std::vector<S>& v() const { return d_->v; }

  S item() const {
    if (size() != 1) throw TensorError("item() on non-scalar tensor of shape " + shape_str(shape()));
    return d_->v[0];
  }

  Tensor& set_requires_grad(bool r = true) {
    d_->requires_grad = r;
    return *this;
  }
  bool requires_grad() const { return d_->requires_grad; }
  bool is_leaf() const { return d_->node < 0; }

  std::vector<S>& grad() {
    if (d_->grad.empty()) d_->grad.assign(d_->v.size(), S(0));
    return d_->grad;
  }
  bool has_grad() const { return !d_->grad.empty(); }
  void zero_grad() { d_->grad.assign(d_->v.size(), S(0)); }

  // Value copy cut loose from any graph.
  Tensor detached() const { return from(d_->shape, d_->v); }

  std::shared_ptr<TensorData<S>> d_;
};

// Linear record of executed ops. VJP callbacks are written in terms of the
// public ops, so running them while recording extends the same tape and makes
// the produced gradients differentiable in turn (double backward).
template <class S>
class Tape {
public:
  using GradList = std::vector<Tensor<S>>;
  using VJP = std::function<GradList(Tape<S>&, const Tensor<S>&)>;

  struct Node {
    std::vector<Tensor<S>> in;
    Tensor<S> out;
    VJP vjp;
    const char* name;
  };

  bool recording = true;
  std::vector<Node> nodes;

  void attach(Tensor<S>& out, std::vector<Tensor<S>> in, VJP vjp, const char* name) {
    if (!recording) return;
    bool need = false;
    for (const auto& t : in)
      if (t.defined() && t.d_->requires_grad) { need = true; break; }
    if (!need) return;
    out.d_->requires_grad = true;
    out.d_->tape = this;
    out.d_->node = static_cast<int64_t>(nodes.size());
    nodes.push_back(Node{std::move(in), out, std::move(vjp), name});
  }

  size_t size() const { return nodes.size(); }
};

template <class S>
struct NoRecordGuard {
  explicit NoRecordGuard(Tape<S>& t) : tape(t), saved(t.recording) { tape.recording = false; }
  ~NoRecordGuard() { tape.recording = saved; }
  Tape<S>& tape;
  bool saved;
};

namespace detail {

template <class S>
inline void check_finite(const std::vector<S>& v, const char* what) {
  for (size_t i = 0; i < v.size(); ++i)
    if (!std::isfinite(static_cast<double>(v[i])))
      throw NumericError(std::string("non-finite value in ") + what + " at flat index " +
                         std::to_string(i));
}

inline std::vector<int64_t> contiguous_strides(const Shape& s) {
  std::vector<int64_t> st(s.size());
  int64_t acc = 1;
  for (size_t i = s.size(); i-- > 0;) {
    st[i] = acc;
    acc *= s[i];
  }
  return st;
}

// Strides for reading `from` as if broadcast to `to` (0 on expanded dims).
inline std::vector<int64_t> broadcast_strides(const Shape& from, const Shape& to) {
  auto st = contiguous_strides(from);
  for (size_t i = 0; i < from.size(); ++i)
    if (from[i] != to[i]) st[i] = 0;
  return st;
}

inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  if (a.size() != b.size())
    throw TensorError(std::string(op) + ": rank mismatch " + shape_str(a) + " vs " + shape_str(b) +
                      " (broadcasting requires equal ranks)");
  Shape out(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i]) out[i] = a[i];
    else if (a[i] == 1) out[i] = b[i];
    else if (b[i] == 1) out[i] = a[i];
    else
      throw TensorError(std::string(op) + ": incompatible shapes " + shape_str(a) + " vs " +
                        shape_str(b) + " at dim " + std::to_string(i));
  }
  return out;
}

// Walks an output index space while tracking flat offsets into two broadcast
// inputs; no div/mod in the loop.
struct PairWalker {
  Shape out;
  std::vector<int64_t> idx, sa, sb;
  int64_t oa = 0, ob = 0;
  PairWalker(Shape o, std::vector<int64_t> a, std::vector<int64_t> b)
      : out(std::move(o)), idx(out.size(), 0), sa(std::move(a)), sb(std::move(b)) {}
  void advance() {
    for (size_t d = out.size(); d-- > 0;) {
      ++idx[d];
      oa += sa[d];
      ob += sb[d];
      if (idx[d] < out[d]) return;
      oa -= sa[d] * out[d];
      ob -= sb[d] * out[d];
      idx[d] = 0;
    }
  }
};

// Pure forward evaluation; the caller attaches the VJP.
template <class S, class F>
Tensor<S> map_unary(const Tensor<S>& a, F f) {
  const auto& av = a.v();
  std::vector<S> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = static_cast<S>(f(static_cast<double>(av[i])));
  return Tensor<S>::from(a.shape(), std::move(out));
}

template <class S, class F>
Tensor<S> map_binary(const Tensor<S>& a, const Tensor<S>& b, const char* name, F f) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape(), name);
  const int64_t n = shape_numel(out_shape);
  std::vector<S> out(static_cast<size_t>(n));
  const auto& av = a.v();
  const auto& bv = b.v();
  if (a.shape() == b.shape()) {
    for (int64_t i = 0; i < n; ++i)
      out[static_cast<size_t>(i)] =
          static_cast<S>(f(static_cast<double>(av[static_cast<size_t>(i)]),
                           static_cast<double>(bv[static_cast<size_t>(i)])));
  } else {
    PairWalker w(out_shape, broadcast_strides(a.shape(), out_shape),
                 broadcast_strides(b.shape(), out_shape));
    for (int64_t i = 0; i < n; ++i) {
      out[static_cast<size_t>(i)] =
          static_cast<S>(f(static_cast<double>(av[static_cast<size_t>(w.oa)]),
                           static_cast<double>(bv[static_cast<size_t>(w.ob)])));
      w.advance();
    }
  }
  return Tensor<S>::from(out_shape, std::move(out));
}

}  // namespace detail

// Forward declarations for ops referenced inside earlier VJPs.
template <class S>
Tensor<S> sum_to(Tape<S>& tp, const Tensor<S>& a, Shape target);
template <class S>
Tensor<S> broadcast_to(Tape<S>& tp, const Tensor<S>& a, Shape target);
template <class S>
Tensor<S> neg(Tape<S>& tp, const Tensor<S>& a);
template <class S>
Tensor<S> mul(Tape<S>& tp, const Tensor<S>& a, const Tensor<S>& b);
template <class S>
Tensor<S> divt(Tape<S>& tp, const Tensor<S>& a, const Tensor<S>& b);
template <class S>
Tensor<S> muls(Tape<S>& tp, const Tensor<S>& a, double s);
template <class S>
Tensor<S> sdiv(Tape<S>& tp, double s, const Tensor<S>& a);
template <class S>
Tensor<S> reshape(Tape<S>& tp, const Tensor<S>& a, Shape target);
template <class S>
Tensor<S> matmul(Tape<S>& tp, const Tensor<S>& a, const Tensor<S>& b);
template <class S>
Tensor<S> transpose2(Tape<S>& tp, const Tensor<S>& a);

// ---------------------------------------------------------------------------
// Elementwise binary ops (rank-equal broadcasting)
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> add(Tape<S>& tp, const Tensor<S>& a, const Tensor<S>& b) {
  auto y = detail::map_binary(a, b, "add", [](double x, double w) { return x + w; });
  Shape as = a.shape(), bs = b.shape();
  tp.attach(y, {a, b},
            [as, bs](Tape<S>& t, const Tensor<S>& g) -> typename Tape<S>::GradList {
              return {sum_to(t, g, as), sum_to(t, g, bs)};
            },
            "add");
  return y;
}

template <class S>
Tensor<S> sub(Tape<S>& tp, const Tensor<S>& a, const Tensor<S>& b) {
  auto y = detail::map_binary(a, b, "sub", [](double x, double w) { return x - w; });
  Shape as = a.shape(), bs = b.shape();
  tp.attach(y, {a, b},
            [as, bs](Tape<S>& t, const Tensor<S>& g) -> typename Tape<S>::GradList {
              return {sum_to(t, g, as), neg(t, sum_to(t, g, bs))};
            },
            "sub");
  return y;
}

template <class S>
Tensor<S> mul(Tape<S>& tp, const Tensor<S>& a, const Tensor<S>& b) {
  auto y = detail::map_binary(a, b, "mul", [](double x, double w) { return x * w; });
  Shape as = a.shape(), bs = b.shape();
  tp.attach(y, {a, b},
            [as, bs, a, b](Tape<S>& t, const Tensor<S>& g) -> typename Tape<S>::GradList {
              return {sum_to(t, mul(t, g, b), as), sum_to(t, mul(t, g, a), bs)};
            },
            "mul");
  return y;
}

template <class S>
Tensor<S> divt(Tape<S>& tp, const Tensor<S>& a, const Tensor<S>& b) {
  auto y = detail::map_binary(a, b, "div", [](double x, double w) { return x / w; });
  Shape as = a.shape(), bs = b.shape();
  tp.attach(y, {a, b},
            [as, bs, a, b](Tape<S>& t, const Tensor<S>& g) -> typename Tape<S>::GradList {
              auto da = sum_to(t, divt(t, g, b), as);
              auto db = neg(t, sum_to(t, divt(t, mul(t, g, a), mul(t, b, b)), bs));
              return {da, db};
            },
            "div");
  return y;
}

// ---------------------------------------------------------------------------
// Scalar-argument ops
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> adds(Tape<S>& tp, const Tensor<S>& a, double s) {
  auto y = detail::map_unary(a, [s](double x) { return x + s; });
  tp.attach(y, {a},
            [](Tape<S>&, const Tensor<S>& g) -> typename Tape<S>::GradList { return {g}; }, "adds");
  return y;
}

template <class S>
Tensor<S> muls(Tape<S>& tp, const Tensor<S>& a, double s) {
  auto y = detail::map_unary(a, [s](double x) { return x * s; });
  tp.attach(y, {a},
            [s](Tape<S>& t, const Tensor<S>& g) -> typename Tape<S>::GradList {
              return {muls(t, g, s)};
            },
            "muls");
  return y;
}

// s - a
template <class S>
Tensor<S> ssub(Tape<S>& tp, double s, const Tensor<S>& a) {
  auto y = detail::map_unary(a, [s](double x) { return s - x; });
  tp.attach(y, {a},
            [](Tape<S>& t, const Tensor<S>& g) -> typename Tape<S>::GradList {
              return {neg(t, g)};
            },
            "ssub");
  return y;
}

// s / a
template <class S>
Tensor<S> sdiv(Tape<S>& tp, double s, const Tensor<S>& a) {
  auto y = detail::map_unary(a, [s](double x) { return s / x; });
  tp.attach(y, {a},
            [s, a](Tape<S>& t, const Tensor<S>& g) -> typename Tape<S>::GradList {
              return {neg(t, mul(t, g, sdiv(t, s, mul(t, a, a))))};
            },
            "sdiv");
  return y;
}

// ---------------------------------------------------------------------------
// Elementwise unary ops
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> neg(Tape<S>& tp, const Tensor<S>& a) {
  auto y = detail::map_unary(a, [](double x) { return -x; });
  tp.attach(y, {a},
            [](Tape<S>& t, const Tensor<S>& g) -> typename Tape<S>::GradList {
              return {neg(t, g)};
            },
            "neg");
  return y;
}

template <class S>
Tensor<S> square(Tape<S>& tp, const Tensor<S>& a) {
  auto y = detail::map_unary(a, [](double x) { return x * x; });
  tp.attach(y, {a},
            [a](Tape<S>& t, const Tensor<S>& g) -> typename Tape<S>::GradList {
              return {mul(t, g, muls(t, a, 2.0))};
            },
            "square");
  return y;
}

template <class S>
Tensor<S> expt(Tape<S>& tp, const Tensor<S>& a) {
  auto y = detail::map_unary(a, [](double x) { return std::exp(x); });
  tp.attach(y, {a},
            [y](Tape<S>& t, const Tensor<S>& g) -> typename Tape<S>::GradList {
              return {mul(t, g, y)};
            },
            "exp");
  return y;
}

template <class S>
Tensor<S> logt(Tape<S>& tp, const Tensor<S>& a) {
  for (S x : a.v())
    if (!(static_cast<double>(x) > 0.0))
      throw TensorError("log: non-positive element " + std::to_string(static_cast<double>(x)));
  auto y = detail::map_unary(a, [](double x) { return std::log(x); });
  tp.attach(y, {a},
            [a](Tape<S>& t, const Tensor<S>& g) -> typename Tape<S>::GradList {
              return {divt(t, g, a)};
            },
            "log");
  return y;
}

namespace detail {
// Constant 0/1 mask with the shape of `a`; never requires grad.
template <class S, class P>
Tensor<S> mask_of(const Tensor<S>& a, P pred) {
  const auto& av = a.v();
  std::vector<S> m(av.size());
  for (size_t i = 0; i < av.size(); ++i) m[i] = pred(static_cast<double>(av[i])) ? S(1) : S(0);
  return Tensor<S>::from(a.shape(), std::move(m));
}
}  // namespace detail

template <class S>
Tensor<S> sqrtt(Tape<S>& tp, const Tensor<S>& a) {
  for (S x : a.v())
    if (static_cast<double>(x) < 0.0)
      throw TensorError("sqrt: negative element " + std::to_string(static_cast<double>(x)));
  auto y = detail::map_unary(a, [](double x) { return std::sqrt(x); });
  tp.attach(y, {a},
            [y](Tape<S>& t, const Tensor<S>& g) -> typename Tape<S>::GradList {
              // Subgradient 0 at input 0: g/(2y) would be inf there, and a batch-stddev
              // over near-identical samples does reach exactly 0 in float. y is shifted
              // to 1 at those positions before dividing so the masked inf never forms.
              auto m = detail::mask_of(y, [](double v) { return v > 0.0; });
              auto lift = detail::map_unary(m, [](double v) { return 1.0 - v; });
              auto safe = add(t, y, lift);
              return {muls(t, mul(t, divt(t, g, safe), m), 0.5)};
            },
            "sqrt");
  return y;
}

template <class S>
Tensor<S> relu(Tape<S>& tp, const Tensor<S>& a) {
  auto y = detail::map_unary(a, [](double x) { return x > 0.0 ? x : 0.0; });
  auto m = detail::mask_of(a, [](double x) { return x > 0.0; });
  tp.attach(y, {a},
            [m](Tape<S>& t, const Tensor<S>& g) -> typename Tape<S>::GradList {
              return {mul(t, g, m)};
            },
            "relu");
  return y;
}

template <class S>
Tensor<S> lrelu(Tape<S>& tp, const Tensor<S>& a, double slope = 0.2) {
  auto y = detail::map_unary(a, [slope](double x) { return x > 0.0 ? x : slope * x; });
  const auto& av = a.v();
  std::vector<S> m(av.size());
  for (size_t i = 0; i < av.size(); ++i)
    m[i] = static_cast<double>(av[i]) > 0.0 ? S(1) : static_cast<S>(slope);
  auto mk = Tensor<S>::from(a.shape(), std::move(m));
  tp.attach(y, {a},
            [mk](Tape<S>& t, const Tensor<S>& g) -> typename Tape<S>::GradList {
              return {mul(t, g, mk)};
            },
            "lrelu");
  return y;
}

template <class S>
Tensor<S> sigmoid(Tape<S>& tp, const Tensor<S>& a) {
  auto y = detail::map_unary(a, [](double x) {
    // Stable in both tails.
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  });
  tp.attach(y, {a},
            [y](Tape<S>& t, const Tensor<S>& g) -> typename Tape<S>::GradList {
              return {mul(t, g, mul(t, y, ssub(t, 1.0, y)))};
            },
            "sigmoid");
  return y;
}

template <class S>
Tensor<S> tanht(Tape<S>& tp, const Tensor<S>& a) {
  auto y = detail::map_unary(a, [](double x) { return std::tanh(x); });
  tp.attach(y, {a},
            [y](Tape<S>& t, const Tensor<S>& g) -> typename Tape<S>::GradList {
              return {mul(t, g, ssub(t, 1.0, square(t, y)))};
            },
            "tanh");
  return y;
}

template <class S>
Tensor<S> clampmin(Tape<S>& tp, const Tensor<S>& a, double lo) {
  auto y = detail::map_unary(a, [lo](double x) { return x < lo ? lo : x; });
  auto m = detail::mask_of(a, [lo](double x) { return x >= lo; });
  tp.attach(y, {a},
            [m](Tape<S>& t, const Tensor<S>& g) -> typename Tape<S>::GradList {
              return {mul(t, g, m)};
            },
            "clampmin");
  return y;
}

template <class S>
Tensor<S> clampt(Tape<S>& tp, const Tensor<S>& a, double lo, double hi) {
  if (!(lo <= hi)) throw TensorError("clamp: lo > hi");
  auto y = detail::map_unary(a, [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); });
  auto m = detail::mask_of(a, [lo, hi](double x) { return x >= lo && x <= hi; });
  tp.attach(y, {a},
            [m](Tape<S>& t, const Tensor<S>& g) -> typename Tape<S>::GradList {
              return {mul(t, g, m)};
            },
            "clamp");
  return y;
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> reshape(Tape<S>& tp, const Tensor<S>& a, Shape target) {
  if (shape_numel(target) != a.size())
    throw TensorError("reshape: element count mismatch " + shape_str(a.shape()) + " -> " +
                      shape_str(target));
  auto y = Tensor<S>::from(target, a.v());
  Shape as = a.shape();
  tp.attach(y, {a},
            [as](Tape<S>& t, const Tensor<S>& g) -> typename Tape<S>::GradList {
              return {reshape(t, g, as)};
            },
            "reshape");
  return y;
}

template <class S>
Tensor<S> broadcast_to(Tape<S>& tp, const Tensor<S>& a, Shape target) {
  (void)detail::broadcast_shape(a.shape(), target, "broadcast_to");
  for (size_t i = 0; i < target.size(); ++i)
    if (a.shape()[i] != target[i] && a.shape()[i] != 1)
      throw TensorError("broadcast_to: cannot expand " + shape_str(a.shape()) + " to " +
                        shape_str(target));
  const int64_t n = shape_numel(target);
  std::vector<S> out(static_cast<size_t>(n));
  detail::PairWalker w(target, detail::broadcast_strides(a.shape(), target),
                       std::vector<int64_t>(target.size(), 0));
  const auto& av = a.v();
  for (int64_t i = 0; i < n; ++i) {
    out[static_cast<size_t>(i)] = av[static_cast<size_t>(w.oa)];
    w.advance();
  }
  auto y = Tensor<S>::from(target, std::move(out));
  Shape as = a.shape();
  tp.attach(y, {a},
            [as](Tape<S>& t, const Tensor<S>& g) -> typename Tape<S>::GradList {
              return {sum_to(t, g, as)};
            },
            "broadcast_to");
  return y;
}

// Sum `a` down to `target` (rank-equal; target dims are equal or 1).
// Accumulation is carried in double regardless of S.
template <class S>
Tensor<S> sum_to(Tape<S>& tp, const Tensor<S>& a, Shape target) {
  if (a.shape() == target) return a;
  (void)detail::broadcast_shape(a.shape(), target, "sum_to");
  for (size_t i = 0; i < target.size(); ++i)
    if (target[i] != a.shape()[i] && target[i] != 1)
      throw TensorError("sum_to: cannot reduce " + shape_str(a.shape()) + " to " + shape_str(target));
  const int64_t n = a.size();
  std::vector<double> acc(static_cast<size_t>(shape_numel(target)), 0.0);
  detail::PairWalker w(a.shape(), std::vector<int64_t>(a.shape().size(), 0),
                       detail::broadcast_strides(target, a.shape()));
  const auto& av = a.v();
  for (int64_t i = 0; i < n; ++i) {
    acc[static_cast<size_t>(w.ob)] += static_cast<double>(av[static_cast<size_t>(i)]);
    w.advance();
  }
  std::vector<S> out(acc.size());
  for (size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<S>(acc[i]);
  auto y = Tensor<S>::from(target, std::move(out));
  Shape as = a.shape();
  tp.attach(y, {a},
            [as](Tape<S>& t, const Tensor<S>& g) -> typename Tape<S>::GradList {
              return {broadcast_to(t, g, as)};
            },
            "sum_to");
  return y;
}

namespace detail {

inline void normalize_axes(const Shape& shape, std::vector<int>& axes, const char* op) {
  if (axes.empty()) throw TensorError(std::string(op) + ": empty axis list");
  for (int& ax : axes) {
    if (ax < 0) ax += static_cast<int>(shape.size());
    if (ax < 0 || ax >= static_cast<int>(shape.size()))
      throw TensorError(std::string(op) + ": axis out of range for " + shape_str(shape));
  }
  for (size_t i = 0; i < axes.size(); ++i)
    for (size_t j = i + 1; j < axes.size(); ++j)
      if (axes[i] == axes[j]) throw TensorError(std::string(op) + ": duplicate axis");
}

inline Shape reduced_shape(const Shape& in, const std::vector<int>& axes, bool keepdim) {
  Shape keep = in;
  for (int ax : axes) keep[static_cast<size_t>(ax)] = 1;
  if (keepdim) return keep;
  Shape out;
  std::vector<bool> is_red(in.size(), false);
  for (int ax : axes) is_red[static_cast<size_t>(ax)] = true;
  for (size_t i = 0; i < in.size(); ++i)
    if (!is_red[i]) out.push_back(in[i]);
  if (out.empty()) out.push_back(1);  // scalar results are rank-1 [1]
  return out;
}

}  // namespace detail

template <class S>
Tensor<S> reduce_sum(Tape<S>& tp, const Tensor<S>& a, std::vector<int> axes, bool keepdim = false) {
  detail::normalize_axes(a.shape(), axes, "reduce_sum");
  Shape keep = a.shape();
  for (int ax : axes) keep[static_cast<size_t>(ax)] = 1;
  auto y = sum_to(tp, a, keep);
  if (keepdim) return y;
  return reshape(tp, y, detail::reduced_shape(a.shape(), axes, false));
}

template <class S>
Tensor<S> reduce_mean(Tape<S>& tp, const Tensor<S>& a, std::vector<int> axes, bool keepdim = false) {
  detail::normalize_axes(a.shape(), axes, "reduce_mean");
  int64_t count = 1;
  for (int ax : axes) count *= a.shape()[static_cast<size_t>(ax)];
  return muls(tp, reduce_sum(tp, a, axes, keepdim), 1.0 / static_cast<double>(count));
}

template <class S>
Tensor<S> sum_all(Tape<S>& tp, const Tensor<S>& a) {
  std::vector<int> axes(a.shape().size());
  for (size_t i = 0; i < axes.size(); ++i) axes[i] = static_cast<int>(i);
  return reduce_sum(tp, a, axes, false);
}

template <class S>
Tensor<S> mean_all(Tape<S>& tp, const Tensor<S>& a) {
  return muls(tp, sum_all(tp, a), 1.0 / static_cast<double>(a.size()));
}

// Max over axes. Gradient routes to the first maximal element encountered in
// row-major order (ties broken by position).
template <class S>
Tensor<S> reduce_max(Tape<S>& tp, const Tensor<S>& a, std::vector<int> axes, bool keepdim = false) {
  detail::normalize_axes(a.shape(), axes, "reduce_max");
  Shape keep = a.shape();
  for (int ax : axes) keep[static_cast<size_t>(ax)] = 1;
  const int64_t out_n = shape_numel(keep);
  std::vector<S> out(static_cast<size_t>(out_n));
  std::vector<int64_t> winner(static_cast<size_t>(out_n), -1);
  detail::PairWalker w(a.shape(), std::vector<int64_t>(a.shape().size(), 0),
                       detail::broadcast_strides(keep, a.shape()));
  const auto& av = a.v();
  for (int64_t i = 0; i < a.size(); ++i) {
    const size_t o = static_cast<size_t>(w.ob);
    if (winner[o] < 0 || av[static_cast<size_t>(i)] > out[o]) {
      out[o] = av[static_cast<size_t>(i)];
      winner[o] = i;
    }
    w.advance();
  }
  std::vector<S> mask(static_cast<size_t>(a.size()), S(0));
  for (int64_t o = 0; o < out_n; ++o) mask[static_cast<size_t>(winner[static_cast<size_t>(o)])] = S(1);
  auto mk = Tensor<S>::from(a.shape(), std::move(mask));
  auto y = Tensor<S>::from(keep, std::move(out));
  Shape as = a.shape();
  tp.attach(y, {a},
            [as, mk](Tape<S>& t, const Tensor<S>& g) -> typename Tape<S>::GradList {
              return {mul(t, broadcast_to(t, g, as), mk)};
            },
            "reduce_max");
  if (keepdim) return y;
  return reshape(tp, y, detail::reduced_shape(as, axes, false));
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

namespace detail {
// C[m x n] += A[m x k] * B[k x n], accumulating in double.
template <class S>
void gemm_acc(const S* A, const S* B, double* C, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    double* crow = C + i * n;
    const S* arow = A + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const double a = static_cast<double>(arow[p]);
      if (a == 0.0) continue;
      const S* brow = B + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += a * static_cast<double>(brow[j]);
    }
  }
}

template <class S>
std::vector<S> cast_from_double(const std::vector<double>& d) {
  std::vector<S> out(d.size());
  for (size_t i = 0; i < d.size(); ++i) out[i] = static_cast<S>(d[i]);
  return out;
}
}  // namespace detail

template <class S>
Tensor<S> matmul(Tape<S>& tp, const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw TensorError("matmul: expects rank-2 operands, got " + shape_str(a.shape()) + " and " +
                      shape_str(b.shape()));
  if (a.dim(1) != b.dim(0))
    throw TensorError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                      shape_str(b.shape()));
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> acc(static_cast<size_t>(m * n), 0.0);
  detail::gemm_acc(a.v().data(), b.v().data(), acc.data(), m, k, n);
  auto y = Tensor<S>::from({m, n}, detail::cast_from_double<S>(acc));
  tp.attach(y, {a, b},
            [a, b](Tape<S>& t, const Tensor<S>& g) -> typename Tape<S>::GradList {
              return {matmul(t, g, transpose2(t, b)), matmul(t, transpose2(t, a), g)};
            },
            "matmul");
  return y;
}

template <class S>
Tensor<S> transpose2(Tape<S>& tp, const Tensor<S>& a) {
  if (a.rank() != 2) throw TensorError("transpose2: expects rank-2, got " + shape_str(a.shape()));
  const int64_t m = a.dim(0), n = a.dim(1);
  std::vector<S> out(static_cast<size_t>(m * n));
  const auto& av = a.v();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j)
      out[static_cast<size_t>(j * m + i)] = av[static_cast<size_t>(i * n + j)];
  auto y = Tensor<S>::from({n, m}, std::move(out));
  tp.attach(y, {a},
            [](Tape<S>& t, const Tensor<S>& g) -> typename Tape<S>::GradList {
              return {transpose2(t, g)};
            },
            "transpose2");
  return y;
}

// Leaf copy that blocks gradient flow.
template <class S>
Tensor<S> detach(Tape<S>&, const Tensor<S>& a) {
  return a.detached();
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

namespace detail {

template <class S>
using GradMap = std::unordered_map<TensorData<S>*, Tensor<S>>;

// Reverse sweep from `loss` (scalar). Fills a map from tensor storage to its
// gradient tensor. With create_graph the sweep records onto the same tape so
// the returned gradients are differentiable.
template <class S>
GradMap<S> backprop(const Tensor<S>& loss, bool create_graph) {
  if (loss.size() != 1)
    throw TensorError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  if (!std::isfinite(static_cast<double>(loss.item())))
    throw NumericError("backward: loss is not finite");

  GradMap<S> gmap;
  gmap.emplace(loss.d_.get(), Tensor<S>::ones({1}));
  Tape<S>* tape = loss.d_->tape;
  if (tape == nullptr || loss.d_->node < 0) return gmap;

  const int64_t top = loss.d_->node;
  std::vector<char> needed(static_cast<size_t>(top) + 1, 0);
  needed[static_cast<size_t>(top)] = 1;
  for (int64_t i = top; i >= 0; --i) {
    if (!needed[static_cast<size_t>(i)]) continue;
    for (const auto& in : tape->nodes[static_cast<size_t>(i)].in)
      if (in.defined() && in.d_->tape == tape && in.d_->node >= 0 && in.d_->node < i)
        needed[static_cast<size_t>(in.d_->node)] = 1;
  }

  const bool saved = tape->recording;
  tape->recording = create_graph;
  try {
    for (int64_t i = top; i >= 0; --i) {
      if (!needed[static_cast<size_t>(i)]) continue;
      // By value: with create_graph the vjp appends to tape->nodes, which may
      // reallocate and would invalidate a reference taken here.
      auto node = tape->nodes[static_cast<size_t>(i)];
      auto it = gmap.find(node.out.d_.get());
      if (it == gmap.end()) continue;  // no grad flowed to this op's output
      Tensor<S> gout = it->second;
      typename Tape<S>::GradList gin = node.vjp(*tape, gout);
      if (gin.size() != node.in.size())
        throw TensorError(std::string("internal: vjp arity mismatch in op ") + node.name);
      for (size_t j = 0; j < gin.size(); ++j) {
        if (!gin[j].defined()) continue;
        const auto& src = node.in[j];
        if (!src.defined() || !src.d_->requires_grad) continue;
        if (gin[j].shape() != src.shape())
          throw TensorError(std::string("internal: vjp shape mismatch in op ") + node.name + ": " +
                            shape_str(gin[j].shape()) + " vs " + shape_str(src.shape()));
        check_finite(gin[j].v(), node.name);
        auto slot = gmap.find(src.d_.get());
        if (slot == gmap.end()) gmap.emplace(src.d_.get(), gin[j]);
        else slot->second = add(*tape, slot->second, gin[j]);
      }
    }
  } catch (...) {
    tape->recording = saved;
    throw;
  }
  tape->recording = saved;
  return gmap;
}

}  // namespace detail

// Accumulates d(loss)/d(leaf) into every reachable leaf that requires grad.
template <class S>
void backward(const Tensor<S>& loss) {
  auto gmap = detail::backprop(loss, /*create_graph=*/false);
  for (auto& [data, g] : gmap) {
    if (data->node >= 0 || !data->requires_grad) continue;
    if (data->grad.empty()) data->grad.assign(data->v.size(), S(0));
    const auto& gv = g.v();
    for (size_t i = 0; i < gv.size(); ++i)
      data->grad[i] = static_cast<S>(static_cast<double>(data->grad[i]) + static_cast<double>(gv[i]));
  }
}

// Gradient of `loss` w.r.t. one tensor, optionally differentiable itself.
// Leaf .grad buffers are not touched.
template <class S>
Tensor<S> grad_of(const Tensor<S>& loss, const Tensor<S>& wrt, bool create_graph = false) {
  auto gmap = detail::backprop(loss, create_graph);
  auto it = gmap.find(wrt.d_.get());
  if (it == gmap.end()) return Tensor<S>::zeros(wrt.shape());
  return it->second;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient verification
// ---------------------------------------------------------------------------

struct GradCheckReport {
  double max_rel_err = 0.0;
  int64_t worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Compares the analytic gradient of scalar-valued f(x) against central
// differences. Relative error uses max(|analytic|,|numeric|,1e-8) as the
// denominator; the step is realized in the working precision so the divisor
// matches the perturbation actually applied.
template <class S, class F>
GradCheckReport grad_check_report(F f, const Tensor<S>& x0, double step = 1e-5) {
  Tape<S> tp;
  auto x = Tensor<S>::from(x0.shape(), x0.v());
  x.set_requires_grad();
  Tensor<S> y = f(tp, x);
  if (y.size() != 1) throw TensorError("grad_check: f must return a scalar");
  if (!std::isfinite(static_cast<double>(y.item())))
    throw NumericError("grad_check: f(x) is not finite");
  Tensor<S> an = grad_of(y, x, false);
  detail::check_finite(an.v(), "grad_check analytic gradient");

  // Each probe gets a private tape that is discarded afterwards. It still
  // records so that functions which differentiate internally (gradient
  // penalties) stay evaluable.
  auto eval = [&](const std::vector<S>& vals) {
    Tape<S> t2;
    auto xx = Tensor<S>::from(x0.shape(), vals);
    Tensor<S> yy = f(t2, xx);
    if (yy.size() != 1) throw TensorError("grad_check: f must return a scalar");
    const double r = static_cast<double>(yy.item());
    if (!std::isfinite(r)) throw NumericError("grad_check: perturbed f(x) is not finite");
    return r;
  };

  GradCheckReport rep;
  std::vector<S> vals = x0.v();
  for (size_t i = 0; i < vals.size(); ++i) {
    const double orig = static_cast<double>(vals[i]);
    const S hi = static_cast<S>(orig + step);
    const S lo = static_cast<S>(orig - step);
    const double h_eff = static_cast<double>(hi) - static_cast<double>(lo);
    if (h_eff == 0.0) throw TensorError("grad_check: step underflows at index " + std::to_string(i));
    vals[i] = hi;
    const double fp = eval(vals);
    vals[i] = lo;
    const double fm = eval(vals);
    vals[i] = static_cast<S>(orig);
    const double num = (fp - fm) / h_eff;
    const double ana = static_cast<double>(an.v()[i]);
    const double denom = std::max({std::fabs(ana), std::fabs(num), 1e-8});
    const double rel = std::fabs(ana - num) / denom;
    if (rel > rep.max_rel_err) {
      rep.max_rel_err = rel;
      rep.worst_index = static_cast<int64_t>(i);
      rep.analytic = ana;
      rep.numeric = num;
    }
  }
  return rep;
}

template <class S, class F>
double grad_check(F f, const Tensor<S>& x0, double step = 1e-5) {
  return grad_check_report(f, x0, step).max_rel_err;
}

}  // namespace mrgf
