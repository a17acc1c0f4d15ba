#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "mrgf/rng.hpp"
#include "mrgf/tensor.hpp"

namespace mrgf {

// One named parameter of a model. Non-trainable entries (BN moving stats)
// count toward the total but are never touched by an optimizer.
template <class S>
struct Param {
  std::string name;
  Tensor<S> t;
  bool trainable = true;
};

template <class S>
void zero_grads(std::vector<Param<S>>& params) {
  for (auto& p : params)
    if (p.trainable) p.t.zero_grad();
}

// Clamp every trainable parameter element to [-c, c].
template <class S>
void weight_clip(std::vector<Param<S>>& params, double c) {
  if (!(c > 0.0)) throw TensorError("weight_clip: threshold must be positive");
  for (auto& p : params) {
    if (!p.trainable) continue;
    for (auto& w : p.t.v()) {
      if (static_cast<double>(w) > c) w = static_cast<S>(c);
      else if (static_cast<double>(w) < -c) w = static_cast<S>(-c);
    }
  }
}

// Bias-corrected Adam. Moment buffers are stored in the working precision so
// that checkpoint round-trips are bit-exact; the arithmetic runs in double.
template <class S>
class Adam {
public:
  double lr = 0.001, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  Adam() = default;
  Adam(double lr_, double b1, double b2 = 0.999, double e = 1e-8)
      : lr(lr_), beta1(b1), beta2(b2), eps(e) {}

  void step(std::vector<Param<S>>& params) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (auto& p : params) {
      if (!p.trainable || !p.t.has_grad()) continue;
      detail::check_finite(p.t.grad(), "adam gradient");
      auto& slot = state_[p.name];
      if (slot.m.empty()) {
        slot.m.assign(p.t.v().size(), S(0));
        slot.v.assign(p.t.v().size(), S(0));
      }
      auto& val = p.t.v();
      auto& gr = p.t.grad();
      for (size_t i = 0; i < val.size(); ++i) {
        const double g = static_cast<double>(gr[i]);
        const double m = beta1 * static_cast<double>(slot.m[i]) + (1.0 - beta1) * g;
        const double v = beta2 * static_cast<double>(slot.v[i]) + (1.0 - beta2) * g * g;
        slot.m[i] = static_cast<S>(m);
        slot.v[i] = static_cast<S>(v);
        const double mhat = static_cast<double>(slot.m[i]) / c1;
        const double vhat = static_cast<double>(slot.v[i]) / c2;
        val[i] = static_cast<S>(static_cast<double>(val[i]) - lr * mhat / (std::sqrt(vhat) + eps));
      }
    }
  }

  struct Moments {
    std::vector<S> m, v;
  };
  int64_t steps() const { return t_; }
  void set_steps(int64_t t) { t_ = t; }
  std::unordered_map<std::string, Moments>& state() { return state_; }
  const std::unordered_map<std::string, Moments>& state() const { return state_; }

private:
  int64_t t_ = 0;
  std::unordered_map<std::string, Moments> state_;
};

// Nesterov momentum: v <- mu*v + g; theta <- theta - lr*(g + mu*v).
template <class S>
class SgdNesterov {
public:
  double lr = 0.001, momentum = 0.9;

  SgdNesterov() = default;
  SgdNesterov(double lr_, double mu) : lr(lr_), momentum(mu) {}

  void step(std::vector<Param<S>>& params) {
    ++t_;
    for (auto& p : params) {
      if (!p.trainable || !p.t.has_grad()) continue;
      detail::check_finite(p.t.grad(), "sgd gradient");
      auto& vel = state_[p.name];
      if (vel.empty()) vel.assign(p.t.v().size(), S(0));
      auto& val = p.t.v();
      auto& gr = p.t.grad();
      for (size_t i = 0; i < val.size(); ++i) {
        const double g = static_cast<double>(gr[i]);
        const double v = momentum * static_cast<double>(vel[i]) + g;
        vel[i] = static_cast<S>(v);
        val[i] = static_cast<S>(static_cast<double>(val[i]) - lr * (g + momentum * v));
      }
    }
  }

  int64_t steps() const { return t_; }
  void set_steps(int64_t t) { t_ = t; }
  std::unordered_map<std::string, std::vector<S>>& state() { return state_; }

private:
  int64_t t_ = 0;
  std::unordered_map<std::string, std::vector<S>> state_;
};

// ---------------------------------------------------------------------------
// Weight initialization
// ---------------------------------------------------------------------------

// normal_002:       N(0, 0.02)
// he_normal_paper:  N(0, sigma) with sigma = sqrt(2 / (256*256*n_filters)),
//                   the formula as printed (n_filters = output channels)
// he_normal_fanin:  conventional He: sigma = sqrt(2 / fan_in)
// dynamic_scaled:   weights stored as N(0,1); each forward multiplies by the
//                   he_normal_paper sigma for that layer
enum class Init { normal_002, he_normal_paper, he_normal_fanin, dynamic_scaled };

inline Init init_from_name(const std::string& s) {
  if (s == "normal_002") return Init::normal_002;
  if (s == "he_normal_paper") return Init::he_normal_paper;
  if (s == "he_normal_fanin") return Init::he_normal_fanin;
  if (s == "dynamic_scaled") return Init::dynamic_scaled;
  throw TensorError("unknown init scheme '" + s + "'");
}

inline const char* init_name(Init i) {
  switch (i) {
    case Init::normal_002: return "normal_002";
    case Init::he_normal_paper: return "he_normal_paper";
    case Init::he_normal_fanin: return "he_normal_fanin";
    case Init::dynamic_scaled: return "dynamic_scaled";
  }
  return "?";
}

inline double he_paper_sigma(int64_t n_filters) {
  return std::sqrt(2.0 / (256.0 * 256.0 * static_cast<double>(n_filters)));
}

inline double he_fanin_sigma(int64_t fan_in) { return std::sqrt(2.0 / static_cast<double>(fan_in)); }

template <class S>
void fill_normal(Tensor<S>& t, Rng& rng, double mean, double stddev) {
  for (auto& w : t.v()) w = static_cast<S>(rng.normal(mean, stddev));
}

// Samples a fresh weight tensor. n_filters/fan_in provide the layer context
// the variance formulas need.
template <class S>
Tensor<S> init_weights(Shape shape, Init scheme, Rng& rng, int64_t n_filters, int64_t fan_in) {
  auto t = Tensor<S>::zeros(std::move(shape));
  switch (scheme) {
    case Init::normal_002: fill_normal(t, rng, 0.0, 0.02); break;
    case Init::he_normal_paper: fill_normal(t, rng, 0.0, he_paper_sigma(n_filters)); break;
    case Init::he_normal_fanin: fill_normal(t, rng, 0.0, he_fanin_sigma(fan_in)); break;
    case Init::dynamic_scaled: fill_normal(t, rng, 0.0, 1.0); break;
  }
  return t;
}

}  // namespace mrgf
