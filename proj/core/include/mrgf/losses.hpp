#pragma once

#include <functional>

#include "mrgf/layers.hpp"

namespace mrgf {

// Binary cross-entropy against a constant target value in [0,1]. Predictions
// are clamped to [eps, 1-eps] before the logs.
template <class S>
Tensor<S> bce_const(Tape<S>& tp, const Tensor<S>& pred, double target, double eps = 1e-7) {
  if (target < 0.0 || target > 1.0) throw TensorError("bce: target outside [0,1]");
  auto p = clampt(tp, pred, eps, 1.0 - eps);
  auto term = add(tp, muls(tp, logt(tp, p), target), muls(tp, logt(tp, ssub(tp, 1.0, p)), 1.0 - target));
  return neg(tp, mean_all(tp, term));
}

// Elementwise-target variant.
template <class S>
Tensor<S> bce(Tape<S>& tp, const Tensor<S>& pred, const Tensor<S>& target, double eps = 1e-7) {
  if (pred.shape() != target.shape())
    throw TensorError("bce: shape mismatch " + shape_str(pred.shape()) + " vs " +
                      shape_str(target.shape()));
  auto p = clampt(tp, pred, eps, 1.0 - eps);
  auto term = add(tp, mul(tp, target, logt(tp, p)),
                  mul(tp, ssub(tp, 1.0, target), logt(tp, ssub(tp, 1.0, p))));
  return neg(tp, mean_all(tp, term));
}

// Dice similarity of two already-binarized masks (values 0/1), computed from
// exact overlap counts: 2·TP / ((TP+FN) + (TP+FP)). Symmetric in x and y.
template <class S>
double dice_coefficient(const Tensor<S>& x, const Tensor<S>& y) {
  if (x.shape() != y.shape())
    throw TensorError("dice_coefficient: shape mismatch " + shape_str(x.shape()) + " vs " +
                      shape_str(y.shape()));
  int64_t tp = 0, fp = 0, fn = 0;
  for (int64_t i = 0; i < x.size(); ++i) {
    const bool a = static_cast<double>(x.v()[static_cast<size_t>(i)]) >= 0.5;
    const bool b = static_cast<double>(y.v()[static_cast<size_t>(i)]) >= 0.5;
    if (a && b) ++tp;
    else if (a && !b) ++fp;
    else if (!a && b) ++fn;
  }
  const int64_t denom = 2 * tp + fn + fp;
  if (denom == 0) throw TensorError("dice_coefficient: both masks empty (0/0)");
  return 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

// Soft Dice loss: 1 - (2*sum(p*t) + smooth) / (sum(p) + sum(t) + smooth).
template <class S>
Tensor<S> dice_loss(Tape<S>& tp, const Tensor<S>& pred, const Tensor<S>& target,
                    double smooth = 1.0) {
  if (pred.shape() != target.shape())
    throw TensorError("dice_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
                      shape_str(target.shape()));
  auto inter = sum_all(tp, mul(tp, pred, target));
  auto denom = add(tp, sum_all(tp, pred), sum_all(tp, target));
  return ssub(tp, 1.0, divt(tp, adds(tp, muls(tp, inter, 2.0), smooth), adds(tp, denom, smooth)));
}

// The five adversarial objectives. `gan` and `dragan` share the original
// saturating discriminator loss with the non-saturating generator loss;
// they differ only in the gradient penalty added by the training loop.
enum class GanLoss { gan, lsgan, wgan, wgan_gp, dragan };

inline const char* gan_loss_name(GanLoss k) {
  switch (k) {
    case GanLoss::gan: return "gan";
    case GanLoss::lsgan: return "lsgan";
    case GanLoss::wgan: return "wgan";
    case GanLoss::wgan_gp: return "wgan_gp";
    case GanLoss::dragan: return "dragan";
  }
  return "?";
}

inline GanLoss gan_loss_from_name(const std::string& s) {
  if (s == "gan") return GanLoss::gan;
  if (s == "lsgan") return GanLoss::lsgan;
  if (s == "wgan") return GanLoss::wgan;
  if (s == "wgan_gp") return GanLoss::wgan_gp;
  if (s == "dragan") return GanLoss::dragan;
  throw TensorError("unknown adversarial loss '" + s + "'");
}

// True when the discriminator head for this loss is a raw score (no sigmoid).
inline bool gan_loss_linear_head(GanLoss k) { return k == GanLoss::wgan || k == GanLoss::wgan_gp; }

template <class S>
Tensor<S> gan_g_loss(Tape<S>& tp, GanLoss kind, const Tensor<S>& d_fake) {
  switch (kind) {
    case GanLoss::gan:
    case GanLoss::dragan:
      return bce_const(tp, d_fake, 1.0);  // -E[log D(G(z))]
    case GanLoss::lsgan:
      return mean_all(tp, square(tp, adds(tp, d_fake, -1.0)));
    case GanLoss::wgan:
    case GanLoss::wgan_gp:
      return neg(tp, mean_all(tp, d_fake));
  }
  throw TensorError("unknown adversarial loss");
}

// One-sided label smoothing replaces the real target 1 with 0.9 in the full
// cross-entropy (its minimum then sits at D(x) = 0.9, not at 1).
template <class S>
Tensor<S> gan_d_loss(Tape<S>& tp, GanLoss kind, const Tensor<S>& d_real, const Tensor<S>& d_fake,
                     bool smooth_real = false) {
  const double rt = smooth_real ? 0.9 : 1.0;
  switch (kind) {
    case GanLoss::gan:
    case GanLoss::dragan:
      return add(tp, bce_const(tp, d_real, rt), bce_const(tp, d_fake, 0.0));
    case GanLoss::lsgan:
      return add(tp, mean_all(tp, square(tp, adds(tp, d_real, -rt))),
                 mean_all(tp, square(tp, d_fake)));
    case GanLoss::wgan:
    case GanLoss::wgan_gp:
      return add(tp, neg(tp, mean_all(tp, d_real)), mean_all(tp, d_fake));
  }
  throw TensorError("unknown adversarial loss");
}

// Full description of an adversarial objective as configured for a run.
struct LossSpec {
  GanLoss kind = GanLoss::gan;
  double lambda_adv = 1.0;
  double lambda_gp = 0.25;
  bool one_sided_smoothing = false;
  double clip_threshold = 0.01;  // consumed only when kind == wgan
  bool use_drift = false;
  double eps_drift = 1e-3;
};

// (L_G, L_D) per the configured objective. L_D includes the drift term when
// enabled; the gradient penalty is a separate term composed by the caller as
// lambda_adv * L_D + lambda_gp * penalty.
template <class S>
std::pair<Tensor<S>, Tensor<S>> gan_loss(Tape<S>& tp, const Tensor<S>& d_real,
                                         const Tensor<S>& d_fake, const LossSpec& spec) {
  detail::check_finite(d_real.v(), "gan_loss d_real");
  detail::check_finite(d_fake.v(), "gan_loss d_fake");
  auto lg = gan_g_loss(tp, spec.kind, d_fake);
  auto ld = gan_d_loss(tp, spec.kind, d_real, d_fake, spec.one_sided_smoothing);
  if (spec.use_drift) ld = add(tp, ld, muls(tp, drift_penalty(tp, d_real), spec.eps_drift));
  return {lg, ld};
}

template <class S>
using DFunc = std::function<Tensor<S>(Tape<S>&, const Tensor<S>&)>;

// E[(||grad_x D(x_hat)|| - 1)^2] with the norm taken per sample. The gradient
// is obtained by differentiating through the recorded graph with
// create_graph, so the penalty itself backpropagates into D's parameters.
// Returned unweighted; the caller applies lambda_gp.
template <class S>
Tensor<S> grad_norm_penalty(Tape<S>& tp, const DFunc<S>& d, Tensor<S> x_hat) {
  x_hat.set_requires_grad();
  auto out = d(tp, x_hat);
  auto s = sum_all(tp, out);
  auto gx = grad_of(s, x_hat, /*create_graph=*/true);
  std::vector<int> axes;
  for (int i = 1; i < x_hat.rank(); ++i) axes.push_back(i);
  Tensor<S> nsq = axes.empty() ? square(tp, gx) : reduce_sum(tp, square(tp, gx), axes, false);
  auto n = sqrtt(tp, adds(tp, nsq, 1e-12));  // guards the sqrt at exactly zero gradient
  return mean_all(tp, square(tp, adds(tp, n, -1.0)));
}

// Interpolates real and generated samples with one uniform alpha per sample:
// x_hat = a*x + (1-a)*x_tilde. Consumes one uniform draw per batch row.
template <class S>
Tensor<S> gradient_penalty_wgan_gp(Tape<S>& tp, const DFunc<S>& d, const Tensor<S>& real,
                                   const Tensor<S>& fake, Rng& rng) {
  if (real.shape() != fake.shape())
    throw TensorError("gradient penalty: real/fake shape mismatch " + shape_str(real.shape()) +
                      " vs " + shape_str(fake.shape()));
  const int64_t B = real.dim(0);
  const int64_t per = real.size() / B;
  std::vector<S> mix(static_cast<size_t>(real.size()));
  const auto& rv = real.v();
  const auto& fv = fake.v();
  for (int64_t b = 0; b < B; ++b) {
    const double a = rng.uniform();
    for (int64_t i = 0; i < per; ++i) {
      const size_t k = static_cast<size_t>(b * per + i);
      mix[k] = static_cast<S>(a * static_cast<double>(rv[k]) + (1.0 - a) * static_cast<double>(fv[k]));
    }
  }
  return grad_norm_penalty(tp, d, Tensor<S>::from(real.shape(), std::move(mix)));
}

// Penalty around perturbed real data: x_p = x + u, u ~ U(0, sigma_x/2)
// elementwise (one-sided), where sigma_x is the population standard deviation
// of the whole real batch (one scalar). Interpolation again uses one alpha per
// sample. Draw order: all perturbation noise first (row-major), then alphas.
template <class S>
Tensor<S> gradient_penalty_dragan(Tape<S>& tp, const DFunc<S>& d, const Tensor<S>& real, Rng& rng) {
  if (real.dim(0) < 2)
    throw TensorError("dragan penalty: needs batch >= 2 to estimate sigma_x");
  const auto& rv = real.v();
  double mean = 0.0;
  for (S x : rv) mean += static_cast<double>(x);
  mean /= static_cast<double>(rv.size());
  double var = 0.0;
  for (S x : rv) {
    const double c = static_cast<double>(x) - mean;
    var += c * c;
  }
  var /= static_cast<double>(rv.size());
  const double half_sigma = 0.5 * std::sqrt(var);
  std::vector<S> pert(rv.size());
  for (size_t i = 0; i < rv.size(); ++i)
    pert[i] = static_cast<S>(static_cast<double>(rv[i]) + rng.uniform(0.0, half_sigma));
  const int64_t B = real.dim(0);
  const int64_t per = real.size() / B;
  std::vector<S> mix(rv.size());
  for (int64_t b = 0; b < B; ++b) {
    const double a = rng.uniform();
    for (int64_t i = 0; i < per; ++i) {
      const size_t k = static_cast<size_t>(b * per + i);
      mix[k] = static_cast<S>(a * static_cast<double>(rv[k]) + (1.0 - a) * static_cast<double>(pert[k]));
    }
  }
  return grad_norm_penalty(tp, d, Tensor<S>::from(real.shape(), std::move(mix)));
}

// Small pull of real scores toward zero used by the progressive setup:
// eps_drift * E[D(x)^2].
template <class S>
Tensor<S> drift_penalty(Tape<S>& tp, const Tensor<S>& d_real) {
  return mean_all(tp, square(tp, d_real));
}

}  // namespace mrgf
