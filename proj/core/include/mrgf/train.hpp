#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mrgf/checkpoint.hpp"
#include "mrgf/config.hpp"
#include "mrgf/data.hpp"
#include "mrgf/eval.hpp"
#include "mrgf/losses.hpp"
#include "mrgf/models.hpp"

namespace mrgf {

struct RunReport {
  bool diverged = false;
  std::string divergence_reason;
  int64_t steps = 0;  // optimizer iterations taken (discriminator steps for GANs)
  double final_d_loss = 0.0, final_g_loss = 0.0;
  double val_dice = 0.0, val_accuracy = 0.0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::vector<std::string> stage_labels;
  std::vector<double> stage_wall_seconds;
  std::string log_path, checkpoint_path;
};

inline ImageCorpus make_corpus(const ExperimentConfig& c) {
  ImageCorpus corpus;
  if (c.data_source == "blobs") {
    Rng r(Rng::derive(c.seed, "corpus"));
    corpus = synthetic_blobs(c.data_n, c.data_res, c.data_modes, r);
  } else if (c.data_source == "dir") {
    corpus = load_corpus_dir(c.data_path);
  } else {
    corpus = load_corpus_manifest(c.data_path);
  }
  return corpus.range == c.data_range ? corpus : rescale_corpus(corpus, c.data_range);
}

// [B, dim, 1, 1] latent batch. `normal_normalized` rescales each sample onto
// the radius-sqrt(dim) hypersphere, keeping unit variance per component.
template <class S>
Tensor<S> sample_latents(const std::string& kind, int64_t batch, int64_t dim, Rng& rng) {
  std::vector<S> z(static_cast<size_t>(batch * dim));
  if (kind == "uniform") {
    for (auto& v : z) v = static_cast<S>(rng.uniform(-1.0, 1.0));
  } else if (kind == "normal" || kind == "normal_normalized") {
    for (auto& v : z) v = static_cast<S>(rng.normal());
    if (kind == "normal_normalized") {
      const double radius = std::sqrt(static_cast<double>(dim));
      for (int64_t b = 0; b < batch; ++b) {
        double n2 = 0.0;
        for (int64_t i = 0; i < dim; ++i) {
          const double v = static_cast<double>(z[static_cast<size_t>(b * dim + i)]);
          n2 += v * v;
        }
        const double s = n2 > 0.0 ? radius / std::sqrt(n2) : 0.0;
        for (int64_t i = 0; i < dim; ++i) {
          auto& v = z[static_cast<size_t>(b * dim + i)];
          v = static_cast<S>(static_cast<double>(v) * s);
        }
      }
    }
  } else {
    throw TensorError("unknown latent.kind '" + kind + "'");
  }
  return Tensor<S>::from({batch, dim, 1, 1}, std::move(z));
}

// The builders terminate every discriminator in the printed sigmoid row; the
// Wasserstein objectives need the raw critic score, so training flattens it.
template <class S>
void flatten_disc_head(Model<S>& disc) {
  for (auto it = disc.nodes.rbegin(); it != disc.nodes.rend(); ++it) {
    if (it->act == Act::sigmoid) {
      it->act = Act::none;
      return;
    }
  }
  throw TensorError(disc.arch + ": no sigmoid head to flatten");
}

// A run is declared diverged when a loss turns non-finite or its magnitude
// stays above 1e6 for ten consecutive steps (transient spikes are tolerated).
class DivergenceMonitor {
 public:
  std::string observe(double a, double b = 0.0) {
    if (!std::isfinite(a) || !std::isfinite(b)) return "non-finite loss value";
    if (std::fabs(a) > 1e6 || std::fabs(b) > 1e6) {
      if (++run_ >= 10) return "loss magnitude above 1e6 for 10 consecutive steps";
    } else {
      run_ = 0;
    }
    return {};
  }

 private:
  int run_ = 0;
};

namespace detail {

// %.9g round-trips any float exactly, so equal runs print equal logs.
inline std::string csv_num(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.9g", v);
  return b;
}

inline bool profile_active(const AugmentProfile& p) {
  return p.hflip || p.rot_hi > 0.0 || p.shift_frac > 0.0 || p.zoom_frac > 0.0;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline Tensor<float> noise_like(const Tensor<float>& x, double std, Rng& rng) {
  auto n = Tensor<float>::zeros(x.shape());
  for (auto& v : n.v()) v = static_cast<float>(rng.normal(0.0, std));
  return n;
}

inline Tensor<float> with_noise(const Tensor<float>& x, double std, Rng& rng) {
  auto out = x.detached();
  for (auto& v : out.v()) v = static_cast<float>(static_cast<double>(v) + rng.normal(0.0, std));
  return out;
}

}  // namespace detail

// Position of a run, serialized into the checkpoint next to the config.
struct RunProgress {
  int64_t epoch = 0, step = 0;  // completed epochs, optimizer steps taken
  int64_t stage = 0;            // progressive stages completed
  int64_t stage_res = 0;        // resolution of the last completed stage
  bool transition = false;
  double best_val_loss = std::numeric_limits<double>::infinity();
  int64_t stream_epoch = 0, stream_step = 0;
};

inline std::string progress_text(const RunProgress& p) {
  std::string s;
  s += "epoch = " + std::to_string(p.epoch) + "\n";
  s += "step = " + std::to_string(p.step) + "\n";
  s += "stage = " + std::to_string(p.stage) + "\n";
  s += "stage_res = " + std::to_string(p.stage_res) + "\n";
  s += "transition = " + std::string(p.transition ? "true" : "false") + "\n";
  s += "best_val_loss = " + detail::fmt_double(p.best_val_loss) + "\n";
  s += "stream.epoch = " + std::to_string(p.stream_epoch) + "\n";
  s += "stream.step = " + std::to_string(p.stream_step) + "\n";
  return s;
}

inline RunProgress parse_progress(const std::string& text) {
  detail::KvReader kv(text, "checkpoint progress");
  RunProgress p;
  p.epoch = kv.integer("epoch", 0);
  p.step = kv.integer("step", 0);
  p.stage = kv.integer("stage", 0);
  p.stage_res = kv.integer("stage_res", 0);
  p.transition = kv.boolean("transition", false);
  p.best_val_loss = kv.real("best_val_loss", std::numeric_limits<double>::infinity());
  p.stream_epoch = kv.integer("stream.epoch", 0);
  p.stream_step = kv.integer("stream.step", 0);
  kv.reject_unknown();
  return p;
}

// --- adversarial training ----------------------------------------------------

namespace detail {

inline void write_gan_checkpoint(const std::string& path, const ExperimentConfig& cfg,
                                 const RunProgress& pr, GanPair<float>& pair,
                                 const Adam<float>& g_opt, const Adam<float>& d_opt,
                                 const Rng& batches, const Rng& latent, const Rng& penalty,
                                 const Rng& noise) {
  Checkpoint ck;
  ck.set_meta(config_text(cfg));
  ck.add_text("__progress__", progress_text(pr));
  ck.add_params(pair.gen.params);
  ck.add_params(pair.disc.params);
  ck.add_adam("g", g_opt, pair.gen.params);
  ck.add_adam("d", d_opt, pair.disc.params);
  ck.add_rng("batches", batches);
  ck.add_rng("latent", latent);
  ck.add_rng("penalty", penalty);
  ck.add_rng("noise", noise);
  ck.write(path);
}

// 4x4 sheet of generated images, mapped from the tanh range onto [0,1].
inline void save_sample_grid(Model<float>& gen, const Tensor<float>& z16,
                             const std::string& path) {
  Tape<float> tp;
  NoRecordGuard<float> nr(tp);
  auto imgs = gen.forward(tp, z16, false);
  const int64_t h = imgs.dim(2), w = imgs.dim(3);
  auto sheet = Tensor<float>::zeros({4 * h, 4 * w});
  for (int64_t i = 0; i < 16; ++i) {
    const int64_t r0 = (i / 4) * h, c0 = (i % 4) * w;
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        const float v = imgs.v()[static_cast<size_t>(((i * 1 + 0) * h + y) * w + x)];
        sheet.v()[static_cast<size_t>((r0 + y) * 4 * w + c0 + x)] =
            std::min(1.0f, std::max(0.0f, 0.5f * (v + 1.0f)));
      }
  }
  save_pgm(sheet, path, 8);
}

// One discriminator update on a detached fake batch, then k generator
// updates on fresh tapes. Returns (d objective, last g objective, penalty).
struct GanStepOut {
  double d_loss = 0.0, g_loss = 0.0, gp_term = 0.0;
};

inline GanStepOut gan_step(const ExperimentConfig& cfg, GanPair<float>& pair, Adam<float>& g_opt,
                           Adam<float>& d_opt, const Tensor<float>& real_in,
                           const Tensor<float>& z_d, int64_t zdim, Rng& latent_rng,
                           Rng& penalty_rng, Rng& noise_rng) {
  GanStepOut out;
  const DFunc<float> dfunc = [&](Tape<float>& t, const Tensor<float>& x) {
    return pair.disc.forward(t, x, true);
  };

  Tensor<float> fake;
  {
    Tape<float> tg;
    NoRecordGuard<float> ng(tg);
    fake = pair.gen.forward(tg, z_d, true);
  }
  Tensor<float> real = real_in;
  if (cfg.disc_input_noise_std > 0.0) {
    real = with_noise(real, cfg.disc_input_noise_std, noise_rng);
    fake = with_noise(fake, cfg.disc_input_noise_std, noise_rng);
  }
  {
    Tape<float> tp;
    auto d_real = pair.disc.forward(tp, real, true);
    auto d_fake = pair.disc.forward(tp, fake, true);
    auto [lg, ld] = gan_loss(tp, d_real, d_fake, cfg.loss);
    (void)lg;
    auto total = muls(tp, ld, cfg.loss.lambda_adv);
    if (cfg.loss.kind == GanLoss::wgan_gp) {
      auto pen = gradient_penalty_wgan_gp(tp, dfunc, real, fake, penalty_rng);
      out.gp_term = static_cast<double>(pen.v()[0]);
      total = add(tp, total, muls(tp, pen, cfg.loss.lambda_gp));
    } else if (cfg.loss.kind == GanLoss::dragan) {
      auto pen = gradient_penalty_dragan(tp, dfunc, real, penalty_rng);
      out.gp_term = static_cast<double>(pen.v()[0]);
      total = add(tp, total, muls(tp, pen, cfg.loss.lambda_gp));
    }
    backward(total);
    d_opt.step(pair.disc.params);
    zero_grads(pair.disc.params);
    zero_grads(pair.gen.params);
    out.d_loss = static_cast<double>(total.v()[0]);
  }
  if (cfg.loss.kind == GanLoss::wgan) weight_clip(pair.disc.params, cfg.loss.clip_threshold);

  for (int64_t i = 0; i < cfg.k; ++i) {
    Tape<float> tp;
    auto z = sample_latents<float>(cfg.latent_kind, cfg.batch_size, zdim, latent_rng);
    auto fk = pair.gen.forward(tp, z, true);
    if (cfg.disc_input_noise_std > 0.0)
      fk = add(tp, fk, noise_like(fk, cfg.disc_input_noise_std, noise_rng));
    auto d_out = pair.disc.forward(tp, fk, true);
    auto lg = muls(tp, gan_g_loss(tp, cfg.loss.kind, d_out), cfg.loss.lambda_adv);
    backward(lg);
    g_opt.step(pair.gen.params);
    zero_grads(pair.gen.params);
    zero_grads(pair.disc.params);
    out.g_loss = static_cast<double>(lg.v()[0]);
  }
  return out;
}

}  // namespace detail

inline RunReport train_gan(const ExperimentConfig& cfg, const std::string& resume_from = "") {
  if (cfg.arch != "dcgan" && cfg.arch != "srresgan")
    throw TensorError("train_gan: arch must be dcgan or srresgan");
  if (cfg.loss_kind == "dice" || cfg.loss_kind == "bce")
    throw TensorError("train_gan: loss.kind must be adversarial");
  if (cfg.data_range != Range::sym_one)
    throw TensorError("train_gan: adversarial training needs data.range = -1,1 to match the "
                      "tanh output");

  write_resolved_config(cfg);
  const std::filesystem::path out(cfg.out_dir);
  auto corpus = make_corpus(cfg);

  GanPair<float> pair;
  int64_t zdim = 0, res = 0;
  if (cfg.arch == "dcgan") {
    pair = build_dcgan<float>(cfg.dcgan_latent, cfg.dcgan_base_res, cfg.dcgan_target_res,
                              cfg.dcgan_base_ch, cfg.dcgan_disc_ch, cfg.init, cfg.seed);
    zdim = cfg.dcgan_latent;
    res = cfg.dcgan_target_res;
  } else {
    pair = build_srresgan<float>(cfg.srres_latent, cfg.srres_n_res, cfg.srres_target_res,
                                 cfg.srres_gf, cfg.srres_df, cfg.init, cfg.seed);
    zdim = cfg.srres_latent;
    res = cfg.srres_target_res;
  }
  if (corpus.h() != res || corpus.w() != res)
    throw TensorError("train_gan: corpus is " + std::to_string(corpus.h()) + "x" +
                      std::to_string(corpus.w()) + " but the generator emits " +
                      std::to_string(res) + "x" + std::to_string(res));
  if (gan_loss_linear_head(cfg.loss.kind)) flatten_disc_head(pair.disc);

  Adam<float> g_opt(cfg.g_lr, cfg.beta1), d_opt(cfg.d_lr, cfg.beta1);
  const bool aug_on = detail::profile_active(cfg.aug);
  BatchStream stream(corpus, cfg.batch_size, Rng::derive_seed(cfg.seed, "batches"),
                     cfg.steps_per_epoch, aug_on ? &cfg.aug : nullptr);
  Rng latent_rng(Rng::derive(cfg.seed, "latent"));
  Rng penalty_rng(Rng::derive(cfg.seed, "penalty"));
  Rng noise_rng(Rng::derive(cfg.seed, "noise"));
  Rng sample_rng(Rng::derive(cfg.seed, "samples"));
  const auto grid_z = sample_latents<float>(cfg.latent_kind, 16, zdim, sample_rng);

  RunProgress pr;
  RunReport rep;
  rep.log_path = (out / "train.csv").string();
  rep.checkpoint_path = (out / "last.ckpt").string();

  const bool fresh = resume_from.empty();
  if (!fresh) {
    auto ck = Checkpoint::read(resume_from);
    pr = parse_progress(ck.text_of("__progress__"));
    ck.bind_params(pair.gen.params);
    ck.bind_params(pair.disc.params);
    ck.bind_adam("g", g_opt, pair.gen.params);
    ck.bind_adam("d", d_opt, pair.disc.params);
    latent_rng = ck.restore_rng("latent");
    penalty_rng = ck.restore_rng("penalty");
    noise_rng = ck.restore_rng("noise");
    stream.restore(ck.restore_rng("batches").state(), pr.stream_epoch, pr.stream_step);
  }
  std::ofstream csv(rep.log_path, fresh ? std::ios::trunc : std::ios::app);
  if (!csv) throw TensorError("cannot write " + rep.log_path);
  if (fresh) csv << "step,epoch,d_loss,g_loss,gp_term,wall_ms\n";

  DivergenceMonitor monitor;
  const int64_t spe = stream.batches_per_epoch();
  for (int64_t epoch = pr.epoch; epoch < cfg.epochs && !rep.diverged; ++epoch) {
    for (int64_t s = 0; s < spe; ++s) {
      const auto t0 = std::chrono::steady_clock::now();
      try {
        Batch rb = stream.next();
        auto z = sample_latents<float>(cfg.latent_kind, cfg.batch_size, zdim, latent_rng);
        auto so = detail::gan_step(cfg, pair, g_opt, d_opt, rb.images, z, zdim, latent_rng,
                                   penalty_rng, noise_rng);
        ++pr.step;
        rep.final_d_loss = so.d_loss;
        rep.final_g_loss = so.g_loss;
        const double wall_ms = cfg.timing ? 1000.0 * detail::seconds_since(t0) : 0.0;
        csv << pr.step << ',' << epoch + 1 << ',' << detail::csv_num(so.d_loss) << ','
            << detail::csv_num(so.g_loss) << ',' << detail::csv_num(so.gp_term) << ','
            << detail::csv_num(wall_ms) << "\n";
        const auto why = monitor.observe(so.d_loss, so.g_loss);
        if (!why.empty()) {
          rep.diverged = true;
          rep.divergence_reason = why;
        }
      } catch (const std::runtime_error& e) {
        rep.diverged = true;
        rep.divergence_reason = e.what();
      }
      if (rep.diverged) break;
    }
    if (rep.diverged) break;
    pr.epoch = epoch + 1;
    pr.stream_epoch = stream.epoch();
    pr.stream_step = stream.step_in_epoch();
    if (cfg.sample_every > 0 && (epoch + 1) % cfg.sample_every == 0)
      detail::save_sample_grid(
          pair.gen, grid_z, (out / ("samples_epoch" + std::to_string(epoch + 1) + ".pgm")).string());
    detail::write_gan_checkpoint(rep.checkpoint_path, cfg, pr, pair, g_opt, d_opt,
                                 stream.rng(), latent_rng, penalty_rng, noise_rng);
    if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0)
      detail::write_gan_checkpoint((out / ("epoch_" + std::to_string(epoch + 1) + ".ckpt")).string(),
                                   cfg, pr, pair, g_opt, d_opt, stream.rng(), latent_rng,
                                   penalty_rng, noise_rng);
  }
  rep.steps = pr.step;
  return rep;
}

// --- segmentation training ---------------------------------------------------

namespace detail {

struct ValScores {
  double loss = 0.0, dice = 0.0, accuracy = 0.0;
};

// Per-image forward passes in eval mode: batch statistics never leak between
// validation samples, and running statistics stay untouched.
inline ValScores run_validation(Model<float>& model, const ImageCorpus& val,
                                const std::string& loss_kind) {
  ValScores v;
  Confusion agg;
  const int64_t h = val.h(), w = val.w();
  for (int64_t i = 0; i < val.size(); ++i) {
    auto x = Tensor<float>::from({1, 1, h, w}, val.images[static_cast<size_t>(i)].v());
    auto t = Tensor<float>::from({1, 1, h, w}, val.masks[static_cast<size_t>(i)].v());
    Tape<float> tp;
    NoRecordGuard<float> nr(tp);
    auto p = model.forward(tp, x, false);
    auto l = loss_kind == "dice" ? dice_loss(tp, p, t) : bce(tp, p, t);
    v.loss += static_cast<double>(l.v()[0]);
    const auto c = confusion(p, t);
    agg.tp += c.tp;
    agg.tn += c.tn;
    agg.fp += c.fp;
    agg.fn += c.fn;
    // an empty prediction of an empty mask counts as a perfect overlap
    v.dice += (c.tp + c.fp + c.fn) == 0 ? 1.0 : dice_coefficient(p, t);
  }
  v.loss /= static_cast<double>(val.size());
  v.dice /= static_cast<double>(val.size());
  v.accuracy = accuracy(agg);
  return v;
}

inline void write_seg_checkpoint(const std::string& path, const ExperimentConfig& cfg,
                                 const RunProgress& pr, Model<float>& model,
                                 const Adam<float>& opt, const Rng& batches, const Rng& dropout) {
  Checkpoint ck;
  ck.set_meta(config_text(cfg));
  ck.add_text("__progress__", progress_text(pr));
  ck.add_params(model.params);
  ck.add_adam("opt", opt, model.params);
  ck.add_rng("batches", batches);
  ck.add_rng("dropout", dropout);
  ck.write(path);
}

}  // namespace detail

inline RunReport train_segmentation(const ExperimentConfig& cfg,
                                    const std::string& resume_from = "") {
  if (cfg.arch != "unet") throw TensorError("train_segmentation: arch must be unet");
  if (cfg.loss_kind != "dice" && cfg.loss_kind != "bce")
    throw TensorError("train_segmentation: loss.kind must be dice or bce");
  if (cfg.data_range != Range::zero_one)
    throw TensorError("train_segmentation: segmentation expects data.range = 0,1");

  write_resolved_config(cfg);
  const std::filesystem::path out(cfg.out_dir);
  auto corpus = make_corpus(cfg);
  if (corpus.masks.empty()) throw TensorError("train_segmentation: corpus has no masks");
  const auto split = split_two_thirds(corpus.size());
  auto train_set = subset(corpus, split.train);
  auto val_set = subset(corpus, split.test);

  auto model = build_unet<float>(cfg.unet_filters, cfg.unet_bn, cfg.unet_dropout, cfg.init,
                                 cfg.seed, corpus.h());
  Adam<float> opt(cfg.lr, cfg.beta1);
  const bool aug_on = detail::profile_active(cfg.aug);
  BatchStream stream(train_set, cfg.batch_size, Rng::derive_seed(cfg.seed, "batches"),
                     cfg.steps_per_epoch, aug_on ? &cfg.aug : nullptr);
  Rng drop_rng(Rng::derive(cfg.seed, "dropout"));

  RunProgress pr;
  RunReport rep;
  rep.log_path = (out / "train.csv").string();
  rep.checkpoint_path = (out / "best.ckpt").string();
  const std::string last_path = (out / "last.ckpt").string();

  const bool fresh = resume_from.empty();
  if (!fresh) {
    auto ck = Checkpoint::read(resume_from);
    pr = parse_progress(ck.text_of("__progress__"));
    ck.bind_params(model.params);
    ck.bind_adam("opt", opt, model.params);
    drop_rng = ck.restore_rng("dropout");
    stream.restore(ck.restore_rng("batches").state(), pr.stream_epoch, pr.stream_step);
    rep.best_val_loss = pr.best_val_loss;
  }
  std::ofstream csv(rep.log_path, fresh ? std::ios::trunc : std::ios::app);
  if (!csv) throw TensorError("cannot write " + rep.log_path);
  if (fresh) csv << "epoch,train_loss,val_loss,val_dice,val_accuracy,wall_ms\n";

  const int64_t spe = stream.batches_per_epoch();
  for (int64_t epoch = pr.epoch; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    double train_loss = 0.0;
    try {
      for (int64_t s = 0; s < spe; ++s) {
        Batch b = stream.next();
        Tape<float> tp;
        auto p = model.forward(tp, b.images, true, &drop_rng);
        auto loss = cfg.loss_kind == "dice" ? dice_loss(tp, p, b.masks) : bce(tp, p, b.masks);
        backward(loss);
        opt.step(model.params);
        zero_grads(model.params);
        train_loss += static_cast<double>(loss.v()[0]);
        ++pr.step;
      }
    } catch (const std::runtime_error& e) {
      rep.diverged = true;
      rep.divergence_reason = e.what();
      break;
    }
    train_loss /= static_cast<double>(spe);
    const auto v = detail::run_validation(model, val_set, cfg.loss_kind);
    const double wall_ms = cfg.timing ? 1000.0 * detail::seconds_since(t0) : 0.0;
    csv << epoch + 1 << ',' << detail::csv_num(train_loss) << ',' << detail::csv_num(v.loss)
        << ',' << detail::csv_num(v.dice) << ',' << detail::csv_num(v.accuracy) << ','
        << detail::csv_num(wall_ms) << "\n";

    pr.epoch = epoch + 1;
    pr.stream_epoch = stream.epoch();
    pr.stream_step = stream.step_in_epoch();
    if (v.loss < rep.best_val_loss) {
      rep.best_val_loss = v.loss;
      pr.best_val_loss = v.loss;
      detail::write_seg_checkpoint(rep.checkpoint_path, cfg, pr, model, opt, stream.rng(),
                                   drop_rng);
    }
    detail::write_seg_checkpoint(last_path, cfg, pr, model, opt, stream.rng(), drop_rng);
  }
  rep.steps = pr.step;

  // Report the scores of the checkpoint that will be used downstream: reload
  // the best weights and measure them once more.
  if (!rep.diverged && std::filesystem::exists(rep.checkpoint_path)) {
    auto best = Checkpoint::read(rep.checkpoint_path);
    best.bind_params(model.params);
    const auto v = detail::run_validation(model, val_set, cfg.loss_kind);
    rep.val_dice = v.dice;
    rep.val_accuracy = v.accuracy;
  }
  return rep;
}

// --- progressive training ----------------------------------------------------

struct StagePlan {
  int64_t res = 4;
  bool transition = false;
  int64_t epochs = 1;
  std::string label;
};

// 4x4 stabilization, then fade + stabilize per doubling up to the target.
inline std::vector<StagePlan> progressive_plan(const ExperimentConfig& cfg) {
  std::vector<StagePlan> plan;
  plan.push_back({4, false, cfg.prog_stage_epochs, "4"});
  for (int64_t r = 8; r <= cfg.progan_target_res; r *= 2) {
    plan.push_back({r, true, cfg.prog_transition_epochs, std::to_string(r) + "t"});
    plan.push_back({r, false, cfg.prog_stage_epochs, std::to_string(r)});
  }
  return plan;
}

namespace detail {

inline void adopt_params(std::vector<Param<float>>& dst, const std::vector<Param<float>>& src) {
  std::unordered_map<std::string, const Param<float>*> by_name;
  for (const auto& p : src) by_name[p.name] = &p;
  for (auto& p : dst) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) continue;
    if (it->second->t.shape() != p.t.shape())
      throw TensorError("progressive: parameter '" + p.name + "' changed shape between stages");
    p.t.v() = it->second->t.v();
  }
}

inline Tensor<float> pool_to(const Tensor<float>& batch, int64_t res) {
  Tape<float> tp;
  NoRecordGuard<float> nr(tp);
  auto x = batch;
  while (x.dim(2) > res) x = avgpool2(tp, x);
  return x;
}

}  // namespace detail

inline RunReport train_progressive(const ExperimentConfig& cfg,
                                   const std::string& resume_from = "") {
  if (cfg.arch != "progan") throw TensorError("train_progressive: arch must be progan");
  if (cfg.loss_kind == "dice" || cfg.loss_kind == "bce")
    throw TensorError("train_progressive: loss.kind must be adversarial");
  if (cfg.data_range != Range::sym_one)
    throw TensorError("train_progressive: adversarial training needs data.range = -1,1");

  write_resolved_config(cfg);
  const std::filesystem::path out(cfg.out_dir);
  auto corpus = make_corpus(cfg);
  if (corpus.h() != cfg.progan_target_res || corpus.w() != cfg.progan_target_res)
    throw TensorError("train_progressive: corpus is " + std::to_string(corpus.h()) + "x" +
                      std::to_string(corpus.w()) + " but progan.target_res is " +
                      std::to_string(cfg.progan_target_res));

  const auto plan = progressive_plan(cfg);
  Adam<float> g_opt(cfg.g_lr, cfg.beta1), d_opt(cfg.d_lr, cfg.beta1);
  Rng latent_rng(Rng::derive(cfg.seed, "latent"));
  Rng penalty_rng(Rng::derive(cfg.seed, "penalty"));
  Rng noise_rng(Rng::derive(cfg.seed, "noise"));

  RunProgress pr;
  RunReport rep;
  rep.log_path = (out / "train.csv").string();
  rep.checkpoint_path = (out / "last.ckpt").string();

  GanPair<float> prev;  // completed stage, donor for the next one
  const bool fresh = resume_from.empty();
  if (!fresh) {
    auto ck = Checkpoint::read(resume_from);
    pr = parse_progress(ck.text_of("__progress__"));
    if (pr.stage < 1 || pr.stage > int64_t(plan.size()))
      throw TensorError("train_progressive: checkpoint stage does not fit the schedule");
    const auto& done = plan[static_cast<size_t>(pr.stage - 1)];
    prev = build_progan<float>(ProGANStage{done.res, done.transition, 1.0}, cfg.progan_latent,
                               cfg.progan_target_res, cfg.progan_ch_max, cfg.progan_ch_min,
                               cfg.init, cfg.seed);
    ck.bind_params(prev.gen.params);
    ck.bind_params(prev.disc.params);
    ck.bind_adam("g", g_opt, prev.gen.params);
    ck.bind_adam("d", d_opt, prev.disc.params);
    latent_rng = ck.restore_rng("latent");
    penalty_rng = ck.restore_rng("penalty");
    noise_rng = ck.restore_rng("noise");
  }
  std::ofstream csv(rep.log_path, fresh ? std::ios::trunc : std::ios::app);
  std::ofstream stagecsv((out / "stages.csv").string(), fresh ? std::ios::trunc : std::ios::app);
  if (!csv || !stagecsv) throw TensorError("cannot write logs under " + cfg.out_dir);
  if (fresh) {
    csv << "step,epoch,d_loss,g_loss,gp_term,wall_ms\n";
    stagecsv << "stage,resolution,transition,steps,wall_seconds\n";
  }

  DivergenceMonitor monitor;
  for (size_t si = static_cast<size_t>(pr.stage); si < plan.size() && !rep.diverged; ++si) {
    const auto& st = plan[si];
    auto pair = build_progan<float>(ProGANStage{st.res, st.transition, st.transition ? 0.0 : 1.0},
                                    cfg.progan_latent, cfg.progan_target_res, cfg.progan_ch_max,
                                    cfg.progan_ch_min, cfg.init, cfg.seed);
    if (gan_loss_linear_head(cfg.loss.kind)) flatten_disc_head(pair.disc);
    if (prev.gen.params.size() > 0 || prev.disc.params.size() > 0) {
      detail::adopt_params(pair.gen.params, prev.gen.params);
      detail::adopt_params(pair.disc.params, prev.disc.params);
    }

    const bool aug_on = detail::profile_active(cfg.aug);
    BatchStream stream(corpus, cfg.batch_size, Rng::derive_seed(cfg.seed, "batches@" + st.label),
                       cfg.steps_per_epoch, aug_on ? &cfg.aug : nullptr);
    const int64_t spe = stream.batches_per_epoch();
    const int64_t T = st.epochs * spe;
    const auto stage_t0 = std::chrono::steady_clock::now();
    int64_t stage_steps = 0;

    for (int64_t s = 0; s < T; ++s) {
      // alpha runs 0 -> 1 across the whole fade stage, hitting both ends
      const double alpha = st.transition ? (T > 1 ? double(s) / double(T - 1) : 1.0) : 1.0;
      pair.gen.alpha = alpha;
      pair.disc.alpha = alpha;
      const auto t0 = std::chrono::steady_clock::now();
      try {
        Batch rb = stream.next();
        auto real = detail::pool_to(rb.images, st.res);
        if (st.transition) {
          // the discriminator's real view fades in step with the generator
          Tape<float> tp;
          NoRecordGuard<float> nr(tp);
          auto coarse = upsample2(tp, avgpool2(tp, real));
          auto blended = Tensor<float>::zeros(real.shape());
          for (size_t i = 0; i < blended.v().size(); ++i)
            blended.v()[i] = static_cast<float>(alpha * real.v()[i] +
                                                (1.0 - alpha) * coarse.v()[i]);
          real = blended;
        }
        auto z = sample_latents<float>(cfg.latent_kind, cfg.batch_size, cfg.progan_latent,
                                       latent_rng);
        auto so = detail::gan_step(cfg, pair, g_opt, d_opt, real, z, cfg.progan_latent,
                                   latent_rng, penalty_rng, noise_rng);
        ++pr.step;
        ++stage_steps;
        rep.final_d_loss = so.d_loss;
        rep.final_g_loss = so.g_loss;
        const double wall_ms = cfg.timing ? 1000.0 * detail::seconds_since(t0) : 0.0;
        csv << pr.step << ',' << s / spe + 1 << ',' << detail::csv_num(so.d_loss) << ','
            << detail::csv_num(so.g_loss) << ',' << detail::csv_num(so.gp_term) << ','
            << detail::csv_num(wall_ms) << "\n";
        const auto why = monitor.observe(so.d_loss, so.g_loss);
        if (!why.empty()) {
          rep.diverged = true;
          rep.divergence_reason = why;
        }
      } catch (const std::runtime_error& e) {
        rep.diverged = true;
        rep.divergence_reason = e.what();
      }
      if (rep.diverged) break;
    }

    const double stage_wall = detail::seconds_since(stage_t0);
    rep.stage_labels.push_back(st.label);
    rep.stage_wall_seconds.push_back(stage_wall);
    stagecsv << st.label << ',' << st.res << ',' << (st.transition ? "true" : "false") << ','
             << stage_steps << ',' << detail::csv_num(cfg.timing ? stage_wall : 0.0) << "\n";
    if (rep.diverged) break;

    pair.gen.alpha = 1.0;
    pair.disc.alpha = 1.0;
    pr.stage = int64_t(si) + 1;
    pr.stage_res = st.res;
    pr.transition = st.transition;
    detail::write_gan_checkpoint(rep.checkpoint_path, cfg, pr, pair, g_opt, d_opt, stream.rng(),
                                 latent_rng, penalty_rng, noise_rng);
    detail::write_gan_checkpoint((out / ("stage_" + st.label + ".ckpt")).string(), cfg, pr, pair,
                                 g_opt, d_opt, stream.rng(), latent_rng, penalty_rng, noise_rng);
    prev = std::move(pair);
  }
  rep.steps = pr.step;
  return rep;
}

// --- checkpoint-driven evaluation ---------------------------------------------

namespace detail {

// Rebuild the generator a checkpoint was written from and bind its weights.
// Parameters stay zero-filled until bound, so the build is cheap.
inline Model<float> generator_from_checkpoint(const Checkpoint& ck, const ExperimentConfig& cfg,
                                              int64_t* zdim_out) {
  Model<float> gen;
  int64_t zdim = 0;
  if (cfg.arch == "dcgan") {
    gen = build_dcgan<float>(cfg.dcgan_latent, cfg.dcgan_base_res, cfg.dcgan_target_res,
                             cfg.dcgan_base_ch, cfg.dcgan_disc_ch, cfg.init, cfg.seed, false)
              .gen;
    zdim = cfg.dcgan_latent;
  } else if (cfg.arch == "srresgan") {
    gen = build_srresgan<float>(cfg.srres_latent, cfg.srres_n_res, cfg.srres_target_res,
                                cfg.srres_gf, cfg.srres_df, cfg.init, cfg.seed, false)
              .gen;
    zdim = cfg.srres_latent;
  } else if (cfg.arch == "progan") {
    const auto pr = parse_progress(ck.text_of("__progress__"));
    if (pr.stage_res < 4)
      throw TensorError("checkpoint records no completed progressive stage");
    gen = build_progan<float>(ProGANStage{pr.stage_res, pr.transition, 1.0}, cfg.progan_latent,
                              cfg.progan_target_res, cfg.progan_ch_max, cfg.progan_ch_min,
                              cfg.init, cfg.seed, false)
              .gen;
    zdim = cfg.progan_latent;
  } else {
    throw TensorError("not a generator checkpoint (arch is " + cfg.arch + ")");
  }
  ck.bind_params(gen.params);
  if (zdim_out) *zdim_out = zdim;
  return gen;
}

// Generated rows mapped from the tanh range onto [0,1], batches of <= 32.
inline Tensor<double> generate_rows(Model<float>& gen, int64_t n, const std::string& latent_kind,
                                    int64_t zdim, Rng& rng) {
  std::vector<double> rows;
  int64_t d = 0;
  for (int64_t at = 0; at < n; at += 32) {
    const int64_t b = std::min<int64_t>(32, n - at);
    auto z = sample_latents<float>(latent_kind, b, zdim, rng);
    Tape<float> tp;
    NoRecordGuard<float> nr(tp);
    auto img = gen.forward(tp, z, false);
    d = img.size() / b;
    for (int64_t i = 0; i < img.size(); ++i)
      rows.push_back(0.5 * (static_cast<double>(img.v()[static_cast<size_t>(i)]) + 1.0));
  }
  return Tensor<double>::from({n, d}, std::move(rows));
}

}  // namespace detail

// Scores a generator checkpoint against a reference corpus. `corpus_spec` is
// "train" (rebuild the training corpus recorded in the checkpoint), a
// directory of PGM files, or a manifest file. Returns the filled report; the
// wall time stays zero unless `timed`.
inline GenEvalReport cmd_evaluate(const std::string& ckpt_path, const std::string& corpus_spec,
                                  int64_t n_gen, uint64_t seed, bool timed = false) {
  const auto ck = Checkpoint::read(ckpt_path);
  const auto cfg = parse_config_text(ck.meta_text(), ckpt_path + ": stored config");
  int64_t zdim = 0;
  auto gen = detail::generator_from_checkpoint(ck, cfg, &zdim);

  ImageCorpus corpus;
  if (corpus_spec == "train") {
    corpus = make_corpus(cfg);
  } else if (std::filesystem::is_directory(corpus_spec)) {
    corpus = load_corpus_dir(corpus_spec);
  } else {
    corpus = load_corpus_manifest(corpus_spec);
  }
  if (corpus.range != Range::zero_one) corpus = rescale_corpus(corpus, Range::zero_one);
  if (corpus.size() < 16)
    throw TensorError("evaluate: the realism basis needs at least 16 reference images");

  int64_t gres = 0;
  {
    Tape<float> tp;
    NoRecordGuard<float> nr(tp);
    Rng probe_rng(Rng::derive(seed, "probe"));
    auto z = sample_latents<float>(cfg.latent_kind, 1, zdim, probe_rng);
    gres = gen.forward(tp, z, false).dim(2);
  }
  if (corpus.h() < gres || corpus.h() != corpus.w())
    throw TensorError("evaluate: reference corpus is " + std::to_string(corpus.h()) + "x" +
                      std::to_string(corpus.w()) + ", generator emits " + std::to_string(gres) +
                      "x" + std::to_string(gres));
  auto ref_rows = [&] {
    if (corpus.h() == gres) return flatten_rows(corpus);
    // compare at the generator's scale (mid-training progressive stages)
    const int64_t n = corpus.size();
    auto batch = Tensor<float>::zeros({n, 1, corpus.h(), corpus.w()});
    for (int64_t i = 0; i < n; ++i)
      std::copy(corpus.images[static_cast<size_t>(i)].v().begin(),
                corpus.images[static_cast<size_t>(i)].v().end(),
                batch.v().begin() + i * corpus.h() * corpus.w());
    return flatten_rows(detail::pool_to(batch, gres));
  }();

  const auto t0 = std::chrono::steady_clock::now();
  const auto fit = fit_realism(ref_rows, 16);
  if (n_gen <= 0) n_gen = corpus.size();
  Rng gen_rng(Rng::derive(seed, "evalgen"));
  auto gen_rows = detail::generate_rows(gen, n_gen, cfg.latent_kind, zdim, gen_rng);
  auto rep = evaluate_generated(fit, gen_rows, cfg.arch + "+" + cfg.loss_kind,
                                timed ? detail::seconds_since(t0) : 0.0);
  return rep;
}

// Renders interpolation strips between random latent pairs into
// out_dir/interp_<p>.pgm; endpoints are the untouched generator outputs.
inline std::vector<std::string> cmd_interpolate(const std::string& ckpt_path, int64_t pairs,
                                                int64_t steps, uint64_t seed,
                                                const std::string& out_dir) {
  if (pairs < 1) throw TensorError("interpolate: need at least one pair");
  const auto ck = Checkpoint::read(ckpt_path);
  const auto cfg = parse_config_text(ck.meta_text(), ckpt_path + ": stored config");
  int64_t zdim = 0;
  auto gen = detail::generator_from_checkpoint(ck, cfg, &zdim);
  const bool renorm = cfg.latent_kind == "normal_normalized";

  std::filesystem::create_directories(out_dir);
  Rng rng(Rng::derive(seed, "interp"));
  auto zs = sample_latents<float>(cfg.latent_kind, 2 * pairs, zdim, rng);
  std::vector<std::string> out_paths;
  for (int64_t p = 0; p < pairs; ++p) {
    auto take = [&](int64_t row) {
      std::vector<float> v(zs.v().begin() + row * zdim, zs.v().begin() + (row + 1) * zdim);
      return Tensor<float>::from({1, zdim, 1, 1}, std::move(v));
    };
    auto frames = latent_interpolate(gen, take(2 * p), take(2 * p + 1), int(steps), renorm);
    const int64_t h = frames[0].dim(2), w = frames[0].dim(3);
    auto strip = Tensor<float>::zeros({h, int64_t(frames.size()) * w});
    for (size_t f = 0; f < frames.size(); ++f)
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
          const float v = frames[f].v()[static_cast<size_t>(y * w + x)];
          strip.v()[static_cast<size_t>(y * int64_t(frames.size()) * w + int64_t(f) * w + x)] =
              std::min(1.0f, std::max(0.0f, 0.5f * (v + 1.0f)));
        }
    const auto path =
        (std::filesystem::path(out_dir) / ("interp_" + std::to_string(p) + ".pgm")).string();
    save_pgm(strip, path, 16);
    out_paths.push_back(path);
  }
  return out_paths;
}

}  // namespace mrgf
