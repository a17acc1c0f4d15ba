#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mrgf/data.hpp"
#include "mrgf/losses.hpp"
#include "mrgf/optim.hpp"

namespace mrgf {

// Fully-resolved run description. Every field has a concrete value after
// parsing so the echoed copy in the output directory reproduces the run.
struct ExperimentConfig {
  std::string arch = "dcgan";  // unet | dcgan | srresgan | progan
  uint64_t seed = 1;
  std::string out_dir = "runs/exp";
  int64_t epochs = 1;
  int64_t batch_size = 8;
  int64_t steps_per_epoch = 0;  // 0: floor(N / batch) per epoch
  int64_t k = 1;                // generator steps per discriminator step
  Init init = Init::normal_002;
  std::string latent_kind = "uniform";  // uniform | normal | normal_normalized
  std::string loss_kind = "gan";        // adversarial kinds, or dice | bce for segmentation
  LossSpec loss;                        // resolved adversarial spec
  double lr = 0.0002, beta1 = 0.5;
  double g_lr = 0.0002, d_lr = 0.0002;
  AugmentProfile aug;
  std::string data_source = "blobs";  // blobs | dir | manifest
  std::string data_path;
  Range data_range = Range::zero_one;
  int64_t data_n = 200, data_res = 32, data_modes = 2;
  int64_t unet_filters = 32;
  bool unet_bn = true;
  double unet_dropout = 0.0;
  int64_t dcgan_latent = 256, dcgan_base_res = 8, dcgan_target_res = 256;
  int64_t dcgan_base_ch = 256, dcgan_disc_ch = 64;
  int64_t srres_latent = 256, srres_n_res = 16, srres_target_res = 256;
  int64_t srres_gf = 64, srres_df = 32;
  int64_t progan_latent = 512, progan_target_res = 256;
  int64_t progan_ch_max = 512, progan_ch_min = 16;
  int64_t prog_stage_epochs = 1, prog_transition_epochs = 1;
  double disc_input_noise_std = 0.0;
  bool timing = false;  // true: real wall_ms in logs (forfeits bitwise determinism)
  int64_t sample_every = 0;
  int64_t checkpoint_every = 0;  // extra numbered checkpoints every N epochs
};

namespace detail {

struct KvLine {
  std::string key, value;
  int line = 0;
};

// `key = value` lines, '#' comments, blanks skipped. Shared by the config
// parser and checkpoint metadata.
inline std::vector<KvLine> parse_kv_text(const std::string& text, const std::string& origin) {
  std::vector<KvLine> out;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  auto trim = [](std::string s) {
    size_t a = s.find_first_not_of(" \t\r");
    size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    if (trim(raw).empty()) continue;
    const auto eq = raw.find('=');
    if (eq == std::string::npos)
      throw TensorError(origin + ": line " + std::to_string(line) + ": expected 'key = value'");
    KvLine kv{trim(raw.substr(0, eq)), trim(raw.substr(eq + 1)), line};
    if (kv.key.empty())
      throw TensorError(origin + ": line " + std::to_string(line) + ": empty key");
    out.push_back(std::move(kv));
  }
  return out;
}

// Typed key consumption; whatever is left over at the end is unknown.
class KvReader {
 public:
  KvReader(const std::string& text, std::string origin) : origin_(std::move(origin)) {
    for (auto& kv : parse_kv_text(text, origin_)) {
      if (map_.count(kv.key))
        throw TensorError(origin_ + ": line " + std::to_string(kv.line) + ": duplicate key '" +
                          kv.key + "'");
      map_[kv.key] = kv;
    }
  }

  bool has(const std::string& key) const { return map_.count(key) != 0; }

  std::string str(const std::string& key, const std::string& dflt) {
    auto it = map_.find(key);
    if (it == map_.end()) return dflt;
    auto v = it->second.value;
    map_.erase(it);
    return v;
  }

  int64_t integer(const std::string& key, int64_t dflt) {
    auto it = map_.find(key);
    if (it == map_.end()) return dflt;
    try {
      size_t used = 0;
      const int64_t v = std::stoll(it->second.value, &used);
      if (used != it->second.value.size()) throw std::invalid_argument("");
      map_.erase(it);
      return v;
    } catch (...) {
      fail(key, "an integer");
    }
  }

  double real(const std::string& key, double dflt) {
    auto it = map_.find(key);
    if (it == map_.end()) return dflt;
    try {
      size_t used = 0;
      const double v = std::stod(it->second.value, &used);
      if (used != it->second.value.size()) throw std::invalid_argument("");
      map_.erase(it);
      return v;
    } catch (...) {
      fail(key, "a number");
    }
  }

  bool boolean(const std::string& key, bool dflt) {
    auto it = map_.find(key);
    if (it == map_.end()) return dflt;
    const auto& v = it->second.value;
    if (v != "true" && v != "false") fail(key, "'true' or 'false'");
    map_.erase(it);
    return v == "true";
  }

  void reject_unknown() const {
    if (map_.empty()) return;
    const auto& kv = map_.begin()->second;
    throw TensorError(origin_ + ": line " + std::to_string(kv.line) + ": unknown key '" + kv.key +
                      "'");
  }

 private:
  [[noreturn]] void fail(const std::string& key, const std::string& want) const {
    const auto& kv = map_.at(key);
    throw TensorError(origin_ + ": line " + std::to_string(kv.line) + ": key '" + key +
                      "' expects " + want + ", got '" + kv.value + "'");
  }

  std::string origin_;
  std::map<std::string, KvLine> map_;
};

// Shortest decimal form that parses back to the same double.
inline std::string fmt_double(double v) {
  char buf[64];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

}  // namespace detail

inline ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
  detail::KvReader kv(text, origin);
  ExperimentConfig c;

  c.arch = kv.str("arch", c.arch);
  if (c.arch != "unet" && c.arch != "dcgan" && c.arch != "srresgan" && c.arch != "progan")
    throw TensorError(origin + ": arch must be unet, dcgan, srresgan, or progan");
  // Defaults that track the architecture's canonical training recipe. The
  // resolved values are echoed, so a run directory always shows what applied.
  if (c.arch == "unet") {
    c.init = Init::he_normal_fanin;
    c.loss_kind = "dice";
    c.data_range = Range::zero_one;
    c.lr = 0.001;
    c.beta1 = 0.9;
  } else if (c.arch == "srresgan") {
    c.init = Init::he_normal_paper;
    c.latent_kind = "normal_normalized";
    c.data_range = Range::sym_one;
  } else if (c.arch == "progan") {
    c.init = Init::dynamic_scaled;
    c.latent_kind = "normal_normalized";
    c.loss_kind = "wgan_gp";
    c.loss.use_drift = true;
    c.data_range = Range::sym_one;
    c.lr = 0.001;
    c.beta1 = 0.0;
  } else {
    c.data_range = Range::sym_one;
  }
  c.g_lr = c.d_lr = c.lr;
  c.seed = uint64_t(kv.integer("seed", int64_t(c.seed)));
  c.out_dir = kv.str("out_dir", c.out_dir);
  c.epochs = kv.integer("epochs", c.epochs);
  c.batch_size = kv.integer("batch_size", c.batch_size);
  c.steps_per_epoch = kv.integer("steps_per_epoch", c.steps_per_epoch);
  c.k = kv.integer("k", c.k);
  if (c.epochs < 1) throw TensorError(origin + ": epochs must be >= 1");
  if (c.batch_size < 1) throw TensorError(origin + ": batch_size must be >= 1");
  if (c.steps_per_epoch < 0) throw TensorError(origin + ": steps_per_epoch must be >= 0");
  if (c.k < 1) throw TensorError(origin + ": k must be >= 1");

  c.init = init_from_name(kv.str("init", init_name(c.init)));
  c.latent_kind = kv.str("latent.kind", c.latent_kind);
  if (c.latent_kind != "uniform" && c.latent_kind != "normal" &&
      c.latent_kind != "normal_normalized")
    throw TensorError(origin + ": latent.kind must be uniform, normal, or normal_normalized");

  c.loss_kind = kv.str("loss.kind", c.loss_kind);
  if (c.loss_kind != "dice" && c.loss_kind != "bce") c.loss.kind = gan_loss_from_name(c.loss_kind);
  c.loss.lambda_adv = kv.real("loss.lambda_adv", c.loss.lambda_adv);
  c.loss.lambda_gp = kv.real("loss.lambda_gp", c.loss.lambda_gp);
  c.loss.one_sided_smoothing = kv.boolean("loss.smoothing", c.loss.one_sided_smoothing);
  c.loss.clip_threshold = kv.real("loss.clip", c.loss.clip_threshold);
  c.loss.use_drift = kv.boolean("loss.drift", c.loss.use_drift);
  c.loss.eps_drift = kv.real("loss.eps_drift", c.loss.eps_drift);
  if (c.loss.clip_threshold <= 0) throw TensorError(origin + ": loss.clip must be positive");

  c.lr = kv.real("opt.lr", c.lr);
  c.beta1 = kv.real("opt.beta1", c.beta1);
  c.g_lr = kv.real("opt.g.lr", c.lr);
  c.d_lr = kv.real("opt.d.lr", c.lr);

  c.aug.rot_lo = kv.real("aug.rot_lo", c.aug.rot_lo);
  c.aug.rot_hi = kv.real("aug.rot_hi", c.aug.rot_hi);
  c.aug.hflip = kv.boolean("aug.hflip", c.aug.hflip);
  c.aug.shift_frac = kv.real("aug.shift", c.aug.shift_frac);
  c.aug.zoom_frac = kv.real("aug.zoom", c.aug.zoom_frac);
  validate_profile(c.aug);

  c.data_source = kv.str("data.source", c.data_source);
  if (c.data_source != "blobs" && c.data_source != "dir" && c.data_source != "manifest")
    throw TensorError(origin + ": data.source must be blobs, dir, or manifest");
  c.data_path = kv.str("data.path", c.data_path);
  const auto range = kv.str("data.range", range_name(c.data_range));
  if (range == "0,1") c.data_range = Range::zero_one;
  else if (range == "-1,1") c.data_range = Range::sym_one;
  else throw TensorError(origin + ": data.range must be '0,1' or '-1,1'");
  c.data_n = kv.integer("data.n", c.data_n);
  c.data_res = kv.integer("data.res", c.data_res);
  c.data_modes = kv.integer("data.modes", c.data_modes);

  c.unet_filters = kv.integer("unet.filters", c.unet_filters);
  c.unet_bn = kv.boolean("unet.bn", c.unet_bn);
  c.unet_dropout = kv.real("unet.dropout", c.unet_dropout);
  c.dcgan_latent = kv.integer("dcgan.latent", c.dcgan_latent);
  c.dcgan_base_res = kv.integer("dcgan.base_res", c.dcgan_base_res);
  c.dcgan_target_res = kv.integer("dcgan.target_res", c.dcgan_target_res);
  c.dcgan_base_ch = kv.integer("dcgan.base_ch", c.dcgan_base_ch);
  c.dcgan_disc_ch = kv.integer("dcgan.disc_ch", c.dcgan_disc_ch);
  c.srres_latent = kv.integer("srresgan.latent", c.srres_latent);
  c.srres_n_res = kv.integer("srresgan.n_res", c.srres_n_res);
  c.srres_target_res = kv.integer("srresgan.target_res", c.srres_target_res);
  c.srres_gf = kv.integer("srresgan.gf", c.srres_gf);
  c.srres_df = kv.integer("srresgan.df", c.srres_df);
  c.progan_latent = kv.integer("progan.latent", c.progan_latent);
  c.progan_target_res = kv.integer("progan.target_res", c.progan_target_res);
  c.progan_ch_max = kv.integer("progan.ch_max", c.progan_ch_max);
  c.progan_ch_min = kv.integer("progan.ch_min", c.progan_ch_min);
  c.prog_stage_epochs = kv.integer("prog.stage_epochs", c.prog_stage_epochs);
  c.prog_transition_epochs = kv.integer("prog.transition_epochs", c.prog_transition_epochs);
  if (c.prog_stage_epochs < 1 || c.prog_transition_epochs < 1)
    throw TensorError(origin + ": progressive schedule epochs must be >= 1");

  c.disc_input_noise_std = kv.real("disc.input_noise_std", c.disc_input_noise_std);
  c.timing = kv.boolean("timing", c.timing);
  c.sample_every = kv.integer("sample_every", c.sample_every);
  c.checkpoint_every = kv.integer("checkpoint_every", c.checkpoint_every);

  kv.reject_unknown();
  return c;
}

inline ExperimentConfig parse_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw TensorError("parse_config: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_config_text(text, path);
}

// Canonical serialization of every resolved field; parsing it back yields
// the same config.
inline std::string config_text(const ExperimentConfig& c) {
  using detail::fmt_double;
  std::ostringstream o;
  o << "arch = " << c.arch << "\n";
  o << "seed = " << c.seed << "\n";
  o << "out_dir = " << c.out_dir << "\n";
  o << "epochs = " << c.epochs << "\n";
  o << "batch_size = " << c.batch_size << "\n";
  o << "steps_per_epoch = " << c.steps_per_epoch << "\n";
  o << "k = " << c.k << "\n";
  o << "init = " << init_name(c.init) << "\n";
  o << "latent.kind = " << c.latent_kind << "\n";
  o << "loss.kind = " << c.loss_kind << "\n";
  o << "loss.lambda_adv = " << fmt_double(c.loss.lambda_adv) << "\n";
  o << "loss.lambda_gp = " << fmt_double(c.loss.lambda_gp) << "\n";
  o << "loss.smoothing = " << (c.loss.one_sided_smoothing ? "true" : "false") << "\n";
  o << "loss.clip = " << fmt_double(c.loss.clip_threshold) << "\n";
  o << "loss.drift = " << (c.loss.use_drift ? "true" : "false") << "\n";
  o << "loss.eps_drift = " << fmt_double(c.loss.eps_drift) << "\n";
  o << "opt.lr = " << fmt_double(c.lr) << "\n";
  o << "opt.beta1 = " << fmt_double(c.beta1) << "\n";
  o << "opt.g.lr = " << fmt_double(c.g_lr) << "\n";
  o << "opt.d.lr = " << fmt_double(c.d_lr) << "\n";
  o << "aug.rot_lo = " << fmt_double(c.aug.rot_lo) << "\n";
  o << "aug.rot_hi = " << fmt_double(c.aug.rot_hi) << "\n";
  o << "aug.hflip = " << (c.aug.hflip ? "true" : "false") << "\n";
  o << "aug.shift = " << fmt_double(c.aug.shift_frac) << "\n";
  o << "aug.zoom = " << fmt_double(c.aug.zoom_frac) << "\n";
  o << "data.source = " << c.data_source << "\n";
  o << "data.path = " << c.data_path << "\n";
  o << "data.range = " << range_name(c.data_range) << "\n";
  o << "data.n = " << c.data_n << "\n";
  o << "data.res = " << c.data_res << "\n";
  o << "data.modes = " << c.data_modes << "\n";
  o << "unet.filters = " << c.unet_filters << "\n";
  o << "unet.bn = " << (c.unet_bn ? "true" : "false") << "\n";
  o << "unet.dropout = " << fmt_double(c.unet_dropout) << "\n";
  o << "dcgan.latent = " << c.dcgan_latent << "\n";
  o << "dcgan.base_res = " << c.dcgan_base_res << "\n";
  o << "dcgan.target_res = " << c.dcgan_target_res << "\n";
  o << "dcgan.base_ch = " << c.dcgan_base_ch << "\n";
  o << "dcgan.disc_ch = " << c.dcgan_disc_ch << "\n";
  o << "srresgan.latent = " << c.srres_latent << "\n";
  o << "srresgan.n_res = " << c.srres_n_res << "\n";
  o << "srresgan.target_res = " << c.srres_target_res << "\n";
  o << "srresgan.gf = " << c.srres_gf << "\n";
  o << "srresgan.df = " << c.srres_df << "\n";
  o << "progan.latent = " << c.progan_latent << "\n";
  o << "progan.target_res = " << c.progan_target_res << "\n";
  o << "progan.ch_max = " << c.progan_ch_max << "\n";
  o << "progan.ch_min = " << c.progan_ch_min << "\n";
  o << "prog.stage_epochs = " << c.prog_stage_epochs << "\n";
  o << "prog.transition_epochs = " << c.prog_transition_epochs << "\n";
  o << "disc.input_noise_std = " << fmt_double(c.disc_input_noise_std) << "\n";
  o << "timing = " << (c.timing ? "true" : "false") << "\n";
  o << "sample_every = " << c.sample_every << "\n";
  o << "checkpoint_every = " << c.checkpoint_every << "\n";
  return o.str();
}

// Echo the fully-resolved config into the run directory.
inline void write_resolved_config(const ExperimentConfig& c) {
  std::filesystem::create_directories(c.out_dir);
  const auto path = std::filesystem::path(c.out_dir) / "resolved.cfg";
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw TensorError("cannot write " + path.string());
  f << config_text(c);
}

}  // namespace mrgf
