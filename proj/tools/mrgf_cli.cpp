#include <cstdio>
#include <filesystem>
#include <string>

#include <CLI11.hpp>

#include "mrgf/train.hpp"

namespace {

// Builder knobs shared by the `params` and `shapes` subcommands.
struct ArchOpts {
  std::string arch;
  int64_t filters = 32;
  bool bn = true;
  double dropout = 0.0;
  int64_t latent = -1;  // -1: the architecture's default
  int64_t base_res = 8, target_res = 256, base_ch = 256, disc_ch = 64;
  int64_t n_res = 16, gf = 64, df = 32;
  int64_t ch_max = 512, ch_min = 16;
  int64_t stage_res = -1;  // -1: same as target_res
  bool transition = false;
};

void add_arch_options(CLI::App* cmd, ArchOpts& o) {
  cmd->add_option("arch", o.arch, "unet | dcgan | srresgan | progan")->required();
  cmd->add_option("--filters", o.filters, "unet: encoder base filter count");
  cmd->add_flag("--bn,!--no-bn", o.bn, "unet: batch normalization on the 3x3 convs");
  cmd->add_option("--dropout", o.dropout, "unet: dropout rate on the two deepest blocks");
  cmd->add_option("--latent", o.latent, "latent vector size");
  cmd->add_option("--base-res", o.base_res, "dcgan: resolution of the dense projection");
  cmd->add_option("--target-res", o.target_res, "output resolution");
  cmd->add_option("--base-ch", o.base_ch, "dcgan: generator channel width");
  cmd->add_option("--disc-ch", o.disc_ch, "dcgan: discriminator base channels");
  cmd->add_option("--n-res", o.n_res, "srresgan: residual block count");
  cmd->add_option("--gf", o.gf, "srresgan: generator filters");
  cmd->add_option("--df", o.df, "srresgan: discriminator base filters");
  cmd->add_option("--ch-max", o.ch_max, "progan: channel ceiling");
  cmd->add_option("--ch-min", o.ch_min, "progan: channels at the target resolution");
  cmd->add_option("--stage-res", o.stage_res, "progan: grown resolution (default: target)");
  cmd->add_flag("--transition", o.transition, "progan: view the fade-in stage");
}

// Builds with zero-filled parameters: counting and shape walking need the
// graph, not the weights.
mrgf::Model<float> build_single(const ArchOpts& o, bool* is_pair, mrgf::GanPair<float>* pair) {
  using namespace mrgf;
  *is_pair = true;
  if (o.arch == "unet") {
    *is_pair = false;
    return build_unet<float>(o.filters, o.bn, o.dropout, Init::he_normal_fanin, 1, 128, false);
  }
  if (o.arch == "dcgan") {
    *pair = build_dcgan<float>(o.latent < 0 ? 256 : o.latent, o.base_res, o.target_res, o.base_ch,
                               o.disc_ch, Init::normal_002, 1, false);
    return {};
  }
  if (o.arch == "srresgan") {
    *pair = build_srresgan<float>(o.latent < 0 ? 256 : o.latent, o.n_res, o.target_res, o.gf,
                                  o.df, Init::he_normal_paper, 1, false);
    return {};
  }
  if (o.arch == "progan") {
    const int64_t sr = o.stage_res < 0 ? o.target_res : o.stage_res;
    *pair = build_progan<float>(ProGANStage{sr, o.transition, o.transition ? 0.0 : 1.0},
                                o.latent < 0 ? 512 : o.latent, o.target_res, o.ch_max, o.ch_min,
                                Init::dynamic_scaled, 1, false);
    return {};
  }
  throw TensorError("unknown architecture '" + o.arch + "'");
}

void print_counts(const mrgf::Model<float>& m) {
  const auto [total, trainable] = mrgf::count_params(m);
  std::printf("total %lld\ntrainable %lld\n", static_cast<long long>(total),
              static_cast<long long>(trainable));
}

int run_params(const ArchOpts& o) {
  bool single = false;
  mrgf::GanPair<float> pair;
  auto m = build_single(o, &single, &pair);
  if (!single) {
    print_counts(m);
    return 0;
  }
  std::printf("generator:\n");
  print_counts(pair.gen);
  std::printf("discriminator:\n");
  print_counts(pair.disc);
  return 0;
}

int run_shapes(const ArchOpts& o) {
  bool single = false;
  mrgf::GanPair<float> pair;
  auto m = build_single(o, &single, &pair);
  if (!single) {
    std::fputs(mrgf::topology(m).c_str(), stdout);
    return 0;
  }
  std::printf("generator:\n");
  std::fputs(mrgf::topology(pair.gen).c_str(), stdout);
  std::printf("discriminator:\n");
  std::fputs(mrgf::topology(pair.disc).c_str(), stdout);
  return 0;
}

mrgf::ExperimentConfig load_cfg(const std::string& path, const std::string& out_dir,
                                int64_t seed) {
  auto cfg = mrgf::parse_config(path);
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  if (seed >= 0) cfg.seed = static_cast<uint64_t>(seed);
  return cfg;
}

int finish_gan(const mrgf::RunReport& rep) {
  if (rep.diverged) {
    std::fprintf(stderr, "diverged: %s\n", rep.divergence_reason.c_str());
    std::printf("steps %lld\n", static_cast<long long>(rep.steps));
    return 2;
  }
  std::printf("steps %lld\n", static_cast<long long>(rep.steps));
  std::printf("final_d_loss %.9g\n", rep.final_d_loss);
  std::printf("final_g_loss %.9g\n", rep.final_g_loss);
  for (size_t i = 0; i < rep.stage_labels.size(); ++i)
    std::printf("stage %s wall_seconds %.3f\n", rep.stage_labels[i].c_str(),
                rep.stage_wall_seconds[i]);
  std::printf("log %s\n", rep.log_path.c_str());
  std::printf("checkpoint %s\n", rep.checkpoint_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale GAN and segmentation training bench"};
  app.require_subcommand(1);

  std::string cfg_path, resume, out_dir, ckpt, corpus_spec = "train";
  int64_t seed_override = -1, n_gen = 0, pairs = 1, steps = 8;
  int64_t eval_seed = 1;
  bool timed = false;

  auto* seg = app.add_subcommand("train-seg", "train the segmentation network");
  seg->add_option("config", cfg_path, "run configuration file")->required();
  seg->add_option("--seed", seed_override, "override the configured seed");
  seg->add_option("--out", out_dir, "override the configured output directory");
  seg->add_option("--resume", resume, "checkpoint to continue from");

  auto* gan = app.add_subcommand("train-gan", "train a fixed-topology generator pair");
  gan->add_option("config", cfg_path, "run configuration file")->required();
  gan->add_option("--seed", seed_override, "override the configured seed");
  gan->add_option("--out", out_dir, "override the configured output directory");
  gan->add_option("--resume", resume, "checkpoint to continue from");

  auto* pro = app.add_subcommand("train-progan", "train through the progressive schedule");
  pro->add_option("config", cfg_path, "run configuration file")->required();
  pro->add_option("--seed", seed_override, "override the configured seed");
  pro->add_option("--out", out_dir, "override the configured output directory");
  pro->add_option("--resume", resume, "checkpoint to continue from");

  auto* ev = app.add_subcommand("evaluate", "score a generator checkpoint");
  ev->add_option("checkpoint", ckpt, "checkpoint file")->required();
  ev->add_option("corpus", corpus_spec,
                 "'train' (corpus recorded in the checkpoint), a PGM directory, or a manifest");
  ev->add_option("--n", n_gen, "images to generate (default: corpus size)");
  ev->add_option("--seed", eval_seed, "generation seed");
  ev->add_flag("--timed", timed, "measure wall time instead of reporting 0");

  auto* inter = app.add_subcommand("interpolate", "render latent interpolation strips");
  inter->add_option("checkpoint", ckpt, "checkpoint file")->required();
  inter->add_option("--pairs", pairs, "number of endpoint pairs");
  inter->add_option("--steps", steps, "frames per strip");
  inter->add_option("--seed", eval_seed, "latent seed");
  inter->add_option("--out", out_dir, "output directory (default: beside the checkpoint)");

  ArchOpts aopts;
  auto* par = app.add_subcommand("params", "print parameter counts for an architecture");
  add_arch_options(par, aopts);
  auto* shp = app.add_subcommand("shapes", "print the per-layer output shapes");
  add_arch_options(shp, aopts);

  CLI11_PARSE(app, argc, argv);

  try {
    if (par->parsed()) return run_params(aopts);
    if (shp->parsed()) return run_shapes(aopts);
    if (seg->parsed()) {
      const auto rep = mrgf::train_segmentation(load_cfg(cfg_path, out_dir, seed_override), resume);
      if (rep.diverged) {
        std::fprintf(stderr, "diverged: %s\n", rep.divergence_reason.c_str());
        return 2;
      }
      std::printf("steps %lld\n", static_cast<long long>(rep.steps));
      std::printf("best_val_loss %.9g\n", rep.best_val_loss);
      std::printf("val_dice %.9g\n", rep.val_dice);
      std::printf("val_accuracy %.9g\n", rep.val_accuracy);
      std::printf("log %s\n", rep.log_path.c_str());
      std::printf("checkpoint %s\n", rep.checkpoint_path.c_str());
      return 0;
    }
    if (gan->parsed())
      return finish_gan(mrgf::train_gan(load_cfg(cfg_path, out_dir, seed_override), resume));
    if (pro->parsed())
      return finish_gan(mrgf::train_progressive(load_cfg(cfg_path, out_dir, seed_override),
                                                resume));
    if (ev->parsed()) {
      const auto rep = mrgf::cmd_evaluate(ckpt, corpus_spec, n_gen,
                                          static_cast<uint64_t>(eval_seed), timed);
      std::printf("%s\n%s\n", mrgf::gen_eval_csv_header().c_str(), mrgf::to_csv(rep).c_str());
      return 0;
    }
    if (inter->parsed()) {
      const auto dir =
          out_dir.empty() ? std::filesystem::path(ckpt).parent_path().string() : out_dir;
      const auto paths = mrgf::cmd_interpolate(ckpt, pairs, steps,
                                               static_cast<uint64_t>(eval_seed), dir);
      for (const auto& p : paths) std::printf("%s\n", p.c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
