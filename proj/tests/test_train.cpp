#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "mrgf/train.hpp"

using namespace mrgf;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& leaf) {
  const auto p = fs::temp_directory_path() / "mrgf_train_tests" / leaf;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const std::string& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

// Small enough to train in well under a second per epoch.
ExperimentConfig mini_gan_cfg(const fs::path& out) {
  auto c = parse_config_text(
      "arch = dcgan\n"
      "seed = 11\n"
      "epochs = 2\n"
      "batch_size = 4\n"
      "steps_per_epoch = 5\n"
      "data.n = 24\n"
      "data.res = 16\n"
      "dcgan.latent = 16\n"
      "dcgan.base_res = 4\n"
      "dcgan.target_res = 16\n"
      "dcgan.base_ch = 16\n"
      "dcgan.disc_ch = 8\n",
      "mini_gan");
  c.out_dir = out.string();
  return c;
}

ExperimentConfig mini_seg_cfg(const fs::path& out) {
  auto c = parse_config_text(
      "arch = unet\n"
      "seed = 4\n"
      "epochs = 2\n"
      "batch_size = 4\n"
      "data.n = 30\n"
      "data.res = 16\n"
      "unet.filters = 8\n",
      "mini_seg");
  c.out_dir = out.string();
  return c;
}

}  // namespace

TEST_CASE("latent sampling honors the distribution kind") {
  Rng rng(5);
  SUBCASE("uniform stays inside [-1,1]") {
    auto z = sample_latents<float>("uniform", 8, 32, rng);
    CHECK(z.shape() == Shape{8, 32, 1, 1});
    for (float v : z.v()) {
      CHECK(v >= -1.0f);
      CHECK(v <= 1.0f);
    }
  }
  SUBCASE("normalized normal lands every sample on the sqrt(dim) sphere") {
    auto z = sample_latents<float>("normal_normalized", 8, 32, rng);
    for (int64_t b = 0; b < 8; ++b) {
      double n2 = 0.0;
      for (int64_t i = 0; i < 32; ++i) {
        const double v = z.v()[size_t(b * 32 + i)];
        n2 += v * v;
      }
      CHECK(std::sqrt(n2) == doctest::Approx(std::sqrt(32.0)).epsilon(1e-5));
    }
  }
  SUBCASE("unknown kind is an error") {
    CHECK_THROWS_AS(sample_latents<float>("cauchy", 1, 4, rng), TensorError);
  }
}

TEST_CASE("the synthetic corpus lands in the configured value range") {
  auto gan = parse_config_text("arch = dcgan\ndata.n = 20\ndata.res = 16\n", "t");
  auto sym = make_corpus(gan);
  float lo = 1e9f, hi = -1e9f;
  for (const auto& img : sym.images)
    for (float v : img.v()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  CHECK(lo < 0.0f);  // a [-1,1] corpus actually uses the negative half
  CHECK(hi <= 1.0f);
  CHECK(lo >= -1.0f);

  auto seg = parse_config_text("arch = unet\ndata.n = 20\ndata.res = 16\n", "t");
  auto zo = make_corpus(seg);
  for (const auto& img : zo.images)
    for (float v : img.v()) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
}

TEST_CASE("discriminator head flattening strips exactly the sigmoid") {
  auto pair = build_dcgan<float>(16, 4, 16, 16, 8, Init::normal_002, 1, false);
  flatten_disc_head(pair.disc);
  for (const auto& n : pair.disc.nodes) CHECK(n.act != Act::sigmoid);
  CHECK_THROWS_WITH_AS(flatten_disc_head(pair.disc), doctest::Contains("no sigmoid head"),
                       TensorError);
}

TEST_CASE("gan training logs are bitwise reproducible and resumable") {
  const auto dir = scratch_dir("gan_determinism");
  auto a = mini_gan_cfg(dir / "a");
  auto b = mini_gan_cfg(dir / "b");

  auto ra = train_gan(a);
  auto rb = train_gan(b);
  REQUIRE_FALSE(ra.diverged);
  CHECK(ra.steps == 10);

  SUBCASE("identical config and seed give identical logs") {
    CHECK(slurp(ra.log_path) == slurp(rb.log_path));
    CHECK(ra.final_d_loss == rb.final_d_loss);
    CHECK(ra.final_g_loss == rb.final_g_loss);
  }
  SUBCASE("a run resumed from its first epoch reproduces the uninterrupted log") {
    auto c1 = mini_gan_cfg(dir / "c");
    c1.epochs = 1;
    auto rc1 = train_gan(c1);
    REQUIRE_FALSE(rc1.diverged);
    auto c2 = mini_gan_cfg(dir / "c");  // full schedule, same out dir
    auto rc2 = train_gan(c2, rc1.checkpoint_path);
    REQUIRE_FALSE(rc2.diverged);
    CHECK(slurp(rc2.log_path) == slurp(ra.log_path));
    CHECK(rc2.final_d_loss == ra.final_d_loss);
    CHECK(rc2.final_g_loss == ra.final_g_loss);
  }
  SUBCASE("the checkpoint reproduces the run configuration") {
    auto ck = Checkpoint::read(ra.checkpoint_path);
    auto stored = parse_config_text(ck.meta_text(), "stored");
    CHECK(stored.seed == a.seed);
    CHECK(stored.arch == "dcgan");
    CHECK(stored.dcgan_latent == 16);
  }
}

TEST_CASE("every discriminator step runs k generator steps") {
  const auto dir = scratch_dir("gan_k");
  auto c = mini_gan_cfg(dir / "run");
  c.epochs = 1;
  c.steps_per_epoch = 4;
  c.k = 3;
  auto r = train_gan(c);
  REQUIRE_FALSE(r.diverged);
  auto ck = Checkpoint::read(r.checkpoint_path);
  CHECK(ck.at("__opt_d__/steps").data[0] == 4.0f);
  CHECK(ck.at("__opt_g__/steps").data[0] == 12.0f);
}

TEST_CASE("weight clipping keeps every trainable inside the threshold") {
  const auto dir = scratch_dir("gan_clip");
  auto c = mini_gan_cfg(dir / "run");
  c.epochs = 1;
  c.steps_per_epoch = 8;
  c.loss_kind = "wgan";
  c.loss.kind = GanLoss::wgan;
  auto r = train_gan(c);
  REQUIRE_FALSE(r.diverged);

  auto pair = build_dcgan<float>(16, 4, 16, 16, 8, c.init, c.seed, false);
  auto ck = Checkpoint::read(r.checkpoint_path);
  ck.bind_params(pair.disc.params);
  const float limit = float(c.loss.clip_threshold) + 1e-7f;
  for (const auto& p : pair.disc.params) {
    if (!p.trainable) continue;
    for (float w : p.t.v()) CHECK(std::fabs(w) <= limit);
  }
}

TEST_CASE("a blown-up run is reported as diverged instead of crashing") {
  const auto dir = scratch_dir("gan_diverge");
  auto c = mini_gan_cfg(dir / "run");
  c.epochs = 1;
  c.steps_per_epoch = 30;
  c.lr = c.g_lr = c.d_lr = 1e9;
  auto r = train_gan(c);
  CHECK(r.diverged);
  CHECK_FALSE(r.divergence_reason.empty());
}

TEST_CASE("segmentation training is reproducible, resumable, and tracked by best loss") {
  const auto dir = scratch_dir("seg");
  auto a = mini_seg_cfg(dir / "a");
  auto ra = train_segmentation(a);
  REQUIRE_FALSE(ra.diverged);

  SUBCASE("scores are valid and checkpoints exist") {
    CHECK(ra.val_dice >= 0.0);
    CHECK(ra.val_dice <= 1.0);
    CHECK(ra.val_accuracy >= 0.0);
    CHECK(ra.val_accuracy <= 1.0);
    CHECK(fs::exists(ra.checkpoint_path));          // best
    CHECK(fs::exists(dir / "a" / "last.ckpt"));     // every epoch
    CHECK(fs::exists(dir / "a" / "resolved.cfg"));  // echoed config
    const auto csv = slurp(ra.log_path);
    CHECK(csv.rfind("epoch,train_loss,val_loss,val_dice,val_accuracy,wall_ms\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);  // header + one row per epoch
  }
  SUBCASE("identical config and seed give identical logs") {
    auto b = mini_seg_cfg(dir / "b");
    auto rb = train_segmentation(b);
    CHECK(slurp(rb.log_path) == slurp(ra.log_path));
  }
  SUBCASE("resume from the first epoch reproduces the uninterrupted log") {
    auto c1 = mini_seg_cfg(dir / "c");
    c1.epochs = 1;
    train_segmentation(c1);
    auto c2 = mini_seg_cfg(dir / "c");
    auto rc = train_segmentation(c2, (dir / "c" / "last.ckpt").string());
    CHECK(slurp(rc.log_path) == slurp(ra.log_path));
  }
}

TEST_CASE("the progressive schedule ladders up to the target resolution") {
  auto c = parse_config_text(
      "arch = progan\n"
      "progan.target_res = 16\n"
      "prog.stage_epochs = 2\n"
      "prog.transition_epochs = 3\n",
      "t");
  const auto plan = progressive_plan(c);
  REQUIRE(plan.size() == 5);
  const char* labels[] = {"4", "8t", "8", "16t", "16"};
  const int64_t res[] = {4, 8, 8, 16, 16};
  const bool trans[] = {false, true, false, true, false};
  for (size_t i = 0; i < 5; ++i) {
    CHECK(plan[i].label == labels[i]);
    CHECK(plan[i].res == res[i]);
    CHECK(plan[i].transition == trans[i]);
    CHECK(plan[i].epochs == (trans[i] ? 3 : 2));
  }
}

TEST_CASE("fade-in blending interpolates between the old and new generator paths") {
  const uint64_t seed = 7;
  auto prev = build_progan<float>(ProGANStage{4, false, 1.0}, 16, 16, 32, 8,
                                  Init::dynamic_scaled, seed);
  auto mid = build_progan<float>(ProGANStage{8, true, 0.0}, 16, 16, 32, 8,
                                 Init::dynamic_scaled, seed);
  auto stab = build_progan<float>(ProGANStage{8, false, 1.0}, 16, 16, 32, 8,
                                  Init::dynamic_scaled, seed);
  Rng rng(3);
  auto z = sample_latents<float>("normal_normalized", 2, 16, rng);

  Tape<float> tp;
  NoRecordGuard<float> nr(tp);

  SUBCASE("alpha 0 reproduces the upsampled previous stage") {
    auto small = prev.gen.forward(tp, z, false);
    auto up = upsample2(tp, small);
    mid.gen.alpha = 0.0;
    auto out = mid.gen.forward(tp, z, false);
    REQUIRE(out.shape() == up.shape());
    for (int64_t i = 0; i < out.size(); ++i)
      CHECK(std::fabs(out.v()[size_t(i)] - up.v()[size_t(i)]) <= 1e-6f);
  }
  SUBCASE("alpha 1 equals the stabilized network exactly") {
    mid.gen.alpha = 1.0;
    auto a = mid.gen.forward(tp, z, false);
    auto b = stab.gen.forward(tp, z, false);
    REQUIRE(a.shape() == b.shape());
    for (int64_t i = 0; i < a.size(); ++i) CHECK(a.v()[size_t(i)] == b.v()[size_t(i)]);
  }
  SUBCASE("the discriminator blend hits the same endpoint") {
    Rng xr(9);
    auto x = Tensor<float>::zeros({2, 1, 8, 8});
    for (auto& v : x.v()) v = float(xr.uniform(-1.0, 1.0));
    mid.disc.alpha = 1.0;
    auto a = mid.disc.forward(tp, x, false);
    auto b = stab.disc.forward(tp, x, false);
    for (int64_t i = 0; i < a.size(); ++i) CHECK(a.v()[size_t(i)] == b.v()[size_t(i)]);
  }
}

TEST_CASE("progressive training walks all stages and checkpoints each") {
  const auto dir = scratch_dir("progan");
  auto c = parse_config_text(
      "arch = progan\n"
      "seed = 5\n"
      "epochs = 1\n"
      "batch_size = 4\n"
      "steps_per_epoch = 2\n"
      "data.n = 24\n"
      "data.res = 8\n"
      "progan.latent = 16\n"
      "progan.target_res = 8\n"
      "progan.ch_max = 32\n"
      "progan.ch_min = 8\n",
      "t");
  c.out_dir = (dir / "run").string();
  auto r = train_progressive(c);
  REQUIRE_FALSE(r.diverged);
  CHECK(r.stage_labels == std::vector<std::string>{"4", "8t", "8"});
  CHECK(r.steps == 6);
  CHECK(fs::exists(dir / "run" / "stage_4.ckpt"));
  CHECK(fs::exists(dir / "run" / "stage_8t.ckpt"));
  CHECK(fs::exists(dir / "run" / "stage_8.ckpt"));
  CHECK(fs::exists(dir / "run" / "stages.csv"));

  SUBCASE("the run is bitwise reproducible") {
    auto c2 = c;
    c2.out_dir = (dir / "run2").string();
    auto r2 = train_progressive(c2);
    CHECK(slurp(r2.log_path) == slurp(r.log_path));
  }
  SUBCASE("resume from a stage boundary reproduces the uninterrupted log") {
    // the stage_8t checkpoint marks the end of stage index 1
    auto c2 = c;
    c2.out_dir = (dir / "run3").string();
    fs::create_directories(c2.out_dir);
    fs::copy_file(dir / "run" / "train.csv", dir / "run3" / "train.csv");
    // truncate the copied log to the rows stage 4 + 8t wrote (header + 4 rows)
    {
      auto full = slurp((dir / "run" / "train.csv").string());
      size_t pos = 0;
      for (int lines = 0; lines < 5; ++lines) pos = full.find('\n', pos) + 1;
      std::ofstream f(dir / "run3" / "train.csv", std::ios::trunc | std::ios::binary);
      f.write(full.data(), std::streamsize(pos));
    }
    auto r3 = train_progressive(c2, (dir / "run" / "stage_8t.ckpt").string());
    REQUIRE_FALSE(r3.diverged);
    CHECK(slurp(r3.log_path) == slurp(r.log_path));
  }
}

TEST_CASE("generator evaluation is deterministic and collapse reads as rank one") {
  const auto dir = scratch_dir("evaluate");
  auto c = mini_gan_cfg(dir / "run");
  c.epochs = 1;
  auto r = train_gan(c);
  REQUIRE_FALSE(r.diverged);

  auto e1 = cmd_evaluate(r.checkpoint_path, "train", 24, 5);
  auto e2 = cmd_evaluate(r.checkpoint_path, "train", 24, 5);
  CHECK(e1.model_id == "dcgan+gan");
  CHECK(e1.n_images == 24);
  CHECK(e1.rho == e2.rho);
  CHECK(e1.sigma == e2.sigma);
  CHECK(e1.delta == e2.delta);
  CHECK(e1.wall_seconds == 0.0);  // untimed by default
  // a near-untrained generator emits nearly one image; centered by the
  // training mean that is a rank-one cloud, never rank zero
  CHECK(e1.delta >= 1);
  CHECK(e1.rho >= 0.0);
  CHECK(e1.rho <= 1.0 + 1e-9);
}

TEST_CASE("interpolation strips are written as valid images") {
  const auto dir = scratch_dir("interp");
  auto c = mini_gan_cfg(dir / "run");
  c.epochs = 1;
  auto r = train_gan(c);
  REQUIRE_FALSE(r.diverged);

  const auto paths = cmd_interpolate(r.checkpoint_path, 2, 5, 9, (dir / "strips").string());
  REQUIRE(paths.size() == 2);
  for (const auto& p : paths) {
    auto img = load_pgm(p);
    CHECK(img.shape() == Shape{16, 5 * 16});
    for (float v : img.v()) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }
}

TEST_CASE("run progress notes round-trip through their text form") {
  detail::RunProgress pr;
  pr.epoch = 7;
  pr.step = 123;
  pr.stage = 3;
  pr.stage_res = 16;
  pr.transition = true;
  pr.best_val_loss = 0.0625;
  pr.stream_epoch = 2;
  pr.stream_step = 0;
  auto back = detail::parse_progress(detail::progress_text(pr));
  CHECK(back.epoch == 7);
  CHECK(back.step == 123);
  CHECK(back.stage == 3);
  CHECK(back.stage_res == 16);
  CHECK(back.transition);
  CHECK(back.best_val_loss == 0.0625);
  CHECK(back.stream_epoch == 2);
  CHECK(back.stream_step == 0);
}
