#include <set>

#include "doctest.h"
#include "mrgf/models.hpp"

using namespace mrgf;

namespace {

// Expected row tables, transcribed from the published architecture summaries.
std::vector<ShapeRow> unet_rows() {
  std::vector<ShapeRow> r;
  r.push_back({"Input image", "-", 1, 128, 128});
  int64_t ch = 32, res = 128;
  for (int i = 1; i <= 4; ++i) {
    r.push_back({"Conv 3x3", "BN+ReLU", ch, res, res});
    r.push_back({"Conv 3x3", "BN+ReLU", ch, res, res});
    r.push_back({"Downsample", "-", ch, res / 2, res / 2});
    ch *= 2;
    res /= 2;
  }
  r.push_back({"Conv 3x3", "BN+ReLU", 512, 8, 8});
  r.push_back({"Conv 3x3", "BN+ReLU", 512, 8, 8});
  for (int i = 4; i >= 1; --i) {
    ch /= 2;
    res *= 2;
    r.push_back({"Conv Trans 3x3", "-", ch, res, res});
    r.push_back({"Concatenate l" + std::to_string(i), "-", 2 * ch, res, res});
    r.push_back({"Conv 3x3", "BN+ReLU", ch, res, res});
    r.push_back({"Conv 3x3", "BN+ReLU", ch, res, res});
  }
  r.push_back({"Conv 1x1", "Sigmoid", 1, 128, 128});
  return r;
}

std::vector<ShapeRow> dcgan_gen_rows() {
  return {
      {"Latent vector", "-", 256, 1, 1},        {"Dense", "BN+ReLU", 256, 8, 8},
      {"Conv Trans 5x5", "BN+ReLU", 256, 16, 16},  {"Conv Trans 5x5", "BN+ReLU", 256, 16, 16},
      {"Conv Trans 5x5", "BN+ReLU", 256, 32, 32},  {"Conv Trans 5x5", "BN+ReLU", 256, 32, 32},
      {"Conv Trans 5x5", "BN+ReLU", 256, 64, 64},  {"Conv Trans 5x5", "BN+ReLU", 256, 64, 64},
      {"Conv Trans 5x5", "BN+ReLU", 128, 128, 128}, {"Conv Trans 5x5", "BN+ReLU", 64, 256, 256},
      {"Conv Trans 5x5", "Tanh", 1, 256, 256},
  };
}

std::vector<ShapeRow> dcgan_disc_rows() {
  return {
      {"Input image", "-", 1, 256, 256},      {"Conv 5x5", "LReLU", 64, 128, 128},
      {"Conv 5x5", "BN+LReLU", 128, 64, 64},  {"Conv 5x5", "BN+LReLU", 256, 32, 32},
      {"Conv 5x5", "BN+LReLU", 512, 16, 16},  {"Conv 5x5", "BN+LReLU", 1024, 8, 8},
      {"Dense", "LReLU", 1024, 1, 1},         {"Dense", "Sigmoid", 1, 1, 1},
  };
}

std::vector<ShapeRow> srresgan_gen_rows() {
  std::vector<ShapeRow> r;
  r.push_back({"Latent vector", "-", 256, 1, 1});
  r.push_back({"Dense", "BN+ReLU", 64, 16, 16});
  for (int i = 0; i < 16; ++i) {
    r.push_back({"Conv 3x3", "BN+ReLU", 64, 16, 16});
    r.push_back({"Conv 3x3", "BN", 64, 16, 16});
    r.push_back({"Add", "-", 64, 16, 16});
  }
  r.push_back({"-", "BN+ReLU", 64, 16, 16});
  r.push_back({"Add", "-", 64, 16, 16});
  for (int64_t res = 16; res < 256; res *= 2) {
    r.push_back({"Conv 3x3", "-", 256, res, res});
    r.push_back({"PixelShuffle", "BN+ReLU", 64, 2 * res, 2 * res});
  }
  r.push_back({"Conv 9x9", "Tanh", 1, 256, 256});
  return r;
}

std::vector<ShapeRow> srresgan_disc_rows() {
  std::vector<ShapeRow> r;
  r.push_back({"Input image", "-", 1, 256, 256});
  int64_t ch = 32, res = 128;
  for (int s = 0; s < 6; ++s) {
    r.push_back({"Conv 4x4", "LReLU", ch, res, res});
    for (int t = 0; t < 2; ++t) {
      r.push_back({"Conv 3x3", "LReLU", ch, res, res});
      r.push_back({"Conv 3x3", "-", ch, res, res});
      r.push_back({"Add", "LReLU", ch, res, res});
    }
    ch *= 2;
    res /= 2;
  }
  r.push_back({"Conv 3x3", "LReLU", 2048, 2, 2});
  r.push_back({"Dense", "Sigmoid", 1, 1, 1});
  return r;
}

std::vector<ShapeRow> progan_gen_rows() {
  std::vector<ShapeRow> r;
  r.push_back({"Latent vector", "-", 512, 1, 1});
  r.push_back({"Conv 4x4", "LReLU", 512, 4, 4});
  r.push_back({"Conv 3x3", "PN+LReLU", 512, 4, 4});
  int64_t prev = 512;
  for (int64_t res = 8; res <= 256; res *= 2) {
    const int64_t ch = std::min<int64_t>(512, 16 * (256 / res));
    r.push_back({"Upsample", "-", prev, res, res});
    r.push_back({"Conv 5x5", "PN+LReLU", ch, res, res});
    r.push_back({"Conv 5x5", "PN+LReLU", ch, res, res});
    prev = ch;
  }
  r.push_back({"Conv 1x1", "Tanh", 1, 256, 256});
  return r;
}

std::vector<ShapeRow> progan_disc_rows() {
  std::vector<ShapeRow> r;
  r.push_back({"Input image", "-", 1, 256, 256});
  r.push_back({"Conv 1x1", "LReLU", 16, 256, 256});
  for (int64_t res = 256; res >= 8; res /= 2) {
    const int64_t ch = std::min<int64_t>(512, 16 * (256 / res));
    const int64_t next = std::min<int64_t>(512, 16 * (256 / (res / 2)));
    r.push_back({"Conv 5x5", "LReLU", ch, res, res});
    r.push_back({"Conv 5x5", "-", next, res, res});
    r.push_back({"Downsample", "LReLU", next, res / 2, res / 2});
  }
  r.push_back({"Minibatch std", "-", 513, 4, 4});
  r.push_back({"Conv 3x3", "LReLU", 512, 4, 4});
  r.push_back({"Conv 4x4", "LReLU", 512, 1, 1});
  r.push_back({"Dense", "Sigmoid", 1, 1, 1});
  return r;
}

void check_rows(const std::vector<ShapeRow>& got, const std::vector<ShapeRow>& want) {
  REQUIRE(got.size() == want.size());
  for (size_t i = 0; i < want.size(); ++i) {
    CAPTURE(i);
    CAPTURE(got[i].label);
    CAPTURE(want[i].label);
    CHECK(got[i] == want[i]);
  }
}

template <class S>
Tensor<S> rand_t(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  auto t = Tensor<S>::zeros(std::move(shape));
  for (auto& v : t.v()) v = static_cast<S>(rng.uniform(lo, hi));
  return t;
}

template <class S>
double max_abs_diff(const Tensor<S>& a, const Tensor<S>& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0;
  for (int64_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(double(a.v()[size_t(i)]) - double(b.v()[size_t(i)])));
  return m;
}

}  // namespace

TEST_CASE("unet parameter counts match the published totals") {
  auto c32 = count_params(build_unet<float>(32, true, 0.0, Init::he_normal_fanin, 1, 128, false));
  CHECK(c32.first == 8641697);
  CHECK(c32.second == 8635809);
  auto c64 = count_params(build_unet<float>(64, true, 0.0, Init::he_normal_fanin, 1, 128, false));
  CHECK(c64.first == 34535745);
  CHECK(c64.second == 34523969);
  auto c64n = count_params(build_unet<float>(64, false, 0.0, Init::he_normal_fanin, 1, 128, false));
  CHECK(c64n.first == 34512193);
  CHECK(c64n.second == 34512193);
}

TEST_CASE("unet non-trainable gap halves with the filter count") {
  int64_t gaps[4];
  int64_t filt[4] = {64, 32, 16, 8};
  for (int i = 0; i < 4; ++i) {
    auto c = count_params(build_unet<float>(filt[i], true, 0.0, Init::he_normal_fanin, 1, 128, false));
    gaps[i] = c.first - c.second;
  }
  CHECK(gaps[0] == 11776);
  for (int i = 1; i < 4; ++i) CHECK(gaps[i - 1] == 2 * gaps[i]);
}

TEST_CASE("count_params is independent of input resolution and materialization") {
  auto a = count_params(build_unet<float>(32, true, 0.0, Init::he_normal_fanin, 1, 128, false));
  auto b = count_params(build_unet<float>(32, true, 0.0, Init::he_normal_fanin, 1, 256, false));
  auto c = count_params(build_unet<float>(32, true, 0.0, Init::he_normal_fanin, 9, 128, true));
  CHECK(a == b);
  CHECK(a == c);
}

TEST_CASE("count_params on a hand-built single dense layer") {
  Model<float> m;
  m.params.push_back({"w", Tensor<float>::zeros({3, 2}), true});
  m.params.push_back({"b", Tensor<float>::zeros({3}), true});
  auto c = count_params(m);
  CHECK(c.first == 9);
  CHECK(c.second == 9);
}

TEST_CASE("unet shape walk reproduces the architecture table") {
  auto m = build_unet<float>(32, true, 0.0, Init::he_normal_fanin, 1, 128, false);
  check_rows(forward_shapes(m), unet_rows());
}

TEST_CASE("dcgan shape walk reproduces the architecture table") {
  auto p = build_dcgan<float>(256, 8, 256, 256, 64, Init::normal_002, 1, false);
  check_rows(forward_shapes(p.gen), dcgan_gen_rows());
  check_rows(forward_shapes(p.disc), dcgan_disc_rows());
}

TEST_CASE("srresgan shape walk reproduces the architecture table") {
  auto p = build_srresgan<float>(256, 16, 256, 64, 32, Init::he_normal_paper, 1, false);
  check_rows(forward_shapes(p.gen), srresgan_gen_rows());
  check_rows(forward_shapes(p.disc), srresgan_disc_rows());
}

TEST_CASE("progan shape walk reproduces the architecture table") {
  ProGANStage full{256, false, 1.0};
  auto p = build_progan<float>(full, 512, 256, 512, 16, Init::dynamic_scaled, 1, false);
  check_rows(forward_shapes(p.gen), progan_gen_rows());
  check_rows(forward_shapes(p.disc), progan_disc_rows());
}

TEST_CASE("progan stage-4 generator is latent to 512x4x4 to 1x4x4") {
  ProGANStage s4{4, false, 1.0};
  auto p = build_progan<float>(s4, 512, 256, 512, 16, Init::dynamic_scaled, 1, false);
  std::vector<ShapeRow> want = {
      {"Latent vector", "-", 512, 1, 1},
      {"Conv 4x4", "LReLU", 512, 4, 4},
      {"Conv 3x3", "PN+LReLU", 512, 4, 4},
      {"Conv 1x1", "Tanh", 1, 4, 4},
  };
  check_rows(forward_shapes(p.gen), want);
}

TEST_CASE("builders reject invalid configurations") {
  CHECK_THROWS_AS(build_unet<float>(48, true), TensorError);
  CHECK_THROWS_AS(build_unet<float>(32, true, 1.5), TensorError);
  CHECK_THROWS_AS(build_unet<float>(32, true, 0.0, Init::he_normal_fanin, 1, 100), TensorError);
  CHECK_THROWS_AS(build_dcgan<float>(256, 8, 100), TensorError);
  CHECK_THROWS_AS(build_dcgan<float>(256, 8, 8), TensorError);
  CHECK_THROWS_AS(build_srresgan<float>(256, 16, 24), TensorError);
  CHECK_THROWS_AS(build_srresgan<float>(256, 0, 256), TensorError);
  CHECK_THROWS_AS(build_progan<float>(ProGANStage{3, false, 1.0}), TensorError);
  CHECK_THROWS_AS(build_progan<float>(ProGANStage{512, false, 1.0}), TensorError);
  CHECK_THROWS_AS(build_progan<float>(ProGANStage{8, false, 0.5}), TensorError);
  CHECK_THROWS_AS(build_progan<float>(ProGANStage{8, true, 1.5}), TensorError);
  CHECK_THROWS_AS(build_progan<float>(ProGANStage{4, true, 0.5}), TensorError);
}

TEST_CASE("parameter names are unique in every builder output") {
  auto names_unique = [](const auto& m) {
    std::set<std::string> s;
    for (const auto& p : m.params) s.insert(p.name);
    return s.size() == m.params.size();
  };
  CHECK(names_unique(build_unet<float>(8, true, 0.5, Init::he_normal_fanin, 1, 128, false)));
  auto dc = build_dcgan<float>(16, 4, 16, 8, 8, Init::normal_002, 1, false);
  CHECK(names_unique(dc.gen));
  CHECK(names_unique(dc.disc));
  auto sr = build_srresgan<float>(16, 2, 32, 8, 8, Init::he_normal_fanin, 1, false);
  CHECK(names_unique(sr.gen));
  CHECK(names_unique(sr.disc));
  auto pg = build_progan<float>(ProGANStage{16, true, 0.5}, 8, 16, 16, 4,
                                Init::dynamic_scaled, 1, false);
  CHECK(names_unique(pg.gen));
  CHECK(names_unique(pg.disc));
}

TEST_CASE("builds with equal seeds are bitwise identical, different seeds differ") {
  auto a = build_unet<float>(8, true, 0.0, Init::he_normal_fanin, 5, 128, true);
  auto b = build_unet<float>(8, true, 0.0, Init::he_normal_fanin, 5, 128, true);
  auto c = build_unet<float>(8, true, 0.0, Init::he_normal_fanin, 6, 128, true);
  REQUIRE(a.params.size() == b.params.size());
  bool all_eq = true, any_diff = false;
  for (size_t i = 0; i < a.params.size(); ++i) {
    if (a.params[i].t.v() != b.params[i].t.v()) all_eq = false;
    if (a.params[i].t.v() != c.params[i].t.v()) any_diff = true;
  }
  CHECK(all_eq);
  CHECK(any_diff);
}

TEST_CASE("unet desk forward: shape, range, and flexible resolution") {
  auto m = build_unet<float>(8, true, 0.0, Init::he_normal_fanin, 3, 32);
  Rng rng(11);
  Tape<float> tp;
  auto x = rand_t<float>({2, 1, 32, 32}, rng, 0.0, 1.0);
  auto y = m.forward(tp, x, true);
  auto rows = forward_shapes(m, 1, 32, 32);
  CHECK(y.shape() == Shape{2, 1, 32, 32});
  CHECK(rows.back().c == 1);
  CHECK(rows.back().h == 32);
  for (float v : y.v()) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
  // fully convolutional: other multiples of 16 pass, the rest are rejected
  auto x48 = rand_t<float>({1, 1, 48, 48}, rng, 0.0, 1.0);
  CHECK(m.forward(tp, x48, false).shape() == Shape{1, 1, 48, 48});
  auto bad = rand_t<float>({1, 1, 24, 24}, rng, 0.0, 1.0);
  CHECK_THROWS_WITH_AS(m.forward(tp, bad, false),
                       doctest::Contains("divisible by 16"), TensorError);
}

TEST_CASE("dcgan desk forward matches its shape walk and value ranges") {
  auto p = build_dcgan<float>(16, 4, 16, 8, 8, Init::normal_002, 9);
  Rng rng(13);
  Tape<float> tp;
  auto z = rand_t<float>({2, 16, 1, 1}, rng);
  auto img = p.gen.forward(tp, z, true);
  auto grows = forward_shapes(p.gen);
  CHECK(img.shape() == Shape{2, grows.back().c, grows.back().h, grows.back().w});
  CHECK(img.shape() == Shape{2, 1, 16, 16});
  for (float v : img.v()) {
    CHECK(v >= -1.0f);
    CHECK(v <= 1.0f);
  }
  auto score = p.disc.forward(tp, img, true);
  CHECK(score.shape() == Shape{2, 1, 1, 1});
  for (float v : score.v()) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }
  CHECK_THROWS_AS(p.gen.forward(tp, rand_t<float>({2, 5, 1, 1}, rng), false), TensorError);
  CHECK_THROWS_AS(p.disc.forward(tp, rand_t<float>({2, 1, 8, 8}, rng), false), TensorError);
}

TEST_CASE("srresgan desk forward matches its shape walk") {
  auto p = build_srresgan<float>(16, 2, 32, 8, 8, Init::he_normal_fanin, 21);
  Rng rng(17);
  Tape<float> tp;
  auto z = rand_t<float>({2, 16, 1, 1}, rng);
  auto img = p.gen.forward(tp, z, true);
  CHECK(img.shape() == Shape{2, 1, 32, 32});
  for (float v : img.v()) {
    CHECK(v >= -1.0f);
    CHECK(v <= 1.0f);
  }
  auto score = p.disc.forward(tp, img, true);
  CHECK(score.shape() == Shape{2, 1, 1, 1});
  auto rows = forward_shapes(p.gen);
  CHECK(rows.back().h == 32);
}

TEST_CASE("progan desk forwards for stabilize and transition stages") {
  Rng rng(23);
  for (auto st : {ProGANStage{4, false, 1.0}, ProGANStage{8, false, 1.0},
                  ProGANStage{8, true, 0.3}, ProGANStage{16, true, 0.8}}) {
    CAPTURE(st.resolution);
    CAPTURE(st.transition);
    auto p = build_progan<float>(st, 8, 16, 16, 4, Init::he_normal_fanin, 31);
    Tape<float> tp;
    auto z = rand_t<float>({3, 8, 1, 1}, rng);
    auto img = p.gen.forward(tp, z, false);
    CHECK(img.shape() == Shape{3, 1, st.resolution, st.resolution});
    for (float v : img.v()) {
      CHECK(v >= -1.0f);
      CHECK(v <= 1.0f);
    }
    auto score = p.disc.forward(tp, img, false);
    CHECK(score.shape() == Shape{3, 1, 1, 1});
    auto rows = forward_shapes(p.gen);
    CHECK(rows.back().h == st.resolution);
  }
}

TEST_CASE("progan stages share parameters by name across builds") {
  auto s4 = build_progan<float>(ProGANStage{4, false, 1.0}, 8, 16, 16, 4,
                                Init::he_normal_fanin, 77);
  auto t8 = build_progan<float>(ProGANStage{8, true, 0.5}, 8, 16, 16, 4,
                                Init::he_normal_fanin, 77);
  auto find = [](const Model<float>& m, const std::string& name) -> const Tensor<float>* {
    for (const auto& p : m.params)
      if (p.name == name) return &p.t;
    return nullptr;
  };
  for (const char* name : {"g4.c1.w", "g4.c2.w", "torgb4.w"}) {
    auto* a = find(s4.gen, name);
    auto* b = find(t8.gen, name);
    REQUIRE(a != nullptr);
    REQUIRE(b != nullptr);
    CHECK(a->v() == b->v());
  }
}

TEST_CASE("progan transition blend endpoints") {
  const uint64_t seed = 101;
  auto s4 = build_progan<float>(ProGANStage{4, false, 1.0}, 8, 16, 16, 4,
                                Init::he_normal_fanin, seed);
  auto s8 = build_progan<float>(ProGANStage{8, false, 1.0}, 8, 16, 16, 4,
                                Init::he_normal_fanin, seed);
  auto tr = build_progan<float>(ProGANStage{8, true, 0.0}, 8, 16, 16, 4,
                                Init::he_normal_fanin, seed);
  Rng rng(3);
  auto z = rand_t<float>({2, 8, 1, 1}, rng);
  auto x8 = rand_t<float>({2, 1, 8, 8}, rng);

  SUBCASE("generator at alpha 0 equals the upsampled previous stage") {
    Tape<float> tp;
    tr.gen.alpha = 0.0;
    auto got = tr.gen.forward(tp, z, false);
    auto prev = upsample2(tp, s4.gen.forward(tp, z, false));
    CHECK(max_abs_diff(got, prev) < 1e-6);
  }
  SUBCASE("generator at alpha 1 equals the new stage exactly") {
    Tape<float> tp;
    tr.gen.alpha = 1.0;
    auto got = tr.gen.forward(tp, z, false);
    auto pure = s8.gen.forward(tp, z, false);
    CHECK(max_abs_diff(got, pure) == 0.0);
  }
  SUBCASE("discriminator at alpha 0 equals the previous stage on downsampled input") {
    Tape<float> tp;
    tr.disc.alpha = 0.0;
    auto got = tr.disc.forward(tp, x8, false);
    auto prev = s4.disc.forward(tp, avgpool2(tp, x8), false);
    CHECK(max_abs_diff(got, prev) < 1e-6);
  }
  SUBCASE("discriminator at alpha 1 equals the new stage exactly") {
    Tape<float> tp;
    tr.disc.alpha = 1.0;
    auto got = tr.disc.forward(tp, x8, false);
    auto pure = s8.disc.forward(tp, x8, false);
    CHECK(max_abs_diff(got, pure) == 0.0);
  }
}

TEST_CASE("srresgan desk generator passes an end-to-end gradient check") {
  auto p = build_srresgan<double>(8, 1, 16, 4, 4, Init::he_normal_fanin, 41);
  Rng rng(43);
  auto probe = rand_t<double>({1, 1, 16, 16}, rng);
  auto z0 = rand_t<double>({1, 8, 1, 1}, rng);
  auto f = [&](Tape<double>& tp, const Tensor<double>& z) {
    auto img = p.gen.forward(tp, z, false);
    return mean_all(tp, mul(tp, img, broadcast_to(tp, probe, img.shape())));
  };
  CHECK(grad_check(f, z0) < 1e-3);
}

TEST_CASE("unet desk model passes an end-to-end gradient check") {
  auto m = build_unet<double>(8, true, 0.0, Init::he_normal_fanin, 47, 16);
  Rng rng(53);
  auto probe = rand_t<double>({1, 1, 16, 16}, rng);
  auto x0 = rand_t<double>({1, 1, 16, 16}, rng, 0.0, 1.0);
  auto f = [&](Tape<double>& tp, const Tensor<double>& x) {
    auto y = m.forward(tp, x, false);
    return mean_all(tp, mul(tp, y, broadcast_to(tp, probe, y.shape())));
  };
  CHECK(grad_check(f, x0) < 1e-4);
}

TEST_CASE("gradient flows into a model weight through the registry") {
  auto p = build_dcgan<double>(4, 4, 16, 8, 8, Init::normal_002, 59);
  auto& g = p.gen;
  size_t idx = 0;
  for (size_t i = 0; i < g.params.size(); ++i)
    if (g.params[i].name == "g.out.w") idx = i;
  REQUIRE(g.params[idx].name == "g.out.w");
  Rng rng(61);
  auto probe = rand_t<double>({1, 1, 16, 16}, rng);
  auto z = rand_t<double>({1, 4, 1, 1}, rng);
  auto w0 = g.params[idx].t.detached();
  auto f = [&](Tape<double>& tp, const Tensor<double>& w) {
    g.params[idx].t = w;
    auto img = g.forward(tp, z, false);
    return mean_all(tp, mul(tp, img, broadcast_to(tp, probe, img.shape())));
  };
  CHECK(grad_check(f, w0) < 1e-4);
  g.params[idx].t = w0;
}

TEST_CASE("dynamic scaling stores unit-normal weights and scales at forward") {
  auto p = build_progan<float>(ProGANStage{4, false, 1.0}, 64, 256, 512, 16,
                               Init::dynamic_scaled, 71);
  const Tensor<float>* w = nullptr;
  for (const auto& prm : p.gen.params)
    if (prm.name == "g4.c2.w") w = &prm.t;
  REQUIRE(w != nullptr);
  double sum = 0, sq = 0;
  for (float v : w->v()) {
    sum += v;
    sq += double(v) * v;
  }
  const double n = double(w->size());
  const double sd = std::sqrt(sq / n - (sum / n) * (sum / n));
  CHECK(sd == doctest::Approx(1.0).epsilon(0.05));
  bool scaled = false;
  for (const auto& nd : p.gen.nodes)
    if (nd.w >= 0 && nd.wscale != 1.0) scaled = true;
  CHECK(scaled);
}

TEST_CASE("topology dump prints one row per table line") {
  auto m = build_unet<float>(32, true, 0.0, Init::he_normal_fanin, 1, 128, false);
  auto text = topology(m);
  CHECK(text.find("Conv 3x3 | BN+ReLU | 32 x 128 x 128") != std::string::npos);
  CHECK(text.find("Concatenate l4 | - | 512 x 16 x 16") != std::string::npos);
  CHECK(text.find("Conv 1x1 | Sigmoid | 1 x 128 x 128") != std::string::npos);
  size_t lines = 0;
  for (char ch : text)
    if (ch == '\n') ++lines;
  CHECK(lines == unet_rows().size());
}
