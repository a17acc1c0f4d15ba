#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mrgf/rng.hpp"
#include "mrgf/tensor.hpp"

namespace mrgf {

// Images are rank-2 [H, W] float tensors in one of two declared ranges.
enum class Range { zero_one, sym_one };

inline float range_lo(Range r) { return r == Range::zero_one ? 0.0f : -1.0f; }
inline float range_hi(Range) { return 1.0f; }
inline const char* range_name(Range r) { return r == Range::zero_one ? "0,1" : "-1,1"; }

struct ImageCorpus {
  std::vector<Tensor<float>> images;
  std::vector<Tensor<float>> masks;  // empty, or paired 1:1 with images
  Range range = Range::zero_one;

  int64_t size() const { return int64_t(images.size()); }
  int64_t h() const { return images.empty() ? 0 : images.front().dim(0); }
  int64_t w() const { return images.empty() ? 0 : images.front().dim(1); }
};

inline void validate_corpus(const ImageCorpus& c) {
  if (c.images.empty()) throw TensorError("corpus: no images");
  if (!c.masks.empty() && c.masks.size() != c.images.size())
    throw TensorError("corpus: " + std::to_string(c.masks.size()) + " masks for " +
                      std::to_string(c.images.size()) + " images");
  const float lo = range_lo(c.range), hi = range_hi(c.range);
  for (size_t i = 0; i < c.images.size(); ++i) {
    const auto& img = c.images[i];
    if (img.rank() != 2 || img.shape() != c.images.front().shape())
      throw TensorError("corpus: image " + std::to_string(i) + " has shape " +
                        shape_str(img.shape()) + ", expected " +
                        shape_str(c.images.front().shape()));
    for (float v : img.v())
      if (v < lo || v > hi)
        throw TensorError("corpus: image " + std::to_string(i) + " holds " + std::to_string(v) +
                          " outside [" + range_name(c.range) + "]");
    if (!c.masks.empty()) {
      const auto& m = c.masks[i];
      if (m.shape() != img.shape())
        throw TensorError("corpus: mask " + std::to_string(i) + " shape mismatch");
      for (float v : m.v())
        if (v != 0.0f && v != 1.0f)
          throw TensorError("corpus: mask " + std::to_string(i) + " is not binary");
    }
  }
}

// --- PGM I/O -----------------------------------------------------------

// Binary PGM (P5), 8-bit or 16-bit big-endian, one image per file. Loaded
// samples land in [0, 1] as value / maxval.
namespace detail {

struct PgmCursor {
  const std::string& buf;
  size_t pos = 0;
  const std::string& path;

  [[noreturn]] void fail(const std::string& why) const {
    throw TensorError("load_pgm: " + path + ": " + why + " at byte " + std::to_string(pos));
  }
  void skip_space() {
    while (pos < buf.size()) {
      const char ch = buf[pos];
      if (ch == '#') {
        while (pos < buf.size() && buf[pos] != '\n') ++pos;
      } else if (ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n') {
        ++pos;
      } else {
        return;
      }
    }
  }
  int64_t read_uint(const char* what) {
    skip_space();
    if (pos >= buf.size() || buf[pos] < '0' || buf[pos] > '9')
      fail(std::string("expected ") + what);
    int64_t v = 0;
    while (pos < buf.size() && buf[pos] >= '0' && buf[pos] <= '9') {
      v = v * 10 + (buf[pos] - '0');
      if (v > int64_t(1) << 40) fail(std::string("absurd ") + what);
      ++pos;
    }
    return v;
  }
};

}  // namespace detail

inline Tensor<float> load_pgm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw TensorError("load_pgm: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  detail::PgmCursor c{buf, 0, path};
  if (buf.size() < 2 || buf[0] != 'P' || buf[1] != '5') c.fail("expected P5 magic");
  c.pos = 2;
  const int64_t w = c.read_uint("width");
  const int64_t h = c.read_uint("height");
  const int64_t maxval = c.read_uint("maxval");
  if (w < 1 || h < 1) c.fail("non-positive dimensions");
  if (maxval < 1 || maxval > 65535) c.fail("maxval out of [1, 65535]");
  if (c.pos >= buf.size()) c.fail("missing separator after maxval");
  const char sep = buf[c.pos];
  if (sep != ' ' && sep != '\t' && sep != '\r' && sep != '\n') c.fail("expected whitespace after maxval");
  ++c.pos;

  const int bytes = maxval > 255 ? 2 : 1;
  const size_t need = size_t(w) * size_t(h) * size_t(bytes);
  if (buf.size() - c.pos < need)
    throw TensorError("load_pgm: " + path + ": truncated pixel data, need " + std::to_string(need) +
                      " bytes but only " + std::to_string(buf.size() - c.pos) + " remain at byte " +
                      std::to_string(c.pos));

  auto img = Tensor<float>::zeros({h, w});
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data()) + c.pos;
  for (int64_t i = 0; i < h * w; ++i) {
    const int64_t raw = bytes == 1 ? p[i] : (int64_t(p[2 * i]) << 8) | p[2 * i + 1];
    img.v()[size_t(i)] = float(double(raw) / double(maxval));
  }
  return img;
}

inline void save_pgm(const Tensor<float>& img, const std::string& path, int bits = 16) {
  if (img.rank() != 2) throw TensorError("save_pgm: expects a rank-2 image");
  if (bits != 8 && bits != 16) throw TensorError("save_pgm: bits must be 8 or 16");
  const int64_t maxval = bits == 8 ? 255 : 65535;
  for (float v : img.v())
    if (v < -1e-6f || v > 1.0f + 1e-6f)
      throw TensorError("save_pgm: value " + std::to_string(v) + " outside [0, 1]");

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw TensorError("save_pgm: cannot open " + path + " for writing");
  f << "P5\n" << img.dim(1) << " " << img.dim(0) << "\n" << maxval << "\n";
  for (float v : img.v()) {
    int64_t q = std::llround(double(v) * double(maxval));
    q = std::min(maxval, std::max(int64_t(0), q));
    if (bits == 8) {
      const unsigned char b = static_cast<unsigned char>(q);
      f.write(reinterpret_cast<const char*>(&b), 1);
    } else {
      const unsigned char b[2] = {static_cast<unsigned char>(q >> 8),
                                  static_cast<unsigned char>(q & 0xff)};
      f.write(reinterpret_cast<const char*>(b), 2);
    }
  }
  if (!f) throw TensorError("save_pgm: write failed for " + path);
}

// --- rescaling -----------------------------------------------------------

inline Tensor<float> rescale(const Tensor<float>& img, float from_lo, float from_hi, float to_lo,
                             float to_hi) {
  if (!(from_hi > from_lo))
    throw TensorError("rescale: degenerate source range [" + std::to_string(from_lo) + ", " +
                      std::to_string(from_hi) + "]");
  auto out = img.detached();
  const double scale = (double(to_hi) - to_lo) / (double(from_hi) - from_lo);
  for (auto& v : out.v()) {
    v = float((double(v) - from_lo) * scale + to_lo);
    v = std::min(to_hi, std::max(to_lo, v));
  }
  return out;
}

inline ImageCorpus rescale_corpus(const ImageCorpus& c, Range target) {
  ImageCorpus out;
  out.range = target;
  out.masks = c.masks;
  out.images.reserve(c.images.size());
  for (const auto& img : c.images)
    out.images.push_back(
        rescale(img, range_lo(c.range), range_hi(c.range), range_lo(target), range_hi(target)));
  return out;
}

// --- augmentation --------------------------------------------------------

struct AugmentProfile {
  double rot_lo = 0.0, rot_hi = 0.0;  // degrees; sampled magnitude gets a random sign
  bool hflip = false;
  double shift_frac = 0.0;
  double zoom_frac = 0.0;
};

inline void validate_profile(const AugmentProfile& p) {
  if (p.rot_lo < 0 || p.rot_hi > 180 || p.rot_lo > p.rot_hi)
    throw TensorError("augment: rotation bounds must satisfy 0 <= lo <= hi <= 180");
  if (p.shift_frac < 0 || p.shift_frac > 0.5)
    throw TensorError("augment: shift_frac must lie in [0, 0.5]");
  if (p.zoom_frac < 0 || p.zoom_frac > 0.5)
    throw TensorError("augment: zoom_frac must lie in [0, 0.5]");
}

// One concrete transform. Sampling and application are split so tests can
// force specific transforms.
struct AugmentParams {
  double angle_deg = 0.0;
  bool flip = false;
  int64_t dx = 0, dy = 0;
  double zoom = 1.0;
};

// Draw order is fixed (magnitude, sign, flip, dx, dy, zoom) and every draw
// happens even for disabled components, so the stream position never depends
// on the profile contents.
inline AugmentParams sample_augment(const AugmentProfile& p, int64_t h, int64_t w, Rng& rng) {
  validate_profile(p);
  AugmentParams a;
  const double mag = rng.uniform(p.rot_lo, p.rot_hi);
  a.angle_deg = rng.uniform() < 0.5 ? -mag : mag;
  const bool coin = rng.uniform() < 0.5;
  a.flip = p.hflip && coin;
  a.dx = std::llround(rng.uniform(-p.shift_frac * double(w), p.shift_frac * double(w)));
  a.dy = std::llround(rng.uniform(-p.shift_frac * double(h), p.shift_frac * double(h)));
  a.zoom = 1.0 + rng.uniform(-p.zoom_frac, p.zoom_frac);
  return a;
}

struct Augmented {
  Tensor<float> image;
  Tensor<float> mask;  // undefined when no mask was given
};

// Rotation and zoom about the image centre, then horizontal flip, then the
// integer shift. Images sample bilinearly, masks nearest and re-binarized;
// out-of-frame pixels take the range minimum.
inline Augmented apply_augment(const Tensor<float>& image, const Tensor<float>* mask,
                               const AugmentParams& a, Range range) {
  if (image.rank() != 2) throw TensorError("augment: expects a rank-2 image");
  if (mask && mask->shape() != image.shape())
    throw TensorError("augment: mask shape differs from image");
  const int64_t h = image.dim(0), w = image.dim(1);
  const double cx = double(w - 1) / 2.0, cy = double(h - 1) / 2.0;
  const double rad = a.angle_deg * 3.14159265358979323846 / 180.0;
  const double co = std::cos(rad), si = std::sin(rad);
  const float lo = range_lo(range), hi = range_hi(range);

  Augmented out;
  out.image = Tensor<float>::zeros({h, w});
  if (mask) out.mask = Tensor<float>::zeros({h, w});

  for (int64_t yo = 0; yo < h; ++yo) {
    for (int64_t xo = 0; xo < w; ++xo) {
      double x1 = double(xo - a.dx), y1 = double(yo - a.dy);
      if (a.flip) x1 = double(w - 1) - x1;
      const double xr = x1 - cx, yr = y1 - cy;
      const double xs = (co * xr + si * yr) / a.zoom + cx;
      const double ys = (-si * xr + co * yr) / a.zoom + cy;

      const double xf = std::floor(xs), yf = std::floor(ys);
      const int64_t x0 = int64_t(xf), y0 = int64_t(yf);
      const double fx = xs - xf, fy = ys - yf;
      auto at = [&](int64_t yy, int64_t xx) -> double {
        if (yy < 0 || yy >= h || xx < 0 || xx >= w) return double(lo);
        return double(image.v()[size_t(yy * w + xx)]);
      };
      double v = (1 - fx) * (1 - fy) * at(y0, x0) + fx * (1 - fy) * at(y0, x0 + 1) +
                 (1 - fx) * fy * at(y0 + 1, x0) + fx * fy * at(y0 + 1, x0 + 1);
      v = std::min(double(hi), std::max(double(lo), v));
      out.image.v()[size_t(yo * w + xo)] = float(v);

      if (mask) {
        const int64_t xn = std::llround(xs), yn = std::llround(ys);
        double mv = 0.0;
        if (yn >= 0 && yn < h && xn >= 0 && xn < w) mv = double(mask->v()[size_t(yn * w + xn)]);
        out.mask.v()[size_t(yo * w + xo)] = mv >= 0.5 ? 1.0f : 0.0f;
      }
    }
  }
  return out;
}

inline Augmented augment(const Tensor<float>& image, const Tensor<float>* mask,
                         const AugmentProfile& p, Rng& rng, Range range) {
  return apply_augment(image, mask, sample_augment(p, image.dim(0), image.dim(1), rng), range);
}

// --- synthetic corpora ----------------------------------------------------

// One Gaussian blob per image, centred near one of `modes` fixed cluster
// locations (evenly spaced on a circle around the image centre, or the
// centre itself for a single mode). Masks are the blob support at half max.
inline ImageCorpus synthetic_blobs(int64_t n, int64_t res, int64_t modes, Rng& rng) {
  if (n < 1) throw TensorError("synthetic_blobs: need at least one image");
  if (res < 8) throw TensorError("synthetic_blobs: resolution must be at least 8");
  if (modes < 1) throw TensorError("synthetic_blobs: modes must be >= 1");

  const double c = double(res - 1) / 2.0;
  std::vector<std::pair<double, double>> locs;
  for (int64_t k = 0; k < modes; ++k) {
    if (modes == 1) {
      locs.emplace_back(c, c);
    } else {
      const double ang = 2.0 * 3.14159265358979323846 * double(k) / double(modes);
      locs.emplace_back(c + 0.25 * double(res) * std::cos(ang),
                        c + 0.25 * double(res) * std::sin(ang));
    }
  }

  ImageCorpus corpus;
  corpus.range = Range::zero_one;
  for (int64_t i = 0; i < n; ++i) {
    const auto& loc = locs[size_t(rng.below(uint64_t(modes)))];
    // jitter is kept small so a single cluster spans only a few principal
    // modes of variation (position x/y and size)
    const double bx = loc.first + rng.normal(0.0, double(res) / 48.0);
    const double by = loc.second + rng.normal(0.0, double(res) / 48.0);
    const double sig = double(res) / 8.0 * (1.0 + rng.uniform(-0.10, 0.10));

    auto img = Tensor<float>::zeros({res, res});
    float peak = 0.0f;
    for (int64_t y = 0; y < res; ++y)
      for (int64_t x = 0; x < res; ++x) {
        const double d2 = (double(x) - bx) * (double(x) - bx) + (double(y) - by) * (double(y) - by);
        const float v = float(std::exp(-d2 / (2.0 * sig * sig)));
        img.v()[size_t(y * res + x)] = v;
        peak = std::max(peak, v);
      }
    auto msk = Tensor<float>::zeros({res, res});
    for (int64_t j = 0; j < res * res; ++j)
      msk.v()[size_t(j)] = img.v()[size_t(j)] >= 0.5f * peak ? 1.0f : 0.0f;
    corpus.images.push_back(std::move(img));
    corpus.masks.push_back(std::move(msk));
  }
  return corpus;
}

// --- train/test split ------------------------------------------------------

struct SplitIndices {
  std::vector<int64_t> train, test;
};

// Fixed two-thirds / one-third split: every index gets a stateless hash
// score and the top third becomes the test set. No seed on purpose — the
// split is a property of the corpus size alone.
inline SplitIndices split_two_thirds(int64_t n) {
  if (n < 1) throw TensorError("split_two_thirds: empty corpus");
  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[size_t(i)] = i;
  std::sort(order.begin(), order.end(), [](int64_t a, int64_t b) {
    uint64_t xa = uint64_t(a), xb = uint64_t(b);
    const uint64_t ha = Rng::splitmix64(xa), hb = Rng::splitmix64(xb);
    return ha != hb ? ha > hb : a < b;
  });
  SplitIndices s;
  const int64_t ntest = n / 3;
  s.test.assign(order.begin(), order.begin() + ntest);
  s.train.assign(order.begin() + ntest, order.end());
  std::sort(s.test.begin(), s.test.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

inline ImageCorpus subset(const ImageCorpus& c, const std::vector<int64_t>& idx) {
  ImageCorpus out;
  out.range = c.range;
  for (int64_t i : idx) {
    if (i < 0 || i >= c.size())
      throw TensorError("subset: index " + std::to_string(i) + " out of range");
    out.images.push_back(c.images[size_t(i)]);
    if (!c.masks.empty()) out.masks.push_back(c.masks[size_t(i)]);
  }
  return out;
}

// --- batching ---------------------------------------------------------

struct Batch {
  Tensor<float> images;  // [B, 1, H, W]
  Tensor<float> masks;   // [B, 1, H, W] when the corpus is paired
};

// Deterministic single-consumer batch source. With steps_per_epoch unset an
// epoch is one seeded shuffle consumed in floor(N / batch) chunks; with it
// set, every batch draws indices with replacement, which is what lets a
// 30-image corpus serve 1000 augmented steps per epoch. The corpus must
// outlive the stream.
class BatchStream {
 public:
  BatchStream(const ImageCorpus& corpus, int64_t batch, uint64_t seed, int64_t steps_per_epoch = 0,
              const AugmentProfile* aug = nullptr)
      : c_(corpus), batch_(batch), steps_(steps_per_epoch), rng_(seed) {
    validate_corpus(corpus);
    if (aug) {
      validate_profile(*aug);
      aug_ = *aug;
      use_aug_ = true;
    }
    if (batch_ < 1) throw TensorError("batches: batch size must be positive");
    if (steps_ < 0) throw TensorError("batches: steps_per_epoch must be >= 0");
    if (steps_ == 0 && batch_ > c_.size())
      throw TensorError("batches: batch size " + std::to_string(batch_) + " exceeds corpus size " +
                        std::to_string(c_.size()) + " and steps_per_epoch is unset");
  }

  int64_t batches_per_epoch() const { return steps_ > 0 ? steps_ : c_.size() / batch_; }
  int64_t epoch() const { return epoch_; }
  int64_t step_in_epoch() const { return step_; }

  Batch next() {
    // the shuffle is drawn lazily at the first batch of an epoch, so at an
    // epoch boundary the stream state is exactly the rng state
    if (steps_ == 0 && perm_.empty()) perm_ = rng_.permutation(c_.size());
    std::vector<int64_t> idx(static_cast<size_t>(batch_));
    if (steps_ > 0) {
      for (auto& i : idx) i = int64_t(rng_.below(uint64_t(c_.size())));
    } else {
      for (int64_t j = 0; j < batch_; ++j) idx[size_t(j)] = perm_[size_t(cursor_ + j)];
    }
    advance();
    return gather(idx);
  }

  Rng& rng() { return rng_; }

  // Rebuild the stream position from a checkpoint. Valid mid-epoch only in
  // the with-replacement mode; the shuffle mode resumes at epoch boundaries.
  void restore(const std::array<uint64_t, 4>& rng_state, int64_t epoch, int64_t step) {
    if (steps_ == 0 && step != 0)
      throw TensorError("batches: shuffled streams resume only at an epoch boundary");
    rng_.set_state(rng_state);
    epoch_ = epoch;
    step_ = step;
    cursor_ = 0;
    perm_.clear();
  }

 private:
  void advance() {
    ++step_;
    if (step_ >= batches_per_epoch()) {
      step_ = 0;
      ++epoch_;
      cursor_ = 0;
      perm_.clear();
    } else if (steps_ == 0) {
      cursor_ += batch_;
    }
  }

  Batch gather(const std::vector<int64_t>& idx) {
    const int64_t h = c_.h(), w = c_.w();
    Batch b;
    b.images = Tensor<float>::zeros({batch_, 1, h, w});
    const bool masked = !c_.masks.empty();
    if (masked) b.masks = Tensor<float>::zeros({batch_, 1, h, w});
    for (int64_t j = 0; j < batch_; ++j) {
      const auto& img = c_.images[size_t(idx[size_t(j)])];
      const Tensor<float>* msk = masked ? &c_.masks[size_t(idx[size_t(j)])] : nullptr;
      if (use_aug_) {
        auto aug = augment(img, msk, aug_, rng_, c_.range);
        std::copy(aug.image.v().begin(), aug.image.v().end(),
                  b.images.v().begin() + j * h * w);
        if (masked)
          std::copy(aug.mask.v().begin(), aug.mask.v().end(), b.masks.v().begin() + j * h * w);
      } else {
        std::copy(img.v().begin(), img.v().end(), b.images.v().begin() + j * h * w);
        if (masked) std::copy(msk->v().begin(), msk->v().end(), b.masks.v().begin() + j * h * w);
      }
    }
    return b;
  }

  const ImageCorpus& c_;
  int64_t batch_;
  int64_t steps_;
  Rng rng_;
  AugmentProfile aug_;
  bool use_aug_ = false;
  std::vector<int64_t> perm_;
  int64_t cursor_ = 0, step_ = 0, epoch_ = 0;
};

// --- corpus loading ---------------------------------------------------

namespace detail {

inline ImageCorpus load_paths(const std::vector<std::filesystem::path>& files, Range declared) {
  if (files.empty()) throw TensorError("load_corpus: no images listed");
  ImageCorpus c;
  c.range = Range::zero_one;
  bool any_mask = false, all_masks = true;
  std::vector<std::filesystem::path> mask_paths;
  for (const auto& p : files) {
    const auto mp = p.parent_path() / "masks" / p.filename();
    mask_paths.push_back(mp);
    if (std::filesystem::exists(mp)) any_mask = true;
    else all_masks = false;
  }
  if (any_mask && !all_masks)
    throw TensorError("load_corpus: masks/ directory is missing some paired files");
  for (size_t i = 0; i < files.size(); ++i) {
    c.images.push_back(load_pgm(files[i].string()));
    if (any_mask) {
      auto m = load_pgm(mask_paths[i].string());
      for (auto& v : m.v()) v = v >= 0.5f ? 1.0f : 0.0f;
      c.masks.push_back(std::move(m));
    }
  }
  if (declared != Range::zero_one) c = rescale_corpus(c, declared);
  validate_corpus(c);
  return c;
}

}  // namespace detail

// Every .pgm directly inside `dir`, sorted by filename; a sibling masks/
// directory pairs masks by identical filename.
inline ImageCorpus load_corpus_dir(const std::string& dir, Range declared = Range::zero_one) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw TensorError("load_corpus: " + dir + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".pgm") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return detail::load_paths(files, declared);
}

// Manifest: one image path per line, relative to the manifest's directory;
// '#' starts a comment.
inline ImageCorpus load_corpus_manifest(const std::string& manifest,
                                        Range declared = Range::zero_one) {
  namespace fs = std::filesystem;
  std::ifstream f(manifest);
  if (!f) throw TensorError("load_corpus: cannot open manifest " + manifest);
  const fs::path base = fs::path(manifest).parent_path();
  std::vector<fs::path> files;
  std::string line;
  while (std::getline(f, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    while (!line.empty() && (line.back() == ' ' || line.back() == '\t' || line.back() == '\r'))
      line.pop_back();
    size_t start = 0;
    while (start < line.size() && (line[start] == ' ' || line[start] == '\t')) ++start;
    line.erase(0, start);
    if (line.empty()) continue;
    files.push_back(base / line);
  }
  return detail::load_paths(files, declared);
}

// --- bridges to the evaluation side ------------------------------------

// Flattens a corpus (or the [B, C, H, W] output of a generator) into the
// N x D row matrix the PCA scores consume.
inline Tensor<double> flatten_rows(const ImageCorpus& c) {
  validate_corpus(c);
  const int64_t n = c.size(), d = c.h() * c.w();
  auto rows = Tensor<double>::zeros({n, d});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j)
      rows.v()[size_t(i * d + j)] = double(c.images[size_t(i)].v()[size_t(j)]);
  return rows;
}

template <class S>
Tensor<double> flatten_rows(const Tensor<S>& batch) {
  if (batch.rank() != 4) throw TensorError("flatten_rows: expects a [B, C, H, W] batch");
  const int64_t n = batch.dim(0), d = batch.size() / batch.dim(0);
  auto rows = Tensor<double>::zeros({n, d});
  for (int64_t i = 0; i < n * d; ++i) rows.v()[size_t(i)] = double(batch.v()[size_t(i)]);
  return rows;
}

}  // namespace mrgf
