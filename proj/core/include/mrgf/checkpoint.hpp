#pragma once

#include <cmath>
#include <cstring>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "mrgf/optim.hpp"
#include "mrgf/rng.hpp"
#include "mrgf/tensor.hpp"

// Single-file binary checkpoint. Layout: magic "MRGF", u32 version, u32
// tensor count, then per tensor u16 name length + name, u8 rank, u32 dims,
// f32 little-endian data. Besides parameters the file carries reserved
// entries: "__meta__" (config/progress text, one byte per float),
// "__opt_<tag>__/steps" plus "/m/<param>" and "/v/<param>" moment vectors,
// and "__rng_<tag>__" (the four 64-bit state words bit-cast into eight
// floats, so restoring is exact).

namespace mrgf {

struct CkptEntry {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

namespace detail {

inline void put_u16(std::string& b, uint16_t v) {
  b.push_back(char(v & 0xff));
  b.push_back(char(v >> 8));
}

inline void put_u32(std::string& b, uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(char((v >> (8 * i)) & 0xff));
}

struct ByteCursor {
  const std::string& b;
  size_t pos = 0;
  std::string origin;

  void need(size_t n, const char* what) const {
    if (pos + n > b.size())
      throw TensorError(origin + ": truncated reading " + what + " at byte " +
                        std::to_string(pos));
  }
  uint16_t u16(const char* what) {
    need(2, what);
    const auto lo = uint8_t(b[pos]), hi = uint8_t(b[pos + 1]);
    pos += 2;
    return uint16_t(lo | (hi << 8));
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(uint8_t(b[pos + size_t(i)])) << (8 * i);
    pos += 4;
    return v;
  }
  uint8_t u8(const char* what) {
    need(1, what);
    return uint8_t(b[pos++]);
  }
};

}  // namespace detail

class Checkpoint {
 public:
  std::vector<CkptEntry> entries;

  const CkptEntry* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &entries[it->second];
  }

  const CkptEntry& at(const std::string& name) const {
    const auto* e = find(name);
    if (!e) throw TensorError("checkpoint: missing entry '" + name + "'");
    return *e;
  }

  void add(std::string name, Shape shape, std::vector<float> data) {
    int64_t n = 1;
    for (auto d : shape) n *= d;
    if (n != int64_t(data.size()))
      throw TensorError("checkpoint: entry '" + name + "' shape/data mismatch");
    if (name.size() > 0xffff) throw TensorError("checkpoint: entry name too long");
    if (index_.count(name)) throw TensorError("checkpoint: duplicate entry '" + name + "'");
    index_[name] = entries.size();
    entries.push_back({std::move(name), std::move(shape), std::move(data)});
  }

  void add_text(const std::string& name, const std::string& text) {
    std::vector<float> bytes(text.size());
    for (size_t i = 0; i < text.size(); ++i) bytes[i] = float(uint8_t(text[i]));
    add(name, {int64_t(text.size())}, std::move(bytes));
  }

  std::string text_of(const std::string& name) const {
    const auto& e = at(name);
    std::string s(e.data.size(), '\0');
    for (size_t i = 0; i < e.data.size(); ++i) s[i] = char(uint8_t(e.data[i]));
    return s;
  }

  void set_meta(const std::string& text) { add_text("__meta__", text); }
  std::string meta_text() const { return text_of("__meta__"); }

  // Model parameters are refused when non-finite: a checkpoint of a diverged
  // run would only reproduce the divergence.
  void add_params(const std::vector<Param<float>>& params) {
    for (const auto& p : params) {
      for (float w : p.t.v())
        if (!std::isfinite(w))
          throw TensorError("checkpoint: parameter '" + p.name + "' is not finite");
      add(p.name, p.t.shape(), p.t.v());
    }
  }

  // Moment vectors are written in parameter order so files from identical
  // runs are byte-identical.
  void add_adam(const std::string& tag, const Adam<float>& opt,
                const std::vector<Param<float>>& params) {
    const std::string base = "__opt_" + tag + "__";
    add(base + "/steps", {1}, {float(opt.steps())});
    for (const auto& p : params) {
      auto it = opt.state().find(p.name);
      if (it == opt.state().end()) continue;  // never stepped (e.g. frozen)
      add(base + "/m/" + p.name, {int64_t(it->second.m.size())}, it->second.m);
      add(base + "/v/" + p.name, {int64_t(it->second.v.size())}, it->second.v);
    }
  }

  void add_rng(const std::string& tag, const Rng& rng) {
    const auto st = rng.state();
    std::vector<float> words(8);
    std::memcpy(words.data(), st.data(), 32);
    add("__rng_" + tag + "__", {8}, std::move(words));
  }

  void bind_params(std::vector<Param<float>>& params) const {
    for (auto& p : params) {
      const auto& e = at(p.name);
      if (e.shape != p.t.shape())
        throw TensorError("checkpoint: entry '" + p.name + "' has shape " + shape_str(e.shape) +
                          ", model expects " + shape_str(p.t.shape()));
      p.t.v() = e.data;
    }
  }

  void bind_adam(const std::string& tag, Adam<float>& opt,
                 const std::vector<Param<float>>& params) const {
    const std::string base = "__opt_" + tag + "__";
    opt.set_steps(int64_t(at(base + "/steps").data[0]));
    opt.state().clear();
    for (const auto& p : params) {
      const auto* m = find(base + "/m/" + p.name);
      const auto* v = find(base + "/v/" + p.name);
      if (!m || !v) continue;
      if (m->data.size() != p.t.v().size() || v->data.size() != p.t.v().size())
        throw TensorError("checkpoint: optimizer moments for '" + p.name + "' have wrong size");
      auto& slot = opt.state()[p.name];
      slot.m = m->data;
      slot.v = v->data;
    }
  }

  Rng restore_rng(const std::string& tag) const {
    const auto& e = at("__rng_" + tag + "__");
    if (e.data.size() != 8)
      throw TensorError("checkpoint: rng entry '" + tag + "' has wrong size");
    std::array<uint64_t, 4> st;
    std::memcpy(st.data(), e.data.data(), 32);
    Rng r(1);
    r.set_state(st);
    return r;
  }

  void write(const std::string& path) const {
    size_t total = 12;
    for (const auto& e : entries)
      total += 3 + e.name.size() + 4 * e.shape.size() + 4 * e.data.size();
    std::string buf;
    buf.reserve(total);
    buf.append("MRGF", 4);
    detail::put_u32(buf, 1);
    detail::put_u32(buf, uint32_t(entries.size()));
    for (const auto& e : entries) {
      detail::put_u16(buf, uint16_t(e.name.size()));
      buf.append(e.name);
      buf.push_back(char(uint8_t(e.shape.size())));
      for (auto d : e.shape) detail::put_u32(buf, uint32_t(d));
      buf.append(reinterpret_cast<const char*>(e.data.data()), 4 * e.data.size());
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw TensorError("checkpoint: cannot write " + path);
    f.write(buf.data(), std::streamsize(buf.size()));
    if (!f) throw TensorError("checkpoint: write failed for " + path);
  }

  // The whole file is parsed before anything binds, so a truncated or
  // corrupt file never leaves a model half-loaded.
  static Checkpoint read(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw TensorError("checkpoint: cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    detail::ByteCursor cur{buf, 0, path};
    cur.need(4, "magic");
    if (buf.compare(0, 4, "MRGF") != 0) throw TensorError(path + ": not a checkpoint file");
    cur.pos = 4;
    const auto version = cur.u32("version");
    if (version != 1)
      throw TensorError(path + ": unsupported checkpoint version " + std::to_string(version));
    const auto count = cur.u32("tensor count");
    Checkpoint ck;
    for (uint32_t i = 0; i < count; ++i) {
      const auto name_len = cur.u16("name length");
      cur.need(name_len, "name");
      std::string name = buf.substr(cur.pos, name_len);
      cur.pos += name_len;
      const auto rank = cur.u8("rank");
      Shape shape(rank);
      int64_t n = 1;
      for (auto& d : shape) {
        d = int64_t(cur.u32("dimension"));
        n *= d;
      }
      std::vector<float> data(static_cast<size_t>(n));
      cur.need(size_t(n) * 4, "tensor data");
      std::memcpy(data.data(), buf.data() + cur.pos, size_t(n) * 4);
      cur.pos += size_t(n) * 4;
      ck.add(std::move(name), std::move(shape), std::move(data));
    }
    if (cur.pos != buf.size())
      throw TensorError(path + ": trailing bytes after last tensor");
    return ck;
  }

 private:
  std::unordered_map<std::string, size_t> index_;
};

}  // namespace mrgf
