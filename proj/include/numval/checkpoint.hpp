#pragma once

#include <bit>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "numval/train.hpp"

namespace numval {

// ---------------------------------------------------------------------------
// Everything a run needs to continue exactly where it stopped.
// ---------------------------------------------------------------------------

template <class Real>
struct TrainerState {
  ModelParams<Real> model;
  OptimState<Real> opt;
  long global_step = 0;      // batches consumed, including skipped ones
  int stage = 1;             // current curriculum stage id
  long step_in_stage = 0;    // schedule counter, resets at stage boundaries
  int consecutive_skips = 0;
  Rng rng{0};

  static TrainerState fresh(const ModelConfig& cfg, std::uint64_t seed) {
    Rng init_rng(seed);
    TrainerState st{ModelParams<Real>::init(cfg, init_rng), {}, 0, 1, 0, 0, Rng::derive(seed, 1)};
    st.opt = OptimState<Real>::init(st.model);
    return st;
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"layers", c.layers},
                     {"d_model", c.d_model},
                     {"n_heads", c.n_heads},
                     {"d_ff", c.d_ff},
                     {"max_len", c.max_len},
                     {"vocab_size", c.vocab_size},
                     {"variant", variant_name(c.variant)},
                     {"numerologic", c.numerologic},
                     {"rnn_digit_dim", c.rnn_digit_dim},
                     {"rnn_hidden", c.rnn_hidden},
                     {"proj_ff", c.proj_ff}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.layers = j.at("layers").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.d_ff = j.at("d_ff").get<int>();
  c.max_len = j.at("max_len").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.variant = variant_from(j.at("variant").get<std::string>());
  c.numerologic = j.value("numerologic", false);
  c.rnn_digit_dim = j.value("rnn_digit_dim", 16);
  c.rnn_hidden = j.value("rnn_hidden", 64);
  c.proj_ff = j.value("proj_ff", 0);
}

// ---------------------------------------------------------------------------
// Checkpoint file: "NVCK" magic, u32 format version, u32 header length, JSON
// header, raw little-endian parameter buffers in traversal order, Adam m/v
// buffers in the same order, and a trailing FNV-1a checksum of all preceding
// bytes. Loads refuse anything whose version, checksum, dtype, or tensor
// inventory does not match.
// ---------------------------------------------------------------------------

namespace detail {

constexpr char kCkptMagic[4] = {'N', 'V', 'C', 'K'};
constexpr std::uint32_t kCkptVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint buffers are written little-endian");

inline void put_u32(std::string& s, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  s.append(b, 4);
}

inline void put_u64(std::string& s, std::uint64_t v) {
  char b[8];
  std::memcpy(b, &v, 8);
  s.append(b, 8);
}

template <class T>
void put_raw(std::string& s, const T* p, std::size_t n) {
  s.append(reinterpret_cast<const char*>(p), n * sizeof(T));
}

struct CkptReader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw IntegrityError("corrupt checkpoint: truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, buf.data() + pos, 4);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v;
    std::memcpy(&v, buf.data() + pos, 8);
    pos += 8;
    return v;
  }
  template <class T>
  void raw(T* out, std::size_t n) {
    need(n * sizeof(T));
    std::memcpy(out, buf.data() + pos, n * sizeof(T));
    pos += n * sizeof(T);
  }
};

template <class Real>
const char* dtype_name() {
  return sizeof(Real) == 4 ? "f32" : "f64";
}

}  // namespace detail

template <class Real>
void checkpoint_save(const std::string& path, TrainerState<Real>& st) {
  nlohmann::json params = nlohmann::json::array();
  st.model.visit([&](const std::string& name, Tensor<Real>& t) {
    params.push_back({{"name", name}, {"size", t.size()}});
  });
  nlohmann::json header{{"version", detail::kCkptVersion},
                        {"dtype", detail::dtype_name<Real>()},
                        {"config", st.model.cfg},
                        {"params", params},
                        {"adam_t", st.opt.t},
                        {"counters",
                         {{"global_step", st.global_step},
                          {"stage", st.stage},
                          {"step_in_stage", st.step_in_stage},
                          {"consecutive_skips", st.consecutive_skips}}},
                        {"rng", st.rng.state()}};
  std::string hs = header.dump();

  std::string out;
  out.append(detail::kCkptMagic, 4);
  detail::put_u32(out, detail::kCkptVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(hs.size()));
  out += hs;
  st.model.visit([&](const std::string&, Tensor<Real>& t) {
    detail::put_raw(out, t.ptr(), static_cast<std::size_t>(t.size()));
  });
  for (const auto& slot : st.opt.slots) {
    detail::put_raw(out, slot.m.data(), slot.m.size());
    detail::put_raw(out, slot.v.data(), slot.v.size());
  }
  detail::put_u64(out, fnv1a(out.data(), out.size()));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open checkpoint for writing: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("short write to checkpoint: " + path);
}

template <class Real>
TrainerState<Real> checkpoint_load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  if (buf.size() < 24) throw IntegrityError("corrupt checkpoint: truncated");
  std::uint64_t stored;
  std::memcpy(&stored, buf.data() + buf.size() - 8, 8);
  if (fnv1a(buf.data(), buf.size() - 8) != stored)
    throw IntegrityError("corrupt checkpoint: checksum mismatch");

  detail::CkptReader r{buf};
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, detail::kCkptMagic, 4) != 0)
    throw IntegrityError("corrupt checkpoint: bad magic");
  std::uint32_t version = r.u32();
  if (version != detail::kCkptVersion)
    throw IntegrityError("unsupported checkpoint version " + std::to_string(version));
  std::uint32_t hlen = r.u32();
  r.need(hlen);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(buf.substr(r.pos, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("corrupt checkpoint: bad header: ") + e.what());
  }
  r.pos += hlen;

  try {
    if (header.at("dtype").get<std::string>() != detail::dtype_name<Real>())
      throw IntegrityError("checkpoint dtype mismatch");
    ModelConfig cfg = header.at("config").get<ModelConfig>();
    Rng scratch(0);
    TrainerState<Real> st{ModelParams<Real>::init(cfg, scratch), {}, 0, 1, 0, 0, Rng(0)};
    st.opt = OptimState<Real>::init(st.model);

    const nlohmann::json& plist = header.at("params");
    std::size_t idx = 0;
    st.model.visit([&](const std::string& name, Tensor<Real>& t) {
      if (idx >= plist.size() || plist[idx].at("name") != name ||
          plist[idx].at("size").get<long>() != t.size())
        throw IntegrityError("checkpoint tensor inventory does not match the model");
      r.raw(t.ptr(), static_cast<std::size_t>(t.size()));
      ++idx;
    });
    if (idx != plist.size())
      throw IntegrityError("checkpoint tensor inventory does not match the model");
    for (auto& slot : st.opt.slots) {
      r.raw(slot.m.data(), slot.m.size());
      r.raw(slot.v.data(), slot.v.size());
    }
    if (r.pos != buf.size() - 8)
      throw IntegrityError("corrupt checkpoint: trailing bytes");

    st.opt.t = header.at("adam_t").get<long>();
    const nlohmann::json& c = header.at("counters");
    st.global_step = c.at("global_step").get<long>();
    st.stage = c.at("stage").get<int>();
    st.step_in_stage = c.at("step_in_stage").get<long>();
    st.consecutive_skips = c.at("consecutive_skips").get<int>();
    st.rng.restore(header.at("rng").get<std::string>());
    return st;
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("corrupt checkpoint: bad header: ") + e.what());
  }
}

}  // namespace numval
