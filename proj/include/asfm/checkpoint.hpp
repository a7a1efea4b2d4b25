#pragma once

// Versioned binary checkpoint container. Layout (all integers and doubles
// little-endian):
//
//   magic    8 bytes  "ASFMCKP1"
//   version  u32      1
//   config   str      resolved model-config text (may be empty)
//   step     i64      training step the snapshot was taken at
//   params   u32 count, then per parameter:
//              name str, rank u32, dims i64[rank], values f64[numel]
//   frozen   u32 count, then names
//   opt      u8 flag; if 1: i64 step_count, then two tensor maps (m, v)
//            encoded like params
//
// str = u32 byte length + bytes. Bytes are stable across runs given the same
// seed and config.

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <string>

#include "asfm/core.hpp"
#include "asfm/optim.hpp"
#include "asfm/tensor.hpp"

namespace asfm::ckpt {

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

struct Checkpoint {
  std::string model_config_text;
  std::map<std::string, ad::Tensor> params;
  std::set<std::string> frozen;
  std::int64_t train_step = 0;
  bool has_optimizer = false;
  std::int64_t opt_step = 0;
  std::map<std::string, ad::Tensor> opt_m, opt_v;
};

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void put_i64(std::ostream& out, std::int64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void put_str(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline void put_tensor(std::ostream& out, const ad::Tensor& t) {
  put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
  for (std::int64_t d : t.shape) put_i64(out, d);
  out.write(reinterpret_cast<const char*>(t.v.data()),
            static_cast<std::streamsize>(t.v.size() * sizeof(double)));
}
inline void put_tensor_map(std::ostream& out, const std::map<std::string, ad::Tensor>& m) {
  put_u32(out, static_cast<std::uint32_t>(m.size()));
  for (const auto& [name, t] : m) {
    put_str(out, name);
    put_tensor(out, t);
  }
}

inline std::uint32_t get_u32(std::istream& in, const std::string& path) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(v)))
    throw parse_error("checkpoint truncated: " + path);
  return v;
}
inline std::int64_t get_i64(std::istream& in, const std::string& path) {
  std::int64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(v)))
    throw parse_error("checkpoint truncated: " + path);
  return v;
}
inline std::string get_str(std::istream& in, const std::string& path) {
  const std::uint32_t n = get_u32(in, path);
  std::string s(n, '\0');
  if (!in.read(s.data(), n)) throw parse_error("checkpoint truncated: " + path);
  return s;
}
inline ad::Tensor get_tensor(std::istream& in, const std::string& path) {
  const std::uint32_t rank = get_u32(in, path);
  std::vector<std::int64_t> shape;
  for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(get_i64(in, path));
  ad::Tensor t = ad::Tensor::zeros(shape);
  if (!in.read(reinterpret_cast<char*>(t.v.data()),
               static_cast<std::streamsize>(t.v.size() * sizeof(double))))
    throw parse_error("checkpoint truncated: " + path);
  return t;
}
inline std::map<std::string, ad::Tensor> get_tensor_map(std::istream& in,
                                                        const std::string& path) {
  std::map<std::string, ad::Tensor> m;
  const std::uint32_t count = get_u32(in, path);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = get_str(in, path);
    m.emplace(std::move(name), get_tensor(in, path));
  }
  return m;
}

}  // namespace detail

inline void save(const std::string& path, const Checkpoint& c) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw state_error("cannot write checkpoint: " + path);
  out.write("ASFMCKP1", 8);
  detail::put_u32(out, 1);
  detail::put_str(out, c.model_config_text);
  detail::put_i64(out, c.train_step);
  detail::put_tensor_map(out, c.params);
  detail::put_u32(out, static_cast<std::uint32_t>(c.frozen.size()));
  for (const std::string& name : c.frozen) detail::put_str(out, name);
  const unsigned char flag = c.has_optimizer ? 1 : 0;
  out.write(reinterpret_cast<const char*>(&flag), 1);
  if (c.has_optimizer) {
    detail::put_i64(out, c.opt_step);
    detail::put_tensor_map(out, c.opt_m);
    detail::put_tensor_map(out, c.opt_v);
  }
  if (!out) throw state_error("checkpoint write failed: " + path);
}

inline Checkpoint load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw state_error("cannot open checkpoint: " + path);
  char magic[8];
  if (!in.read(magic, 8) || std::string(magic, 8) != "ASFMCKP1")
    throw parse_error("not a checkpoint file: " + path);
  const std::uint32_t version = detail::get_u32(in, path);
  if (version != 1)
    throw parse_error("unsupported checkpoint version " + std::to_string(version) + ": " + path);
  Checkpoint c;
  c.model_config_text = detail::get_str(in, path);
  c.train_step = detail::get_i64(in, path);
  c.params = detail::get_tensor_map(in, path);
  const std::uint32_t nfrozen = detail::get_u32(in, path);
  for (std::uint32_t i = 0; i < nfrozen; ++i) c.frozen.insert(detail::get_str(in, path));
  unsigned char flag = 0;
  if (!in.read(reinterpret_cast<char*>(&flag), 1)) throw parse_error("checkpoint truncated: " + path);
  c.has_optimizer = flag != 0;
  if (c.has_optimizer) {
    c.opt_step = detail::get_i64(in, path);
    c.opt_m = detail::get_tensor_map(in, path);
    c.opt_v = detail::get_tensor_map(in, path);
  }
  return c;
}

// ---- glue to ModelParams / Optimizer ----------------------------------------------

inline Checkpoint snapshot(const ad::ModelParams& params, const std::string& model_config_text,
                           std::int64_t train_step, const ad::Optimizer* opt = nullptr) {
  Checkpoint c;
  c.model_config_text = model_config_text;
  c.train_step = train_step;
  for (const auto& [name, var] : params.all()) c.params.emplace(name, var->val);
  c.frozen = params.frozen();
  if (opt) {
    c.has_optimizer = true;
    c.opt_step = opt->step_count();
    c.opt_m = opt->moments_m();
    c.opt_v = opt->moments_v();
  }
  return c;
}

// Builds a fresh parameter collection from checkpoint contents.
inline ad::ModelParams restore_params(const Checkpoint& c) {
  ad::ModelParams params;
  for (const auto& [name, t] : c.params) params.add(name, t);
  params.set_frozen(c.frozen);
  return params;
}

}  // namespace asfm::ckpt
