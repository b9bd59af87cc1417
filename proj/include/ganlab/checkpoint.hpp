#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "ganlab/adamw.hpp"
#include "ganlab/bank.hpp"
#include "ganlab/config.hpp"
#include "ganlab/network.hpp"
#include "ganlab/tensor.hpp"

namespace ganlab {

struct TrainState {
  TrainConfig config;
  NetworkParams d, g, d_ema, g_ema;
  AdamWState opt_d, opt_g;
  MemoryBank bank;
  int64_t step = 0;
};

inline TrainState init_train_state(const TrainConfig& cfg) {
  cfg.validate();
  TrainState st;
  st.config = cfg;
  const uint64_t seed = static_cast<uint64_t>(cfg.seed);
  st.d = init_params(cfg.d_arch(), rng_stream(seed, "init_d"));
  st.g = init_params(cfg.g_arch(), rng_stream(seed, "init_g"));
  st.d_ema = st.d;
  st.g_ema = st.g;
  auto zero_like = [](const NetworkParams& net, AdamWState& opt) {
    for (const auto& [name, t] : net.params) {
      opt.m.push_back(Tensor::zeros(t.shape()));
      opt.v.push_back(Tensor::zeros(t.shape()));
    }
  };
  zero_like(st.d, st.opt_d);
  zero_like(st.g, st.opt_g);
  st.bank = MemoryBank(cfg.bank_capacity, cfg.d_hidden_width,
                       cfg.d_arch().output_dim);
  st.step = 0;
  return st;
}

// Versioned binary container: magic, format version, canonical config
// text, then named tensors (name, rank, dims, little-endian f64 rows).
// Round-trips byte-exactly.
namespace detail {

inline constexpr char kCkptMagic[8] = {'G', 'L', 'A', 'B', 'C', 'K', 'P', 'T'};
inline constexpr uint32_t kCkptVersion = 1;

inline void put_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void put_u64(std::ostream& os, uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline uint32_t get_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
inline uint64_t get_u64(std::istream& is) {
  uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

inline void put_tensor(std::ostream& os, const std::string& name,
                       const Tensor& t) {
  put_u32(os, static_cast<uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(os, static_cast<uint32_t>(t.rank()));
  for (int64_t i = 0; i < t.rank(); ++i)
    put_u64(os, static_cast<uint64_t>(t.dim(i)));
  os.write(reinterpret_cast<const char*>(t.data()),
           static_cast<std::streamsize>(t.numel() * sizeof(double)));
}

inline std::pair<std::string, Tensor> get_tensor(std::istream& is) {
  const uint32_t name_len = get_u32(is);
  std::string name(name_len, '\0');
  is.read(name.data(), name_len);
  const uint32_t rank = get_u32(is);
  Shape shape;
  for (uint32_t i = 0; i < rank; ++i)
    shape.push_back(static_cast<int64_t>(get_u64(is)));
  Tensor t = Tensor::zeros(shape);
  is.read(reinterpret_cast<char*>(t.mutable_data()),
          static_cast<std::streamsize>(t.numel() * sizeof(double)));
  if (!is) throw error("checkpoint: truncated tensor record '" + name + "'");
  return {name, t};
}

inline Tensor vec_to_tensor(const std::vector<double>& v) {
  return Tensor::from_vector({static_cast<int64_t>(v.size())}, v);
}

}  // namespace detail

inline void save_checkpoint(const TrainState& st, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw error("cannot open checkpoint file '" + path + "' for writing");
  os.write(detail::kCkptMagic, 8);
  detail::put_u32(os, detail::kCkptVersion);
  const std::string cfg_text = serialize_config(st.config);
  detail::put_u64(os, cfg_text.size());
  os.write(cfg_text.data(), static_cast<std::streamsize>(cfg_text.size()));

  std::vector<std::pair<std::string, Tensor>> records;
  auto add_net = [&records](const std::string& prefix, const NetworkParams& net) {
    for (const auto& [name, t] : net.params)
      records.emplace_back(prefix + "." + name, t);
  };
  auto add_opt = [&records](const std::string& prefix, const AdamWState& opt,
                            const NetworkParams& net) {
    for (size_t i = 0; i < opt.m.size(); ++i) {
      records.emplace_back(prefix + ".m." + net.params[i].first, opt.m[i]);
      records.emplace_back(prefix + ".v." + net.params[i].first, opt.v[i]);
    }
    records.emplace_back(prefix + ".t",
                         Tensor::scalar(static_cast<double>(opt.t)));
  };
  add_net("d", st.d);
  add_net("g", st.g);
  add_net("d_ema", st.d_ema);
  add_net("g_ema", st.g_ema);
  add_opt("opt_d", st.opt_d, st.d);
  add_opt("opt_g", st.opt_g, st.g);

  records.emplace_back("bank.keys", detail::vec_to_tensor(st.bank.raw_keys()));
  records.emplace_back("bank.values", detail::vec_to_tensor(st.bank.raw_values()));
  {
    std::vector<double> ids(st.bank.raw_ids().begin(), st.bank.raw_ids().end());
    std::vector<double> ages(st.bank.raw_ages().begin(), st.bank.raw_ages().end());
    records.emplace_back("bank.ids", detail::vec_to_tensor(ids));
    records.emplace_back("bank.ages", detail::vec_to_tensor(ages));
    records.emplace_back(
        "bank.meta",
        Tensor::from_vector({3}, {static_cast<double>(st.bank.size()),
                                  static_cast<double>(st.bank.cursor()),
                                  static_cast<double>(st.bank.push_counter())}));
  }
  records.emplace_back("step", Tensor::scalar(static_cast<double>(st.step)));

  detail::put_u64(os, records.size());
  for (const auto& [name, t] : records) detail::put_tensor(os, name, t);
  if (!os) throw error("checkpoint write failed for '" + path + "'");
}

inline TrainState load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw error("cannot open checkpoint file '" + path + "'");
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, detail::kCkptMagic, 8) != 0)
    throw error("'" + path + "' is not a checkpoint file");
  const uint32_t version = detail::get_u32(is);
  if (version != detail::kCkptVersion)
    throw error("checkpoint version " + std::to_string(version) +
                " unsupported (expected " +
                std::to_string(detail::kCkptVersion) + ")");
  const uint64_t cfg_len = detail::get_u64(is);
  std::string cfg_text(cfg_len, '\0');
  is.read(cfg_text.data(), static_cast<std::streamsize>(cfg_len));
  if (!is) throw error("checkpoint: truncated config block");

  TrainState st = init_train_state(parse_config_text(cfg_text));
  const uint64_t count = detail::get_u64(is);
  std::vector<std::pair<std::string, Tensor>> records;
  records.reserve(count);
  for (uint64_t i = 0; i < count; ++i) records.push_back(detail::get_tensor(is));

  auto find = [&records](const std::string& name) -> const Tensor& {
    for (const auto& [n, t] : records)
      if (n == name) return t;
    throw error("checkpoint: missing tensor '" + name + "'");
  };
  auto load_net = [&find](const std::string& prefix, NetworkParams& net) {
    for (auto& [name, t] : net.params) {
      const Tensor& src = find(prefix + "." + name);
      if (!src.same_shape(t))
        throw error("checkpoint: shape mismatch for '" + prefix + "." + name +
                    "'");
      t = src;
    }
  };
  auto load_opt = [&find](const std::string& prefix, AdamWState& opt,
                          const NetworkParams& net) {
    opt.m.clear();
    opt.v.clear();
    for (const auto& [name, t] : net.params) {
      opt.m.push_back(find(prefix + ".m." + name).reshaped(t.shape()));
      opt.v.push_back(find(prefix + ".v." + name).reshaped(t.shape()));
    }
    opt.t = static_cast<int64_t>(find(prefix + ".t").item());
  };
  load_net("d", st.d);
  load_net("g", st.g);
  load_net("d_ema", st.d_ema);
  load_net("g_ema", st.g_ema);
  load_opt("opt_d", st.opt_d, st.d);
  load_opt("opt_g", st.opt_g, st.g);

  {
    const Tensor& keys = find("bank.keys");
    const Tensor& values = find("bank.values");
    const Tensor& ids_t = find("bank.ids");
    const Tensor& ages_t = find("bank.ages");
    const Tensor& meta = find("bank.meta");
    std::vector<double> keys_v(keys.data(), keys.data() + keys.numel());
    std::vector<double> values_v(values.data(), values.data() + values.numel());
    std::vector<int64_t> ids(ids_t.numel());
    std::vector<uint64_t> ages(ages_t.numel());
    for (int64_t i = 0; i < ids_t.numel(); ++i)
      ids[static_cast<size_t>(i)] = static_cast<int64_t>(ids_t.at(i));
    for (int64_t i = 0; i < ages_t.numel(); ++i)
      ages[static_cast<size_t>(i)] = static_cast<uint64_t>(ages_t.at(i));
    st.bank.restore(std::move(keys_v), std::move(values_v), std::move(ids),
                    std::move(ages), static_cast<int64_t>(meta.at(0)),
                    static_cast<int64_t>(meta.at(1)),
                    static_cast<uint64_t>(meta.at(2)));
  }
  st.step = static_cast<int64_t>(find("step").item());
  return st;
}

}  // namespace ganlab
