#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "ganlab/autodiff.hpp"
#include "ganlab/objectives.hpp"
#include "ganlab/tensor.hpp"

namespace ganlab {

// Every tunable of a training run. Flat key = value text format, one key
// per line, '#' comments; unknown keys are a hard error.
struct TrainConfig {
  // objective
  std::string distance = "jsd";  // jsd | bhattacharyya | hinge-baseline
  double lambda_c = 3.0;
  double lambda_s = 5.0;
  double lambda_h = 4.0;
  double lip_target = 1.0;
  int64_t power_iter_steps = 1;  // S
  std::string cluster_norm = "nk";  // nk | n (fake-term normalization)
  bool smooth_one_sided = false;
  std::string jvp_mode = "double-vjp";  // double-vjp | forward
  // clustering / memory bank
  int64_t neighbors_k = 5;
  int64_t bank_capacity = 2048;
  // optimization
  int64_t batch_size = 128;
  double lr = 2e-4;
  double weight_decay_d = 0.1;
  double weight_decay_g = 0.0;
  double ema_decay = 0.999;
  int64_t n_dis = 1;
  int64_t total_steps = 20000;
  // architecture
  int64_t d_hidden_width = 256;
  int64_t d_hidden_layers = 4;
  int64_t embed_dim = 32;
  int64_t g_hidden_width = 256;
  int64_t g_hidden_layers = 4;
  int64_t prior_dim = 32;
  int64_t group_size = 16;
  // dataset
  int64_t n_train = 4000;
  int64_t n_val = 2000;
  double noise_sd = 0.02;
  int64_t data_seed = 7;
  // run plumbing
  int64_t seed = 1;
  int64_t eval_seed = 99;
  int64_t log_interval = 50;
  int64_t checkpoint_interval = 0;  // 0: only at the end
  std::string out_dir = "out";
  // evaluation protocol
  int64_t kmeans_repeats = 20;
  int64_t kmeans_max_iters = 100;
  double probe_c = 1.0;
  int64_t probe_epochs = 500;

  void validate() const {
    if (lambda_c < 0 || lambda_s < 0 || lambda_h < 0)
      throw config_error("lambda weights must be nonnegative");
    if (batch_size < 2) throw config_error("batch_size must be >= 2");
    if (n_dis < 1) throw config_error("n_dis must be >= 1");
    if (power_iter_steps < 1) throw config_error("power_iter_steps must be >= 1");
    if (!(lip_target > 0)) throw config_error("lip_target must be positive");
    if (!(ema_decay >= 0 && ema_decay < 1))
      throw config_error("ema_decay must lie in [0, 1)");
    if (neighbors_k < 1) throw config_error("neighbors_k must be >= 1");
    if (bank_capacity < 1) throw config_error("bank_capacity must be >= 1");
    if (total_steps < 0) throw config_error("total_steps must be >= 0");
    if (n_train < 2 || n_val < 2) throw config_error("splits need >= 2 points");
    if (noise_sd < 0) throw config_error("noise_sd must be >= 0");
    if (log_interval < 1) throw config_error("log_interval must be >= 1");
    if (checkpoint_interval < 0)
      throw config_error("checkpoint_interval must be >= 0");
    if (kmeans_repeats < 1) throw config_error("kmeans_repeats must be >= 1");
    if (cluster_norm != "nk" && cluster_norm != "n")
      throw config_error("cluster_norm must be nk or n");
    if (jvp_mode != "double-vjp" && jvp_mode != "forward")
      throw config_error("jvp_mode must be double-vjp or forward");
    parse_distance(distance);
    d_arch().validate();
    g_arch().validate();
  }

  Arch d_arch() const {
    Arch a;
    a.input_dim = 2;
    a.hidden.assign(static_cast<size_t>(d_hidden_layers), d_hidden_width);
    a.output_dim = distance == "hinge-baseline" ? 1 : embed_dim;
    a.group_size = group_size;
    a.head = distance == "hinge-baseline" ? Head::kScalar : Head::kEmbedding;
    return a;
  }

  Arch g_arch() const {
    Arch a;
    a.input_dim = prior_dim;
    a.hidden.assign(static_cast<size_t>(g_hidden_layers), g_hidden_width);
    a.output_dim = 2;
    a.group_size = group_size;
    a.head = Head::kPlain;
    return a;
  }

  ObjectiveConfig objective() const {
    ObjectiveConfig oc;
    oc.distance = parse_distance(distance);
    oc.lambda_c = lambda_c;
    oc.lambda_s = lambda_s;
    oc.lambda_h = lambda_h;
    oc.lip_target = lip_target;
    oc.smooth_one_sided = smooth_one_sided;
    oc.cluster_fake_literal_n = cluster_norm == "n";
    return oc;
  }

  JvpMode jvp() const {
    return jvp_mode == "forward" ? JvpMode::kForward : JvpMode::kDoubleVjp;
  }
};

namespace detail {

inline std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct ConfigField {
  std::string key;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

inline double parse_double(const std::string& key, const std::string& s) {
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw config_error("config: bad numeric value '" + s + "' for key '" + key +
                       "'");
  }
}

inline int64_t parse_int(const std::string& key, const std::string& s) {
  int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw config_error("config: bad integer value '" + s + "' for key '" + key +
                       "'");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw config_error("config: bad boolean value '" + s + "' for key '" + key +
                     "'");
}

inline const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = [] {
    std::vector<ConfigField> v;
    auto add_str = [&v](const char* key, std::string TrainConfig::* f) {
      v.push_back({key, [f](const TrainConfig& c) { return c.*f; },
                   [f](TrainConfig& c, const std::string& s) { c.*f = s; }});
    };
    auto add_dbl = [&v](const char* key, double TrainConfig::* f) {
      v.push_back({key, [f](const TrainConfig& c) { return fmt_double(c.*f); },
                   [key, f](TrainConfig& c, const std::string& s) {
                     c.*f = parse_double(key, s);
                   }});
    };
    auto add_int = [&v](const char* key, int64_t TrainConfig::* f) {
      v.push_back({key, [f](const TrainConfig& c) { return std::to_string(c.*f); },
                   [key, f](TrainConfig& c, const std::string& s) {
                     c.*f = parse_int(key, s);
                   }});
    };
    auto add_bool = [&v](const char* key, bool TrainConfig::* f) {
      v.push_back({key,
                   [f](const TrainConfig& c) { return c.*f ? "true" : "false"; },
                   [key, f](TrainConfig& c, const std::string& s) {
                     c.*f = parse_bool(key, s);
                   }});
    };
    add_str("distance", &TrainConfig::distance);
    add_dbl("lambda_c", &TrainConfig::lambda_c);
    add_dbl("lambda_s", &TrainConfig::lambda_s);
    add_dbl("lambda_h", &TrainConfig::lambda_h);
    add_dbl("lip_target", &TrainConfig::lip_target);
    add_int("power_iter_steps", &TrainConfig::power_iter_steps);
    add_str("cluster_norm", &TrainConfig::cluster_norm);
    add_bool("smooth_one_sided", &TrainConfig::smooth_one_sided);
    add_str("jvp_mode", &TrainConfig::jvp_mode);
    add_int("neighbors_k", &TrainConfig::neighbors_k);
    add_int("bank_capacity", &TrainConfig::bank_capacity);
    add_int("batch_size", &TrainConfig::batch_size);
    add_dbl("lr", &TrainConfig::lr);
    add_dbl("weight_decay_d", &TrainConfig::weight_decay_d);
    add_dbl("weight_decay_g", &TrainConfig::weight_decay_g);
    add_dbl("ema_decay", &TrainConfig::ema_decay);
    add_int("n_dis", &TrainConfig::n_dis);
    add_int("total_steps", &TrainConfig::total_steps);
    add_int("d_hidden_width", &TrainConfig::d_hidden_width);
    add_int("d_hidden_layers", &TrainConfig::d_hidden_layers);
    add_int("embed_dim", &TrainConfig::embed_dim);
    add_int("g_hidden_width", &TrainConfig::g_hidden_width);
    add_int("g_hidden_layers", &TrainConfig::g_hidden_layers);
    add_int("prior_dim", &TrainConfig::prior_dim);
    add_int("group_size", &TrainConfig::group_size);
    add_int("n_train", &TrainConfig::n_train);
    add_int("n_val", &TrainConfig::n_val);
    add_dbl("noise_sd", &TrainConfig::noise_sd);
    add_int("data_seed", &TrainConfig::data_seed);
    add_int("seed", &TrainConfig::seed);
    add_int("eval_seed", &TrainConfig::eval_seed);
    add_int("log_interval", &TrainConfig::log_interval);
    add_int("checkpoint_interval", &TrainConfig::checkpoint_interval);
    add_str("out_dir", &TrainConfig::out_dir);
    add_int("kmeans_repeats", &TrainConfig::kmeans_repeats);
    add_int("kmeans_max_iters", &TrainConfig::kmeans_max_iters);
    add_dbl("probe_c", &TrainConfig::probe_c);
    add_int("probe_epochs", &TrainConfig::probe_epochs);
    return v;
  }();
  return fields;
}

inline std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

inline TrainConfig parse_config_text(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (size_t hash = line.find('#'); hash != std::string::npos)
      line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error("config line " + std::to_string(lineno) +
                         ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    bool found = false;
    for (const auto& f : detail::config_fields()) {
      if (f.key == key) {
        f.set(cfg, value);
        found = true;
        break;
      }
    }
    if (!found)
      throw config_error("config line " + std::to_string(lineno) +
                         ": unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

inline TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

// Canonical form: every key in declaration order. Used for checkpoints
// and run manifests.
inline std::string serialize_config(const TrainConfig& cfg) {
  std::ostringstream os;
  for (const auto& f : detail::config_fields())
    os << f.key << " = " << f.get(cfg) << "\n";
  return os.str();
}

}  // namespace ganlab
