#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rddgp/core/error.hpp"
#include "rddgp/nn/unet.hpp"
#include "rddgp/recon/reconstruct.hpp"
#include "rddgp/tomo/fbp.hpp"
#include "rddgp/tomo/geometry.hpp"
#include "rddgp/tomo/phantom.hpp"

namespace rddgp::cli {

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, end);
}

/// Every experiment setting, with defaults. One file of `key = value` lines
/// fully determines a run; `#` starts a comment.
struct ExperimentConfig {
  // grid and scan
  std::size_t height = 32;
  std::size_t width = 32;
  double pixel_size = 1.0;
  std::size_t n_angles = 30;
  std::size_t n_detectors = 0;  // 0: ceil(sqrt(2) max(H, W))
  double delta = 0.05;
  std::string fbp_window = "none";
  std::vector<std::size_t> angles{30, 45, 60};

  // phantom
  std::string phantom = "random_ellipses";
  std::size_t n_ellipses = 6;

  // diffusion and denoiser
  int schedule_T = 1000;
  std::size_t steps = 8;
  std::vector<std::size_t> channels{16, 32};
  std::size_t blocks_per_level = 2;
  std::size_t group_count = 4;
  std::size_t embed_dim = 8;

  // objective and optimizer
  double lambda1 = 1e-4;
  double lambda2 = 1e-3;
  double tv_beta = 1e-3;
  double nu_max = 1e-2;
  double nu_min = 1e-5;
  std::size_t maxit = 300;
  std::string init_mode = "fbp";
  std::string lr_mode = "cosine";

  // training
  std::string train_set = "random_ellipses";  // or gaussian
  std::size_t train_size = 256;
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  double train_lr = 1e-3;
  bool augment = true;
  double gaussian_variance = 1.0;

  // oracle prior: fitted on prior_samples random-ellipse phantoms
  std::size_t prior_samples = 200;
  std::uint64_t prior_seed = 1000;

  // seeds
  std::uint64_t seed_data = 1;
  std::uint64_t seed_noise = 11;
  std::uint64_t seed_init = 5;
  std::uint64_t seed_train = 7;

  // paths (relative paths resolve against the config file's directory)
  std::string phantom_path;
  std::string sinogram_path;
  std::string weights_path;
  std::string ground_truth_path;
  std::string reconstruction_path;

  tomo::ImageGrid grid() const {
    tomo::ImageGrid g{height, width, pixel_size};
    g.validate();
    return g;
  }
  tomo::ScanGeometry geometry(std::size_t angles_override = 0) const {
    const tomo::ImageGrid g = grid();
    const std::size_t na = angles_override ? angles_override : n_angles;
    if (n_detectors == 0) return tomo::ScanGeometry::for_grid(g, na);
    return tomo::ScanGeometry(na, n_detectors, g.pixel_size);
  }
  tomo::FbpWindow window() const {
    if (fbp_window == "none") return tomo::FbpWindow::none;
    if (fbp_window == "hann") return tomo::FbpWindow::hann;
    throw ConfigError("fbp_window must be none or hann");
  }
  nn::DenoiserConfig denoiser() const {
    nn::DenoiserConfig c;
    c.n_levels = channels.size();
    c.channels_per_level = channels;
    c.blocks_per_level = blocks_per_level;
    c.group_count = group_count;
    c.embed_dim = embed_dim;
    return c;
  }
  recon::ObjectiveConfig objective() const {
    recon::ObjectiveConfig o;
    o.lambda1 = lambda1;
    o.lambda2 = lambda2;
    o.tv_beta = tv_beta;
    o.nu_max = nu_max;
    o.nu_min = nu_min;
    o.maxit = maxit;
    o.steps = steps;
    return o;
  }
  tomo::PhantomSpec phantom_spec() const {
    return {tomo::parse_phantom_kind(phantom), seed_data, n_ellipses};
  }
  void set_all_seeds(std::uint64_t s) { seed_data = seed_noise = seed_init = seed_train = s; }

  void validate() const {
    grid();
    if (n_angles < 1) throw ConfigError("n_angles must be >= 1");
    if (delta < 0.0) throw ConfigError("delta must be >= 0");
    window();
    tomo::parse_phantom_kind(phantom);
    if (schedule_T < 1) throw ConfigError("schedule_T must be >= 1");
    if (steps < 1 || steps > static_cast<std::size_t>(schedule_T)) throw ConfigError("steps must lie in [1, schedule_T]");
    denoiser().validate();
    objective().validate();
    recon::parse_init_mode(init_mode);
    recon::parse_lr_mode(lr_mode);
    if (train_set != "random_ellipses" && train_set != "gaussian")
      throw ConfigError("train_set must be random_ellipses or gaussian");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(gaussian_variance > 0.0)) throw ConfigError("gaussian_variance must be > 0");
    if (prior_samples < 2) throw ConfigError("prior_samples must be >= 2");
    for (auto a : angles)
      if (a < 1) throw ConfigError("angles entries must be >= 1");
  }
};

namespace detail {

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* first = text.data();
  const char* last = first + text.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) throw ConfigError("bad value for " + key + ": '" + text + "'");
  return v;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::size_t> parse_list(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    out.push_back(parse_number<std::size_t>(key, trim(item)));
  if (out.empty()) throw ConfigError("empty list for " + key);
  return out;
}

inline std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct Field {
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <class T>
Field number(T ExperimentConfig::*m) {
  return {[m](ExperimentConfig& c, const std::string& v) {
            if constexpr (std::is_same_v<T, bool>)
              c.*m = parse_number<int>("flag", v) != 0;
            else
              c.*m = parse_number<T>("value", v);
          },
          [m](const ExperimentConfig& c) {
            if constexpr (std::is_floating_point_v<T>)
              return format_double(c.*m);
            else
              return std::to_string(static_cast<long long>(c.*m));
          }};
}

template <>
inline Field number<std::uint64_t>(std::uint64_t ExperimentConfig::*m) {
  return {[m](ExperimentConfig& c, const std::string& v) { c.*m = parse_number<std::uint64_t>("seed", v); },
          [m](const ExperimentConfig& c) { return std::to_string(c.*m); }};
}

inline Field text(std::string ExperimentConfig::*m) {
  return {[m](ExperimentConfig& c, const std::string& v) { c.*m = v; },
          [m](const ExperimentConfig& c) { return c.*m; }};
}

inline Field list(std::vector<std::size_t> ExperimentConfig::*m) {
  return {[m](ExperimentConfig& c, const std::string& v) { c.*m = parse_list("list", v); },
          [m](const ExperimentConfig& c) { return join(c.*m); }};
}

/// Key order here is the order of the resolved config file.
inline const std::vector<std::pair<std::string, Field>>& fields() {
  using C = ExperimentConfig;
  static const std::vector<std::pair<std::string, Field>> f{
      {"height", number(&C::height)},
      {"width", number(&C::width)},
      {"pixel_size", number(&C::pixel_size)},
      {"n_angles", number(&C::n_angles)},
      {"n_detectors", number(&C::n_detectors)},
      {"delta", number(&C::delta)},
      {"fbp_window", text(&C::fbp_window)},
      {"angles", list(&C::angles)},
      {"phantom", text(&C::phantom)},
      {"n_ellipses", number(&C::n_ellipses)},
      {"schedule_T", number(&C::schedule_T)},
      {"steps", number(&C::steps)},
      {"channels", list(&C::channels)},
      {"blocks_per_level", number(&C::blocks_per_level)},
      {"group_count", number(&C::group_count)},
      {"embed_dim", number(&C::embed_dim)},
      {"lambda1", number(&C::lambda1)},
      {"lambda2", number(&C::lambda2)},
      {"tv_beta", number(&C::tv_beta)},
      {"nu_max", number(&C::nu_max)},
      {"nu_min", number(&C::nu_min)},
      {"maxit", number(&C::maxit)},
      {"init_mode", text(&C::init_mode)},
      {"lr_mode", text(&C::lr_mode)},
      {"train_set", text(&C::train_set)},
      {"train_size", number(&C::train_size)},
      {"epochs", number(&C::epochs)},
      {"batch_size", number(&C::batch_size)},
      {"train_lr", number(&C::train_lr)},
      {"augment", number(&C::augment)},
      {"gaussian_variance", number(&C::gaussian_variance)},
      {"prior_samples", number(&C::prior_samples)},
      {"prior_seed", number(&C::prior_seed)},
      {"seed_data", number(&C::seed_data)},
      {"seed_noise", number(&C::seed_noise)},
      {"seed_init", number(&C::seed_init)},
      {"seed_train", number(&C::seed_train)},
      {"phantom_path", text(&C::phantom_path)},
      {"sinogram_path", text(&C::sinogram_path)},
      {"weights_path", text(&C::weights_path)},
      {"ground_truth_path", text(&C::ground_truth_path)},
      {"reconstruction_path", text(&C::reconstruction_path)},
  };
  return f;
}

}  // namespace detail

inline void set_key(ExperimentConfig& c, const std::string& key, const std::string& value) {
  for (const auto& [name, field] : detail::fields())
    if (name == key) {
      try {
        field.set(c, value);
      } catch (const ConfigError& e) {
        throw ConfigError(key + ": " + e.what());
      }
      return;
    }
  throw ConfigError("unknown config key '" + key + "'");
}

/// Parses `key = value` text. Unknown and duplicate keys are errors.
inline ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::map<std::string, std::size_t> seen;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (seen.count(key))
      throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    seen[key] = lineno;
    try {
      set_key(c, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

/// Reads a config file and resolves relative paths against its directory.
inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  ExperimentConfig c = parse_config(ss.str());
  const auto base = path.parent_path();
  for (std::string* p : {&c.phantom_path, &c.sinogram_path, &c.weights_path, &c.ground_truth_path,
                         &c.reconstruction_path})
    if (!p->empty() && std::filesystem::path(*p).is_relative()) *p = (base / *p).lexically_normal().string();
  return c;
}

/// Every key with its resolved value, in a fixed order.
inline std::string to_text(const ExperimentConfig& c) {
  std::string s;
  for (const auto& [name, field] : detail::fields()) s += name + " = " + field.get(c) + "\n";
  return s;
}

}  // namespace rddgp::cli
