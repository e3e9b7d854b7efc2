#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <type_traits>

#include "bifc/diffcore/tensor.hpp"

namespace bifc {

/// Everything a CLI run depends on besides the subcommand's own flags.
/// Text form: one `key = value` per line, `#` starts a comment.
struct RunConfig {
  std::string command;
  std::uint64_t seed = 1;
  std::string dataset;
  std::size_t epochs = 200;
  std::size_t batch_size = 2;
  double lr_theta = 0.01;
  double lr_phi = 0.01;
  double momentum = 0.9;
  bool augment = false;
  std::array<double, 3> path_weights{0.25, 0.5, 0.25};
  std::size_t fp_rounds = 2;
  std::size_t flatness_n = 10;
  std::string camera;
  std::string out;
  // gen-data
  std::size_t scenes = 350;
  std::size_t train_scenes = 150;
  std::size_t image_size = 128;
  double band_fraction = 0.05;

  void validate() const {
    if (epochs == 0) throw Error("config: epochs must be positive");
    if (batch_size == 0) throw Error("config: batch_size must be positive");
    if (!(lr_theta >= 0.0) || !(lr_phi >= 0.0)) throw Error("config: learning rates must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw Error("config: momentum must lie in [0, 1)");
    if (fp_rounds == 0) throw Error("config: fp_rounds must be positive");
    if (flatness_n == 0) throw Error("config: flatness_n must be positive");
    if (scenes == 0) throw Error("config: scenes must be positive");
    if (train_scenes > scenes) throw Error("config: train_scenes exceeds scenes");
    if (image_size == 0 || image_size % 16) {
      throw Error("config: image_size must be a positive multiple of 16");
    }
    if (!(band_fraction > 0.0)) throw Error("config: band_fraction must be positive");
    double sum = 0.0;
    for (double w : path_weights) {
      if (!(w >= 0.0)) throw Error("config: path_weights must be >= 0");
      sum += w;
    }
    if (!(std::abs(sum - 1.0) <= 1e-9)) throw Error("config: path_weights must sum to 1");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T v{};
  if (text.empty() || (std::is_unsigned_v<T> && text[0] == '-') || !(in >> v) ||
      !(in >> std::ws).eof()) {
    throw Error("config: bad value '" + text + "' for " + key);
  }
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "on" || text == "1") return true;
  if (text == "false" || text == "off" || text == "0") return false;
  throw Error("config: bad value '" + text + "' for " + key + " (expected on/off)");
}

inline std::array<double, 3> parse_weights(const std::string& key, const std::string& text) {
  std::array<double, 3> w{};
  std::string rest = text;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto comma = rest.find(',');
    if ((comma == std::string::npos) != (i == 2)) {
      throw Error("config: " + key + " needs three comma-separated weights");
    }
    w[i] = parse_number<double>(key, trim(rest.substr(0, comma)));
    if (comma != std::string::npos) rest = rest.substr(comma + 1);
  }
  return w;
}

}  // namespace detail

/// Sets one key; unknown keys are an error.
inline void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
  using detail::parse_number;
  static const std::map<std::string, std::function<void(RunConfig&, const std::string&)>> setters = {
      {"command", [](RunConfig& c, const std::string& v) { c.command = v; }},
      {"seed", [](RunConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>("seed", v); }},
      {"dataset", [](RunConfig& c, const std::string& v) { c.dataset = v; }},
      {"epochs", [](RunConfig& c, const std::string& v) { c.epochs = parse_number<std::size_t>("epochs", v); }},
      {"batch_size",
       [](RunConfig& c, const std::string& v) { c.batch_size = parse_number<std::size_t>("batch_size", v); }},
      {"lr_theta", [](RunConfig& c, const std::string& v) { c.lr_theta = parse_number<double>("lr_theta", v); }},
      {"lr_phi", [](RunConfig& c, const std::string& v) { c.lr_phi = parse_number<double>("lr_phi", v); }},
      {"momentum", [](RunConfig& c, const std::string& v) { c.momentum = parse_number<double>("momentum", v); }},
      {"augment", [](RunConfig& c, const std::string& v) { c.augment = detail::parse_bool("augment", v); }},
      {"path_weights",
       [](RunConfig& c, const std::string& v) { c.path_weights = detail::parse_weights("path_weights", v); }},
      {"fp_rounds",
       [](RunConfig& c, const std::string& v) { c.fp_rounds = parse_number<std::size_t>("fp_rounds", v); }},
      {"flatness_n",
       [](RunConfig& c, const std::string& v) { c.flatness_n = parse_number<std::size_t>("flatness_n", v); }},
      {"camera", [](RunConfig& c, const std::string& v) { c.camera = v; }},
      {"out", [](RunConfig& c, const std::string& v) { c.out = v; }},
      {"scenes", [](RunConfig& c, const std::string& v) { c.scenes = parse_number<std::size_t>("scenes", v); }},
      {"train_scenes",
       [](RunConfig& c, const std::string& v) { c.train_scenes = parse_number<std::size_t>("train_scenes", v); }},
      {"image_size",
       [](RunConfig& c, const std::string& v) { c.image_size = parse_number<std::size_t>("image_size", v); }},
      {"band_fraction",
       [](RunConfig& c, const std::string& v) { c.band_fraction = parse_number<double>("band_fraction", v); }},
  };
  const auto it = setters.find(key);
  if (it == setters.end()) throw Error("config: unknown key '" + key + "'");
  it->second(c, value);
}

inline RunConfig parse_config(const std::string& text, const std::string& origin = "config",
                              RunConfig base = {}) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(origin + ":" + std::to_string(lineno) + ": expected key = value");
    }
    try {
      set_config_value(base, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    } catch (const Error& e) {
      throw Error(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

inline RunConfig load_config(const std::string& path, RunConfig base = {}) {
  std::ifstream f(path);
  if (!f) throw Error(path + ": cannot open config file");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), path, std::move(base));
}

inline std::string format_config(const RunConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "command = " << c.command << "\nseed = " << c.seed << "\ndataset = " << c.dataset
     << "\nepochs = " << c.epochs << "\nbatch_size = " << c.batch_size
     << "\nlr_theta = " << c.lr_theta << "\nlr_phi = " << c.lr_phi
     << "\nmomentum = " << c.momentum << "\naugment = " << (c.augment ? "on" : "off")
     << "\npath_weights = " << c.path_weights[0] << ',' << c.path_weights[1] << ','
     << c.path_weights[2] << "\nfp_rounds = " << c.fp_rounds << "\nflatness_n = " << c.flatness_n
     << "\ncamera = " << c.camera << "\nout = " << c.out << "\nscenes = " << c.scenes
     << "\ntrain_scenes = " << c.train_scenes << "\nimage_size = " << c.image_size
     << "\nband_fraction = " << c.band_fraction << '\n';
  return os.str();
}

}  // namespace bifc
