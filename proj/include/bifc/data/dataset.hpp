#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "bifc/data/generator.hpp"
#include "bifc/data/pnm.hpp"
#include "bifc/data/scene.hpp"

namespace bifc {

namespace fs = std::filesystem;

struct ManifestEntry {
  std::string id;
  std::string rgb, depth, label;  // paths relative to the dataset directory
  std::string split;              // "train" or "test"
  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

inline std::string scene_id(std::size_t index) {
  std::ostringstream os;
  os << "scene_" << std::setw(4) << std::setfill('0') << index;
  return os.str();
}

inline Grid<std::uint16_t> depth_to_grid(const Tensor& depth_mm) {
  require_rank(depth_mm, 3, "depth_to_grid");
  Grid<std::uint16_t> g(depth_mm.dim(1), depth_mm.dim(2));
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double v = depth_mm.data()[i];
    if (!(v >= 0.0 && v <= 65535.0) || v != std::floor(v)) {
      throw Error("depth_to_grid: depth " + std::to_string(v) +
                  " mm is not an integer in 0..65535");
    }
    g.values()[i] = static_cast<std::uint16_t>(v);
  }
  return g;
}

/// Writes the three rasters of `scene` as `<dir>/<id>_{rgb.ppm,depth.pgm,label.pgm}`.
inline ManifestEntry save_scene(const Scene& scene, const fs::path& dir, const std::string& id,
                                const std::string& split = "train") {
  scene.validate();
  fs::create_directories(dir);
  ManifestEntry e{id, id + "_rgb.ppm", id + "_depth.pgm", id + "_label.pgm", split};
  pnm::write_ppm((dir / e.rgb).string(), scene.rgb);
  pnm::write_pgm16((dir / e.depth).string(), depth_to_grid(scene.depth));
  pnm::write_pgm8((dir / e.label).string(), scene.label);
  return e;
}

inline Scene load_scene(const fs::path& dir, const ManifestEntry& e) {
  Scene s;
  s.rgb = pnm::read_ppm((dir / e.rgb).string());
  std::size_t maxval = 0;
  const auto depth = pnm::read_pgm((dir / e.depth).string(), &maxval);
  if (maxval != 65535) {
    throw pnm::format_error((dir / e.depth).string(), 0, "depth must be 16-bit (maxval 65535)");
  }
  s.depth = Tensor({1, depth.height(), depth.width()});
  for (std::size_t i = 0; i < depth.size(); ++i) s.depth.data()[i] = depth.values()[i];
  const auto label = pnm::read_pgm((dir / e.label).string(), &maxval);
  if (maxval > 255) {
    throw pnm::format_error((dir / e.label).string(), 0, "labels must be 8-bit");
  }
  s.label = SegMask(label.height(), label.width());
  for (std::size_t i = 0; i < label.size(); ++i) {
    s.label.values()[i] = static_cast<std::uint8_t>(label.values()[i]);
  }
  s.validate();
  return s;
}

inline std::string format_manifest(const std::vector<ManifestEntry>& entries) {
  std::string out;
  for (const auto& e : entries) {
    out += e.id + '\t' + e.rgb + '\t' + e.depth + '\t' + e.label + '\t' + e.split + '\n';
  }
  return out;
}

inline std::vector<ManifestEntry> parse_manifest(const std::string& text,
                                                 const std::string& origin = "manifest") {
  std::vector<ManifestEntry> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::size_t pos = 0;
    while (true) {
      const auto tab = line.find('\t', pos);
      cols.push_back(line.substr(pos, tab - pos));
      if (tab == std::string::npos) break;
      pos = tab + 1;
    }
    if (cols.size() != 5) {
      throw Error(origin + ":" + std::to_string(lineno) + ": expected 5 tab-separated columns, got " +
                  std::to_string(cols.size()));
    }
    if (cols[4] != "train" && cols[4] != "test") {
      throw Error(origin + ":" + std::to_string(lineno) + ": split must be train or test");
    }
    out.push_back({cols[0], cols[1], cols[2], cols[3], cols[4]});
  }
  return out;
}

inline std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(path.string() + ": cannot open for reading");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(path.string() + ": cannot open for writing");
  f << text;
  if (!f) throw Error(path.string() + ": write failed");
}

inline std::vector<ManifestEntry> load_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.tsv";
  if (!fs::exists(path)) throw Error("dataset: no manifest.tsv in " + dir.string());
  return parse_manifest(read_text(path), path.string());
}

/// Seeded shuffle of 0..n-1; the first `train` indices are the train split.
inline std::vector<bool> split_mask(std::size_t n, std::size_t train, std::uint64_t seed) {
  if (train > n) throw Error("split: train count exceeds scene count");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = derive_rng(seed, 0x5b11);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> is_train(n, false);
  for (std::size_t i = 0; i < train; ++i) is_train[order[i]] = true;
  return is_train;
}

inline std::string format_planted(const std::vector<PlantedArc>& arcs) {
  std::string out;
  for (const auto& a : arcs) {
    out += std::string(side_name(a.side)) + ' ' + std::to_string(a.column) + ' ' +
           std::to_string(a.row_begin) + ' ' + std::to_string(a.row_end) + '\n';
  }
  return out;
}

inline std::vector<PlantedArc> parse_planted(const std::string& text,
                                             const std::string& origin = "planted") {
  std::vector<PlantedArc> out;
  std::istringstream in(text);
  std::string side;
  PlantedArc a{};
  while (in >> side) {
    if (!(in >> a.column >> a.row_begin >> a.row_end) || (side != "left" && side != "right")) {
      throw Error(origin + ": expected `left|right column row_begin row_end`");
    }
    a.side = side == "left" ? Side::left : Side::right;
    out.push_back(a);
  }
  return out;
}

struct DatasetSpec {
  SceneGenConfig scene;
  std::size_t count = 350;
  std::size_t train = 150;
};

/// Generates and writes a dataset: rasters, planted sidecars, manifest.tsv
/// and camera.txt.
inline std::vector<ManifestEntry> write_dataset(const DatasetSpec& spec, const fs::path& dir) {
  spec.scene.validate();
  const auto is_train = split_mask(spec.count, spec.train, spec.scene.seed);
  fs::create_directories(dir);
  std::vector<ManifestEntry> entries;
  for (std::size_t i = 0; i < spec.count; ++i) {
    Rng rng = derive_rng(spec.scene.seed, i);
    const GeneratedScene g = gen_scene(spec.scene, rng);
    const std::string id = scene_id(i);
    entries.push_back(save_scene(g.scene, dir, id, is_train[i] ? "train" : "test"));
    if (!g.planted.empty()) write_text(dir / (id + "_planted.txt"), format_planted(g.planted));
  }
  write_text(dir / "manifest.tsv", format_manifest(entries));
  write_text(dir / "camera.txt", format_camera(default_camera(spec.scene.height, spec.scene.width)));
  return entries;
}

/// 64-bit FNV-1a over the manifest and every file it references, in
/// manifest order. Equal digests mean byte-identical datasets.
inline std::uint64_t dataset_hash(const fs::path& dir) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&](const std::string& bytes) {
    for (unsigned char c : bytes) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  };
  feed(read_text(dir / "manifest.tsv"));
  for (const auto& e : load_manifest(dir)) {
    for (const auto* f : {&e.rgb, &e.depth, &e.label}) feed(read_text(dir / *f));
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

struct Dataset {
  fs::path dir;
  std::vector<ManifestEntry> entries;

  static Dataset open(const fs::path& dir) { return {dir, load_manifest(dir)}; }

  std::vector<ManifestEntry> split(const std::string& tag) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries) {
      if (e.split == tag) out.push_back(e);
    }
    return out;
  }
  const ManifestEntry& find(const std::string& id) const {
    for (const auto& e : entries) {
      if (e.id == id) return e;
    }
    throw Error("dataset: no scene '" + id + "' in " + dir.string());
  }
  Scene load(const ManifestEntry& e) const { return load_scene(dir, e); }
  std::vector<Scene> load_split(const std::string& tag) const {
    std::vector<Scene> out;
    for (const auto& e : split(tag)) out.push_back(load(e));
    return out;
  }
  std::vector<PlantedArc> planted(const std::string& id) const {
    const fs::path p = dir / (id + "_planted.txt");
    if (!fs::exists(p)) return {};
    return parse_planted(read_text(p), p.string());
  }
};

}  // namespace bifc
