// Copyright Contributors to the BevSplat Project
// SPDX-License-Identifier: Apache-2.0
//
// File containers (little-endian):
//   BVM1  patch: dims, instance count, then H (u16), S (u8), D (u8), Q (u32)
//   BVP1  points: u32 N, then per point f32x3 abs, u32 label, f32x3 rel
//   BVF1  scene features: u32 N, u32 C_FS, f32 row-major matrix
//   BVG1  gaussians: u32 N, per point f32 center x3, scale x3, quat x4,
//         opacity, rgb x3
//   BVS1  explicit style-code dump: u64 seed, u32 rows, u32 c_z, f32 matrix
//   BVW1  decoder weights keyed by seed + layer shapes
// Style tables serialize as JSON {seed, n_ins, c_z}; codes are regenerated
// from the seed, never stored. Serialization orders are raw u32 arrays.

#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "bevsplat/bev.hpp"
#include "bevsplat/decoder.hpp"
#include "bevsplat/features.hpp"
#include "bevsplat/image_io.hpp"
#include "bevsplat/pointgen.hpp"
#include "bevsplat/raster.hpp"

namespace bevsplat {

namespace detail {

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open file for writing: " + path);
  return out;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file for reading: " + path);
  return in;
}

template <typename T>
inline void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
inline T read_pod(std::istream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("truncated file: " + path);
  return v;
}

template <typename T>
inline void write_span(std::ostream& out, const T* data, std::size_t n) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
}

template <typename T>
inline void read_span(std::istream& in, T* data, std::size_t n, const std::string& path) {
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
  if (!in) throw IoError("truncated file: " + path);
}

inline void expect_magic(std::istream& in, const char (&magic)[5], const std::string& path) {
  char buf[4];
  in.read(buf, 4);
  if (!in || std::memcmp(buf, magic, 4) != 0) {
    throw IoError("bad magic in " + path + " (expected " + magic + ")");
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Patch container

inline void save_patch(const std::string& path, const BevPatch& patch) {
  auto out = detail::open_out(path);
  out.write("BVM1", 4);
  detail::write_pod<std::uint32_t>(out, patch.width());
  detail::write_pod<std::uint32_t>(out, patch.height_cells());
  detail::write_pod<std::uint32_t>(out, patch.n_instances);
  detail::write_span(out, patch.height.data().data(), patch.height.size());
  detail::write_span(out, patch.semantic.data().data(), patch.semantic.size());
  detail::write_span(out, patch.density.data().data(), patch.density.size());
  detail::write_span(out, patch.instance.data().data(), patch.instance.size());
  if (!out) throw IoError("write failed: " + path);
}

inline BevPatch load_patch_file(const std::string& path) {
  auto in = detail::open_in(path);
  detail::expect_magic(in, "BVM1", path);
  const auto w = detail::read_pod<std::uint32_t>(in, path);
  const auto h = detail::read_pod<std::uint32_t>(in, path);
  const auto n_ins = detail::read_pod<std::uint32_t>(in, path);
  BevPatch patch;
  patch.height = Grid2D<std::uint16_t>(w, h);
  patch.semantic = Grid2D<std::uint8_t>(w, h);
  patch.density = Grid2D<std::uint8_t>(w, h);
  patch.instance = Grid2D<std::uint32_t>(w, h);
  patch.n_instances = n_ins;
  detail::read_span(in, patch.height.data().data(), patch.height.size(), path);
  detail::read_span(in, patch.semantic.data().data(), patch.semantic.size(), path);
  detail::read_span(in, patch.density.data().data(), patch.density.size(), path);
  detail::read_span(in, patch.instance.data().data(), patch.instance.size(), path);
  return patch;
}

// ---------------------------------------------------------------------------
// Point cloud container

inline void save_points(const std::string& path, const BevPointCloud& cloud) {
  auto out = detail::open_out(path);
  out.write("BVP1", 4);
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(cloud.size()));
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Eigen::Vector3f a = cloud.coords_abs[i].cast<float>();
    detail::write_span(out, a.data(), 3);
    detail::write_pod<std::uint32_t>(out, cloud.labels[i]);
    const Eigen::Vector3f r =
        i < cloud.coords_rel.size() ? cloud.coords_rel[i] : Eigen::Vector3f::Zero().eval();
    detail::write_span(out, r.data(), 3);
  }
  if (!out) throw IoError("write failed: " + path);
}

inline BevPointCloud load_points(const std::string& path) {
  auto in = detail::open_in(path);
  detail::expect_magic(in, "BVP1", path);
  const auto n = detail::read_pod<std::uint32_t>(in, path);
  BevPointCloud cloud;
  cloud.coords_abs.resize(n);
  cloud.labels.resize(n);
  cloud.classes.assign(n, 0);
  cloud.coords_rel.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    float a[3];
    detail::read_span(in, a, 3, path);
    cloud.coords_abs[i] = Eigen::Vector3d(a[0], a[1], a[2]);
    cloud.labels[i] = detail::read_pod<std::uint32_t>(in, path);
    float r[3];
    detail::read_span(in, r, 3, path);
    cloud.coords_rel[i] = Eigen::Vector3f(r[0], r[1], r[2]);
  }
  return cloud;
}

/// Rebuilds per-point semantic classes from the patch cells (classes are not
/// part of the point container).
inline void attach_classes(BevPointCloud& cloud, const BevPatch& patch) {
  cloud.classes.resize(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const int x = static_cast<int>(std::floor(cloud.coords_abs[i].x()));
    const int y = static_cast<int>(std::floor(cloud.coords_abs[i].y()));
    if (!patch.semantic.in_bounds(x, y)) {
      throw ContractError("attach_classes: point cell out of patch bounds");
    }
    cloud.classes[i] = patch.semantic(x, y);
  }
}

/// ASCII PLY export (positions, instance label, relative coords).
inline void save_points_ply(const std::string& path, const BevPointCloud& cloud) {
  auto out = detail::open_out(path);
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << cloud.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  out << "property uint label\n";
  out << "property float rx\nproperty float ry\nproperty float rz\n";
  out << "end_header\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.coords_abs[i];
    const Eigen::Vector3f r =
        i < cloud.coords_rel.size() ? cloud.coords_rel[i] : Eigen::Vector3f::Zero().eval();
    out << float(p.x()) << " " << float(p.y()) << " " << float(p.z()) << " " << cloud.labels[i]
        << " " << r.x() << " " << r.y() << " " << r.z() << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Scene features

inline void save_features(const std::string& path, const MatrixRMf& feats) {
  auto out = detail::open_out(path);
  out.write("BVF1", 4);
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(feats.rows()));
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(feats.cols()));
  detail::write_span(out, feats.data(), static_cast<std::size_t>(feats.size()));
  if (!out) throw IoError("write failed: " + path);
}

inline MatrixRMf load_features(const std::string& path) {
  auto in = detail::open_in(path);
  detail::expect_magic(in, "BVF1", path);
  const auto rows = detail::read_pod<std::uint32_t>(in, path);
  const auto cols = detail::read_pod<std::uint32_t>(in, path);
  MatrixRMf feats(rows, cols);
  detail::read_span(in, feats.data(), static_cast<std::size_t>(feats.size()), path);
  return feats;
}

// ---------------------------------------------------------------------------
// Style tables

inline std::string style_table_json(const StyleTable& table) {
  nlohmann::json j;
  j["seed"] = table.seed;
  j["n_ins"] = table.n_ins;
  j["c_z"] = table.c_z;
  return j.dump();
}

inline void save_style_table(const std::string& path, const StyleTable& table) {
  auto out = detail::open_out(path);
  out << style_table_json(table) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

inline StyleTable load_style_table(const std::string& path) {
  auto in = detail::open_in(path);
  nlohmann::json j;
  try {
    in >> j;
    return make_style_table(j.at("seed").get<std::uint64_t>(), j.at("n_ins").get<std::uint32_t>(),
                            j.at("c_z").get<int>());
  } catch (const nlohmann::json::exception& e) {
    throw IoError("invalid style table JSON in " + path + ": " + e.what());
  }
}

/// Explicit-matrix dump for frozen scenes.
inline void save_style_codes(const std::string& path, const StyleTable& table) {
  auto out = detail::open_out(path);
  out.write("BVS1", 4);
  detail::write_pod<std::uint64_t>(out, table.seed);
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(table.codes.rows()));
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(table.codes.cols()));
  detail::write_span(out, table.codes.data(), static_cast<std::size_t>(table.codes.size()));
  if (!out) throw IoError("write failed: " + path);
}

inline StyleTable load_style_codes(const std::string& path) {
  auto in = detail::open_in(path);
  detail::expect_magic(in, "BVS1", path);
  StyleTable table;
  table.seed = detail::read_pod<std::uint64_t>(in, path);
  const auto rows = detail::read_pod<std::uint32_t>(in, path);
  const auto cols = detail::read_pod<std::uint32_t>(in, path);
  if (rows == 0) throw IoError("style code dump has no rows: " + path);
  table.n_ins = rows - 1;
  table.c_z = static_cast<int>(cols);
  table.codes.resize(rows, cols);
  detail::read_span(in, table.codes.data(), static_cast<std::size_t>(table.codes.size()), path);
  return table;
}

// ---------------------------------------------------------------------------
// Serialization orders (raw u32 permutation)

inline void save_order(const std::string& path, const SerialOrder& order) {
  auto out = detail::open_out(path);
  detail::write_span(out, order.perm.data(), order.perm.size());
  if (!out) throw IoError("write failed: " + path);
}

inline std::vector<std::uint32_t> load_order(const std::string& path) {
  auto in = detail::open_in(path);
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  if (bytes % 4 != 0) throw IoError("order file size is not a multiple of 4: " + path);
  std::vector<std::uint32_t> perm(bytes / 4);
  detail::read_span(in, perm.data(), perm.size(), path);
  return perm;
}

// ---------------------------------------------------------------------------
// Gaussian sets

inline void save_gaussians(const std::string& path, const GaussianSet& g) {
  auto out = detail::open_out(path);
  out.write("BVG1", 4);
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(g.size()));
  for (std::size_t i = 0; i < g.size(); ++i) {
    detail::write_span(out, g.centers[i].data(), 3);
    detail::write_span(out, g.scales[i].data(), 3);
    detail::write_span(out, g.rotations[i].data(), 4);
    detail::write_pod<float>(out, g.opacities[i]);
    detail::write_span(out, g.colors[i].data(), 3);
  }
  if (!out) throw IoError("write failed: " + path);
}

inline GaussianSet load_gaussians(const std::string& path) {
  auto in = detail::open_in(path);
  detail::expect_magic(in, "BVG1", path);
  const auto n = detail::read_pod<std::uint32_t>(in, path);
  GaussianSet g;
  g.centers.resize(n);
  g.scales.resize(n);
  g.rotations.resize(n);
  g.opacities.resize(n);
  g.colors.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    detail::read_span(in, g.centers[i].data(), 3, path);
    detail::read_span(in, g.scales[i].data(), 3, path);
    detail::read_span(in, g.rotations[i].data(), 4, path);
    g.opacities[i] = detail::read_pod<float>(in, path);
    detail::read_span(in, g.colors[i].data(), 3, path);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Decoder weights

inline void save_weights(const std::string& path, const DecoderWeights& w) {
  auto out = detail::open_out(path);
  out.write("BVW1", 4);
  detail::write_pod<std::uint64_t>(out, w.seed);
  for (int v : {w.c_fp, w.c_ft, w.heads, w.d_qk, w.c_z, w.c_a}) {
    detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(v));
  }
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(w.layers.size()));
  auto write_md = [&](const MatrixRMd& m) {
    detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
    detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
    detail::write_span(out, m.data(), static_cast<std::size_t>(m.size()));
  };
  auto write_mf = [&](const MatrixRMf& m) {
    detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
    detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
    detail::write_span(out, m.data(), static_cast<std::size_t>(m.size()));
  };
  write_md(w.wq);
  write_md(w.wk);
  write_md(w.wv);
  write_md(w.wo);
  for (const ModulatedLinear& layer : w.layers) {
    write_mf(layer.weight);
    detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(layer.bias.size()));
    detail::write_span(out, layer.bias.data(), static_cast<std::size_t>(layer.bias.size()));
    write_mf(layer.style_affine);
  }
  if (!out) throw IoError("write failed: " + path);
}

inline DecoderWeights load_weights(const std::string& path) {
  auto in = detail::open_in(path);
  detail::expect_magic(in, "BVW1", path);
  DecoderWeights w;
  w.seed = detail::read_pod<std::uint64_t>(in, path);
  w.c_fp = static_cast<int>(detail::read_pod<std::uint32_t>(in, path));
  w.c_ft = static_cast<int>(detail::read_pod<std::uint32_t>(in, path));
  w.heads = static_cast<int>(detail::read_pod<std::uint32_t>(in, path));
  w.d_qk = static_cast<int>(detail::read_pod<std::uint32_t>(in, path));
  w.c_z = static_cast<int>(detail::read_pod<std::uint32_t>(in, path));
  w.c_a = static_cast<int>(detail::read_pod<std::uint32_t>(in, path));
  const auto n_layers = detail::read_pod<std::uint32_t>(in, path);
  auto read_md = [&](MatrixRMd& m) {
    const auto rows = detail::read_pod<std::uint32_t>(in, path);
    const auto cols = detail::read_pod<std::uint32_t>(in, path);
    m.resize(rows, cols);
    detail::read_span(in, m.data(), static_cast<std::size_t>(m.size()), path);
  };
  auto read_mf = [&](MatrixRMf& m) {
    const auto rows = detail::read_pod<std::uint32_t>(in, path);
    const auto cols = detail::read_pod<std::uint32_t>(in, path);
    m.resize(rows, cols);
    detail::read_span(in, m.data(), static_cast<std::size_t>(m.size()), path);
  };
  read_md(w.wq);
  read_md(w.wk);
  read_md(w.wv);
  read_md(w.wo);
  w.layers.resize(n_layers);
  for (ModulatedLinear& layer : w.layers) {
    read_mf(layer.weight);
    const auto b = detail::read_pod<std::uint32_t>(in, path);
    layer.bias.resize(b);
    detail::read_span(in, layer.bias.data(), b, path);
    read_mf(layer.style_affine);
  }
  return w;
}

// ---------------------------------------------------------------------------
// Render target images

inline std::vector<std::uint8_t> quantize_color(const RenderTarget& t) {
  std::vector<std::uint8_t> rgb(t.color.size() * 3);
  for (std::size_t i = 0; i < t.color.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      const double v = std::clamp(t.color[i][c], 0.0, 1.0);
      rgb[i * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  }
  return rgb;
}

inline void save_render_png(const std::string& path, const RenderTarget& t) {
  write_png_rgb8(path, t.width, t.height, quantize_color(t));
}

/// Alpha in [0,1] maps to the full 16-bit range.
inline void save_alpha_png(const std::string& path, const RenderTarget& t) {
  Grid2D<std::uint16_t> img(t.width, t.height);
  for (std::size_t i = 0; i < t.alpha.size(); ++i) {
    img.data()[i] = static_cast<std::uint16_t>(std::lround(std::clamp(t.alpha[i], 0.0, 1.0) * 65535.0));
  }
  write_png_gray16(path, img);
}

/// Depth maps linearly: stored = depth / depth_scale * 65535 (clamped), so a
/// stored value v decodes to v / 65535 * depth_scale world units.
inline void save_depth_png(const std::string& path, const RenderTarget& t, double depth_scale) {
  if (!(depth_scale > 0.0)) throw ContractError("depth scale must be positive");
  Grid2D<std::uint16_t> img(t.width, t.height);
  for (std::size_t i = 0; i < t.depth.size(); ++i) {
    const double v = std::clamp(t.depth[i] / depth_scale, 0.0, 1.0);
    img.data()[i] = static_cast<std::uint16_t>(std::lround(v * 65535.0));
  }
  write_png_gray16(path, img);
}

}  // namespace bevsplat
