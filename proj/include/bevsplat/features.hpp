// Copyright Contributors to the BevSplat Project
// SPDX-License-Identifier: Apache-2.0
//
// Per-cell scene features, per-point positional embeddings, and the seeded
// per-instance style lookup table. The scene encoder is a deterministic
// seeded projection over local map descriptors; its contract is shape,
// determinism, and (x, y) indexing, which is all downstream stages consume.

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "bevsplat/bev.hpp"
#include "bevsplat/common.hpp"
#include "bevsplat/pointgen.hpp"

namespace bevsplat {

constexpr int kDefaultSceneFeatureChannels = 61;  // C_FS
constexpr int kDefaultStyleChannels = 256;        // C_Z
constexpr int kDefaultPositionalFrequencies = 10;
constexpr double kHeightNormalization = 64.0;

/// Per-cell feature grid with the same spatial dims as the patch maps.
struct SceneFeatureMap {
  int width = 0;
  int height = 0;
  MatrixRMf g;  // (width*height) x channels, row-major by cell index

  int channels() const { return static_cast<int>(g.cols()); }
  Eigen::Index cell_index(int x, int y) const {
    return static_cast<Eigen::Index>(y) * width + x;
  }
};

namespace detail {

inline constexpr std::uint64_t kSceneEncoderStream = 0x73636e656e636f64ull;

/// Local descriptor: normalized height, one-hot class, 3x3 and 9x9 mean
/// pooled normalized height (replicated borders).
inline constexpr int kSceneDescriptorDim = 3 + kSemanticClassCount;

inline void scene_descriptor(const BevPatch& patch, int x, int y, double* out) {
  const int w = patch.width();
  const int h = patch.height_cells();
  const double h_norm = patch.height(x, y) / kHeightNormalization;
  out[0] = h_norm;
  for (int c = 0; c < kSemanticClassCount; ++c) out[1 + c] = 0.0;
  out[1 + patch.semantic(x, y)] = 1.0;

  auto pooled = [&](int radius) {
    double sum = 0.0;
    const int d = 2 * radius + 1;
    for (int dy = -radius; dy <= radius; ++dy) {
      const int yy = std::clamp(y + dy, 0, h - 1);
      for (int dx = -radius; dx <= radius; ++dx) {
        const int xx = std::clamp(x + dx, 0, w - 1);
        sum += patch.height(xx, yy) / kHeightNormalization;
      }
    }
    return sum / (d * d);
  };
  out[1 + kSemanticClassCount] = pooled(1);
  out[2 + kSemanticClassCount] = pooled(4);
}

}  // namespace detail

/// Seeded linear projection of local descriptors to c_fs channels.
/// Deterministic given (patch, seed); translation-equivariant away from the
/// map border (pooling windows are the only neighborhood dependence).
inline SceneFeatureMap scene_encode(const BevPatch& patch, std::uint64_t seed,
                                    int c_fs = kDefaultSceneFeatureChannels, int threads = 1) {
  if (c_fs < 1) throw ContractError("scene_encode: channel count must be >= 1");
  SceneFeatureMap map;
  map.width = patch.width();
  map.height = patch.height_cells();
  const MatrixRMf proj =
      normal_matrix_f(c_fs, detail::kSceneDescriptorDim, derive_seed(seed, detail::kSceneEncoderStream),
                      1.0 / std::sqrt(double(detail::kSceneDescriptorDim)));
  map.g.resize(static_cast<Eigen::Index>(map.width) * map.height, c_fs);

  const std::size_t n_cells = static_cast<std::size_t>(map.width) * map.height;
  parallel_chunks(n_cells, 4096, threads, [&](std::size_t lo, std::size_t hi) {
    double desc[detail::kSceneDescriptorDim];
    Eigen::VectorXf descf(detail::kSceneDescriptorDim);
    for (std::size_t cell = lo; cell < hi; ++cell) {
      const int x = static_cast<int>(cell % map.width);
      const int y = static_cast<int>(cell / map.width);
      detail::scene_descriptor(patch, x, y, desc);
      for (int k = 0; k < detail::kSceneDescriptorDim; ++k) descf[k] = static_cast<float>(desc[k]);
      map.g.row(static_cast<Eigen::Index>(cell)) = (proj * descf).transpose();
    }
  });
  return map;
}

/// Indexes the feature grid by each point's (x, y) cell; z is ignored.
inline void gather_scene_feats(BevPointCloud& cloud, const SceneFeatureMap& g) {
  const std::size_t n = cloud.size();
  cloud.scene_feats.resize(n, g.channels());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = cloud.coords_abs[i];
    const int x = static_cast<int>(std::floor(p.x()));
    const int y = static_cast<int>(std::floor(p.y()));
    if (x < 0 || y < 0 || x >= g.width || y >= g.height) {
      throw ContractError("gather_scene_feats: point cell out of bounds");
    }
    cloud.scene_feats.row(i) = g.g.row(g.cell_index(x, y));
  }
}

namespace detail {

/// Writes {sin(2^i pi v), cos(2^i pi v)} for i in [0, n_pe) to out[0..2*n_pe).
/// The angle is range-reduced exactly (period 2 in v); anchors are evaluated
/// directly every 4 octaves with angle doubling in between, keeping the
/// absolute error near 1e-14 for any input magnitude.
inline void positional_encode_value(double v, int n_pe, double* out) {
  const double base = std::remainder(v, 2.0);
  double s = 0.0, c = 1.0;
  for (int i = 0; i < n_pe; ++i) {
    if (i % 4 == 0) {
      const double y = std::remainder(std::ldexp(base, i), 2.0);
      const double theta = M_PI * y;
      s = std::sin(theta);
      c = std::cos(theta);
    } else {
      const double s2 = 2.0 * s * c;
      c = 1.0 - 2.0 * s * s;
      s = s2;
    }
    out[2 * i] = s;
    out[2 * i + 1] = c;
  }
}

/// Encodes rows [lo, hi) of concat(C_R, F_S) into `dst` (row stride
/// 2*n_pe*(3+C_FS)); dst points at the output row for `lo`.
inline void positional_encode_rows(const BevPointCloud& cloud, std::size_t lo, std::size_t hi,
                                   int n_pe, double* dst) {
  const int c_fs = static_cast<int>(cloud.scene_feats.cols());
  const int n_values = 3 + c_fs;
  const std::size_t stride = static_cast<std::size_t>(2) * n_pe * n_values;
  for (std::size_t i = lo; i < hi; ++i) {
    double* row = dst + (i - lo) * stride;
    const Eigen::Vector3f& rel = cloud.coords_rel[i];
    for (int a = 0; a < 3; ++a) {
      positional_encode_value(rel[a], n_pe, row + static_cast<std::size_t>(2) * n_pe * a);
    }
    for (int k = 0; k < c_fs; ++k) {
      positional_encode_value(cloud.scene_feats(i, k), n_pe,
                              row + static_cast<std::size_t>(2) * n_pe * (3 + k));
    }
  }
}

}  // namespace detail

/// Sin/cos embedding of concat(C_R, F_S), 2*n_pe values per input channel.
/// Output width C_FP = 2 * n_pe * (3 + C_FS).
inline MatrixRMd positional_encode(const BevPointCloud& cloud, int n_pe, int threads = 1) {
  if (n_pe < 1) throw ContractError("positional_encode: n_pe must be >= 1");
  if (cloud.coords_rel.size() != cloud.size() ||
      cloud.scene_feats.rows() != static_cast<Eigen::Index>(cloud.size())) {
    throw ContractError("positional_encode: relative coords and scene features must be populated");
  }
  const int c_fp = 2 * n_pe * (3 + static_cast<int>(cloud.scene_feats.cols()));
  MatrixRMd out(cloud.size(), c_fp);
  parallel_chunks(cloud.size(), 8192, threads, [&](std::size_t lo, std::size_t hi) {
    detail::positional_encode_rows(cloud, lo, hi, n_pe, out.data() + lo * c_fp);
  });
  return out;
}

/// Same encoding with float storage (for large clouds); values are computed
/// in double and rounded once.
inline MatrixRMf positional_encode_f(const BevPointCloud& cloud, int n_pe, int threads = 1) {
  if (n_pe < 1) throw ContractError("positional_encode: n_pe must be >= 1");
  if (cloud.coords_rel.size() != cloud.size() ||
      cloud.scene_feats.rows() != static_cast<Eigen::Index>(cloud.size())) {
    throw ContractError("positional_encode: relative coords and scene features must be populated");
  }
  const int c_fp = 2 * n_pe * (3 + static_cast<int>(cloud.scene_feats.cols()));
  MatrixRMf out(cloud.size(), c_fp);
  parallel_chunks(cloud.size(), 8192, threads, [&](std::size_t lo, std::size_t hi) {
    std::vector<double> buf(static_cast<std::size_t>(hi - lo) * c_fp);
    detail::positional_encode_rows(cloud, lo, hi, n_pe, buf.data());
    for (std::size_t i = 0; i < buf.size(); ++i) {
      out.data()[lo * c_fp + i] = static_cast<float>(buf[i]);
    }
  });
  return out;
}

/// Instance label -> style code lookup. Codes are i.i.d. standard normal,
/// regenerated from (seed, label); row 0 is the shared stuff code. Nothing
/// but (seed, n_ins, c_z) needs to be persisted.
struct StyleTable {
  std::uint64_t seed = 0;
  std::uint32_t n_ins = 0;
  int c_z = kDefaultStyleChannels;
  MatrixRMf codes;  // (n_ins + 1) x c_z, row l = label l
};

inline constexpr std::uint64_t kStyleStream = 0x7374796c65746162ull;

inline Eigen::VectorXf style_code(std::uint64_t seed, std::uint32_t label, int c_z) {
  Eigen::VectorXf code(c_z);
  fill_normal(code.data(), static_cast<std::size_t>(c_z),
              derive_seed(seed, kStyleStream + 0x9e3779b9ull * (label + 1)));
  return code;
}

inline StyleTable make_style_table(std::uint64_t seed, std::uint32_t n_ins,
                                   int c_z = kDefaultStyleChannels) {
  if (c_z < 1) throw ContractError("style table: c_z must be >= 1");
  StyleTable table;
  table.seed = seed;
  table.n_ins = n_ins;
  table.c_z = c_z;
  table.codes.resize(n_ins + 1, c_z);
  for (std::uint32_t l = 0; l <= n_ins; ++l) {
    table.codes.row(l) = style_code(seed, l, c_z).transpose();
  }
  return table;
}

/// Gathers one style row per point label.
inline MatrixRMf style_lookup(const StyleTable& table, const std::vector<std::uint32_t>& labels) {
  MatrixRMf out(labels.size(), table.c_z);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] > table.n_ins) {
      throw ContractError("style_lookup: unknown instance label " + std::to_string(labels[i]));
    }
    out.row(i) = table.codes.row(labels[i]);
  }
  return out;
}

inline Eigen::VectorXf interpolate_styles(const Eigen::VectorXf& a, const Eigen::VectorXf& b,
                                          double t) {
  if (a.size() != b.size()) throw ContractError("interpolate_styles: code widths differ");
  if (t < 0.0 || t > 1.0) throw ContractError("interpolate_styles: t must be in [0, 1]");
  return ((1.0 - t) * a.cast<double>() + t * b.cast<double>()).cast<float>();
}

}  // namespace bevsplat
