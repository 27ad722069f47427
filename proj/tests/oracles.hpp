// Copyright Contributors to the BevSplat Project
// SPDX-License-Identifier: Apache-2.0
//
// Independent reference implementations used as test oracles. Each one is
// written against the contract, not the production code path: union-find
// component labeling, per-ray brute-force first-hit search over occupied
// voxels, direct long-double positional encoding, naive dense per-window
// attention, and back-to-front over-compositing.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <vector>

#include "bevsplat/bevsplat.hpp"

namespace oracle {

using bevsplat::BevPatch;
using bevsplat::CameraModel;
using bevsplat::DecoderWeights;
using bevsplat::Grid2D;
using bevsplat::MatrixRMd;
using bevsplat::MatrixRMf;
using bevsplat::OccupancyGrid;
using bevsplat::Splat2D;

// ---------------------------------------------------------------------------
// Connected components by union-find (two-pass), labels in arbitrary order.

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) {
    for (std::size_t i = 0; i < n; ++i) parent_[i] = i;
  }
  std::size_t find(std::size_t a) {
    while (parent_[a] != a) {
      parent_[a] = parent_[parent_[a]];
      a = parent_[a];
    }
    return a;
  }
  void unite(std::size_t a, std::size_t b) { parent_[find(a)] = find(b); }

 private:
  std::vector<std::size_t> parent_;
};

/// 4-connected components of instance-bearing cells, same class only.
/// Returns (labels 1..n in root order, component count).
inline std::pair<Grid2D<std::uint32_t>, std::uint32_t> flood_components(
    const Grid2D<std::uint8_t>& semantic) {
  const int w = semantic.width(), h = semantic.height();
  UnionFind uf(static_cast<std::size_t>(w) * h);
  auto idx = [&](int x, int y) { return static_cast<std::size_t>(y) * w + x; };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!bevsplat::is_instance_class(semantic(x, y))) continue;
      if (x + 1 < w && semantic(x + 1, y) == semantic(x, y)) uf.unite(idx(x, y), idx(x + 1, y));
      if (y + 1 < h && semantic(x, y + 1) == semantic(x, y)) uf.unite(idx(x, y), idx(x, y + 1));
    }
  }
  Grid2D<std::uint32_t> labels(w, h, 0);
  std::map<std::size_t, std::uint32_t> root_to_label;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!bevsplat::is_instance_class(semantic(x, y))) continue;
      const std::size_t root = uf.find(idx(x, y));
      auto [it, inserted] =
          root_to_label.emplace(root, static_cast<std::uint32_t>(root_to_label.size() + 1));
      labels(x, y) = it->second;
    }
  }
  return {std::move(labels), static_cast<std::uint32_t>(root_to_label.size())};
}

// ---------------------------------------------------------------------------
// First-hit visibility by brute-force slab tests over all occupied voxels.

/// Set of visible voxel bit indices for the same ray set the production
/// traversal casts (pixel centers plus supersampling offsets).
inline std::set<std::size_t> visible_voxels(const OccupancyGrid& occ, const CameraModel& cam,
                                            int supersample) {
  std::set<std::size_t> visible;
  struct Voxel {
    int x, y, z;
  };
  std::vector<Voxel> occupied;
  for (int z = 0; z < occ.nz; ++z) {
    for (int y = 0; y < occ.ny; ++y) {
      for (int x = 0; x < occ.nx; ++x) {
        if (occ.occupied(x, y, z)) occupied.push_back({x, y, z});
      }
    }
  }
  const Eigen::Vector3d origin = cam.camera_center();
  for (int py = 0; py < cam.height; ++py) {
    for (int px = 0; px < cam.width; ++px) {
      for (int sy = 0; sy < supersample; ++sy) {
        for (int sx = 0; sx < supersample; ++sx) {
          const double u = px + (sx + 0.5) / supersample;
          const double v = py + (sy + 0.5) / supersample;
          const Eigen::Vector3d dir = cam.ray_direction(u, v);
          double best_entry = std::numeric_limits<double>::infinity();
          const Voxel* best = nullptr;
          for (const Voxel& vox : occupied) {
            double tin = cam.near, tout = cam.far;
            bool hit = true;
            const double lo_box[3] = {double(vox.x), double(vox.y), double(vox.z)};
            for (int a = 0; a < 3 && hit; ++a) {
              const double o = origin[a], d = dir[a];
              if (d == 0.0) {
                if (o < lo_box[a] || o > lo_box[a] + 1.0) hit = false;
                continue;
              }
              double ta = (lo_box[a] - o) / d;
              double tb = (lo_box[a] + 1.0 - o) / d;
              if (ta > tb) std::swap(ta, tb);
              tin = std::max(tin, ta);
              tout = std::min(tout, tb);
              if (tin > tout) hit = false;
            }
            if (hit && tin < best_entry) {
              best_entry = tin;
              best = &vox;
            }
          }
          if (best) visible.insert(occ.bit_index(best->x, best->y, best->z));
        }
      }
    }
  }
  return visible;
}

// ---------------------------------------------------------------------------
// Positional encoding by direct evaluation in long double.

inline void positional_encode_direct(double v, int n_pe, double* out) {
  constexpr long double kPi = 3.14159265358979323846264338327950288L;
  for (int i = 0; i < n_pe; ++i) {
    const long double arg = std::ldexp(1.0L, i) * kPi * static_cast<long double>(v);
    out[2 * i] = static_cast<double>(sinl(arg));
    out[2 * i + 1] = static_cast<double>(cosl(arg));
  }
}

// ---------------------------------------------------------------------------
// Dense per-window attention recomputation, explicit loops in double.

inline MatrixRMf window_attention_dense(const MatrixRMf& fps, const DecoderWeights& w,
                                        int window) {
  const Eigen::Index n = fps.rows();
  const int d_v = w.c_ft / w.heads;
  MatrixRMf out(n, w.c_ft);
  for (Eigen::Index lo = 0; lo < n; lo += window) {
    const Eigen::Index len = std::min<Eigen::Index>(window, n - lo);
    MatrixRMd q = MatrixRMd::Zero(len, w.heads * w.d_qk);
    MatrixRMd k = MatrixRMd::Zero(len, w.heads * w.d_qk);
    MatrixRMd v = MatrixRMd::Zero(len, w.c_ft);
    for (Eigen::Index r = 0; r < len; ++r) {
      for (Eigen::Index c = 0; c < w.wq.cols(); ++c) {
        double acc_q = 0.0, acc_k = 0.0;
        for (Eigen::Index j = 0; j < w.c_fp; ++j) {
          acc_q += double(fps(lo + r, j)) * w.wq(j, c);
          acc_k += double(fps(lo + r, j)) * w.wk(j, c);
        }
        q(r, c) = acc_q;
        k(r, c) = acc_k;
      }
      for (Eigen::Index c = 0; c < w.c_ft; ++c) {
        double acc = 0.0;
        for (Eigen::Index j = 0; j < w.c_fp; ++j) acc += double(fps(lo + r, j)) * w.wv(j, c);
        v(r, c) = acc;
      }
    }
    MatrixRMd heads_out = MatrixRMd::Zero(len, w.c_ft);
    for (int h = 0; h < w.heads; ++h) {
      for (Eigen::Index r = 0; r < len; ++r) {
        std::vector<double> scores(len);
        double row_max = -std::numeric_limits<double>::infinity();
        for (Eigen::Index c = 0; c < len; ++c) {
          double dot = 0.0;
          for (int j = 0; j < w.d_qk; ++j) {
            dot += q(r, h * w.d_qk + j) * k(c, h * w.d_qk + j);
          }
          scores[c] = dot / std::sqrt(double(w.d_qk));
          row_max = std::max(row_max, scores[c]);
        }
        double denom = 0.0;
        for (Eigen::Index c = 0; c < len; ++c) {
          scores[c] = std::exp(scores[c] - row_max);
          denom += scores[c];
        }
        for (Eigen::Index c = 0; c < len; ++c) scores[c] /= denom;
        for (int j = 0; j < d_v; ++j) {
          double acc = 0.0;
          for (Eigen::Index c = 0; c < len; ++c) acc += scores[c] * v(c, h * d_v + j);
          heads_out(r, h * d_v + j) = acc;
        }
      }
    }
    for (Eigen::Index r = 0; r < len; ++r) {
      for (int c = 0; c < w.c_ft; ++c) {
        double acc = 0.0;
        for (int j = 0; j < w.c_ft; ++j) acc += heads_out(r, j) * w.wo(j, c);
        out(lo + r, c) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Back-to-front over-compositing of projected splats.

struct CompositedPixel {
  Eigen::Vector3d color;
  double alpha;
  double depth;
};

/// Splats must be depth-sorted ascending (the renderer's input order); the
/// oracle walks them back to front.
inline CompositedPixel composite_back_to_front(const std::vector<Splat2D>& sorted, double px,
                                               double py, const Eigen::Vector3d& background) {
  Eigen::Vector3d color = background;
  double alpha = 0.0;
  double depth_w = 0.0;
  for (auto it = sorted.rbegin(); it != sorted.rend(); ++it) {
    const Splat2D& s = *it;
    const double a11 = s.cov(0, 0), a12 = s.cov(0, 1), a22 = s.cov(1, 1);
    const double det = a11 * a22 - a12 * a12;
    if (!(det > 0.0)) continue;
    const double dx = px - s.mean.x();
    const double dy = py - s.mean.y();
    const double quad = (a22 * dx * dx - 2.0 * a12 * dx * dy + a11 * dy * dy) / det;
    if (quad > 9.0) continue;
    const double a = std::min(double(s.opacity) * std::exp(-0.5 * quad), 0.99);
    color = a * s.color.cast<double>() + (1.0 - a) * color;
    alpha = a + (1.0 - a) * alpha;
    depth_w = a * s.view_depth + (1.0 - a) * depth_w;
  }
  return {color, alpha, alpha > 0.0 ? depth_w / alpha : 0.0};
}

}  // namespace oracle
