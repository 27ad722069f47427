// Copyright Contributors to the BevSplat Project
// SPDX-License-Identifier: Apache-2.0
//
// Point generation from BEV patches: height-field extrusion, the solid
// occupancy volume, visibility culling (region / instance / ray-intersection
// via Amanatides-Woo grid traversal), and instance-relative coordinates.

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <vector>

#include "bevsplat/bev.hpp"
#include "bevsplat/camera.hpp"
#include "bevsplat/common.hpp"

namespace bevsplat {

constexpr int kDefaultSupersample = 2;

/// Visible point set with per-point attributes. All arrays share length N.
/// scene_feats has zero columns until the feature stage fills it.
struct BevPointCloud {
  std::vector<Eigen::Vector3d> coords_abs;   // C_A, world units
  std::vector<std::uint32_t> labels;         // I, 0 = stuff
  std::vector<std::uint8_t> classes;         // semantic class per point
  std::vector<Eigen::Vector3f> coords_rel;   // C_R in [-1,1]^3
  MatrixRMf scene_feats;                     // N x C_FS

  std::size_t size() const { return coords_abs.size(); }

  /// Rows of the cloud where keep[i] is true, preserving order.
  BevPointCloud filter(const std::vector<std::uint8_t>& keep) const {
    BevPointCloud out;
    std::size_t n = 0;
    for (std::uint8_t k : keep) n += k ? 1 : 0;
    out.coords_abs.reserve(n);
    out.labels.reserve(n);
    out.classes.reserve(n);
    if (!coords_rel.empty()) out.coords_rel.reserve(n);
    const bool has_feats = scene_feats.rows() == static_cast<Eigen::Index>(size());
    if (has_feats) out.scene_feats.resize(n, scene_feats.cols());
    Eigen::Index row = 0;
    for (std::size_t i = 0; i < size(); ++i) {
      if (!keep[i]) continue;
      out.coords_abs.push_back(coords_abs[i]);
      out.labels.push_back(labels[i]);
      out.classes.push_back(classes[i]);
      if (!coords_rel.empty()) out.coords_rel.push_back(coords_rel[i]);
      if (has_feats) out.scene_feats.row(row++) = scene_feats.row(i);
    }
    return out;
  }
};

/// One bit per voxel; voxel (x, y, z) spans [x,x+1)x[y,y+1)x[z,z+1).
struct OccupancyGrid {
  int nx = 0, ny = 0, nz = 0;
  std::vector<std::uint64_t> bits;

  static OccupancyGrid make(int nx, int ny, int nz) {
    OccupancyGrid g;
    g.nx = nx;
    g.ny = ny;
    g.nz = nz;
    g.bits.assign((static_cast<std::size_t>(nx) * ny * nz + 63) / 64, 0);
    return g;
  }

  bool inside(int x, int y, int z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < nx && y < ny && z < nz;
  }
  std::size_t bit_index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * ny + y) * nx + x;
  }
  bool occupied(int x, int y, int z) const {
    const std::size_t i = bit_index(x, y, z);
    return (bits[i >> 6] >> (i & 63)) & 1u;
  }
  void set(int x, int y, int z) {
    const std::size_t i = bit_index(x, y, z);
    bits[i >> 6] |= (std::uint64_t{1} << (i & 63));
  }
  std::size_t popcount() const {
    std::size_t n = 0;
    for (std::uint64_t w : bits) n += static_cast<std::size_t>(__builtin_popcountll(w));
    return n;
  }
};

enum class CullMode { kRegion, kInstance, kRay };

inline const char* cull_mode_name(CullMode m) {
  switch (m) {
    case CullMode::kRegion: return "region";
    case CullMode::kInstance: return "instance";
    case CullMode::kRay: return "ray";
  }
  return "invalid";
}

struct CullOptions {
  CullMode mode = CullMode::kRay;
  int supersample = kDefaultSupersample;  // rays per pixel edge
  int threads = 1;
};

/// One point per (cell, integer z level) for every density-enabled cell,
/// positioned at (x+0.5, y+0.5, z) for z in [0, H(x,y)]. Emission order is
/// row-major over cells, z ascending.
inline BevPointCloud extrude(const BevPatch& patch) {
  BevPointCloud cloud;
  std::size_t count = 0;
  for (int y = 0; y < patch.height_cells(); ++y) {
    for (int x = 0; x < patch.width(); ++x) {
      if (patch.density(x, y)) count += static_cast<std::size_t>(patch.height(x, y)) + 1;
    }
  }
  cloud.coords_abs.reserve(count);
  cloud.labels.reserve(count);
  cloud.classes.reserve(count);
  for (int y = 0; y < patch.height_cells(); ++y) {
    for (int x = 0; x < patch.width(); ++x) {
      if (!patch.density(x, y)) continue;
      const std::uint32_t label = patch.instance(x, y);
      const std::uint8_t cls = patch.semantic(x, y);
      const int top = patch.height(x, y);
      for (int z = 0; z <= top; ++z) {
        cloud.coords_abs.emplace_back(x + 0.5, y + 0.5, z);
        cloud.labels.push_back(label);
        cloud.classes.push_back(cls);
      }
    }
  }
  return cloud;
}

/// Solid occupancy of the full height field (independent of the density
/// map): voxel (x,y,z) is occupied iff z <= H(x,y) and S(x,y) is solid.
inline OccupancyGrid build_occupancy(const BevPatch& patch) {
  int nz = 0;
  for (int y = 0; y < patch.height_cells(); ++y) {
    for (int x = 0; x < patch.width(); ++x) {
      if (is_solid_class(patch.semantic(x, y))) {
        nz = std::max(nz, int(patch.height(x, y)) + 1);
      }
    }
  }
  OccupancyGrid grid = OccupancyGrid::make(patch.width(), patch.height_cells(), nz);
  for (int y = 0; y < patch.height_cells(); ++y) {
    for (int x = 0; x < patch.width(); ++x) {
      if (!is_solid_class(patch.semantic(x, y))) continue;
      const int top = patch.height(x, y);
      for (int z = 0; z <= top; ++z) grid.set(x, y, z);
    }
  }
  return grid;
}

namespace detail {

/// Entry/exit of the ray o + t*d against [0,n]^3-style box; empty if t0 > t1.
inline bool clip_ray_to_box(const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                            const Eigen::Vector3d& box_max, double& t0, double& t1) {
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0.0) {
      if (o[a] < 0.0 || o[a] > box_max[a]) return false;
      continue;
    }
    double ta = (0.0 - o[a]) / d[a];
    double tb = (box_max[a] - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return false;
  }
  return true;
}

}  // namespace detail

/// Binary visibility volume: the first occupied voxel along each cast ray is
/// marked. One ray is cast per output pixel times supersample^2, clipped to
/// camera depth in [near, far]. Amanatides-Woo traversal.
inline OccupancyGrid trace_visibility(const OccupancyGrid& occ, const CameraModel& cam,
                                      int supersample = kDefaultSupersample, int threads = 1) {
  cam.validate();
  if (supersample < 1) throw ContractError("supersample factor must be >= 1");
  OccupancyGrid vis = OccupancyGrid::make(occ.nx, occ.ny, occ.nz);
  if (occ.nz == 0) return vis;

  const Eigen::Vector3d origin = cam.camera_center();
  const Eigen::Vector3d box_max(occ.nx, occ.ny, occ.nz);
  const int ss = supersample;
  const std::size_t n_rays =
      static_cast<std::size_t>(cam.width) * cam.height * ss * ss;

  auto trace_chunk = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t ray = lo; ray < hi; ++ray) {
      const std::size_t sub = ray % (ss * ss);
      const std::size_t pix = ray / (ss * ss);
      const int px = static_cast<int>(pix % cam.width);
      const int py = static_cast<int>(pix / cam.width);
      const double u = px + (static_cast<int>(sub % ss) + 0.5) / ss;
      const double v = py + (static_cast<int>(sub / ss) + 0.5) / ss;
      const Eigen::Vector3d dir = cam.ray_direction(u, v);

      double t0 = cam.near;
      double t1 = cam.far;
      if (!detail::clip_ray_to_box(origin, dir, box_max, t0, t1)) continue;

      const Eigen::Vector3d entry = origin + t0 * dir;
      int ix = std::clamp(static_cast<int>(std::floor(entry.x())), 0, occ.nx - 1);
      int iy = std::clamp(static_cast<int>(std::floor(entry.y())), 0, occ.ny - 1);
      int iz = std::clamp(static_cast<int>(std::floor(entry.z())), 0, occ.nz - 1);

      int step[3];
      double t_max[3], t_delta[3];
      const int voxel0[3] = {ix, iy, iz};
      for (int a = 0; a < 3; ++a) {
        if (dir[a] > 0.0) {
          step[a] = 1;
          t_delta[a] = 1.0 / dir[a];
          t_max[a] = t0 + (voxel0[a] + 1 - entry[a]) / dir[a];
        } else if (dir[a] < 0.0) {
          step[a] = -1;
          t_delta[a] = -1.0 / dir[a];
          t_max[a] = t0 + (voxel0[a] - entry[a]) / dir[a];
        } else {
          step[a] = 0;
          t_delta[a] = std::numeric_limits<double>::infinity();
          t_max[a] = std::numeric_limits<double>::infinity();
        }
      }

      int vx = ix, vy = iy, vz = iz;
      double t_enter = t0;
      while (t_enter <= t1) {
        if (occ.occupied(vx, vy, vz)) {
          const std::size_t bit = vis.bit_index(vx, vy, vz);
          std::atomic_ref<std::uint64_t> word(vis.bits[bit >> 6]);
          word.fetch_or(std::uint64_t{1} << (bit & 63), std::memory_order_relaxed);
          break;
        }
        const int axis = (t_max[0] <= t_max[1]) ? (t_max[0] <= t_max[2] ? 0 : 2)
                                                : (t_max[1] <= t_max[2] ? 1 : 2);
        t_enter = t_max[axis];
        t_max[axis] += t_delta[axis];
        if (axis == 0) vx += step[0];
        else if (axis == 1) vy += step[1];
        else vz += step[2];
        if (!vis.inside(vx, vy, vz)) break;
      }
    }
  };

  parallel_chunks(n_rays, 4096, threads, trace_chunk);
  return vis;
}

namespace detail {

/// Convex hull (monotone chain) of the frustum corners projected to z=0.
inline std::vector<Eigen::Vector2d> frustum_ground_hull(const CameraModel& cam) {
  std::vector<Eigen::Vector2d> pts;
  pts.reserve(8);
  const Eigen::Matrix3d rt = cam.rotation().transpose();
  for (double depth : {cam.near, cam.far}) {
    for (int k = 0; k < 4; ++k) {
      const double u = (k & 1) ? cam.width : 0.0;
      const double v = (k & 2) ? cam.height : 0.0;
      const Eigen::Vector3d p_cam((u - cam.cx()) / cam.fx() * depth,
                                  (v - cam.cy()) / cam.fy() * depth, depth);
      const Eigen::Vector3d p = rt * (p_cam - cam.translation());
      pts.emplace_back(p.x(), p.y());
    }
  }
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](const auto& a, const auto& b) { return a == b; }),
            pts.end());
  if (pts.size() < 3) return pts;
  auto cross = [](const Eigen::Vector2d& o, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
  };
  std::vector<Eigen::Vector2d> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  const std::size_t lower = k + 1;
  for (auto it = pts.rbegin() + 1; it != pts.rend(); ++it) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], *it) <= 0) --k;
    hull[k++] = *it;
  }
  hull.resize(k - 1);
  return hull;
}

/// Separating-axis test between a convex polygon and the unit cell square.
inline bool cell_intersects_convex(const std::vector<Eigen::Vector2d>& poly, int cx, int cy) {
  if (poly.empty()) return false;
  const double x0 = cx, x1 = cx + 1.0, y0 = cy, y1 = cy + 1.0;
  const std::size_t n = poly.size();

  auto overlap_on_axis = [&](const Eigen::Vector2d& axis) {
    double pmin = std::numeric_limits<double>::infinity();
    double pmax = -pmin;
    for (const auto& p : poly) {
      const double d = axis.dot(p);
      pmin = std::min(pmin, d);
      pmax = std::max(pmax, d);
    }
    double qmin = std::numeric_limits<double>::infinity();
    double qmax = -qmin;
    for (double sx : {x0, x1}) {
      for (double sy : {y0, y1}) {
        const double d = axis.x() * sx + axis.y() * sy;
        qmin = std::min(qmin, d);
        qmax = std::max(qmax, d);
      }
    }
    return pmax >= qmin && qmax >= pmin;
  };

  if (!overlap_on_axis(Eigen::Vector2d(1, 0))) return false;
  if (!overlap_on_axis(Eigen::Vector2d(0, 1))) return false;
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d e = poly[(i + 1) % n] - poly[i];
    if (e.squaredNorm() == 0.0) continue;
    if (!overlap_on_axis(Eigen::Vector2d(-e.y(), e.x()))) return false;
  }
  return true;
}

}  // namespace detail

/// Core cull given an already-traced visibility volume (unused for region
/// mode).
inline BevPointCloud cull_with_visibility(const BevPointCloud& points, const OccupancyGrid& vis,
                                          const BevPatch& patch, const CameraModel& cam,
                                          CullMode mode) {
  cam.validate();
  const std::size_t n = points.size();
  std::vector<std::uint8_t> keep(n, 0);

  if (mode == CullMode::kRay) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto& p = points.coords_abs[i];
      const int cx = static_cast<int>(std::floor(p.x()));
      const int cy = static_cast<int>(std::floor(p.y()));
      const int cz = static_cast<int>(p.z());
      keep[i] = vis.inside(cx, cy, cz) && vis.occupied(cx, cy, cz);
    }
    return points.filter(keep);
  }

  // Region test, cached per cell.
  const auto hull = detail::frustum_ground_hull(cam);
  Grid2D<std::uint8_t> cell_in_region(patch.width(), patch.height_cells(), 0);
  for (int y = 0; y < patch.height_cells(); ++y) {
    for (int x = 0; x < patch.width(); ++x) {
      cell_in_region(x, y) = detail::cell_intersects_convex(hull, x, y) ? 1 : 0;
    }
  }

  if (mode == CullMode::kRegion) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto& p = points.coords_abs[i];
      const int cx = static_cast<int>(std::floor(p.x()));
      const int cy = static_cast<int>(std::floor(p.y()));
      keep[i] = cell_in_region.in_bounds(cx, cy) && cell_in_region(cx, cy);
    }
    return points.filter(keep);
  }

  // Instance mode: collect hit ownership from the visibility volume.
  std::vector<std::uint8_t> instance_hit(patch.n_instances + 1, 0);
  Grid2D<std::uint8_t> stuff_cell_hit(patch.width(), patch.height_cells(), 0);
  for (int z = 0; z < vis.nz; ++z) {
    for (int y = 0; y < vis.ny; ++y) {
      for (int x = 0; x < vis.nx; ++x) {
        if (!vis.occupied(x, y, z)) continue;
        const std::uint32_t label = patch.instance(x, y);
        if (label != 0) instance_hit[label] = 1;
        else stuff_cell_hit(x, y) = 1;
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = points.coords_abs[i];
    const int cx = static_cast<int>(std::floor(p.x()));
    const int cy = static_cast<int>(std::floor(p.y()));
    if (!cell_in_region.in_bounds(cx, cy) || !cell_in_region(cx, cy)) continue;
    const std::uint32_t label = points.labels[i];
    keep[i] = label != 0 ? instance_hit[label] : stuff_cell_hit(cx, cy);
  }
  return points.filter(keep);
}

/// Keeps points visible to the camera under the selected strategy.
///   region: the point's cell footprint intersects the frustum's ground
///     projection.
///   instance: region points whose instance (or stuff cell) owns at least one
///     ray-hit voxel.
///   ray: exactly the points whose voxel is the first occupied voxel along
///     some cast ray.
/// Output counts satisfy region >= instance >= ray for any scene and camera.
inline BevPointCloud visibility_cull(const BevPointCloud& points, const OccupancyGrid& occ,
                                     const BevPatch& patch, const CameraModel& cam,
                                     const CullOptions& opts = {}) {
  cam.validate();
  if (opts.mode == CullMode::kRegion) {
    OccupancyGrid empty_vis;  // region mode never consults the volume
    return cull_with_visibility(points, empty_vis, patch, cam, opts.mode);
  }
  const OccupancyGrid vis = trace_visibility(occ, cam, opts.supersample, opts.threads);
  return cull_with_visibility(points, vis, patch, cam, opts.mode);
}

/// Normalized instance-relative coordinates: C_R = 2*(C_A - center) / size,
/// componentwise. Zero-extent size components are treated as 1 (yielding 0).
/// Stuff points (label 0) use the whole-patch box.
inline void relative_coords(BevPointCloud& points, const std::vector<InstanceAttrs>& attrs,
                            const Box3& patch_box) {
  const std::size_t n = points.size();
  points.coords_rel.resize(n);
  const Eigen::Vector3d patch_center = patch_box.center();
  const Eigen::Vector3d patch_size = patch_box.extents();
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t label = points.labels[i];
    Eigen::Vector3d center, size;
    if (label == 0) {
      center = patch_center;
      size = patch_size;
    } else {
      if (label > attrs.size() || attrs[label - 1].label != label) {
        throw ContractError("relative_coords: unresolvable instance label " +
                            std::to_string(label));
      }
      center = attrs[label - 1].center;
      size = attrs[label - 1].size;
    }
    Eigen::Vector3d rel;
    for (int a = 0; a < 3; ++a) {
      const double denom = size[a] == 0.0 ? 1.0 : size[a];
      rel[a] = 2.0 * (points.coords_abs[i][a] - center[a]) / denom;
    }
    points.coords_rel[i] = rel.cast<float>();
  }
}

}  // namespace bevsplat
