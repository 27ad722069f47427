// Copyright Contributors to the BevSplat Project
// SPDX-License-Identifier: Apache-2.0
//
// Bird's-eye-view map patches: a height field, a semantic map, a binary
// density map, and a derived instance map that labels connected building/car
// footprints.

#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bevsplat/common.hpp"
#include "bevsplat/image_io.hpp"

namespace bevsplat {

constexpr int kMaxHeightDefault = 4096;

enum class SemanticClass : std::uint8_t {
  kNone = 0,  // air; the only non-solid class
  kRoad = 1,
  kWater = 2,
  kVegetation = 3,
  kGround = 4,
  kBuildingRoof = 5,
  kBuildingFacade = 6,
  kCar = 7,
};

constexpr int kSemanticClassCount = 8;

inline bool semantic_class_valid(std::uint8_t value) { return value < kSemanticClassCount; }

inline bool is_solid_class(std::uint8_t value) {
  return value != static_cast<std::uint8_t>(SemanticClass::kNone);
}

/// Buildings and cars form instances; every other class is "stuff" (label 0).
inline bool is_instance_class(std::uint8_t value) {
  const auto c = static_cast<SemanticClass>(value);
  return c == SemanticClass::kBuildingRoof || c == SemanticClass::kBuildingFacade ||
         c == SemanticClass::kCar;
}

inline const char* semantic_class_name(std::uint8_t value) {
  switch (static_cast<SemanticClass>(value)) {
    case SemanticClass::kNone: return "none";
    case SemanticClass::kRoad: return "road";
    case SemanticClass::kWater: return "water";
    case SemanticClass::kVegetation: return "vegetation";
    case SemanticClass::kGround: return "ground";
    case SemanticClass::kBuildingRoof: return "building_roof";
    case SemanticClass::kBuildingFacade: return "building_facade";
    case SemanticClass::kCar: return "car";
  }
  return "invalid";
}

/// One local BEV map patch. Cell (x, y) is the unit square [x,x+1)x[y,y+1)
/// in world units; the height value is in the same unit.
struct BevPatch {
  Grid2D<std::uint16_t> height;    // H
  Grid2D<std::uint8_t> semantic;   // S
  Grid2D<std::uint8_t> density;    // D, {0,1}
  Grid2D<std::uint32_t> instance;  // Q, 0 = stuff
  std::uint32_t n_instances = 0;

  int width() const { return semantic.width(); }
  int height_cells() const { return semantic.height(); }

  std::uint16_t max_height() const {
    std::uint16_t m = 0;
    for (std::uint16_t h : height.data()) m = std::max(m, h);
    return m;
  }

  /// World-space bounding box of the patch volume (z spans [0, max H]).
  Box3 world_box() const {
    return Box3{Eigen::Vector3d::Zero(),
                Eigen::Vector3d(width(), height_cells(), max_height())};
  }
};

/// Per-instance 3D bounding-box attributes.
struct InstanceAttrs {
  std::uint32_t label = 0;
  Eigen::Vector3d size = Eigen::Vector3d::Zero();
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
};

/// Validates the three input maps and assembles a patch with Q zeroed.
inline BevPatch make_patch(Grid2D<std::uint16_t> height, Grid2D<std::uint8_t> semantic,
                           Grid2D<std::uint8_t> density, int max_height = kMaxHeightDefault) {
  if (!height.same_shape(semantic) || !height.same_shape(density)) {
    throw ContractError("patch maps have mismatched dimensions");
  }
  for (std::uint8_t s : semantic.data()) {
    if (!semantic_class_valid(s)) {
      throw ContractError("unknown semantic class id " + std::to_string(int(s)));
    }
  }
  for (std::uint16_t h : height.data()) {
    if (static_cast<int>(h) > max_height) {
      throw ContractError("height value " + std::to_string(int(h)) + " exceeds maximum " +
                          std::to_string(max_height));
    }
  }
  for (std::uint8_t& d : density.data()) d = d ? 1 : 0;

  BevPatch patch;
  patch.instance = Grid2D<std::uint32_t>(height.width(), height.height(), 0);
  patch.height = std::move(height);
  patch.semantic = std::move(semantic);
  patch.density = std::move(density);
  return patch;
}

/// Loads a patch from PNG maps. A missing density path yields D = 1
/// everywhere. Q is left zeroed; call instantiate() to fill it.
inline BevPatch load_patch(const std::string& height_path, const std::string& semantic_path,
                           const std::optional<std::string>& density_path = std::nullopt,
                           int max_height = kMaxHeightDefault) {
  Grid2D<std::uint16_t> h = read_png_gray16(height_path);
  Grid2D<std::uint8_t> s = read_png_gray8(semantic_path);
  Grid2D<std::uint8_t> d = density_path ? read_png_gray8(*density_path)
                                        : Grid2D<std::uint8_t>(h.width(), h.height(), 1);
  return make_patch(std::move(h), std::move(s), std::move(d), max_height);
}

/// Labels 4-connected components of instance-bearing classes. Ids are
/// assigned 1..N in row-major first-encounter order; components of different
/// classes never merge; stuff cells map to 0.
inline std::pair<Grid2D<std::uint32_t>, std::uint32_t> instantiate(
    const Grid2D<std::uint8_t>& semantic) {
  const int w = semantic.width();
  const int h = semantic.height();
  Grid2D<std::uint32_t> q(w, h, 0);
  std::uint32_t next_id = 0;
  std::vector<std::pair<int, int>> stack;

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!is_instance_class(semantic(x, y)) || q(x, y) != 0) continue;
      const std::uint8_t cls = semantic(x, y);
      ++next_id;
      stack.clear();
      stack.emplace_back(x, y);
      q(x, y) = next_id;
      while (!stack.empty()) {
        auto [cx, cy] = stack.back();
        stack.pop_back();
        constexpr int dx[4] = {1, -1, 0, 0};
        constexpr int dy[4] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
          const int nx = cx + dx[k];
          const int ny = cy + dy[k];
          if (!q.in_bounds(nx, ny) || q(nx, ny) != 0) continue;
          if (semantic(nx, ny) != cls) continue;
          q(nx, ny) = next_id;
          stack.emplace_back(nx, ny);
        }
      }
    }
  }
  return {std::move(q), next_id};
}

inline void instantiate(BevPatch& patch) {
  auto [q, n] = instantiate(patch.semantic);
  patch.instance = std::move(q);
  patch.n_instances = n;
}

/// Axis-aligned 3D bounding boxes over {(x, y, z) : Q(x,y)=l, 0 <= z <= H(x,y)}.
inline std::vector<InstanceAttrs> instance_bboxes(const BevPatch& patch) {
  struct Acc {
    int min_x = std::numeric_limits<int>::max();
    int min_y = std::numeric_limits<int>::max();
    int max_x = std::numeric_limits<int>::min();
    int max_y = std::numeric_limits<int>::min();
    int max_h = 0;
  };
  std::vector<Acc> acc(patch.n_instances);

  for (int y = 0; y < patch.height_cells(); ++y) {
    for (int x = 0; x < patch.width(); ++x) {
      const std::uint32_t l = patch.instance(x, y);
      if (l == 0) continue;
      Acc& a = acc[l - 1];
      a.min_x = std::min(a.min_x, x);
      a.min_y = std::min(a.min_y, y);
      a.max_x = std::max(a.max_x, x);
      a.max_y = std::max(a.max_y, y);
      a.max_h = std::max(a.max_h, int(patch.height(x, y)));
    }
  }

  std::vector<InstanceAttrs> out(patch.n_instances);
  for (std::uint32_t l = 1; l <= patch.n_instances; ++l) {
    const Acc& a = acc[l - 1];
    InstanceAttrs& attrs = out[l - 1];
    attrs.label = l;
    // Cell (x, y) spans [x, x+1); the box z range is [0, max H].
    attrs.size = Eigen::Vector3d(a.max_x + 1 - a.min_x, a.max_y + 1 - a.min_y, a.max_h);
    attrs.center = Eigen::Vector3d(0.5 * (a.min_x + a.max_x + 1), 0.5 * (a.min_y + a.max_y + 1),
                                   0.5 * a.max_h);
  }
  return out;
}

}  // namespace bevsplat
