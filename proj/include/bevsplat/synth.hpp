// Copyright Contributors to the BevSplat Project
// SPDX-License-Identifier: Apache-2.0
//
// Seeded synthetic Manhattan-block city layouts for tests and demos: a road
// grid with a road border ring, buildings (facade ring + roof core) on lots,
// scattered vegetation, water ponds, and cars on roads. Low-texture classes
// (road, water, ground) get a checkerboard density map.

#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "bevsplat/bev.hpp"
#include "bevsplat/common.hpp"

namespace bevsplat {

struct SynthMaps {
  Grid2D<std::uint16_t> height;
  Grid2D<std::uint8_t> semantic;
  Grid2D<std::uint8_t> density;
};

struct SynthOptions {
  int min_block = 12;
  int max_block = 20;
  int road_width = 3;
  int min_building_height = 6;
  int max_building_height = 28;
  double building_probability = 0.75;
  double water_probability = 0.08;   // per lot
  double car_probability = 0.012;    // per interior road cell
};

inline SynthMaps synth_city(int width, int height, std::uint64_t seed,
                            const SynthOptions& opts = {}) {
  if (width < 8 || height < 8) throw ContractError("synth_city: size must be at least 8x8");
  std::mt19937_64 rng(derive_seed(seed, 0x73796e7468ull));
  auto uniform_int = [&](int lo, int hi) {
    return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
  };
  auto uniform01 = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };

  SynthMaps maps;
  maps.height = Grid2D<std::uint16_t>(width, height, 0);
  maps.semantic =
      Grid2D<std::uint8_t>(width, height, static_cast<std::uint8_t>(SemanticClass::kGround));
  maps.density = Grid2D<std::uint8_t>(width, height, 1);

  auto paint = [&](int x0, int y0, int x1, int y1, SemanticClass cls, int h) {
    for (int y = std::max(0, y0); y < std::min(height, y1); ++y) {
      for (int x = std::max(0, x0); x < std::min(width, x1); ++x) {
        maps.semantic(x, y) = static_cast<std::uint8_t>(cls);
        maps.height(x, y) = static_cast<std::uint16_t>(h);
      }
    }
  };

  // Road lines. The border ring is road so that no instance touches the
  // patch edge (tiled copies must not merge across seams).
  std::vector<int> xs{0}, ys{0};
  const int rw = opts.road_width;
  for (int x = rw; x + rw < width; x += uniform_int(opts.min_block, opts.max_block) + rw) {
    xs.push_back(x);
  }
  for (int y = rw; y + rw < height; y += uniform_int(opts.min_block, opts.max_block) + rw) {
    ys.push_back(y);
  }
  for (int x : xs) paint(x, 0, x + rw, height, SemanticClass::kRoad, 0);
  for (int y : ys) paint(0, y, width, y + rw, SemanticClass::kRoad, 0);
  paint(width - rw, 0, width, height, SemanticClass::kRoad, 0);
  paint(0, height - rw, width, height, SemanticClass::kRoad, 0);

  // Blocks between roads.
  xs.push_back(width - rw);
  ys.push_back(height - rw);
  for (std::size_t bi = 0; bi + 1 < xs.size(); ++bi) {
    for (std::size_t bj = 0; bj + 1 < ys.size(); ++bj) {
      const int bx0 = xs[bi] + rw, bx1 = xs[bi + 1];
      const int by0 = ys[bj] + rw, by1 = ys[bj + 1];
      if (bx1 - bx0 < 4 || by1 - by0 < 4) continue;

      if (uniform01() < opts.water_probability) {
        paint(bx0 + 1, by0 + 1, bx1 - 1, by1 - 1, SemanticClass::kWater, 0);
        continue;
      }

      // Split the block into lots along its longer axis.
      const bool split_x = (bx1 - bx0) >= (by1 - by0);
      const int span = split_x ? bx1 - bx0 : by1 - by0;
      int cursor = 0;
      while (cursor < span) {
        const int lot = std::min(span - cursor, uniform_int(5, 9));
        if (lot < 4) break;
        const int lx0 = split_x ? bx0 + cursor : bx0;
        const int lx1 = split_x ? bx0 + cursor + lot : bx1;
        const int ly0 = split_x ? by0 : by0 + cursor;
        const int ly1 = split_x ? by1 : by0 + cursor + lot;
        cursor += lot + 1;

        if (uniform01() < opts.building_probability) {
          const int inset = 1;
          const int fx0 = lx0 + inset, fx1 = lx1 - inset;
          const int fy0 = ly0 + inset, fy1 = ly1 - inset;
          if (fx1 - fx0 < 2 || fy1 - fy0 < 2) continue;
          const int h = uniform_int(opts.min_building_height, opts.max_building_height);
          paint(fx0, fy0, fx1, fy1, SemanticClass::kBuildingFacade, h);
          if (fx1 - fx0 > 2 && fy1 - fy0 > 2) {
            paint(fx0 + 1, fy0 + 1, fx1 - 1, fy1 - 1, SemanticClass::kBuildingRoof, h);
          }
        } else if (uniform01() < 0.5) {
          const int h = uniform_int(1, 3);
          paint(lx0 + 1, ly0 + 1, lx1 - 1, ly1 - 1, SemanticClass::kVegetation, h);
        }
      }
    }
  }

  // Cars on interior road cells, kept off the border ring and apart from
  // each other so tiling never merges instances.
  for (int y = rw; y < height - rw; ++y) {
    for (int x = rw; x < width - rw; ++x) {
      if (maps.semantic(x, y) != static_cast<std::uint8_t>(SemanticClass::kRoad)) continue;
      if (uniform01() >= opts.car_probability) continue;
      bool clear = true;
      for (int dy = -1; dy <= 1 && clear; ++dy) {
        for (int dx = -1; dx <= 1 && clear; ++dx) {
          if (maps.semantic.in_bounds(x + dx, y + dy) &&
              maps.semantic(x + dx, y + dy) == static_cast<std::uint8_t>(SemanticClass::kCar)) {
            clear = false;
          }
        }
      }
      if (!clear) continue;
      maps.semantic(x, y) = static_cast<std::uint8_t>(SemanticClass::kCar);
      maps.height(x, y) = 1;
    }
  }

  // Checkerboard density on low-texture classes.
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const auto cls = static_cast<SemanticClass>(maps.semantic(x, y));
      if (cls == SemanticClass::kRoad || cls == SemanticClass::kWater ||
          cls == SemanticClass::kGround) {
        maps.density(x, y) = static_cast<std::uint8_t>((x + y) % 2 == 0 ? 1 : 0);
      }
    }
  }
  return maps;
}

/// Patch assembled from synthetic maps, with instances labeled.
inline BevPatch synth_patch(int width, int height, std::uint64_t seed,
                            const SynthOptions& opts = {}) {
  SynthMaps maps = synth_city(width, height, seed, opts);
  BevPatch patch = make_patch(std::move(maps.height), std::move(maps.semantic),
                              std::move(maps.density));
  instantiate(patch);
  return patch;
}

/// Repeats the maps k times along both axes (area grows k^2).
inline SynthMaps tile_maps(const SynthMaps& base, int k) {
  if (k < 1) throw ContractError("tile_maps: factor must be >= 1");
  const int w = base.semantic.width(), h = base.semantic.height();
  SynthMaps out;
  out.height = Grid2D<std::uint16_t>(w * k, h * k);
  out.semantic = Grid2D<std::uint8_t>(w * k, h * k);
  out.density = Grid2D<std::uint8_t>(w * k, h * k);
  for (int y = 0; y < h * k; ++y) {
    for (int x = 0; x < w * k; ++x) {
      out.height(x, y) = base.height(x % w, y % h);
      out.semantic(x, y) = base.semantic(x % w, y % h);
      out.density(x, y) = base.density(x % w, y % h);
    }
  }
  return out;
}

}  // namespace bevsplat
