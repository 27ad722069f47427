// Copyright Contributors to the BevSplat Project
// SPDX-License-Identifier: Apache-2.0
//
// Software Gaussian splatting. 3D Gaussians are projected to image-plane 2D
// Gaussians with the perspective Jacobian (affine approximation) plus an
// isotropic blur floor, depth-sorted, and alpha-composited front to back
// into color, alpha, and alpha-weighted depth images. Traversal is tiled;
// per-pixel results are independent of the tiling.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "bevsplat/camera.hpp"
#include "bevsplat/common.hpp"
#include "bevsplat/decoder.hpp"

namespace bevsplat {

constexpr double kBlurFloor = 0.3;          // px^2, added to the 2D covariance diagonal
constexpr double kAlphaClamp = 0.99;
constexpr double kStopTransmittance = 1e-4;
constexpr double kDefaultL1Weight = 10.0;

struct RenderTarget {
  int width = 0;
  int height = 0;
  std::vector<Eigen::Vector3d> color;  // row-major, [0,1]
  std::vector<double> alpha;           // [0,1]
  std::vector<double> depth;           // world units; 0 where alpha is 0

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
};

/// Image-plane footprint of one projected Gaussian.
struct Splat2D {
  Eigen::Vector2d mean;    // pixels
  Eigen::Matrix2d cov;     // px^2, positive definite after the blur floor
  double view_depth = 0;   // camera-space z
  Eigen::Vector3f color;
  float opacity = 1.0f;
  std::uint32_t index = 0;  // original Gaussian index
};

/// Projects Gaussians through the pinhole camera. Gaussians outside (near,
/// far) or whose center falls more than 3 sigma outside the image are
/// discarded.
inline std::vector<Splat2D> project(const GaussianSet& gauss, const CameraModel& cam) {
  cam.validate();
  std::vector<Splat2D> splats;
  splats.reserve(gauss.size());
  const Eigen::Matrix3d rot = cam.rotation();
  const double fx = cam.fx(), fy = cam.fy(), cx = cam.cx(), cy = cam.cy();

  for (std::size_t i = 0; i < gauss.size(); ++i) {
    const Eigen::Vector3d p_cam = cam.to_camera(gauss.centers[i].cast<double>());
    const double z = p_cam.z();
    if (!(z > cam.near && z < cam.far)) continue;

    Splat2D s;
    s.mean = Eigen::Vector2d(fx * p_cam.x() / z + cx, fy * p_cam.y() / z + cy);
    s.view_depth = z;
    s.color = gauss.colors[i];
    s.opacity = gauss.opacities[i];
    s.index = static_cast<std::uint32_t>(i);

    const Eigen::Vector4f& qv = gauss.rotations[i];
    const Eigen::Quaterniond q(qv[0], qv[1], qv[2], qv[3]);
    const Eigen::Matrix3d r = q.normalized().toRotationMatrix();
    const Eigen::Vector3d sc = gauss.scales[i].cast<double>();
    const Eigen::Matrix3d sigma = r * sc.array().square().matrix().asDiagonal() * r.transpose();

    Eigen::Matrix<double, 2, 3> jac;
    jac << fx / z, 0.0, -fx * p_cam.x() / (z * z),
           0.0, fy / z, -fy * p_cam.y() / (z * z);
    const Eigen::Matrix<double, 2, 3> m = jac * rot;
    s.cov = m * sigma * m.transpose();
    s.cov(0, 0) += kBlurFloor;
    s.cov(1, 1) += kBlurFloor;

    const double mid = 0.5 * (s.cov(0, 0) + s.cov(1, 1));
    const double disc = std::sqrt(std::max(0.0, mid * mid - s.cov.determinant()));
    const double radius = 3.0 * std::sqrt(mid + disc);  // 3 sigma of the major axis
    if (s.mean.x() + radius < 0.0 || s.mean.x() - radius > cam.width ||
        s.mean.y() + radius < 0.0 || s.mean.y() - radius > cam.height) {
      continue;
    }
    splats.push_back(s);
  }
  return splats;
}

struct RasterOptions {
  Eigen::Vector3d background = Eigen::Vector3d::Zero();
  double stop_transmittance = kStopTransmittance;  // early-out threshold; 0 disables
  int tile = 16;
  int threads = 1;
  bool tiled = true;  // false: every pixel tests every splat (reference path)
};

namespace detail {

/// 3-sigma bounding radius of a 2D covariance (largest eigenvalue).
inline double splat_radius(const Eigen::Matrix2d& cov) {
  const double mid = 0.5 * (cov(0, 0) + cov(1, 1));
  const double disc = std::sqrt(std::max(0.0, mid * mid - cov.determinant()));
  return 3.0 * std::sqrt(std::max(1e-12, mid + disc));
}

struct PixelAccum {
  Eigen::Vector3d color = Eigen::Vector3d::Zero();
  double alpha_sum = 0.0;
  double depth_sum = 0.0;
  double transmittance = 1.0;
};

/// Composites one splat into the accumulator; identical arithmetic for the
/// tiled and naive paths.
inline void composite(PixelAccum& acc, const Splat2D& s, double px, double py) {
  const double dx = px - s.mean.x();
  const double dy = py - s.mean.y();
  const double det = s.cov(0, 0) * s.cov(1, 1) - s.cov(0, 1) * s.cov(1, 0);
  if (!(det > 0.0)) return;
  const double q = (s.cov(1, 1) * dx * dx - 2.0 * s.cov(0, 1) * dx * dy + s.cov(0, 0) * dy * dy) /
                   det;
  if (q > 9.0) return;  // outside the 3-sigma ellipse
  double a = double(s.opacity) * std::exp(-0.5 * q);
  a = std::min(a, kAlphaClamp);
  const double w = acc.transmittance * a;
  acc.color += w * s.color.cast<double>();
  acc.alpha_sum += w;
  acc.depth_sum += w * s.view_depth;
  acc.transmittance *= (1.0 - a);
}

}  // namespace detail

/// Depth-sorts the projected splats (stable, so equal depths keep original
/// order) and composites front to back. Remaining transmittance is filled
/// with the background color; the depth channel is the alpha-weighted mean.
inline RenderTarget rasterize(const GaussianSet& gauss, const CameraModel& cam,
                              const RasterOptions& opts = {}) {
  cam.validate();
  RenderTarget target;
  target.width = cam.width;
  target.height = cam.height;
  const std::size_t n_px = static_cast<std::size_t>(cam.width) * cam.height;
  target.color.assign(n_px, opts.background);
  target.alpha.assign(n_px, 0.0);
  target.depth.assign(n_px, 0.0);

  std::vector<Splat2D> splats = project(gauss, cam);
  std::stable_sort(splats.begin(), splats.end(),
                   [](const Splat2D& a, const Splat2D& b) { return a.view_depth < b.view_depth; });

  const int tile = std::max(1, opts.tile);
  const int tiles_x = (cam.width + tile - 1) / tile;
  const int tiles_y = (cam.height + tile - 1) / tile;

  // Per-tile splat lists in global depth order (splats are appended in
  // sorted order).
  std::vector<std::vector<std::uint32_t>> tile_splats;
  if (opts.tiled) {
    tile_splats.resize(static_cast<std::size_t>(tiles_x) * tiles_y);
    for (std::uint32_t si = 0; si < splats.size(); ++si) {
      const Splat2D& s = splats[si];
      const double r = detail::splat_radius(s.cov) + 1.0;
      const int px0 = std::clamp(int(std::floor(s.mean.x() - r)), 0, cam.width - 1);
      const int px1 = std::clamp(int(std::ceil(s.mean.x() + r)), 0, cam.width - 1);
      const int py0 = std::clamp(int(std::floor(s.mean.y() - r)), 0, cam.height - 1);
      const int py1 = std::clamp(int(std::ceil(s.mean.y() + r)), 0, cam.height - 1);
      for (int ty = py0 / tile; ty <= py1 / tile; ++ty) {
        for (int tx = px0 / tile; tx <= px1 / tile; ++tx) {
          tile_splats[static_cast<std::size_t>(ty) * tiles_x + tx].push_back(si);
        }
      }
    }
  }

  const std::size_t n_tiles = static_cast<std::size_t>(tiles_x) * tiles_y;
  parallel_chunks(n_tiles, 1, opts.threads, [&](std::size_t tlo, std::size_t thi) {
    for (std::size_t t = tlo; t < thi; ++t) {
      const int tx = static_cast<int>(t % tiles_x);
      const int ty = static_cast<int>(t / tiles_x);
      const int x0 = tx * tile, x1 = std::min(cam.width, x0 + tile);
      const int y0 = ty * tile, y1 = std::min(cam.height, y0 + tile);
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          const double px = x + 0.5, py = y + 0.5;
          detail::PixelAccum acc;
          if (opts.tiled) {
            for (std::uint32_t si : tile_splats[t]) {
              detail::composite(acc, splats[si], px, py);
              if (opts.stop_transmittance > 0.0 && acc.transmittance < opts.stop_transmittance)
                break;
            }
          } else {
            for (const Splat2D& s : splats) {
              detail::composite(acc, s, px, py);
              if (opts.stop_transmittance > 0.0 && acc.transmittance < opts.stop_transmittance)
                break;
            }
          }
          const std::size_t idx = target.index(x, y);
          target.color[idx] = acc.color + acc.transmittance * opts.background;
          target.alpha[idx] = acc.alpha_sum;
          target.depth[idx] = acc.alpha_sum > 0.0 ? acc.depth_sum / acc.alpha_sum : 0.0;
        }
      }
    }
  });
  return target;
}

/// Plain RGB image for loss references.
struct Image3 {
  int width = 0;
  int height = 0;
  std::vector<Eigen::Vector3d> pixels;
};

/// lambda * mean absolute difference over all color channels.
inline double l1_loss(const RenderTarget& render, const Image3& reference,
                      double lambda = kDefaultL1Weight) {
  if (render.width != reference.width || render.height != reference.height ||
      reference.pixels.size() != render.color.size()) {
    throw ContractError("l1_loss: image dimensions differ");
  }
  if (render.color.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < render.color.size(); ++i) {
    sum += (render.color[i] - reference.pixels[i]).cwiseAbs().sum();
  }
  return lambda * sum / (3.0 * render.color.size());
}

}  // namespace bevsplat
