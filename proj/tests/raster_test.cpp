// Copyright Contributors to the BevSplat Project
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "bevsplat/raster.hpp"
#include "oracles.hpp"
#include "test_utils.hpp"

using namespace bevsplat;

namespace {

/// Camera whose extrinsic is the identity: world frame == camera frame,
/// looking along +z.
CameraModel identity_camera(int width, int height, double focal, double near = 0.1,
                            double far = 1000.0) {
  CameraModel cam;
  cam.K.setIdentity();
  cam.K(0, 0) = focal;
  cam.K(1, 1) = focal;
  cam.K(0, 2) = 0.5 * width;
  cam.K(1, 2) = 0.5 * height;
  cam.T.setIdentity();
  cam.width = width;
  cam.height = height;
  cam.near = near;
  cam.far = far;
  cam.validate();
  return cam;
}

GaussianSet single_gaussian(const Eigen::Vector3f& center, const Eigen::Vector3f& color,
                            float opacity = 1.0f, const Eigen::Vector3f& scale = {1, 1, 1}) {
  GaussianSet g;
  g.centers = {center};
  g.scales = {scale};
  g.rotations = {Eigen::Vector4f(1, 0, 0, 0)};
  g.opacities = {opacity};
  g.colors = {color};
  return g;
}

GaussianSet random_scene(std::mt19937_64& rng, int n) {
  auto uniform = [&](double lo, double hi) {
    return lo + (hi - lo) * (double(rng() >> 11) * 0x1.0p-53);
  };
  GaussianSet g;
  for (int i = 0; i < n; ++i) {
    g.centers.push_back(Eigen::Vector3f(float(uniform(-4, 4)), float(uniform(-4, 4)),
                                        float(uniform(5, 18))));
    g.scales.push_back(Eigen::Vector3f::Constant(float(uniform(0.05, 0.3))));
    g.rotations.push_back(Eigen::Vector4f(1, 0, 0, 0));
    g.opacities.push_back(float(uniform(0.1, 0.6)));
    g.colors.push_back(Eigen::Vector3f(float(uniform(0, 1)), float(uniform(0, 1)),
                                       float(uniform(0, 1))));
  }
  return g;
}

TEST(Project, OnAxisGaussianLandsAtPrincipalPoint) {
  const double f = 60.0, d = 4.0;
  const CameraModel cam = identity_camera(64, 64, f);
  const auto splats = project(single_gaussian({0, 0, float(d)}, {1, 0, 0}), cam);
  ASSERT_EQ(splats.size(), 1u);
  EXPECT_NEAR(splats[0].mean.x(), cam.cx(), 1e-9);
  EXPECT_NEAR(splats[0].mean.y(), cam.cy(), 1e-9);
  const double expected = (f / d) * (f / d) + kBlurFloor;
  EXPECT_NEAR(splats[0].cov(0, 0), expected, 1e-9);
  EXPECT_NEAR(splats[0].cov(1, 1), expected, 1e-9);
  EXPECT_NEAR(splats[0].cov(0, 1), 0.0, 1e-9);
  EXPECT_EQ(splats[0].view_depth, d);
}

TEST(Project, FrustumCulling) {
  const CameraModel cam = identity_camera(64, 64, 60.0, 1.0, 100.0);
  EXPECT_TRUE(project(single_gaussian({0, 0, -5}, {1, 1, 1}), cam).empty());   // behind
  EXPECT_TRUE(project(single_gaussian({0, 0, 500}, {1, 1, 1}), cam).empty());  // past far
  EXPECT_TRUE(project(single_gaussian({900, 0, 10}, {1, 1, 1}), cam).empty()); // far off-image
}

TEST(Project, CovarianceScalesInverselyWithDepthSquared) {
  const double f = 60.0;
  const CameraModel cam = identity_camera(64, 64, f);
  const auto near_splat = project(single_gaussian({0, 0, 5}, {1, 1, 1}), cam);
  const auto far_splat = project(single_gaussian({0, 0, 10}, {1, 1, 1}), cam);
  ASSERT_EQ(near_splat.size(), 1u);
  ASSERT_EQ(far_splat.size(), 1u);
  const double near_core = near_splat[0].cov(0, 0) - kBlurFloor;
  const double far_core = far_splat[0].cov(0, 0) - kBlurFloor;
  EXPECT_NEAR(far_core, 0.25 * near_core, 1e-9);
}

TEST(Rasterize, EmptySceneIsBackground) {
  const CameraModel cam = identity_camera(32, 32, 40.0);
  RasterOptions opts;
  opts.background = {0.2, 0.4, 0.6};
  const RenderTarget t = rasterize(GaussianSet{}, cam, opts);
  for (std::size_t i = 0; i < t.color.size(); ++i) {
    EXPECT_EQ(t.color[i], opts.background);
    EXPECT_EQ(t.alpha[i], 0.0);
    EXPECT_EQ(t.depth[i], 0.0);
  }
}

TEST(Rasterize, AlphaArgmaxAtPrincipalPointPixel) {
  // Odd resolution puts the principal point exactly on a pixel center. The
  // splat sits far enough that neighbor pixels stay under the 0.99 alpha
  // clamp, keeping the argmax unique.
  const CameraModel cam = identity_camera(65, 65, 50.0);
  const RenderTarget t = rasterize(single_gaussian({0, 0, 12}, {1, 1, 1}), cam);
  std::size_t argmax = 0;
  for (std::size_t i = 1; i < t.alpha.size(); ++i) {
    if (t.alpha[i] > t.alpha[argmax]) argmax = i;
  }
  EXPECT_EQ(argmax % 65, 32u);
  EXPECT_EQ(argmax / 65, 32u);
}

TEST(Rasterize, FrontSplatDominatesRearOnSharedRay) {
  const CameraModel cam = identity_camera(65, 65, 50.0);
  GaussianSet g;
  g.centers = {{0, 0, 10}, {0, 0, 5}};  // rear blue listed first
  g.scales = {{1, 1, 1}, {1, 1, 1}};
  g.rotations = {{1, 0, 0, 0}, {1, 0, 0, 0}};
  g.opacities = {1.0f, 1.0f};  // alpha at center clamps to 0.99
  g.colors = {{0, 0, 1}, {1, 0, 0}};
  const RenderTarget t = rasterize(g, cam);
  const Eigen::Vector3d center = t.color[t.index(32, 32)];
  EXPECT_LT((center - Eigen::Vector3d(1, 0, 0)).cwiseAbs().maxCoeff(), 0.011);
  EXPECT_GT(center.z(), 0.005);  // the rear splat still contributes ~0.0099
}

TEST(Rasterize, MatchesBackToFrontOracle) {
  std::mt19937_64 rng(42);
  const CameraModel cam = identity_camera(64, 64, 60.0, 1.0, 100.0);
  for (int trial = 0; trial < 5; ++trial) {
    const GaussianSet g = random_scene(rng, 100);
    RasterOptions opts;
    opts.background = {0.1, 0.2, 0.3};
    opts.stop_transmittance = 0.0;  // pure compositing for the equivalence check
    const RenderTarget t = rasterize(g, cam, opts);

    std::vector<Splat2D> sorted = project(g, cam);
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const Splat2D& a, const Splat2D& b) { return a.view_depth < b.view_depth; });
    double max_diff = 0.0;
    for (int y = 0; y < cam.height; ++y) {
      for (int x = 0; x < cam.width; ++x) {
        const auto px = oracle::composite_back_to_front(sorted, x + 0.5, y + 0.5,
                                                        opts.background);
        const std::size_t i = t.index(x, y);
        max_diff = std::max(max_diff, (t.color[i] - px.color).cwiseAbs().maxCoeff());
        max_diff = std::max(max_diff, std::abs(t.alpha[i] - px.alpha));
        max_diff = std::max(max_diff, std::abs(t.depth[i] - px.depth));
      }
    }
    EXPECT_LT(max_diff, 1e-6) << "trial " << trial;
  }
}

TEST(Rasterize, EarlyOutDeviationBoundedByThreshold) {
  std::mt19937_64 rng(7);
  const CameraModel cam = identity_camera(64, 64, 60.0, 1.0, 100.0);
  GaussianSet g = random_scene(rng, 150);
  for (auto& o : g.opacities) o = 0.95f;  // deep stacks trigger the cutoff

  RasterOptions full;
  full.stop_transmittance = 0.0;
  RasterOptions early;
  early.stop_transmittance = 1e-4;
  const RenderTarget a = rasterize(g, cam, full);
  const RenderTarget b = rasterize(g, cam, early);
  double max_diff = 0.0;
  for (std::size_t i = 0; i < a.color.size(); ++i) {
    max_diff = std::max(max_diff, (a.color[i] - b.color[i]).cwiseAbs().maxCoeff());
  }
  EXPECT_LE(max_diff, 2e-4);  // bounded by the remaining transmittance
}

TEST(Rasterize, AlphaMonotoneInSplatCount) {
  std::mt19937_64 rng(11);
  const CameraModel cam = identity_camera(48, 48, 50.0, 1.0, 100.0);
  GaussianSet g = random_scene(rng, 40);
  RasterOptions opts;
  opts.stop_transmittance = 0.0;
  RenderTarget prev = rasterize(GaussianSet{}, cam, opts);
  for (int n : {10, 20, 30, 40}) {
    GaussianSet subset;
    subset.centers.assign(g.centers.begin(), g.centers.begin() + n);
    subset.scales.assign(g.scales.begin(), g.scales.begin() + n);
    subset.rotations.assign(g.rotations.begin(), g.rotations.begin() + n);
    subset.opacities.assign(g.opacities.begin(), g.opacities.begin() + n);
    subset.colors.assign(g.colors.begin(), g.colors.begin() + n);
    const RenderTarget t = rasterize(subset, cam, opts);
    for (std::size_t i = 0; i < t.alpha.size(); ++i) {
      EXPECT_GE(t.alpha[i], prev.alpha[i] - 1e-12);
    }
    prev = t;
  }
}

TEST(Rasterize, PermutingDefaultAttributeGaussiansChangesNothing) {
  std::mt19937_64 rng(13);
  GaussianSet g = random_scene(rng, 60);
  for (auto& s : g.scales) s = Eigen::Vector3f::Ones();
  for (auto& o : g.opacities) o = 1.0f;
  const CameraModel cam = identity_camera(48, 48, 50.0, 1.0, 100.0);

  GaussianSet shuffled = g;
  std::vector<std::size_t> perm(g.size());
  std::iota(perm.begin(), perm.end(), 0u);
  std::shuffle(perm.begin(), perm.end(), rng);
  for (std::size_t i = 0; i < g.size(); ++i) {
    shuffled.centers[i] = g.centers[perm[i]];
    shuffled.scales[i] = g.scales[perm[i]];
    shuffled.rotations[i] = g.rotations[perm[i]];
    shuffled.opacities[i] = g.opacities[perm[i]];
    shuffled.colors[i] = g.colors[perm[i]];
  }
  const RenderTarget a = rasterize(g, cam);
  const RenderTarget b = rasterize(shuffled, cam);
  EXPECT_EQ(a.color, b.color);  // depth sort restores a canonical order
  EXPECT_EQ(a.alpha, b.alpha);
}

TEST(Rasterize, TiledAndNaiveTraversalsAreBitIdentical) {
  std::mt19937_64 rng(17);
  const GaussianSet g = random_scene(rng, 80);
  const CameraModel cam = identity_camera(80, 56, 55.0, 1.0, 100.0);
  RasterOptions tiled;
  RasterOptions naive;
  naive.tiled = false;
  const RenderTarget a = rasterize(g, cam, tiled);
  const RenderTarget b = rasterize(g, cam, naive);
  EXPECT_EQ(a.color, b.color);
  EXPECT_EQ(a.alpha, b.alpha);
  EXPECT_EQ(a.depth, b.depth);
}

TEST(Rasterize, BitwiseIndependentOfThreadCount) {
  std::mt19937_64 rng(19);
  const GaussianSet g = random_scene(rng, 80);
  const CameraModel cam = identity_camera(64, 64, 55.0, 1.0, 100.0);
  RasterOptions one;
  one.threads = 1;
  RasterOptions four;
  four.threads = 4;
  const RenderTarget a = rasterize(g, cam, one);
  const RenderTarget b = rasterize(g, cam, four);
  EXPECT_EQ(a.color, b.color);
  EXPECT_EQ(a.alpha, b.alpha);
  EXPECT_EQ(a.depth, b.depth);
}

TEST(Rasterize, SingleOpaqueSplatDepthEqualsViewDepth) {
  const CameraModel cam = identity_camera(65, 65, 50.0);
  const double d = 7.25;
  const RenderTarget t = rasterize(single_gaussian({0, 0, float(d)}, {1, 1, 1}), cam);
  EXPECT_NEAR(t.depth[t.index(32, 32)], d, 1e-4);
}

TEST(L1Loss, AnalyticCases) {
  RenderTarget render;
  render.width = 4;
  render.height = 4;
  render.color.assign(16, Eigen::Vector3d::Zero());
  render.alpha.assign(16, 0.0);
  render.depth.assign(16, 0.0);

  Image3 self{4, 4, std::vector<Eigen::Vector3d>(16, Eigen::Vector3d::Zero())};
  EXPECT_EQ(l1_loss(render, self), 0.0);

  Image3 ones{4, 4, std::vector<Eigen::Vector3d>(16, Eigen::Vector3d::Ones())};
  EXPECT_EQ(l1_loss(render, ones, 10.0), 10.0);

  Image3 wrong{3, 4, std::vector<Eigen::Vector3d>(12, Eigen::Vector3d::Zero())};
  EXPECT_THROW(l1_loss(render, wrong), ContractError);
}

TEST(L1Loss, MatchesElementwiseRecomputation) {
  std::mt19937_64 rng(23);
  auto uniform = [&] { return double(rng() >> 11) * 0x1.0p-53; };
  RenderTarget render;
  render.width = 8;
  render.height = 8;
  render.alpha.assign(64, 0.0);
  render.depth.assign(64, 0.0);
  Image3 reference{8, 8, {}};
  for (int i = 0; i < 64; ++i) {
    render.color.push_back({uniform(), uniform(), uniform()});
    reference.pixels.push_back({uniform(), uniform(), uniform()});
  }
  double sum = 0.0;
  for (int i = 0; i < 64; ++i) {
    for (int c = 0; c < 3; ++c) sum += std::abs(render.color[i][c] - reference.pixels[i][c]);
  }
  EXPECT_NEAR(l1_loss(render, reference, 10.0), 10.0 * sum / 192.0, 1e-12);
}

}  // namespace
