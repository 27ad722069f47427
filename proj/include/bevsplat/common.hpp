// Copyright Contributors to the BevSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace bevsplat {

using MatrixRMf = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixRMd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Violated precondition or invariant (CLI exit code 1).
class ContractError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Filesystem / codec failure (CLI exit code 2).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major 2D map; (x, y) indexes column x of row y.
template <typename T>
class Grid2D {
 public:
  Grid2D() = default;
  Grid2D(int width, int height, T fill = T{})
      : width_(width), height_(height),
        data_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill) {
    if (width < 0 || height < 0) {
      throw ContractError("Grid2D: dimensions must be non-negative");
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  bool in_bounds(int x, int y) const {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  T& operator()(int x, int y) { return data_[index(x, y)]; }
  const T& operator()(int x, int y) const { return data_[index(x, y)]; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  template <typename U>
  bool same_shape(const Grid2D<U>& other) const {
    return width_ == other.width() && height_ == other.height();
  }

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * width_ + x;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

/// Axis-aligned box in world units.
struct Box3 {
  Eigen::Vector3d min = Eigen::Vector3d::Zero();
  Eigen::Vector3d max = Eigen::Vector3d::Zero();

  Eigen::Vector3d center() const { return 0.5 * (min + max); }
  Eigen::Vector3d extents() const { return max - min; }
  bool contains(const Eigen::Vector3d& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Decorrelated sub-seed for the given stream id.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream));
}

/// Standard-normal stream via Box-Muller on mt19937_64. The generator and the
/// transform are both fully pinned, so outputs are reproducible across
/// standard library implementations (std::normal_distribution is not).
class NormalSampler {
 public:
  explicit NormalSampler(std::uint64_t seed) : rng_(seed) {}

  double operator()() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    double v = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    double r = std::sqrt(-2.0 * std::log(1.0 - u));
    spare_ = r * std::sin(2.0 * M_PI * v);
    have_spare_ = true;
    return r * std::cos(2.0 * M_PI * v);
  }

 private:
  std::mt19937_64 rng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

template <typename Scalar>
inline void fill_normal(Scalar* dst, std::size_t n, std::uint64_t seed, double scale = 1.0) {
  NormalSampler sampler(seed);
  for (std::size_t i = 0; i < n; ++i) {
    dst[i] = static_cast<Scalar>(sampler() * scale);
  }
}

inline MatrixRMf normal_matrix_f(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed,
                                 double scale = 1.0) {
  MatrixRMf m(rows, cols);
  fill_normal(m.data(), static_cast<std::size_t>(rows) * cols, seed, scale);
  return m;
}

inline MatrixRMd normal_matrix_d(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed,
                                 double scale = 1.0) {
  MatrixRMd m(rows, cols);
  fill_normal(m.data(), static_cast<std::size_t>(rows) * cols, seed, scale);
  return m;
}

/// Runs `body(lo, hi)` over fixed-size chunks of [0, count). Chunk boundaries
/// depend only on (count, chunk_size), never on the worker count, so any
/// computation whose chunks write disjoint outputs is bitwise independent of
/// the thread setting.
inline void parallel_chunks(std::size_t count, std::size_t chunk_size, int threads,
                            const std::function<void(std::size_t, std::size_t)>& body) {
  if (count == 0) return;
  if (chunk_size == 0) chunk_size = count;
  const std::size_t n_chunks = (count + chunk_size - 1) / chunk_size;
  if (threads <= 1 || n_chunks <= 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) {
      body(c * chunk_size, std::min(count, (c + 1) * chunk_size));
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t c = next.fetch_add(1, std::memory_order_relaxed);
      if (c >= n_chunks) return;
      body(c * chunk_size, std::min(count, (c + 1) * chunk_size));
    }
  };
  const std::size_t n_workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n_chunks);
  std::vector<std::thread> pool;
  pool.reserve(n_workers);
  for (std::size_t i = 0; i < n_workers; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

}  // namespace bevsplat
