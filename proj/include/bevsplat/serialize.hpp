// Copyright Contributors to the BevSplat Project
// SPDX-License-Identifier: Apache-2.0
//
// Spatial serialization of unordered points: a linear grid key
// floor(x/g^2 + y/g + z) and a 3D Hilbert curve (Butz/Skilling transposed
// form). Both yield a stable permutation that places spatial neighbors next
// to each other in sequence order.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "bevsplat/common.hpp"

namespace bevsplat {

constexpr double kDefaultSerialGrid = 0.01;

enum class SerialMethod { kLinear, kHilbert, kBoth };

inline const char* serial_method_name(SerialMethod m) {
  switch (m) {
    case SerialMethod::kLinear: return "linear";
    case SerialMethod::kHilbert: return "hilbert";
    case SerialMethod::kBoth: return "both";
  }
  return "invalid";
}

/// A serialization result: per-point integer keys and the stable argsort
/// permutation (ties broken by original index).
struct SerialOrder {
  SerialMethod method = SerialMethod::kLinear;
  double grid = 0.0;                // linear only
  int bits = 0;                     // hilbert only
  std::vector<std::int64_t> keys;   // per original point
  std::vector<std::uint32_t> perm;  // output slot i <- input row perm[i]
};

namespace detail {

inline std::vector<std::uint32_t> stable_argsort(const std::vector<std::int64_t>& keys) {
  std::vector<std::uint32_t> perm(keys.size());
  std::iota(perm.begin(), perm.end(), 0u);
  std::stable_sort(perm.begin(), perm.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return keys[a] < keys[b]; });
  return perm;
}

}  // namespace detail

/// key(x, y, z) = floor(x/g^2 + y/g + z). Keys beyond the int64 range raise
/// an error reporting the smallest usable grid size.
inline SerialOrder serialize_linear(std::span<const Eigen::Vector3d> coords, double g) {
  if (!(g > 0.0)) throw ContractError("serialize_linear: grid size must be positive");
  SerialOrder order;
  order.method = SerialMethod::kLinear;
  order.grid = g;
  order.keys.resize(coords.size());

  constexpr double kKeyLimit = 9.2e18;  // just under 2^63
  const double inv_g = 1.0 / g;
  const double inv_g2 = inv_g * inv_g;
  double max_abs_x = 0.0, max_abs_y = 0.0, max_abs_z = 0.0;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const Eigen::Vector3d& p = coords[i];
    if (!p.allFinite()) throw ContractError("serialize_linear: non-finite coordinate");
    const double value = p.x() * inv_g2 + p.y() * inv_g + p.z();
    if (!(std::abs(value) < kKeyLimit)) {
      max_abs_x = std::max(max_abs_x, std::abs(p.x()));
      max_abs_y = std::max(max_abs_y, std::abs(p.y()));
      max_abs_z = std::max(max_abs_z, std::abs(p.z()));
      for (const auto& q : coords) {
        max_abs_x = std::max(max_abs_x, std::abs(q.x()));
        max_abs_y = std::max(max_abs_y, std::abs(q.y()));
        max_abs_z = std::max(max_abs_z, std::abs(q.z()));
      }
      // Smallest g with max|x|/g^2 + max|y|/g + max|z| inside the key range.
      double lo = g, hi = 1.0;
      while (max_abs_x / (hi * hi) + max_abs_y / hi + max_abs_z >= kKeyLimit) hi *= 2.0;
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double v = max_abs_x / (mid * mid) + max_abs_y / mid + max_abs_z;
        (v >= kKeyLimit ? lo : hi) = mid;
      }
      std::ostringstream msg;
      msg.precision(12);
      msg << "serialize_linear: key overflows 64-bit range at g=" << g << "; need g >= " << hi;
      throw ContractError(msg.str());
    }
    order.keys[i] = static_cast<std::int64_t>(std::floor(value));
  }
  order.perm = detail::stable_argsort(order.keys);
  return order;
}

/// Hilbert index of a cell in [0, 2^bits)^3 (Skilling's transposed-coordinate
/// algorithm); index 0 is cell (0, 0, 0).
inline std::uint64_t hilbert_encode(std::array<std::uint32_t, 3> axes, int bits) {
  if (bits < 1 || bits > 20) throw ContractError("hilbert: bit depth must be in [1, 20]");
  std::uint32_t* x = axes.data();
  const std::uint32_t m = std::uint32_t{1} << (bits - 1);

  // Inverse undo.
  for (std::uint32_t q = m; q > 1; q >>= 1) {
    const std::uint32_t p = q - 1;
    for (int i = 0; i < 3; ++i) {
      if (x[i] & q) {
        x[0] ^= p;
      } else {
        const std::uint32_t t = (x[0] ^ x[i]) & p;
        x[0] ^= t;
        x[i] ^= t;
      }
    }
  }
  // Gray encode.
  for (int i = 1; i < 3; ++i) x[i] ^= x[i - 1];
  std::uint32_t t = 0;
  for (std::uint32_t q = m; q > 1; q >>= 1) {
    if (x[2] & q) t ^= q - 1;
  }
  for (int i = 0; i < 3; ++i) x[i] ^= t;

  std::uint64_t key = 0;
  for (int b = bits - 1; b >= 0; --b) {
    for (int i = 0; i < 3; ++i) {
      key = (key << 1) | ((x[i] >> b) & 1u);
    }
  }
  return key;
}

inline std::array<std::uint32_t, 3> hilbert_decode(std::uint64_t key, int bits) {
  if (bits < 1 || bits > 20) throw ContractError("hilbert: bit depth must be in [1, 20]");
  std::array<std::uint32_t, 3> axes = {0, 0, 0};
  std::uint32_t* x = axes.data();
  int shift = 3 * bits - 1;
  for (int b = bits - 1; b >= 0; --b) {
    for (int i = 0; i < 3; ++i, --shift) {
      x[i] |= static_cast<std::uint32_t>((key >> shift) & 1u) << b;
    }
  }

  const std::uint32_t n = std::uint32_t{2} << (bits - 1);
  // Gray decode.
  std::uint32_t t = x[2] >> 1;
  for (int i = 2; i > 0; --i) x[i] ^= x[i - 1];
  x[0] ^= t;
  // Undo excess work.
  for (std::uint32_t q = 2; q != n; q <<= 1) {
    const std::uint32_t p = q - 1;
    for (int i = 2; i >= 0; --i) {
      if (x[i] & q) {
        x[0] ^= p;
      } else {
        const std::uint32_t u = (x[0] ^ x[i]) & p;
        x[0] ^= u;
        x[i] ^= u;
      }
    }
  }
  return axes;
}

/// Min-max quantizes coordinates to [0, 2^bits)^3 and keys them by Hilbert
/// index.
inline SerialOrder serialize_hilbert(std::span<const Eigen::Vector3d> coords, int bits) {
  if (bits < 1 || bits > 20) throw ContractError("serialize_hilbert: bit depth must be in [1, 20]");
  SerialOrder order;
  order.method = SerialMethod::kHilbert;
  order.bits = bits;
  order.keys.resize(coords.size());
  if (coords.empty()) return order;

  Eigen::Vector3d lo = coords[0], hi = coords[0];
  for (const auto& p : coords) {
    if (!p.allFinite()) throw ContractError("serialize_hilbert: non-finite coordinate");
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double cells = static_cast<double>(std::uint64_t{1} << bits);
  Eigen::Vector3d scale;
  for (int a = 0; a < 3; ++a) {
    const double range = hi[a] - lo[a];
    scale[a] = range > 0.0 ? cells / range : 0.0;
  }
  const std::uint32_t q_max = (std::uint32_t{1} << bits) - 1;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    std::array<std::uint32_t, 3> q;
    for (int a = 0; a < 3; ++a) {
      const double v = (coords[i][a] - lo[a]) * scale[a];
      q[a] = static_cast<std::uint32_t>(std::clamp(std::floor(v), 0.0, double(q_max)));
    }
    order.keys[i] = static_cast<std::int64_t>(hilbert_encode(q, bits));
  }
  order.perm = detail::stable_argsort(order.keys);
  return order;
}

/// Output row i = input row order.perm[i].
template <typename Derived>
inline auto reorder(const Eigen::MatrixBase<Derived>& f, const SerialOrder& order) {
  if (f.rows() != static_cast<Eigen::Index>(order.perm.size())) {
    throw ContractError("reorder: row count does not match permutation length");
  }
  typename Derived::PlainObject out(f.rows(), f.cols());
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    if (order.perm[i] >= order.perm.size()) {
      throw ContractError("reorder: permutation index out of range");
    }
    out.row(i) = f.row(order.perm[i]);
  }
  return out;
}

template <typename T>
inline std::vector<T> reorder(const std::vector<T>& v, const SerialOrder& order) {
  if (v.size() != order.perm.size()) {
    throw ContractError("reorder: element count does not match permutation length");
  }
  std::vector<T> out;
  out.reserve(v.size());
  for (std::uint32_t idx : order.perm) {
    if (idx >= v.size()) throw ContractError("reorder: permutation index out of range");
    out.push_back(v[idx]);
  }
  return out;
}

}  // namespace bevsplat
