// Copyright Contributors to the BevSplat Project
// SPDX-License-Identifier: Apache-2.0
//
// Maps serialized point features to Gaussian attributes: a single-block
// windowed multi-head self-attention over the serialized sequence, followed
// by style-modulated linear layers with weight demodulation, then assembly
// into a complete Gaussian set with defaults for attributes that are not
// generated. All weights are seeded and fixed.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "bevsplat/common.hpp"
#include "bevsplat/features.hpp"
#include "bevsplat/pointgen.hpp"
#include "bevsplat/serialize.hpp"

namespace bevsplat {

constexpr int kDefaultTransformerChannels = 256;  // C_FT
constexpr int kDefaultWindow = 64;
constexpr int kDefaultHeads = 4;
constexpr int kDefaultQueryDim = 16;  // per head
constexpr double kDemodEpsilon = 1e-8;

/// Which Gaussian attributes the decoder generates; the rest take defaults
/// (scale 1, rotation [1,0,0,0], opacity 1). RGB is always generated.
struct AttributeConfig {
  bool rgb = true;
  bool xyz_offset = false;
  bool opacity = false;
  bool scale = false;

  int width() const {
    return (rgb ? 3 : 0) + (xyz_offset ? 3 : 0) + (opacity ? 1 : 0) + (scale ? 3 : 0);
  }

  static AttributeConfig parse(const std::string& csv) {
    AttributeConfig cfg;
    cfg.rgb = false;
    std::size_t pos = 0;
    while (pos <= csv.size()) {
      const std::size_t comma = csv.find(',', pos);
      const std::string item = csv.substr(pos, comma == std::string::npos ? csv.size() - pos
                                                                          : comma - pos);
      if (item == "rgb") cfg.rgb = true;
      else if (item == "offset") cfg.xyz_offset = true;
      else if (item == "opacity") cfg.opacity = true;
      else if (item == "scale") cfg.scale = true;
      else if (!item.empty()) throw ContractError("unknown attribute name: " + item);
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (!cfg.rgb) throw ContractError("attribute set must include rgb");
    return cfg;
  }

  std::string to_string() const {
    std::string s = "rgb";
    if (xyz_offset) s += ",offset";
    if (opacity) s += ",opacity";
    if (scale) s += ",scale";
    return s;
  }
};

/// Complete per-point splat attributes.
struct GaussianSet {
  std::vector<Eigen::Vector3f> centers;
  std::vector<Eigen::Vector3f> scales;
  std::vector<Eigen::Vector4f> rotations;  // (w, x, y, z), unit norm
  std::vector<float> opacities;            // [0, 1]
  std::vector<Eigen::Vector3f> colors;     // [0, 1]

  std::size_t size() const { return centers.size(); }
};

/// A linear layer whose weights are scaled per input channel by a
/// style-derived vector s = 1 + A z, then renormalized so every output
/// channel's effective weight row has unit L2 norm.
struct ModulatedLinear {
  MatrixRMf weight;        // out x in
  Eigen::VectorXf bias;    // out
  MatrixRMf style_affine;  // in x c_z

  int in_features() const { return static_cast<int>(weight.cols()); }
  int out_features() const { return static_cast<int>(weight.rows()); }

  Eigen::VectorXd style_scales(const Eigen::VectorXf& z) const {
    if (z.size() != style_affine.cols()) {
      throw ContractError("modulated layer: style code width mismatch");
    }
    return Eigen::VectorXd::Ones(in_features()) +
           (style_affine.cast<double>() * z.cast<double>());
  }

  /// Effective weight after modulation + demodulation, in double precision.
  MatrixRMd demodulated_weight(const Eigen::VectorXf& z) const {
    const Eigen::VectorXd s = style_scales(z);
    MatrixRMd w = weight.cast<double>();
    w.array().rowwise() *= s.transpose().array();
    for (Eigen::Index o = 0; o < w.rows(); ++o) {
      const double norm = std::sqrt(w.row(o).squaredNorm() + kDemodEpsilon);
      w.row(o) /= norm;
    }
    return w;
  }
};

/// Seeded fixed weights for the attention block and the modulated MLP.
struct DecoderWeights {
  std::uint64_t seed = 0;
  int c_fp = 0;
  int c_ft = kDefaultTransformerChannels;
  int heads = kDefaultHeads;
  int d_qk = kDefaultQueryDim;  // per head
  int c_z = kDefaultStyleChannels;
  int c_a = 3;

  MatrixRMd wq;  // c_fp x heads*d_qk
  MatrixRMd wk;  // c_fp x heads*d_qk
  MatrixRMd wv;  // c_fp x c_ft
  MatrixRMd wo;  // c_ft x c_ft
  std::vector<ModulatedLinear> layers;

  int d_v() const { return c_ft / heads; }

  static DecoderWeights make(std::uint64_t seed, int c_fp, int c_z, const AttributeConfig& attrs,
                             int c_ft = kDefaultTransformerChannels, int heads = kDefaultHeads,
                             int d_qk = kDefaultQueryDim,
                             const std::vector<int>& hidden = {256, 256}) {
    if (c_fp < 1 || c_ft < 1 || heads < 1 || d_qk < 1 || c_z < 1) {
      throw ContractError("decoder weights: all channel counts must be >= 1");
    }
    if (c_ft % heads != 0) {
      throw ContractError("decoder weights: c_ft must be divisible by the head count");
    }
    DecoderWeights w;
    w.seed = seed;
    w.c_fp = c_fp;
    w.c_ft = c_ft;
    w.heads = heads;
    w.d_qk = d_qk;
    w.c_z = c_z;
    w.c_a = attrs.width();

    std::uint64_t stream = 0x6174746eull;
    auto next = [&] { return derive_seed(seed, stream++); };
    w.wq = normal_matrix_d(c_fp, heads * d_qk, next(), 1.0 / std::sqrt(double(c_fp)));
    w.wk = normal_matrix_d(c_fp, heads * d_qk, next(), 1.0 / std::sqrt(double(c_fp)));
    w.wv = normal_matrix_d(c_fp, c_ft, next(), 1.0 / std::sqrt(double(c_fp)));
    w.wo = normal_matrix_d(c_ft, c_ft, next(), 1.0 / std::sqrt(double(c_ft)));

    std::vector<int> widths;
    widths.push_back(c_fp + c_ft);
    for (int hdim : hidden) widths.push_back(hdim);
    widths.push_back(w.c_a);
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      ModulatedLinear layer;
      const int fan_in = widths[l];
      const int fan_out = widths[l + 1];
      layer.weight = normal_matrix_f(fan_out, fan_in, next(), 1.0 / std::sqrt(double(fan_in)));
      layer.bias = Eigen::VectorXf::Zero(fan_out);
      layer.style_affine = normal_matrix_f(fan_in, c_z, next(), 1.0 / std::sqrt(double(c_z)));
      w.layers.push_back(std::move(layer));
    }
    return w;
  }
};

/// Windowed self-attention over the serialized sequence: consecutive windows
/// of `window` rows (last one partial), standard scaled-dot-product MHA with
/// no positional bias inside a window, output width c_ft. All arithmetic in
/// double. When `probs` is non-null it receives the softmax matrix of every
/// (window, head) pair, window-major.
inline MatrixRMf window_attention(const MatrixRMf& fps, const DecoderWeights& w, int window,
                                  std::vector<MatrixRMd>* probs = nullptr, int threads = 1) {
  if (window < 1) throw ContractError("window_attention: window must be >= 1");
  if (fps.cols() != w.c_fp) throw ContractError("window_attention: feature width mismatch");
  const Eigen::Index n = fps.rows();
  MatrixRMf out(n, w.c_ft);
  if (n == 0) return out;

  const std::size_t n_windows = (static_cast<std::size_t>(n) + window - 1) / window;
  const int d_v = w.d_v();
  const double inv_sqrt_dk = 1.0 / std::sqrt(double(w.d_qk));
  if (probs) probs->assign(n_windows * w.heads, MatrixRMd());

  parallel_chunks(n_windows, 64, threads, [&](std::size_t wlo, std::size_t whi) {
    for (std::size_t wi = wlo; wi < whi; ++wi) {
      const Eigen::Index lo = static_cast<Eigen::Index>(wi) * window;
      const Eigen::Index len = std::min<Eigen::Index>(window, n - lo);
      const MatrixRMd x = fps.middleRows(lo, len).cast<double>();
      const MatrixRMd q = x * w.wq;
      const MatrixRMd k = x * w.wk;
      const MatrixRMd v = x * w.wv;

      MatrixRMd heads_out(len, w.c_ft);
      for (int h = 0; h < w.heads; ++h) {
        const auto qh = q.middleCols(static_cast<Eigen::Index>(h) * w.d_qk, w.d_qk);
        const auto kh = k.middleCols(static_cast<Eigen::Index>(h) * w.d_qk, w.d_qk);
        MatrixRMd scores = (qh * kh.transpose()) * inv_sqrt_dk;
        for (Eigen::Index r = 0; r < len; ++r) {
          const double row_max = scores.row(r).maxCoeff();
          scores.row(r) = (scores.row(r).array() - row_max).exp();
          scores.row(r) /= scores.row(r).sum();
        }
        heads_out.middleCols(static_cast<Eigen::Index>(h) * d_v, d_v) =
            scores * v.middleCols(static_cast<Eigen::Index>(h) * d_v, d_v);
        if (probs) (*probs)[wi * w.heads + h] = scores;
      }
      out.middleRows(lo, len) = (heads_out * w.wo).cast<float>();
    }
  });
  return out;
}

/// Style-modulated MLP over concat(F_P, F_T). Per layer: scale the weights by
/// s = 1 + A z per input channel, demodulate output rows to unit norm, apply,
/// add bias, leaky-ReLU between layers. Rows with the same label must carry
/// the same style row (the table gather guarantees this); modulation factors
/// are computed once per distinct label.
inline MatrixRMf modulated_mlp(const MatrixRMf& f_p, const MatrixRMf& f_t, const MatrixRMf& z_p,
                               const std::vector<std::uint32_t>& labels, const DecoderWeights& w,
                               const AttributeConfig& config, int threads = 1) {
  const Eigen::Index n = f_p.rows();
  if (f_t.rows() != n || z_p.rows() != n || static_cast<Eigen::Index>(labels.size()) != n) {
    throw ContractError("modulated_mlp: row counts disagree");
  }
  if (f_p.cols() != w.c_fp || f_t.cols() != w.c_ft || z_p.cols() != w.c_z) {
    throw ContractError("modulated_mlp: feature width mismatch");
  }
  if (config.width() != w.c_a || w.layers.empty() || w.layers.back().out_features() != w.c_a) {
    throw ContractError("modulated_mlp: attribute width mismatch");
  }

  // Distinct labels, first-occurrence order.
  std::vector<std::uint32_t> slot_of_label;
  std::vector<Eigen::Index> slot(n);
  {
    std::vector<Eigen::Index> label_slot;
    for (Eigen::Index i = 0; i < n; ++i) {
      const std::uint32_t l = labels[i];
      if (l >= label_slot.size()) label_slot.resize(l + 1, -1);
      if (label_slot[l] < 0) {
        label_slot[l] = static_cast<Eigen::Index>(slot_of_label.size());
        slot_of_label.push_back(l);
      }
      slot[i] = label_slot[l];
    }
  }
  const std::size_t n_slots = slot_of_label.size();

  // Per (layer, slot): input-channel scales and inverse demodulation factors.
  struct LayerTables {
    MatrixRMf scales;  // n_slots x in
    MatrixRMf inv_d;   // n_slots x out
  };
  std::vector<LayerTables> tables(w.layers.size());
  {
    std::vector<Eigen::Index> rep(n_slots);  // a representative row per slot
    for (Eigen::Index i = n - 1; i >= 0; --i) rep[slot[i]] = i;
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
      const ModulatedLinear& layer = w.layers[l];
      tables[l].scales.resize(n_slots, layer.in_features());
      tables[l].inv_d.resize(n_slots, layer.out_features());
      const MatrixRMd w2 = layer.weight.cast<double>().array().square();
      for (std::size_t u = 0; u < n_slots; ++u) {
        const Eigen::VectorXf z = z_p.row(rep[u]).transpose();
        const Eigen::VectorXd s = layer.style_scales(z);
        tables[l].scales.row(u) = s.cast<float>().transpose();
        const Eigen::VectorXd d =
            ((w2 * s.array().square().matrix()).array() + kDemodEpsilon).sqrt();
        tables[l].inv_d.row(u) = d.cwiseInverse().cast<float>().transpose();
      }
    }
  }

  MatrixRMf out(n, w.c_a);
  parallel_chunks(n, 8192, threads, [&](std::size_t lo, std::size_t hi) {
    const Eigen::Index len = static_cast<Eigen::Index>(hi - lo);
    MatrixRMf x(len, w.c_fp + w.c_ft);
    x.leftCols(w.c_fp) = f_p.middleRows(lo, len);
    x.rightCols(w.c_ft) = f_t.middleRows(lo, len);

    for (std::size_t l = 0; l < w.layers.size(); ++l) {
      const ModulatedLinear& layer = w.layers[l];
      MatrixRMf xs = x;
      for (Eigen::Index r = 0; r < len; ++r) {
        xs.row(r).array() *= tables[l].scales.row(slot[lo + r]).array();
      }
      MatrixRMf y(len, layer.out_features());
      y.noalias() = xs * layer.weight.transpose();
      for (Eigen::Index r = 0; r < len; ++r) {
        y.row(r).array() *= tables[l].inv_d.row(slot[lo + r]).array();
        y.row(r) += layer.bias.transpose();
      }
      if (l + 1 < w.layers.size()) {
        y = y.array().max(0.2f * y.array());  // leaky ReLU
      }
      x = std::move(y);
    }
    out.middleRows(lo, len) = x;
  });
  return out;
}

namespace detail {

inline float squash_sigmoid(float v) {
  return static_cast<float>(1.0 / (1.0 + std::exp(-double(v))));
}

inline float squash_softplus(float v) {
  const double x = v;
  return static_cast<float>(x > 30.0 ? x : std::log1p(std::exp(x)));
}

}  // namespace detail

/// Builds the complete Gaussian set from raw decoder outputs. Generated
/// attributes are squashed into their valid ranges (sigmoid for color and
/// opacity, tanh*0.5 cell for offsets, softplus for scale); everything not
/// generated takes the default (s=1, q=[1,0,0,0], alpha=1). Rotation is never
/// decoded. Raw column order: rgb, offset, opacity, scale.
inline GaussianSet assemble_gaussians(const BevPointCloud& cloud, const MatrixRMf& raw,
                                      const AttributeConfig& config) {
  const std::size_t n = cloud.size();
  if (raw.rows() != static_cast<Eigen::Index>(n) || raw.cols() != config.width()) {
    throw ContractError("assemble_gaussians: raw attribute shape mismatch");
  }
  GaussianSet g;
  g.centers.resize(n);
  g.scales.resize(n);
  g.rotations.resize(n);
  g.opacities.resize(n);
  g.colors.resize(n);

  int col = 0;
  const int rgb_col = col;
  col += 3;
  const int offset_col = config.xyz_offset ? col : -1;
  if (config.xyz_offset) col += 3;
  const int opacity_col = config.opacity ? col : -1;
  if (config.opacity) col += 1;
  const int scale_col = config.scale ? col : -1;

  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3f base = cloud.coords_abs[i].cast<float>();
    Eigen::Vector3f center = base;
    if (offset_col >= 0) {
      for (int a = 0; a < 3; ++a) {
        center[a] += 0.5f * std::tanh(raw(i, offset_col + a));
      }
    }
    g.centers[i] = center;
    for (int a = 0; a < 3; ++a) {
      g.colors[i][a] = detail::squash_sigmoid(raw(i, rgb_col + a));
    }
    g.opacities[i] = opacity_col >= 0 ? detail::squash_sigmoid(raw(i, opacity_col)) : 1.0f;
    if (scale_col >= 0) {
      for (int a = 0; a < 3; ++a) {
        g.scales[i][a] = detail::squash_softplus(raw(i, scale_col + a));
      }
    } else {
      g.scales[i] = Eigen::Vector3f::Ones();
    }
    g.rotations[i] = Eigen::Vector4f(1, 0, 0, 0);
  }
  return g;
}

struct DecodeOptions {
  SerialMethod method = SerialMethod::kLinear;
  double grid = kDefaultSerialGrid;
  int bits = 10;
  int window = kDefaultWindow;
  int threads = 1;
};

/// Full decode pass: serialize, run attention over the serialized sequence,
/// apply the modulated MLP, and un-permute results back to input order.
/// "both" runs one pass per ordering and averages the raw attributes.
inline MatrixRMf decode_attributes(const MatrixRMf& f_p, const std::vector<std::uint32_t>& labels,
                                   const StyleTable& styles,
                                   const std::vector<Eigen::Vector3d>& coords,
                                   const DecoderWeights& weights, const AttributeConfig& config,
                                   const DecodeOptions& opts = {}) {
  if (f_p.rows() != static_cast<Eigen::Index>(labels.size()) || labels.size() != coords.size()) {
    throw ContractError("decode_attributes: row counts disagree");
  }
  std::vector<SerialOrder> orders;
  if (opts.method == SerialMethod::kLinear || opts.method == SerialMethod::kBoth) {
    orders.push_back(serialize_linear(coords, opts.grid));
  }
  if (opts.method == SerialMethod::kHilbert || opts.method == SerialMethod::kBoth) {
    orders.push_back(serialize_hilbert(coords, opts.bits));
  }

  MatrixRMd accum = MatrixRMd::Zero(f_p.rows(), config.width());
  for (const SerialOrder& order : orders) {
    const MatrixRMf fps = reorder(f_p, order);
    const std::vector<std::uint32_t> labels_s = reorder(labels, order);
    const MatrixRMf zp_s = style_lookup(styles, labels_s);
    const MatrixRMf ft = window_attention(fps, weights, opts.window, nullptr, opts.threads);
    const MatrixRMf a_s = modulated_mlp(fps, ft, zp_s, labels_s, weights, config, opts.threads);
    for (Eigen::Index i = 0; i < a_s.rows(); ++i) {
      accum.row(order.perm[i]) += a_s.row(i).cast<double>();
    }
  }
  return (accum / double(orders.size())).cast<float>();
}

}  // namespace bevsplat
