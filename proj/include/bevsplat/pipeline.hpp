// Copyright Contributors to the BevSplat Project
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end composition: instantiate -> extrude -> cull -> features ->
// serialize -> decode -> rasterize, plus the working-set scaling report.

#pragma once

#include <chrono>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "bevsplat/bev.hpp"
#include "bevsplat/camera.hpp"
#include "bevsplat/common.hpp"
#include "bevsplat/decoder.hpp"
#include "bevsplat/features.hpp"
#include "bevsplat/io.hpp"
#include "bevsplat/pointgen.hpp"
#include "bevsplat/raster.hpp"
#include "bevsplat/serialize.hpp"
#include "bevsplat/synth.hpp"

namespace bevsplat {

struct PipelineConfig {
  double grid = kDefaultSerialGrid;
  int n_pe = kDefaultPositionalFrequencies;
  int window = kDefaultWindow;
  std::uint64_t seed_scene = 1;
  std::uint64_t seed_style = 2;
  std::uint64_t seed_decoder = 3;
  bool use_density = true;
  CullMode cull_mode = CullMode::kRay;
  AttributeConfig attrs;
  int supersample = kDefaultSupersample;
  Eigen::Vector3d background = Eigen::Vector3d::Zero();
  int c_fs = kDefaultSceneFeatureChannels;
  int c_z = kDefaultStyleChannels;
  int c_ft = kDefaultTransformerChannels;
  int heads = kDefaultHeads;
  int d_qk = kDefaultQueryDim;
  SerialMethod serial_method = SerialMethod::kLinear;
  int hilbert_bits = 10;
  int threads = 1;
  double stop_transmittance = kStopTransmittance;
  int max_height = kMaxHeightDefault;

  int c_fp() const { return 2 * n_pe * (3 + c_fs); }

  void validate() const {
    if (grid <= 0.0) throw ContractError("config: grid must be positive");
    if (n_pe < 1) throw ContractError("config: n_pe must be >= 1");
    if (window < 1) throw ContractError("config: window must be >= 1");
    if (supersample < 1) throw ContractError("config: supersample must be >= 1");
    if (c_fs < 1 || c_z < 1 || c_ft < 1 || heads < 1 || d_qk < 1) {
      throw ContractError("config: channel counts must be >= 1");
    }
    if (c_ft % heads != 0) throw ContractError("config: c_ft must be divisible by heads");
    if (hilbert_bits < 1 || hilbert_bits > 20) {
      throw ContractError("config: hilbert_bits must be in [1, 20]");
    }
    if (threads < 1) throw ContractError("config: threads must be >= 1");
  }
};

/// Plain-text key=value serialization; '#' starts a comment. Every key is
/// also a CLI flag, and flags win over file values.
inline std::map<std::string, std::string> config_key_values(const PipelineConfig& c) {
  std::map<std::string, std::string> kv;
  auto fmt = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  kv["grid"] = fmt(c.grid);
  kv["n_pe"] = std::to_string(c.n_pe);
  kv["window"] = std::to_string(c.window);
  kv["seed_scene"] = std::to_string(c.seed_scene);
  kv["seed_style"] = std::to_string(c.seed_style);
  kv["seed_decoder"] = std::to_string(c.seed_decoder);
  kv["density"] = c.use_density ? "on" : "off";
  kv["cull_mode"] = cull_mode_name(c.cull_mode);
  kv["attrs"] = c.attrs.to_string();
  kv["supersample"] = std::to_string(c.supersample);
  kv["background"] = fmt(c.background.x()) + "," + fmt(c.background.y()) + "," +
                     fmt(c.background.z());
  kv["c_fs"] = std::to_string(c.c_fs);
  kv["c_z"] = std::to_string(c.c_z);
  kv["c_ft"] = std::to_string(c.c_ft);
  kv["heads"] = std::to_string(c.heads);
  kv["d_qk"] = std::to_string(c.d_qk);
  kv["serial_method"] = serial_method_name(c.serial_method);
  kv["hilbert_bits"] = std::to_string(c.hilbert_bits);
  kv["threads"] = std::to_string(c.threads);
  kv["stop_transmittance"] = fmt(c.stop_transmittance);
  kv["max_height"] = std::to_string(c.max_height);
  return kv;
}

inline void apply_config_entry(PipelineConfig& c, const std::string& key,
                               const std::string& value) {
  auto parse_mode = [](const std::string& v) {
    if (v == "region") return CullMode::kRegion;
    if (v == "instance") return CullMode::kInstance;
    if (v == "ray") return CullMode::kRay;
    throw ContractError("config: unknown cull mode '" + v + "'");
  };
  auto parse_method = [](const std::string& v) {
    if (v == "linear") return SerialMethod::kLinear;
    if (v == "hilbert") return SerialMethod::kHilbert;
    if (v == "both") return SerialMethod::kBoth;
    throw ContractError("config: unknown serialization method '" + v + "'");
  };
  try {
    if (key == "grid") c.grid = std::stod(value);
    else if (key == "n_pe") c.n_pe = std::stoi(value);
    else if (key == "window") c.window = std::stoi(value);
    else if (key == "seed_scene") c.seed_scene = std::stoull(value);
    else if (key == "seed_style") c.seed_style = std::stoull(value);
    else if (key == "seed_decoder") c.seed_decoder = std::stoull(value);
    else if (key == "density") c.use_density = (value == "on" || value == "1" || value == "true");
    else if (key == "cull_mode") c.cull_mode = parse_mode(value);
    else if (key == "attrs") c.attrs = AttributeConfig::parse(value);
    else if (key == "supersample") c.supersample = std::stoi(value);
    else if (key == "background") {
      std::istringstream ss(value);
      std::string part;
      for (int i = 0; i < 3; ++i) {
        if (!std::getline(ss, part, ',')) throw ContractError("config: background needs r,g,b");
        c.background[i] = std::stod(part);
      }
    } else if (key == "c_fs") c.c_fs = std::stoi(value);
    else if (key == "c_z") c.c_z = std::stoi(value);
    else if (key == "c_ft") c.c_ft = std::stoi(value);
    else if (key == "heads") c.heads = std::stoi(value);
    else if (key == "d_qk") c.d_qk = std::stoi(value);
    else if (key == "serial_method") c.serial_method = parse_method(value);
    else if (key == "hilbert_bits") c.hilbert_bits = std::stoi(value);
    else if (key == "threads") c.threads = std::stoi(value);
    else if (key == "stop_transmittance") c.stop_transmittance = std::stod(value);
    else if (key == "max_height") c.max_height = std::stoi(value);
    else throw ContractError("config: unknown key '" + key + "'");
  } catch (const std::invalid_argument&) {
    throw ContractError("config: bad value '" + value + "' for key '" + key + "'");
  } catch (const std::out_of_range&) {
    throw ContractError("config: value out of range for key '" + key + "'");
  }
}

inline void save_config(const std::string& path, const PipelineConfig& c) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config file: " + path);
  for (const auto& [k, v] : config_key_values(c)) out << k << "=" << v << "\n";
}

inline PipelineConfig load_config(const std::string& path, PipelineConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::size_t begin = line.find_first_not_of(" \t\r");
    if (begin == std::string::npos) continue;
    const std::size_t end = line.find_last_not_of(" \t\r");
    line = line.substr(begin, end - begin + 1);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ContractError("config: missing '=' on line " + std::to_string(line_no));
    }
    apply_config_entry(base, line.substr(0, eq), line.substr(eq + 1));
  }
  return base;
}

struct PipelineStats {
  std::size_t n_extruded = 0;
  std::size_t n_region = 0;
  std::size_t n_instance = 0;
  std::size_t n_ray = 0;
  std::size_t n_points = 0;  // after the configured cull mode
  std::uint32_t n_instances_total = 0;
  std::uint32_t n_instances_in_view = 0;
  std::map<std::string, std::size_t> points_per_class;
  std::map<std::string, double> stage_ms;
};

struct PipelineResult {
  RenderTarget target;
  PipelineStats stats;
  // Intermediates, so staged CLI runs can reproduce the frame exactly.
  BevPatch patch;
  BevPointCloud cloud;
  StyleTable styles;
  SerialOrder order;  // the linear/hilbert order actually used (first of "both")
  MatrixRMf scene_feats;
  GaussianSet gaussians;
};

namespace detail {

class StageTimer {
 public:
  explicit StageTimer(std::map<std::string, double>& sink) : sink_(sink) {}
  template <typename F>
  auto run(const std::string& name, F&& f) -> decltype(f()) {
    const auto start = std::chrono::steady_clock::now();
    try {
      if constexpr (std::is_void_v<decltype(f())>) {
        f();
        sink_[name] = elapsed_ms(start);
        return;
      } else {
        auto result = f();
        sink_[name] = elapsed_ms(start);
        return result;
      }
    } catch (const IoError&) {
      throw;
    } catch (const std::exception& e) {
      throw ContractError(name + ": " + e.what());
    }
  }

 private:
  static double elapsed_ms(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
        .count();
  }
  std::map<std::string, double>& sink_;
};

inline std::uint32_t count_in_view_instances(const OccupancyGrid& vis, const BevPatch& patch) {
  std::vector<std::uint8_t> seen(patch.n_instances + 1, 0);
  for (int z = 0; z < vis.nz; ++z) {
    for (int y = 0; y < vis.ny; ++y) {
      for (int x = 0; x < vis.nx; ++x) {
        if (vis.occupied(x, y, z)) seen[patch.instance(x, y)] = 1;
      }
    }
  }
  std::uint32_t n = 0;
  for (std::uint32_t l = 1; l <= patch.n_instances; ++l) n += seen[l];
  return n;
}

}  // namespace detail

/// Runs every stage on an instantiated patch. Stage failures propagate with
/// the stage name prefixed.
inline PipelineResult run_pipeline(BevPatch patch, const CameraModel& cam,
                                   const PipelineConfig& config) {
  config.validate();
  cam.validate();

  PipelineResult result;
  detail::StageTimer timer(result.stats.stage_ms);

  if (!config.use_density) {
    for (auto& d : patch.density.data()) d = 1;
  }

  BevPointCloud full = timer.run("extrude", [&] { return extrude(patch); });
  result.stats.n_extruded = full.size();
  result.stats.n_instances_total = patch.n_instances;

  const OccupancyGrid occ = timer.run("occupancy", [&] { return build_occupancy(patch); });

  BevPointCloud cloud = timer.run("cull", [&] {
    const OccupancyGrid vis = trace_visibility(occ, cam, config.supersample, config.threads);
    result.stats.n_region =
        cull_with_visibility(full, vis, patch, cam, CullMode::kRegion).size();
    result.stats.n_instance =
        cull_with_visibility(full, vis, patch, cam, CullMode::kInstance).size();
    BevPointCloud ray_cloud = cull_with_visibility(full, vis, patch, cam, CullMode::kRay);
    result.stats.n_ray = ray_cloud.size();
    result.stats.n_instances_in_view = detail::count_in_view_instances(vis, patch);

    if (config.cull_mode == CullMode::kRay) return ray_cloud;
    return cull_with_visibility(full, vis, patch, cam, config.cull_mode);
  });
  result.stats.n_points = cloud.size();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    ++result.stats.points_per_class[semantic_class_name(cloud.classes[i])];
  }

  timer.run("features", [&] {
    const auto attrs = instance_bboxes(patch);
    relative_coords(cloud, attrs, patch.world_box());
    const SceneFeatureMap g = scene_encode(patch, config.seed_scene, config.c_fs, config.threads);
    gather_scene_feats(cloud, g);
  });
  result.styles = timer.run("styles", [&] {
    return make_style_table(config.seed_style, patch.n_instances, config.c_z);
  });

  const MatrixRMf f_p = timer.run("positional_encode", [&] {
    return positional_encode_f(cloud, config.n_pe, config.threads);
  });

  result.order = timer.run("serialize", [&] {
    return config.serial_method == SerialMethod::kHilbert
               ? serialize_hilbert(cloud.coords_abs, config.hilbert_bits)
               : serialize_linear(cloud.coords_abs, config.grid);
  });

  const MatrixRMf raw = timer.run("decode", [&] {
    const DecoderWeights weights =
        DecoderWeights::make(config.seed_decoder, config.c_fp(), config.c_z, config.attrs,
                             config.c_ft, config.heads, config.d_qk);
    DecodeOptions opts;
    opts.method = config.serial_method;
    opts.grid = config.grid;
    opts.bits = config.hilbert_bits;
    opts.window = config.window;
    opts.threads = config.threads;
    return decode_attributes(f_p, cloud.labels, result.styles, cloud.coords_abs, weights,
                             config.attrs, opts);
  });

  result.gaussians = timer.run("assemble", [&] {
    return assemble_gaussians(cloud, raw, config.attrs);
  });

  result.target = timer.run("rasterize", [&] {
    RasterOptions opts;
    opts.background = config.background;
    opts.stop_transmittance = config.stop_transmittance;
    opts.threads = config.threads;
    return rasterize(result.gaussians, cam, opts);
  });

  result.patch = std::move(patch);
  result.scene_feats = cloud.scene_feats;
  result.cloud = std::move(cloud);
  return result;
}

inline PipelineResult run_pipeline(const SynthMaps& maps, const CameraModel& cam,
                                   const PipelineConfig& config) {
  BevPatch patch = make_patch(maps.height, maps.semantic, maps.density, config.max_height);
  instantiate(patch);
  return run_pipeline(std::move(patch), cam, config);
}

// ---------------------------------------------------------------------------
// Working-set scaling report

struct ScalingRow {
  int scale = 1;               // area factor (tiled sqrt(scale) per axis)
  std::size_t n_visible = 0;   // ray-mode visible points
  std::uint32_t n_instances_in_view = 0;
  std::size_t style_table_bytes = 0;  // per-frame working-set table
};

/// Tiles the base maps to each area scale, keeps the camera fixed, and
/// reports the ray-visible point count plus the byte size of the style table
/// needed for the in-view instances.
inline std::vector<ScalingRow> stats_scaling(const SynthMaps& base, const CameraModel& cam,
                                             const PipelineConfig& config,
                                             const std::vector<int>& scales) {
  config.validate();
  cam.validate();
  std::vector<ScalingRow> rows;
  for (int scale : scales) {
    if (scale < 1) throw ContractError("stats_scaling: scales must be >= 1");
    int k = static_cast<int>(std::lround(std::sqrt(double(scale))));
    if (k * k != scale) {
      throw ContractError("stats_scaling: scale must be a perfect square (area factor)");
    }
    const SynthMaps maps = k == 1 ? base : tile_maps(base, k);
    BevPatch patch = make_patch(maps.height, maps.semantic, maps.density, config.max_height);
    instantiate(patch);
    if (!config.use_density) {
      for (auto& d : patch.density.data()) d = 1;
    }

    const OccupancyGrid occ = build_occupancy(patch);
    const OccupancyGrid vis = trace_visibility(occ, cam, config.supersample, config.threads);

    ScalingRow row;
    row.scale = scale;
    // A voxel's point survives ray culling iff its cell passes the density
    // gate (visible voxels are occupied, hence z <= H and solid).
    for (int z = 0; z < vis.nz; ++z) {
      for (int y = 0; y < vis.ny; ++y) {
        for (int x = 0; x < vis.nx; ++x) {
          if (vis.occupied(x, y, z) && patch.density(x, y)) ++row.n_visible;
        }
      }
    }
    row.n_instances_in_view = detail::count_in_view_instances(vis, patch);
    StyleTable in_view_table =
        make_style_table(config.seed_style, row.n_instances_in_view, config.c_z);
    row.style_table_bytes = style_table_json(in_view_table).size();
    rows.push_back(row);
  }
  return rows;
}

}  // namespace bevsplat
