// Copyright Contributors to the BevSplat Project
// SPDX-License-Identifier: Apache-2.0
//
// bevsplat: BEV-point city splatting CLI. Subcommands cover each pipeline
// stage plus the end-to-end run, a working-set scaling report, and a
// synthetic city generator. Exit codes: 0 success, 1 contract error,
// 2 I/O error.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bevsplat/bevsplat.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace bevsplat;

namespace {

/// Pipeline configuration exposed as CLI flags; flags override --config file
/// values, which override defaults. Flag names mirror the file keys with
/// dashes.
struct ConfigFlags {
  std::map<std::string, std::string> given;
  std::string config_path;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "key=value config file ('#' comments)");
    static const std::vector<std::pair<const char*, const char*>> keys = {
        {"grid", "linear serializer grid size g"},
        {"n_pe", "positional encoding frequency count"},
        {"window", "attention window length"},
        {"seed_scene", "scene encoder seed"},
        {"seed_style", "style table seed"},
        {"seed_decoder", "decoder weight seed"},
        {"use_density", "apply the density map (on/off)"},
        {"cull_mode", "visibility strategy: region|instance|ray"},
        {"attrs", "generated attributes, e.g. rgb,offset,opacity,scale"},
        {"supersample", "visibility rays per pixel edge"},
        {"background", "background color r,g,b"},
        {"c_fs", "scene feature channels"},
        {"c_z", "style code channels"},
        {"c_ft", "transformer output channels"},
        {"heads", "attention heads"},
        {"d_qk", "attention query/key dim per head"},
        {"serial_method", "serialization: linear|hilbert|both"},
        {"hilbert_bits", "hilbert quantization bits"},
        {"threads", "worker thread cap"},
        {"stop_transmittance", "compositing early-out threshold (0 disables)"},
        {"max_height", "maximum allowed height value"},
    };
    for (const auto& [key, desc] : keys) {
      std::string flag = std::string("--") + key;
      std::replace(flag.begin(), flag.end(), '_', '-');
      // The file key is "density"; the flag is --use-density to leave
      // --density free for the density-map PNG path.
      const std::string file_key = std::string(key) == "use_density" ? "density" : key;
      app->add_option_function<std::string>(
          flag, [this, k = file_key](const std::string& v) { given[k] = v; }, desc);
    }
  }

  PipelineConfig build() const {
    PipelineConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    for (const auto& [k, v] : given) apply_config_entry(cfg, k, v);
    cfg.validate();
    return cfg;
  }
};

json stats_to_json(const PipelineStats& s) {
  json j;
  j["n_extruded"] = s.n_extruded;
  j["n_region"] = s.n_region;
  j["n_instance"] = s.n_instance;
  j["n_ray"] = s.n_ray;
  j["n_points"] = s.n_points;
  j["n_instances_total"] = s.n_instances_total;
  j["n_instances_in_view"] = s.n_instances_in_view;
  j["points_per_class"] = s.points_per_class;
  j["stage_ms"] = s.stage_ms;
  return j;
}

void cmd_instantiate(CLI::App* app) {
  auto height = std::make_shared<std::string>();
  auto semantic = std::make_shared<std::string>();
  auto density = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto max_height = std::make_shared<int>(kMaxHeightDefault);
  app->add_option("--height", *height, "height field PNG (16-bit gray)")->required();
  app->add_option("--semantic", *semantic, "semantic map PNG (8-bit gray)")->required();
  app->add_option("--density", *density, "density map PNG (nonzero = 1)");
  app->add_option("--max-height", *max_height, "maximum allowed height value");
  app->add_option("--out", *out, "output patch container")->required();
  app->callback([=] {
    BevPatch patch = load_patch(*height, *semantic,
                                density->empty() ? std::nullopt : std::optional(*density),
                                *max_height);
    instantiate(patch);
    save_patch(*out, patch);
    json j{{"command", "instantiate"},
           {"width", patch.width()},
           {"height_cells", patch.height_cells()},
           {"n_instances", patch.n_instances}};
    std::cout << j.dump() << "\n";
  });
}

void cmd_cull(CLI::App* app) {
  auto patch_path = std::make_shared<std::string>();
  auto camera_path = std::make_shared<std::string>();
  auto mode = std::make_shared<std::string>("ray");
  auto supersample = std::make_shared<int>(kDefaultSupersample);
  auto threads = std::make_shared<int>(1);
  auto out = std::make_shared<std::string>();
  auto ply = std::make_shared<std::string>();
  app->add_option("--patch", *patch_path, "patch container")->required();
  app->add_option("--camera", *camera_path, "camera JSON")->required();
  app->add_option("--mode", *mode, "region|instance|ray")
      ->check(CLI::IsMember({"region", "instance", "ray"}));
  app->add_option("--supersample", *supersample, "rays per pixel edge");
  app->add_option("--threads", *threads, "worker thread cap");
  app->add_option("--out", *out, "output point container")->required();
  app->add_option("--ply", *ply, "also export ASCII PLY");
  app->callback([=] {
    const BevPatch patch = load_patch_file(*patch_path);
    const CameraModel cam = load_camera_json(*camera_path);
    CullOptions opts;
    opts.mode = *mode == "region" ? CullMode::kRegion
                : *mode == "instance" ? CullMode::kInstance
                                      : CullMode::kRay;
    opts.supersample = *supersample;
    opts.threads = *threads;
    const BevPointCloud full = extrude(patch);
    const OccupancyGrid occ = build_occupancy(patch);
    BevPointCloud culled = visibility_cull(full, occ, patch, cam, opts);
    relative_coords(culled, instance_bboxes(patch), patch.world_box());
    save_points(*out, culled);
    if (!ply->empty()) save_points_ply(*ply, culled);
    json j{{"command", "cull"},
           {"mode", *mode},
           {"n_extruded", full.size()},
           {"n_points", culled.size()}};
    std::cout << j.dump() << "\n";
  });
}

void cmd_encode(CLI::App* app) {
  auto patch_path = std::make_shared<std::string>();
  auto points_path = std::make_shared<std::string>();
  auto seed = std::make_shared<std::uint64_t>(1);
  auto style_seed = std::make_shared<std::uint64_t>(2);
  auto c_fs = std::make_shared<int>(kDefaultSceneFeatureChannels);
  auto c_z = std::make_shared<int>(kDefaultStyleChannels);
  auto threads = std::make_shared<int>(1);
  auto out = std::make_shared<std::string>();
  auto styles_out = std::make_shared<std::string>();
  auto styles_dump = std::make_shared<std::string>();
  app->add_option("--patch", *patch_path, "patch container")->required();
  app->add_option("--points", *points_path, "point container")->required();
  app->add_option("--seed", *seed, "scene encoder seed");
  app->add_option("--style-seed", *style_seed, "style table seed");
  app->add_option("--c-fs", *c_fs, "scene feature channels");
  app->add_option("--c-z", *c_z, "style code channels");
  app->add_option("--threads", *threads, "worker thread cap");
  app->add_option("--out", *out, "output feature container")->required();
  app->add_option("--styles-out", *styles_out, "style table JSON (seed + dims)");
  app->add_option("--styles-dump", *styles_dump, "explicit style code matrix dump");
  app->callback([=] {
    const BevPatch patch = load_patch_file(*patch_path);
    BevPointCloud cloud = load_points(*points_path);
    attach_classes(cloud, patch);
    const SceneFeatureMap g = scene_encode(patch, *seed, *c_fs, *threads);
    gather_scene_feats(cloud, g);
    save_features(*out, cloud.scene_feats);
    const StyleTable table = make_style_table(*style_seed, patch.n_instances, *c_z);
    if (!styles_out->empty()) save_style_table(*styles_out, table);
    if (!styles_dump->empty()) save_style_codes(*styles_dump, table);
    json j{{"command", "encode"},
           {"n_points", cloud.size()},
           {"c_fs", *c_fs},
           {"n_instances", patch.n_instances}};
    std::cout << j.dump() << "\n";
  });
}

void cmd_serialize(CLI::App* app) {
  auto points_path = std::make_shared<std::string>();
  auto method = std::make_shared<std::string>("linear");
  auto grid = std::make_shared<double>(kDefaultSerialGrid);
  auto bits = std::make_shared<int>(10);
  auto out = std::make_shared<std::string>();
  app->add_option("--points", *points_path, "point container")->required();
  app->add_option("--method", *method, "linear|hilbert")
      ->check(CLI::IsMember({"linear", "hilbert"}));
  app->add_option("--grid", *grid, "linear grid size g");
  app->add_option("--bits", *bits, "hilbert quantization bits");
  app->add_option("--out", *out, "output permutation (raw u32 array)")->required();
  app->callback([=] {
    const BevPointCloud cloud = load_points(*points_path);
    const SerialOrder order = *method == "hilbert"
                                  ? serialize_hilbert(cloud.coords_abs, *bits)
                                  : serialize_linear(cloud.coords_abs, *grid);
    save_order(*out, order);
    json j{{"command", "serialize"}, {"method", *method}, {"n_points", cloud.size()}};
    std::cout << j.dump() << "\n";
  });
}

void cmd_decode(CLI::App* app) {
  auto points_path = std::make_shared<std::string>();
  auto feats_path = std::make_shared<std::string>();
  auto styles_path = std::make_shared<std::string>();
  auto order_path = std::make_shared<std::string>();
  auto attrs_csv = std::make_shared<std::string>("rgb");
  auto seed = std::make_shared<std::uint64_t>(3);
  auto n_pe = std::make_shared<int>(kDefaultPositionalFrequencies);
  auto window = std::make_shared<int>(kDefaultWindow);
  auto method = std::make_shared<std::string>("linear");
  auto grid = std::make_shared<double>(kDefaultSerialGrid);
  auto bits = std::make_shared<int>(10);
  auto c_ft = std::make_shared<int>(kDefaultTransformerChannels);
  auto heads = std::make_shared<int>(kDefaultHeads);
  auto d_qk = std::make_shared<int>(kDefaultQueryDim);
  auto threads = std::make_shared<int>(1);
  auto out = std::make_shared<std::string>();
  auto weights_in = std::make_shared<std::string>();
  auto weights_out = std::make_shared<std::string>();
  app->add_option("--points", *points_path, "point container")->required();
  app->add_option("--feats", *feats_path, "scene feature container")->required();
  app->add_option("--styles", *styles_path, "style table JSON")->required();
  app->add_option("--order", *order_path, "explicit permutation file (overrides --method)");
  app->add_option("--attrs", *attrs_csv, "generated attributes, e.g. rgb,offset");
  app->add_option("--seed", *seed, "decoder weight seed");
  app->add_option("--n-pe", *n_pe, "positional encoding frequency count");
  app->add_option("--window", *window, "attention window length");
  app->add_option("--method", *method, "linear|hilbert|both")
      ->check(CLI::IsMember({"linear", "hilbert", "both"}));
  app->add_option("--grid", *grid, "linear grid size g");
  app->add_option("--bits", *bits, "hilbert quantization bits");
  app->add_option("--c-ft", *c_ft, "transformer output channels");
  app->add_option("--heads", *heads, "attention heads");
  app->add_option("--d-qk", *d_qk, "query/key dim per head");
  app->add_option("--threads", *threads, "worker thread cap");
  app->add_option("--weights", *weights_in, "load decoder weights instead of seeding");
  app->add_option("--weights-out", *weights_out, "dump decoder weights");
  app->add_option("--out", *out, "output gaussian container")->required();
  app->callback([=] {
    BevPointCloud cloud = load_points(*points_path);
    cloud.scene_feats = load_features(*feats_path);
    if (cloud.scene_feats.rows() != static_cast<Eigen::Index>(cloud.size())) {
      throw ContractError("decode: feature row count does not match point count");
    }
    const StyleTable styles = load_style_table(*styles_path);
    const AttributeConfig attrs = AttributeConfig::parse(*attrs_csv);
    const int c_fp = 2 * *n_pe * (3 + static_cast<int>(cloud.scene_feats.cols()));
    DecoderWeights weights =
        !weights_in->empty()
            ? load_weights(*weights_in)
            : DecoderWeights::make(*seed, c_fp, styles.c_z, attrs, *c_ft, *heads, *d_qk);
    if (weights.c_fp != c_fp || weights.c_a != attrs.width() || weights.c_z != styles.c_z) {
      throw ContractError("decode: weight shapes do not match the requested configuration");
    }
    if (!weights_out->empty()) save_weights(*weights_out, weights);

    const MatrixRMf f_p = positional_encode_f(cloud, *n_pe, *threads);
    MatrixRMf raw;
    if (!order_path->empty()) {
      SerialOrder order;
      order.perm = load_order(*order_path);
      std::vector<std::uint8_t> seen(order.perm.size(), 0);
      for (std::uint32_t idx : order.perm) {
        if (idx >= order.perm.size() || seen[idx]++) {
          throw ContractError("decode: order file is not a permutation");
        }
      }
      const MatrixRMf fps = reorder(f_p, order);
      const auto labels_s = reorder(cloud.labels, order);
      const MatrixRMf zp_s = style_lookup(styles, labels_s);
      const MatrixRMf ft = window_attention(fps, weights, *window, nullptr, *threads);
      const MatrixRMf a_s = modulated_mlp(fps, ft, zp_s, labels_s, weights, attrs, *threads);
      raw.resize(a_s.rows(), a_s.cols());
      for (Eigen::Index i = 0; i < a_s.rows(); ++i) raw.row(order.perm[i]) = a_s.row(i);
    } else {
      DecodeOptions opts;
      opts.method = *method == "hilbert" ? SerialMethod::kHilbert
                    : *method == "both"  ? SerialMethod::kBoth
                                         : SerialMethod::kLinear;
      opts.grid = *grid;
      opts.bits = *bits;
      opts.window = *window;
      opts.threads = *threads;
      raw = decode_attributes(f_p, cloud.labels, styles, cloud.coords_abs, weights, attrs, opts);
    }
    save_gaussians(*out, assemble_gaussians(cloud, raw, attrs));
    json j{{"command", "decode"}, {"n_points", cloud.size()}, {"attrs", attrs.to_string()}};
    std::cout << j.dump() << "\n";
  });
}

void cmd_render(CLI::App* app) {
  auto gauss_path = std::make_shared<std::string>();
  auto camera_path = std::make_shared<std::string>();
  auto bg = std::make_shared<std::string>("0,0,0");
  auto out = std::make_shared<std::string>();
  auto depth_out = std::make_shared<std::string>();
  auto alpha_out = std::make_shared<std::string>();
  auto depth_scale = std::make_shared<double>(0.0);
  auto stop_t = std::make_shared<double>(kStopTransmittance);
  auto threads = std::make_shared<int>(1);
  app->add_option("--gaussians", *gauss_path, "gaussian container")->required();
  app->add_option("--camera", *camera_path, "camera JSON")->required();
  app->add_option("--bg", *bg, "background color r,g,b");
  app->add_option("--out", *out, "output color PNG (8-bit RGB)")->required();
  app->add_option("--depth", *depth_out, "output depth PNG (16-bit gray)");
  app->add_option("--alpha", *alpha_out, "output alpha PNG (16-bit gray)");
  app->add_option("--depth-scale", *depth_scale, "world units at full depth range (default: far)");
  app->add_option("--stop-transmittance", *stop_t, "early-out threshold (0 disables)");
  app->add_option("--threads", *threads, "worker thread cap");
  app->callback([=] {
    const GaussianSet gauss = load_gaussians(*gauss_path);
    const CameraModel cam = load_camera_json(*camera_path);
    RasterOptions opts;
    {
      std::istringstream ss(*bg);
      std::string part;
      for (int i = 0; i < 3; ++i) {
        if (!std::getline(ss, part, ',')) throw ContractError("render: --bg needs r,g,b");
        opts.background[i] = std::stod(part);
      }
    }
    opts.stop_transmittance = *stop_t;
    opts.threads = *threads;
    const RenderTarget target = rasterize(gauss, cam, opts);
    save_render_png(*out, target);
    if (!depth_out->empty()) {
      save_depth_png(*depth_out, target, *depth_scale > 0.0 ? *depth_scale : cam.far);
    }
    if (!alpha_out->empty()) save_alpha_png(*alpha_out, target);
    json j{{"command", "render"}, {"n_gaussians", gauss.size()}};
    std::cout << j.dump() << "\n";
  });
}

void cmd_pipeline(CLI::App* app) {
  auto flags = std::make_shared<ConfigFlags>();
  auto height = std::make_shared<std::string>();
  auto semantic = std::make_shared<std::string>();
  auto density = std::make_shared<std::string>();
  auto camera_path = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto depth_out = std::make_shared<std::string>();
  auto alpha_out = std::make_shared<std::string>();
  auto dump_dir = std::make_shared<std::string>();
  auto stats_out = std::make_shared<std::string>();
  app->add_option("--height", *height, "height field PNG")->required();
  app->add_option("--semantic", *semantic, "semantic map PNG")->required();
  app->add_option("--density", *density, "density map PNG");
  app->add_option("--camera", *camera_path, "camera JSON")->required();
  app->add_option("--out", *out, "output color PNG")->required();
  app->add_option("--depth", *depth_out, "output depth PNG");
  app->add_option("--alpha", *alpha_out, "output alpha PNG");
  app->add_option("--dump-intermediates", *dump_dir, "write per-stage artifacts to a directory");
  app->add_option("--stats-out", *stats_out, "append the stats JSON line to a file");
  flags->attach(app);
  app->callback([=] {
    const PipelineConfig cfg = flags->build();
    BevPatch patch = load_patch(*height, *semantic,
                                density->empty() ? std::nullopt : std::optional(*density),
                                cfg.max_height);
    instantiate(patch);
    const CameraModel cam = load_camera_json(*camera_path);
    PipelineResult result = run_pipeline(std::move(patch), cam, cfg);
    save_render_png(*out, result.target);
    if (!depth_out->empty()) save_depth_png(*depth_out, result.target, cam.far);
    if (!alpha_out->empty()) save_alpha_png(*alpha_out, result.target);
    if (!dump_dir->empty()) {
      fs::create_directories(*dump_dir);
      const fs::path dir(*dump_dir);
      save_patch((dir / "patch.bvp").string(), result.patch);
      save_points((dir / "pts.bvp").string(), result.cloud);
      save_features((dir / "feats.bvf").string(), result.scene_feats);
      save_style_table((dir / "styles.json").string(), result.styles);
      save_order((dir / "order.bin").string(), result.order);
      save_gaussians((dir / "gauss.bvg").string(), result.gaussians);
      save_config((dir / "pipeline.cfg").string(), cfg);
    }
    json j = stats_to_json(result.stats);
    j["command"] = "pipeline";
    const std::string line = j.dump();
    std::cout << line << "\n";
    if (!stats_out->empty()) {
      std::ofstream f(*stats_out, std::ios::app);
      if (!f) throw IoError("cannot write stats file: " + *stats_out);
      f << line << "\n";
    }
  });
}

void cmd_stats(CLI::App* app) {
  auto flags = std::make_shared<ConfigFlags>();
  auto height = std::make_shared<std::string>();
  auto semantic = std::make_shared<std::string>();
  auto density = std::make_shared<std::string>();
  auto camera_path = std::make_shared<std::string>();
  auto scales = std::make_shared<std::vector<int>>(std::vector<int>{1, 4, 16});
  app->add_option("--height", *height, "height field PNG")->required();
  app->add_option("--semantic", *semantic, "semantic map PNG")->required();
  app->add_option("--density", *density, "density map PNG");
  app->add_option("--camera", *camera_path, "camera JSON")->required();
  app->add_option("--scales", *scales, "area scale factors (perfect squares)")->delimiter(',');
  flags->attach(app);
  app->callback([=] {
    const PipelineConfig cfg = flags->build();
    SynthMaps maps;
    maps.height = read_png_gray16(*height);
    maps.semantic = read_png_gray8(*semantic);
    maps.density = density->empty() ? Grid2D<std::uint8_t>(maps.height.width(),
                                                           maps.height.height(), 1)
                                    : read_png_gray8(*density);
    for (auto& d : maps.density.data()) d = d ? 1 : 0;
    const CameraModel cam = load_camera_json(*camera_path);
    const auto rows = stats_scaling(maps, cam, cfg, *scales);
    for (const auto& row : rows) {
      json j{{"command", "stats"},
             {"scale", row.scale},
             {"n_visible", row.n_visible},
             {"n_instances_in_view", row.n_instances_in_view},
             {"style_table_bytes", row.style_table_bytes}};
      std::cout << j.dump() << "\n";
    }
  });
}

void cmd_synth(CLI::App* app) {
  auto width = std::make_shared<int>(128);
  auto height = std::make_shared<int>(0);
  auto seed = std::make_shared<std::uint64_t>(1);
  auto out_height = std::make_shared<std::string>();
  auto out_semantic = std::make_shared<std::string>();
  auto out_density = std::make_shared<std::string>();
  app->add_option("--size", *width, "patch size in cells (square)");
  app->add_option("--height-cells", *height, "rows (defaults to --size)");
  app->add_option("--seed", *seed, "layout seed");
  app->add_option("--out-height", *out_height, "height field PNG")->required();
  app->add_option("--out-semantic", *out_semantic, "semantic map PNG")->required();
  app->add_option("--out-density", *out_density, "density map PNG");
  app->callback([=] {
    const int h = *height > 0 ? *height : *width;
    const SynthMaps maps = synth_city(*width, h, *seed);
    write_png_gray16(*out_height, maps.height);
    write_png_gray8(*out_semantic, maps.semantic);
    if (!out_density->empty()) {
      Grid2D<std::uint8_t> d = maps.density;
      for (auto& v : d.data()) v = v ? 255 : 0;
      write_png_gray8(*out_density, d);
    }
    json j{{"command", "synth"}, {"width", *width}, {"height_cells", h}, {"seed", *seed}};
    std::cout << j.dump() << "\n";
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BEV-point city splatting pipeline"};
  app.require_subcommand(1);
  cmd_instantiate(app.add_subcommand("instantiate", "build a labeled patch from BEV map PNGs"));
  cmd_cull(app.add_subcommand("cull", "extrude and keep camera-visible points"));
  cmd_encode(app.add_subcommand("encode", "scene features and the style table"));
  cmd_serialize(app.add_subcommand("serialize", "spatial ordering of a point set"));
  cmd_decode(app.add_subcommand("decode", "gaussian attributes from point features"));
  cmd_render(app.add_subcommand("render", "rasterize a gaussian set"));
  cmd_pipeline(app.add_subcommand("pipeline", "run every stage end to end"));
  cmd_stats(app.add_subcommand("stats", "working-set scaling report"));
  cmd_synth(app.add_subcommand("synth", "generate a synthetic city patch"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
