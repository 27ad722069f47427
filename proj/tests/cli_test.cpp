// Copyright Contributors to the BevSplat Project
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end CLI checks: exit codes, JSON stats lines, and byte-exact
// agreement between the one-shot pipeline command and the staged commands
// run on its dumped intermediates.

#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <string>

#include "bevsplat/bevsplat.hpp"
#include "test_utils.hpp"

#ifndef BEVSPLAT_CLI_PATH
#error "BEVSPLAT_CLI_PATH must point at the CLI binary"
#endif

using namespace bevsplat;
using nlohmann::json;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string out;
};

CliResult run_cli(const std::string& args) {
  const std::string cmd = std::string(BEVSPLAT_CLI_PATH) + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  EXPECT_NE(pipe, nullptr);
  CliResult result;
  char buf[4096];
  while (fgets(buf, sizeof(buf), pipe)) result.out += buf;
  const int status = pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  EXPECT_TRUE(in.good()) << path;
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

json first_json_line(const std::string& text) {
  const auto nl = text.find('\n');
  return json::parse(text.substr(0, nl == std::string::npos ? text.size() : nl));
}

class CliFlow : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = std::make_unique<testutil::TempDir>("cli");
    auto synth = run_cli("synth --size 48 --seed 5 --out-height " + dir->file("h.png") +
                         " --out-semantic " + dir->file("s.png") + " --out-density " +
                         dir->file("d.png"));
    ASSERT_EQ(synth.exit_code, 0) << synth.out;
    const CameraModel cam = make_lookat_camera({18.0, 15.0, 55.0}, {24.0, 24.0, 0.0}, 64, 64,
                                               70.0, 1.0, 150.0);
    save_camera_json(dir->file("cam.json"), cam);
  }

  std::string common_config() const {
    return " --c-fs 13 --window 32 --supersample 1 ";
  }

  std::unique_ptr<testutil::TempDir> dir;
};

TEST_F(CliFlow, InstantiateEmitsStatsLine) {
  const auto res = run_cli("instantiate --height " + dir->file("h.png") + " --semantic " +
                           dir->file("s.png") + " --density " + dir->file("d.png") + " --out " +
                           dir->file("patch.bvp"));
  ASSERT_EQ(res.exit_code, 0);
  const json j = first_json_line(res.out);
  EXPECT_EQ(j.at("command"), "instantiate");
  EXPECT_EQ(j.at("width"), 48);
  EXPECT_GT(j.at("n_instances").get<int>(), 0);
}

TEST_F(CliFlow, ExitCodesDistinguishContractAndIoErrors) {
  // Missing file: I/O error, exit 2.
  auto missing = run_cli("instantiate --height /nonexistent.png --semantic " +
                         dir->file("s.png") + " --out " + dir->file("p.bvp"));
  EXPECT_EQ(missing.exit_code, 2);

  // Mismatched dimensions: contract error, exit 1.
  write_png_gray16(dir->file("small.png"), Grid2D<std::uint16_t>(8, 8, 0));
  auto mismatch = run_cli("instantiate --height " + dir->file("small.png") + " --semantic " +
                          dir->file("s.png") + " --out " + dir->file("p.bvp"));
  EXPECT_EQ(mismatch.exit_code, 1);

  // Bad flag value: exit 1.
  auto badflag = run_cli("cull --patch x --camera y --mode sideways --out z");
  EXPECT_EQ(badflag.exit_code, 1);
}

TEST_F(CliFlow, CullModesMaintainTheOrdering) {
  ASSERT_EQ(run_cli("instantiate --height " + dir->file("h.png") + " --semantic " +
                    dir->file("s.png") + " --density " + dir->file("d.png") + " --out " +
                    dir->file("patch.bvp"))
                .exit_code,
            0);
  std::size_t counts[3] = {0, 0, 0};
  const char* modes[3] = {"ray", "instance", "region"};
  for (int m = 0; m < 3; ++m) {
    const auto res = run_cli("cull --patch " + dir->file("patch.bvp") + " --camera " +
                             dir->file("cam.json") + " --mode " + modes[m] +
                             " --supersample 1 --out " + dir->file("pts.bvp"));
    ASSERT_EQ(res.exit_code, 0);
    counts[m] = first_json_line(res.out).at("n_points").get<std::size_t>();
  }
  EXPECT_LE(counts[0], counts[1]);
  EXPECT_LE(counts[1], counts[2]);
}

TEST_F(CliFlow, PipelineIsReproducibleAndStagedCommandsMatchIt) {
  const std::string base = "pipeline --height " + dir->file("h.png") + " --semantic " +
                           dir->file("s.png") + " --density " + dir->file("d.png") +
                           " --camera " + dir->file("cam.json") + common_config();
  auto run1 = run_cli(base + " --out " + dir->file("frame_a.png") + " --dump-intermediates " +
                      dir->file("stages"));
  ASSERT_EQ(run1.exit_code, 0) << run1.out;
  const json stats = first_json_line(run1.out);
  EXPECT_LE(stats.at("n_ray").get<std::size_t>(), stats.at("n_instance").get<std::size_t>());
  EXPECT_LE(stats.at("n_instance").get<std::size_t>(), stats.at("n_region").get<std::size_t>());

  // Same run twice: byte-identical frame.
  auto run2 = run_cli(base + " --out " + dir->file("frame_b.png"));
  ASSERT_EQ(run2.exit_code, 0);
  EXPECT_EQ(read_bytes(dir->file("frame_a.png")), read_bytes(dir->file("frame_b.png")));

  // Different thread cap: still byte-identical.
  auto run4 = run_cli(base + " --threads 4 --out " + dir->file("frame_t.png"));
  ASSERT_EQ(run4.exit_code, 0);
  EXPECT_EQ(read_bytes(dir->file("frame_a.png")), read_bytes(dir->file("frame_t.png")));

  // Staged reproduction from the dumped intermediates.
  const std::string stages = dir->file("stages");
  auto cull = run_cli("cull --patch " + stages + "/patch.bvp --camera " + dir->file("cam.json") +
                      " --mode ray --supersample 1 --out " + dir->file("pts2.bvp"));
  ASSERT_EQ(cull.exit_code, 0);
  EXPECT_EQ(read_bytes(stages + "/pts.bvp"), read_bytes(dir->file("pts2.bvp")));

  auto encode = run_cli("encode --patch " + stages + "/patch.bvp --points " + stages +
                        "/pts.bvp --seed 1 --style-seed 2 --c-fs 13 --out " +
                        dir->file("feats2.bvf") + " --styles-out " + dir->file("styles2.json"));
  ASSERT_EQ(encode.exit_code, 0);
  EXPECT_EQ(read_bytes(stages + "/feats.bvf"), read_bytes(dir->file("feats2.bvf")));
  EXPECT_EQ(read_bytes(stages + "/styles.json"), read_bytes(dir->file("styles2.json")));

  auto serialize = run_cli("serialize --points " + stages + "/pts.bvp --method linear " +
                           "--grid 0.01 --out " + dir->file("order2.bin"));
  ASSERT_EQ(serialize.exit_code, 0);
  EXPECT_EQ(read_bytes(stages + "/order.bin"), read_bytes(dir->file("order2.bin")));

  auto decode = run_cli("decode --points " + stages + "/pts.bvp --feats " + stages +
                        "/feats.bvf --styles " + stages + "/styles.json --order " + stages +
                        "/order.bin --attrs rgb --seed 3 --n-pe 10 --window 32 --out " +
                        dir->file("gauss2.bvg"));
  ASSERT_EQ(decode.exit_code, 0) << decode.out;
  EXPECT_EQ(read_bytes(stages + "/gauss.bvg"), read_bytes(dir->file("gauss2.bvg")));

  auto render = run_cli("render --gaussians " + dir->file("gauss2.bvg") + " --camera " +
                        dir->file("cam.json") + " --out " + dir->file("frame_staged.png"));
  ASSERT_EQ(render.exit_code, 0);
  EXPECT_EQ(read_bytes(dir->file("frame_a.png")), read_bytes(dir->file("frame_staged.png")));
}

TEST_F(CliFlow, StatsCommandReportsScalingRows) {
  const auto res = run_cli("stats --height " + dir->file("h.png") + " --semantic " +
                           dir->file("s.png") + " --density " + dir->file("d.png") +
                           " --camera " + dir->file("cam.json") + common_config() +
                           " --scales 1,4");
  ASSERT_EQ(res.exit_code, 0) << res.out;
  std::istringstream lines(res.out);
  std::string line;
  int rows = 0;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    EXPECT_EQ(j.at("command"), "stats");
    EXPECT_GT(j.at("n_visible").get<std::size_t>(), 0u);
    EXPECT_GT(j.at("style_table_bytes").get<std::size_t>(), 0u);
    ++rows;
  }
  EXPECT_EQ(rows, 2);
}

TEST_F(CliFlow, ConfigFileValuesAreOverriddenByFlags) {
  {
    std::ofstream cfg(dir->file("run.cfg"));
    cfg << "# experiment record\n";
    cfg << "supersample=1\n";
    cfg << "c_fs=13\n";
    cfg << "window=64\n";
  }
  const auto res = run_cli("pipeline --height " + dir->file("h.png") + " --semantic " +
                           dir->file("s.png") + " --camera " + dir->file("cam.json") +
                           " --config " + dir->file("run.cfg") + " --window 32 --out " +
                           dir->file("cfg_frame.png"));
  ASSERT_EQ(res.exit_code, 0) << res.out;

  const auto direct = run_cli("pipeline --height " + dir->file("h.png") + " --semantic " +
                              dir->file("s.png") + " --camera " + dir->file("cam.json") +
                              common_config() + " --out " + dir->file("direct_frame.png"));
  ASSERT_EQ(direct.exit_code, 0);
  EXPECT_EQ(read_bytes(dir->file("cfg_frame.png")), read_bytes(dir->file("direct_frame.png")));
}

TEST_F(CliFlow, RenderMissingInputIsIoError) {
  const auto res = run_cli("render --gaussians /nonexistent.bvg --camera " +
                           dir->file("cam.json") + " --out " + dir->file("x.png"));
  EXPECT_EQ(res.exit_code, 2);
}

}  // namespace
