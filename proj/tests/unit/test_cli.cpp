// Copyright 2026 The sphreg Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "sphreg/checkpoint.hpp"
#include "sphreg/io.hpp"
#include "sphreg/metrics.hpp"
#include "test_util.hpp"

namespace sphreg {
namespace {

namespace fs = std::filesystem;

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "sphreg");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("sphreg_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string s(const fs::path& p) { return p.string(); }

std::map<std::string, double> eval_row(const std::string& text) {
  std::istringstream in(text);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  std::map<std::string, double> values;
  std::istringstream h(header), r(row);
  std::string key, value;
  while (std::getline(h, key, ',') && std::getline(r, value, ',')) values[key] = std::stod(value);
  return values;
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

const std::vector<std::string> kSmall = {"--mesh-level", "2", "--bandwidth", "8",
                                         "--channels",   "4", "--use-graph", "false"};

std::vector<std::string> with_small(std::vector<std::string> args) {
  args.insert(args.end(), kSmall.begin(), kSmall.end());
  return args;
}

TEST_CASE("icosphere prints counts and writes a readable mesh") {
  const auto dir = scratch("ico");
  const Run r = cli({"icosphere", "--level", "6"});
  CHECK(r.code == 0);
  CHECK(r.out.find("vertices=40962") != std::string::npos);
  CHECK(r.out.find("faces=81920") != std::string::npos);
  CHECK(r.out.find("edges=122880") != std::string::npos);

  const Run w = cli({"icosphere", "--level", "2", "--out", s(dir / "m.sphm")});
  REQUIRE(w.code == 0);
  const Icosphere back = io::load_mesh(dir / "m.sphm");
  CHECK(back.num_vertices() == 162);
  CHECK(back.vertices() == cached_icosphere(2).vertices());
  CHECK(fs::exists(dir / "m.sphm.manifest.json"));
}

TEST_CASE("usage errors exit with 2 and help lists defaults") {
  CHECK(cli({}).code == 2);
  CHECK(cli({"icosphere", "--level", "2", "--bogus"}).code == 2);
  CHECK(cli({"icosphere"}).code == 2);
  CHECK(cli({"icosphere", "--level", "99"}).code == 2);
  CHECK(cli({"nonsense"}).code == 2);
  CHECK(cli({"train", "--data", "/nonexistent", "--out", "/tmp/x.sphk"}).code == 2);
  CHECK(cli({"synth", "--out-dir", "/tmp/unused", "--epochs", "zero"}).code == 2);

  const Run help = cli({"synth", "--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("--pairs") != std::string::npos);
  CHECK(help.out.find("64") != std::string::npos);
  CHECK(help.out.find("--learning-rate") != std::string::npos);
  CHECK(help.out.find("0.01") != std::string::npos);
  const Run reg_help = cli({"register", "--help"});
  CHECK(reg_help.out.find("--deform") != std::string::npos);
  CHECK(reg_help.out.find("soft") != std::string::npos);
}

TEST_CASE("malformed inputs exit with 3") {
  const auto dir = scratch("format");
  std::ofstream(dir / "junk.sphs") << "not a signal";
  CHECK(cli({"resample", "--in", s(dir / "junk.sphs"), "--level", "1", "--out",
             s(dir / "o.sphs")}).code == 3);
  CHECK(cli({"eval", "--field", s(dir / "junk.sphs"), "--moving", s(dir / "junk.sphs"), "--fixed",
             s(dir / "junk.sphs"), "--out-dir", s(dir / "ev")}).code == 3);
}

TEST_CASE("resample and align round trip through files") {
  const auto dir = scratch("resample");
  std::mt19937_64 rng(4);
  const SphericalSignal sig = random_bandlimited_signal(3, 4, rng);
  io::save_signal(dir / "s.sphs", sig);
  REQUIRE(cli({"resample", "--in", s(dir / "s.sphs"), "--level", "2", "--out",
               s(dir / "d.sphs")}).code == 0);
  CHECK(io::load_signal(dir / "d.sphs").values == sig.values.topRows(162));

  const Run al = cli({"align", "--moving", s(dir / "s.sphs"), "--fixed", s(dir / "s.sphs"), "--out",
                      s(dir / "a.sphs"), "--axes", "8", "--angles", "4"});
  REQUIRE(al.code == 0);
  CHECK(al.out.find("cc_aligned=1") != std::string::npos);
}

TEST_CASE("a zero-head checkpoint registers to the identity") {
  const auto dir = scratch("identity");
  TrainConfig cfg;
  cfg.mesh_level = 2;
  cfg.bandwidth = 8;
  cfg.channels = 4;
  cfg.use_crf = false;
  const auto ctx = CascadeContext::make(cfg);
  std::mt19937_64 rng(1);
  CascadeParams params = init_cascade(*ctx, rng, true);
  save_checkpoint(dir / "zero.sphk", cfg, params);
  const auto pair = synth_dataset(1, cfg, 2).front();
  io::save_signal(dir / "m.sphs", pair.moving);
  io::save_signal(dir / "f.sphs", pair.fixed);

  for (const std::string mode : {"soft", "argmax"}) {
    const Run reg = cli({"register", "--checkpoint", s(dir / "zero.sphk"), "--moving",
                         s(dir / "m.sphs"), "--fixed", s(dir / "f.sphs"), "--out-field",
                         s(dir / ("id_" + mode + ".sphd")), "--deform", mode});
    REQUIRE(reg.code == 0);
    CHECK(reg.out.find("time_total=") != std::string::npos);
    const DeformationField field = io::load_field(dir / ("id_" + mode + ".sphd"));
    CHECK(test::max_abs(field.targets - cached_icosphere(2).vertices()) < 1e-14);

    const Run ev = cli({"eval", "--field", s(dir / ("id_" + mode + ".sphd")), "--moving",
                        s(dir / "m.sphs"), "--fixed", s(dir / "f.sphs"), "--out-dir",
                        s(dir / ("ev_" + mode))});
    REQUIRE(ev.code == 0);
    const auto row = eval_row(ev.out);
    CHECK(row.at("cc") == doctest::Approx(row.at("cc_unregistered")).epsilon(1e-9));
    for (const char* key : {"J_mean", "J_std", "J_max", "J_p95", "J_p98", "R_mean", "R_std",
                            "R_max", "R_p95", "R_p98", "folds"}) {
      CHECK(std::abs(row.at(key)) < 1e-12);
    }
  }
  CHECK(cli({"register", "--checkpoint", s(dir / "zero.sphk"), "--moving", s(dir / "m.sphs"),
             "--fixed", s(dir / "f.sphs"), "--out-field", s(dir / "x.sphd"), "--deform",
             "hard"}).code == 2);
}

TEST_CASE("synth, train, register and eval write their artifacts and manifests") {
  const auto dir = scratch("pipeline");
  const Run syn = cli(with_small({"synth", "--out-dir", s(dir / "train"), "--pairs", "3"}));
  REQUIRE(syn.code == 0);
  CHECK(syn.out.find("pairs=3") != std::string::npos);
  REQUIRE(cli(with_small({"synth", "--out-dir", s(dir / "val"), "--pairs", "2", "--data-seed",
                          "12"})).code == 0);
  CHECK(fs::exists(dir / "train" / "pair_0002_truth.sphd"));

  const Run tr = cli(with_small({"train", "--data", s(dir / "train"), "--validation",
                                 s(dir / "val"), "--out", s(dir / "net.sphk"), "--epochs", "2"}));
  REQUIRE(tr.code == 0);
  CHECK(tr.out.find("epoch=2") != std::string::npos);
  const Checkpoint ck = load_checkpoint(dir / "net.sphk");
  CHECK(ck.config.epochs == 2);
  CHECK(ck.config.mesh_level == 2);
  std::ifstream log(dir / "net.sphk.log.csv");
  std::string header;
  std::getline(log, header);
  CHECK(header == "epoch,loss,loss_sim,loss_reg,cc_val");

  const auto m = s(dir / "val" / "pair_0000_moving.sphs");
  const auto f = s(dir / "val" / "pair_0000_fixed.sphs");
  const Run reg = cli({"register", "--checkpoint", s(dir / "net.sphk"), "--moving", m, "--fixed", f,
                       "--out-field", s(dir / "out.sphd"), "--out-warped", s(dir / "w.sphs")});
  REQUIRE(reg.code == 0);
  const Run ev = cli({"eval", "--field", s(dir / "out.sphd"), "--moving", m, "--fixed", f,
                      "--out-dir", s(dir / "ev")});
  REQUIRE(ev.code == 0);
  const auto row = eval_row(ev.out);
  const DeformationField field = io::load_field(dir / "out.sphd");
  const SphericalSignal warped = io::load_signal(dir / "w.sphs");
  CHECK(row.at("cc") == doctest::Approx(pearson_cc(warped, io::load_signal(f))).epsilon(1e-5));
  CHECK(row.at("folds") == distortion_report(cached_icosphere(2), field).folds);
  CHECK(fs::exists(dir / "ev" / "report.csv"));
  CHECK(fs::exists(dir / "ev" / "triangles.csv"));

  const std::vector<fs::path> manifests = {dir / "train" / "synth_manifest.json",
                                           dir / "net.sphk.manifest.json",
                                           dir / "out.sphd.manifest.json",
                                           dir / "ev" / "eval_manifest.json"};
  const std::vector<std::string> commands = {"synth", "train", "register", "eval"};
  for (std::size_t i = 0; i < manifests.size(); ++i) {
    REQUIRE(fs::exists(manifests[i]));
    const auto j = read_json(manifests[i]);
    CHECK(j.at("command") == commands[i]);
    CHECK(j.contains("tool_version"));
    CHECK(j.at("argv").is_array());
    CHECK(j.contains("wall_seconds"));
    CHECK(j.contains("outputs"));
  }
  CHECK(read_json(manifests[1]).at("config").at("epochs") == "2");
}

TEST_CASE("the ground-truth field improves correlation through eval") {
  const auto dir = scratch("truth");
  REQUIRE(cli(with_small({"synth", "--out-dir", s(dir), "--pairs", "2"})).code == 0);
  for (const char* p : {"pair_0000", "pair_0001"}) {
    const std::string base = s(dir / p);
    const Run ev = cli({"eval", "--field", base + "_truth.sphd", "--moving", base + "_moving.sphs",
                        "--fixed", base + "_fixed.sphs", "--out-dir", s(dir / (std::string(p) + "_ev"))});
    REQUIRE(ev.code == 0);
    const auto row = eval_row(ev.out);
    CHECK(row.at("cc") >= row.at("cc_unregistered"));
    CHECK(row.at("folds") == 0);
  }
}

}  // namespace
}  // namespace sphreg
