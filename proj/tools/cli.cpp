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

#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sphreg/align.hpp"
#include "sphreg/checkpoint.hpp"
#include "sphreg/icosphere.hpp"
#include "sphreg/io.hpp"
#include "sphreg/metrics.hpp"
#include "sphreg/training.hpp"

#ifndef SPHREG_VERSION
#define SPHREG_VERSION "dev"
#endif

namespace sphreg::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

// Failures while opening or writing files named on the command line.
class PathError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Clock = std::chrono::steady_clock;

// Command line of the current invocation, recorded in every manifest.
std::vector<std::string> g_argv;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw PathError("cannot open '" + path.string() + "' for reading");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw PathError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw PathError("failed writing '" + path.string() + "'");
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw PathError("cannot create directory '" + path.parent_path().string() + "'");
  }
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw PathError("cannot create directory '" + dir.string() + "'");
}

// Shortest round-trip spelling of numeric defaults, for help output.
std::string shortest(const std::string& text) {
  double v = 0.0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size()) return text;
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// Every TrainConfig key as a --dashed-flag. Values stay strings until the
// config is resolved: defaults, then the config file, then explicit flags.
struct ConfigFlags {
  std::string config_file;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App& app) {
    app.add_option("--config", config_file, "key=value config file");
    const TrainConfig defaults;
    std::istringstream lines(defaults.to_text());
    std::string line;
    while (std::getline(lines, line)) {
      const auto eq = line.find('=');
      const std::string key = line.substr(0, eq);
      std::string flag = key;
      std::replace(flag.begin(), flag.end(), '_', '-');
      values[key] = shortest(line.substr(eq + 1));
      options[key] = app.add_option("--" + flag, values[key], "config key " + key)
                         ->capture_default_str();
    }
  }

  TrainConfig resolve() const {
    TrainConfig cfg;
    if (!config_file.empty()) cfg = TrainConfig::from_text(read_text(config_file), cfg);
    for (const auto& [key, opt] : options)
      if (opt->count() > 0) cfg.set(key, values.at(key));
    cfg.validate();
    return cfg;
  }
};

json config_json(const TrainConfig& cfg) {
  json j = json::object();
  std::istringstream lines(cfg.to_text());
  std::string line;
  while (std::getline(lines, line)) {
    const auto eq = line.find('=');
    j[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return j;
}

struct Manifest {
  json body = json::object();
  Clock::time_point start = Clock::now();

  explicit Manifest(const std::string& command) {
    body["command"] = command;
    body["tool_version"] = SPHREG_VERSION;
    body["argv"] = g_argv;
  }
  void write(const fs::path& path) {
    body["wall_seconds"] = seconds_since(start);
    ensure_parent(path);
    write_text(path, body.dump(2) + "\n");
  }
};

std::string pair_stem(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "pair_%04zu", i);
  return buf;
}

std::vector<SyntheticPair> load_pairs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw PathError("'" + dir.string() + "' is not a directory");
  std::vector<SyntheticPair> pairs;
  for (std::size_t i = 0;; ++i) {
    const fs::path fixed = dir / (pair_stem(i) + "_fixed.sphs");
    const fs::path moving = dir / (pair_stem(i) + "_moving.sphs");
    if (!fs::exists(fixed) || !fs::exists(moving)) break;
    SyntheticPair p;
    p.fixed = io::load_signal(fixed);
    p.moving = io::load_signal(moving);
    const fs::path gt = dir / (pair_stem(i) + "_truth.sphd");
    if (fs::exists(gt)) p.ground_truth = io::load_field(gt);
    pairs.push_back(std::move(p));
  }
  if (pairs.empty()) throw PathError("no pair_NNNN_{fixed,moving}.sphs files in '" + dir.string() + "'");
  return pairs;
}

// Subcommand handlers ------------------------------------------------------

struct IcosphereArgs {
  int level = 0;
  std::string out;
  std::string manifest;
};

void cmd_icosphere(const IcosphereArgs& a, std::ostream& out) {
  Manifest m("icosphere");
  const Icosphere& mesh = cached_icosphere(a.level);
  if (!a.out.empty()) {
    ensure_parent(a.out);
    io::save_mesh(a.out, mesh);
  }
  out << "level=" << a.level << "\n"
      << "vertices=" << mesh.num_vertices() << "\n"
      << "edges=" << mesh.num_edges() << "\n"
      << "faces=" << mesh.num_faces() << "\n";
  m.body["level"] = a.level;
  m.body["outputs"] = {{"mesh", a.out}};
  if (!a.manifest.empty()) {
    m.write(a.manifest);
  } else if (!a.out.empty()) {
    m.write(a.out + ".manifest.json");
  }
}

struct SynthArgs {
  ConfigFlags config;
  std::string out_dir;
  int pairs = 64;
  std::uint64_t data_seed = 11;
};

void cmd_synth(const SynthArgs& a, std::ostream& out) {
  Manifest m("synth");
  const TrainConfig cfg = a.config.resolve();
  ensure_dir(a.out_dir);
  const auto pairs = synth_dataset(a.pairs, cfg, a.data_seed);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const fs::path base = fs::path(a.out_dir) / pair_stem(i);
    io::save_signal(base.string() + "_fixed.sphs", pairs[i].fixed);
    io::save_signal(base.string() + "_moving.sphs", pairs[i].moving);
    io::save_field(base.string() + "_truth.sphd", pairs[i].ground_truth);
  }
  const double cc = mean_unregistered_cc(pairs);
  out << "pairs=" << pairs.size() << "\n" << "cc_unregistered=" << fmt(cc) << "\n";
  m.body["config"] = config_json(cfg);
  m.body["seed"] = a.data_seed;
  m.body["pairs"] = a.pairs;
  m.body["inputs"] = json::object();
  m.body["outputs"] = {{"dir", a.out_dir}};
  m.body["cc_unregistered"] = cc;
  m.write(fs::path(a.out_dir) / "synth_manifest.json");
}

struct TrainArgs {
  ConfigFlags config;
  std::string data;
  std::string validation;
  std::string out;
  std::string log;
  std::string manifest;
};

void cmd_train(const TrainArgs& a, std::ostream& out) {
  Manifest m("train");
  const TrainConfig cfg = a.config.resolve();
  const auto data = load_pairs(a.data);
  std::vector<SyntheticPair> val;
  if (!a.validation.empty()) val = load_pairs(a.validation);
  const auto ctx = CascadeContext::make(cfg);
  ensure_parent(a.out);
  const std::string log_path = a.log.empty() ? a.out + ".log.csv" : a.log;
  std::vector<EpochLog> log;
  auto result = train(*ctx, data, val, [&](const EpochLog& e, const CascadeParams& p) {
    log.push_back(e);
    CascadeParams copy = p;
    save_checkpoint(a.out, cfg, copy);
    write_text(log_path, format_log_csv(log));
    out << "epoch=" << e.epoch << " loss=" << fmt(e.loss) << " loss_sim=" << fmt(e.loss_sim)
        << " loss_reg=" << fmt(e.loss_reg) << " cc_val=" << fmt(e.cc_val) << "\n";
  });
  if (cfg.epochs == 0) {
    save_checkpoint(a.out, cfg, result.params);
    write_text(log_path, format_log_csv(log));
  }
  m.body["config"] = config_json(cfg);
  m.body["seed"] = cfg.seed;
  m.body["inputs"] = {{"data", a.data}, {"validation", a.validation}};
  m.body["outputs"] = {{"checkpoint", a.out}, {"log", log_path}};
  m.write(a.manifest.empty() ? a.out + ".manifest.json" : a.manifest);
}

struct RegisterArgs {
  std::string checkpoint;
  std::string moving;
  std::string fixed;
  std::string out_field;
  std::string out_warped;
  std::string deform = "soft";
  int crf_iters = -1;
  double crf_weight = -1.0;
  std::string manifest;
};

void cmd_register(const RegisterArgs& a, std::ostream& out) {
  Manifest m("register");
  auto t0 = Clock::now();
  Checkpoint ck = load_checkpoint(a.checkpoint);
  const SphericalSignal moving = io::load_signal(a.moving);
  const SphericalSignal fixed = io::load_signal(a.fixed);
  if (a.crf_iters >= 0) {
    ck.config.crf_iters = a.crf_iters;
    ck.config.use_crf = a.crf_iters > 0;
    ck.params.crf_coarse.iterations = a.crf_iters;
    ck.params.crf_fine.iterations = a.crf_iters;
  }
  if (a.crf_weight >= 0.0) {
    ck.params.crf_coarse.weight(0, 0) = a.crf_weight;
    ck.params.crf_fine.weight(0, 0) = a.crf_weight;
  }
  const auto ctx = CascadeContext::make(ck.config);
  const double load_s = seconds_since(t0);
  const DeformMode mode = a.deform == "argmax" ? DeformMode::kArgmax : DeformMode::kSoft;
  t0 = Clock::now();
  const auto result = forward_cascade(moving, fixed, ck.params, *ctx, mode);
  const double total_s = seconds_since(t0);
  ensure_parent(a.out_field);
  io::save_field(a.out_field, result.total_field);
  if (!a.out_warped.empty()) {
    ensure_parent(a.out_warped);
    io::save_signal(a.out_warped, result.warped);
  }
  out << "time_forward=" << fmt(result.times.forward) << "\n"
      << "time_crf=" << fmt(result.times.crf) << "\n"
      << "time_densify=" << fmt(result.times.densify) << "\n"
      << "time_warp=" << fmt(result.times.warp) << "\n"
      << "time_total=" << fmt(total_s) << "\n";
  m.body["config"] = config_json(ck.config);
  m.body["deform"] = a.deform;
  m.body["seed"] = ck.config.seed;
  m.body["inputs"] = {{"checkpoint", a.checkpoint}, {"moving", a.moving}, {"fixed", a.fixed}};
  m.body["outputs"] = {{"field", a.out_field}, {"warped", a.out_warped}};
  m.body["phase_seconds"] = {{"load", load_s},
                             {"forward", result.times.forward},
                             {"crf", result.times.crf},
                             {"densify", result.times.densify},
                             {"warp", result.times.warp}};
  m.write(a.manifest.empty() ? a.out_field + ".manifest.json" : a.manifest);
}

struct EvalArgs {
  std::string field;
  std::string moving;
  std::string fixed;
  std::string out_dir;
  std::string manifest;
};

template <typename F>
auto metric(const char* name, F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    throw NumericError(std::string("metric ") + name + ": " + e.what());
  } catch (const NumericError& e) {
    throw NumericError(std::string("metric ") + name + ": " + e.what());
  }
}

void cmd_eval(const EvalArgs& a, std::ostream& out) {
  Manifest m("eval");
  const auto t0 = Clock::now();
  const DeformationField field = io::load_field(a.field);
  const SphericalSignal moving = io::load_signal(a.moving);
  const SphericalSignal fixed = io::load_signal(a.fixed);
  if (moving.level != field.mesh_level || fixed.level != field.mesh_level) {
    throw std::invalid_argument("field, moving and fixed must share a mesh level");
  }
  const Icosphere& mesh = cached_icosphere(field.mesh_level);
  const SphericalSignal warped = warp_signal(moving, field, mesh);
  const double cc = metric("cc", [&] { return pearson_cc(warped, fixed); });
  const double cc_before = metric("cc_unregistered", [&] { return pearson_cc(moving, fixed); });
  const double mse = metric("mse", [&] { return mean_squared_error(warped, fixed); });
  const DistortionReport rep = metric("distortion", [&] { return distortion_report(mesh, field); });
  const double secs = seconds_since(t0);

  out << "cc,cc_unregistered,mse,J_mean,J_std,J_max,J_p95,J_p98,R_mean,R_std,R_max,R_p95,R_p98,"
         "folds,seconds\n";
  const auto& j = rep.log2_j;
  const auto& r = rep.log2_r;
  out << fmt(cc) << ',' << fmt(cc_before) << ',' << fmt(mse) << ',' << fmt(j.mean) << ','
      << fmt(j.std) << ',' << fmt(j.max) << ',' << fmt(j.p95) << ',' << fmt(j.p98) << ','
      << fmt(r.mean) << ',' << fmt(r.std) << ',' << fmt(r.max) << ',' << fmt(r.p95) << ','
      << fmt(r.p98) << ',' << rep.folds << ',' << fmt(secs) << "\n";

  ensure_dir(a.out_dir);
  const fs::path dir(a.out_dir);
  std::string report = "cc=" + fmt(cc) + "\ncc_unregistered=" + fmt(cc_before) +
                       "\nmse=" + fmt(mse) + "\nfolds=" + std::to_string(rep.folds) + "\n" +
                       distortion_csv(rep);
  write_text(dir / "report.csv", report);
  std::string tri = "face,J,R,sigma1,sigma2\n";
  for (std::size_t i = 0; i < rep.triangles.size(); ++i) {
    const auto& t = rep.triangles[i];
    tri += std::to_string(i) + "," + fmt(t.J) + "," + fmt(t.R) + "," + fmt(t.sigma1) + "," +
           fmt(t.sigma2) + "\n";
  }
  write_text(dir / "triangles.csv", tri);
  m.body["inputs"] = {{"field", a.field}, {"moving", a.moving}, {"fixed", a.fixed}};
  m.body["outputs"] = {{"report", (dir / "report.csv").string()},
                       {"triangles", (dir / "triangles.csv").string()}};
  m.body["metrics"] = {{"cc", cc}, {"cc_unregistered", cc_before}, {"mse", mse},
                       {"log2J_mean", j.mean}, {"log2R_mean", r.mean}, {"folds", rep.folds}};
  m.write(a.manifest.empty() ? (dir / "eval_manifest.json").string() : a.manifest);
}

struct ResampleArgs {
  std::string in;
  int level = 0;
  std::string out;
  std::string manifest;
};

void cmd_resample(const ResampleArgs& a, std::ostream& out) {
  Manifest m("resample");
  const SphericalSignal s = io::load_signal(a.in);
  SphericalSignal r = a.level <= s.level ? downsample_to_level(s, a.level) : upsample_to_level(s, a.level);
  ensure_parent(a.out);
  io::save_signal(a.out, r);
  out << "level=" << r.level << "\nvertices=" << r.rows() << "\n";
  m.body["inputs"] = {{"signal", a.in}};
  m.body["outputs"] = {{"signal", a.out}};
  m.body["level"] = a.level;
  m.write(a.manifest.empty() ? a.out + ".manifest.json" : a.manifest);
}

struct AlignArgs {
  std::string moving;
  std::string fixed;
  std::string out;
  int axes = 64;
  int angles = 16;
  std::string manifest;
};

void cmd_align(const AlignArgs& a, std::ostream& out) {
  Manifest m("align");
  const SphericalSignal moving = io::load_signal(a.moving);
  const SphericalSignal fixed = io::load_signal(a.fixed);
  const AlignmentResult res = rigid_align(moving, fixed, a.axes, a.angles);
  const SphericalSignal aligned = rotate_signal(moving, res.rotation);
  ensure_parent(a.out);
  io::save_signal(a.out, aligned);
  out << "cc_identity=" << fmt(res.identity_cc) << "\ncc_aligned=" << fmt(res.cc) << "\n";
  json rot = json::array();
  for (int i = 0; i < 3; ++i) rot.push_back({res.rotation(i, 0), res.rotation(i, 1), res.rotation(i, 2)});
  out << "rotation=" << rot.dump() << "\n";
  m.body["inputs"] = {{"moving", a.moving}, {"fixed", a.fixed}};
  m.body["outputs"] = {{"aligned", a.out}};
  m.body["rotation"] = rot;
  m.write(a.manifest.empty() ? a.out + ".manifest.json" : a.manifest);
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  g_argv.assign(argv, argv + argc);
  CLI::App app{"Spherical signal registration toolkit", "sphreg"};
  app.require_subcommand(1);
  app.set_version_flag("--version", SPHREG_VERSION);

  IcosphereArgs ico;
  auto* c_ico = app.add_subcommand("icosphere", "Write an icosphere mesh and print its counts");
  c_ico->add_option("--level", ico.level, "subdivision level")->required()->check(CLI::Range(0, kMaxIcosphereLevel));
  c_ico->add_option("--out", ico.out, "output SPHM path");
  c_ico->add_option("--manifest", ico.manifest, "run manifest path");

  SynthArgs syn;
  auto* c_syn = app.add_subcommand("synth", "Generate synthetic registration pairs");
  syn.config.attach(*c_syn);
  c_syn->add_option("--out-dir", syn.out_dir, "output directory")->required();
  c_syn->add_option("--pairs", syn.pairs, "number of pairs")->capture_default_str()->check(CLI::PositiveNumber);
  c_syn->add_option("--data-seed", syn.data_seed, "dataset seed")->capture_default_str();

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "Train the two-scale registration network");
  tr.config.attach(*c_tr);
  c_tr->add_option("--data", tr.data, "training pair directory")->required();
  c_tr->add_option("--validation", tr.validation, "held-out pair directory");
  c_tr->add_option("--out", tr.out, "checkpoint path (rewritten every epoch)")->required();
  c_tr->add_option("--log", tr.log, "CSV log path (default <out>.log.csv)");
  c_tr->add_option("--manifest", tr.manifest, "run manifest path (default <out>.manifest.json)");

  RegisterArgs rg;
  auto* c_rg = app.add_subcommand("register", "Register a moving signal to a fixed signal");
  c_rg->add_option("--checkpoint", rg.checkpoint, "SPHK checkpoint")->required();
  c_rg->add_option("--moving", rg.moving, "moving SPHS")->required();
  c_rg->add_option("--fixed", rg.fixed, "fixed SPHS")->required();
  c_rg->add_option("--out-field", rg.out_field, "output SPHD deformation")->required();
  c_rg->add_option("--out-warped", rg.out_warped, "output SPHS warped moving signal");
  c_rg->add_option("--deform", rg.deform, "label decision: soft or argmax")
      ->capture_default_str()
      ->check(CLI::IsMember({"soft", "argmax"}));
  c_rg->add_option("--crf-iters", rg.crf_iters, "override CRF iterations (-1 keeps checkpoint)")
      ->capture_default_str()
      ->check(CLI::Range(-1, kMaxCrfIterations));
  c_rg->add_option("--crf-weight", rg.crf_weight, "override CRF pairwise weight (-1 keeps checkpoint)")
      ->capture_default_str();
  c_rg->add_option("--manifest", rg.manifest, "run manifest path (default <out-field>.manifest.json)");

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "Similarity and distortion report for a deformation");
  c_ev->add_option("--field", ev.field, "SPHD deformation")->required();
  c_ev->add_option("--moving", ev.moving, "moving SPHS")->required();
  c_ev->add_option("--fixed", ev.fixed, "fixed SPHS")->required();
  c_ev->add_option("--out-dir", ev.out_dir, "directory for report.csv and triangles.csv")->required();
  c_ev->add_option("--manifest", ev.manifest, "run manifest path (default <out-dir>/eval_manifest.json)");

  ResampleArgs rs;
  auto* c_rs = app.add_subcommand("resample", "Move a signal to another icosphere level");
  c_rs->add_option("--in", rs.in, "input SPHS")->required();
  c_rs->add_option("--level", rs.level, "target level")->required()->check(CLI::Range(0, kMaxIcosphereLevel));
  c_rs->add_option("--out", rs.out, "output SPHS")->required();
  c_rs->add_option("--manifest", rs.manifest, "run manifest path");

  AlignArgs al;
  auto* c_al = app.add_subcommand("align", "Coarse rigid rotation search maximizing correlation");
  c_al->add_option("--moving", al.moving, "moving SPHS")->required();
  c_al->add_option("--fixed", al.fixed, "fixed SPHS")->required();
  c_al->add_option("--out", al.out, "rotated moving SPHS")->required();
  c_al->add_option("--axes", al.axes, "number of rotation axes")->capture_default_str()->check(CLI::PositiveNumber);
  c_al->add_option("--angles", al.angles, "angles per axis")->capture_default_str()->check(CLI::PositiveNumber);
  c_al->add_option("--manifest", al.manifest, "run manifest path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    (void)e;
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << SPHREG_VERSION << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (c_ico->parsed()) cmd_icosphere(ico, out);
    if (c_syn->parsed()) cmd_synth(syn, out);
    if (c_tr->parsed()) cmd_train(tr, out);
    if (c_rg->parsed()) cmd_register(rg, out);
    if (c_ev->parsed()) cmd_eval(ev, out);
    if (c_rs->parsed()) cmd_resample(rs, out);
    if (c_al->parsed()) cmd_align(al, out);
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << "\n";
    return kExitFormat;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const PathError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::out_of_range& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::runtime_error& e) {
    // File-system failures from the library (unreadable or unwritable paths).
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitOk;
}

}  // namespace sphreg::cli
