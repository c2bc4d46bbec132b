// meflut command-line tool: fuse, train, extract-lut, eval, bench, synth.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "meflut/meflut.hpp"

namespace fs = std::filesystem;
using namespace meflut;

namespace {

enum Exit { kOk = 0, kOther = 1, kUsage = 2, kIo = 3, kData = 4 };

struct FusionFlags {
  std::string upsample = "gfu";
  int gfu_radius = 2;
  double gfu_eps = 1e-4;
  int pyramid_levels = 1;
  int target_min = 128;
  int threads = 1;

  FusionConfig config() const {
    FusionConfig cfg;
    cfg.upsample = upsample == "bilinear" ? Upsample::Bilinear : Upsample::Gfu;
    cfg.gfu_radius = gfu_radius;
    cfg.gfu_eps = gfu_eps;
    cfg.pyramid_levels = pyramid_levels;
    cfg.target_min = target_min;
    cfg.threads = threads;
    return cfg;
  }
};

void add_fusion_flags(CLI::App* cmd, FusionFlags& f) {
  cmd->add_option("--upsample", f.upsample, "weight upsampling: gfu or bilinear")
      ->check(CLI::IsMember({"gfu", "bilinear"}))
      ->capture_default_str();
  cmd->add_option("--gfu-radius", f.gfu_radius, "guided filter window radius")->capture_default_str();
  cmd->add_option("--gfu-eps", f.gfu_eps, "guided filter regularizer")->capture_default_str();
  cmd->add_option("--pyramid-levels", f.pyramid_levels, "1 = linear blend, >1 = Laplacian pyramid blend")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--target-min", f.target_min, "short side of the low-resolution working image")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--threads", f.threads, "upper bound on worker threads")->check(CLI::PositiveNumber)->capture_default_str();
}

// Which weights to use: a LUT file, a network checkpoint, or the classical baseline.
struct MethodFlags {
  std::string lut;
  std::string checkpoint;
  std::string method;

  void add(CLI::App* cmd) {
    auto* l = cmd->add_option("--lut", lut, "LUT file (MEFL)");
    auto* c = cmd->add_option("--checkpoint", checkpoint, "network checkpoint (MEFN)");
    cmd->add_option("--method", method, "lut, network or mertens (inferred from --lut / --checkpoint)")
        ->check(CLI::IsMember({"lut", "network", "mertens"}));
    l->excludes(c);
  }

  std::string resolve() const {
    std::string m = method;
    if (m.empty()) m = !lut.empty() ? "lut" : !checkpoint.empty() ? "network" : "";
    if (m.empty()) throw ConfigError("one of --lut, --checkpoint or --method mertens is required");
    if (m == "lut" && lut.empty()) throw ConfigError("--method lut needs --lut");
    if (m == "network" && checkpoint.empty()) throw ConfigError("--method network needs --checkpoint");
    if (m == "mertens" && (!lut.empty() || !checkpoint.empty())) {
      throw ConfigError("--method mertens takes no --lut or --checkpoint");
    }
    return m;
  }
};

struct Fuser {
  std::string method;
  std::optional<LutMatrix> lut;
  std::optional<NetworkParams> net;
  FusionConfig cfg;

  FuseResult operator()(const ExposureStack& st) const {
    if (method == "lut") return fuse_detailed(st, *lut, cfg);
    if (method == "network") return fuse_network_detailed(st, *net, cfg);
    MertensConfig mc;
    if (cfg.pyramid_levels > 1) mc.levels = cfg.pyramid_levels;
    return fuse_mertens_detailed(st, mc);
  }
};

Fuser make_fuser(const MethodFlags& m, const FusionFlags& f) {
  Fuser fu;
  fu.method = m.resolve();
  fu.cfg = f.config();
  fu.cfg.validate();
  if (fu.method == "lut") fu.lut = read_lut(m.lut);
  if (fu.method == "network") fu.net = read_checkpoint(m.checkpoint);
  return fu;
}

RawImage to_rgb(const YuvImage& img) { return RawImage{img.width(), img.height(), 3, yuv_image_to_rgb(img)}; }

// Sequence directories: `dir` itself if it holds a manifest, else its
// subdirectories that do, in name order.
std::vector<fs::path> sequence_dirs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  if (fs::exists(dir / kManifestName)) return {dir};
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory() && fs::exists(e.path() / kManifestName)) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw IoError("no sequence directories with " + std::string(kManifestName) + " under " + dir.string());
  return out;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// ---------------------------------------------------------------------------

struct FuseArgs {
  std::vector<std::string> inputs;
  std::vector<double> evs;
  std::string sequence;
  std::string out;
  std::string dump_weights;
  MethodFlags method;
  FusionFlags fusion;
};

int cmd_fuse(const FuseArgs& a, CLI::App* cmd) {
  if (a.inputs.empty() && a.sequence.empty()) {
    std::cerr << "error: give --inputs with --evs, or --sequence\n" << cmd->help();
    return kUsage;
  }
  const Fuser fuser = make_fuser(a.method, a.fusion);
  ExposureStack st;
  if (!a.sequence.empty()) {
    st = load_sequence_dir(a.sequence);
  } else {
    std::vector<fs::path> paths(a.inputs.begin(), a.inputs.end());
    st = load_sequence(paths, a.evs);
  }
  const FuseResult r = fuser(st);
  write_image(a.out, to_rgb(r.image));
  if (!a.dump_weights.empty()) {
    fs::create_directories(a.dump_weights);
    for (std::size_t k = 0; k < r.weights.k_frames(); ++k) {
      write_plane(fs::path(a.dump_weights) / ("weight" + std::to_string(k) + ".png"), quantize(r.weights.planes[k]));
    }
  }
  return kOk;
}

struct TrainArgs {
  std::string data;
  std::string out;
  std::string log;
  TrainConfig cfg;
};

int cmd_train(TrainArgs a) {
  std::vector<ExposureStack> dataset;
  for (const auto& d : sequence_dirs(a.data)) dataset.push_back(load_sequence_dir(d));
  const std::string log_path = a.log.empty() ? a.out + ".log" : a.log;
  std::ofstream log(log_path);
  if (!log) throw IoError("cannot write metrics log " + log_path);
  log << std::setprecision(9);
  const NetworkParams p = train(dataset, a.cfg, [&](int epoch, double loss) {
    log << epoch << '\t' << loss << '\n';
    std::cerr << "epoch " << epoch << "  loss " << loss << '\n';
  });
  write_checkpoint(p, a.out);
  return kOk;
}

struct ExtractArgs {
  std::string checkpoint;
  std::string out;
  int probe = 128;
  int threads = 1;
};

int cmd_extract(const ExtractArgs& a) {
  write_lut(extract_luts(read_checkpoint(a.checkpoint), a.probe, a.threads), a.out);
  return kOk;
}

struct EvalArgs {
  std::string data;
  std::string fused;
  std::string out;
  MethodFlags method;
  FusionFlags fusion;
};

int cmd_eval(const EvalArgs& a) {
  const auto dirs = sequence_dirs(a.data);
  EvalReport report;
  if (!a.fused.empty()) {
    if (dirs.size() != 1) throw ConfigError("--fused needs --data to be a single sequence directory");
    const ExposureStack st = load_sequence_dir(dirs[0]);
    const YuvImage fused = read_yuv(a.fused);
    std::optional<YuvImage> ref;
    if (fs::exists(dirs[0] / "reference.png")) ref = read_yuv(dirs[0] / "reference.png");
    report.add(evaluate(fused, ref ? &*ref : nullptr, st, fs::path(a.fused).stem().string()));
  } else {
    const Fuser fuser = make_fuser(a.method, a.fusion);
    for (const auto& d : dirs) {
      const ExposureStack st = load_sequence_dir(d);
      std::optional<YuvImage> ref;
      if (fs::exists(d / "reference.png")) ref = read_yuv(d / "reference.png");
      report.add(evaluate(fuser(st).image, ref ? &*ref : nullptr, st, d.filename().string()));
    }
  }
  if (a.out.empty()) {
    report.write_tsv(std::cout);
  } else {
    std::ofstream os(a.out);
    if (!os) throw IoError("cannot write " + a.out);
    report.write_tsv(os);
  }
  return kOk;
}

struct BenchArgs {
  std::string resolutions = "512";
  std::string paths = "lut,network,mertens";
  int repeat = 10;
  int threads = 1;
  int channels = 24;
  std::uint64_t seed = 1;
  std::string lut;
  std::string checkpoint;
  std::string out;
};

// Well-exposedness shaped table; timing does not depend on its values.
LutMatrix bench_lut(std::size_t k) {
  LutMatrix lut(k);
  for (std::size_t r = 0; r < k; ++r) {
    for (int v = 0; v < kLutSize; ++v) {
      const double d = v / 255.0 - 0.5;
      lut.at(r, v) = static_cast<float>(std::exp(-d * d / 0.08));
    }
  }
  return lut;
}

int cmd_bench(const BenchArgs& a) {
  if (a.repeat < kMinBenchRepeats) {
    throw ConfigError("--repeat must be at least " + std::to_string(kMinBenchRepeats));
  }
  std::vector<int> sizes;
  for (const auto& s : split_csv(a.resolutions)) {
    try {
      sizes.push_back(std::stoi(s));
    } catch (const std::exception&) {
      throw ConfigError("bad resolution '" + s + "'");
    }
    if (sizes.back() < 8) throw ConfigError("resolutions must be >= 8");
  }
  const auto paths = split_csv(a.paths);
  for (const auto& p : paths) {
    if (p != "lut" && p != "network" && p != "mertens") throw ConfigError("unknown bench path '" + p + "'");
  }
  const NetworkParams net = a.checkpoint.empty() ? init_params(3, a.channels, a.seed) : read_checkpoint(a.checkpoint);
  const LutMatrix lut = a.lut.empty() ? bench_lut(static_cast<std::size_t>(net.k_frames)) : read_lut(a.lut);

  std::vector<BenchResult> results;
  for (int size : sizes) {
    SceneConfig sc{size, size};
    if (lut.k_frames() != 3) {
      sc.evs.clear();
      for (std::size_t k = 0; k < lut.k_frames(); ++k) sc.evs.push_back(static_cast<double>(k) - (lut.k_frames() - 1) / 2.0);
    }
    const ExposureStack st = make_sequence(sc, a.seed).stack;
    FusionConfig gfu;
    gfu.threads = a.threads;
    FusionConfig bil = gfu;
    bil.upsample = Upsample::Bilinear;
    auto run = [&](const std::string& name, auto&& fn) {
      results.push_back(time_runs(name, size, a.repeat, a.threads, fn));
      std::cerr << name << " @" << size << ": " << results.back().median_ms << " ms\n";
    };
    for (const auto& p : paths) {
      if (p == "lut") {
        run("lut-gfu", [&] { fuse(st, lut, gfu); });
        run("lut-bilinear", [&] { fuse(st, lut, bil); });
        run("lut-fullres", [&] { fuse_full_resolution(st, lut, gfu); });
      } else if (p == "network") {
        run("network-gfu", [&] { fuse_network(st, net, gfu); });
        run("network-bilinear", [&] { fuse_network(st, net, bil); });
      } else {
        run("mertens", [&] { fuse_mertens(st); });
      }
    }
  }
  if (a.out.empty()) {
    write_bench_tsv(std::cout, results);
  } else {
    std::ofstream os(a.out);
    if (!os) throw IoError("cannot write " + a.out);
    write_bench_tsv(os, results);
  }
  return kOk;
}

struct SynthArgs {
  std::string out;
  int count = 8;
  int size = 64;
  std::vector<double> evs = {-2.0, 0.0, 2.0};
  std::uint64_t seed = 0;
};

int cmd_synth(const SynthArgs& a) {
  SceneConfig sc{a.size, a.size, a.evs};
  SplitMix64 rng(a.seed);
  for (int i = 0; i < a.count; ++i) {
    std::ostringstream name;
    name << "seq" << std::setw(3) << std::setfill('0') << i;
    write_synthetic_dir(fs::path(a.out) / name.str(), make_sequence(sc, rng.next()));
  }
  return kOk;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kUsage;
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e)) return kIo;
  if (dynamic_cast<const FormatError*>(&e) || dynamic_cast<const ShapeError*>(&e) ||
      dynamic_cast<const StackShapeError*>(&e) || dynamic_cast<const MetadataError*>(&e)) {
    return kData;
  }
  return kOther;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-exposure fusion with learned per-exposure lookup tables"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  FuseArgs fa;
  auto* fuse_cmd = app.add_subcommand("fuse", "fuse an exposure stack into one image");
  auto* inputs = fuse_cmd->add_option("--inputs", fa.inputs, "input frames (PNG / PPM / PGM)");
  auto* evs = fuse_cmd->add_option("--evs", fa.evs, "exposure value of each input, ascending")->delimiter(',');
  auto* seq = fuse_cmd->add_option("--sequence", fa.sequence, "sequence directory with manifest.tsv");
  inputs->needs(evs);
  evs->needs(inputs);
  seq->excludes(inputs);
  fuse_cmd->add_option("--out", fa.out, "output PNG")->required();
  fuse_cmd->add_option("--dump-weights", fa.dump_weights, "directory for the full-resolution weight maps");
  fa.method.add(fuse_cmd);
  add_fusion_flags(fuse_cmd, fa.fusion);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "train the weight network on sequence directories");
  train_cmd->add_option("--data", ta.data, "directory of sequence subdirectories")->required();
  train_cmd->add_option("--out-checkpoint", ta.out, "checkpoint to write (MEFN)")->required();
  train_cmd->add_option("--metrics-log", ta.log, "per-epoch loss log (default: <checkpoint>.log)");
  train_cmd->add_option("--epochs", ta.cfg.epochs)->check(CLI::NonNegativeNumber)->capture_default_str();
  train_cmd->add_option("--lr", ta.cfg.learning_rate)->capture_default_str();
  train_cmd->add_option("--seed", ta.cfg.seed)->capture_default_str();
  train_cmd->add_option("--channels", ta.cfg.channels)->capture_default_str();
  train_cmd->add_option("--batch", ta.cfg.batch)->capture_default_str();
  train_cmd->add_option("--window", ta.cfg.window, "MEF-SSIM window")->capture_default_str();
  train_cmd->add_option("--target-min", ta.cfg.target_min, "short side of the training resolution")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train_cmd->add_option("--threads", ta.cfg.threads)->check(CLI::PositiveNumber)->capture_default_str();

  ExtractArgs xa;
  auto* extract_cmd = app.add_subcommand("extract-lut", "probe a checkpoint and write its lookup tables");
  extract_cmd->add_option("--checkpoint", xa.checkpoint)->required();
  extract_cmd->add_option("--out", xa.out, "LUT file to write (MEFL)")->required();
  extract_cmd->add_option("--probe", xa.probe, "probe image side")->check(CLI::PositiveNumber)->capture_default_str();
  extract_cmd->add_option("--threads", xa.threads)->check(CLI::PositiveNumber)->capture_default_str();

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "PSNR / SSIM / MEF-SSIM report over sequence directories");
  eval_cmd->add_option("--data", ea.data, "sequence directory or directory of them")->required();
  eval_cmd->add_option("--fused", ea.fused, "evaluate this image instead of fusing");
  eval_cmd->add_option("--out", ea.out, "report TSV (default: stdout)");
  ea.method.add(eval_cmd);
  add_fusion_flags(eval_cmd, ea.fusion);

  BenchArgs ba;
  auto* bench_cmd = app.add_subcommand("bench", "time the LUT, network and baseline fusion paths");
  bench_cmd->add_option("--resolutions", ba.resolutions, "comma-separated square sizes")->capture_default_str();
  bench_cmd->add_option("--repeat", ba.repeat, "timed repetitions (>= 5)")->capture_default_str();
  bench_cmd->add_option("--paths", ba.paths, "comma-separated subset of lut,network,mertens")->capture_default_str();
  bench_cmd->add_option("--threads", ba.threads)->check(CLI::PositiveNumber)->capture_default_str();
  bench_cmd->add_option("--channels", ba.channels, "network width when no checkpoint is given")->capture_default_str();
  bench_cmd->add_option("--seed", ba.seed)->capture_default_str();
  bench_cmd->add_option("--lut", ba.lut);
  bench_cmd->add_option("--checkpoint", ba.checkpoint);
  bench_cmd->add_option("--out", ba.out, "results TSV (default: stdout)");

  SynthArgs sa;
  auto* synth_cmd = app.add_subcommand("synth", "write synthetic exposure sequences");
  synth_cmd->add_option("--out", sa.out)->required();
  synth_cmd->add_option("--count", sa.count)->check(CLI::PositiveNumber)->capture_default_str();
  synth_cmd->add_option("--size", sa.size)->check(CLI::PositiveNumber)->capture_default_str();
  synth_cmd->add_option("--evs", sa.evs)->delimiter(',');
  synth_cmd->add_option("--seed", sa.seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*fuse_cmd) return cmd_fuse(fa, fuse_cmd);
    if (*train_cmd) return cmd_train(ta);
    if (*extract_cmd) return cmd_extract(xa);
    if (*eval_cmd) return cmd_eval(ea);
    if (*bench_cmd) return cmd_bench(ba);
    if (*synth_cmd) return cmd_synth(sa);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kOther;
}
