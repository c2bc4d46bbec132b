#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "meflut/meflut.hpp"
#include "test_util.hpp"

using namespace meflut;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string output;
};

CliRun run_cli(const std::string& args, const fs::path& dir) {
  const fs::path log = dir / "cli_output.txt";
  const std::string cmd = "cd '" + dir.string() + "' && '" MEFLUT_CLI_PATH "' " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.output = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_tsv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, '\t')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

std::string fixed6(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << v;
  return os.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    ASSERT_EQ(run_cli("synth --out data --count 2 --size 32 --seed 5", dir.path()).code, 0);
    SplitMix64 rng(9);
    write_lut(testutil::random_lut(3, rng), dir / "t.mefl");
  }
  testutil::TempDir dir;
};

}  // namespace

TEST_F(Cli, SynthWritesSequences) {
  for (const char* s : {"seq000", "seq001"}) {
    EXPECT_TRUE(fs::exists(dir / "data" / s / "manifest.tsv"));
    EXPECT_TRUE(fs::exists(dir / "data" / s / "reference.png"));
    EXPECT_EQ(load_sequence_dir(dir / "data" / s).k(), 3u);
  }
}

TEST_F(Cli, FuseWithLutMatchesLibrary) {
  const CliRun r = run_cli(
      "fuse --inputs data/seq000/frame0.png data/seq000/frame1.png data/seq000/frame2.png --evs=-2,0,2 "
      "--lut t.mefl --out fused.png --target-min 16 --dump-weights w",
      dir.path());
  ASSERT_EQ(r.code, 0) << r.output;
  const ExposureStack st = load_sequence_dir(dir / "data" / "seq000");
  FusionConfig cfg;
  cfg.target_min = 16;
  const FuseResult expected = fuse_detailed(st, read_lut(dir / "t.mefl"), cfg);
  const RawImage got = read_image(dir / "fused.png");
  EXPECT_EQ(got.pixels, yuv_image_to_rgb(expected.image));
  for (int k = 0; k < 3; ++k) {
    const RawImage w = read_image(dir / "w" / ("weight" + std::to_string(k) + ".png"));
    EXPECT_EQ(w.channels, 1);
    EXPECT_EQ(w.pixels, quantize(expected.weights.planes[k]).data());
  }
}

TEST_F(Cli, FuseMethods) {
  EXPECT_EQ(run_cli("fuse --sequence data/seq001 --method mertens --out m.png", dir.path()).code, 0);
  EXPECT_TRUE(fs::exists(dir / "m.png"));
  write_checkpoint(init_params(3, 4, 1), dir / "n.mefn");
  EXPECT_EQ(run_cli("fuse --sequence data/seq001 --checkpoint n.mefn --upsample bilinear --out n.png", dir.path()).code,
            0);
  EXPECT_EQ(run_cli("fuse --sequence data/seq001 --lut t.mefl --pyramid-levels 3 --out p.png", dir.path()).code, 0);
}

TEST_F(Cli, FuseSixInputsWithThreeRowLut) {
  ASSERT_EQ(run_cli("synth --out six --count 1 --size 24 --evs=-3,-2,-1,0,1,2", dir.path()).code, 0);
  const CliRun r = run_cli("fuse --sequence six/seq000 --lut t.mefl --out six.png", dir.path());
  ASSERT_EQ(r.code, 0) << r.output;
  const ExposureStack st = load_sequence_dir(dir / "six" / "seq000");
  EXPECT_EQ(read_image(dir / "six.png").pixels, yuv_image_to_rgb(fuse(st, read_lut(dir / "t.mefl"))));
}

TEST_F(Cli, ArgumentErrorsExitTwo) {
  const CliRun missing = run_cli("fuse --inputs data/seq000/frame0.png --lut t.mefl --out x.png", dir.path());
  EXPECT_EQ(missing.code, 2);
  EXPECT_NE(missing.output.find("Usage"), std::string::npos);
  EXPECT_EQ(run_cli("fuse --sequence data/seq000 --out x.png", dir.path()).code, 2);
  EXPECT_EQ(run_cli("fuse --sequence data/seq000 --lut t.mefl", dir.path()).code, 2);
  EXPECT_EQ(run_cli("fuse --sequence data/seq000 --lut t.mefl --upsample cubic --out x.png", dir.path()).code, 2);
  EXPECT_EQ(run_cli("fuse --sequence data/seq000 --lut t.mefl --gfu-radius 0 --out x.png", dir.path()).code, 2);
  EXPECT_EQ(run_cli("frobnicate", dir.path()).code, 2);
  EXPECT_EQ(run_cli("", dir.path()).code, 2);
  EXPECT_EQ(run_cli("--help", dir.path()).code, 0);
}

TEST_F(Cli, IoAndFormatErrors) {
  EXPECT_EQ(run_cli("fuse --sequence nowhere --lut t.mefl --out x.png", dir.path()).code, 3);
  EXPECT_EQ(run_cli("fuse --sequence data/seq000 --lut missing.mefl --out x.png", dir.path()).code, 3);
  std::ofstream(dir / "junk.mefl") << "definitely not a table";
  EXPECT_EQ(run_cli("fuse --sequence data/seq000 --lut junk.mefl --out x.png", dir.path()).code, 4);
  EXPECT_EQ(run_cli("fuse --inputs data/seq000/frame0.png data/seq000/frame1.png --evs=1,0 --lut t.mefl --out x.png",
                    dir.path())
                .code,
            4);
  EXPECT_EQ(run_cli("fuse --inputs data/seq000/frame0.png data/seq000/frame1.png --evs=0 --lut t.mefl --out x.png",
                    dir.path())
                .code,
            4);
  ASSERT_EQ(run_cli("synth --out other --count 1 --size 20", dir.path()).code, 0);
  EXPECT_EQ(run_cli("fuse --inputs data/seq000/frame0.png other/seq000/frame1.png --evs=0,1 --lut t.mefl --out x.png",
                    dir.path())
                .code,
            4);
}

TEST_F(Cli, TrainIsDeterministicAndLogsEpochs) {
  const std::string common = "train --data data --epochs 2 --channels 4 --target-min 16 --lr 1e-3 --seed 11 ";
  ASSERT_EQ(run_cli(common + "--out-checkpoint a.mefn", dir.path()).code, 0);
  ASSERT_EQ(run_cli(common + "--out-checkpoint b.mefn --metrics-log b.tsv", dir.path()).code, 0);
  EXPECT_EQ(slurp(dir / "a.mefn"), slurp(dir / "b.mefn"));
  const auto log = read_tsv(dir / "a.mefn.log");
  ASSERT_EQ(log.size(), 2u);
  EXPECT_EQ(log[0][0], "1");
  EXPECT_EQ(log[1][0], "2");
  EXPECT_EQ(log[0].size(), 2u);
  EXPECT_GT(std::stod(log[0][1]), 0.0);
  EXPECT_EQ(slurp(dir / "a.mefn.log"), slurp(dir / "b.tsv"));
}

TEST_F(Cli, TrainZeroEpochsWritesInitialization) {
  ASSERT_EQ(run_cli("train --data data --epochs 0 --channels 8 --seed 4 --out-checkpoint z.mefn", dir.path()).code, 0);
  SplitMix64 rng(4);
  const auto expected = encode_checkpoint(init_params(3, 8, rng.next()));
  EXPECT_EQ(slurp(dir / "z.mefn"), std::string(expected.begin(), expected.end()));
  EXPECT_EQ(run_cli("train --data data --epochs 0 --channels 6 --out-checkpoint z.mefn", dir.path()).code, 2);
  EXPECT_EQ(run_cli("train --data nowhere --out-checkpoint z.mefn", dir.path()).code, 3);
}

TEST_F(Cli, ExtractLutMatchesLibrary) {
  const NetworkParams p = init_params(3, 4, 2);
  write_checkpoint(p, dir / "n.mefn");
  ASSERT_EQ(run_cli("extract-lut --checkpoint n.mefn --out n.mefl --probe 12", dir.path()).code, 0);
  EXPECT_EQ(read_lut(dir / "n.mefl"), extract_luts(read_checkpoint(dir / "n.mefn"), 12));
}

TEST_F(Cli, EvalMatchesDirectCalls) {
  const CliRun r = run_cli("eval --data data --lut t.mefl --out report.tsv", dir.path());
  ASSERT_EQ(r.code, 0) << r.output;
  const auto rows = read_tsv(dir / "report.tsv");
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"name", "psnr_db", "ssim", "mef_ssim"}));
  const LutMatrix lut = read_lut(dir / "t.mefl");
  for (int i = 0; i < 2; ++i) {
    const std::string name = i == 0 ? "seq000" : "seq001";
    const ExposureStack st = load_sequence_dir(dir / "data" / name);
    const YuvImage ref = read_yuv(dir / "data" / name / "reference.png");
    const EvalRow row = evaluate(fuse(st, lut), &ref, st, name);
    EXPECT_EQ(rows[i + 1],
              (std::vector<std::string>{name, fixed6(*row.psnr_db), fixed6(*row.ssim), fixed6(row.mef_ssim)}));
  }
  EXPECT_EQ(rows[3][0], "mean");
}

TEST_F(Cli, EvalExistingImage) {
  ASSERT_EQ(run_cli("fuse --sequence data/seq000 --method mertens --out m.png", dir.path()).code, 0);
  const CliRun r = run_cli("eval --data data/seq000 --fused m.png", dir.path());
  ASSERT_EQ(r.code, 0) << r.output;
  const ExposureStack st = load_sequence_dir(dir / "data" / "seq000");
  const YuvImage ref = read_yuv(dir / "data" / "seq000" / "reference.png");
  const EvalRow row = evaluate(read_yuv(dir / "m.png"), &ref, st);
  EXPECT_NE(r.output.find("m\t" + fixed6(*row.psnr_db)), std::string::npos) << r.output;
  EXPECT_EQ(run_cli("eval --data data --fused m.png", dir.path()).code, 2);
}

TEST_F(Cli, BenchRequiresFiveRepeats) {
  EXPECT_EQ(run_cli("bench --resolutions 32 --repeat 1", dir.path()).code, 2);
  EXPECT_EQ(run_cli("bench --resolutions 32 --repeat 5 --paths lut,gpu", dir.path()).code, 2);
}

TEST_F(Cli, BenchLutFasterThanNetwork) {
  const CliRun r = run_cli("bench --resolutions 64 --repeat 5 --channels 8 --out bench.tsv", dir.path());
  ASSERT_EQ(r.code, 0) << r.output;
  const auto rows = read_tsv(dir / "bench.tsv");
  ASSERT_EQ(rows.size(), 7u);
  EXPECT_EQ(rows[0][0], "method");
  std::map<std::string, double> median;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i][1], "64");
    EXPECT_EQ(rows[i][5], "5");
    median[rows[i][0]] = std::stod(rows[i][2]);
  }
  for (const char* m : {"lut-gfu", "lut-bilinear", "lut-fullres", "network-gfu", "network-bilinear", "mertens"}) {
    EXPECT_TRUE(median.count(m)) << m;
  }
  EXPECT_LT(median["lut-gfu"], median["network-gfu"]);
  EXPECT_LT(median["lut-bilinear"], median["network-bilinear"]);
}
