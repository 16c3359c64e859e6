#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "act/cli.hpp"
#include "act/errors.hpp"
#include "act/png_io.hpp"
#include "act/trainer.hpp"

using namespace act;
namespace fs = std::filesystem;

namespace {

std::string scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("act_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result act_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "act");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string tiny_config(const std::string& dir, const std::string& extra = "") {
  std::ostringstream os;
  os << "# toy\n"
     << "training_iterations = 3\nbatch_size = 8\ns1 = 10\ndataset_size = 256\n"
     << "gen_widths = 8,8\ndisc_widths = 8,8\ngen_time_embed_dim = 4\ndisc_time_embed_dim = 4\n"
     << "lambda = 0.3\nI_gp = 2\noutput_dir = " << dir << "\n"
     << extra;
  const auto path = dir + "/run.cfg";
  std::ofstream(path) << os.str();
  return path;
}

int count_lines(const std::string& path) {
  std::ifstream in(path);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) ++n;
  return n;
}

}  // namespace

TEST(Config, RoundTrip) {
  RunConfig c;
  c.learning_rate = 3.3e-4;
  c.lambda_const = 0.25;
  c.aug = true;
  c.aug_ops = {"flip", "cutout"};
  c.data.kind = DatasetKind::SwissRoll;
  c.gen.widths = {32, 64, 32};
  c.disc.activation = Activation::LeakyReLU;
  c.sched.w_mid = 0.1;
  c.seed = 12;
  c.training_iterations = 777;
  const auto text = c.serialize();
  auto back = RunConfig::parse(text);
  EXPECT_EQ(back.serialize(), text);
  EXPECT_EQ(RunConfig::parse(back.serialize()).serialize(), text);
  EXPECT_EQ(back.sched.K, 777);
}

TEST(Config, EveryScheduleKeyAccepted) {
  for (const char* key : {"learning_rate", "batch_size", "mu0", "s0", "s1", "w_mid", "w", "I_gp", "w_gp", "tau",
                          "mu_p", "p_r", "training_iterations"}) {
    const auto& keys = RunConfig::keys();
    EXPECT_NE(std::find(keys.begin(), keys.end(), key), keys.end()) << key;
  }
}

TEST(Config, UnknownAndDuplicateKeys) {
  try {
    RunConfig::parse("learning_rat = 1e-3\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "learning_rat");
  }
  try {
    RunConfig::parse("s0 = 2\ns0 = 3\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "s0");
  }
  try {
    RunConfig::parse("lambda = 1.5\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "lambda");
  }
}

TEST(Cli, InvalidKeyExitsTwo) {
  auto dir = scratch("badkey");
  auto cfg = tiny_config(dir, "w_gpp = 3\n");
  auto r = act_cli({"train", "--config", cfg});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("key=w_gpp"), std::string::npos) << r.err;
  EXPECT_EQ(r.err.find('\n'), r.err.size() - 1);
}

TEST(Cli, UsageErrorsAreOneLine) {
  auto r = act_cli({"frobnicate"});
  EXPECT_NE(r.code, 0);
  EXPECT_EQ(r.err.rfind("error code=", 0), 0u);
  auto h = act_cli({"--help"});
  EXPECT_EQ(h.code, 0);
  EXPECT_NE(h.out.find("bound-check"), std::string::npos);
}

TEST(Cli, TrainOneStep) {
  auto dir = scratch("one");
  auto cfg = tiny_config(dir);
  {
    std::string text;
    std::ifstream in(cfg);
    std::getline(in, text, '\0');
    text.replace(text.find("training_iterations = 3"), 23, "training_iterations = 1");
    std::ofstream(cfg) << text;
  }
  auto r = act_cli({"train", "--config", cfg});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_lines(dir + "/metrics.csv"), 2);
  int ckpts = 0;
  for (const auto& e : fs::directory_iterator(dir)) ckpts += e.path().extension() == ".ckpt";
  EXPECT_EQ(ckpts, 1);
}

TEST(Cli, EndToEndPointModel) {
  auto dir = scratch("e2e");
  auto cfg = tiny_config(dir);
  ASSERT_EQ(act_cli({"train", "--config", cfg}).code, 0);
  const auto ckpt = dir + "/ckpt_k00000003.ckpt";
  ASSERT_TRUE(fs::exists(ckpt));

  auto resumed = act_cli({"resume", "--checkpoint", ckpt, "--steps", "2"});
  ASSERT_EQ(resumed.code, 0) << resumed.err;
  EXPECT_TRUE(fs::exists(dir + "/ckpt_k00000005.ckpt"));
  EXPECT_EQ(count_lines(dir + "/metrics.csv"), 6);

  auto s = act_cli({"sample", "--checkpoint", ckpt, "--count", "16", "--seed", "3"});
  ASSERT_EQ(s.code, 0) << s.err;
  EXPECT_EQ(count_lines(dir + "/samples_k3_seed3_steps1.csv"), 17);
  EXPECT_TRUE(fs::exists(dir + "/samples_k3_seed3_steps1.svg"));
  // Second identical call writes a new file rather than overwriting.
  ASSERT_EQ(act_cli({"sample", "--checkpoint", ckpt, "--count", "16", "--seed", "3"}).code, 0);
  EXPECT_TRUE(fs::exists(dir + "/samples_k3_seed3_steps1.r1.csv"));

  auto e = act_cli({"eval", "--checkpoint", ckpt, "--count", "64", "--params", "ema"});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_EQ(count_lines(dir + "/eval.csv"), 2);
  EXPECT_TRUE(fs::exists(dir + "/plots/training_curves.svg"));

  auto b = act_cli({"bound-check", "--checkpoint", ckpt, "--points", "4", "--samples", "64"});
  ASSERT_EQ(b.code, 0) << b.err;
  // comment + header + one row per audited time
  EXPECT_EQ(count_lines(dir + "/bound_check_k3.csv"), 2 + 4);

  EXPECT_NE(act_cli({"inpaint", "--checkpoint", ckpt, "--reference", "x.png", "--mask", "m.png"}).code, 0);
  EXPECT_NE(act_cli({"sample", "--checkpoint", dir + "/missing.ckpt"}).code, 0);
}

TEST(Cli, ModeCheckWritesTable) {
  auto dir = scratch("mode");
  auto cfg = tiny_config(dir);
  auto r = act_cli({"mode-check", "--config", cfg, "--lambdas", "0.3,0.99", "--seeds", "2", "--count", "64"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_lines(dir + "/mode_check.csv"), 1 + 4);
  EXPECT_NE(r.out.find("p(0.3>0.99)="), std::string::npos);
}

TEST(Cli, InpaintImageModel) {
  auto dir = scratch("inpaint");
  auto imgs = dir + "/imgs";
  fs::create_directories(imgs);
  RgbImage img;
  img.width = img.height = 8;
  img.pixels.assign(8 * 8 * 3, 0);
  for (int i = 0; i < 4; ++i) {
    for (std::size_t p = 0; p < img.pixels.size(); ++p) img.pixels[p] = static_cast<std::uint8_t>((p * 13 + i * 50) % 256);
    write_png_rgb(imgs + "/" + std::to_string(i) + ".png", img);
  }
  RgbImage mask = img;
  for (std::size_t p = 0; p < mask.pixels.size(); ++p) mask.pixels[p] = (p / 3) % 8 < 4 ? 255 : 0;
  write_png_rgb(dir + "/mask.png", mask);
  auto cfg = tiny_config(dir, "dataset = image_folder\ndata_path = " + imgs +
                                  "\ngen_backbone = unet-small\ndisc_backbone = unet-small\n"
                                  "gen_layers_per_block = 1\ndisc_layers_per_block = 1\n");
  auto t = act_cli({"train", "--config", cfg});
  ASSERT_EQ(t.code, 0) << t.err;
  const auto ckpt = dir + "/ckpt_k00000003.ckpt";
  auto r = act_cli({"inpaint", "--checkpoint", ckpt, "--reference", imgs + "/0.png", "--mask", dir + "/mask.png",
                    "--refine-steps", "2", "--seed", "5"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto out = read_png_rgb(dir + "/inpaint_seed5.png");
  auto ref = read_png_rgb(imgs + "/0.png");
  for (std::size_t p = 0; p < out.pixels.size(); ++p)
    if (mask.pixels[p] == 255) ASSERT_EQ(out.pixels[p], ref.pixels[p]) << p;
  auto s = act_cli({"sample", "--checkpoint", ckpt, "--count", "4"});
  ASSERT_EQ(s.code, 0) << s.err;
  EXPECT_TRUE(fs::exists(dir + "/samples_k3_seed0_steps1.png"));
}

TEST(AuditIndices, EvenlySpacedWithEndpoints) {
  auto idx = audit_indices(21, 5);
  EXPECT_EQ(idx, (std::vector<std::int64_t>{0, 5, 10, 15, 20}));
  EXPECT_EQ(audit_indices(3, 10), (std::vector<std::int64_t>{0, 1, 2}));
}
