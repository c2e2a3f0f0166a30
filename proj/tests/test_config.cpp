#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "lrd/config.hpp"
#include "lrd/error.hpp"
#include "lrd/experiments.hpp"

using namespace lrd;
namespace fs = std::filesystem;

TEST(Config, DefaultsMatchReferenceSetup) {
  const config::ExperimentConfig c;
  EXPECT_EQ(c.student.batch, 64);
  EXPECT_EQ(c.student.lr, 1e-4);
  EXPECT_EQ(c.student.finetune_lr, 1e-5);
  EXPECT_EQ(c.student.dropout, 0.1);
  EXPECT_EQ(c.student.sigma.sigma_min, 0.002);
  EXPECT_EQ(c.student.sigma.sigma_max, 200.0);
  EXPECT_EQ(c.sampler.num_steps, 18);
  EXPECT_EQ(c.sampler.ensemble_size, 32);
  EXPECT_EQ(c.sampler.guidance, 1.0);
  EXPECT_EQ(c.train_frac, 0.75);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, ParsesOverrides) {
  const auto c = config::parse_config(
      "; comment\n[experiment]\nid = demo\nseed = 9\nlead = seasonal\n"
      "[student]\nwidth = 16\nlr = 3e-4\n[calibrate]\nweights = 0, 1.5\n[qr]\ncurriculum = true\n");
  EXPECT_EQ(c.id, "demo");
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.lead, targets::LeadLabel::kSeasonal);
  EXPECT_EQ(c.student.width, 16);
  EXPECT_EQ(c.student.lr, 3e-4);
  EXPECT_EQ(c.calibrate.weights, (std::vector<double>{0.0, 1.5}));
  EXPECT_TRUE(c.qr.curriculum);
  EXPECT_EQ(c.student.depth, 6);
}

TEST(Config, RejectsMalformedInput) {
  EXPECT_THROW(config::parse_config("[experiment]\nbogus = 1\n"), ConfigError);
  EXPECT_THROW(config::parse_config("[nowhere]\nx = 1\n"), ConfigError);
  EXPECT_THROW(config::parse_config("[student]\nwidth = wide\n"), ConfigError);
  EXPECT_THROW(config::parse_config("[experiment]\nlead = weekly\n"), ConfigError);
  EXPECT_THROW(config::load_config("/nonexistent/lrd.ini"), MissingInputError);
}

TEST(Config, ShippedConfigsLoad) {
  for (const char* name : {"default.ini", "smoke.ini", "acceptance.ini"}) {
    const auto c = config::load_config(fs::path(LRD_SOURCE_DIR) / "configs" / name);
    EXPECT_NO_THROW(c.validate()) << name;
  }
}

TEST(Config, GitBlobHash) {
  EXPECT_EQ(config::git_blob_sha1(""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  EXPECT_EQ(config::git_blob_sha1("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST(Config, HashIgnoresLocationAndWorkers) {
  config::ExperimentConfig a;
  auto b = a;
  b.out_dir = "elsewhere";
  b.data_dir = "other";
  b.workers = 3;
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_NE(a.canonical(), b.canonical());
  b.seed = 2;
  EXPECT_NE(a.hash(), b.hash());
  auto c = a;
  c.sampler.guidance = 0.75;
  EXPECT_NE(a.hash(), c.hash());
}

TEST(Config, CanonicalRoundTrips) {
  auto c = config::parse_config("[experiment]\nseed = 5\n[student]\ndropout = 0.2\n[scaling]\nyears = 1, 3\n");
  // canonical lines are section.key = value; rebuild an INI from them
  std::istringstream in(c.canonical());
  std::string line, ini, section;
  while (std::getline(in, line)) {
    const auto dot = line.find('.');
    const auto eq = line.find(" = ");
    const auto s = line.substr(0, dot);
    if (s != section) ini += "[" + (section = s) + "]\n";
    ini += line.substr(dot + 1, eq - dot - 1) + " = " + line.substr(eq + 3) + "\n";
  }
  EXPECT_EQ(config::parse_config(ini).hash(), c.hash());
}

TEST(Experiments, StreamSeedsAreDistinct) {
  std::set<std::uint64_t> seen;
  for (auto s : {exp::Stream::kGeneration, exp::Stream::kNature, exp::Stream::kTrain, exp::Stream::kCalibrate,
                 exp::Stream::kTuning, exp::Stream::kInitialConditions, exp::Stream::kTeacherMembers,
                 exp::Stream::kStudentEnsemble, exp::Stream::kBootstrap, exp::Stream::kScaling,
                 exp::Stream::kRealWorld, exp::Stream::kFinetune, exp::Stream::kReforecast, exp::Stream::kQr})
    for (std::uint64_t sub = 0; sub < 4; ++sub) seen.insert(exp::stream_seed(1, s, sub));
  EXPECT_EQ(seen.size(), 14u * 4u);
  EXPECT_EQ(exp::stream_seed(1, exp::Stream::kQr), exp::stream_seed(1, exp::Stream::kQr));
  EXPECT_NE(exp::stream_seed(1, exp::Stream::kQr), exp::stream_seed(2, exp::Stream::kQr));
}

TEST(Experiments, NumberFormatRoundTrips) {
  for (double v : {0.0, 0.1, 1.0 / 3.0, -2.5e-17, 1e300, 12345678.0}) {
    EXPECT_EQ(std::stod(exp::format_number(v)), v) << exp::format_number(v);
  }
  EXPECT_EQ(exp::format_number(0.25), "0.25");
}

TEST(Experiments, CsvCarriesProvenance) {
  const auto path = fs::temp_directory_path() / "lrd_test_rows.csv";
  {
    exp::CsvWriter csv(path, {"demo", "abc123", 7}, {"lead", "rmse"});
    csv << "s2s" << 0.5;
    csv.end_row();
  }
  std::ifstream in(path);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "experiment,config_hash,seed,lead,rmse");
  EXPECT_EQ(row, "demo,abc123,7,s2s,0.5");
  fs::remove(path);
}

TEST(Experiments, CaseFramesSpacingAndFit) {
  datagen::Trajectory t;
  t.K = 2;
  t.frames.assign(200 * 2, 0.0f);
  t.stable_up_to = 200;
  const auto lead = targets::LeadSpec::medium();
  const auto cases = exp::case_frames(t, lead, 4, 5, 10);
  ASSERT_EQ(cases.size(), 10u);
  for (std::size_t i = 0; i < cases.size(); ++i) EXPECT_EQ(cases[i], 3 + 5 * i);
  EXPECT_THROW(exp::case_frames(t, lead, 4, 50, 10), ConfigError);
}

TEST(Experiments, ReportWithoutStagesIsMissingInput) {
  const auto dir = fs::temp_directory_path() / "lrd_test_empty_out";
  fs::remove_all(dir);
  fs::create_directories(dir);
  EXPECT_THROW(exp::cmd_report(dir), MissingInputError);
  fs::remove_all(dir);
}
