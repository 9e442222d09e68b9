#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cddm/experiment.hpp"

using namespace cddm;
namespace fs = std::filesystem;

namespace {

ExperimentConfig parse(const std::string& text, ConfigPurpose purpose = ConfigPurpose::Run) {
  std::istringstream in(text);
  return parse_config(in, "exp.cfg", purpose);
}

const char* kMinimal =
    "# comment\n"
    "dataset = tf1\n"
    "mode = both\n"
    "m_ddm = 30\n"
    "m_cddm = 12\n"
    "k_prime = 4\n"
    "trials = 3\n"
    "master_seed = 17\n"
    "n_train = 200\n"
    "n_test = 50\n";

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string drop_first_line(const std::string& s) { return s.substr(s.find('\n') + 1); }

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("cddm_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Config, ParsesKeysAndDefaults) {
  const auto cfg = parse(std::string(kMinimal) + "output_dir = out\n");
  EXPECT_EQ(cfg.dataset, "tf1");
  EXPECT_EQ(cfg.modes.size(), 2u);
  EXPECT_EQ(cfg.m_for(Mode::DDM), 30u);
  EXPECT_EQ(cfg.m_for(Mode::CDDM), 12u);
  EXPECT_EQ(cfg.theta0, -0.01);
  EXPECT_EQ(cfg.stall_limit, 50u);
  EXPECT_EQ(cfg.master_seed, 17u);
  EXPECT_TRUE(cfg.resplit);
  EXPECT_EQ(cfg.echo.size(), 10u);
  EXPECT_EQ(cfg.train_config(Mode::CDDM).k_prime(), 4u);
}

TEST(Config, SingleMAppliesToBothModes) {
  const auto cfg = parse(
      "dataset = tf2\nmode = cddm\nm = 7\nk_prime = 3\ntrials = 1\nmaster_seed = 1\noutput_dir = o\n"
      "stall_reset = acceptance-only\nk_prime_grid = 3, 5\n");
  EXPECT_EQ(cfg.m_for(Mode::CDDM), 7u);
  EXPECT_FALSE(cfg.reset_stall_on_halving);
  EXPECT_EQ(cfg.k_prime_grid, (std::vector<std::size_t>{3, 5}));
}

TEST(Config, UnknownKeyReportsLine) {
  try {
    parse(std::string(kMinimal) + "output_dir = o\nthetta0 = -0.1\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("exp.cfg:12"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("thetta0"), std::string::npos);
  }
}

TEST(Config, Errors) {
  const std::string base = std::string(kMinimal) + "output_dir = o\n";
  EXPECT_THROW(parse(kMinimal), ConfigError);                            // output_dir missing
  EXPECT_THROW(parse(base + "dataset = tf2\n"), ConfigError);            // duplicate
  EXPECT_THROW(parse(base + "theta0 = 0.5\n"), ConfigError);             // positive theta
  EXPECT_THROW(parse(base + "Q = abc\n"), ConfigError);                  // bad number
  EXPECT_THROW(parse(base + "no equals sign\n"), ConfigError);
  std::string zero = base;
  zero.replace(zero.find("trials = 3"), 10, "trials = 0");
  EXPECT_THROW(parse(zero), ConfigError);
  std::string badmode = base;
  badmode.replace(badmode.find("mode = both"), 11, "mode = fast");
  EXPECT_THROW(parse(badmode), ConfigError);
  EXPECT_THROW(parse("dataset = tf1\nmode = ddm\ntrials = 1\nk_prime = 3\nmaster_seed = 1\noutput_dir = o\n"),
               ConfigError);  // no m
  EXPECT_THROW(parse(base, ConfigPurpose::CrossValidate), ConfigError);  // mode both
}

TEST(Config, RelativePathsResolveAgainstConfigDirectory) {
  const auto dir = scratch_dir("cfgpath");
  {
    std::ofstream out(dir / "a.cfg");
    out << "dataset = data/x.dat\nmode = ddm\nm = 5\nk_prime = 3\ntrials = 1\nmaster_seed = 1\noutput_dir = res\n";
  }
  const auto cfg = load_config((dir / "a.cfg").string(), ConfigPurpose::Run);
  EXPECT_EQ(fs::path(cfg.dataset), dir / "data/x.dat");
  EXPECT_EQ(fs::path(cfg.output_dir), dir / "res");
  EXPECT_THROW(load_config((dir / "missing.cfg").string(), ConfigPurpose::Run), ConfigError);
  fs::remove_all(dir);
}

TEST(TrialData, FileDatasetsAreSplitAndScaledOnTrainOnly) {
  auto cfg = parse(std::string("dataset = ") + CDDM_SOURCE_DIR +
                   "/data/concrete.dat\nmode = ddm\nm = 5\nk_prime = 8\ntrials = 1\nmaster_seed = 2\noutput_dir = o\n");
  const auto loaded = load_experiment_dataset(cfg);
  const auto a = prepare_trial_data(cfg, loaded, 11);
  const auto b = prepare_trial_data(cfg, loaded, 12);
  EXPECT_EQ(a.train.size(), 773u);  // round-half-up of 0.75 * 1030
  EXPECT_EQ(a.test.size(), 257u);
  EXPECT_EQ(a.train.inputs().minCoeff(), 0.0);
  EXPECT_EQ(a.train.inputs().maxCoeff(), 1.0);
  EXPECT_EQ(a.train.targets().minCoeff(), 0.0);
  EXPECT_EQ(a.train.targets().maxCoeff(), 1.0);
  EXPECT_NE(a.train.inputs(), b.train.inputs());  // re-split per trial
  cfg.resplit = false;
  EXPECT_EQ(prepare_trial_data(cfg, loaded, 11).train.inputs(), prepare_trial_data(cfg, loaded, 12).train.inputs());
}

TEST(RunOutputs, ReRunIsByteIdenticalBelowTimestamp) {
  const auto dir = scratch_dir("rerun");
  auto cfg = parse(std::string(kMinimal) + "output_dir = o\n");
  const auto r1 = run_experiment(cfg);
  write_run_outputs(cfg, r1, dir / "a");
  cfg.threads = 3;
  const auto r2 = run_experiment(cfg);
  write_run_outputs(cfg, r2, dir / "b");
  std::size_t compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(dir / "a")) {
    if (entry.path().extension() != ".csv") continue;
    const auto rel = fs::relative(entry.path(), dir / "a");
    const auto a = read_file(entry.path());
    const auto b = read_file(dir / "b" / rel);
    EXPECT_EQ(a.rfind("# generated ", 0), 0u) << rel;
    EXPECT_NE(a.find("# master_seed = 17"), std::string::npos) << rel;
    EXPECT_EQ(a.find('\r'), std::string::npos);
    EXPECT_EQ(drop_first_line(a), drop_first_line(b)) << rel;
    ++compared;
  }
  EXPECT_GE(compared, 3u * 2 * 2 + 4);
  EXPECT_TRUE(fs::exists(dir / "a" / "summary.txt"));
  EXPECT_TRUE(fs::exists(dir / "a" / "trials" / "cddm_2.model"));
  const auto model = load_model((dir / "a" / "trials" / "cddm_0.model").string());
  EXPECT_EQ(model.size(), 12u);
  EXPECT_EQ(model.metadata.at("master_seed"), "17");
  fs::remove_all(dir);
}

TEST(RunOutputs, SummaryHasTableLayout) {
  auto cfg = parse(std::string(kMinimal) + "output_dir = o\n");
  std::ostringstream out;
  write_summary(cfg, run_experiment(cfg), out);
  const auto s = out.str();
  EXPECT_NE(s.find("D-DM"), std::string::npos);
  EXPECT_NE(s.find("CD-DM"), std::string::npos);
  EXPECT_NE(s.find(" ± "), std::string::npos);
  EXPECT_NE(s.find("m=12, k'=4, theta=-0.01, Q=50"), std::string::npos);
}

TEST(PlotData, ThetaConvergenceAndFitCurve) {
  const auto dir = scratch_dir("plot");
  auto cfg = parse(
      "dataset = tf1\nmode = both\nm_ddm = 60\nm_cddm = 60\nk_prime = 3\ntrials = 2\nmaster_seed = 5\n"
      "output_dir = o\n");
  write_run_outputs(cfg, run_experiment(cfg), dir);

  std::ostringstream theta;
  write_plotdata(dir, PlotKind::Theta, theta);
  std::istringstream tin(theta.str());
  std::string line;
  std::getline(tin, line);
  EXPECT_EQ(line, "candidate_index,theta,accepted_flag");
  double prev = -1.0;
  std::size_t rows = 0;
  while (std::getline(tin, line)) {
    const double th = std::stod(line.substr(line.find(',') + 1));
    EXPECT_LE(std::abs(th), std::abs(prev));  // stepwise non-increasing magnitude
    prev = th;
    ++rows;
  }
  EXPECT_GE(rows, 60u);

  std::ostringstream conv;
  write_plotdata(dir, PlotKind::Convergence, conv);
  EXPECT_EQ(conv.str().rfind("mode,node_count,train_median", 0), 0u);
  EXPECT_NE(conv.str().find("\nddm,60,"), std::string::npos);
  EXPECT_NE(conv.str().find("\ncddm,60,"), std::string::npos);

  std::ostringstream fit;
  write_plotdata(dir, PlotKind::FitCurve, fit, Mode::CDDM, 0);
  std::istringstream fin(fit.str());
  std::getline(fin, line);
  EXPECT_EQ(line.rfind("x,target,fitted,node_1,", 0), 0u);
  std::size_t points = 0;
  double sq = 0.0;
  while (std::getline(fin, line)) {
    std::vector<double> v;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) v.push_back(std::stod(cell));
    ASSERT_EQ(v.size(), 3u + 60u);
    double sum = 0.0;
    for (std::size_t j = 3; j < v.size(); ++j) sum += v[j];
    EXPECT_NEAR(sum, v[2], 1e-10 * std::max(1.0, std::abs(v[2])));
    sq += (v[2] - v[1]) * (v[2] - v[1]);
    ++points;
  }
  EXPECT_EQ(points, 300u);
  EXPECT_LE(std::sqrt(sq / 300.0), 0.001);
  fs::remove_all(dir);
}

TEST(PlotData, FitCurveRejectsMultiDimensionalModels) {
  NetworkModel model;
  model.normalizer = Normalizer::identity(2);
  model.beta = Vector(0);
  std::ostringstream out;
  EXPECT_THROW(write_fitcurve(model, "tf2", out), ConfigError);
  EXPECT_THROW(parse_plot_kind("histogram"), ConfigError);
}

TEST(CrossValConfig, SingleCellRunsAndWritesScores) {
  const auto dir = scratch_dir("cv");
  auto cfg = parse(
      "dataset = tf1\nmode = cddm\nmaster_seed = 3\noutput_dir = o\nn_train = 200\nn_test = 20\n"
      "k_prime_grid = 4\nm_grid = 10\nfolds = 4\n",
      ConfigPurpose::CrossValidate);
  const auto r = run_crossval(cfg);
  EXPECT_EQ(r.best_k_prime, 4u);
  EXPECT_EQ(r.best_m, 10u);
  write_crossval_outputs(cfg, r, dir);
  const auto text = read_file(dir / "cv_scores.csv");
  EXPECT_NE(text.find("k_prime,m,fold,rmse\n4,10,1,"), std::string::npos);
  const auto again = run_crossval(cfg);
  write_crossval_outputs(cfg, again, dir / "b");
  EXPECT_EQ(drop_first_line(text), drop_first_line(read_file(dir / "b" / "cv_scores.csv")));
  fs::remove_all(dir);
}
