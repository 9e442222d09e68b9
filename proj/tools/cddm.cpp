// Command-line front end: run, train, predict, crossval, plotdata.

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "cddm/cddm.hpp"

namespace {

enum Exit { kOk = 0, kUserError = 1, kDataError = 2, kNumericalError = 3, kPartial = 4 };

struct TrainArgs {
  std::string data;
  std::string synthetic;
  std::string mode = "cddm";
  std::size_t m = 0;
  std::size_t k_prime = 0;
  double theta0 = -0.01;
  std::size_t stall_limit = 50;
  std::uint64_t seed = 0;
  std::string out;
  bool naive_pinv = false;
  bool allow_small_k = false;
  bool literal_stall = false;
  std::size_t max_candidates = 0;
  std::optional<std::size_t> n_train;
  std::optional<std::size_t> n_test;
  double noise = 0.2;
  double train_fraction = 0.75;
  std::string export_test;
};

struct PredictArgs {
  std::string model;
  std::string input;
  std::string output;
  bool denormalize = false;
  bool raw_inputs = false;
};

struct PlotArgs {
  std::string records;
  std::string kind;
  std::string mode = "cddm";
  std::size_t trial = 0;
  std::string output;
};

int cmd_run(const std::string& config_path) {
  const auto cfg = cddm::load_config(config_path, cddm::ConfigPurpose::Run);
  const auto result = cddm::run_experiment(cfg);
  cddm::write_run_outputs(cfg, result, cfg.output_dir);
  cddm::write_summary(cfg, result, std::cout);

  std::size_t failed = 0, partial = 0, total = 0;
  for (const auto& mr : result.modes) {
    for (const auto& o : mr.outcomes) {
      ++total;
      if (!o.result) {
        ++failed;
        std::cerr << "trial " << o.trial << " (" << cddm::to_string(mr.mode) << ") failed: " << o.error << '\n';
      } else if (o.partial) {
        ++partial;
        std::cerr << "trial " << o.trial << " (" << cddm::to_string(mr.mode) << ") partial: " << o.error << '\n';
      }
    }
  }
  if (failed == total) return kNumericalError;
  return failed + partial > 0 ? kPartial : kOk;
}

int cmd_train(const TrainArgs& a) {
  if (a.data.empty() == a.synthetic.empty()) throw cddm::ConfigError("give exactly one of --data or --synthetic");
  if (!a.synthetic.empty() && a.synthetic != "tf1" && a.synthetic != "tf2") {
    throw cddm::ConfigError("--synthetic must be tf1 or tf2");
  }
  cddm::ExperimentConfig cfg;
  cfg.dataset = a.synthetic.empty() ? a.data : a.synthetic;
  cfg.modes = {cddm::parse_mode(a.mode)};
  cfg.m_ddm = cfg.m_cddm = a.m;
  cfg.k_prime = a.k_prime;
  cfg.theta0 = a.theta0;
  cfg.stall_limit = a.stall_limit;
  cfg.master_seed = a.seed;
  cfg.n_train = a.n_train;
  cfg.n_test = a.n_test;
  cfg.noise_halfwidth = a.noise;
  cfg.train_fraction = a.train_fraction;
  cfg.max_candidates = a.max_candidates;
  cfg.naive_pinv = a.naive_pinv;
  cfg.allow_small_k = a.allow_small_k;
  cfg.reset_stall_on_halving = !a.literal_stall;

  const auto loaded = cddm::load_experiment_dataset(cfg);
  const auto data = cddm::prepare_trial_data(cfg, loaded, a.seed);
  cddm::TrainConfig tc = cfg.train_config(cfg.modes.front());
  tc.seed = cddm::train_seed(a.seed);

  if (!a.export_test.empty()) {
    std::ofstream out(a.export_test);
    if (!out) throw cddm::DataError("cannot write '" + a.export_test + "'");
    cddm::write_csv(data.test, out);
  }

  int code = kOk;
  cddm::TrainResult result;
  try {
    result = cddm::train(data.train, tc, data.test);
  } catch (const cddm::PartialResultError& e) {
    std::cerr << "warning: " << e.what() << '\n';
    result = e.partial();
    code = kPartial;
  }
  for (const auto& w : result.record.warnings) std::cerr << "warning: " << w << '\n';
  result.model.normalizer = data.normalizer;
  result.model.metadata["dataset"] = a.synthetic.empty() ? cddm::fs::path(a.data).filename().string() : a.synthetic;
  cddm::save_model(result.model, a.out);

  const auto& rows = result.record.rows;
  std::printf("nodes %zu  candidates %zu\n", result.model.size(), result.record.candidates.size());
  if (!rows.empty()) std::printf("train_rmse %.6g  test_rmse %.6g\n", rows.back().train_rmse, rows.back().test_rmse);
  return code;
}

int cmd_predict(const PredictArgs& a) {
  const auto model = cddm::load_model(a.model);
  std::ifstream in(a.input);
  if (!in) throw cddm::DataError("cannot open input '" + a.input + "'");
  auto table = cddm::read_csv(in, a.input);
  if (static_cast<std::size_t>(table.x.cols()) != model.dim()) {
    throw cddm::DataError(a.input + ": " + std::to_string(table.x.cols()) + " input columns, model expects " +
                          std::to_string(model.dim()));
  }
  if (a.raw_inputs) {
    for (Eigen::Index l = 0; l < table.x.rows(); ++l)
      for (Eigen::Index j = 0; j < table.x.cols(); ++j)
        table.x(l, j) = model.normalizer.input(static_cast<std::size_t>(j), table.x(l, j));
  }
  cddm::Vector pred = cddm::predict(model, table.x);
  if (a.denormalize) {
    for (auto& v : pred) v = model.normalizer.invert_target(v);
  }

  std::ofstream out(a.output);
  if (!out) throw cddm::DataError("cannot write '" + a.output + "'");
  for (std::size_t j = 0; j < model.dim(); ++j) out << 'x' << (j + 1) << ',';
  out << "prediction\n";
  for (Eigen::Index l = 0; l < table.x.rows(); ++l) {
    const auto n = static_cast<std::size_t>(table.x.cols());
    for (std::size_t j = 0; j < n; ++j) {
      const double x = table.x(l, static_cast<Eigen::Index>(j));
      out << cddm::detail::format_real(a.raw_inputs ? model.normalizer.invert_input(j, x) : x) << ',';
    }
    out << cddm::detail::format_real(pred[l]) << '\n';
  }
  if (!out) throw cddm::DataError("error writing '" + a.output + "'");

  // y is taken to be in the same space as the written predictions
  if (table.y) std::printf("rmse %.6g over %td rows\n", cddm::rmse(pred, *table.y), pred.size());
  return kOk;
}

int cmd_crossval(const std::string& config_path) {
  const auto cfg = cddm::load_config(config_path, cddm::ConfigPurpose::CrossValidate);
  const auto result = cddm::run_crossval(cfg);
  cddm::write_crossval_outputs(cfg, result, cfg.output_dir);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
  std::printf("selected k_prime %zu  m %zu  mean validation rmse %.6g\n", result.best_k_prime, result.best_m,
              result.best_rmse);
  return kOk;
}

int cmd_plotdata(const PlotArgs& a) {
  const auto kind = cddm::parse_plot_kind(a.kind);
  const auto mode = cddm::parse_mode(a.mode);
  if (a.output.empty()) {
    cddm::write_plotdata(a.records, kind, std::cout, mode, a.trial);
  } else {
    std::ofstream out(a.output);
    if (!out) throw cddm::DataError("cannot write '" + a.output + "'");
    cddm::write_plotdata(a.records, kind, out, mode, a.trial);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Randomized single-hidden-layer network training with data-driven sigmoid nodes"};
  app.require_subcommand(1);

  std::string run_config;
  auto* run = app.add_subcommand("run", "Run a multi-trial experiment from a config file");
  run->add_option("--config", run_config, "Experiment config file")->required();

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train one network and save it");
  auto* data_opt = tr->add_option("--data", ta.data, "KEEL dataset file");
  tr->add_option("--synthetic", ta.synthetic, "Synthetic target function: tf1 or tf2")->excludes(data_opt);
  tr->add_option("--mode", ta.mode, "ddm or cddm")->check(CLI::IsMember({"ddm", "cddm"}));
  tr->add_option("--m", ta.m, "Hidden nodes")->required();
  tr->add_option("--k-prime", ta.k_prime, "Neighborhood size (anchor included)")->required();
  tr->add_option("--theta0", ta.theta0, "Initial acceptance threshold (<= 0)");
  tr->add_option("--Q", ta.stall_limit, "Stalled iterations before the threshold halves");
  tr->add_option("--seed", ta.seed, "Seed for data preparation and training")->required();
  tr->add_option("--out", ta.out, "Model file to write")->required();
  tr->add_flag("--naive-pinv", ta.naive_pinv, "Recompute the pseudoinverse for every candidate");
  tr->add_flag("--allow-small-k", ta.allow_small_k, "Allow k < input dimension");
  tr->add_flag("--literal-stall", ta.literal_stall, "Reset the stall counter only on acceptance");
  tr->add_option("--max-candidates", ta.max_candidates, "Candidate cap (default 200*m)");
  tr->add_option("--n-train", ta.n_train, "Synthetic training size");
  tr->add_option("--n-test", ta.n_test, "Synthetic test size");
  tr->add_option("--noise", ta.noise, "tf2 noise half-width");
  tr->add_option("--train-fraction", ta.train_fraction, "Train share for file datasets");
  tr->add_option("--export-test", ta.export_test, "Write the (normalized) test split as CSV");

  PredictArgs pa;
  auto* pr = app.add_subcommand("predict", "Batch prediction from a CSV file");
  pr->add_option("--model", pa.model, "Model file")->required();
  pr->add_option("--input", pa.input, "CSV with x1..xn columns (y optional)")->required();
  pr->add_option("--output", pa.output, "Output CSV")->required();
  pr->add_flag("--denormalize", pa.denormalize, "Map predictions back to the original target units");
  pr->add_flag("--raw-inputs", pa.raw_inputs, "Inputs are in original units; scale them first");

  std::string cv_config;
  auto* cv = app.add_subcommand("crossval", "Grid search over k' and m by k-fold cross-validation");
  cv->add_option("--config", cv_config, "Experiment config file")->required();

  PlotArgs pl;
  auto* plot = app.add_subcommand("plotdata", "Emit plot-ready CSV from a run's records");
  plot->add_option("--records", pl.records, "Output directory of a run")->required();
  plot->add_option("--kind", pl.kind, "convergence, theta or fitcurve")->required();
  plot->add_option("--mode", pl.mode, "Model for fitcurve: ddm or cddm");
  plot->add_option("--trial", pl.trial, "Trial index for theta and fitcurve");
  plot->add_option("--output", pl.output, "Write here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUserError;
  }

  try {
    if (*run) return cmd_run(run_config);
    if (*tr) return cmd_train(ta);
    if (*pr) return cmd_predict(pa);
    if (*cv) return cmd_crossval(cv_config);
    if (*plot) return cmd_plotdata(pl);
  } catch (const cddm::PartialResultError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kPartial;
  } catch (const cddm::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUserError;
  } catch (const cddm::DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const cddm::NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumericalError;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumericalError;
  }
  return kUserError;
}
