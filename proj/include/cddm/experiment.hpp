#ifndef CDDM_EXPERIMENT_HPP_
#define CDDM_EXPERIMENT_HPP_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cddm/dataset.hpp"
#include "cddm/error.hpp"
#include "cddm/modelselect.hpp"
#include "cddm/network.hpp"
#include "cddm/random.hpp"
#include "cddm/trainer.hpp"

namespace cddm {

namespace fs = std::filesystem;

enum class ConfigPurpose { Run, CrossValidate };

// Parsed `key = value` experiment file. Unknown or repeated keys are errors.
struct ExperimentConfig {
  std::string dataset;  // tf1, tf2 or a KEEL file path
  std::vector<Mode> modes;
  std::optional<std::size_t> m_ddm;
  std::optional<std::size_t> m_cddm;
  std::size_t k_prime = 0;
  double theta0 = -0.01;
  std::size_t stall_limit = 50;
  std::size_t trials = 0;
  std::uint64_t master_seed = 0;
  std::string output_dir;

  std::optional<std::size_t> n_train;
  std::optional<std::size_t> n_test;
  double noise_halfwidth = 0.2;
  double train_fraction = 0.75;
  bool resplit = true;
  std::size_t max_candidates = 0;
  bool naive_pinv = false;
  bool allow_small_k = false;
  bool reset_stall_on_halving = true;
  std::size_t threads = 0;  // 0: CDDM_THREADS or hardware concurrency

  std::vector<std::size_t> k_prime_grid = default_k_prime_grid();
  std::vector<std::size_t> m_grid = default_m_grid();
  std::size_t folds = 10;
  std::size_t repetitions = 1;

  std::vector<std::pair<std::string, std::string>> echo;  // keys and values as written

  bool synthetic() const { return dataset == "tf1" || dataset == "tf2"; }
  std::size_t m_for(Mode mode) const {
    const auto& m = mode == Mode::DDM ? m_ddm : m_cddm;
    if (!m) throw ConfigError("no node count configured for mode " + std::string(to_string(mode)));
    return *m;
  }
  std::size_t thread_count() const { return threads ? threads : default_thread_count(); }

  TrainConfig train_config(Mode mode) const {
    TrainConfig cfg;
    cfg.mode = mode;
    cfg.m = m_for(mode);
    cfg.set_k_prime(k_prime);
    cfg.theta0 = theta0;
    cfg.stall_limit = stall_limit;
    cfg.max_candidates = max_candidates;
    cfg.naive_pinv = naive_pinv;
    cfg.allow_small_k = allow_small_k;
    cfg.reset_stall_on_halving = reset_stall_on_halving;
    return cfg;
  }
};

namespace detail {

template <class T>
T parse_number(const std::string& source, std::size_t line, const std::string& key, std::string_view text) {
  text = trim(text);
  T v{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    throw ParseError(source, line, "invalid value '" + std::string(text) + "' for " + key);
  }
  return v;
}

inline bool parse_bool(const std::string& source, std::size_t line, const std::string& key, std::string_view v) {
  const auto s = lower(trim(v));
  if (s == "true" || s == "yes" || s == "1") return true;
  if (s == "false" || s == "no" || s == "0") return false;
  throw ParseError(source, line, "invalid boolean '" + std::string(v) + "' for " + key);
}

inline std::vector<std::size_t> parse_count_list(const std::string& source, std::size_t line,
                                                 const std::string& key, std::string_view v) {
  std::vector<std::size_t> out;
  for (auto item : split_list(v, ',')) out.push_back(parse_number<std::size_t>(source, line, key, item));
  if (out.empty()) throw ParseError(source, line, key + " is empty");
  return out;
}

}  // namespace detail

namespace detail {

inline ExperimentConfig parse_config_lines(std::istream& in, const std::string& source, ConfigPurpose purpose,
                                           const fs::path& base_dir) {
  ExperimentConfig cfg;
  std::set<std::string> seen;
  std::string mode_text;
  std::optional<std::size_t> m_both;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(source, line_no, "expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError(source, line_no, "missing key");
    if (!seen.insert(key).second) throw ParseError(source, line_no, "duplicate key '" + key + "'");
    cfg.echo.emplace_back(key, std::string(value));

    auto count = [&] { return parse_number<std::size_t>(source, line_no, key, value); };
    auto real = [&] {
      const auto v = parse_double(value);
      if (!v || !std::isfinite(*v)) throw ParseError(source, line_no, "invalid value '" + std::string(value) + "' for " + key);
      return *v;
    };
    if (key == "dataset") {
      if (value.empty()) throw ParseError(source, line_no, "dataset is empty");
      cfg.dataset = std::string(value);
    } else if (key == "mode") {
      mode_text = std::string(value);
      if (value == "both") {
        cfg.modes = {Mode::DDM, Mode::CDDM};
      } else {
        try {
          cfg.modes = {parse_mode(value)};
        } catch (const ConfigError& e) {
          throw ParseError(source, line_no, e.what());
        }
      }
    } else if (key == "m") {
      m_both = count();
    } else if (key == "m_ddm") {
      cfg.m_ddm = count();
    } else if (key == "m_cddm") {
      cfg.m_cddm = count();
    } else if (key == "k_prime") {
      cfg.k_prime = count();
    } else if (key == "theta0") {
      cfg.theta0 = real();
    } else if (key == "Q") {
      cfg.stall_limit = count();
    } else if (key == "trials") {
      cfg.trials = count();
    } else if (key == "master_seed") {
      cfg.master_seed = parse_number<std::uint64_t>(source, line_no, key, value);
    } else if (key == "output_dir") {
      cfg.output_dir = std::string(value);
    } else if (key == "n_train") {
      cfg.n_train = count();
    } else if (key == "n_test") {
      cfg.n_test = count();
    } else if (key == "noise_halfwidth") {
      cfg.noise_halfwidth = real();
    } else if (key == "train_fraction") {
      cfg.train_fraction = real();
    } else if (key == "resplit") {
      cfg.resplit = parse_bool(source, line_no, key, value);
    } else if (key == "max_candidates") {
      cfg.max_candidates = count();
    } else if (key == "naive_pinv") {
      cfg.naive_pinv = parse_bool(source, line_no, key, value);
    } else if (key == "allow_small_k") {
      cfg.allow_small_k = parse_bool(source, line_no, key, value);
    } else if (key == "stall_reset") {
      if (value == "halving") {
        cfg.reset_stall_on_halving = true;
      } else if (value == "acceptance-only") {
        cfg.reset_stall_on_halving = false;
      } else {
        throw ParseError(source, line_no, "stall_reset must be 'halving' or 'acceptance-only'");
      }
    } else if (key == "threads") {
      cfg.threads = count();
    } else if (key == "k_prime_grid") {
      cfg.k_prime_grid = parse_count_list(source, line_no, key, value);
    } else if (key == "m_grid") {
      cfg.m_grid = parse_count_list(source, line_no, key, value);
    } else if (key == "folds") {
      cfg.folds = count();
    } else if (key == "repetitions") {
      cfg.repetitions = count();
    } else {
      throw ParseError(source, line_no, "unknown key '" + key + "'");
    }
  }

  auto require = [&](const char* key) {
    if (!seen.count(key)) throw ConfigError(source + ": missing required key '" + key + "'");
  };
  require("dataset");
  require("mode");
  require("master_seed");
  require("output_dir");
  if (m_both) {
    if (!cfg.m_ddm) cfg.m_ddm = m_both;
    if (!cfg.m_cddm) cfg.m_cddm = m_both;
  }

  if (purpose == ConfigPurpose::Run) {
    require("trials");
    require("k_prime");
    if (cfg.trials < 1) throw ConfigError(source + ": trials must be >= 1");
    for (Mode mode : cfg.modes) {
      if (!(mode == Mode::DDM ? cfg.m_ddm : cfg.m_cddm)) {
        throw ConfigError(source + ": missing required key 'm' (or 'm_" + std::string(to_string(mode)) + "')");
      }
      if (cfg.m_for(mode) < 1) throw ConfigError(source + ": m must be >= 1");
    }
    if (cfg.k_prime < 2) throw ConfigError(source + ": k_prime must be >= 2");
  } else {
    if (cfg.modes.size() != 1) throw ConfigError(source + ": crossval needs mode = ddm or mode = cddm");
    if (cfg.folds < 2) throw ConfigError(source + ": folds must be >= 2");
    if (cfg.repetitions < 1) throw ConfigError(source + ": repetitions must be >= 1");
  }
  if (!(cfg.theta0 <= 0.0)) throw ConfigError(source + ": theta0 must be <= 0");
  if (cfg.stall_limit < 1) throw ConfigError(source + ": Q must be >= 1");
  if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0)) {
    throw ConfigError(source + ": train_fraction must lie in (0, 1)");
  }
  if (!(cfg.noise_halfwidth >= 0.0)) throw ConfigError(source + ": noise_halfwidth must be >= 0");

  // Paths in the file are relative to the file's directory.
  if (!base_dir.empty()) {
    if (!cfg.synthetic() && fs::path(cfg.dataset).is_relative()) cfg.dataset = (base_dir / cfg.dataset).string();
    if (fs::path(cfg.output_dir).is_relative()) cfg.output_dir = (base_dir / cfg.output_dir).string();
  }
  return cfg;
}

}  // namespace detail

// A bad config file is a user error, so line-level problems surface as
// ConfigError (with "file:line:" in the message).
inline ExperimentConfig parse_config(std::istream& in, const std::string& source, ConfigPurpose purpose,
                                     const fs::path& base_dir = {}) {
  try {
    return detail::parse_config_lines(in, source, purpose, base_dir);
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  }
}

inline ExperimentConfig load_config(const std::string& path, ConfigPurpose purpose) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in, path, purpose, fs::path(path).parent_path());
}

// ---------------------------------------------------------------------------
// Data for one trial

struct TrialData {
  Dataset train;
  Dataset test;
  Normalizer normalizer;
};

// tf1/tf2 are generated per trial (or once, with resplit = false) and used
// as generated. File datasets are split per trial, then min-max scaled with
// bounds fitted on the training side only.
inline TrialData prepare_trial_data(const ExperimentConfig& cfg, const std::optional<Dataset>& loaded,
                                    std::uint64_t trial_seed) {
  const std::uint64_t data_seed =
      cfg.resplit ? derive_seed(trial_seed, "data") : derive_seed(cfg.master_seed, "data");
  if (cfg.dataset == "tf1") {
    auto [tr, te] = generate_tf1(cfg.n_train.value_or(1000), cfg.n_test.value_or(300), data_seed);
    return {tr, te, Normalizer::identity(1)};
  }
  if (cfg.dataset == "tf2") {
    auto [tr, te] = generate_tf2(cfg.n_train.value_or(5000), cfg.n_test.value_or(5000), cfg.noise_halfwidth, data_seed);
    return {tr, te, Normalizer::identity(2)};
  }
  if (!loaded) throw ConfigError("dataset '" + cfg.dataset + "' was not loaded");
  auto [tr, te] = split(*loaded, cfg.train_fraction, data_seed);
  const Normalizer norm = Normalizer::fit(tr);
  return {norm.apply(tr), norm.apply(te), norm};
}

inline std::optional<Dataset> load_experiment_dataset(const ExperimentConfig& cfg) {
  if (cfg.synthetic()) return std::nullopt;
  return load_keel(cfg.dataset);
}

inline std::uint64_t train_seed(std::uint64_t trial_seed) { return derive_seed(trial_seed, "train"); }

struct ModeResults {
  Mode mode;
  TrainConfig config;
  std::vector<TrialOutcome> outcomes;
};

struct ExperimentResult {
  std::vector<ModeResults> modes;
  double seconds = 0.0;
};

// Every mode sees the same per-trial data and the same training seed.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  const auto loaded = load_experiment_dataset(cfg);
  ExperimentResult result;
  for (Mode mode : cfg.modes) {
    const TrainConfig base = cfg.train_config(mode);
    auto outcomes = run_trials(
        cfg.trials, cfg.master_seed,
        [&](std::size_t t, std::uint64_t seed) {
          TrialData data = prepare_trial_data(cfg, loaded, seed);
          TrainConfig tc = base;
          tc.seed = train_seed(seed);
          auto annotate = [&](TrainResult& r) {
            r.model.normalizer = data.normalizer;
            r.model.metadata["dataset"] = cfg.synthetic() ? cfg.dataset : fs::path(cfg.dataset).filename().string();
            r.model.metadata["master_seed"] = std::to_string(cfg.master_seed);
            r.model.metadata["trial"] = std::to_string(t);
          };
          try {
            TrainResult r = train(data.train, tc, data.test);
            annotate(r);
            return r;
          } catch (const PartialResultError& e) {
            TrainResult partial = e.partial();
            annotate(partial);
            throw PartialResultError(e.what(), std::move(partial));
          }
        },
        cfg.thread_count());
    result.modes.push_back({mode, base, std::move(outcomes)});
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

// ---------------------------------------------------------------------------
// Output files. Every file opens with a timestamp line followed by the
// config echo, all prefixed with '#'.

namespace detail {

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void write_preamble(std::ostream& out, const ExperimentConfig& cfg, const std::string& kind) {
  out << "# generated " << utc_timestamp() << '\n';
  out << "# cddm " << kind << '\n';
  bool seed_echoed = false;
  for (const auto& [k, v] : cfg.echo) {
    out << "# " << k << " = " << v << '\n';
    seed_echoed = seed_echoed || k == "master_seed";
  }
  if (!seed_echoed) out << "# master_seed = " << cfg.master_seed << '\n';
}

inline std::ofstream open_output(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << std::setprecision(17);
  return out;
}

inline std::string csv_real(double v) { return std::isfinite(v) ? format_real(v) : std::string("nan"); }

inline std::string rmse_pm(const Quantiles& q) {
  if (q.count == 0) return "n/a";
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(4) << q.median << " ± " << q.iqr();
  return ss.str();
}

}  // namespace detail

inline std::string trial_stem(Mode mode, std::size_t trial) {
  return std::string(to_string(mode)) + "_" + std::to_string(trial);
}

inline void write_rows_csv(const TrialRecord& rec, std::ostream& out) {
  out << "node_count,candidates,train_rmse,test_rmse,theta\n";
  for (const auto& r : rec.rows) {
    out << r.node_count << ',' << r.candidates << ',' << detail::csv_real(r.train_rmse) << ','
        << detail::csv_real(r.test_rmse) << ',' << detail::csv_real(r.theta) << '\n';
  }
}

inline void write_theta_csv(const TrialRecord& rec, std::ostream& out, bool full = false) {
  out << (full ? "candidate_index,anchor,theta,delta_rmse,accepted_flag,q,theta_after\n"
               : "candidate_index,theta,accepted_flag\n");
  for (std::size_t c = 0; c < rec.candidates.size(); ++c) {
    const auto& e = rec.candidates[c];
    out << (c + 1) << ',';
    if (full) out << e.anchor << ',';
    out << detail::csv_real(e.theta) << ',';
    if (full) out << detail::csv_real(e.delta_rmse) << ',';
    out << (e.accepted ? 1 : 0);
    if (full) out << ',' << e.stall << ',' << detail::csv_real(e.theta_after);
    out << '\n';
  }
}

inline void write_convergence_csv(const std::vector<CurvePoint>& curve, std::ostream& out) {
  using detail::csv_real;
  out << "node_count,train_median,train_p10,train_p90,test_median,test_p10,test_p90,trials\n";
  for (const auto& p : curve) {
    out << p.node_count << ',' << csv_real(p.train.median) << ',' << csv_real(p.train.p10) << ','
        << csv_real(p.train.p90) << ',' << csv_real(p.test.median) << ',' << csv_real(p.test.p10) << ','
        << csv_real(p.test.p90) << ',' << p.train.count << '\n';
  }
}

inline std::vector<const TrialRecord*> usable_records(const std::vector<TrialOutcome>& outcomes) {
  std::vector<const TrialRecord*> out;
  for (const auto& o : outcomes) {
    if (o.result) out.push_back(&o.result->record);
  }
  return out;
}

// Results block: median ± IQR of the final test RMSE with parameters.
inline void write_summary(const ExperimentConfig& cfg, const ExperimentResult& result, std::ostream& out) {
  out << "Data: " << cfg.dataset << "   trials: " << cfg.trials << "   master_seed: " << cfg.master_seed << '\n';
  out << std::left << std::setw(8) << "Method" << std::setw(20) << "Test RMSE" << std::setw(20) << "Train RMSE"
      << "Parameters\n";
  for (const auto& mr : result.modes) {
    const TrialSummary s = summarize(mr.outcomes);
    std::ostringstream params;
    params << "m=" << mr.config.m << ", k'=" << mr.config.k_prime();
    if (mr.mode == Mode::CDDM) params << ", theta=" << mr.config.theta0 << ", Q=" << mr.config.stall_limit;
    out << std::setw(8) << (mr.mode == Mode::DDM ? "D-DM" : "CD-DM") << std::setw(20)
        << detail::rmse_pm(s.test_rmse) << std::setw(20) << detail::rmse_pm(s.train_rmse) << params.str() << '\n';
  }
  out << '\n';
  for (const auto& mr : result.modes) {
    const TrialSummary s = summarize(mr.outcomes);
    out << to_string(mr.mode) << ": " << s.succeeded << " trials ok, " << s.failed
        << " failed; median accepted nodes " << s.nodes.median << ", median candidates " << s.candidates.median
        << '\n';
    for (const auto& w : s.warnings) out << "  warning: " << w << '\n';
  }
  // Node efficiency: nodes each method needs to reach the other's final median.
  if (result.modes.size() == 2) {
    std::vector<std::vector<CurvePoint>> curves;
    std::vector<double> finals;
    for (const auto& mr : result.modes) {
      curves.push_back(convergence_curve(usable_records(mr.outcomes)));
      finals.push_back(summarize(mr.outcomes).test_rmse.median);
    }
    for (std::size_t a = 0; a < 2; ++a) {
      const std::size_t b = 1 - a;
      const auto n = nodes_to_reach(curves[a], finals[b]);
      out << to_string(result.modes[a].mode) << " reaches " << to_string(result.modes[b].mode)
          << "'s final median test RMSE " << detail::csv_real(finals[b]) << " at "
          << (n ? std::to_string(*n) + " nodes" : std::string("no node count in range")) << '\n';
    }
  }
  out << "wall-clock seconds: " << std::fixed << std::setprecision(2) << result.seconds << '\n';
}

// Writes the full record directory for a run.
inline void write_run_outputs(const ExperimentConfig& cfg, const ExperimentResult& result, const fs::path& dir) {
  fs::create_directories(dir / "trials");
  {
    auto out = detail::open_output(dir / "config.txt");
    detail::write_preamble(out, cfg, "run config");
    for (const auto& [k, v] : cfg.echo) out << k << " = " << v << '\n';
  }
  {
    auto out = detail::open_output(dir / "trials.csv");
    detail::write_preamble(out, cfg, "per-trial results");
    out << "mode,trial,seed,status,final_train_rmse,final_test_rmse,nodes,candidates\n";
    for (const auto& mr : result.modes) {
      for (const auto& o : mr.outcomes) {
        out << to_string(mr.mode) << ',' << o.trial << ',' << o.seed << ','
            << (o.ok() ? "ok" : o.partial ? "partial" : "failed") << ',';
        if (o.result && !o.result->record.rows.empty()) {
          const auto& last = o.result->record.rows.back();
          out << detail::csv_real(last.train_rmse) << ',' << detail::csv_real(last.test_rmse) << ','
              << o.result->model.size() << ',' << o.result->record.candidates.size() << '\n';
        } else {
          out << "nan,nan,0,0\n";
        }
      }
    }
  }
  for (const auto& mr : result.modes) {
    for (const auto& o : mr.outcomes) {
      if (!o.result) continue;
      const std::string stem = trial_stem(mr.mode, o.trial);
      {
        auto out = detail::open_output(dir / "trials" / (stem + "_rows.csv"));
        detail::write_preamble(out, cfg, "trial record " + stem);
        write_rows_csv(o.result->record, out);
      }
      {
        auto out = detail::open_output(dir / "trials" / (stem + "_theta.csv"));
        detail::write_preamble(out, cfg, "candidate log " + stem);
        write_theta_csv(o.result->record, out, true);
      }
      {
        auto out = detail::open_output(dir / "trials" / (stem + ".model"));
        save_model(o.result->model, out);
      }
    }
    {
      auto out = detail::open_output(dir / ("convergence_" + std::string(to_string(mr.mode)) + ".csv"));
      detail::write_preamble(out, cfg, "convergence " + std::string(to_string(mr.mode)));
      write_convergence_csv(convergence_curve(usable_records(mr.outcomes)), out);
    }
    if (mr.mode == Mode::CDDM && !mr.outcomes.empty() && mr.outcomes.front().result) {
      auto out = detail::open_output(dir / "theta_cddm.csv");
      detail::write_preamble(out, cfg, "theta trajectory, trial 0");
      write_theta_csv(mr.outcomes.front().result->record, out);
    }
  }
  {
    std::ofstream out(dir / "summary.txt");
    if (!out) throw DataError("cannot write summary in '" + dir.string() + "'");
    out << "# generated " << detail::utc_timestamp() << '\n';
    for (const auto& [k, v] : cfg.echo) out << "# " << k << " = " << v << '\n';
    write_summary(cfg, result, out);
  }
}

// ---------------------------------------------------------------------------
// Reading records back (plot data)

namespace detail {

// Data lines of a '#'-commented CSV, header first.
inline std::vector<std::vector<std::string>> read_commented_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::vector<std::vector<std::string>> rows;
  std::string raw;
  while (std::getline(in, raw)) {
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> cells;
    for (auto c : split_list(line, ',')) cells.emplace_back(c);
    rows.push_back(std::move(cells));
  }
  if (rows.empty()) throw DataError("'" + path.string() + "' has no header");
  return rows;
}

inline std::map<std::string, std::string> read_config_echo(const fs::path& dir) {
  std::ifstream in(dir / "config.txt");
  if (!in) throw DataError("no config.txt in records directory '" + dir.string() + "'");
  std::map<std::string, std::string> out;
  std::string raw;
  while (std::getline(in, raw)) {
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) continue;
    out[std::string(trim(line.substr(0, eq)))] = std::string(trim(line.substr(eq + 1)));
  }
  return out;
}

inline TrialRecord read_rows(const fs::path& path) {
  const auto rows = read_commented_csv(path);
  TrialRecord rec;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != 5) throw DataError("'" + path.string() + "': malformed row " + std::to_string(r));
    AcceptanceRow row;
    auto num = [&](const std::string& s) {
      const auto v = parse_double(s);
      if (!v) throw DataError("'" + path.string() + "': bad number '" + s + "'");
      return *v;
    };
    row.node_count = static_cast<std::size_t>(num(rows[r][0]));
    row.candidates = static_cast<std::size_t>(num(rows[r][1]));
    row.train_rmse = num(rows[r][2]);
    row.test_rmse = num(rows[r][3]);
    row.theta = num(rows[r][4]);
    rec.rows.push_back(row);
  }
  return rec;
}

}  // namespace detail

enum class PlotKind { Convergence, Theta, FitCurve };

inline PlotKind parse_plot_kind(std::string_view s) {
  if (s == "convergence") return PlotKind::Convergence;
  if (s == "theta") return PlotKind::Theta;
  if (s == "fitcurve") return PlotKind::FitCurve;
  throw ConfigError("unknown plot kind '" + std::string(s) + "' (convergence, theta, fitcurve)");
}

// fitcurve: x, target, fitted, then beta_j * h_j(x) per node, over an evenly
// spaced grid on [0, 1] (normalized input space; 1-D models only).
inline void write_fitcurve(const NetworkModel& model, const std::string& dataset, std::ostream& out,
                           std::size_t points = 300) {
  if (model.dim() != 1) {
    throw ConfigError("fitcurve supports 1-D models only; this model has " + std::to_string(model.dim()) +
                      " inputs");
  }
  out << "x,target,fitted";
  for (std::size_t j = 0; j < model.size(); ++j) out << ",node_" << (j + 1);
  out << '\n';
  for (std::size_t p = 0; p < points; ++p) {
    const double x = points == 1 ? 0.0 : static_cast<double>(p) / static_cast<double>(points - 1);
    const std::span<const double> xs(&x, 1);
    std::vector<double> parts(model.size());
    double fitted = 0.0;
    for (std::size_t j = 0; j < model.size(); ++j) {
      parts[j] = model.beta[static_cast<Eigen::Index>(j)] * sigmoid_response(model.nodes[j], xs);
      fitted += parts[j];
    }
    const double target = dataset == "tf1" ? tf1(x) : std::numeric_limits<double>::quiet_NaN();
    out << detail::csv_real(x) << ',' << detail::csv_real(target) << ',' << detail::csv_real(fitted);
    for (double v : parts) out << ',' << detail::csv_real(v);
    out << '\n';
  }
}

// Emits plot-ready CSV for a records directory written by write_run_outputs.
inline void write_plotdata(const fs::path& dir, PlotKind kind, std::ostream& out, Mode mode = Mode::CDDM,
                           std::size_t trial = 0) {
  const auto echo = detail::read_config_echo(dir);
  out << std::setprecision(17);
  switch (kind) {
    case PlotKind::Convergence: {
      out << "mode,node_count,train_median,train_p10,train_p90,test_median,test_p10,test_p90,trials\n";
      for (Mode m : {Mode::DDM, Mode::CDDM}) {
        std::vector<TrialRecord> recs;
        for (std::size_t t = 0;; ++t) {
          const auto path = dir / "trials" / (trial_stem(m, t) + "_rows.csv");
          if (!fs::exists(path)) break;
          recs.push_back(detail::read_rows(path));
        }
        std::vector<const TrialRecord*> ptrs;
        for (const auto& r : recs) ptrs.push_back(&r);
        for (const auto& p : convergence_curve(ptrs)) {
          using detail::csv_real;
          out << to_string(m) << ',' << p.node_count << ',' << csv_real(p.train.median) << ','
              << csv_real(p.train.p10) << ',' << csv_real(p.train.p90) << ',' << csv_real(p.test.median) << ','
              << csv_real(p.test.p10) << ',' << csv_real(p.test.p90) << ',' << p.train.count << '\n';
        }
      }
      break;
    }
    case PlotKind::Theta: {
      const auto path = dir / "trials" / (trial_stem(Mode::CDDM, trial) + "_theta.csv");
      const auto rows = detail::read_commented_csv(path);
      out << "candidate_index,theta,accepted_flag\n";
      for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() < 5) throw DataError("'" + path.string() + "': malformed row");
        out << rows[r][0] << ',' << rows[r][2] << ',' << rows[r][4] << '\n';
      }
      break;
    }
    case PlotKind::FitCurve: {
      const auto it = echo.find("dataset");
      const std::string dataset = it == echo.end() ? "" : it->second;
      write_fitcurve(load_model((dir / "trials" / (trial_stem(mode, trial) + ".model")).string()), dataset, out);
      break;
    }
  }
}

// ---------------------------------------------------------------------------
// Cross-validation from a config file

inline CVResult run_crossval(const ExperimentConfig& cfg) {
  const auto loaded = load_experiment_dataset(cfg);
  const TrialData data = prepare_trial_data(cfg, loaded, derive_seed(cfg.master_seed, std::uint64_t{0}));
  CVPlan plan = CVPlan::make(data.train.size(), derive_seed(cfg.master_seed, "cv"), cfg.folds);
  plan.k_prime_grid = cfg.k_prime_grid;
  plan.m_grid = cfg.m_grid;
  plan.repetitions = cfg.repetitions;
  TrainConfig base;
  base.mode = cfg.modes.front();
  base.theta0 = cfg.theta0;
  base.stall_limit = cfg.stall_limit;
  base.max_candidates = cfg.max_candidates;
  base.naive_pinv = cfg.naive_pinv;
  base.allow_small_k = true;
  base.reset_stall_on_halving = cfg.reset_stall_on_halving;
  return cross_validate(data.train, plan, base, cfg.thread_count());
}

inline void write_crossval_outputs(const ExperimentConfig& cfg, const CVResult& result, const fs::path& dir) {
  auto out = detail::open_output(dir / "cv_scores.csv");
  detail::write_preamble(out, cfg, "cross-validation scores");
  write_scores_csv(result, out);
  auto sel = detail::open_output(dir / "cv_selection.txt");
  detail::write_preamble(sel, cfg, "cross-validation selection");
  sel << "k_prime = " << result.best_k_prime << "\nm = " << result.best_m
      << "\nmean_rmse = " << detail::format_real(result.best_rmse) << '\n';
  for (const auto& w : result.warnings) sel << "# warning: " << w << '\n';
}

}  // namespace cddm

#endif  // CDDM_EXPERIMENT_HPP_
