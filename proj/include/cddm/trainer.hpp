#ifndef CDDM_TRAINER_HPP_
#define CDDM_TRAINER_HPP_

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "cddm/dataset.hpp"
#include "cddm/error.hpp"
#include "cddm/linalg.hpp"
#include "cddm/network.hpp"
#include "cddm/nodegen.hpp"
#include "cddm/random.hpp"

namespace cddm {

enum class Mode { DDM, CDDM };

inline std::string_view to_string(Mode mode) { return mode == Mode::DDM ? "ddm" : "cddm"; }

inline Mode parse_mode(std::string_view s) {
  if (s == "ddm") return Mode::DDM;
  if (s == "cddm") return Mode::CDDM;
  throw ConfigError("unknown mode '" + std::string(s) + "' (expected ddm or cddm)");
}

// A candidate is accepted when its RMSE change is at most theta. Once theta
// has decayed to zero, rounding noise on an unchanged residual is tolerated.
inline constexpr double kZeroThetaSlack = 1e-14;

inline bool accepts(double delta_rmse, double theta) {
  return theta == 0.0 ? delta_rmse <= kZeroThetaSlack : delta_rmse <= theta;
}

struct TrainConfig {
  std::size_t m = 100;             // hidden nodes to build
  std::size_t k = 1;               // nearest neighbors; neighborhood size is k + 1
  double theta0 = -0.01;           // initial acceptance threshold on the RMSE change
  std::size_t stall_limit = 50;    // Q: iterations without acceptance before theta halves
  std::uint64_t seed = 0;
  std::size_t max_candidates = 0;  // 0 selects 200 * m
  Mode mode = Mode::CDDM;
  bool naive_pinv = false;
  bool allow_small_k = false;
  // true: q restarts after each halving, so theta halves once per Q stalled
  // iterations. false: q restarts only on acceptance and theta halves on
  // every further rejection once q >= Q.
  bool reset_stall_on_halving = true;

  std::size_t k_prime() const noexcept { return k + 1; }
  void set_k_prime(std::size_t kp) {
    if (kp < 2) throw ConfigError("k' must be at least 2");
    k = kp - 1;
  }
  std::size_t candidate_cap() const noexcept { return max_candidates ? max_candidates : 200 * m; }

  void validate(std::size_t n_samples) const {
    if (m < 1) throw ConfigError("m must be >= 1");
    if (k < 1) throw ConfigError("k must be >= 1 (k' >= 2)");
    if (stall_limit < 1) throw ConfigError("Q must be >= 1");
    if (!(theta0 <= 0.0) || !std::isfinite(theta0)) throw ConfigError("theta0 must be finite and <= 0");
    if (k >= n_samples) {
      throw ConfigError("k'=" + std::to_string(k_prime()) + " needs more than " + std::to_string(k) +
                        " training samples (have " + std::to_string(n_samples) + ")");
    }
  }
};

// One row per accepted node.
struct AcceptanceRow {
  std::size_t node_count = 0;
  std::size_t candidates = 0;  // candidates evaluated so far, including this one
  double train_rmse = 0.0;
  double test_rmse = std::numeric_limits<double>::quiet_NaN();
  double theta = std::numeric_limits<double>::quiet_NaN();
};

// One entry per candidate node.
struct CandidateEvent {
  std::size_t anchor = 0;
  double theta = std::numeric_limits<double>::quiet_NaN();  // threshold the decision used
  double delta_rmse = std::numeric_limits<double>::quiet_NaN();
  bool accepted = true;
  std::size_t stall = 0;  // q after step (k)
  double theta_after = std::numeric_limits<double>::quiet_NaN();
};

struct TrialRecord {
  Mode mode = Mode::CDDM;
  std::vector<AcceptanceRow> rows;
  std::vector<CandidateEvent> candidates;
  std::vector<std::string> warnings;
  double seconds = 0.0;
};

struct TrainResult {
  NetworkModel model;
  TrialRecord record;
};

// Raised when the candidate cap is hit before m nodes were accepted. Carries
// what was built so far.
class PartialResultError : public Error {
 public:
  PartialResultError(const std::string& what, TrainResult partial)
      : Error(what), partial_(std::make_shared<TrainResult>(std::move(partial))) {}
  const TrainResult& partial() const noexcept { return *partial_; }

 private:
  std::shared_ptr<TrainResult> partial_;
};

namespace detail {

inline std::vector<std::string> config_warnings(const TrainConfig& cfg, std::size_t dim) {
  std::vector<std::string> out;
  if (cfg.k < dim && !cfg.allow_small_k) {
    out.push_back("k=" + std::to_string(cfg.k) + " nearest neighbors is below the input dimension n=" +
                  std::to_string(dim) + "; local planes are underdetermined (pass allow_small_k to silence)");
  }
  return out;
}

inline std::map<std::string, std::string> config_metadata(const TrainConfig& cfg) {
  auto real = [](double v) { return format_real(v); };
  return {
      {"mode", std::string(to_string(cfg.mode))},
      {"m", std::to_string(cfg.m)},
      {"k_prime", std::to_string(cfg.k_prime())},
      {"theta0", real(cfg.theta0)},
      {"Q", std::to_string(cfg.stall_limit)},
      {"seed", std::to_string(cfg.seed)},
      {"max_candidates", std::to_string(cfg.candidate_cap())},
      {"solver", cfg.naive_pinv ? "pinv" : "incremental-qr"},
      {"stall_reset", cfg.reset_stall_on_halving ? "halving" : "acceptance-only"},
      {"pinv_tolerance", kRankToleranceDescription},
  };
}

// Test-set predictions for the accepted nodes, extended one column at a time.
class EvalTracker {
 public:
  EvalTracker(const std::optional<Dataset>& eval, std::size_t reserve) {
    if (eval) {
      eval_ = *eval;
      h_.resize(static_cast<Eigen::Index>(eval->size()), static_cast<Eigen::Index>(reserve));
    }
  }
  void add(const HiddenNode& node) {
    if (!eval_) return;
    if (cols_ == h_.cols()) h_.conservativeResize(Eigen::NoChange, std::max<Eigen::Index>(2 * cols_, 8));
    h_.col(cols_++) = hidden_column(node, eval_->inputs());
  }
  double rmse(const Vector& beta) const {
    if (!eval_) return std::numeric_limits<double>::quiet_NaN();
    return cddm::rmse(h_.leftCols(cols_) * beta, eval_->targets());
  }

 private:
  std::optional<Dataset> eval_;
  Matrix h_;
  Eigen::Index cols_ = 0;
};

template <class Solver>
NetworkModel finish_model(std::vector<HiddenNode> nodes, const Solver& solver, const TrainConfig& cfg,
                          std::size_t dim) {
  NetworkModel model;
  model.nodes = std::move(nodes);
  model.beta = solver.beta();
  if (model.beta.size() == 0) model.beta = Vector(0);
  model.normalizer = Normalizer::identity(dim);
  model.metadata = config_metadata(cfg);
  model.metadata["accepted_nodes"] = std::to_string(model.nodes.size());
  return model;
}

template <class Solver>
TrainResult train_ddm_with(const Dataset& train, const TrainConfig& cfg, const std::optional<Dataset>& eval) {
  const auto start = std::chrono::steady_clock::now();
  cfg.validate(train.size());
  TrialRecord record;
  record.mode = Mode::DDM;
  record.warnings = config_warnings(cfg, train.dim());

  const NodeGenerator gen(train, cfg.k);
  Rng rng(cfg.seed);
  Solver solver(train.targets(), static_cast<Eigen::Index>(cfg.m));
  EvalTracker tracker(eval, cfg.m);
  std::vector<HiddenNode> nodes;
  nodes.reserve(cfg.m);

  for (std::size_t j = 1; j <= cfg.m; ++j) {
    const std::size_t anchor = rng.index(train.size());
    HiddenNode node = gen.generate(anchor);
    auto candidate = solver.append(hidden_column(node, train.inputs()));
    solver.commit(candidate);
    tracker.add(node);
    nodes.push_back(std::move(node));

    CandidateEvent ev;
    ev.anchor = anchor;
    record.candidates.push_back(ev);
    AcceptanceRow row;
    row.node_count = j;
    row.candidates = j;
    row.train_rmse = solver.rmse();
    if (eval) row.test_rmse = tracker.rmse(solver.beta());
    record.rows.push_back(row);
  }

  TrainResult result{finish_model(std::move(nodes), solver, cfg, train.dim()), std::move(record)};
  result.record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

template <class Solver>
TrainResult train_cddm_with(const Dataset& train, const TrainConfig& cfg, const std::optional<Dataset>& eval) {
  const auto start = std::chrono::steady_clock::now();
  cfg.validate(train.size());
  TrialRecord record;
  record.mode = Mode::CDDM;
  record.warnings = config_warnings(cfg, train.dim());

  const NodeGenerator gen(train, cfg.k);
  Rng rng(cfg.seed);
  Solver solver(train.targets(), static_cast<Eigen::Index>(cfg.m));
  EvalTracker tracker(eval, cfg.m);
  std::vector<HiddenNode> nodes;
  nodes.reserve(cfg.m);

  std::size_t i = 1;
  std::size_t q = 1;
  double rmse_prev = 1.0;
  double theta = cfg.theta0;
  const std::size_t cap = cfg.candidate_cap();

  while (i <= cfg.m) {
    if (record.candidates.size() >= cap) {
      const std::string what = "candidate cap of " + std::to_string(cap) + " reached after " +
                               std::to_string(nodes.size()) + " of " + std::to_string(cfg.m) +
                               " nodes were accepted";
      TrainResult partial{finish_model(std::move(nodes), solver, cfg, train.dim()), std::move(record)};
      partial.record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      throw PartialResultError(what, std::move(partial));
    }
    // (a)-(e): anchor, neighborhood, plane, weights, bias
    const std::size_t anchor = rng.index(train.size());
    HiddenNode node = gen.generate(anchor);
    // (f)-(i): tentative column, output weights and training RMSE
    auto candidate = solver.append(hidden_column(node, train.inputs()));
    const double rmse_i = candidate.rmse();
    // (j)
    const double delta = rmse_i - rmse_prev;
    // (k)
    CandidateEvent ev;
    ev.anchor = anchor;
    ev.theta = theta;
    ev.delta_rmse = delta;
    ++q;
    ev.accepted = accepts(delta, theta);
    if (ev.accepted) {
      solver.commit(candidate);
      tracker.add(node);
      nodes.push_back(std::move(node));
      rmse_prev = rmse_i;
      q = 1;
      AcceptanceRow row;
      row.node_count = i;
      row.candidates = record.candidates.size() + 1;
      row.train_rmse = rmse_i;
      row.theta = theta;
      if (eval) row.test_rmse = tracker.rmse(solver.beta());
      record.rows.push_back(row);
      ++i;
    } else {
      solver.discard(candidate);
    }
    ev.stall = q;
    // (l)
    if (q >= cfg.stall_limit) {
      theta /= 2.0;
      if (cfg.reset_stall_on_halving) q = 1;
    }
    ev.theta_after = theta;
    record.candidates.push_back(ev);
  }

  TrainResult result{finish_model(std::move(nodes), solver, cfg, train.dim()), std::move(record)};
  result.record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace detail

// Non-constructive baseline: m nodes anchored at uniformly drawn training
// samples (with replacement), output weights solved once. The record holds
// the train (and, with `eval`, test) RMSE of every node-count prefix.
inline TrainResult train_ddm(const Dataset& train, const TrainConfig& cfg,
                             const std::optional<Dataset>& eval = std::nullopt) {
  return cfg.naive_pinv ? detail::train_ddm_with<PinvLeastSquares>(train, cfg, eval)
                        : detail::train_ddm_with<IncrementalLeastSquares>(train, cfg, eval);
}

// Constructive variant. Each candidate node is kept only if it lowers the
// training RMSE by at least |theta|; theta halves whenever the stall counter q
// reaches Q. Starts from RMSE_0 = 1, so targets are expected in [0, 1].
inline TrainResult train_cddm(const Dataset& train, const TrainConfig& cfg,
                              const std::optional<Dataset>& eval = std::nullopt) {
  return cfg.naive_pinv ? detail::train_cddm_with<PinvLeastSquares>(train, cfg, eval)
                        : detail::train_cddm_with<IncrementalLeastSquares>(train, cfg, eval);
}

inline TrainResult train(const Dataset& train_set, const TrainConfig& cfg,
                         const std::optional<Dataset>& eval = std::nullopt) {
  return cfg.mode == Mode::DDM ? train_ddm(train_set, cfg, eval) : train_cddm(train_set, cfg, eval);
}

// ---------------------------------------------------------------------------
// Repeated trials

struct Quantiles {
  std::size_t count = 0;
  double p10 = std::numeric_limits<double>::quiet_NaN();
  double p25 = std::numeric_limits<double>::quiet_NaN();
  double median = std::numeric_limits<double>::quiet_NaN();
  double p75 = std::numeric_limits<double>::quiet_NaN();
  double p90 = std::numeric_limits<double>::quiet_NaN();

  double iqr() const { return p75 - p25; }
};

// Linear interpolation between order statistics (R type 7).
inline double percentile(std::vector<double> values, double p) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

inline Quantiles quantiles(const std::vector<double>& values) {
  Quantiles q;
  q.count = values.size();
  if (values.empty()) return q;
  q.p10 = percentile(values, 0.10);
  q.p25 = percentile(values, 0.25);
  q.median = percentile(values, 0.50);
  q.p75 = percentile(values, 0.75);
  q.p90 = percentile(values, 0.90);
  return q;
}

struct TrialOutcome {
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  std::optional<TrainResult> result;
  bool partial = false;  // result holds a capped, incomplete model
  std::string error;

  bool ok() const { return result.has_value() && !partial; }
};

// Thread cap from CDDM_THREADS, else the hardware concurrency.
inline std::size_t default_thread_count() {
  if (const char* env = std::getenv("CDDM_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) {
      throw ConfigError(std::string("CDDM_THREADS must be a positive integer, got '") + env + "'");
    }
    return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs fn(trial_index, trial_seed) for every trial, concurrently. Seeds are
// derived from master_seed and the trial index only, so results do not
// depend on scheduling. Exceptions are captured per trial.
template <class TrialFn>
std::vector<TrialOutcome> run_trials(std::size_t trials, std::uint64_t master_seed, TrialFn fn,
                                     std::size_t threads = default_thread_count()) {
  if (trials < 1) throw ConfigError("trials must be >= 1");
  std::vector<TrialOutcome> outcomes(trials);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t; (t = next.fetch_add(1)) < trials;) {
      auto& out = outcomes[t];
      out.trial = t;
      out.seed = derive_seed(master_seed, t);
      try {
        out.result = fn(t, out.seed);
      } catch (const PartialResultError& e) {
        out.result = e.partial();
        out.partial = true;
        out.error = e.what();
      } catch (const std::exception& e) {
        out.error = e.what();
      }
    }
  };
  threads = std::clamp<std::size_t>(threads, 1, trials);
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < threads; ++w) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  return outcomes;
}

struct CurvePoint {
  std::size_t node_count = 0;
  Quantiles train;
  Quantiles test;
};

// Per-node-count spread across trials. Trials contribute only to node counts
// they reached.
inline std::vector<CurvePoint> convergence_curve(const std::vector<const TrialRecord*>& records) {
  std::size_t max_nodes = 0;
  for (const auto* r : records) max_nodes = std::max(max_nodes, r->rows.size());
  std::vector<CurvePoint> curve;
  for (std::size_t j = 1; j <= max_nodes; ++j) {
    std::vector<double> tr, te;
    for (const auto* r : records) {
      if (r->rows.size() < j) continue;
      tr.push_back(r->rows[j - 1].train_rmse);
      if (std::isfinite(r->rows[j - 1].test_rmse)) te.push_back(r->rows[j - 1].test_rmse);
    }
    curve.push_back({j, quantiles(tr), quantiles(te)});
  }
  return curve;
}

// Smallest node count whose median test RMSE is at or below `level`.
inline std::optional<std::size_t> nodes_to_reach(const std::vector<CurvePoint>& curve, double level) {
  for (const auto& p : curve) {
    if (p.test.count > 0 && p.test.median <= level) return p.node_count;
  }
  return std::nullopt;
}

struct TrialSummary {
  std::size_t succeeded = 0;
  std::size_t failed = 0;
  Quantiles test_rmse;   // final model
  Quantiles train_rmse;  // final model
  Quantiles nodes;
  Quantiles candidates;
  std::vector<std::string> warnings;
};

inline TrialSummary summarize(const std::vector<TrialOutcome>& outcomes) {
  TrialSummary s;
  std::vector<double> te, tr, nodes, cands;
  for (const auto& o : outcomes) {
    if (!o.ok()) {
      ++s.failed;
      s.warnings.push_back("trial " + std::to_string(o.trial) + " failed: " + o.error);
      continue;
    }
    ++s.succeeded;
    const auto& rec = o.result->record;
    if (!rec.rows.empty()) {
      tr.push_back(rec.rows.back().train_rmse);
      if (std::isfinite(rec.rows.back().test_rmse)) te.push_back(rec.rows.back().test_rmse);
    }
    nodes.push_back(static_cast<double>(o.result->model.size()));
    cands.push_back(static_cast<double>(rec.candidates.size()));
  }
  if (s.failed > 0) {
    s.warnings.push_back("aggregating over " + std::to_string(s.succeeded) + " of " +
                         std::to_string(outcomes.size()) + " trials");
  }
  s.test_rmse = quantiles(te);
  s.train_rmse = quantiles(tr);
  s.nodes = quantiles(nodes);
  s.candidates = quantiles(cands);
  return s;
}

}  // namespace cddm

#endif  // CDDM_TRAINER_HPP_
