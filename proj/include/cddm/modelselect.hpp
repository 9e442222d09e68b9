#ifndef CDDM_MODELSELECT_HPP_
#define CDDM_MODELSELECT_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "cddm/dataset.hpp"
#include "cddm/error.hpp"
#include "cddm/random.hpp"
#include "cddm/trainer.hpp"

namespace cddm {

inline const std::vector<std::size_t>& default_k_prime_grid() {
  static const std::vector<std::size_t> grid{5, 8, 10, 15, 20, 25, 30, 35, 40, 50};
  return grid;
}

inline const std::vector<std::size_t>& default_m_grid() {
  static const std::vector<std::size_t> grid{25, 50, 100, 150, 200, 250, 300, 400, 500};
  return grid;
}

struct CVPlan {
  std::size_t folds = 10;
  std::vector<std::size_t> fold_of;  // fold id (0-based) for each training sample
  std::vector<std::size_t> k_prime_grid = default_k_prime_grid();
  std::vector<std::size_t> m_grid = default_m_grid();
  std::size_t repetitions = 1;
  std::uint64_t master_seed = 0;

  // Seeded permutation cut into `folds` parts whose sizes differ by at most 1.
  static CVPlan make(std::size_t n_samples, std::uint64_t master_seed, std::size_t folds = 10) {
    if (folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
    if (n_samples < folds) {
      throw ConfigError("cannot cut " + std::to_string(n_samples) + " samples into " + std::to_string(folds) +
                        " folds");
    }
    CVPlan plan;
    plan.folds = folds;
    plan.master_seed = master_seed;
    std::vector<std::size_t> perm(n_samples);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(derive_seed(master_seed, "folds"));
    for (std::size_t i = n_samples - 1; i > 0; --i) std::swap(perm[i], perm[rng.index(i + 1)]);
    plan.fold_of.resize(n_samples);
    for (std::size_t r = 0; r < n_samples; ++r) plan.fold_of[perm[r]] = r % folds;
    return plan;
  }

  std::vector<std::size_t> members(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t l = 0; l < fold_of.size(); ++l) {
      if (fold_of[l] == fold) out.push_back(l);
    }
    return out;
  }

  std::vector<std::size_t> complement(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t l = 0; l < fold_of.size(); ++l) {
      if (fold_of[l] != fold) out.push_back(l);
    }
    return out;
  }
};

struct CVScore {
  std::size_t k_prime = 0;
  std::size_t m = 0;
  std::size_t fold = 0;  // 1-based
  double rmse = 0.0;     // mean over repetitions
};

struct CVCell {
  std::size_t k_prime = 0;
  std::size_t m = 0;
  double mean_rmse = std::numeric_limits<double>::quiet_NaN();
};

struct CVResult {
  std::size_t best_k_prime = 0;
  std::size_t best_m = 0;
  double best_rmse = std::numeric_limits<double>::quiet_NaN();
  std::vector<CVScore> scores;
  std::vector<CVCell> cells;
  std::vector<std::string> warnings;
};

// Mean validation RMSE of every (k', m) grid cell over the plan's folds.
// One run per (k', fold, repetition) is grown to the largest m in the grid;
// both training procedures pass through exactly the states of a shorter run
// with the same seed, so the prefix at m is the m-node model. A run capped
// before reaching some m contributes nothing to that cell.
//
// The winner is the cell with the smallest mean; ties go to the smaller k',
// then the smaller m.
inline CVResult cross_validate(const Dataset& train_set, const CVPlan& plan, const TrainConfig& base,
                               std::size_t threads = default_thread_count()) {
  if (plan.fold_of.size() != train_set.size()) throw ConfigError("CV plan does not match the training set size");
  if (plan.k_prime_grid.empty() || plan.m_grid.empty()) throw ConfigError("CV grid is empty");
  if (plan.repetitions < 1) throw ConfigError("CV repetitions must be >= 1");

  std::vector<std::size_t> kps = plan.k_prime_grid;
  std::vector<std::size_t> ms = plan.m_grid;
  std::sort(kps.begin(), kps.end());
  kps.erase(std::unique(kps.begin(), kps.end()), kps.end());
  std::sort(ms.begin(), ms.end());
  ms.erase(std::unique(ms.begin(), ms.end()), ms.end());
  const std::size_t m_max = ms.back();

  CVResult result;
  std::size_t min_fold_train = train_set.size();
  for (std::size_t f = 0; f < plan.folds; ++f) min_fold_train = std::min(min_fold_train, plan.complement(f).size());
  std::vector<std::size_t> feasible;
  for (std::size_t kp : kps) {
    if (kp < 2 || kp > min_fold_train) {
      result.warnings.push_back("skipping k'=" + std::to_string(kp) + ": infeasible for fold training size " +
                                std::to_string(min_fold_train));
      continue;
    }
    feasible.push_back(kp);
  }
  if (feasible.empty()) throw ConfigError("every k' in the CV grid is infeasible");

  struct Job {
    std::size_t k_prime, fold, rep;
  };
  std::vector<Job> jobs;
  for (std::size_t kp : feasible)
    for (std::size_t f = 0; f < plan.folds; ++f)
      for (std::size_t r = 0; r < plan.repetitions; ++r) jobs.push_back({kp, f, r});

  std::vector<Dataset> fold_train, fold_valid;
  for (std::size_t f = 0; f < plan.folds; ++f) {
    fold_train.push_back(train_set.subset(plan.complement(f), train_set.name() + "-cvtrain"));
    fold_valid.push_back(train_set.subset(plan.members(f), train_set.name() + "-cvvalid"));
  }

  // Per job: validation RMSE at each m of the grid (NaN when not reached).
  std::vector<std::vector<double>> per_job(jobs.size());
  auto outcomes = run_trials(
      jobs.size(), plan.master_seed,
      [&](std::size_t j, std::uint64_t) -> TrainResult {
        const Job& job = jobs[j];
        TrainConfig cfg = base;
        cfg.set_k_prime(job.k_prime);
        cfg.m = m_max;
        cfg.seed = derive_seed(derive_seed(plan.master_seed, job.k_prime * 1000003ULL + job.fold),
                               job.rep);
        return train(fold_train[job.fold], cfg, fold_valid[job.fold]);
      },
      threads);

  for (std::size_t j = 0; j < jobs.size(); ++j) {
    const auto& o = outcomes[j];
    per_job[j].assign(ms.size(), std::numeric_limits<double>::quiet_NaN());
    if (!o.result) {
      result.warnings.push_back("k'=" + std::to_string(jobs[j].k_prime) + " fold " +
                                std::to_string(jobs[j].fold + 1) + " failed: " + o.error);
      continue;
    }
    if (o.partial) {
      result.warnings.push_back("k'=" + std::to_string(jobs[j].k_prime) + " fold " +
                                std::to_string(jobs[j].fold + 1) + ": " + o.error);
    }
    const auto& rows = o.result->record.rows;
    for (std::size_t c = 0; c < ms.size(); ++c) {
      if (rows.size() >= ms[c]) per_job[j][c] = rows[ms[c] - 1].test_rmse;
    }
  }

  // Aggregate: fold score = mean over repetitions, cell score = mean over folds.
  for (std::size_t kp : feasible) {
    for (std::size_t c = 0; c < ms.size(); ++c) {
      double cell_sum = 0.0;
      std::size_t cell_n = 0;
      bool complete = true;
      for (std::size_t f = 0; f < plan.folds; ++f) {
        double s = 0.0;
        std::size_t n = 0;
        for (std::size_t j = 0; j < jobs.size(); ++j) {
          if (jobs[j].k_prime != kp || jobs[j].fold != f) continue;
          if (std::isfinite(per_job[j][c])) {
            s += per_job[j][c];
            ++n;
          }
        }
        if (n == 0) {
          complete = false;
          continue;
        }
        const double fold_rmse = s / static_cast<double>(n);
        result.scores.push_back({kp, ms[c], f + 1, fold_rmse});
        cell_sum += fold_rmse;
        ++cell_n;
      }
      CVCell cell{kp, ms[c], std::numeric_limits<double>::quiet_NaN()};
      if (complete && cell_n > 0) {
        cell.mean_rmse = cell_sum / static_cast<double>(cell_n);
      } else {
        result.warnings.push_back("cell k'=" + std::to_string(kp) + ", m=" + std::to_string(ms[c]) +
                                  " skipped: not every fold reached m");
      }
      result.cells.push_back(cell);
    }
  }

  for (const auto& cell : result.cells) {
    if (!std::isfinite(cell.mean_rmse)) continue;
    // cells are visited in ascending (k', m) order, so strict < keeps the simpler cell on ties
    if (!std::isfinite(result.best_rmse) || cell.mean_rmse < result.best_rmse) {
      result.best_rmse = cell.mean_rmse;
      result.best_k_prime = cell.k_prime;
      result.best_m = cell.m;
    }
  }
  if (!std::isfinite(result.best_rmse)) throw NumericalError("cross-validation produced no usable cell");
  return result;
}

inline void write_scores_csv(const CVResult& result, std::ostream& out) {
  out << "k_prime,m,fold,rmse\n";
  for (const auto& s : result.scores) {
    out << s.k_prime << ',' << s.m << ',' << s.fold << ',' << detail::format_real(s.rmse) << '\n';
  }
}

}  // namespace cddm

#endif  // CDDM_MODELSELECT_HPP_
