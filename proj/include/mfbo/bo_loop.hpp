#pragma once

#include <cmath>
#include <random>

#include "mfbo/acquisition.hpp"
#include "mfbo/core.hpp"
#include "mfbo/mfgp.hpp"
#include "mfbo/sampling.hpp"

namespace mfbo {

struct KnownOptimum {
  std::optional<Vector> x;  // location, when the paper/oracle pins one
  double value = 0.0;
};

/// A two-fidelity benchmark problem. Both evaluators are total on the domain.
/// Maximization problems are negated at this boundary: the optimization stack
/// is written for minimization throughout.
struct Problem {
  enum class Sense { kMinimize, kMaximize };

  std::string name;
  Domain domain;
  std::function<double(const Vector&)> eval_low;
  std::function<double(const Vector&)> eval_high;
  Sense sense = Sense::kMinimize;
  std::optional<KnownOptimum> known_optimum;

  double sign() const { return sense == Sense::kMinimize ? 1.0 : -1.0; }
};

struct IterationRecord {
  int t = 0;  // 1..T for BO iterations; T+1 for the finalization entry
  Vector x;   // domain coordinates
  Fidelity fidelity = Fidelity::kHigh;
  double y = std::numeric_limits<double>::quiet_NaN();  // NaN if finalization skipped its eval
  double best_high = std::numeric_limits<double>::quiet_NaN();  // incumbent after this entry
  int n_low = 0;   // totals including initialization
  int n_high = 0;
  double cum_cost = 0.0;
  bool final_stage = false;
};

struct RunRecord {
  std::vector<IterationRecord> iterations;
  int n_low_init = 0;
  int n_high_init = 0;
  int n_low_total = 0;
  int n_high_total = 0;
  double cum_cost = 0.0;
  Vector best_x;
  double best_value = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> final_regret;

  int n_low_acquired() const { return n_low_total - n_low_init; }
  int n_high_acquired() const {
    int n = n_high_total - n_high_init;
    for (const auto& it : iterations) {
      if (it.final_stage && !std::isnan(it.y)) --n;
    }
    return n;
  }
  /// Fraction of BO-acquired evaluations at high fidelity, excluding both the
  /// initialization and the reserved finalization evaluation.
  double hf_usage() const {
    const int acquired = n_low_acquired() + n_high_acquired();
    return acquired > 0 ? static_cast<double>(n_high_acquired()) / acquired : 0.0;
  }
};

/// Sense-adjusted distance of the incumbent to the known optimum.
inline double regret(const RunRecord& record, const Problem& problem) {
  if (!problem.known_optimum) {
    throw std::invalid_argument("regret: problem has no known optimum");
  }
  return std::abs(record.best_value - problem.known_optimum->value);
}

struct RunOptions {
  int fit_restarts = 3;
};

namespace detail {

struct LoopState {
  FidelityDataset data;  // unit-cube coordinates, canonical (minimization) values
  double best_high = std::numeric_limits<double>::infinity();
  Vector best_high_x;  // unit cube
  double best_low = std::numeric_limits<double>::infinity();
  Vector best_low_x;

  void add(Fidelity f, const Vector& u, double y_canon) {
    Matrix& X = f == Fidelity::kLow ? data.X_low : data.X_high;
    Vector& y = f == Fidelity::kLow ? data.y_low : data.y_high;
    X.conservativeResize(X.rows() + 1, u.size());
    X.row(X.rows() - 1) = u.transpose();
    y.conservativeResize(y.size() + 1);
    y[y.size() - 1] = y_canon;
    if (f == Fidelity::kLow && y_canon < best_low) {
      best_low = y_canon;
      best_low_x = u;
    }
    if (f == Fidelity::kHigh && y_canon < best_high) {
      best_high = y_canon;
      best_high_x = u;
    }
  }

  double target_scale() const {
    if (data.y_high.size() < 2) return std::max(std::abs(best_high), 1.0);
    const double mean = data.y_high.mean();
    return std::max(std::sqrt((data.y_high.array() - mean).square().mean()), 1e-12);
  }

  bool duplicate(Fidelity f, const Vector& u) const {
    const Matrix& X = f == Fidelity::kLow ? data.X_low : data.X_high;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      if ((X.row(i).transpose() - u).lpNorm<Eigen::Infinity>() < 1e-9) return true;
    }
    return false;
  }
};

}  // namespace detail

/// Reserved exploitative final step: locate the minimizer of the high-fidelity
/// surrogate mean and, if it differs from the incumbent location, spend one
/// extra high-fidelity evaluation there. The entry is logged either way.
inline void finalize(const std::function<std::pair<double, double>(const Vector&)>& predict_high,
                     RunRecord& record, const Problem& problem, int acq_restarts,
                     std::uint64_t seed) {
  const double sign = problem.sign();
  auto neg_mean = [&](const Vector& u) { return -predict_high(u).first; };
  const Domain unit = Domain::unit_cube(problem.domain.dim());
  Vector incumbent_u = problem.domain.to_unit(record.best_x);
  Vector x_m = maximize_acquisition(neg_mean, unit, acq_restarts, derive_seed(seed, "finalize"),
                                    {incumbent_u});

  IterationRecord entry;
  entry.t = static_cast<int>(record.iterations.size()) + 1;
  entry.final_stage = true;
  entry.fidelity = Fidelity::kHigh;
  entry.x = problem.domain.from_unit(x_m);
  if ((x_m - incumbent_u).lpNorm<Eigen::Infinity>() > 1e-6) {
    const double y_raw = problem.eval_high(entry.x);
    entry.y = y_raw;
    ++record.n_high_total;
    if (sign * y_raw < sign * record.best_value) {
      record.best_value = y_raw;
      record.best_x = entry.x;
    }
  }
  entry.n_low = record.n_low_total;
  entry.n_high = record.n_high_total;
  entry.best_high = record.best_value;
  record.iterations.push_back(entry);
}

/// Runs T propose/evaluate/refit cycles from the given initial design, then
/// the finalization step. The incumbent tracks high-fidelity observations
/// only. Deterministic given (problem, strategy, init, seed).
inline RunRecord run(const Problem& problem, const StrategyConfig& strategy, const Design& init,
                     int T, std::uint64_t seed, const RunOptions& options = {}) {
  if (T < 0) throw std::invalid_argument("run: T must be >= 0");
  const bool standard_bo = strategy.kind == StrategyKind::kStandardBo;
  const double sign = problem.sign();
  const int d = problem.domain.dim();
  const Domain unit = Domain::unit_cube(d);

  std::size_t n_high_init = 0;
  for (bool h : init.high) n_high_init += h ? 1 : 0;
  if (n_high_init == 0) throw std::invalid_argument("run: init needs at least one high point");
  if (!standard_bo && init.size() == 0) {
    throw std::invalid_argument("run: init needs at least one low point");
  }

  RunRecord record;
  detail::LoopState state;
  for (std::size_t i = 0; i < init.size(); ++i) {
    const Vector& x = init.points[i];
    const Vector u = problem.domain.to_unit(x);
    if (!standard_bo) {
      state.add(Fidelity::kLow, u, sign * problem.eval_low(x));
      ++record.n_low_init;
    }
    if (init.high[i]) {
      state.add(Fidelity::kHigh, u, sign * problem.eval_high(x));
      ++record.n_high_init;
    }
  }
  record.n_low_total = record.n_low_init;
  record.n_high_total = record.n_high_init;
  record.best_value = sign * state.best_high;
  record.best_x = problem.domain.from_unit(state.best_high_x);

  const CostWeights& w = strategy.costs;
  std::mt19937_64 fallback_rng(derive_seed(seed, "fallback"));

  // warm starts carried across refits
  MfFitOptions mf_init;
  KernelParams bo_init;
  std::optional<MfGpPosterior> mf_post;
  std::optional<GpPosterior> bo_post;

  auto refit = [&](int t) {
    if (standard_bo) {
      bo_post = fit(state.data.X_high, state.data.y_high, bo_init, options.fit_restarts,
                    derive_seed(seed, "fit", static_cast<std::uint64_t>(t)));
      bo_init = bo_post->params();
    } else {
      mf_post = fit_mfgp(state.data, options.fit_restarts,
                         derive_seed(seed, "fit", static_cast<std::uint64_t>(t)), mf_init);
      mf_init.init_low = mf_post->gp_low().params();
      mf_init.init_delta = mf_post->gp_delta().params();
      mf_init.init_rho = mf_post->rho();
    }
  };

  for (int t = 1; t <= T; ++t) {
    refit(t);

    ProposalState pstate;
    pstate.t = t;
    pstate.n_low = record.n_low_total;
    pstate.n_high = record.n_high_total;
    pstate.best_low = state.best_low;
    pstate.best_high = state.best_high;
    pstate.target_scale = state.target_scale();
    pstate.seed = derive_seed(seed, "proposal", static_cast<std::uint64_t>(t));
    pstate.extra_starts.push_back(state.best_high_x);
    if (!standard_bo) pstate.extra_starts.push_back(state.best_low_x);

    FidelityChoice choice;
    if (standard_bo) {
      const double beta = strategy.beta.value(t);
      auto acq = [&](const Vector& u) {
        auto [m, v] = bo_post->predict(u);
        return weighted_ei(m, std::sqrt(v), state.best_high, beta);
      };
      choice.ranked = maximize_acquisition_candidates(acq, unit, strategy.acq_restarts,
                                                      pstate.seed, pstate.extra_starts);
      choice.x = choice.ranked.front().x;
      choice.acq_high = choice.ranked.front().value;
      choice.fidelity = Fidelity::kHigh;
    } else {
      choice = propose(*mf_post, state.data, strategy, pstate);
    }

    // duplicate guard: fall through the ranked restart results, then random
    Vector u = choice.x;
    if (state.duplicate(choice.fidelity, u)) {
      bool replaced = false;
      for (const AcqCandidate& c : choice.ranked) {
        if (!state.duplicate(choice.fidelity, c.x)) {
          u = c.x;
          replaced = true;
          break;
        }
      }
      while (!replaced) {
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        for (int j = 0; j < d; ++j) u[j] = unif(fallback_rng);
        replaced = !state.duplicate(choice.fidelity, u);
      }
    }

    IterationRecord entry;
    entry.t = t;
    entry.x = problem.domain.from_unit(u);
    entry.fidelity = choice.fidelity;
    const double y_raw = choice.fidelity == Fidelity::kLow ? problem.eval_low(entry.x)
                                                           : problem.eval_high(entry.x);
    state.add(choice.fidelity, u, sign * y_raw);
    entry.y = y_raw;
    if (choice.fidelity == Fidelity::kLow) {
      ++record.n_low_total;
    } else {
      ++record.n_high_total;
      if (sign * y_raw < sign * record.best_value) {
        record.best_value = y_raw;
        record.best_x = entry.x;
      }
    }
    entry.n_low = record.n_low_total;
    entry.n_high = record.n_high_total;
    entry.best_high = record.best_value;
    entry.cum_cost = w.lambda_low * record.n_low_total + w.lambda_high * record.n_high_total;
    record.iterations.push_back(entry);
  }

  refit(T + 1);
  auto predict_high = [&](const Vector& u) {
    return standard_bo ? bo_post->predict(u) : mf_post->predict_high(u);
  };
  finalize(predict_high, record, problem, strategy.acq_restarts, seed);
  record.cum_cost = w.lambda_low * record.n_low_total + w.lambda_high * record.n_high_total;
  record.iterations.back().cum_cost = record.cum_cost;

  if (problem.known_optimum) record.final_regret = regret(record, problem);
  return record;
}

}  // namespace mfbo
