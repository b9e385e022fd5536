#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <thread>

#include "mfbo/bo_loop.hpp"
#include "mfbo/objectives.hpp"
#include "mfbo/sampling.hpp"

namespace mfbo {

struct BetaSpec {
  bool adaptive = false;
  double value = 1.0;

  std::string label() const {
    if (adaptive) return "adaptive";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", value);
    return buf;
  }
};

/// One sweep: a problem, a (strategy x beta x Lambda) grid, and a seed fan.
/// Init sizes default to the per-dimension counts used throughout the
/// benchmark set (4 low / 1 high in 1D, 12 low / 3 high in 2D).
struct ExperimentConfig {
  std::string problem = "forrester";
  std::vector<std::string> strategies = {"proximity"};
  std::vector<BetaSpec> betas = {{false, 1.0}};
  std::vector<double> lambdas = {0.2};
  int seeds = 10;
  int iters = 30;
  int n_low_init = 0;   // 0 = per-dimension default
  int n_high_init = 0;
  std::uint64_t master_seed = 2024;
  int threads = 0;      // 0 = hardware concurrency
  std::string out_dir;  // empty = no files written
  int fit_restarts = 3;
  int acq_restarts = 8;
};

struct UsageStats {
  double min = 0, q25 = 0, median = 0, q75 = 0, max = 0, mean = 0;
};

/// HF-usage distribution over a set of runs (post-initialization evaluations
/// only, finalization excluded).
inline UsageStats usage_stats(const std::vector<RunRecord>& records) {
  if (records.empty()) throw std::invalid_argument("usage_stats: empty record set");
  std::vector<double> u;
  u.reserve(records.size());
  for (const auto& r : records) u.push_back(r.hf_usage());
  std::sort(u.begin(), u.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(u.size() - 1);
    const std::size_t i = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(i);
    return i + 1 < u.size() ? u[i] * (1.0 - frac) + u[i + 1] * frac : u[i];
  };
  UsageStats s;
  s.min = u.front();
  s.q25 = quantile(0.25);
  s.median = quantile(0.5);
  s.q75 = quantile(0.75);
  s.max = u.back();
  double acc = 0;
  for (double v : u) acc += v;
  s.mean = acc / static_cast<double>(u.size());
  return s;
}

struct RegretCurvePoint {
  int iter = 0;
  double mean_best = 0, q25 = 0, q75 = 0, mean_hf_usage = 0;
};

struct CellKey {
  std::string strategy;
  BetaSpec beta;
  double lambda = 0.2;

  std::string id() const {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", lambda);
    return strategy + "|" + beta.label() + "|" + buf;
  }
};

struct CellSummary {
  CellKey key;
  int seeds = 0;
  std::vector<RegretCurvePoint> regret_curve;
  UsageStats usage;
  double hit_rate = std::numeric_limits<double>::quiet_NaN();
  double mean_final_regret = std::numeric_limits<double>::quiet_NaN();
  double median_final_regret = std::numeric_limits<double>::quiet_NaN();
  double mean_hf_evals = 0;  // total HF evaluations incl. init and finalization
};

struct SweepSummary {
  std::string problem;
  int iters = 0;
  std::vector<CellSummary> cells;
};

struct SweepResult {
  SweepSummary summary;
  // cell-major, seed-minor; runs[c * seeds + s]
  std::vector<RunRecord> runs;
};

namespace detail {

inline StrategyKind parse_strategy(const std::string& name) {
  if (name == "fidelity_weighted") return StrategyKind::kFidelityWeighted;
  if (name == "mf_ucb") return StrategyKind::kMfUcb;
  if (name == "proximity") return StrategyKind::kProximity;
  if (name == "standard_bo") return StrategyKind::kStandardBo;
  throw ConfigError("unknown strategy: " + name);
}

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

inline double quantile_sorted(const std::vector<double>& v, double q) {
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t i = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(i);
  return i + 1 < v.size() ? v[i] * (1.0 - frac) + v[i + 1] * frac : v[i];
}

/// Whether a finished run counts as having found the global optimum: final
/// location within 5% of the domain (unit-cube distance) of the known one.
inline bool found_optimum(const RunRecord& record, const Problem& problem) {
  if (!problem.known_optimum || !problem.known_optimum->x) return false;
  const Vector du = problem.domain.to_unit(record.best_x) -
                    problem.domain.to_unit(*problem.known_optimum->x);
  return du.norm() < 0.05;
}

}  // namespace detail

/// Executes the full (strategy x beta x Lambda) x seeds grid. Run seeds are
/// derived from (master seed, cell id, seed index), so enlarging the grid or
/// the seed fan never perturbs existing runs; initial designs depend only on
/// (problem, seed index), so every cell sees identical initializations.
/// Writes runs.csv and summary.csv under out_dir when set.
inline SweepResult run_sweep(const ExperimentConfig& cfg) {
  if (cfg.seeds < 1) throw ConfigError("run_sweep: seeds must be >= 1");
  if (cfg.iters < 0) throw ConfigError("run_sweep: iters must be >= 0");
  for (double l : cfg.lambdas) {
    if (!(l > 0)) throw ConfigError("run_sweep: Lambda values must be > 0");
  }
  const Problem problem = make_problem(cfg.problem);
  std::vector<CellKey> cells;
  for (const std::string& s : cfg.strategies) {
    detail::parse_strategy(s);  // fail fast on typos, before any run
    for (const BetaSpec& b : cfg.betas) {
      for (double l : cfg.lambdas) cells.push_back({s, b, l});
    }
  }
  if (cells.empty()) throw ConfigError("run_sweep: empty strategy/beta/lambda grid");

  const int d = problem.domain.dim();
  const int n_low = cfg.n_low_init > 0 ? cfg.n_low_init : (d == 1 ? 4 : 12);
  const int n_high = cfg.n_high_init > 0 ? cfg.n_high_init : (d == 1 ? 1 : 3);
  if (n_high > n_low) throw ConfigError("run_sweep: n_high_init exceeds n_low_init");

  struct Task {
    std::size_t cell;
    int seed_index;
  };
  std::vector<Task> tasks;
  tasks.reserve(cells.size() * static_cast<std::size_t>(cfg.seeds));
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (int s = 0; s < cfg.seeds; ++s) tasks.push_back({c, s});
  }

  std::vector<RunRecord> runs(tasks.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      if (first_error) return;
      const Task& task = tasks[i];
      const CellKey& key = cells[task.cell];
      try {
        Design init = lhs(problem.domain, static_cast<std::size_t>(n_low),
                          derive_seed(cfg.master_seed, cfg.problem + "|init",
                                      static_cast<std::uint64_t>(task.seed_index)));
        init = nested_subset(init, static_cast<std::size_t>(n_high),
                             derive_seed(cfg.master_seed, cfg.problem + "|nest",
                                         static_cast<std::uint64_t>(task.seed_index)));
        StrategyConfig strat;
        strat.kind = detail::parse_strategy(key.strategy);
        strat.beta = key.beta.adaptive ? BetaSchedule::adaptive(d) : BetaSchedule::fixed(key.beta.value);
        strat.costs = CostWeights{key.lambda, 1.0};
        strat.budget = cfg.iters;
        strat.acq_restarts = cfg.acq_restarts;
        RunOptions opts;
        opts.fit_restarts = cfg.fit_restarts;
        const std::uint64_t run_seed = derive_seed(
            cfg.master_seed, cfg.problem + "|" + key.id(), static_cast<std::uint64_t>(task.seed_index));
        runs[i] = run(problem, strat, init, cfg.iters, run_seed, opts);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };

  unsigned n_threads = cfg.threads > 0 ? static_cast<unsigned>(cfg.threads)
                                       : std::max(1u, std::thread::hardware_concurrency());
  n_threads = std::min<unsigned>(n_threads, static_cast<unsigned>(tasks.size()));
  std::vector<std::thread> pool;
  for (unsigned i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);

  // deterministic ordered reduce into per-cell summaries
  SweepResult result;
  result.summary.problem = cfg.problem;
  result.summary.iters = cfg.iters;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    CellSummary cell;
    cell.key = cells[c];
    cell.seeds = cfg.seeds;
    std::vector<RunRecord> cell_runs(runs.begin() + static_cast<long>(c * cfg.seeds),
                                     runs.begin() + static_cast<long>((c + 1) * cfg.seeds));
    cell.usage = usage_stats(cell_runs);

    const std::size_t rows = cell_runs.front().iterations.size();
    for (std::size_t t = 0; t < rows; ++t) {
      std::vector<double> best;
      double usage_acc = 0;
      for (const auto& r : cell_runs) {
        best.push_back(r.iterations[t].best_high);
        const int acq_low = r.iterations[t].n_low - r.n_low_init;
        const int acq_high = r.iterations[t].n_high - r.n_high_init;
        usage_acc += (acq_low + acq_high) > 0
                         ? static_cast<double>(acq_high) / (acq_low + acq_high)
                         : 0.0;
      }
      std::sort(best.begin(), best.end());
      RegretCurvePoint pt;
      pt.iter = static_cast<int>(t) + 1;
      pt.mean_best = std::accumulate(best.begin(), best.end(), 0.0) / best.size();
      pt.q25 = detail::quantile_sorted(best, 0.25);
      pt.q75 = detail::quantile_sorted(best, 0.75);
      pt.mean_hf_usage = usage_acc / static_cast<double>(cell_runs.size());
      cell.regret_curve.push_back(pt);
    }

    double hf_evals = 0;
    for (const auto& r : cell_runs) hf_evals += r.n_high_total;
    cell.mean_hf_evals = hf_evals / static_cast<double>(cell_runs.size());

    if (problem.known_optimum) {
      std::vector<double> regrets;
      int hits = 0;
      for (const auto& r : cell_runs) {
        regrets.push_back(regret(r, problem));
        hits += detail::found_optimum(r, problem) ? 1 : 0;
      }
      std::sort(regrets.begin(), regrets.end());
      cell.mean_final_regret =
          std::accumulate(regrets.begin(), regrets.end(), 0.0) / regrets.size();
      cell.median_final_regret = detail::quantile_sorted(regrets, 0.5);
      if (problem.known_optimum->x) {
        cell.hit_rate = static_cast<double>(hits) / static_cast<double>(cfg.seeds);
      }
    }
    result.summary.cells.push_back(std::move(cell));
  }
  result.runs = std::move(runs);

  if (!cfg.out_dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    std::ofstream run_csv(fs::path(cfg.out_dir) / "runs.csv");
    run_csv << "seed,iter,strategy,beta,lambda_ratio,fidelity";
    for (int j = 0; j < d; ++j) run_csv << ",x" << j;
    run_csv << ",y,best_hf,n_low,n_high,cum_cost\n";
    for (std::size_t c = 0; c < cells.size(); ++c) {
      for (int s = 0; s < cfg.seeds; ++s) {
        const RunRecord& r = result.runs[c * cfg.seeds + s];
        for (const auto& it : r.iterations) {
          run_csv << s << ',' << it.t << ',' << cells[c].strategy << ',' << cells[c].beta.label()
                  << ',' << detail::fmt(cells[c].lambda) << ',' << to_string(it.fidelity);
          for (int j = 0; j < d; ++j) run_csv << ',' << detail::fmt(it.x[j]);
          run_csv << ',' << detail::fmt(it.y) << ',' << detail::fmt(it.best_high) << ','
                  << it.n_low << ',' << it.n_high << ',' << detail::fmt(it.cum_cost) << '\n';
        }
      }
    }

    std::ofstream sum_csv(fs::path(cfg.out_dir) / "summary.csv");
    sum_csv << "problem,strategy,beta,lambda_ratio,seeds,iters,mean_final_regret,"
               "median_final_regret,hit_rate,mean_hf_usage,usage_min,usage_q25,usage_median,"
               "usage_q75,usage_max,mean_hf_evals\n";
    for (const CellSummary& cell : result.summary.cells) {
      sum_csv << cfg.problem << ',' << cell.key.strategy << ',' << cell.key.beta.label() << ','
              << detail::fmt(cell.key.lambda) << ',' << cell.seeds << ',' << cfg.iters << ','
              << detail::fmt(cell.mean_final_regret) << ','
              << detail::fmt(cell.median_final_regret) << ',' << detail::fmt(cell.hit_rate) << ','
              << detail::fmt(cell.usage.mean) << ',' << detail::fmt(cell.usage.min) << ','
              << detail::fmt(cell.usage.q25) << ',' << detail::fmt(cell.usage.median) << ','
              << detail::fmt(cell.usage.q75) << ',' << detail::fmt(cell.usage.max) << ','
              << detail::fmt(cell.mean_hf_evals) << '\n';
    }
  }
  return result;
}

enum class PlotKind { kRegretCurve, kUsageBox, kHitTable };

inline PlotKind parse_plot_kind(const std::string& name) {
  if (name == "regret_curve") return PlotKind::kRegretCurve;
  if (name == "usage_box") return PlotKind::kUsageBox;
  if (name == "hit_table") return PlotKind::kHitTable;
  throw ConfigError("unknown plot kind: " + name);
}

/// Columnar plot-ready output. regret_curve rows end with
/// (iter, mean_best, q25, q75, mean_hf_usage); usage_box emits per-Lambda
/// five-number summaries; hit_table is the strategies x beta hit-rate matrix
/// (averaged over the Lambda grid).
inline void emit_plot_data(const SweepSummary& summary, PlotKind kind, std::ostream& out) {
  switch (kind) {
    case PlotKind::kRegretCurve: {
      out << "strategy,beta,lambda_ratio,iter,mean_best,q25,q75,mean_hf_usage\n";
      for (const CellSummary& cell : summary.cells) {
        for (const RegretCurvePoint& pt : cell.regret_curve) {
          out << cell.key.strategy << ',' << cell.key.beta.label() << ','
              << detail::fmt(cell.key.lambda) << ',' << pt.iter << ',' << detail::fmt(pt.mean_best)
              << ',' << detail::fmt(pt.q25) << ',' << detail::fmt(pt.q75) << ','
              << detail::fmt(pt.mean_hf_usage) << '\n';
        }
      }
      return;
    }
    case PlotKind::kUsageBox: {
      out << "strategy,beta,lambda_ratio,min,q25,median,q75,max\n";
      for (const CellSummary& cell : summary.cells) {
        out << cell.key.strategy << ',' << cell.key.beta.label() << ','
            << detail::fmt(cell.key.lambda) << ',' << detail::fmt(cell.usage.min) << ','
            << detail::fmt(cell.usage.q25) << ',' << detail::fmt(cell.usage.median) << ','
            << detail::fmt(cell.usage.q75) << ',' << detail::fmt(cell.usage.max) << '\n';
      }
      return;
    }
    case PlotKind::kHitTable: {
      std::vector<std::string> strategies, beta_labels;
      for (const CellSummary& cell : summary.cells) {
        if (std::find(strategies.begin(), strategies.end(), cell.key.strategy) == strategies.end())
          strategies.push_back(cell.key.strategy);
        if (std::find(beta_labels.begin(), beta_labels.end(), cell.key.beta.label()) ==
            beta_labels.end())
          beta_labels.push_back(cell.key.beta.label());
      }
      out << "beta";
      for (const auto& s : strategies) out << ',' << s;
      out << '\n';
      for (const auto& b : beta_labels) {
        out << b;
        for (const auto& s : strategies) {
          double acc = 0;
          int n = 0;
          for (const CellSummary& cell : summary.cells) {
            if (cell.key.strategy == s && cell.key.beta.label() == b &&
                !std::isnan(cell.hit_rate)) {
              acc += cell.hit_rate;
              ++n;
            }
          }
          out << ',' << (n > 0 ? detail::fmt(acc / n) : "nan");
        }
        out << '\n';
      }
      return;
    }
  }
  throw ConfigError("emit_plot_data: unknown kind");
}

inline void emit_plot_data(const SweepSummary& summary, PlotKind kind, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("emit_plot_data: cannot open " + path);
  emit_plot_data(summary, kind, out);
}

}  // namespace mfbo
