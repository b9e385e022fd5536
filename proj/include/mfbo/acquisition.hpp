#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>

#include "mfbo/core.hpp"
#include "mfbo/mfgp.hpp"
#include "mfbo/opt.hpp"
#include "mfbo/sampling.hpp"

namespace mfbo {

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// Upper confidence bound mu + sqrt(beta) sigma.
inline double ucb(double mean, double sd, double beta) { return mean + std::sqrt(beta) * sd; }

/// Weighted expected improvement for minimization:
/// (f* - mu) Phi(Z) + beta sigma phi(Z) with Z = (f* - mu)/sigma.
/// beta = 1 recovers standard EI; sd = 0 degenerates to max(f* - mu, 0).
inline double weighted_ei(double mean, double sd, double incumbent, double beta) {
  const double delta = incumbent - mean;
  if (sd <= 0.0) return std::max(delta, 0.0);
  const double z = delta / sd;
  return delta * normal_cdf(z) + beta * sd * normal_pdf(z);
}

inline double expected_improvement(double mean, double sd, double incumbent) {
  return weighted_ei(mean, sd, incumbent, 1.0);
}

/// Iteration-adaptive exploration weight: beta(t) = sqrt(0.2 d ln(2t)).
inline double adaptive_beta(int dim, int t) {
  if (dim < 1 || t < 1) throw std::invalid_argument("adaptive_beta: d >= 1 and t >= 1 required");
  return std::sqrt(0.2 * static_cast<double>(dim) * std::log(2.0 * static_cast<double>(t)));
}

struct BetaSchedule {
  enum class Mode { kFixed, kAdaptive };
  Mode mode = Mode::kFixed;
  double beta = 1.0;
  int dim = 1;

  static BetaSchedule fixed(double beta) {
    if (beta < 0.0) throw std::invalid_argument("BetaSchedule: fixed beta must be >= 0");
    return {Mode::kFixed, beta, 1};
  }
  static BetaSchedule adaptive(int dim) { return {Mode::kAdaptive, 0.0, dim}; }

  double value(int t) const {
    return mode == Mode::kFixed ? beta : adaptive_beta(dim, t);
  }
};

struct CostWeights {
  double lambda_low = 1.0;   // lambda_1
  double lambda_high = 1.0;  // lambda_2
  double ratio() const { return lambda_low / lambda_high; }
};

/// Cost-ratio penalties C_low = Lambda (n1 + 1) + n2, C_high = Lambda n1 + (n2 + 1).
inline std::pair<double, double> cost_penalty(const CostWeights& w, int n1, int n2) {
  if (n1 < 0 || n2 < 0) throw std::invalid_argument("cost_penalty: counts must be >= 0");
  const double ratio = w.ratio();
  return {ratio * (n1 + 1) + n2, ratio * n1 + (n2 + 1)};
}

struct AcqCandidate {
  Vector x;
  double value;
};

/// Multi-start bounded maximization of an acquisition surface: local ascent
/// (projected L-BFGS on the negated surface, central-difference gradients)
/// from an LHS of `restarts` starts plus any extra starts supplied by the
/// caller. Returns candidates sorted by value (ties keep start order), so
/// callers can fall through to the next-best distinct point.
inline std::vector<AcqCandidate> maximize_acquisition_candidates(
    const std::function<double(const Vector&)>& f_acq, const Domain& domain, int restarts,
    std::uint64_t seed, const std::vector<Vector>& extra_starts = {}) {
  if (restarts < 1) restarts = 1;
  std::vector<Vector> starts;
  Design lhs_starts = lhs(domain, static_cast<std::size_t>(restarts), derive_seed(seed, "acq_lhs"));
  starts.insert(starts.end(), lhs_starts.points.begin(), lhs_starts.points.end());
  for (const Vector& s : extra_starts) starts.push_back(domain.clamp(s));

  auto neg = opt::with_numerical_gradient([&](const Vector& x) { return -f_acq(x); }, 1e-7);
  opt::Options local;
  local.max_iterations = 60;
  local.value_tol = 1e-11;
  local.grad_tol = 1e-10;

  std::vector<AcqCandidate> candidates;
  candidates.reserve(starts.size());
  for (const Vector& s : starts) {
    opt::Result r = opt::minimize_bounded(neg, s, domain.lower(), domain.upper(), local);
    if (!std::isfinite(r.value)) continue;
    candidates.push_back({domain.clamp(r.x), -r.value});
  }
  if (candidates.empty()) {
    throw ConvergenceError("maximize_acquisition: every start failed to produce a finite value");
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const AcqCandidate& a, const AcqCandidate& b) { return a.value > b.value; });
  return candidates;
}

inline Vector maximize_acquisition(const std::function<double(const Vector&)>& f_acq,
                                   const Domain& domain, int restarts, std::uint64_t seed,
                                   const std::vector<Vector>& extra_starts = {}) {
  return maximize_acquisition_candidates(f_acq, domain, restarts, seed, extra_starts).front().x;
}

enum class StrategyKind { kFidelityWeighted, kMfUcb, kProximity, kStandardBo };

inline const char* to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::kFidelityWeighted: return "fidelity_weighted";
    case StrategyKind::kMfUcb: return "mf_ucb";
    case StrategyKind::kProximity: return "proximity";
    case StrategyKind::kStandardBo: return "standard_bo";
  }
  return "?";
}

struct StrategyConfig {
  StrategyKind kind = StrategyKind::kProximity;
  BetaSchedule beta = BetaSchedule::fixed(1.0);
  CostWeights costs;
  int budget = 30;        // total iteration budget T (scales the cost penalty)
  int acq_restarts = 8;   // multi-start count for acquisition maximization
};

/// Per-iteration inputs to a proposal. Locations are unit-cube coordinates;
/// incumbents are minima of the observed values at each fidelity.
struct ProposalState {
  int t = 1;            // iteration index, 1-based (drives adaptive beta)
  int n_low = 0;        // low-fidelity evaluations so far (incl. initialization)
  int n_high = 0;
  double best_low = 0.0;
  double best_high = 0.0;
  double target_scale = 1.0;  // scale of high-fidelity values, for degeneracy guards
  std::uint64_t seed = 0;
  std::vector<Vector> extra_starts;
};

/// Chosen location and fidelity plus per-strategy diagnostics.
struct FidelityChoice {
  Vector x;
  Fidelity fidelity = Fidelity::kHigh;
  double acq_low = std::numeric_limits<double>::quiet_NaN();
  double acq_high = std::numeric_limits<double>::quiet_NaN();
  double zeta = std::numeric_limits<double>::quiet_NaN();
  double gamma = std::numeric_limits<double>::quiet_NaN();
  double proximity_distance = std::numeric_limits<double>::quiet_NaN();
  std::vector<AcqCandidate> ranked;  // fallbacks for duplicate handling
};

/// Fidelity-weighted strategy: weighted EI at each fidelity, shifted by its
/// cost penalty over the budget; the larger optimum decides both the location
/// and the fidelity (ties go high).
inline FidelityChoice propose_fidelity_weighted(const MfGpPosterior& post,
                                                const FidelityDataset& /*data*/,
                                                const StrategyConfig& cfg,
                                                const ProposalState& state) {
  const Domain unit = Domain::unit_cube(post.dim());
  const double beta = cfg.beta.value(state.t);
  auto [c_low, c_high] = cost_penalty(cfg.costs, state.n_low, state.n_high);
  const double scale = 1.0 / static_cast<double>(std::max(cfg.budget, 1));

  auto acq_low = [&](const Vector& x) {
    auto [m, v] = post.predict_low(x);
    return weighted_ei(m, std::sqrt(v), state.best_low, beta) - scale * c_low;
  };
  auto acq_high = [&](const Vector& x) {
    auto [m, v] = post.predict_high(x);
    return weighted_ei(m, std::sqrt(v), state.best_high, beta) - scale * c_high;
  };

  auto low_cands = maximize_acquisition_candidates(acq_low, unit, cfg.acq_restarts,
                                                   derive_seed(state.seed, "fw_low"),
                                                   state.extra_starts);
  auto high_cands = maximize_acquisition_candidates(acq_high, unit, cfg.acq_restarts,
                                                    derive_seed(state.seed, "fw_high"),
                                                    state.extra_starts);
  FidelityChoice choice;
  choice.acq_low = low_cands.front().value;
  choice.acq_high = high_cands.front().value;
  if (choice.acq_low > choice.acq_high) {
    choice.fidelity = Fidelity::kLow;
    choice.x = low_cands.front().x;
    choice.ranked = std::move(low_cands);
  } else {
    choice.fidelity = Fidelity::kHigh;
    choice.x = high_cands.front().x;
    choice.ranked = std::move(high_cands);
  }
  return choice;
}

/// MF-GPR-UCB: maximizes the combined bound min(alpha_low, alpha_high) where
/// alpha_low carries the pointwise error estimate zeta = |mu_high - mu_low|,
/// then picks low fidelity iff sqrt(beta) sigma_low exceeds the threshold
/// gamma = zeta sqrt(lambda_2/lambda_1). The bounds are formed on the negated
/// means so the combined bound is optimistic for minimization.
inline FidelityChoice propose_mf_ucb(const MfGpPosterior& post, const FidelityDataset& /*data*/,
                                     const StrategyConfig& cfg, const ProposalState& state) {
  const Domain unit = Domain::unit_cube(post.dim());
  const double beta = cfg.beta.value(state.t);

  auto combined = [&](const Vector& x) {
    auto [m_low, v_low] = post.predict_low(x);
    auto [m_high, v_high] = post.predict_high(x);
    const double zeta = std::abs(m_high - m_low);
    const double a_low = ucb(-m_low, std::sqrt(v_low), beta) + zeta;
    const double a_high = ucb(-m_high, std::sqrt(v_high), beta);
    return std::min(a_low, a_high);
  };

  auto cands = maximize_acquisition_candidates(combined, unit, cfg.acq_restarts,
                                               derive_seed(state.seed, "mfucb"),
                                               state.extra_starts);
  FidelityChoice choice;
  choice.x = cands.front().x;
  auto [m_low, v_low] = post.predict_low(choice.x);
  auto [m_high, v_high] = post.predict_high(choice.x);
  choice.acq_low = ucb(-m_low, std::sqrt(v_low), beta) + std::abs(m_high - m_low);
  choice.acq_high = ucb(-m_high, std::sqrt(v_high), beta);
  choice.zeta = std::abs(m_high - m_low);
  choice.gamma = choice.zeta * std::sqrt(cfg.costs.lambda_high / cfg.costs.lambda_low);
  // A vanishing error estimate would lock gamma at zero and the run into low
  // fidelity at converged points; force high fidelity there.
  const bool degenerate = choice.zeta < 1e-6 * state.target_scale;
  choice.fidelity = (!degenerate && std::sqrt(beta) * std::sqrt(v_low) > choice.gamma)
                        ? Fidelity::kLow
                        : Fidelity::kHigh;
  choice.ranked = std::move(cands);
  return choice;
}

/// Proximity-based strategy: one acquisition (weighted EI on the high-fidelity
/// posterior); evaluate low iff the nearest low-fidelity sample is farther
/// than the cost ratio Lambda (unit-cube distance).
inline FidelityChoice propose_proximity(const MfGpPosterior& post, const FidelityDataset& data,
                                        const StrategyConfig& cfg, const ProposalState& state) {
  const Domain unit = Domain::unit_cube(post.dim());
  const double beta = cfg.beta.value(state.t);

  auto acq = [&](const Vector& x) {
    auto [m, v] = post.predict_high(x);
    return weighted_ei(m, std::sqrt(v), state.best_high, beta);
  };
  auto cands = maximize_acquisition_candidates(acq, unit, cfg.acq_restarts,
                                               derive_seed(state.seed, "proximity"),
                                               state.extra_starts);
  FidelityChoice choice;
  choice.x = cands.front().x;
  choice.acq_high = cands.front().value;
  double min_dist = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < data.X_low.rows(); ++i) {
    min_dist = std::min(min_dist, (data.X_low.row(i).transpose() - choice.x).norm());
  }
  choice.proximity_distance = min_dist;
  choice.fidelity = min_dist > cfg.costs.ratio() ? Fidelity::kLow : Fidelity::kHigh;
  choice.ranked = std::move(cands);
  return choice;
}

inline FidelityChoice propose(const MfGpPosterior& post, const FidelityDataset& data,
                              const StrategyConfig& cfg, const ProposalState& state) {
  switch (cfg.kind) {
    case StrategyKind::kFidelityWeighted: return propose_fidelity_weighted(post, data, cfg, state);
    case StrategyKind::kMfUcb: return propose_mf_ucb(post, data, cfg, state);
    case StrategyKind::kProximity: return propose_proximity(post, data, cfg, state);
    case StrategyKind::kStandardBo:
      throw std::invalid_argument("propose: standard_bo is handled by the single-fidelity loop");
  }
  throw std::invalid_argument("propose: unknown strategy");
}

}  // namespace mfbo
