#include <gtest/gtest.h>

#include <random>

#include "mfbo/acquisition.hpp"
#include "mfbo/objectives.hpp"
#include "mfbo/sampling.hpp"

namespace mfbo {
namespace {

TEST(Ucb, HandValues) {
  EXPECT_DOUBLE_EQ(ucb(1.0, 2.0, 4.0), 5.0);
  EXPECT_DOUBLE_EQ(ucb(0.7, 2.0, 0.0), 0.7);
  EXPECT_DOUBLE_EQ(ucb(0.7, 0.0, 9.0), 0.7);
}

TEST(WeightedEi, DeterministicLimit) {
  EXPECT_DOUBLE_EQ(weighted_ei(1.0, 0.0, 3.0, 1.0), 2.0);
  EXPECT_DOUBLE_EQ(weighted_ei(5.0, 0.0, 3.0, 1.0), 0.0);
}

TEST(WeightedEi, AtIncumbentMeanOnlyDensityTermSurvives) {
  EXPECT_NEAR(weighted_ei(2.0, 1.0, 2.0, 1.0), 1.0 / std::sqrt(2.0 * M_PI), 1e-14);
  EXPECT_NEAR(weighted_ei(2.0, 1.0, 2.0, 1.0), 0.3989422804014327, 1e-12);
}

TEST(WeightedEi, BetaOneIsClosedFormEi) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal(0.0, 2.0);
  std::uniform_real_distribution<double> unif(0.01, 3.0);
  for (int i = 0; i < 200; ++i) {
    const double mu = normal(rng), f_star = normal(rng), sd = unif(rng);
    const double z = (f_star - mu) / sd;
    const double ei = (f_star - mu) * normal_cdf(z) + sd * normal_pdf(z);
    EXPECT_NEAR(weighted_ei(mu, sd, f_star, 1.0), ei, 1e-12);
    EXPECT_NEAR(expected_improvement(mu, sd, f_star), ei, 1e-12);
  }
}

TEST(WeightedEi, NonNegativeAndDominatesEiFromBetaOne) {
  // the formula as written admits small negative values for beta < 1 when the
  // mean sits above the incumbent; from beta = 1 it dominates EI >= 0
  std::mt19937_64 rng(6);
  std::normal_distribution<double> normal(0.0, 2.0);
  std::uniform_real_distribution<double> unif(0.0, 3.0);
  for (int i = 0; i < 200; ++i) {
    const double mu = normal(rng), f_star = normal(rng), sd = unif(rng);
    for (double beta : {1.0, 3.0, 5.0}) {
      const double v = weighted_ei(mu, sd, f_star, beta);
      EXPECT_GE(v, -1e-12);
      EXPECT_GE(v, expected_improvement(mu, sd, f_star) - 1e-14);
    }
  }
}

TEST(AdaptiveBeta, HandValuesAndMonotonicity) {
  EXPECT_NEAR(adaptive_beta(2, 1), std::sqrt(0.2 * 2.0 * std::log(2.0)), 1e-15);
  EXPECT_NEAR(adaptive_beta(2, 1), 0.5265537695468319, 1e-12);
  EXPECT_NEAR(adaptive_beta(1, 1), 0.3723297411059034, 1e-12);
  double prev = 0.0;
  for (int t = 1; t <= 64; t *= 2) {
    const double b = adaptive_beta(2, t);
    EXPECT_GE(b, prev);
    prev = b;
  }
  EXPECT_GT(adaptive_beta(4, 10), adaptive_beta(2, 10));
  EXPECT_THROW(adaptive_beta(0, 1), std::invalid_argument);
}

TEST(CostPenalty, HandValues) {
  auto [cl, ch] = cost_penalty(CostWeights{0.5, 1.0}, 4, 1);
  EXPECT_DOUBLE_EQ(cl, 3.5);
  EXPECT_DOUBLE_EQ(ch, 4.0);

  auto [cl1, ch1] = cost_penalty(CostWeights{2.0, 2.0}, 3, 2);
  EXPECT_DOUBLE_EQ(cl1, ch1);
  EXPECT_DOUBLE_EQ(cl1, 6.0);

  auto [cl2, ch2] = cost_penalty(CostWeights{0.1, 1.0}, 0, 0);
  EXPECT_DOUBLE_EQ(cl2, 0.1);
  EXPECT_DOUBLE_EQ(ch2, 1.0);
}

TEST(CostPenalty, CrossoverAtUnitRatio) {
  for (int n1 : {0, 3, 10}) {
    for (int n2 : {0, 2, 7}) {
      auto [cl_low, ch_low] = cost_penalty(CostWeights{0.8, 1.0}, n1, n2);
      EXPECT_LT(cl_low, ch_low);
      auto [cl_high, ch_high] = cost_penalty(CostWeights{1.25, 1.0}, n1, n2);
      EXPECT_GT(cl_high, ch_high);
      auto [cl_eq, ch_eq] = cost_penalty(CostWeights{1.0, 1.0}, n1, n2);
      EXPECT_DOUBLE_EQ(cl_eq, ch_eq);
    }
  }
}

TEST(MaximizeAcquisition, RecoversConcaveQuadraticArgmax) {
  const Vector c = (Vector(2) << 0.31, 0.62).finished();
  auto f = [&](const Vector& x) { return -(x - c).squaredNorm(); };
  const Domain unit = Domain::unit_cube(2);
  const Vector x = maximize_acquisition(f, unit, 6, 3);
  EXPECT_NEAR((x - c).norm(), 0.0, 1e-6);
}

TEST(MaximizeAcquisition, BoundaryMaximumIsClipped) {
  auto f = [](const Vector& x) { return x[0]; };
  const Domain unit = Domain::unit_cube(1);
  const Vector x = maximize_acquisition(f, unit, 4, 5);
  EXPECT_NEAR(x[0], 1.0, 1e-9);
}

TEST(MaximizeAcquisition, MoreRestartsNeverWorse) {
  auto f = [](const Vector& x) {
    return std::sin(9.0 * x[0]) * std::cos(7.0 * x[1]) + 0.4 * std::sin(23.0 * x[0]);
  };
  const Domain unit = Domain::unit_cube(2);
  for (std::uint64_t seed : {1u, 9u, 33u}) {
    const double v1 = maximize_acquisition_candidates(f, unit, 1, seed).front().value;
    const double v16 = maximize_acquisition_candidates(f, unit, 16, seed).front().value;
    EXPECT_GE(v16, v1 - 1e-12);
  }
}

// --- strategy fixtures ---------------------------------------------------------

Matrix to_matrix(const std::vector<Vector>& pts) {
  Matrix X(static_cast<Eigen::Index>(pts.size()), pts.front().size());
  for (std::size_t i = 0; i < pts.size(); ++i) X.row(static_cast<Eigen::Index>(i)) = pts[i];
  return X;
}

FidelityDataset forrester_data(int n_low, int n_high, std::uint64_t seed) {
  const Domain dom = Domain::unit_cube(1);
  Design design = nested_subset(lhs(dom, static_cast<std::size_t>(n_low), seed),
                                static_cast<std::size_t>(n_high), seed);
  FidelityDataset data;
  data.X_low = to_matrix(design.points);
  data.y_low.resize(n_low);
  for (int i = 0; i < n_low; ++i) data.y_low[i] = forrester(data.X_low(i, 0), Fidelity::kLow);
  data.X_high = to_matrix(design.high_points());
  data.y_high.resize(data.X_high.rows());
  for (Eigen::Index i = 0; i < data.X_high.rows(); ++i) {
    data.y_high[i] = forrester(data.X_high(i, 0), Fidelity::kHigh);
  }
  return data;
}

ProposalState state_for(const FidelityDataset& data, std::uint64_t seed) {
  ProposalState s;
  s.t = 1;
  s.n_low = static_cast<int>(data.y_low.size());
  s.n_high = static_cast<int>(data.y_high.size());
  s.best_low = data.y_low.minCoeff();
  s.best_high = data.y_high.minCoeff();
  s.target_scale = 1.0;
  s.seed = seed;
  return s;
}

/// Dataset whose high data exactly equals the low surrogate at shared points,
/// making the two fidelity surfaces agree up to a vanishing correction term.
std::pair<FidelityDataset, MfGpPosterior> symmetric_fixture(std::uint64_t seed) {
  FidelityDataset data = forrester_data(8, 8, seed);
  data.X_high = data.X_low;
  GpPosterior gp_low = fit(data.X_low, data.y_low, KernelParams{}, 3, seed);
  data.y_high.resize(data.X_high.rows());
  for (Eigen::Index i = 0; i < data.X_high.rows(); ++i) {
    data.y_high[i] = gp_low.predict(data.X_high.row(i)).first;
  }
  MfFitOptions opts;
  opts.fixed_rho = 1.0;
  MfGpPosterior post = fit_mfgp(data, 3, seed, opts);
  return {std::move(data), std::move(post)};
}

TEST(FidelityWeighted, PenaltyOrderingDecidesOnSymmetricSurfaces) {
  auto [data, post] = symmetric_fixture(3);
  StrategyConfig cfg;
  cfg.kind = StrategyKind::kFidelityWeighted;
  cfg.beta = BetaSchedule::fixed(1.0);
  cfg.budget = 30;
  cfg.acq_restarts = 6;

  cfg.costs = CostWeights{0.4, 1.0};  // Lambda < 1: low is cheaper
  FidelityChoice low_choice = propose_fidelity_weighted(post, data, cfg, state_for(data, 5));
  EXPECT_EQ(low_choice.fidelity, Fidelity::kLow);

  cfg.costs = CostWeights{2.5, 1.0};  // Lambda > 1: penalty crossover flips to high
  FidelityChoice high_choice = propose_fidelity_weighted(post, data, cfg, state_for(data, 5));
  EXPECT_EQ(high_choice.fidelity, Fidelity::kHigh);
}

TEST(FidelityWeighted, PenaltyShrinksWithBudget) {
  FidelityDataset data = forrester_data(6, 2, 7);
  MfGpPosterior post = fit_mfgp(data, 3, 7);
  StrategyConfig cfg;
  cfg.kind = StrategyKind::kFidelityWeighted;
  cfg.costs = CostWeights{0.5, 1.0};
  ProposalState st = state_for(data, 11);
  auto [c_low, c_high] = cost_penalty(cfg.costs, st.n_low, st.n_high);

  for (int budget : {10, 100, 1000}) {
    cfg.budget = budget;
    FidelityChoice choice = propose_fidelity_weighted(post, data, cfg, st);
    const double beta = cfg.beta.value(st.t);
    // the reported optimum is the base acquisition at the winning point minus
    // the fidelity's penalty over the budget: |alpha_fw - alpha| = C_s / T
    const double penalty = (choice.fidelity == Fidelity::kHigh ? c_high : c_low) / budget;
    auto [m, v] = choice.fidelity == Fidelity::kHigh ? post.predict_high(choice.x)
                                                     : post.predict_low(choice.x);
    const double incumbent = choice.fidelity == Fidelity::kHigh ? st.best_high : st.best_low;
    const double base = weighted_ei(m, std::sqrt(v), incumbent, beta);
    const double reported = choice.fidelity == Fidelity::kHigh ? choice.acq_high : choice.acq_low;
    EXPECT_NEAR(reported, base - penalty, 1e-9);
    EXPECT_LE(std::abs(reported - base), penalty + 1e-9);
  }
}

TEST(MfUcb, DegenerateErrorBoundForcesHighFidelity) {
  auto [data, post] = symmetric_fixture(13);  // identical means: zeta ~ 0 everywhere
  StrategyConfig cfg;
  cfg.kind = StrategyKind::kMfUcb;
  cfg.beta = BetaSchedule::fixed(3.0);
  cfg.costs = CostWeights{0.2, 1.0};
  FidelityChoice choice = propose_mf_ucb(post, data, cfg, state_for(data, 17));
  EXPECT_LT(choice.zeta, 1e-5);
  EXPECT_EQ(choice.fidelity, Fidelity::kHigh);
}

TEST(MfUcb, SparseLowDataWithCheapLowCostSelectsLow) {
  // genuine discrepancy (zeta > 0) and a generous threshold ratio keep gamma
  // small; with visible sigma_low the rule must pick the cheap fidelity
  FidelityDataset data = forrester_data(4, 2, 19);
  MfGpPosterior post = fit_mfgp(data, 3, 19);
  StrategyConfig cfg;
  cfg.kind = StrategyKind::kMfUcb;
  cfg.beta = BetaSchedule::fixed(3.0);
  cfg.costs = CostWeights{100.0, 1.0};  // lambda2/lambda1 = 0.01 -> gamma ~ 0.1 zeta
  FidelityChoice choice = propose_mf_ucb(post, data, cfg, state_for(data, 23));
  EXPECT_EQ(choice.fidelity, Fidelity::kLow);
  EXPECT_GT(choice.zeta, 0.0);
  EXPECT_NEAR(choice.gamma, choice.zeta * std::sqrt(1.0 / 100.0), 1e-12);
}

TEST(MfUcb, CombinedBoundBelowHighBoundAndShiftEquivariant) {
  FidelityDataset data = forrester_data(6, 3, 29);
  MfGpPosterior base = fit_mfgp(data, 3, 29);

  // rebuild both component GPs with a constant shift and rho = 1 so the means
  // shift exactly; the proposal must not move
  const double rho = 1.0;
  GpPosterior gp_low = base.gp_low();
  Vector mu_at_high(data.X_high.rows());
  for (Eigen::Index i = 0; i < data.X_high.rows(); ++i) {
    mu_at_high[i] = gp_low.predict(data.X_high.row(i)).first;
  }
  GpPosterior gp_delta(data.X_high, data.y_high - rho * mu_at_high,
                       base.gp_delta().params(), 0.0);
  MfGpPosterior post(gp_low, rho, gp_delta);

  const double shift = 4.2;
  GpPosterior gp_low_shift(gp_low.train_inputs(), gp_low.train_targets().array() + shift,
                           gp_low.params(), gp_low.mean_offset() + shift);
  MfGpPosterior post_shift(gp_low_shift, rho, gp_delta);

  StrategyConfig cfg;
  cfg.kind = StrategyKind::kMfUcb;
  cfg.beta = BetaSchedule::fixed(2.0);
  cfg.costs = CostWeights{0.3, 1.0};
  FidelityChoice a = propose_mf_ucb(post, data, cfg, state_for(data, 31));
  ProposalState st = state_for(data, 31);
  st.best_high += shift;
  st.best_low += shift;
  FidelityChoice b = propose_mf_ucb(post_shift, data, cfg, st);
  EXPECT_NEAR((a.x - b.x).norm(), 0.0, 1e-7);

  // pointwise: min(a_low, a_high) <= a_high
  for (int q = 0; q <= 10; ++q) {
    const Vector x = Vector::Constant(1, q / 10.0);
    auto [ml, vl] = post.predict_low(x);
    auto [mh, vh] = post.predict_high(x);
    const double a_low = ucb(-ml, std::sqrt(vl), 2.0) + std::abs(mh - ml);
    const double a_high = ucb(-mh, std::sqrt(vh), 2.0);
    EXPECT_LE(std::min(a_low, a_high), a_high + 1e-15);
  }
}

TEST(Proximity, RadiusAboveDomainDiameterAlwaysHigh) {
  FidelityDataset data = forrester_data(5, 2, 37);
  MfGpPosterior post = fit_mfgp(data, 3, 37);
  StrategyConfig cfg;
  cfg.kind = StrategyKind::kProximity;
  cfg.beta = BetaSchedule::fixed(1.0);
  cfg.costs = CostWeights{1.5, 1.0};  // Lambda = 1.5 > sqrt(d) = 1
  FidelityChoice choice = propose_proximity(post, data, cfg, state_for(data, 41));
  EXPECT_EQ(choice.fidelity, Fidelity::kHigh);
  EXPECT_LE(choice.proximity_distance, std::sqrt(1.0));
}

TEST(Proximity, VanishingRadiusGoesLowAwayFromData) {
  FidelityDataset data = forrester_data(5, 2, 43);
  MfGpPosterior post = fit_mfgp(data, 3, 43);
  StrategyConfig cfg;
  cfg.kind = StrategyKind::kProximity;
  cfg.beta = BetaSchedule::fixed(3.0);
  cfg.costs = CostWeights{1e-9, 1.0};
  FidelityChoice choice = propose_proximity(post, data, cfg, state_for(data, 47));
  ASSERT_GT(choice.proximity_distance, 1e-9);  // generic argmax misses the data exactly
  EXPECT_EQ(choice.fidelity, Fidelity::kLow);
}

TEST(Proximity, DecisionDependsOnlyOnNearestLowDistance) {
  FidelityDataset data = forrester_data(7, 3, 53);
  MfGpPosterior post = fit_mfgp(data, 3, 53);
  StrategyConfig cfg;
  cfg.kind = StrategyKind::kProximity;
  cfg.costs = CostWeights{0.25, 1.0};
  FidelityChoice a = propose_proximity(post, data, cfg, state_for(data, 59));

  FidelityDataset permuted = data;
  permuted.X_low = data.X_low.colwise().reverse().eval();
  permuted.y_low = data.y_low.reverse().eval();
  FidelityChoice b = propose_proximity(post, permuted, cfg, state_for(data, 59));
  EXPECT_EQ(a.fidelity, b.fidelity);
  EXPECT_DOUBLE_EQ(a.proximity_distance, b.proximity_distance);
  EXPECT_EQ(a.x, b.x);
}

TEST(Strategies, AlwaysReturnInDomainWithDiagnostics) {
  FidelityDataset data = forrester_data(6, 2, 61);
  MfGpPosterior post = fit_mfgp(data, 3, 61);
  StrategyConfig cfg;
  cfg.costs = CostWeights{0.5, 1.0};
  for (StrategyKind kind :
       {StrategyKind::kFidelityWeighted, StrategyKind::kMfUcb, StrategyKind::kProximity}) {
    cfg.kind = kind;
    FidelityChoice c = propose(post, data, cfg, state_for(data, 67));
    EXPECT_GE(c.x[0], 0.0);
    EXPECT_LE(c.x[0], 1.0);
    EXPECT_FALSE(c.ranked.empty());
    if (kind == StrategyKind::kMfUcb) {
      EXPECT_FALSE(std::isnan(c.zeta));
      EXPECT_FALSE(std::isnan(c.gamma));
    }
    if (kind == StrategyKind::kProximity) EXPECT_FALSE(std::isnan(c.proximity_distance));
    if (kind == StrategyKind::kFidelityWeighted) {
      EXPECT_FALSE(std::isnan(c.acq_low));
      EXPECT_FALSE(std::isnan(c.acq_high));
    }
  }
}

}  // namespace
}  // namespace mfbo
