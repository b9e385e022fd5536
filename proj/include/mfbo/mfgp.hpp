#pragma once

#include <optional>

#include "mfbo/core.hpp"
#include "mfbo/gp.hpp"

namespace mfbo {

/// Paired training data for the two fidelity levels. High-fidelity points
/// need not be nested in the low set; prediction-stage imputation covers
/// non-nested points without touching the low data.
struct FidelityDataset {
  Matrix X_low;
  Vector y_low;
  Matrix X_high;
  Vector y_high;
};

struct MfFitOptions {
  std::optional<double> fixed_rho;  // pin the scaling factor instead of fitting it
  double rho_min = -5.0;
  double rho_max = 5.0;
  // warm starts carried across refits
  std::optional<KernelParams> init_low;
  std::optional<KernelParams> init_delta;
  std::optional<double> init_rho;
};

/// Two-level surrogate Z_high(x) = rho * Z_low(x) + delta(x): a low-fidelity
/// GP plus a scaled correction GP trained on the discrepancy between the
/// high-fidelity observations and the scaled low-fidelity mean.
class MfGpPosterior {
 public:
  MfGpPosterior(GpPosterior gp_low, double rho, GpPosterior gp_delta)
      : gp_low_(std::move(gp_low)), rho_(rho), gp_delta_(std::move(gp_delta)) {}

  std::pair<double, double> predict_low(const Vector& x) const { return gp_low_.predict(x); }

  /// mean = rho mu_low + mu_delta; variance = rho^2 sigma_low^2 + sigma_delta^2
  /// (both terms already clamped at zero inside the component GPs).
  std::pair<double, double> predict_high(const Vector& x) const {
    auto [m_low, v_low] = gp_low_.predict(x);
    auto [m_delta, v_delta] = gp_delta_.predict(x);
    return {rho_ * m_low + m_delta, rho_ * rho_ * v_low + v_delta};
  }

  double rho() const { return rho_; }
  const GpPosterior& gp_low() const { return gp_low_; }
  const GpPosterior& gp_delta() const { return gp_delta_; }
  int dim() const { return gp_low_.dim(); }

 private:
  GpPosterior gp_low_;
  double rho_;
  GpPosterior gp_delta_;
};

namespace detail {

/// Correction-stage fit: maximize the marginal likelihood of
/// d(rho) = y_high - rho * mu_low(X_high) over rho and the correction-kernel
/// hyperparameters. The rho profile is multimodal, so a scalar grid over
/// [rho_min, rho_max] (with warm-started inner kernel fits) locates the global
/// mode before a joint local polish of (rho, log sf2, log l).
inline std::pair<double, KernelParams> fit_correction(const Matrix& X_high, const Vector& y_high,
                                                      const Vector& mu_low_at_high, int restarts,
                                                      std::uint64_t seed,
                                                      const MfFitOptions& options) {
  const Eigen::Index n = X_high.rows();
  const Eigen::Index d = X_high.cols();
  if (restarts < 1) restarts = 1;

  const double denom = mu_low_at_high.squaredNorm();
  const double rho_ls = std::clamp(denom > 1e-12 ? mu_low_at_high.dot(y_high) / denom : 1.0,
                                   options.rho_min, options.rho_max);

  const double scale = std::max(
      (y_high - rho_ls * mu_low_at_high).squaredNorm() / static_cast<double>(n), 1e-12);
  Vector widths(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double w = X_high.col(j).maxCoeff() - X_high.col(j).minCoeff();
    widths[j] = (w > 1e-12) ? w : 1.0;
  }

  // kernel block: theta = (log sf2, log l_1..d). The discrepancy keeps a
  // raised lengthscale floor: at the handful of high-fidelity samples the
  // plain [1e-3, 1e3] width window lets a white-noise mode (l at the lower
  // corner, K ~ sf2 I) out-score every informative rho, and the correction
  // process is meant to be a smooth model mismatch, not noise.
  Vector klo(d + 1), khi(d + 1);
  klo[0] = std::log(1e-8 * scale);
  khi[0] = std::log(1e8 * scale);
  for (Eigen::Index j = 0; j < d; ++j) {
    klo[j + 1] = std::log(0.3 * widths[j]);
    khi[j + 1] = std::log(1e3 * widths[j]);
  }

  auto params_at = [&](const Vector& ktheta, double jf) {
    KernelParams p;
    p.signal_variance = std::exp(ktheta[0]);
    p.lengthscales = ktheta.segment(1, d).array().exp().matrix();
    p.jitter = jf * p.signal_variance;
    return p;
  };
  auto kernel_objective = [&](const Vector& targets) {
    return [&, targets](const Vector& ktheta, Vector* grad) -> double {
      for (double jf = 1e-10; jf <= 1.1e-4; jf *= 10.0) {
        try {
          if (grad == nullptr) {
            return -log_marginal_likelihood(X_high, targets, params_at(ktheta, jf));
          }
          const double lml =
              log_marginal_likelihood_grad(X_high, targets, params_at(ktheta, jf), *grad);
          *grad = -*grad;
          return -lml;
        } catch (const FitError&) {
        }
      }
      if (grad != nullptr) grad->setZero(d + 1);
      return std::numeric_limits<double>::infinity();
    };
  };

  Vector heuristic(d + 1);
  heuristic[0] = std::log(scale);
  for (Eigen::Index j = 0; j < d; ++j) heuristic[j + 1] = std::log(0.5 * widths[j]);
  heuristic = heuristic.cwiseMax(klo).cwiseMin(khi);

  opt::Options inner;
  inner.max_iterations = 120;

  // profile evaluation: best kernel fit at fixed rho, warm-started
  auto profile = [&](double rho, const Vector& warm) -> std::pair<double, Vector> {
    const Vector targets = y_high - rho * mu_low_at_high;
    auto objective = kernel_objective(targets);
    double best = std::numeric_limits<double>::infinity();
    Vector best_theta = heuristic;
    std::vector<Vector> starts = {warm, heuristic};
    for (int r = 2; r < restarts; ++r) {
      Vector ladder = heuristic;
      const double frac = (static_cast<double>(r - 2) + 0.5) / std::max(restarts - 2, 1);
      for (Eigen::Index j = 0; j < d; ++j) {
        ladder[j + 1] = std::log(0.03 * std::pow(1000.0, frac) * widths[j]);
      }
      starts.push_back(ladder.cwiseMax(klo).cwiseMin(khi));
    }
    for (const Vector& s : starts) {
      opt::Result out = opt::minimize_bounded(objective, s, klo, khi, inner);
      if (std::isfinite(out.value) && out.value < best) {
        best = out.value;
        best_theta = out.x;
      }
    }
    return {best, best_theta};
  };

  std::vector<double> rho_grid;
  if (options.fixed_rho) {
    rho_grid.push_back(*options.fixed_rho);
  } else {
    const int cells = 16;
    for (int i = 0; i <= cells; ++i) {
      rho_grid.push_back(options.rho_min +
                         (options.rho_max - options.rho_min) * i / static_cast<double>(cells));
    }
    rho_grid.push_back(rho_ls);
    if (options.init_rho) {
      rho_grid.push_back(std::clamp(*options.init_rho, options.rho_min, options.rho_max));
    }
  }

  Vector warm = heuristic;
  if (options.init_delta && options.init_delta->lengthscales.size() == d &&
      options.init_delta->signal_variance > 0) {
    warm[0] = std::log(options.init_delta->signal_variance);
    for (Eigen::Index j = 0; j < d; ++j) {
      warm[j + 1] = std::log(std::max(options.init_delta->lengthscales[j], 1e-300));
    }
    warm = warm.cwiseMax(klo).cwiseMin(khi);
  }

  double best_value = std::numeric_limits<double>::infinity();
  double best_rho = rho_grid.front();
  Vector best_ktheta = heuristic;
  for (double rho : rho_grid) {
    auto [value, ktheta] = profile(rho, warm);
    if (std::isfinite(value)) warm = ktheta;
    if (value < best_value) {
      best_value = value;
      best_rho = rho;
      best_ktheta = ktheta;
    }
  }
  if (!std::isfinite(best_value)) {
    throw FitError("fit_mfgp: correction-stage fit failed at every rho candidate");
  }

  // joint polish of (kernel, rho) from the winning grid point
  Vector lo(d + 2), hi(d + 2), theta(d + 2);
  lo.head(d + 1) = klo;
  hi.head(d + 1) = khi;
  lo[d + 1] = options.fixed_rho ? *options.fixed_rho : options.rho_min;
  hi[d + 1] = options.fixed_rho ? *options.fixed_rho : options.rho_max;
  theta.head(d + 1) = best_ktheta;
  theta[d + 1] = best_rho;
  auto joint = [&](const Vector& th, Vector* grad) -> double {
    const double rho = th[d + 1];
    const Vector targets = y_high - rho * mu_low_at_high;
    for (double jf = 1e-10; jf <= 1.1e-4; jf *= 10.0) {
      KernelParams p = params_at(th.head(d + 1), jf);
      if (grad == nullptr) {
        try {
          return -log_marginal_likelihood(X_high, targets, p);
        } catch (const FitError&) {
          continue;
        }
      }
      Eigen::LLT<Matrix> llt(gram(X_high, p));
      if (llt.info() != Eigen::Success) continue;
      Vector kernel_grad;
      const double lml = log_marginal_likelihood_grad(X_high, targets, p, kernel_grad);
      grad->resize(d + 2);
      grad->head(d + 1) = -kernel_grad;
      // d lml / d rho = alpha . mu_low(X_high)
      (*grad)[d + 1] = -llt.solve(targets).dot(mu_low_at_high);
      return -lml;
    }
    if (grad != nullptr) grad->setZero(d + 2);
    return std::numeric_limits<double>::infinity();
  };
  opt::Result polished = opt::minimize_bounded(joint, theta, lo, hi);
  if (std::isfinite(polished.value) && polished.value < best_value) {
    best_ktheta = polished.x.head(d + 1);
    best_rho = polished.x[d + 1];
  }

  for (double jf = 1e-10; jf <= 1.1e-4; jf *= 10.0) {
    KernelParams p = params_at(best_ktheta, jf);
    Eigen::LLT<Matrix> probe(gram(X_high, p));
    if (probe.info() == Eigen::Success) return {best_rho, p};
  }
  throw FitError("fit_mfgp: correction hyperparameters do not factorize at maximum jitter");
}

}  // namespace detail

/// Fits the low-fidelity GP on the low data, then the scaling factor and the
/// correction GP jointly on the discrepancy d(rho) = y_high - rho mu_low.
/// High points absent from X_low are handled through mu_low imputation; the
/// low dataset is never modified.
inline MfGpPosterior fit_mfgp(const FidelityDataset& data, int restarts, std::uint64_t seed,
                              const MfFitOptions& options = {}) {
  if (data.X_low.rows() < 1 || data.X_high.rows() < 1) {
    throw std::invalid_argument("fit_mfgp: both fidelity sets must be non-empty");
  }
  if (data.X_low.cols() != data.X_high.cols()) {
    throw std::invalid_argument("fit_mfgp: fidelity sets disagree on dimension");
  }

  GpPosterior gp_low = fit(data.X_low, data.y_low, options.init_low.value_or(KernelParams{}),
                           restarts, derive_seed(seed, "mfgp_low"));

  Vector mu_low_at_high(data.X_high.rows());
  for (Eigen::Index i = 0; i < data.X_high.rows(); ++i) {
    mu_low_at_high[i] = gp_low.predict(data.X_high.row(i)).first;
  }

  auto [rho, delta_params] = detail::fit_correction(data.X_high, data.y_high, mu_low_at_high,
                                                    restarts, derive_seed(seed, "mfgp_delta"),
                                                    options);
  GpPosterior gp_delta(data.X_high, data.y_high - rho * mu_low_at_high, delta_params, 0.0);
  return MfGpPosterior(std::move(gp_low), rho, std::move(gp_delta));
}

}  // namespace mfbo
