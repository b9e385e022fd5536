#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <sstream>

#include "mfbo/core.hpp"
#include "mfbo/opt.hpp"

namespace mfbo {

/// Anisotropic squared-exponential kernel hyperparameters. jitter is the
/// diagonal regularizer added to the Gram matrix, in output units squared.
struct KernelParams {
  double signal_variance = 1.0;
  Vector lengthscales;  // one per input dimension, > 0
  double jitter = 1e-10;
};

inline double kernel(const Vector& x, const Vector& x2, const KernelParams& p) {
  double q = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double r = (x[i] - x2[i]) / p.lengthscales[i];
    q += r * r;
  }
  return p.signal_variance * std::exp(-0.5 * q);
}

namespace detail {

inline Matrix gram(const Matrix& X, const KernelParams& p) {
  const Eigen::Index n = X.rows();
  Matrix K(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    K(i, i) = p.signal_variance + p.jitter;
    for (Eigen::Index j = 0; j < i; ++j) {
      K(i, j) = K(j, i) = kernel(X.row(i), X.row(j), p);
    }
  }
  return K;
}

inline Vector cross_kernel(const Matrix& X, const Vector& x, const KernelParams& p) {
  Vector k(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    k[i] = kernel(X.row(i), x, p);
  }
  return k;
}

}  // namespace detail

/// log P(y | X, params) = -1/2 log|K| - 1/2 y^T K^-1 y - N/2 log(2 pi),
/// evaluated through the Cholesky factor of K = kappa(X, X) + jitter I.
inline double log_marginal_likelihood(const Matrix& X, const Vector& y,
                                      const KernelParams& params) {
  if (X.rows() != y.size() || y.size() < 1) {
    throw std::invalid_argument("log_marginal_likelihood: |X| == |y| >= 1 required");
  }
  Eigen::LLT<Matrix> llt(detail::gram(X, params));
  if (llt.info() != Eigen::Success) {
    throw FitError("log_marginal_likelihood: Gram matrix not positive definite");
  }
  const Matrix& L = llt.matrixLLT();
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < L.rows(); ++i) logdet += 2.0 * std::log(L(i, i));
  Vector alpha = llt.solve(y);
  const double n = static_cast<double>(y.size());
  return -0.5 * logdet - 0.5 * y.dot(alpha) - 0.5 * n * std::log(2.0 * M_PI);
}

/// Likelihood plus its analytic gradient with respect to
/// (log signal_variance, log lengthscale_1, ..., log lengthscale_d),
/// holding jitter fixed. grad is resized to d + 1.
inline double log_marginal_likelihood_grad(const Matrix& X, const Vector& y,
                                           const KernelParams& params, Vector& grad) {
  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  Matrix K = detail::gram(X, params);
  Eigen::LLT<Matrix> llt(K);
  if (llt.info() != Eigen::Success) {
    throw FitError("log_marginal_likelihood_grad: Gram matrix not positive definite");
  }
  Vector alpha = llt.solve(y);
  Matrix Kinv = llt.solve(Matrix::Identity(n, n));
  Matrix W = alpha * alpha.transpose() - Kinv;

  grad.resize(d + 1);
  // d K / d log sf2 = K - jitter I
  grad[0] = 0.5 * ((W.array() * K.array()).sum() - params.jitter * W.trace());
  for (Eigen::Index m = 0; m < d; ++m) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        const double r = (X(i, m) - X(j, m)) / params.lengthscales[m];
        const double kij = (i == j) ? params.signal_variance : K(i, j);
        acc += W(i, j) * kij * r * r;
      }
    }
    grad[m + 1] = 0.5 * acc;
  }

  const Matrix& L = llt.matrixLLT();
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) logdet += 2.0 * std::log(L(i, i));
  return -0.5 * logdet - 0.5 * y.dot(alpha) - 0.5 * static_cast<double>(n) * std::log(2.0 * M_PI);
}

/// Immutable fitted GP state: training data, hyperparameters, Cholesky factor
/// of the Gram matrix and the solved weights alpha = K^-1 (y - mean_offset).
/// mean_offset is the constant prior mean (fit centers targets there).
class GpPosterior {
 public:
  GpPosterior(Matrix X, Vector y, KernelParams params, double mean_offset = 0.0)
      : X_(std::move(X)), y_(std::move(y)), params_(std::move(params)), mean_offset_(mean_offset) {
    if (X_.rows() != y_.size() || y_.size() < 1) {
      throw std::invalid_argument("GpPosterior: |X| == |y| >= 1 required");
    }
    Eigen::LLT<Matrix> llt(detail::gram(X_, params_));
    if (llt.info() != Eigen::Success) {
      throw FitError("GpPosterior: Gram matrix not positive definite at given jitter");
    }
    L_ = llt.matrixLLT();
    alpha_ = llt.solve(y_ - Vector::Constant(y_.size(), mean_offset_));
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < L_.rows(); ++i) logdet += 2.0 * std::log(L_(i, i));
    lml_ = -0.5 * logdet - 0.5 * (y_ - Vector::Constant(y_.size(), mean_offset_)).dot(alpha_) -
           0.5 * static_cast<double>(y_.size()) * std::log(2.0 * M_PI);
  }

  std::pair<double, double> predict(const Vector& x) const {
    Vector k = detail::cross_kernel(X_, x, params_);
    const double mean = mean_offset_ + k.dot(alpha_);
    Vector v = L_.triangularView<Eigen::Lower>().solve(k);
    const double var = std::max(params_.signal_variance - v.squaredNorm(), 0.0);
    return {mean, var};
  }

  Eigen::Index size() const { return y_.size(); }
  int dim() const { return static_cast<int>(X_.cols()); }
  const Matrix& train_inputs() const { return X_; }
  const Vector& train_targets() const { return y_; }
  const KernelParams& params() const { return params_; }
  double mean_offset() const { return mean_offset_; }
  const Matrix& chol() const { return L_; }
  const Vector& alpha() const { return alpha_; }
  /// Likelihood of the centered targets under the stored hyperparameters.
  double log_marginal_likelihood() const { return lml_; }

 private:
  Matrix X_;
  Vector y_;
  KernelParams params_;
  double mean_offset_;
  Matrix L_;
  Vector alpha_;
  double lml_;
};

namespace detail {

struct FitSpace {
  Vector widths;      // per-dimension data extent (floored), scales lengthscale bounds
  double target_var;  // variance of the centered targets (floored)
  double mean_offset;
};

inline FitSpace fit_space(const Matrix& X, const Vector& y) {
  FitSpace s;
  const Eigen::Index d = X.cols();
  s.widths.resize(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double w = X.col(j).maxCoeff() - X.col(j).minCoeff();
    s.widths[j] = (w > 1e-12) ? w : 1.0;
  }
  s.mean_offset = y.mean();
  const double var = (y.array() - s.mean_offset).square().mean();
  s.target_var = (var > 1e-300) ? var : 1.0;
  return s;
}

}  // namespace detail

/// Maximum-likelihood hyperparameter fit: bounded L-BFGS in log space over
/// (signal variance, per-dimension lengthscales), multi-started from the
/// given initialization plus log-space perturbations of it. Targets are
/// centered on their mean; bounds scale with the data extent and variance,
/// so the same defaults work across problems. The Gram jitter starts at
/// 1e-10 sigma_f^2 and escalates tenfold (up to 1e-4 sigma_f^2) whenever a
/// factorization fails.
inline GpPosterior fit(const Matrix& X, const Vector& y, const KernelParams& init, int restarts,
                       std::uint64_t seed) {
  if (X.rows() != y.size() || y.size() < 1) {
    throw std::invalid_argument("fit: |X| == |y| >= 1 required");
  }
  if (restarts < 1) restarts = 1;
  const Eigen::Index d = X.cols();
  const detail::FitSpace space = detail::fit_space(X, y);
  const Vector yc = y - Vector::Constant(y.size(), space.mean_offset);

  Vector lo(d + 1), hi(d + 1);
  lo[0] = std::log(1e-6 * space.target_var);
  hi[0] = std::log(1e6 * space.target_var);
  for (Eigen::Index j = 0; j < d; ++j) {
    lo[j + 1] = std::log(1e-3 * space.widths[j]);
    hi[j + 1] = std::log(1e3 * space.widths[j]);
  }

  Vector theta_init(d + 1);
  theta_init[0] = std::log(init.signal_variance > 0 ? init.signal_variance : space.target_var);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double l0 = (init.lengthscales.size() == d && init.lengthscales[j] > 0)
                          ? init.lengthscales[j]
                          : 0.5 * space.widths[j];
    theta_init[j + 1] = std::log(l0);
  }
  theta_init = theta_init.cwiseMax(lo).cwiseMin(hi);

  auto params_at = [&](const Vector& theta, double jf) {
    KernelParams p;
    p.signal_variance = std::exp(theta[0]);
    p.lengthscales = theta.segment(1, d).array().exp().matrix();
    p.jitter = jf * p.signal_variance;
    return p;
  };
  auto objective = [&](const Vector& theta, Vector* grad) -> double {
    for (double jf = 1e-10; jf <= 1.1e-4; jf *= 10.0) {
      try {
        if (grad == nullptr) {
          return -log_marginal_likelihood(X, yc, params_at(theta, jf));
        }
        double lml = log_marginal_likelihood_grad(X, yc, params_at(theta, jf), *grad);
        *grad = -*grad;
        return -lml;
      } catch (const FitError&) {
      }
    }
    if (grad != nullptr) grad->setZero(d + 1);
    return std::numeric_limits<double>::infinity();
  };

  double best_value = std::numeric_limits<double>::infinity();
  Vector best_theta;
  std::string failures;
  for (int r = 0; r < restarts; ++r) {
    Vector theta = theta_init;
    if (r == 1) {
      theta[0] = std::log(space.target_var);
      for (Eigen::Index j = 0; j < d; ++j) theta[j + 1] = std::log(0.5 * space.widths[j]);
    } else if (r >= 2) {
      // geometric lengthscale ladder over the plausible decades (so one start
      // lands near every basin), jittered in log space
      std::mt19937_64 rng(derive_seed(seed, "gp_fit_restart", static_cast<std::uint64_t>(r)));
      std::normal_distribution<double> perturb(0.0, 0.3);
      const int rungs = restarts - 2;
      const double frac = (static_cast<double>(r - 2) + 0.5) / static_cast<double>(rungs);
      const double ladder = 0.03 * std::pow(100.0, frac);
      theta[0] = std::log(space.target_var) + perturb(rng);
      for (Eigen::Index j = 0; j < d; ++j) {
        theta[j + 1] = std::log(ladder * space.widths[j]) + perturb(rng);
      }
      theta = theta.cwiseMax(lo).cwiseMin(hi);
    }
    opt::Result out = opt::minimize_bounded(objective, theta, lo, hi);
    if (std::isfinite(out.value) && out.value < best_value) {
      best_value = out.value;
      best_theta = out.x;
    } else if (!std::isfinite(out.value)) {
      failures += "restart " + std::to_string(r) + " failed to factorize; ";
    }
  }
  if (!best_theta.size()) {
    std::ostringstream msg;
    msg << "fit: all " << restarts << " restarts failed to factorize (" << failures
        << "max jitter factor 1e-4)";
    throw FitError(msg.str());
  }

  // rebuild at the winner with the smallest jitter that factorizes
  for (double jf = 1e-10; jf <= 1.1e-4; jf *= 10.0) {
    try {
      return GpPosterior(X, y, params_at(best_theta, jf), space.mean_offset);
    } catch (const FitError&) {
    }
  }
  throw FitError("fit: optimal hyperparameters do not factorize at maximum jitter");
}

}  // namespace mfbo
