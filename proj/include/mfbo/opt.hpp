#pragma once

#include <cmath>
#include <deque>
#include <functional>
#include <limits>

#include "mfbo/core.hpp"

namespace mfbo::opt {

/// Objective callback: returns f(x); fills *grad when grad is non-null (line
/// search probes pass null, so gradient work is only paid at accepted points).
/// Return +inf to signal an infeasible evaluation.
using ObjectiveWithGrad = std::function<double(const Vector&, Vector*)>;

struct Options {
  int max_iterations = 200;
  int history = 8;
  double grad_tol = 1e-9;    // on the infinity norm of the projected gradient
  double step_tol = 1e-13;   // on the infinity norm of the accepted step
  double value_tol = 1e-10;  // on the relative objective decrease per iteration
};

struct Result {
  Vector x;
  double value = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
};

namespace detail {

inline Vector clip(const Vector& x, const Vector& lo, const Vector& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

}  // namespace detail

/// Box-constrained minimization: L-BFGS two-loop directions with gradient
/// projection and a backtracking Armijo line search along the projected path.
/// Falls back to projected steepest descent whenever the quasi-Newton
/// direction loses descent.
inline Result minimize_bounded(const ObjectiveWithGrad& fg, Vector x0, const Vector& lo,
                               const Vector& hi, const Options& opts = {}) {
  const Eigen::Index n = x0.size();
  Result res;
  res.x = detail::clip(std::move(x0), lo, hi);

  Vector g(n);
  double f = fg(res.x, &g);
  res.value = f;
  if (!std::isfinite(f)) return res;

  std::deque<Vector> s_hist, y_hist;
  std::deque<double> rho_hist;

  Vector x = res.x, x_new(n), g_new(n), dir(n);
  for (int it = 0; it < opts.max_iterations; ++it) {
    // projected gradient convergence test
    Vector pg = x - detail::clip(x - g, lo, hi);
    if (pg.lpNorm<Eigen::Infinity>() < opts.grad_tol) {
      res.converged = true;
      break;
    }

    // two-loop recursion
    dir = -g;
    if (!s_hist.empty()) {
      std::vector<double> alpha(s_hist.size());
      for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
        alpha[i] = rho_hist[i] * s_hist[i].dot(dir);
        dir -= alpha[i] * y_hist[i];
      }
      const Vector& sl = s_hist.back();
      const Vector& yl = y_hist.back();
      dir *= sl.dot(yl) / yl.squaredNorm();
      for (std::size_t i = 0; i < s_hist.size(); ++i) {
        double beta = rho_hist[i] * y_hist[i].dot(dir);
        dir += (alpha[i] - beta) * s_hist[i];
      }
    }
    if (dir.dot(g) > -1e-12 * dir.norm() * g.norm()) {
      dir = -g;  // not a descent direction; restart from steepest descent
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }

    // backtracking along the projected path; probes are gradient-free
    double t = 1.0;
    bool accepted = false;
    double f_new = f;
    for (int ls = 0; ls < 50; ++ls) {
      x_new = detail::clip(x + t * dir, lo, hi);
      Vector step = x_new - x;
      if (step.lpNorm<Eigen::Infinity>() < opts.step_tol) break;
      f_new = fg(x_new, nullptr);
      if (std::isfinite(f_new) && f_new <= f + 1e-4 * g.dot(step)) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      res.converged = true;  // no decrease available along this path
      break;
    }
    fg(x_new, &g_new);

    Vector s = x_new - x;
    Vector yv = g_new - g;
    double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(yv);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opts.history) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }

    const double decrease = f - f_new;
    x = x_new;
    f = f_new;
    g = g_new;
    res.iterations = it + 1;
    if (s.lpNorm<Eigen::Infinity>() < opts.step_tol ||
        decrease < opts.value_tol * (1.0 + std::abs(f))) {
      res.converged = true;
      break;
    }
  }

  res.x = x;
  res.value = f;
  return res;
}

/// Central-difference gradient wrapper for objectives without analytic
/// derivatives; gradient-free probes cost a single function evaluation.
inline ObjectiveWithGrad with_numerical_gradient(std::function<double(const Vector&)> f,
                                                 double h_scale = 1e-6) {
  return [f = std::move(f), h_scale](const Vector& x, Vector* grad) {
    if (grad != nullptr) {
      grad->resize(x.size());
      Vector xp = x;
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double h = h_scale * (1.0 + std::abs(x[i]));
        xp[i] = x[i] + h;
        const double fp = f(xp);
        xp[i] = x[i] - h;
        const double fm = f(xp);
        xp[i] = x[i];
        (*grad)[i] = (fp - fm) / (2.0 * h);
      }
    }
    return f(x);
  };
}

}  // namespace mfbo::opt
