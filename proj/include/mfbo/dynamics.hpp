#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <complex>
#include <functional>
#include <optional>
#include <sstream>
#include <vector>

#include "mfbo/core.hpp"

namespace mfbo::dynamics {

/// Right-hand side ẋ = f(x, t); `period` marks forced systems so the
/// stroboscopic map knows how far one cycle runs.
struct OdeSystem {
  int dim = 0;
  std::function<void(double t, const Vector& x, Vector& dxdt)> rhs;
  std::optional<double> period;

  static OdeSystem autonomous(int dim, std::function<void(const Vector&, Vector&)> f) {
    OdeSystem sys;
    sys.dim = dim;
    sys.rhs = [f = std::move(f)](double, const Vector& x, Vector& dxdt) { f(x, dxdt); };
    return sys;
  }
};

struct ToleranceTier {
  double rel_tol = 1e-8;
  double abs_tol = 1e-10;
};

/// Dormand-Prince 5(4) with standard accept/reject step control. Returns the
/// end state; throws ConvergenceError on step-size underflow (stiffness).
inline Vector integrate(const OdeSystem& sys, Vector x, double t0, double t1,
                        const ToleranceTier& tol = {}) {
  if (!(t1 >= t0)) throw std::invalid_argument("integrate: t1 >= t0 required");
  if (t1 == t0) return x;

  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                          b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = 35.0 / 384 - 5179.0 / 57600, e3 = 500.0 / 1113 - 7571.0 / 16695,
                          e4 = 125.0 / 192 - 393.0 / 640, e5 = -2187.0 / 6784 + 92097.0 / 339200,
                          e6 = 11.0 / 84 - 187.0 / 2100, e7 = -1.0 / 40;

  const int n = sys.dim;
  Vector k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), xt(n), x_new(n), err(n);
  double t = t0;
  double h = (t1 - t0) / 100.0;
  const double h_min = 1e-14 * std::max(1.0, t1 - t0);
  long steps = 0;

  sys.rhs(t, x, k1);
  while (t < t1) {
    if (++steps > 50'000'000L) throw ConvergenceError("integrate: step budget exhausted");
    h = std::min(h, t1 - t);
    if (h < h_min) {
      std::ostringstream msg;
      msg << "integrate: step size underflow at t=" << t << " (stiff system?)";
      throw ConvergenceError(msg.str());
    }

    xt = x + h * (a21 * k1);
    sys.rhs(t + h / 5.0, xt, k2);
    xt = x + h * (a31 * k1 + a32 * k2);
    sys.rhs(t + 3.0 * h / 10.0, xt, k3);
    xt = x + h * (a41 * k1 + a42 * k2 + a43 * k3);
    sys.rhs(t + 4.0 * h / 5.0, xt, k4);
    xt = x + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    sys.rhs(t + 8.0 * h / 9.0, xt, k5);
    xt = x + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    sys.rhs(t + h, xt, k6);
    x_new = x + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    sys.rhs(t + h, x_new, k7);
    err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

    double err_norm = 0.0;
    for (int i = 0; i < n; ++i) {
      const double scale = tol.abs_tol + tol.rel_tol * std::max(std::abs(x[i]), std::abs(x_new[i]));
      const double r = err[i] / scale;
      err_norm += r * r;
    }
    err_norm = std::sqrt(err_norm / n);

    if (err_norm <= 1.0) {
      t += h;
      x.swap(x_new);
      k1.swap(k7);  // first-same-as-last
    }
    const double factor = (err_norm > 0.0) ? 0.9 * std::pow(err_norm, -0.2) : 5.0;
    h *= std::clamp(factor, 0.2, 5.0);
  }
  return x;
}

/// State after one forcing period: S(x) = x(T) with x(0) = x.
inline Vector strobo_map(const OdeSystem& sys, const Vector& x, const ToleranceTier& tol = {}) {
  if (!sys.period) throw std::invalid_argument("strobo_map: system has no period");
  return integrate(sys, x, 0.0, *sys.period, tol);
}

// --- GMRES ------------------------------------------------------------------

struct GmresResult {
  Vector x;
  std::vector<double> residual_history;  // least-squares residuals, non-increasing per cycle
  bool converged = false;
};

/// Restarted GMRES on A x = b with a user matvec. Arnoldi with modified
/// Gram-Schmidt; the least-squares problem is updated by Givens rotations so
/// the residual is available at every inner step.
inline GmresResult gmres(const std::function<Vector(const Vector&)>& matvec, const Vector& b,
                         Vector x0, double tol_abs, int max_subspace = 30, int max_restarts = 4) {
  const Eigen::Index n = b.size();
  const int m = std::min<Eigen::Index>(max_subspace, n);
  GmresResult result;
  result.x = std::move(x0);

  for (int cycle = 0; cycle < max_restarts; ++cycle) {
    Vector r = b - matvec(result.x);
    double beta = r.norm();
    result.residual_history.push_back(beta);
    if (beta <= tol_abs) {
      result.converged = true;
      return result;
    }

    Matrix V(n, m + 1);
    Matrix H = Matrix::Zero(m + 1, m);
    Vector cs(m), sn(m), g = Vector::Zero(m + 1);
    V.col(0) = r / beta;
    g[0] = beta;

    int k = 0;
    for (; k < m; ++k) {
      Vector w = matvec(V.col(k));
      for (int i = 0; i <= k; ++i) {
        H(i, k) = V.col(i).dot(w);
        w -= H(i, k) * V.col(i);
      }
      H(k + 1, k) = w.norm();
      const bool breakdown = H(k + 1, k) < 1e-14 * beta;
      if (!breakdown) V.col(k + 1) = w / H(k + 1, k);

      for (int i = 0; i < k; ++i) {
        const double tmp = cs[i] * H(i, k) + sn[i] * H(i + 1, k);
        H(i + 1, k) = -sn[i] * H(i, k) + cs[i] * H(i + 1, k);
        H(i, k) = tmp;
      }
      const double denom = std::hypot(H(k, k), H(k + 1, k));
      cs[k] = H(k, k) / denom;
      sn[k] = H(k + 1, k) / denom;
      H(k, k) = denom;
      H(k + 1, k) = 0.0;
      g[k + 1] = -sn[k] * g[k];
      g[k] *= cs[k];
      result.residual_history.push_back(std::abs(g[k + 1]));

      if (std::abs(g[k + 1]) <= tol_abs || breakdown) {
        ++k;
        break;
      }
    }

    Vector y = H.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(g.head(k));
    result.x += V.leftCols(k) * y;
    if (result.residual_history.back() <= tol_abs) {
      result.converged = true;
      return result;
    }
  }
  return result;
}

// --- matrix-free Newton-GMRES -------------------------------------------------

struct NewtonGmresOptions {
  double tol_newton = 1e-10;   // on ||R(x)||
  double tol_gmres = 1e-4;     // relative forcing term for the inner solves
  int max_newton = 20;
  int max_subspace = 30;
  int max_restarts = 4;
};

struct NewtonKrylovResult {
  Vector x;
  double residual_norm = std::numeric_limits<double>::infinity();
  int newton_iterations = 0;
  std::vector<double> residual_history;
  bool converged = false;
};

/// Newton iteration on R(x) = 0 where each linear system J_R delta = -R is
/// solved by GMRES with finite-difference Jacobian-vector products
/// J_R b ~= (R(x + eps b/||b||) - R(x)) ||b|| / eps, eps = sqrt(machine eps)(1 + ||x||).
inline NewtonKrylovResult newton_gmres(const std::function<Vector(const Vector&)>& residual,
                                       Vector guess, const NewtonGmresOptions& opts = {}) {
  NewtonKrylovResult result;
  result.x = std::move(guess);
  Vector r = residual(result.x);
  result.residual_norm = r.norm();
  result.residual_history.push_back(result.residual_norm);

  for (int it = 0; it < opts.max_newton; ++it) {
    if (result.residual_norm <= opts.tol_newton) {
      result.converged = true;
      return result;
    }
    const Vector& x = result.x;
    const double eps = std::sqrt(std::numeric_limits<double>::epsilon()) * (1.0 + x.norm());
    auto matvec = [&](const Vector& v) -> Vector {
      const double nv = v.norm();
      if (nv == 0.0) return Vector::Zero(v.size());
      return (residual(x + (eps / nv) * v) - r) * (nv / eps);
    };

    GmresResult lin = gmres(matvec, -r, Vector::Zero(x.size()),
                            opts.tol_gmres * result.residual_norm, opts.max_subspace,
                            opts.max_restarts);

    // backtracking on ||R||
    double step = 1.0;
    bool accepted = false;
    Vector x_new, r_new;
    for (int ls = 0; ls < 8; ++ls) {
      x_new = result.x + step * lin.x;
      r_new = residual(x_new);
      if (r_new.norm() <= (1.0 - 1e-4 * step) * result.residual_norm ||
          r_new.norm() <= opts.tol_newton) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      std::ostringstream msg;
      msg << "newton_gmres: stagnated at ||R|| = " << result.residual_norm << " after " << it
          << " iterations (inner GMRES " << (lin.converged ? "converged" : "stagnated") << ")";
      throw ConvergenceError(msg.str());
    }
    result.x = std::move(x_new);
    r = std::move(r_new);
    result.residual_norm = r.norm();
    result.residual_history.push_back(result.residual_norm);
    result.newton_iterations = it + 1;
  }
  if (result.residual_norm <= opts.tol_newton) {
    result.converged = true;
    return result;
  }
  std::ostringstream msg;
  msg << "newton_gmres: no convergence in " << opts.max_newton << " iterations; residuals:";
  for (double v : result.residual_history) msg << " " << v;
  throw ConvergenceError(msg.str());
}

/// Periodic steady state of a forced system: root of R(x) = x - S(x).
struct PeriodicSolution {
  Vector anchor;
  double period = 0.0;
  double residual_norm = 0.0;
  int newton_iterations = 0;
  std::vector<double> residual_history;
};

inline PeriodicSolution newton_gmres_periodic(const OdeSystem& sys, Vector guess,
                                              double tol_newton = 1e-10, double tol_gmres = 1e-4,
                                              int max_newton = 20,
                                              const ToleranceTier& integ_tol = {}) {
  if (!sys.period) throw std::invalid_argument("newton_gmres_periodic: system has no period");
  auto residual = [&](const Vector& x) -> Vector { return x - strobo_map(sys, x, integ_tol); };
  NewtonGmresOptions opts;
  opts.tol_newton = tol_newton;
  opts.tol_gmres = tol_gmres;
  opts.max_newton = max_newton;
  NewtonKrylovResult r = newton_gmres(residual, std::move(guess), opts);
  return {std::move(r.x), *sys.period, r.residual_norm, r.newton_iterations,
          std::move(r.residual_history)};
}

// --- dense Newton / steady states / eigenvalues -------------------------------

/// Central-difference Jacobian, step 1e-6 (1 + |x_i|) per column by default.
inline Matrix fd_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& x,
                          double step_scale = 1e-6) {
  const Eigen::Index n = x.size();
  Vector xp = x;
  Matrix J(f(x).size(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double h = step_scale * (1.0 + std::abs(x[i]));
    xp[i] = x[i] + h;
    Vector fp = f(xp);
    xp[i] = x[i] - h;
    Vector fm = f(xp);
    xp[i] = x[i];
    J.col(i) = (fp - fm) / (2.0 * h);
  }
  return J;
}

/// Damped Newton on f(x) = 0 with a dense finite-difference Jacobian.
inline Vector newton_root(const std::function<Vector(const Vector&)>& f, Vector x,
                          double tol = 1e-12, int max_iter = 60) {
  Vector r = f(x);
  for (int it = 0; it < max_iter; ++it) {
    const double nr = r.norm();
    if (nr <= tol) return x;
    Matrix J = fd_jacobian(f, x, 1e-7);
    Eigen::PartialPivLU<Matrix> lu(J);
    Vector d = lu.solve(-r);
    if (!d.allFinite()) throw ConvergenceError("newton_root: singular Jacobian");
    double step = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 45; ++ls) {
      Vector x_new = x + step * d;
      Vector r_new = f(x_new);
      if (r_new.allFinite() && (r_new.norm() < (1.0 - 1e-4 * step) * nr || r_new.norm() <= tol)) {
        x = std::move(x_new);
        r = std::move(r_new);
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      std::ostringstream msg;
      msg << "newton_root: line search stalled at ||f|| = " << nr;
      throw ConvergenceError(msg.str());
    }
  }
  if (r.norm() <= tol) return x;
  std::ostringstream msg;
  msg << "newton_root: no convergence, final ||f|| = " << r.norm();
  throw ConvergenceError(msg.str());
}

/// Steady state of an autonomous system: a short relaxation integration from
/// the guess warm-starts a damped Newton solve of f(x) = 0 with ||f|| < tol.
inline Vector steady_state(const OdeSystem& sys, const Vector& guess, double tol = 1e-10,
                           double relax_time = 1.0) {
  auto f = [&](const Vector& x) -> Vector {
    Vector out(sys.dim);
    sys.rhs(0.0, x, out);
    return out;
  };
  Vector x = guess;
  std::string last_error = "";
  for (int round = 0; round < 4; ++round) {
    try {
      return newton_root(f, x, tol);
    } catch (const ConvergenceError& e) {
      last_error = e.what();
    }
    const double span = relax_time * std::pow(5.0, round);
    x = integrate(sys, x, 0.0, span, ToleranceTier{1e-9, 1e-11});
  }
  throw ConvergenceError("steady_state: Newton failed after relaxation warm starts (" +
                         last_error + ")");
}

/// Eigenvalues of the finite-difference Jacobian at a steady state, sorted by
/// descending real part.
inline std::vector<std::complex<double>> jacobian_eigenvalues(const OdeSystem& sys,
                                                              const Vector& x_star) {
  auto f = [&](const Vector& x) -> Vector {
    Vector out(sys.dim);
    sys.rhs(0.0, x, out);
    return out;
  };
  Matrix J = fd_jacobian(f, x_star, 1e-6);
  Eigen::EigenSolver<Matrix> es(J);
  std::vector<std::complex<double>> ev(static_cast<std::size_t>(J.rows()));
  for (Eigen::Index i = 0; i < J.rows(); ++i) ev[static_cast<std::size_t>(i)] = es.eigenvalues()[i];
  std::sort(ev.begin(), ev.end(), [](const auto& a, const auto& b) {
    if (a.real() != b.real()) return a.real() > b.real();
    return a.imag() > b.imag();
  });
  return ev;
}

}  // namespace mfbo::dynamics
