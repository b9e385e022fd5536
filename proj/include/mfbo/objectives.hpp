#pragma once

#include <cmath>
#include <vector>

#include "mfbo/bo_loop.hpp"
#include "mfbo/core.hpp"
#include "mfbo/dynamics.hpp"

namespace mfbo {

// --- closed-form pairs --------------------------------------------------------

/// f_high(x) = (6x-2)^2 sin(12x-4); f_low = f_high/2 + 10(x - 1/2) - 5 on [0, 1].
inline double forrester(double x, Fidelity fidelity) {
  const double high = std::pow(6.0 * x - 2.0, 2) * std::sin(12.0 * x - 4.0);
  if (fidelity == Fidelity::kHigh) return high;
  return 0.5 * high + 10.0 * (x - 0.5) - 5.0;
}

/// f_high = x1^2 + 2 x2^2 - 0.3 cos(3 pi x1) - 0.4 cos(4 pi x2) + 0.7 on [-5, 5]^2;
/// f_low = f_high(0.7 x1, x2) + x1 x2 - 12.
inline double bohachevsky(double x1, double x2, Fidelity fidelity) {
  auto high = [](double a, double b) {
    return a * a + 2.0 * b * b - 0.3 * std::cos(3.0 * M_PI * a) - 0.4 * std::cos(4.0 * M_PI * b) +
           0.7;
  };
  if (fidelity == Fidelity::kHigh) return high(x1, x2);
  return high(0.7 * x1, x2) + x1 * x2 - 12.0;
}

/// f_high = (x1^2 + x2 - 11)^2 + (x2^2 + x1 - 7)^2 on [-4, 4]^2;
/// f_low = f_high(0.5 x1, 0.8 x2) + x2^3 - (x1 + 1)^2. Minimized: the four
/// global optima are the zeros of f_high.
inline double himmelblau(double x1, double x2, Fidelity fidelity) {
  auto high = [](double a, double b) {
    return std::pow(a * a + b - 11.0, 2) + std::pow(b * b + a - 7.0, 2);
  };
  if (fidelity == Fidelity::kHigh) return high(x1, x2);
  return high(0.5 * x1, 0.8 * x2) + std::pow(x2, 3) - std::pow(x1 + 1.0, 2);
}

// --- toy enzyme ----------------------------------------------------------------

/// Rate constants and operating conditions for the enzymatic E + S0 <-> ES0 -> E + S1
/// scheme. The decision variable of the benchmark is the total enzyme E.
struct EnzymeParams {
  double k_f = 10.0;
  double k_r = 1.0;
  double k_cat = 1.0;
  double s0_init = 1.0;
  double horizon = 10.0;        // seconds
  double target_conversion = 0.67;
  double e_min = 0.005;         // search range for E; the 0.67 root is interior
  double e_max = 0.2;
  dynamics::ToleranceTier integ_tol{1e-9, 1e-12};

  double k_eff(double e_tot) const { return e_tot * k_f * k_cat / (k_r + k_cat); }
  /// Quasi-steady-state validity bound: S_tot must stay well below this.
  double qssa_bound() const { return (k_r + k_cat) / k_f; }
};

/// Conversion X = [S1](horizon) / S0_init of the full 4-state kinetics (high)
/// or the reduced 2-state QSSA kinetics (low) at total enzyme E.
inline double enzyme_conversion(double E, Fidelity fidelity, const EnzymeParams& p = {}) {
  if (!(E > 0.0)) throw std::invalid_argument("enzyme_conversion: E must be positive");
  if (fidelity == Fidelity::kHigh) {
    // states: [S0, ES0, S1, E]
    auto sys = dynamics::OdeSystem::autonomous(4, [&p](const Vector& s, Vector& ds) {
      const double bind = p.k_f * s[3] * s[0];
      const double unbind = p.k_r * s[1];
      const double cat = p.k_cat * s[1];
      ds[0] = -bind + unbind;
      ds[1] = bind - unbind - cat;
      ds[2] = cat;
      ds[3] = -bind + unbind + cat;
    });
    Vector s0(4);
    s0 << p.s0_init, 0.0, 0.0, E;
    const Vector end = dynamics::integrate(sys, s0, 0.0, p.horizon, p.integ_tol);
    return end[2] / p.s0_init;
  }
  // states: [S0, S1] with effective rate k_eff = E k_f k_cat / (k_r + k_cat)
  const double keff = p.k_eff(E);
  auto sys = dynamics::OdeSystem::autonomous(2, [keff](const Vector& s, Vector& ds) {
    ds[0] = -keff * s[0];
    ds[1] = keff * s[0];
  });
  Vector s0(2);
  s0 << p.s0_init, 0.0;
  const Vector end = dynamics::integrate(sys, s0, 0.0, p.horizon, p.integ_tol);
  return end[1] / p.s0_init;
}

/// Residual |X(E; horizon) - target|; the optimization drives it to zero.
inline double enzyme_objective(double E, Fidelity fidelity, const EnzymeParams& p = {}) {
  return std::abs(enzyme_conversion(E, fidelity, p) - p.target_conversion);
}

// --- temperature-dependent Oregonator ------------------------------------------

/// Arrhenius-form dimensionless rate group g(T) = ref exp(-E/R (1/T - 1/T_ref)).
struct ArrheniusGroup {
  double ref = 1.0;
  double activation_energy = 0.0;  // J/mol

  double value(double T, double t_ref) const {
    constexpr double R = 8.314;
    return ref * std::exp(-activation_energy / R * (1.0 / T - 1.0 / t_ref));
  }
};

/// Reagent concentrations and rate groups of the Oregonator. The shipped
/// defaults place a Hopf locus inside T in [350, 500], f in [0.5, 2.5], keep
/// eps(T)/omega(T) < 1e-2 everywhere (so the reduced model stays a faithful
/// low-fidelity companion), and keep every purely-real eigenvalue mode above
/// |Re| ~ 0.06 so the detection objective vanishes only on the Hopf locus.
struct OregonatorParams {
  double a = 1.0;
  double b = 0.25;
  double t_ref = 425.0;
  ArrheniusGroup q{1e-2, 8e3};
  ArrheniusGroup omega{0.35, -8e3};
  ArrheniusGroup epsilon{1e-3, 0.0};
  double temp_min = 350.0;
  double temp_max = 500.0;
  double f_min = 0.5;
  double f_max = 2.5;
};

namespace detail {

struct OregonatorRates {
  double q, omega, epsilon;
};

inline OregonatorRates oregonator_rates(double T, const OregonatorParams& p) {
  return {p.q.value(T, p.t_ref), p.omega.value(T, p.t_ref), p.epsilon.value(T, p.t_ref)};
}

inline double oregonator_x_qss(double y, double a, double q) {
  return 0.5 * (a - y) + std::sqrt(std::max(q * a * y + 0.25 * (a - y) * (a - y), 0.0));
}

/// Full model, states (x, y, z).
inline dynamics::OdeSystem oregonator_full(const OregonatorRates& r, double a, double b, double f) {
  return dynamics::OdeSystem::autonomous(3, [=](const Vector& s, Vector& ds) {
    ds[0] = (r.q * a * s[1] - s[0] * s[1] + a * s[0] - s[0] * s[0]) / r.epsilon;
    ds[1] = (-r.q * a * s[1] - s[0] * s[1] + f * b * s[2]) / r.omega;
    ds[2] = a * s[0] - b * s[2];
  });
}

/// Reduced model, states (y, z), with x eliminated through its quasi steady state.
inline dynamics::OdeSystem oregonator_reduced(const OregonatorRates& r, double a, double b,
                                              double f) {
  return dynamics::OdeSystem::autonomous(2, [=](const Vector& s, Vector& ds) {
    const double xs = oregonator_x_qss(s[0], a, r.q);
    ds[0] = (-r.q * a * s[0] - xs * s[0] + f * b * s[1]) / r.omega;
    ds[1] = a * xs - b * s[1];
  });
}

/// Steady-state locator. Roots are found on the time-rescaled residual (the
/// equations multiplied by their eps/omega prefactors), which has the same
/// zeros but O(1) component scales; candidates are the damped-integration
/// endpoint followed by a fixed start grid. The positive branch is required.
inline Vector oregonator_steady_state(Fidelity fidelity, const OregonatorRates& r, double a,
                                      double b, double f) {
  const bool high = fidelity == Fidelity::kHigh;
  auto residual = [&](const Vector& s) -> Vector {
    if (high) {
      Vector out(3);
      out[0] = r.q * a * s[1] - s[0] * s[1] + a * s[0] - s[0] * s[0];
      out[1] = -r.q * a * s[1] - s[0] * s[1] + f * b * s[2];
      out[2] = a * s[0] - b * s[2];
      return out;
    }
    Vector out(2);
    const double xs = oregonator_x_qss(s[0], a, r.q);
    out[0] = -r.q * a * s[0] - xs * s[0] + f * b * s[1];
    out[1] = a * xs - b * s[1];
    return out;
  };
  auto admissible = [&](const Vector& s) {
    return s.allFinite() && (s.array() > 1e-8 * a).all();
  };

  std::vector<Vector> starts;
  {
    const dynamics::OdeSystem sys = high ? oregonator_full(r, a, b, f)
                                         : oregonator_reduced(r, a, b, f);
    Vector s0(high ? 3 : 2);
    if (high) {
      s0 << 0.1 * a, 0.5 * a, 0.5 * a / b;
    } else {
      s0 << 0.5 * a, 0.5 * a / b;
    }
    starts.push_back(dynamics::integrate(sys, s0, 0.0, 5.0, {1e-8, 1e-10}));
  }
  for (double gy : {0.02, 0.1, 0.3, 0.6, 0.9, 1.4}) {
    for (double gz : {0.05, 0.2, 0.6}) {
      if (high) {
        for (double gx : {0.02, 0.2, 0.6}) {
          Vector s(3);
          s << gx * a, gy * 2.0 * a, gz * 2.0 * a / b;
          starts.push_back(s);
        }
      } else {
        Vector s(2);
        s << gy * 2.0 * a, gz * 2.0 * a / b;
        starts.push_back(s);
      }
    }
  }

  std::string last = "";
  for (const Vector& s0 : starts) {
    try {
      Vector root = dynamics::newton_root(residual, s0, 1e-13, 100);
      if (admissible(root)) return root;
    } catch (const ConvergenceError& e) {
      last = e.what();
    }
  }
  throw ConvergenceError("oregonator_steady_state: no admissible root found (" + last + ")");
}

}  // namespace detail

/// |Re| of the critical conjugate pair; when the spectrum is purely real the
/// smallest |Re| keeps the detection landscape continuous across the region
/// where the pair collides onto the real axis.
inline double critical_eigenvalue_real(const std::vector<std::complex<double>>& eigenvalues) {
  double best_pair = std::numeric_limits<double>::infinity();
  double best_real = std::numeric_limits<double>::infinity();
  for (const auto& ev : eigenvalues) {
    if (std::abs(ev.imag()) > 1e-6 * (1.0 + std::abs(ev))) {
      best_pair = std::min(best_pair, std::abs(ev.real()));
    } else {
      best_real = std::min(best_real, std::abs(ev.real()));
    }
  }
  return std::isfinite(best_pair) ? best_pair : best_real;
}

/// Hopf-detection objective |Re(lambda)| of the critical eigenvalue pair of
/// the steady-state Jacobian at (T, f). The full 3-state model is the high
/// fidelity; the reduced 2-state model the low.
inline double oregonator_hopf_objective(double T, double f, Fidelity fidelity,
                                        const OregonatorParams& p = {}) {
  const detail::OregonatorRates r = detail::oregonator_rates(T, p);
  const Vector x_star = detail::oregonator_steady_state(fidelity, r, p.a, p.b, f);
  const dynamics::OdeSystem sys = fidelity == Fidelity::kHigh
                                      ? detail::oregonator_full(r, p.a, p.b, f)
                                      : detail::oregonator_reduced(r, p.a, p.b, f);
  return critical_eigenvalue_real(dynamics::jacobian_eigenvalues(sys, x_star));
}

// --- problem registry -----------------------------------------------------------

inline Problem make_forrester() {
  Problem p;
  p.name = "forrester";
  Vector lo(1), hi(1);
  lo << 0.0;
  hi << 1.0;
  p.domain = Domain(lo, hi);
  p.eval_low = [](const Vector& x) { return forrester(x[0], Fidelity::kLow); };
  p.eval_high = [](const Vector& x) { return forrester(x[0], Fidelity::kHigh); };
  Vector xs(1);
  xs << 0.7572487568675433;
  p.known_optimum = KnownOptimum{xs, -6.0207400557670825};
  return p;
}

inline Problem make_bohachevsky() {
  Problem p;
  p.name = "bohachevsky";
  p.domain = Domain(Vector::Constant(2, -5.0), Vector::Constant(2, 5.0));
  p.eval_low = [](const Vector& x) { return bohachevsky(x[0], x[1], Fidelity::kLow); };
  p.eval_high = [](const Vector& x) { return bohachevsky(x[0], x[1], Fidelity::kHigh); };
  p.known_optimum = KnownOptimum{Vector::Zero(2), 0.0};
  return p;
}

inline Problem make_himmelblau() {
  Problem p;
  p.name = "himmelblau";
  p.domain = Domain(Vector::Constant(2, -4.0), Vector::Constant(2, 4.0));
  p.eval_low = [](const Vector& x) { return himmelblau(x[0], x[1], Fidelity::kLow); };
  p.eval_high = [](const Vector& x) { return himmelblau(x[0], x[1], Fidelity::kHigh); };
  Vector xs(2);
  xs << 3.0, 2.0;  // one of the four zeros; the regret target is the shared value 0
  p.known_optimum = KnownOptimum{xs, 0.0};
  return p;
}

inline Problem make_toy_enzyme(const EnzymeParams& params = {}) {
  Problem p;
  p.name = "toy_enzyme";
  Vector lo(1), hi(1);
  lo << params.e_min;
  hi << params.e_max;
  p.domain = Domain(lo, hi);
  p.eval_low = [params](const Vector& x) {
    return enzyme_objective(x[0], Fidelity::kLow, params);
  };
  p.eval_high = [params](const Vector& x) {
    return enzyme_objective(x[0], Fidelity::kHigh, params);
  };
  p.known_optimum = KnownOptimum{std::nullopt, 0.0};
  return p;
}

inline Problem make_oregonator(const OregonatorParams& params = {}) {
  Problem p;
  p.name = "oregonator";
  Vector lo(2), hi(2);
  lo << params.temp_min, params.f_min;
  hi << params.temp_max, params.f_max;
  p.domain = Domain(lo, hi);
  p.eval_low = [params](const Vector& x) {
    return oregonator_hopf_objective(x[0], x[1], Fidelity::kLow, params);
  };
  p.eval_high = [params](const Vector& x) {
    return oregonator_hopf_objective(x[0], x[1], Fidelity::kHigh, params);
  };
  p.known_optimum = KnownOptimum{std::nullopt, 0.0};
  return p;
}

inline std::vector<std::string> problem_names() {
  return {"forrester", "bohachevsky", "himmelblau", "toy_enzyme", "oregonator"};
}

inline Problem make_problem(const std::string& name) {
  if (name == "forrester") return make_forrester();
  if (name == "bohachevsky") return make_bohachevsky();
  if (name == "himmelblau") return make_himmelblau();
  if (name == "toy_enzyme") return make_toy_enzyme();
  if (name == "oregonator") return make_oregonator();
  throw ConfigError("unknown problem: " + name);
}

}  // namespace mfbo
