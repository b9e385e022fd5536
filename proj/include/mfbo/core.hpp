#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfbo {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Thrown when a surrogate fit cannot be completed (e.g. the Gram matrix
/// stays indefinite through all jitter escalations and restarts).
class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown by iterative solvers (Newton, GMRES, ODE stepping) on
/// non-convergence; the message carries residual diagnostics.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Fidelity { kLow, kHigh };

inline const char* to_string(Fidelity f) {
  return f == Fidelity::kLow ? "low" : "high";
}

/// Axis-aligned box search space. All optimization-facing code maps points
/// through to_unit/from_unit so that lengthscales, proximity radii and
/// duplicate tolerances are dimensionless.
class Domain {
 public:
  Domain() : Domain(Vector::Zero(1), Vector::Ones(1)) {}

  Domain(Vector lower, Vector upper) : lower_(std::move(lower)), upper_(std::move(upper)) {
    if (lower_.size() != upper_.size() || lower_.size() == 0) {
      throw std::invalid_argument("Domain: bound vectors must be non-empty and equal-sized");
    }
    for (Eigen::Index i = 0; i < lower_.size(); ++i) {
      if (!(lower_[i] < upper_[i])) {
        throw std::invalid_argument("Domain: lower[i] < upper[i] required");
      }
    }
  }

  static Domain unit_cube(int dim) {
    return Domain(Vector::Zero(dim), Vector::Ones(dim));
  }

  int dim() const { return static_cast<int>(lower_.size()); }
  const Vector& lower() const { return lower_; }
  const Vector& upper() const { return upper_; }
  Vector widths() const { return upper_ - lower_; }

  Vector to_unit(const Vector& x) const {
    return (x - lower_).cwiseQuotient(upper_ - lower_);
  }
  Vector from_unit(const Vector& u) const {
    return lower_ + u.cwiseProduct(upper_ - lower_);
  }
  Vector clamp(const Vector& x) const {
    return x.cwiseMax(lower_).cwiseMin(upper_);
  }
  bool contains(const Vector& x, double tol = 0.0) const {
    return (x.array() >= lower_.array() - tol).all() &&
           (x.array() <= upper_.array() + tol).all();
  }

 private:
  Vector lower_;
  Vector upper_;
};

/// A batch of design points. Every point carries a low-fidelity tag; points
/// with high[i] set are additionally tagged high. Nested designs share the
/// exact point object between tags, so the subset property is bitwise.
struct Design {
  std::vector<Vector> points;
  std::vector<bool> high;

  std::size_t size() const { return points.size(); }

  std::vector<Vector> high_points() const {
    std::vector<Vector> out;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (high[i]) out.push_back(points[i]);
    }
    return out;
  }
};

// --- deterministic seed derivation -----------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Stable per-task seed: hash of (master seed, textual key, index). Runs keyed
/// this way are unaffected by adding more seeds or grid cells to a sweep.
inline std::uint64_t derive_seed(std::uint64_t master, const std::string& key,
                                 std::uint64_t index = 0) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the key
  for (unsigned char c : key) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(master ^ splitmix64(h ^ splitmix64(index)));
}

}  // namespace mfbo
