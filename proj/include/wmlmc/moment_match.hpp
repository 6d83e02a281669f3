#pragma once

// Four-atom discrete laws matching the first six moments of a target
// distribution, with the seventh moment fitted as closely as possible.
//
// The solver starts from the Gauss rule of the target's first eight moments
// (mass + μ1..μ7), obtained with the Chebyshev algorithm and a Jacobi-matrix
// eigendecomposition, and then polishes it with Gauss-Newton SQP steps on the
// equality-constrained problem
//
//   minimize (Σ p_k x_k^7 - μ7)^2  s.t.  Σ p_k x_k^i = μ_i, i = 0..6,  p_k >= 0.
//
// When the targets come from a law with fewer than four support points the
// recurrence breaks down early and a smaller rule is returned, flagged
// degenerate.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wmlmc/alias_table.hpp"
#include "wmlmc/errors.hpp"

namespace wmlmc {

/// i-th raw moment exp(i·m + i²θ²/2) of a lognormal with log-mean m and
/// log-sd θ.
inline double lognormal_moment(double m, double theta, int i) {
  const double k = static_cast<double>(i);
  return std::exp(k * m + 0.5 * k * k * theta * theta);
}

inline std::array<double, 7> lognormal_targets(double m, double theta) {
  std::array<double, 7> t{};
  for (int i = 1; i <= 7; ++i) t[i - 1] = lognormal_moment(m, theta, i);
  return t;
}

struct Atom {
  double value = 0.0;
  double probability = 0.0;
};

struct MomentMatchedLaw {
  std::vector<Atom> atoms;
  /// Set when atoms collapsed and fewer than four remain.
  bool degenerate = false;

  std::vector<double> probabilities() const {
    std::vector<double> p;
    p.reserve(atoms.size());
    for (const auto& a : atoms) p.push_back(a.probability);
    return p;
  }

  double moment(int i) const {
    long double s = 0;
    for (const auto& a : atoms) s += static_cast<long double>(a.probability) * std::pow(static_cast<long double>(a.value), i);
    return static_cast<double>(s);
  }

  double mean() const { return moment(1); }
};

/// Residual scale: relative for |μ| >= 1, absolute below.
inline double moment_residual(double achieved, double target) {
  return std::fabs(achieved - target) / std::max(1.0, std::fabs(target));
}

/// Scaled residuals of moments 1..6 (index 0 holds moment 1).
inline std::array<double, 6> constraint_residuals(const MomentMatchedLaw& law,
                                                  std::span<const double, 7> targets) {
  std::array<double, 6> r{};
  for (int i = 1; i <= 6; ++i) r[i - 1] = moment_residual(law.moment(i), targets[i - 1]);
  return r;
}

struct MomentMatchReport {
  MomentMatchedLaw law;
  std::array<double, 6> residuals{};
  double mass_residual = 0.0;
  double seventh_moment_gap = 0.0;  // Σ p x^7 - μ7
  int iterations = 0;

  double max_residual() const {
    return std::max(mass_residual, *std::max_element(residuals.begin(), residuals.end()));
  }
};

namespace detail {

// Recurrence coefficients (α_k, β_k) of the monic orthogonal polynomials from
// raw moments μ_0..μ_{2n-1} (Chebyshev algorithm). Returns fewer than n pairs
// when the moment sequence has rank < n.
inline void chebyshev_recurrence(std::span<const long double> mu, int n, std::vector<long double>& alpha,
                                 std::vector<long double>& beta) {
  const int len = 2 * n;
  std::vector<long double> prev2(len, 0.0L), prev(mu.begin(), mu.begin() + len), cur(len, 0.0L);
  alpha.assign(1, mu[1] / mu[0]);
  beta.assign(1, mu[0]);
  for (int k = 1; k < n; ++k) {
    for (int l = k; l < len - k; ++l) {
      cur[l] = prev[l + 1] - alpha[k - 1] * prev[l] - beta[k - 1] * prev2[l];
    }
    // σ_{k,k} is the squared norm of π_k; a collapse means rank k.
    const long double norm = cur[k];
    const long double floor = 1e-12L * std::max(1.0L, std::fabs(mu[2 * k]));
    if (norm < -floor) throw ConfigError("targets are not the moments of a probability law");
    if (norm <= floor) return;
    alpha.push_back(cur[k + 1] / cur[k] - prev[k] / prev[k - 1]);
    beta.push_back(cur[k] / prev[k - 1]);
    prev2.swap(prev);
    prev.swap(cur);
  }
}

inline std::vector<Atom> gauss_rule(std::span<const long double> mu, int n) {
  std::vector<long double> alpha, beta;
  chebyshev_recurrence(mu, n, alpha, beta);
  const int m = static_cast<int>(alpha.size());
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(m, m);
  for (int k = 0; k < m; ++k) {
    jacobi(k, k) = static_cast<double>(alpha[k]);
    if (k + 1 < m) {
      const double off = static_cast<double>(std::sqrt(beta[k + 1]));
      jacobi(k, k + 1) = off;
      jacobi(k + 1, k) = off;
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
  std::vector<Atom> atoms(m);
  for (int k = 0; k < m; ++k) {
    const double v0 = eig.eigenvectors()(0, k);
    atoms[k] = {eig.eigenvalues()(k), static_cast<double>(mu[0]) * v0 * v0};
  }
  return atoms;
}

}  // namespace detail

/// Solves the four-atom moment-matching problem for targets μ1..μ7.
/// Throws ConfigError for inadmissible targets and SolverError when the
/// constraint residuals cannot be brought under `tolerance`.
inline MomentMatchReport solve_moment_match(std::span<const double, 7> targets, double tolerance = 1e-9,
                                            int max_iterations = 50) {
  constexpr int kAtoms = 4;
  constexpr int kConstraints = 7;  // moments 0..6

  for (double t : targets) {
    if (!std::isfinite(t)) throw ConfigError("moment targets must be finite");
  }
  if (!(targets[1] > targets[0] * targets[0])) {
    throw ConfigError("moment targets need positive variance (mu2 > mu1^2)");
  }

  std::array<long double, 8> mu{};
  mu[0] = 1.0L;
  for (int i = 1; i <= 7; ++i) mu[i] = targets[i - 1];

  MomentMatchReport report;
  std::vector<Atom> atoms = detail::gauss_rule(mu, kAtoms);

  if (static_cast<int>(atoms.size()) == kAtoms) {
    // Row scaling makes every equation relative to its target magnitude.
    std::array<double, 8> scale{};
    for (int i = 0; i <= 7; ++i) scale[i] = 1.0 / std::max(1.0, std::fabs(static_cast<double>(mu[i])));

    Eigen::Matrix<double, 8, 1> z;
    for (int k = 0; k < kAtoms; ++k) {
      z(k) = atoms[k].probability;
      z(kAtoms + k) = atoms[k].value;
    }
    auto evaluate = [&](const Eigen::Matrix<double, 8, 1>& v, Eigen::Matrix<double, kConstraints, 1>& c,
                        Eigen::Matrix<double, kConstraints, 8>& a, double& g, Eigen::Matrix<double, 8, 1>& dg) {
      c.setZero();
      a.setZero();
      g = 0.0;
      dg.setZero();
      for (int k = 0; k < kAtoms; ++k) {
        const double p = v(k), x = v(kAtoms + k);
        for (int i = 0; i <= 7; ++i) {
          const double xi = std::pow(x, i);
          const double dxi = i == 0 ? 0.0 : i * std::pow(x, i - 1);
          if (i < kConstraints) {
            c(i) += scale[i] * p * xi;
            a(i, k) = scale[i] * xi;
            a(i, kAtoms + k) = scale[i] * p * dxi;
          } else {
            g += scale[i] * p * xi;
            dg(k) = scale[i] * xi;
            dg(kAtoms + k) = scale[i] * p * dxi;
          }
        }
      }
      for (int i = 0; i < kConstraints; ++i) c(i) -= scale[i] * static_cast<double>(mu[i]);
      g -= scale[7] * static_cast<double>(mu[7]);
    };

    Eigen::Matrix<double, kConstraints, 1> c;
    Eigen::Matrix<double, kConstraints, 8> a;
    Eigen::Matrix<double, 8, 1> dg;
    double g = 0.0;
    for (int it = 0; it < max_iterations; ++it) {
      evaluate(z, c, a, g, dg);
      // Gauss-Newton KKT system with a small Levenberg shift on the Hessian.
      Eigen::Matrix<double, 15, 15> kkt = Eigen::Matrix<double, 15, 15>::Zero();
      kkt.topLeftCorner<8, 8>() = dg * dg.transpose() + 1e-12 * Eigen::Matrix<double, 8, 8>::Identity();
      kkt.topRightCorner<8, 7>() = a.transpose();
      kkt.bottomLeftCorner<7, 8>() = a;
      Eigen::Matrix<double, 15, 1> rhs;
      rhs.head<8>() = -dg * g;
      rhs.tail<7>() = -c;
      const Eigen::Matrix<double, 15, 1> sol = kkt.fullPivLu().solve(rhs);
      Eigen::Matrix<double, 8, 1> step = sol.head<8>();
      if (!step.allFinite()) break;
      z += step;
      for (int k = 0; k < kAtoms; ++k) z(k) = std::max(z(k), 0.0);
      report.iterations = it + 1;
      if (step.norm() < 1e-12 * (1.0 + z.norm())) break;
    }
    for (int k = 0; k < kAtoms; ++k) atoms[k] = {z(kAtoms + k), z(k)};
  }

  // Merge atoms that collapsed onto each other.
  std::sort(atoms.begin(), atoms.end(), [](const Atom& l, const Atom& r) { return l.value < r.value; });
  std::vector<Atom> merged;
  for (const auto& at : atoms) {
    if (at.probability <= 0.0) continue;
    if (!merged.empty() && std::fabs(merged.back().value - at.value) <= 1e-8) {
      auto& m = merged.back();
      const double w = m.probability + at.probability;
      m.value = (m.value * m.probability + at.value * at.probability) / w;
      m.probability = w;
    } else {
      merged.push_back(at);
    }
  }
  report.law.atoms = std::move(merged);
  report.law.degenerate = static_cast<int>(report.law.atoms.size()) < kAtoms;

  double mass = 0.0;
  for (const auto& at : report.law.atoms) mass += at.probability;
  report.mass_residual = std::fabs(mass - 1.0);
  report.residuals = constraint_residuals(report.law, targets);
  report.seventh_moment_gap = report.law.moment(7) - targets[6];

  if (!(report.max_residual() <= tolerance)) {
    throw SolverError("moment matching did not converge; best residual " + std::to_string(report.max_residual()),
                      report.max_residual());
  }
  return report;
}

/// `count` i.i.d. draws from the atom set.
template <class Rng>
std::vector<double> sample_atoms(const MomentMatchedLaw& law, const AliasTable& table, std::size_t count, Rng& rng) {
  std::vector<double> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(law.atoms[table.sample(rng)].value);
  return out;
}

}  // namespace wmlmc
