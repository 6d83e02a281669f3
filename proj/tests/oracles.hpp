#pragma once

// Independent reference computations used by the tests. Nothing here calls
// into the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/poisson.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/binomial.hpp>

namespace oracle {

inline double binomial_pmf(unsigned n, unsigned k, double p) {
  return boost::math::binomial_coefficient<double>(n, k) * std::pow(p, k) * std::pow(1.0 - p, n - k);
}

inline double lognormal_moment(double m, double theta, int i) {
  return std::exp(i * m + 0.5 * i * i * theta * theta);
}

inline double bs_call(double s, double k, double r, double sigma, double t) {
  boost::math::normal n;
  const double d1 = (std::log(s / k) + (r + 0.5 * sigma * sigma) * t) / (sigma * std::sqrt(t));
  return s * boost::math::cdf(n, d1) - k * std::exp(-r * t) * boost::math::cdf(n, d1 - sigma * std::sqrt(t));
}

/// Merton jump-diffusion call by the Poisson mixture of Black-Scholes prices.
inline double merton_call(double s, double k, double r, double sigma, double t, double lambda, double m,
                          double theta) {
  const double kappa = std::exp(m + 0.5 * theta * theta) - 1.0;
  const double lp = lambda * (1.0 + kappa);
  boost::math::poisson_distribution<> pois(lp * t);
  double total = 0.0;
  for (unsigned n = 0; n < 100; ++n) {
    const double sn = std::sqrt(sigma * sigma + n * theta * theta / t);
    const double rn = r - lambda * kappa + n * std::log1p(kappa) / t;
    total += boost::math::pdf(pois, n) * bs_call(s, k, rn, sn, t) * std::exp((rn - r) * t);
  }
  return total;
}

/// ∫_a^b f by adaptive Gauss-Kronrod.
inline double integrate(const std::function<double(double)>& f, double a, double b) {
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 15, 1e-14);
}

/// ∫_a^b f for integrands with an endpoint singularity (double-exponential).
inline double integrate_singular(const std::function<double(double)>& f, double a, double b) {
  boost::math::quadrature::tanh_sinh<double> q;
  return q.integrate(f, a, b, 1e-14);
}

/// Welford mean and variance.
struct Moments {
  double n = 0, mean = 0, m2 = 0;
  void add(double x) {
    n += 1;
    const double d = x - mean;
    mean += d / n;
    m2 += d * (x - mean);
  }
  double variance() const { return n > 1 ? m2 / (n - 1) : 0.0; }
  double se() const { return std::sqrt(variance() / n); }
};

/// Two-sample Kolmogorov-Smirnov statistic scaled by sqrt(nm/(n+m)).
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::fabs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  const double na = a.size(), nb = b.size();
  return d * std::sqrt(na * nb / (na + nb));
}

// 1.63 is the 1% critical value of the limiting Kolmogorov distribution.
inline constexpr double kKsCritical = 1.63;

/// Pearson chi-square of observed counts against expected probabilities.
inline double chi_square(const std::vector<std::uint64_t>& counts, const std::vector<double>& probs) {
  double n = 0;
  for (auto c : counts) n += static_cast<double>(c);
  double stat = 0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    const double e = n * probs[k];
    if (e <= 0) continue;
    stat += (counts[k] - e) * (counts[k] - e) / e;
  }
  return stat;
}

/// Upper 0.1% quantile of chi-square with `dof` degrees of freedom
/// (Wilson-Hilferty).
inline double chi_square_critical(double dof) {
  const double z = 3.090232306167813;
  const double a = 2.0 / (9.0 * dof);
  return dof * std::pow(1.0 - a + z * std::sqrt(a), 3);
}

}  // namespace oracle
