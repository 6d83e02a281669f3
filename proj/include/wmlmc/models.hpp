#pragma once

// Benchmark problems with known reference values.

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wmlmc/errors.hpp"
#include "wmlmc/moment_match.hpp"
#include "wmlmc/schemes.hpp"

namespace wmlmc {

enum class ReferenceKind { published_constant, closed_form };

struct CaseParameters {
  double rate = 0.05;
  double sigma = 0.2;
  double horizon = 1.0;
  double strike = 1.0;
  double x0 = 1.0;
  double intensity = 0.0;  // λ
  double log_mean = 0.0;   // m
  double log_sd = 0.0;     // θ
};

struct BenchmarkCase {
  std::string name;
  ModelSpec model;
  PathFunctional functional;
  int finest_level = 9;
  CaseParameters params;
  double reference_value = 0.0;
  ReferenceKind reference_kind = ReferenceKind::published_constant;
  /// Moment-matching report behind the discrete jump law, when there is one.
  std::optional<MomentMatchReport> jump_match;

  SchemeSetup setup(IncrementBackend backend) const {
    return SchemeSetup(model, finest_level, params.horizon, backend);
  }
};

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Call on the continuous geometric time average of a GBM: log G is normal
/// with mean log x0 + (r - σ²/2)T/2 and variance σ²T/3.
inline double geometric_asian_call(double x0, double r, double sigma, double T, double K) {
  const double mean = std::log(x0) + 0.5 * (r - 0.5 * sigma * sigma) * T;
  const double sd = sigma * std::sqrt(T / 3.0);
  const double d2 = (mean - std::log(K)) / sd;
  const double d1 = d2 + sd;
  return std::exp(-r * T) * (std::exp(mean + 0.5 * sd * sd) * normal_cdf(d1) - K * normal_cdf(d2));
}

namespace detail {

inline ModelSpec gbm_model(std::size_t dim, double rate, double sigma, double x0) {
  ModelSpec m;
  m.dim_state = dim;
  m.dim_noise = dim;
  m.x0.assign(dim, x0);
  m.drift = [rate](std::span<const double> x, std::span<double> out) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = rate * x[i];
  };
  m.diffusion_column = [sigma](std::span<const double> x, std::size_t k, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    out[k] = sigma * x[k];
  };
  return m;
}

}  // namespace detail

/// Three independent GBMs, discounted call on the maximum.
inline BenchmarkCase maxcall3d() {
  BenchmarkCase c;
  c.name = "maxcall3d";
  c.params = {};
  c.finest_level = 9;
  c.model = detail::gbm_model(3, c.params.rate, c.params.sigma, c.params.x0);
  c.functional.kind = PathFunctional::Kind::terminal;
  c.functional.payoff = [K = c.params.strike](std::span<const double> x) {
    return std::max(*std::max_element(x.begin(), x.end()) - K, 0.0);
  };
  c.functional.rate = c.params.rate;
  c.functional.horizon = c.params.horizon;
  c.reference_value = 0.2276799594;
  c.reference_kind = ReferenceKind::published_constant;
  return c;
}

/// One GBM, discounted call on exp of the time-averaged log price.
inline BenchmarkCase geometric_asian() {
  BenchmarkCase c;
  c.name = "geo-asian";
  c.params = {};
  c.finest_level = 12;
  c.model = detail::gbm_model(1, c.params.rate, c.params.sigma, c.params.x0);
  c.functional.kind = PathFunctional::Kind::log_time_average_exp;
  c.functional.payoff = [K = c.params.strike](std::span<const double> g) { return std::max(g[0] - K, 0.0); };
  c.functional.rate = c.params.rate;
  c.functional.horizon = c.params.horizon;
  c.reference_value = 0.05546818634;
  c.reference_kind = ReferenceKind::closed_form;
  const double recomputed = geometric_asian_call(c.params.x0, c.params.rate, c.params.sigma, c.params.horizon,
                                                 c.params.strike);
  if (std::fabs(recomputed - c.reference_value) > 1e-8) {
    throw ContractViolation("geometric Asian closed form disagrees with the stored reference");
  }
  return c;
}

/// Merton jump diffusion with lognormal jump multipliers, drift-compensated.
/// The binomial backend uses a four-atom moment-matched jump law, the normal
/// backend exact lognormal jumps.
inline BenchmarkCase merton_jump() {
  BenchmarkCase c;
  c.name = "merton";
  c.params.intensity = 0.5;
  c.params.log_mean = 0.05;
  c.params.log_sd = 0.25;
  c.finest_level = 8;
  const auto& p = c.params;
  const double drift = p.rate - p.intensity * (std::exp(p.log_mean + 0.5 * p.log_sd * p.log_sd) - 1.0);
  c.model = detail::gbm_model(1, drift, p.sigma, p.x0);
  c.model.jump_map = [](std::span<const double> x, double z, std::span<double> out) { out[0] = x[0] * (z - 1.0); };
  c.model.jump_intensity = p.intensity;

  const auto targets = lognormal_targets(p.log_mean, p.log_sd);
  c.jump_match = solve_moment_match(targets);
  c.model.jump_sizes = JumpSizeLaw::from_discrete(c.jump_match->law);
  c.model.jump_sizes.exact = [m = p.log_mean, theta = p.log_sd](Stream& rng) {
    return std::exp(m + theta * standard_normal(rng));
  };

  c.functional.kind = PathFunctional::Kind::terminal;
  c.functional.payoff = [K = p.strike](std::span<const double> x) { return std::max(x[0] - K, 0.0); };
  c.functional.rate = p.rate;
  c.functional.horizon = p.horizon;
  c.reference_value = 0.153065585;
  c.reference_kind = ReferenceKind::published_constant;
  return c;
}

inline std::vector<std::string> case_names() { return {"maxcall3d", "geo-asian", "merton"}; }

inline BenchmarkCase find_case(const std::string& name) {
  if (name == "maxcall3d") return maxcall3d();
  if (name == "geo-asian") return geometric_asian();
  if (name == "merton") return merton_jump();
  throw ConfigError("unknown case '" + name + "' (expected maxcall3d, geo-asian or merton)");
}

}  // namespace wmlmc
