#pragma once

// Lévy-driven Euler scheme X_j = X_{j-1} + a(X_{j-1}) ζ_j with small jumps
// replaced by a Gaussian, and the cross-level coupling that re-thresholds the
// fine jumps at the coarse cut-off.
//
// Fine increment at (Δ, δ):
//   ζ = Δ b + σ_{Δ,δ} ξ + Σ_{i ≤ N} (Z_i - E[Z | |Z| > δ]),
//   σ²_{Δ,δ} = Δ (σ² + ∫_{|z|≤δ} z² ν(dz)),  N ~ Poisson(Δ ν(|z| > δ)).
// Coarse increment from two fine ones:
//   ζ_c = 2Δ_f b + σ_{Δf,δf}(ξ_1 + ξ_2) + Σ over both steps of
//         (Z 1{|Z|>δ_c} - E[Z^{δf} 1{|Z|>δ_c}]).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "wmlmc/alias_table.hpp"
#include "wmlmc/errors.hpp"
#include "wmlmc/increments.hpp"
#include "wmlmc/moment_match.hpp"
#include "wmlmc/random.hpp"
#include "wmlmc/schemes.hpp"

namespace wmlmc {

struct LevyMeasureSpec {
  double alpha = 0.5;
  double scale = 1.0;
  double gaussian_sigma = 0.0;
  double drift = 0.0;
  /// ν({|z| > t})
  std::function<double(double)> tail_mass;
  /// ∫_{|z|≤δ} z² ν(dz)
  std::function<double(double)> trunc_m2;
  /// ∫_{lo<|z|≤hi} z ν(dz)
  std::function<double(double, double)> trunc_mean;
  /// Z drawn from 1{|z|>δ} ν(dz) / ν(|z|>δ)
  std::function<double(double, Stream&)> sample_tail;
  /// E[Z^i | |Z| > δ]; only needed for discrete jump replacement.
  std::function<double(int, double)> tail_moment;
};

/// Symmetric ν(dz) = c |z|^{-1-α} 1{0<|z|≤1} dz, with closed forms for every
/// functional the scheme needs.
inline LevyMeasureSpec power_law_measure(double alpha, double scale = 1.0, double sigma = 0.0,
                                         double drift = 0.0) {
  if (!(alpha > 0.0 && alpha < 2.0)) throw ConfigError("alpha must lie in (0, 2)");
  if (!(scale > 0.0)) throw ConfigError("measure scale must be positive");
  if (!(sigma >= 0.0)) throw ConfigError("gaussian sigma must be nonnegative");
  LevyMeasureSpec spec;
  spec.alpha = alpha;
  spec.scale = scale;
  spec.gaussian_sigma = sigma;
  spec.drift = drift;
  spec.tail_mass = [alpha, scale](double t) {
    if (t >= 1.0) return 0.0;
    return 2.0 * scale * (std::pow(t, -alpha) - 1.0) / alpha;
  };
  spec.trunc_m2 = [alpha, scale](double delta) {
    if (delta <= 0.0) return 0.0;
    return 2.0 * scale * std::pow(std::min(delta, 1.0), 2.0 - alpha) / (2.0 - alpha);
  };
  spec.trunc_mean = [](double, double) { return 0.0; };
  spec.sample_tail = [alpha](double delta, Stream& rng) {
    if (!(delta > 0.0 && delta < 1.0)) throw ContractViolation("tail sampler needs 0 < delta < 1");
    // P(|Z| > u | |Z| > δ) = (u^{-α} - 1) / (δ^{-α} - 1), inverted.
    const double s = uniform_open01(rng);
    const double magnitude = std::pow(1.0 + s * (std::pow(delta, -alpha) - 1.0), -1.0 / alpha);
    return (rng() >> 63) ? -magnitude : magnitude;
  };
  spec.tail_moment = [alpha, scale, mass = spec.tail_mass](int i, double delta) {
    if (i % 2 == 1) return 0.0;
    const double k = static_cast<double>(i);
    return 2.0 * scale * (1.0 - std::pow(delta, k - alpha)) / ((k - alpha) * mass(delta));
  };
  return spec;
}

/// σ_{Δ,δ} = sqrt(Δ (σ² + ∫_{|z|≤δ} z² ν(dz))).
inline double sigma_small_jumps(const LevyMeasureSpec& spec, double delta, double step) {
  return std::sqrt(step * (spec.gaussian_sigma * spec.gaussian_sigma + spec.trunc_m2(delta)));
}

/// Poisson draw: inversion for means up to 30, sums of such draws above.
template <class Rng>
std::uint64_t sample_poisson(double mean, Rng& rng) {
  if (!(mean >= 0.0) || !std::isfinite(mean)) throw ContractViolation("Poisson mean must be finite and >= 0");
  constexpr double kChunk = 30.0;
  std::uint64_t total = 0;
  while (mean > kChunk) {
    total += sample_poisson(kChunk, rng);
    mean -= kChunk;
  }
  if (mean == 0.0) return total;
  double p = std::exp(-mean);
  double cdf = p;
  const double u = uniform01(rng);
  std::uint64_t k = 0;
  while (u >= cdf && p > 0.0) {
    ++k;
    p *= mean / static_cast<double>(k);
    cdf += p;
  }
  return total + k;
}

/// Restricted jump law at one threshold: exact sampler or a four-atom
/// moment-matched replacement.
class TailLaw {
 public:
  TailLaw(const LevyMeasureSpec& spec, double delta, bool discrete) : spec_(&spec), delta_(delta) {
    mass_ = spec.tail_mass(delta);
    if (discrete && mass_ > 0.0) {
      if (!spec.tail_moment) throw ConfigError("discrete jump replacement needs tail moments");
      std::array<double, 7> targets{};
      for (int i = 1; i <= 7; ++i) targets[i - 1] = spec.tail_moment(i, delta);
      // Symmetric targets make the odd residuals absolute; the atoms stay exact.
      auto report = solve_moment_match(targets, 1e-8);
      discrete_ = std::make_shared<const JumpSizeLaw>(JumpSizeLaw::from_discrete(std::move(report.law)));
    }
  }

  double delta() const noexcept { return delta_; }
  double mass() const noexcept { return mass_; }
  bool discrete() const noexcept { return static_cast<bool>(discrete_); }

  double sample(Stream& rng) const {
    if (discrete_) return discrete_->sample(IncrementBackend::binomial, rng);
    return spec_->sample_tail(delta_, rng);
  }

  /// E[Z 1{|Z| > t}] under this restricted law.
  double mean_above(double t) const {
    if (mass_ <= 0.0) return 0.0;
    if (discrete_) {
      double s = 0.0;
      for (const auto& a : discrete_->discrete->atoms) {
        if (std::fabs(a.value) > t) s += a.probability * a.value;
      }
      return s;
    }
    return spec_->trunc_mean(std::max(t, delta_), std::numeric_limits<double>::infinity()) / mass_;
  }

  double mean() const { return mean_above(0.0); }

 private:
  const LevyMeasureSpec* spec_;
  double delta_;
  double mass_ = 0.0;
  std::shared_ptr<const JumpSizeLaw> discrete_;
};

struct LevyIncrement {
  double drift_part = 0.0;     // Δ b
  double gaussian_part = 0.0;  // σ_{Δ,δ} ξ
  double xi = 0.0;             // the standard normal behind gaussian_part
  std::vector<double> jump_values;
  double compensator = 0.0;

  double value() const noexcept {
    double s = drift_part + gaussian_part - compensator;
    for (double z : jump_values) s += z;
    return s;
  }
};

/// Fine increment at (step, δ = law.delta()).
inline LevyIncrement fine_levy_increment(const LevyMeasureSpec& spec, const TailLaw& law, double step, Stream& rng) {
  if (!(law.delta() > 0.0)) throw ContractViolation("threshold must be positive");
  LevyIncrement inc;
  inc.drift_part = step * spec.drift;
  inc.xi = standard_normal(rng);
  inc.gaussian_part = sigma_small_jumps(spec, law.delta(), step) * inc.xi;
  const std::uint64_t count = law.mass() > 0.0 ? sample_poisson(step * law.mass(), rng) : 0;
  inc.jump_values.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) inc.jump_values.push_back(law.sample(rng));
  inc.compensator = static_cast<double>(count) * law.mean();
  return inc;
}

inline LevyIncrement fine_levy_increment(const LevyMeasureSpec& spec, double delta, double step, Stream& rng) {
  return fine_levy_increment(spec, TailLaw(spec, delta, false), step, rng);
}

struct CoupledLevyIncrement {
  LevyIncrement coarse;
  /// coarse - fine_1 - fine_2 = -Σ (Z 1{|Z|≤δ_c} - E[Z^{δf} 1{|Z|≤δ_c}]).
  double residual = 0.0;
};

/// Coarse increment built from two fine ones by re-thresholding at δ_c.
inline CoupledLevyIncrement coupled_coarse_levy_increment(const LevyIncrement& first, const LevyIncrement& second,
                                                          const LevyMeasureSpec& spec, const TailLaw& fine_law,
                                                          double delta_c, double step_f) {
  if (delta_c < fine_law.delta()) throw ContractViolation("coarse threshold below the fine threshold");
  CoupledLevyIncrement out;
  auto& c = out.coarse;
  c.drift_part = 2.0 * step_f * spec.drift;
  c.gaussian_part = sigma_small_jumps(spec, fine_law.delta(), step_f) * (first.xi + second.xi);
  c.xi = first.xi + second.xi;
  const double kept_mean = fine_law.mean_above(delta_c);
  const double band_mean = fine_law.mean() - kept_mean;
  double band_sum = 0.0;
  std::size_t count = 0;
  for (const auto* f : {&first, &second}) {
    for (double z : f->jump_values) {
      ++count;
      if (std::fabs(z) > delta_c) {
        c.jump_values.push_back(z);
      } else {
        band_sum += z;
      }
    }
  }
  c.compensator = static_cast<double>(count) * kept_mean;
  out.residual = -(band_sum - static_cast<double>(count) * band_mean);
  return out;
}

inline CoupledLevyIncrement coupled_coarse_levy_increment(const LevyIncrement& first, const LevyIncrement& second,
                                                          const LevyMeasureSpec& spec, double delta_f, double delta_c,
                                                          double step_f) {
  return coupled_coarse_levy_increment(first, second, spec, TailLaw(spec, delta_f, false), delta_c, step_f);
}

enum class DeltaSchedule { per_level, constant };

inline const char* to_string(DeltaSchedule s) noexcept {
  return s == DeltaSchedule::per_level ? "per-level" : "constant";
}

inline double per_level_alpha_limit() { return 3.0 - std::numbers::sqrt3; }

/// Threshold δ_l: Δ_l^{1/(2-α)} (per_level, α ≤ 3-√3) or ε^{1/(3-α)} (constant).
inline double delta_schedule(double alpha, int level, const IncrementPlan& plan, double epsilon, DeltaSchedule mode) {
  if (!(alpha > 0.0 && alpha < 2.0)) throw ConfigError("alpha must lie in (0, 2)");
  if (mode == DeltaSchedule::per_level) {
    if (alpha > per_level_alpha_limit()) {
      throw ConfigError("per-level thresholds need alpha <= 3 - sqrt(3) ~ 1.268; got alpha = " +
                        std::to_string(alpha) + " (use the constant schedule)");
    }
    return std::pow(plan.step(level), 1.0 / (2.0 - alpha));
  }
  if (!(epsilon > 0.0)) throw ConfigError("constant thresholds need epsilon > 0");
  return std::pow(epsilon, 1.0 / (3.0 - alpha));
}

/// Complexity regime label for a tail index.
inline std::string levy_regime_label(double alpha) {
  if (alpha <= 1.0) return "eps^-2 log^2 eps";
  if (alpha <= per_level_alpha_limit()) return "eps^(-2/(2-alpha))";
  return "eps^(-(6-alpha)/(3-alpha)) constant-delta";
}

/// X_j = X_{j-1} + a(X_{j-1}) ζ_j, one-dimensional.
struct LevyModel {
  std::function<double(double)> coefficient;
  double x0 = 1.0;
};

struct LevyOptions {
  DeltaSchedule schedule = DeltaSchedule::per_level;
  double epsilon = 0.0;  // used by the constant schedule
  bool discrete_jumps = false;
};

/// Immutable per-run context: thresholds and restricted jump laws per level.
class LevySetup {
 public:
  LevySetup(LevyMeasureSpec spec, int finest_level, double horizon, LevyOptions options)
      : spec_(std::make_shared<const LevyMeasureSpec>(std::move(spec))),
        plan_(finest_level, finest_level, horizon),
        options_(options) {
    for (int l = 0; l <= finest_level; ++l) {
      const double delta = delta_schedule(spec_->alpha, l, plan_, options.epsilon, options.schedule);
      laws_.emplace_back(*spec_, delta, options.discrete_jumps);
    }
  }

  const LevyMeasureSpec& spec() const noexcept { return *spec_; }
  IncrementPlan plan(int level) const { return plan_.at(level); }
  const LevyOptions& options() const noexcept { return options_; }
  const TailLaw& law(int level) const { return laws_.at(level); }
  double delta(int level) const { return law(level).delta(); }

 private:
  std::shared_ptr<const LevyMeasureSpec> spec_;
  IncrementPlan plan_;
  LevyOptions options_;
  std::vector<TailLaw> laws_;
};

namespace detail {

inline double levy_path(const LevyModel& model, std::span<const double> increments) {
  double x = model.x0;
  for (std::size_t j = 0; j < increments.size(); ++j) {
    x += model.coefficient(x) * increments[j];
    if (!std::isfinite(x)) throw NumericalError("non-finite state", j + 1);
  }
  return x;
}

inline std::uint64_t levy_cost(const LevySetup& setup, int level) {
  const double expected_jumps = setup.plan(level).horizon() * setup.law(level).mass();
  return (std::uint64_t{1} << level) + static_cast<std::uint64_t>(std::ceil(expected_jumps));
}

}  // namespace detail

/// Terminal values of both legs plus the per-coarse-step residuals.
struct LevyCoupledPaths {
  double fine_terminal = 0.0;
  double coarse_terminal = 0.0;
  std::vector<double> residuals;
};

inline LevyCoupledPaths levy_coupled_paths(const LevyModel& model, const LevySetup& setup, int level, Stream& rng) {
  if (level < 1) throw ContractViolation("levy coupled sample needs level >= 1");
  const IncrementPlan plan = setup.plan(level);
  const std::size_t n = plan.num_steps();
  const double step_f = plan.step();
  const TailLaw& fine_law = setup.law(level);
  const double delta_c = setup.delta(level - 1);
  std::vector<double> fine(n), coarse(n / 2);
  LevyCoupledPaths out;
  out.residuals.resize(n / 2);
  for (std::size_t j = 0; j < n / 2; ++j) {
    const LevyIncrement a = fine_levy_increment(setup.spec(), fine_law, step_f, rng);
    const LevyIncrement b = fine_levy_increment(setup.spec(), fine_law, step_f, rng);
    const auto c = coupled_coarse_levy_increment(a, b, setup.spec(), fine_law, delta_c, step_f);
    fine[2 * j] = a.value();
    fine[2 * j + 1] = b.value();
    coarse[j] = c.coarse.value();
    out.residuals[j] = c.residual;
  }
  out.fine_terminal = detail::levy_path(model, fine);
  out.coarse_terminal = detail::levy_path(model, coarse);
  return out;
}

inline CoupledSample levy_coupled_sample(const LevyModel& model, const PathFunctional& functional,
                                         const LevySetup& setup, int level, Stream& rng) {
  const auto paths = levy_coupled_paths(model, setup, level, rng);
  const double discount = std::exp(-functional.rate * functional.horizon);
  CoupledSample out;
  out.level = level;
  out.fine_value = discount * functional.payoff(std::span<const double>(&paths.fine_terminal, 1));
  out.coarse_value = discount * functional.payoff(std::span<const double>(&paths.coarse_terminal, 1));
  out.cost_units = detail::levy_cost(setup, level);
  return out;
}

inline double levy_single_sample(const LevyModel& model, const PathFunctional& functional, const LevySetup& setup,
                                 int level, Stream& rng) {
  const IncrementPlan plan = setup.plan(level);
  std::vector<double> inc(plan.num_steps());
  for (auto& z : inc) z = fine_levy_increment(setup.spec(), setup.law(level), plan.step(), rng).value();
  const double x = detail::levy_path(model, inc);
  return std::exp(-functional.rate * functional.horizon) * functional.payoff(std::span<const double>(&x, 1));
}

inline CoupledSample levy_level_sample(const LevyModel& model, const PathFunctional& functional,
                                       const LevySetup& setup, int level, Stream& rng) {
  if (level == 0) return {levy_single_sample(model, functional, setup, 0, rng), 0.0, 0, detail::levy_cost(setup, 0)};
  return levy_coupled_sample(model, functional, setup, level, rng);
}

}  // namespace wmlmc
