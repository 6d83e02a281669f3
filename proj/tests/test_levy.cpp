#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "oracles.hpp"
#include "wmlmc/errors.hpp"
#include "wmlmc/experiments.hpp"
#include "wmlmc/levy.hpp"
#include "wmlmc/mlmc.hpp"

using namespace wmlmc;

namespace {

// ν(dz) = |z|^{-1-α} on 0 < |z| ≤ 1, integrated numerically.
double quad_tail_mass(double alpha, double t) {
  return 2.0 * oracle::integrate([alpha](double z) { return std::pow(z, -1.0 - alpha); }, t, 1.0);
}

double quad_m2(double alpha, double delta) {
  return 2.0 * oracle::integrate_singular([alpha](double z) { return std::pow(z, 1.0 - alpha); }, 0.0, delta);
}

LevyMeasureSpec null_measure(double sigma) {
  LevyMeasureSpec s;
  s.gaussian_sigma = sigma;
  s.tail_mass = [](double) { return 0.0; };
  s.trunc_m2 = [](double) { return 0.0; };
  s.trunc_mean = [](double, double) { return 0.0; };
  s.sample_tail = [](double, Stream&) -> double { throw std::logic_error("no jumps"); };
  return s;
}

PathFunctional identity() {
  PathFunctional f;
  f.payoff = [](std::span<const double> x) { return x[0]; };
  return f;
}

}  // namespace

TEST(SmallJumpScale, Examples) {
  EXPECT_EQ(sigma_small_jumps(null_measure(1.0), 0.5, 1.0), 1.0);
  const auto spec = power_law_measure(0.5);
  EXPECT_NEAR(sigma_small_jumps(spec, 1.0, 1.0), std::sqrt(4.0 / 3.0), 1e-15);
  EXPECT_NEAR(sigma_small_jumps(spec, 1.0, 1.0), 1.1547005, 1e-7);
  const auto with_sigma = power_law_measure(0.5, 1.0, 0.3);
  double prev = std::numeric_limits<double>::infinity();
  for (double d = 1.0; d > 1e-12; d /= 10) {
    const double s = sigma_small_jumps(with_sigma, d, 0.25);
    EXPECT_LE(s, prev);
    prev = s;
  }
  EXPECT_NEAR(prev, std::sqrt(0.25) * 0.3, 1e-6);
}

TEST(PowerLawMeasure, ClosedFormsAgreeWithQuadrature) {
  for (double alpha : {0.25, 0.5, 1.0, 1.2, 1.5, 1.9}) {
    const auto spec = power_law_measure(alpha);
    for (double t : {1e-3, 0.01, 0.1, 0.25, 0.5, 0.9}) {
      EXPECT_NEAR(spec.tail_mass(t), quad_tail_mass(alpha, t), 1e-8 * spec.tail_mass(t)) << alpha << ' ' << t;
      EXPECT_NEAR(spec.trunc_m2(t), quad_m2(alpha, t), 1e-8 * spec.trunc_m2(t)) << alpha << ' ' << t;
      // Symmetric measure: every truncated first moment vanishes.
      EXPECT_EQ(spec.trunc_mean(t, 1.0), 0.0);
      const double m2_tail = 2.0 * oracle::integrate([alpha](double z) { return std::pow(z, 1.0 - alpha); }, t, 1.0);
      EXPECT_NEAR(spec.tail_moment(2, t), m2_tail / spec.tail_mass(t), 1e-8 * spec.tail_moment(2, t));
      EXPECT_EQ(spec.tail_moment(3, t), 0.0);
    }
  }
}

TEST(PowerLawMeasure, Monotonicity) {
  const auto spec = power_law_measure(0.5);
  EXPECT_EQ(spec.tail_mass(0.25), 4.0);
  double mass = std::numeric_limits<double>::infinity(), m2 = 0.0;
  for (int k = 10; k >= 0; --k) {
    const double t = std::ldexp(1.0, -k);
    EXPECT_LE(spec.tail_mass(t), mass);
    EXPECT_GE(spec.trunc_m2(t), m2);
    EXPECT_LE(spec.tail_mass(t), 4.0 * std::pow(t, -0.5));
    mass = spec.tail_mass(t);
    m2 = spec.trunc_m2(t);
  }
  EXPECT_TRUE(std::isfinite(spec.trunc_m2(std::numeric_limits<double>::infinity())));
  EXPECT_THROW(power_law_measure(0.0), ConfigError);
  EXPECT_THROW(power_law_measure(2.0), ConfigError);
}

TEST(PowerLawMeasure, TailSamplerMatchesRestrictedLaw) {
  const double alpha = 0.5, delta = 0.05;
  const auto spec = power_law_measure(alpha);
  const std::vector<double> grid{0.06, 0.1, 0.2, 0.4, 0.8};
  std::vector<int> above(grid.size(), 0);
  int positive = 0;
  const int n = 400000;
  Stream rng(1);
  for (int i = 0; i < n; ++i) {
    const double z = spec.sample_tail(delta, rng);
    ASSERT_GT(std::fabs(z), delta);
    ASSERT_LE(std::fabs(z), 1.0);
    positive += z > 0;
    for (std::size_t k = 0; k < grid.size(); ++k) above[k] += std::fabs(z) > grid[k];
  }
  EXPECT_NEAR(static_cast<double>(positive) / n, 0.5, 3 * 0.5 / std::sqrt(n));
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double p = quad_tail_mass(alpha, grid[k]) / quad_tail_mass(alpha, delta);
    EXPECT_NEAR(static_cast<double>(above[k]) / n, p, 3 * std::sqrt(p * (1 - p) / n)) << grid[k];
  }
}

TEST(Poisson, MeanAndVariance) {
  for (double mean : {0.0, 0.3, 4.0, 75.5}) {
    Stream rng(2);
    oracle::Moments m;
    for (int i = 0; i < 200000; ++i) m.add(static_cast<double>(sample_poisson(mean, rng)));
    EXPECT_NEAR(m.mean, mean, 3 * m.se() + 1e-12);
    EXPECT_NEAR(m.variance(), mean, 0.02 * mean + 1e-12);
  }
}

TEST(FineIncrement, NullMeasureGivesZero) {
  const auto spec = null_measure(0.0);
  Stream rng(3);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(fine_levy_increment(spec, 0.1, 0.5, rng).value(), 0.0);
}

TEST(FineIncrement, CompensatedMeanIsZero) {
  const auto spec = power_law_measure(0.5);
  const TailLaw law(spec, 0.25, false);
  EXPECT_EQ(law.mass(), 4.0);
  Stream rng(4);
  oracle::Moments m;
  for (int i = 0; i < 1000000; ++i) m.add(fine_levy_increment(spec, law, 0.125, rng).value());
  EXPECT_LT(std::fabs(m.mean), 3 * m.se());
  // Variance is preserved by the Gaussian replacement: Δ·m2(1).
  EXPECT_NEAR(m.variance(), 0.125 * spec.trunc_m2(1.0), 0.01 * 0.125 * spec.trunc_m2(1.0));
}

TEST(CoupledIncrement, EqualThresholdsLeaveNoResidual) {
  const auto spec = power_law_measure(0.5);
  const TailLaw law(spec, 0.2, false);
  Stream rng(5);
  for (int i = 0; i < 10000; ++i) {
    const auto a = fine_levy_increment(spec, law, 0.25, rng);
    const auto b = fine_levy_increment(spec, law, 0.25, rng);
    const auto c = coupled_coarse_levy_increment(a, b, spec, law, 0.2, 0.25);
    ASSERT_EQ(c.residual, 0.0);
    ASSERT_NEAR(c.coarse.value(), a.value() + b.value(), 1e-12);
  }
  EXPECT_THROW(coupled_coarse_levy_increment(LevyIncrement{}, LevyIncrement{}, spec, law, 0.1, 0.25),
               ContractViolation);
}

TEST(CoupledIncrement, ResidualMeanAndSecondMomentBound) {
  for (double alpha : {0.5, 1.0}) {
    const auto spec = power_law_measure(alpha);
    const double step_f = 1.0 / 16, delta_f = 0.1, delta_c = 0.3;
    const TailLaw law(spec, delta_f, false);
    Stream rng(6);
    oracle::Moments r, r2;
    for (int i = 0; i < 1000000; ++i) {
      const auto a = fine_levy_increment(spec, law, step_f, rng);
      const auto b = fine_levy_increment(spec, law, step_f, rng);
      const double res = coupled_coarse_levy_increment(a, b, spec, law, delta_c, step_f).residual;
      r.add(res);
      r2.add(res * res);
    }
    EXPECT_LT(std::fabs(r.mean), 3 * r.se()) << alpha;
    EXPECT_LE(r2.mean, 2 * step_f * spec.trunc_m2(delta_c) + 3 * r2.se()) << alpha;
    // The band (δ_f, δ_c] carries exactly 2Δ_f (m2(δ_c) - m2(δ_f)).
    const double band = 2 * step_f * (quad_m2(alpha, delta_c) - quad_m2(alpha, delta_f));
    EXPECT_NEAR(r2.mean, band, 3 * r2.se()) << alpha;
  }
}

TEST(DeltaSchedule, Examples) {
  const IncrementPlan plan(8, 8, 1.0);
  for (int l = 0; l <= 8; ++l) {
    EXPECT_NEAR(delta_schedule(1.0, l, plan, 0.0, DeltaSchedule::per_level), std::ldexp(1.0, -l), 1e-15);
    EXPECT_NEAR(delta_schedule(1.5, l, plan, 1e-3, DeltaSchedule::constant), 1e-2, 1e-15);
  }
  EXPECT_NEAR(delta_schedule(0.5, 3, plan, 0.0, DeltaSchedule::per_level), 0.25, 1e-15);
  EXPECT_THROW(delta_schedule(1.5, 3, plan, 0.0, DeltaSchedule::per_level), ConfigError);
  EXPECT_NO_THROW(delta_schedule(1.26, 3, plan, 0.0, DeltaSchedule::per_level));
  EXPECT_NEAR(per_level_alpha_limit(), 3.0 - std::sqrt(3.0), 1e-15);
  EXPECT_THROW(delta_schedule(1.0, 3, plan, 0.0, DeltaSchedule::constant), ConfigError);
}

TEST(DeltaSchedule, RegimeLabels) {
  EXPECT_EQ(levy_regime_label(0.5), "eps^-2 log^2 eps");
  EXPECT_EQ(levy_regime_label(1.0), "eps^-2 log^2 eps");
  EXPECT_EQ(levy_regime_label(1.2), "eps^(-2/(2-alpha))");
  EXPECT_NE(levy_regime_label(1.5).find("constant-delta"), std::string::npos);
}

TEST(LevyCoupling, AdditiveModelDifferenceIsSummedResidual) {
  const LevyModel additive{[](double) { return 1.0; }, 0.0};
  LevyOptions opt;
  const LevySetup setup(power_law_measure(0.5), 6, 1.0, opt);
  for (int l = 1; l <= 6; ++l) {
    Stream rng = derive_stream(7, l, 0);
    const auto p = levy_coupled_paths(additive, setup, l, rng);
    double sum = 0;
    for (double r : p.residuals) sum += r;
    EXPECT_NEAR(p.fine_terminal - p.coarse_terminal, -sum, 1e-12) << l;
  }
}

TEST(LevyCoupling, ConstantThresholdIsPairwiseSum) {
  const LevyModel additive{[](double) { return 1.0; }, 0.0};
  LevyOptions opt;
  opt.schedule = DeltaSchedule::constant;
  opt.epsilon = 0.01;
  const LevySetup setup(power_law_measure(1.5), 5, 1.0, opt);
  for (int i = 0; i < 200; ++i) {
    Stream rng = derive_stream(8, 5, i);
    const auto p = levy_coupled_paths(additive, setup, 5, rng);
    EXPECT_NEAR(p.fine_terminal, p.coarse_terminal, 1e-12);
  }
}

TEST(LevyCoupling, VarianceDecaySlope) {
  const LevyModel model{[](double x) { return 1.0 + 0.5 * std::sin(x); }, 1.0};
  LevyOptions opt;
  const LevySetup setup(power_law_measure(0.5), 6, 1.0, opt);
  const auto f = identity();
  LevelSampler sampler = [&](int level, Stream& rng) { return levy_coupled_sample(model, f, setup, level, rng); };
  std::vector<int> levels;
  std::vector<double> vars;
  for (int l = 2; l <= 6; ++l) {
    levels.push_back(l);
    vars.push_back(accumulate_level(sampler, 9, l, 0, 40000).variance());
  }
  const auto fit = fit_log2_slope(levels, vars, 2, 6);
  ASSERT_TRUE(fit.defined);
  EXPECT_GE(fit.slope, 0.7);
  EXPECT_LE(fit.slope, 1.3);
}

// Multiplicative model X_j = X_{j-1}(1 + ζ_j) with E ζ = 0, E ζ² = Δ m2(1):
// E[X_n²] = (1 + Δ m2(1))^n exactly for every threshold, and tends to
// exp(T m2(1)) as Δ → 0.
TEST(LevyCoupling, SecondMomentBiasDecreasesWithLevel) {
  const LevyModel model{[](double x) { return x; }, 1.0};
  PathFunctional square;
  square.payoff = [](std::span<const double> x) { return x[0] * x[0]; };
  LevyOptions opt;
  const auto spec = power_law_measure(0.5);
  const LevySetup setup(spec, 5, 1.0, opt);
  const double s = spec.trunc_m2(1.0), exact = std::exp(s);
  double prev_bias = std::numeric_limits<double>::infinity();
  for (int l = 1; l <= 5; ++l) {
    oracle::Moments m;
    for (int i = 0; i < 100000; ++i) {
      Stream rng = derive_stream(10, l, i);
      m.add(levy_single_sample(model, square, setup, l, rng));
    }
    const double dt = std::ldexp(1.0, -l);
    const double scheme = std::pow(1.0 + dt * s, 1.0 / dt);
    EXPECT_NEAR(m.mean, scheme, 3 * m.se()) << l;
    EXPECT_LT(exact - scheme, prev_bias);
    EXPECT_LT(std::fabs(m.mean - exact), prev_bias + 3 * m.se()) << l;
    prev_bias = exact - scheme;
  }
}

TEST(LevyCoupling, DiscreteJumpReplacementKeepsMoments) {
  const auto spec = power_law_measure(0.5);
  const TailLaw law(spec, 0.1, true);
  ASSERT_TRUE(law.discrete());
  Stream rng(11);
  oracle::Moments m1, m2;
  for (int i = 0; i < 200000; ++i) {
    const double z = law.sample(rng);
    m1.add(z);
    m2.add(z * z);
  }
  EXPECT_NEAR(m1.mean, 0.0, 3 * m1.se());
  EXPECT_NEAR(m2.mean, spec.tail_moment(2, 0.1), 3 * m2.se());
}
