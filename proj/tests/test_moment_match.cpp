#include <gtest/gtest.h>

#include <array>
#include <cmath>

#include "oracles.hpp"
#include "wmlmc/errors.hpp"
#include "wmlmc/moment_match.hpp"

using namespace wmlmc;

namespace {

MomentMatchedLaw published_atoms() {
  MomentMatchedLaw law;
  law.atoms = {{1.081500568717563, 0.608176614910593},
               {2.376117006693613, 0.003503326771883},
               {0.719559222085786, 0.226782660300013},
               {1.581001071314797, 0.161537398017512}};
  return law;
}

}  // namespace

TEST(LognormalMoments, ClosedForm) {
  EXPECT_EQ(lognormal_moment(0.0, 0.0, 1), 1.0);
  EXPECT_NEAR(lognormal_moment(0.05, 0.25, 1), std::exp(0.08125), 1e-15);
  EXPECT_NEAR(lognormal_moment(0.05, 0.25, 1), 1.0846434, 2e-6);
  EXPECT_NEAR(lognormal_moment(0.05, 0.25, 2), std::exp(0.225), 1e-15);
  const auto t = lognormal_targets(0.05, 0.25);
  for (int i = 1; i <= 7; ++i) EXPECT_NEAR(t[i - 1], oracle::lognormal_moment(0.05, 0.25, i), 1e-14 * t[i - 1]);
}

TEST(MomentMatch, SolverMeetsTolerance) {
  const auto targets = lognormal_targets(0.05, 0.25);
  const auto r = solve_moment_match(targets);
  EXPECT_LE(r.max_residual(), 1e-9);
  EXPECT_EQ(r.law.atoms.size(), 4u);
  EXPECT_FALSE(r.law.degenerate);
  double mass = 0;
  for (const auto& a : r.law.atoms) {
    EXPECT_GT(a.probability, 0.0);
    mass += a.probability;
  }
  EXPECT_NEAR(mass, 1.0, 1e-12);
  for (int i = 1; i <= 6; ++i) {
    EXPECT_NEAR(r.law.moment(i), oracle::lognormal_moment(0.05, 0.25, i), 1e-9 * targets[i - 1]);
  }
}

TEST(MomentMatch, SolverIsNoWorseThanPublishedAtoms) {
  const auto targets = lognormal_targets(0.05, 0.25);
  const auto published = published_atoms();
  const auto res = constraint_residuals(published, targets);
  for (double r : res) EXPECT_LE(r, 1e-9);
  EXPECT_NEAR(published.mean(), 1.084643, 1e-5);
  EXPECT_NEAR(published.mean(), oracle::lognormal_moment(0.05, 0.25, 1), 1e-5);

  const auto r = solve_moment_match(targets);
  EXPECT_LE(r.max_residual(), *std::max_element(res.begin(), res.end()) + 1e-12);
  // The objective is the squared seventh-moment gap.
  EXPECT_LE(std::fabs(r.seventh_moment_gap), std::fabs(published.moment(7) - targets[6]));
}

TEST(MomentMatch, TwoPointLawTargets) {
  const std::array<double, 7> targets{0, 1, 0, 1, 0, 1, 0};
  const auto r = solve_moment_match(targets);
  EXPECT_LE(r.max_residual(), 1e-9);
  for (int i = 1; i <= 6; ++i) EXPECT_NEAR(r.law.moment(i), targets[i - 1], 1e-9);
  EXPECT_TRUE(r.law.degenerate);
  EXPECT_EQ(r.law.atoms.size(), 2u);
}

TEST(MomentMatch, RejectsInadmissibleTargets) {
  EXPECT_THROW(solve_moment_match(lognormal_targets(0.05, 0.0)), ConfigError);
  const std::array<double, 7> bad{1, 0.5, 1, 1, 1, 1, 1};
  EXPECT_THROW(solve_moment_match(bad), ConfigError);
  const std::array<double, 7> nan{NAN, 1, 1, 1, 1, 1, 1};
  EXPECT_THROW(solve_moment_match(nan), ConfigError);
}

TEST(MomentMatch, ResidualsAreRelativeAboveOne) {
  EXPECT_NEAR(moment_residual(2.0 + 2e-10, 2.0), 1e-10, 1e-16);
  EXPECT_NEAR(moment_residual(1e-10, 0.0), 1e-10, 1e-20);
}

TEST(AtomSampling, CountsAndDegenerateLaws) {
  Stream rng(1);
  const auto law = published_atoms();
  const auto table = build_alias_table(law.probabilities());
  EXPECT_TRUE(sample_atoms(law, table, 0, rng).empty());

  MomentMatchedLaw one;
  one.atoms = {{3.5, 1.0}};
  const auto one_table = build_alias_table(one.probabilities());
  for (double x : sample_atoms(one, one_table, 100, rng)) EXPECT_EQ(x, 3.5);
}

TEST(AtomSampling, PublishedLawMean) {
  Stream rng(2);
  const auto law = published_atoms();
  const auto table = build_alias_table(law.probabilities());
  oracle::Moments m;
  for (double x : sample_atoms(law, table, 1000000, rng)) m.add(x);
  EXPECT_NEAR(m.mean, 1.084643, 3 * m.se());
}
