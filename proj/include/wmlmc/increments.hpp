#pragma once

// Discrete increment laws of the weak Euler scheme and their cross-level
// coupling.
//
// With a fixed finest level L̂, the level-l Brownian surrogate is the sum of
// 2^{L̂-l} fair ±sqrt(Δ_L̂) coin flips, i.e. (2B - 2^{L̂-l})·sqrt(Δ_L̂) with
// B ~ Bi(2^{L̂-l}, 1/2). Jump counts follow Bi(2^{L̂-l}, λT·2^{-L̂}). Both are
// sampled from alias tables built once per plan.

#include <bit>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "wmlmc/alias_table.hpp"
#include "wmlmc/errors.hpp"
#include "wmlmc/random.hpp"

namespace wmlmc {

/// Dyadic level hierarchy on [0, T] with a fixed finest level.
class IncrementPlan {
 public:
  IncrementPlan(int finest_level, int level, double horizon)
      : finest_level_(finest_level), level_(level), horizon_(horizon) {
    if (finest_level < 0 || finest_level > 40) {
      throw ConfigError("finest level must lie in [0, 40], got " + std::to_string(finest_level));
    }
    if (level < 0 || level > finest_level) {
      throw ConfigError("level " + std::to_string(level) + " outside [0, " +
                        std::to_string(finest_level) + "]");
    }
    if (!(horizon > 0.0) || !std::isfinite(horizon)) {
      throw ConfigError("horizon must be positive and finite");
    }
  }

  int finest_level() const noexcept { return finest_level_; }
  int level() const noexcept { return level_; }
  double horizon() const noexcept { return horizon_; }

  /// Same hierarchy, different working level.
  IncrementPlan at(int level) const { return {finest_level_, level, horizon_}; }

  double step(int l) const noexcept { return std::ldexp(horizon_, -l); }
  double step() const noexcept { return step(level_); }
  double finest_step() const noexcept { return step(finest_level_); }
  std::uint64_t num_steps() const noexcept { return std::uint64_t{1} << level_; }
  /// Number of finest-level steps aggregated into one step of the working level.
  std::uint64_t aggregation() const noexcept {
    return std::uint64_t{1} << (finest_level_ - level_);
  }

 private:
  int finest_level_;
  int level_;
  double horizon_;
};

/// Nonnegative rational with 64-bit parts, kept reduced.
struct Rational {
  std::uint64_t num = 0;
  std::uint64_t den = 1;

  static Rational make(unsigned __int128 n, unsigned __int128 d) {
    if (d == 0) throw ContractViolation("rational with zero denominator");
    unsigned __int128 a = n, b = d;
    while (b != 0) {
      const auto t = a % b;
      a = b;
      b = t;
    }
    const unsigned __int128 g = a == 0 ? 1 : a;
    n /= g;
    d /= g;
    if ((n >> 64) != 0 || (d >> 64) != 0) throw ContractViolation("rational overflow");
    return {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(d)};
  }

  /// Exact value of a finite nonnegative double (every such double is dyadic).
  static Rational from_double(double x) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw ConfigError("probability must be finite and >= 0");
    if (x == 0.0) return {0, 1};
    int exp = 0;
    const double mant = std::frexp(x, &exp);  // x = mant * 2^exp, mant in [0.5, 1)
    auto m = static_cast<std::uint64_t>(std::ldexp(mant, 53));
    int shift = exp - 53;
    const int tz = std::countr_zero(m);
    m >>= tz;
    shift += tz;
    if (shift >= 0) {
      if (shift > 10) throw ConfigError("value too large for an exact probability");
      return make(static_cast<unsigned __int128>(m) << shift, 1);
    }
    if (-shift > 63) throw ConfigError("probability below 2^-63 is not representable exactly here");
    return make(m, static_cast<unsigned __int128>(1) << (-shift));
  }

  double value() const noexcept {
    return static_cast<double>(static_cast<long double>(num) / static_cast<long double>(den));
  }

  friend bool operator==(const Rational& a, const Rational& b) noexcept {
    return static_cast<unsigned __int128>(a.num) * b.den == static_cast<unsigned __int128>(b.num) * a.den;
  }
};

/// Bi(n, p) with p held as an exact rational.
class BinomialLaw {
 public:
  BinomialLaw(std::uint64_t trials, Rational p) : trials_(trials), p_(p) {
    if (p.num > p.den) throw ConfigError("success probability exceeds one");
  }

  std::uint64_t trials() const noexcept { return trials_; }
  Rational success() const noexcept { return p_; }

  Rational mean() const { return Rational::make(static_cast<unsigned __int128>(trials_) * p_.num, p_.den); }

  Rational variance() const {
    using u128 = unsigned __int128;
    return Rational::make(u128{trials_} * p_.num * (p_.den - p_.num), u128{p_.den} * p_.den);
  }

  /// Probability mass function, computed in extended precision and rounded once.
  std::vector<double> pmf() const {
    const auto n = trials_;
    std::vector<double> out(n + 1, 0.0);
    if (p_.num == 0) {
      out[0] = 1.0;
      return out;
    }
    if (p_.num == p_.den) {
      out[n] = 1.0;
      return out;
    }
    const long double p = static_cast<long double>(p_.num) / p_.den;
    const long double q = static_cast<long double>(p_.den - p_.num) / p_.den;
    std::vector<long double> w(n + 1);
    w[0] = std::pow(q, static_cast<long double>(n));
    const long double ratio = p / q;
    for (std::uint64_t k = 0; k < n; ++k) {
      w[k + 1] = w[k] * static_cast<long double>(n - k) / static_cast<long double>(k + 1) * ratio;
    }
    long double total = 0;
    for (auto v : w) total += v;
    for (std::uint64_t k = 0; k <= n; ++k) out[k] = static_cast<double>(w[k] / total);
    return out;
  }

 private:
  std::uint64_t trials_;
  Rational p_;
};

/// Draws a Bi(n, p) count from a table built on `law.pmf()`.
template <class Rng>
std::uint64_t sample_binomial(const BinomialLaw& law, const AliasTable& table, Rng& rng) {
  if (law.trials() == 0) return 0;
  return table.sample(rng);
}

/// Alias tables of Bi(2^{L̂-l}, p) for every level l = 0..L̂.
class BinomialLevelTables {
 public:
  static constexpr int kMaxFinestLevel = 20;

  BinomialLevelTables(int finest_level, Rational p) {
    if (finest_level < 0 || finest_level > kMaxFinestLevel) {
      throw ConfigError("binomial tables support finest levels 0.." + std::to_string(kMaxFinestLevel));
    }
    laws_.reserve(finest_level + 1);
    tables_.reserve(finest_level + 1);
    for (int l = 0; l <= finest_level; ++l) {
      BinomialLaw law(std::uint64_t{1} << (finest_level - l), p);
      const auto pmf = law.pmf();
      tables_.push_back(build_alias_table(pmf));
      laws_.push_back(std::move(law));
    }
  }

  int finest_level() const noexcept { return static_cast<int>(laws_.size()) - 1; }
  const BinomialLaw& law(int level) const { return laws_.at(level); }
  const AliasTable& table(int level) const { return tables_.at(level); }

  template <class Rng>
  std::uint64_t sample(int level, Rng& rng) const {
    return sample_binomial(laws_[level], tables_[level], rng);
  }

 private:
  std::vector<BinomialLaw> laws_;
  std::vector<AliasTable> tables_;
};

/// Shared, immutable tables for the shifted-binomial Brownian surrogate.
class BrownianTables {
 public:
  explicit BrownianTables(int finest_level, double horizon = 1.0)
      : tables_(finest_level, Rational{1, 2}),
        scale_(std::sqrt(std::ldexp(horizon, -finest_level))) {}

  int finest_level() const noexcept { return tables_.finest_level(); }
  const BinomialLevelTables& binomial() const noexcept { return tables_; }
  /// sqrt(Δ_L̂).
  double scale() const noexcept { return scale_; }

  /// Integer part 2B - 2^{L̂-l} of the level-l increment.
  template <class Rng>
  std::int64_t sample_lattice(int level, Rng& rng) const {
    const auto b = static_cast<std::int64_t>(tables_.sample(level, rng));
    return 2 * b - static_cast<std::int64_t>(std::uint64_t{1} << (finest_level() - level));
  }

 private:
  BinomialLevelTables tables_;
  double scale_;
};

using BrownianTablesPtr = std::shared_ptr<const BrownianTables>;

inline BrownianTablesPtr make_brownian_tables(const IncrementPlan& plan) {
  return std::make_shared<const BrownianTables>(plan.finest_level(), plan.horizon());
}

/// One level-l Brownian surrogate ξ = (2B - 2^{L̂-l})·sqrt(Δ_L̂).
template <class Rng>
double brownian_increment(const IncrementPlan& plan, const BrownianTables& tables, Rng& rng) {
  if (tables.finest_level() != plan.finest_level()) {
    throw ContractViolation("Brownian tables built for a different finest level");
  }
  return static_cast<double>(tables.sample_lattice(plan.level(), rng)) * tables.scale();
}

/// Row-major matrix of per-step increments: rows are noise components, columns
/// are time steps.
template <class T>
struct IncrementMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  IncrementMatrix() = default;
  IncrementMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, T{}) {}

  T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const T> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  friend bool operator==(const IncrementMatrix&, const IncrementMatrix&) = default;
};

/// Pairwise-sum coupling: coarse column j = fine column 2j + fine column 2j+1
/// (0-based). Works for any additive increment type.
template <class T>
IncrementMatrix<T> couple_coarse(const IncrementMatrix<T>& fine) {
  if (fine.cols % 2 != 0 || fine.cols == 0) {
    throw ContractViolation("couple_coarse needs an even, nonzero column count, got " +
                            std::to_string(fine.cols));
  }
  IncrementMatrix<T> coarse(fine.rows, fine.cols / 2);
  for (std::size_t r = 0; r < fine.rows; ++r) {
    for (std::size_t j = 0; j < coarse.cols; ++j) {
      coarse(r, j) = fine(r, 2 * j) + fine(r, 2 * j + 1);
    }
  }
  return coarse;
}

/// Success probability λT·2^{-L̂} of one finest-level jump indicator; throws if
/// it exceeds one, naming the smallest admissible finest level.
inline Rational jump_success_probability(int finest_level, double intensity, double horizon) {
  if (!(intensity >= 0.0) || !std::isfinite(intensity)) {
    throw ConfigError("jump intensity must be finite and nonnegative");
  }
  const double p = std::ldexp(intensity * horizon, -finest_level);
  if (p > 1.0) {
    const int minimal = static_cast<int>(std::ceil(std::log2(intensity * horizon)));
    throw ConfigError("jump probability 2^-L*lambda*T = " + std::to_string(p) +
                      " exceeds 1; the finest level must be at least " + std::to_string(minimal));
  }
  return Rational::from_double(p);
}

/// Tables for binomial jump counts η_l ~ Bi(2^{L̂-l}, λT·2^{-L̂}).
class JumpCountTables {
 public:
  JumpCountTables(int finest_level, double intensity, double horizon)
      : intensity_(intensity),
        tables_(finest_level, jump_success_probability(finest_level, intensity, horizon)) {}

  double intensity() const noexcept { return intensity_; }
  const BinomialLevelTables& binomial() const noexcept { return tables_; }

  template <class Rng>
  std::uint64_t sample(int level, Rng& rng) const {
    return tables_.sample(level, rng);
  }

 private:
  double intensity_;
  BinomialLevelTables tables_;
};

/// One level-l jump count.
template <class Rng>
std::uint64_t jump_count_increment(const IncrementPlan& plan, const JumpCountTables& tables, Rng& rng) {
  if (tables.binomial().finest_level() != plan.finest_level()) {
    throw ContractViolation("jump tables built for a different finest level");
  }
  return tables.sample(plan.level(), rng);
}

}  // namespace wmlmc
