#pragma once

// Walker/Vose alias table in pure integer arithmetic.
//
// Probabilities are quantized to integer weights summing to 2^53; the table
// then reproduces those weights exactly, so the implied pmf differs from the
// source by at most one quantum (2^-53) per outcome plus the largest-remainder
// correction.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "wmlmc/errors.hpp"
#include "wmlmc/random.hpp"

namespace wmlmc {

class AliasTable {
 public:
  static constexpr int kWeightBits = 53;
  static constexpr std::uint64_t kTotalWeight = std::uint64_t{1} << kWeightBits;

  AliasTable() = default;

  std::size_t size() const noexcept { return alias_.size(); }

  /// Acceptance threshold of column k as a fraction of the column.
  double cutoff(std::size_t k) const noexcept {
    return static_cast<double>(cutoff_[k]) / static_cast<double>(kTotalWeight);
  }
  std::size_t alias(std::size_t k) const noexcept { return alias_[k]; }

  /// Integer weight of outcome k (out of kTotalWeight) after quantization.
  std::uint64_t weight(std::size_t k) const noexcept { return weights_[k]; }

  /// Probability of outcome k recovered by enumerating every column.
  double implied_probability(std::size_t k) const {
    // Column j contributes cutoff_j to j and (S - cutoff_j) to alias_j, each / (n*S).
    unsigned __int128 mass = 0;
    for (std::size_t j = 0; j < size(); ++j) {
      if (j == k) mass += cutoff_[j];
      if (alias_[j] == k) mass += kTotalWeight - cutoff_[j];
    }
    return static_cast<double>(static_cast<long double>(mass) /
                               (static_cast<long double>(kTotalWeight) * size()));
  }

  template <class Rng>
  std::size_t sample(Rng& rng) const {
    const auto column = static_cast<std::size_t>(uniform_below(rng, size()));
    const std::uint64_t y = rng() >> (64 - kWeightBits);
    return y < cutoff_[column] ? column : alias_[column];
  }

  friend AliasTable build_alias_table(std::span<const double> probabilities);

 private:
  std::vector<std::uint64_t> cutoff_;
  std::vector<std::size_t> alias_;
  std::vector<std::uint64_t> weights_;
};

namespace detail {

// Largest-remainder rounding of p * 2^53 so the weights sum to exactly 2^53.
inline std::vector<std::uint64_t> quantize_weights(std::span<const double> p) {
  const std::size_t n = p.size();
  const long double total = static_cast<long double>(AliasTable::kTotalWeight);
  std::vector<std::uint64_t> w(n);
  std::vector<long double> remainder(n);
  long double psum = 0;
  for (double v : p) psum += v;
  std::uint64_t assigned = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const long double exact = static_cast<long double>(p[k]) / psum * total;
    w[k] = static_cast<std::uint64_t>(std::floor(exact));
    remainder[k] = exact - static_cast<long double>(w[k]);
    assigned += w[k];
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < AliasTable::kTotalWeight; ++i, ++assigned) {
    ++w[order[i % n]];
  }
  return w;
}

}  // namespace detail

/// Builds an alias table for a probability vector. Rejects negative entries and
/// sums more than 1e-9 away from one.
inline AliasTable build_alias_table(std::span<const double> probabilities) {
  const std::size_t n = probabilities.size();
  if (n == 0) throw ConfigError("alias table: empty probability vector");
  long double sum = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double v = probabilities[k];
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ConfigError("alias table: invalid probability at index " + std::to_string(k));
    }
    sum += v;
  }
  if (std::fabs(static_cast<double>(sum) - 1.0) > 1e-9) {
    throw ConfigError("alias table: probabilities sum to " +
                      std::to_string(static_cast<double>(sum)));
  }

  AliasTable table;
  table.weights_ = detail::quantize_weights(probabilities);
  table.cutoff_.assign(n, AliasTable::kTotalWeight);
  table.alias_.resize(n);
  std::iota(table.alias_.begin(), table.alias_.end(), std::size_t{0});

  // Scaled weights n*w_k compared against the column capacity S = 2^53.
  using u128 = unsigned __int128;
  constexpr u128 capacity = AliasTable::kTotalWeight;
  std::vector<u128> scaled(n);
  std::vector<std::size_t> small, large;
  for (std::size_t k = 0; k < n; ++k) {
    scaled[k] = static_cast<u128>(table.weights_[k]) * n;
    (scaled[k] < capacity ? small : large).push_back(k);
  }
  while (!small.empty() && !large.empty()) {
    const std::size_t s = small.back();
    small.pop_back();
    const std::size_t l = large.back();
    table.cutoff_[s] = static_cast<std::uint64_t>(scaled[s]);
    table.alias_[s] = l;
    scaled[l] -= capacity - scaled[s];
    if (scaled[l] < capacity) {
      large.pop_back();
      small.push_back(l);
    }
  }
  // Integer bookkeeping is exact, so leftovers are full columns.
  for (std::size_t k : large) table.cutoff_[k] = AliasTable::kTotalWeight;
  for (std::size_t k : small) table.cutoff_[k] = AliasTable::kTotalWeight;
  return table;
}

}  // namespace wmlmc
