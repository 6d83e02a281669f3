#pragma once

// Adaptive multilevel driver.
//
//   1. L = 2, N_l = initial_samples on levels 0..2.
//   2. Update N_l := max{N_l, ceil(2 ε^-2 sqrt(V_l 2^-l) Σ_k sqrt(V_k 2^k))}
//      and top up, until no level grows by the growth threshold or more.
//   3. Stop when L >= 2 and max{|Ŷ_{L-1}|/2, |Ŷ_L|} < ε/√2; otherwise add
//      level L+1 with V_{L+1} seeded as V_L/2 and go back to 2.
//   4. Give up with a warning once L exceeds the level cap.
//
// Samples are keyed by (master seed, level, replicate) and accumulated in
// fixed blocks merged in index order, so results do not depend on the thread
// count.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "wmlmc/errors.hpp"
#include "wmlmc/random.hpp"
#include "wmlmc/schemes.hpp"

namespace wmlmc {

struct LevelStats {
  int level = 0;
  std::uint64_t count = 0;
  double sum = 0.0;
  double sum_sq = 0.0;
  std::uint64_t cost_units = 0;

  double mean() const noexcept { return count == 0 ? 0.0 : sum / static_cast<double>(count); }

  /// Bessel-corrected per-sample variance. Values within 1e-14 of the mean
  /// square are cancellation noise and clamp to 0.
  double variance() const noexcept {
    if (count < 2) return 0.0;
    const double n = static_cast<double>(count);
    const double v = (sum_sq - sum * sum / n) / (n - 1.0);
    return v > 1e-14 * (sum_sq / n) ? v : 0.0;
  }

  void add(double x, std::uint64_t cost) noexcept {
    ++count;
    sum += x;
    sum_sq += x * x;
    cost_units += cost;
  }

  friend bool operator==(const LevelStats&, const LevelStats&) = default;
};

inline LevelStats merge_stats(const LevelStats& a, const LevelStats& b) {
  if (a.level != b.level) throw ContractViolation("merge_stats: level mismatch");
  return {a.level, a.count + b.count, a.sum + b.sum, a.sum_sq + b.sum_sq, a.cost_units + b.cost_units};
}

struct MLMCConfig {
  double epsilon = 0.01;
  int level_cap = 9;
  std::uint64_t initial_samples = 100;
  double growth_threshold = 0.01;
  std::uint64_t master_seed = 0;
  unsigned threads = 1;  // 0 = hardware concurrency

  void validate() const {
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    if (level_cap < 2) throw ConfigError("level cap must be at least 2");
    if (initial_samples < 2) throw ConfigError("initial sample count must be at least 2");
    if (!(growth_threshold > 0.0)) throw ConfigError("growth threshold must be positive");
  }
};

enum class MLMCStatus { converged, level_cap_reached };

inline const char* to_string(MLMCStatus s) noexcept {
  return s == MLMCStatus::converged ? "converged" : "level_cap_reached";
}

inline constexpr const char* kLevelCapWarning = "The final level L^ is insufficient for the convergence.";

struct MLMCResult {
  double estimate = 0.0;
  std::vector<LevelStats> levels;
  std::uint64_t total_cost_units = 0;
  int terminal_L = 0;
  MLMCStatus status = MLMCStatus::converged;
  std::string warning;
};

/// Level sampler: draws one level-`level` sample from the given stream.
using LevelSampler = std::function<CoupledSample(int level, Stream& rng)>;

/// A sampler failure annotated with its (level, replicate).
class SamplingError : public std::runtime_error {
 public:
  SamplingError(const std::string& what, int level, std::uint64_t replicate)
      : std::runtime_error("level " + std::to_string(level) + ", replicate " + std::to_string(replicate) + ": " +
                           what),
        level_(level),
        replicate_(replicate) {}

  int level() const noexcept { return level_; }
  std::uint64_t replicate() const noexcept { return replicate_; }

 private:
  int level_;
  std::uint64_t replicate_;
};

inline constexpr std::uint64_t kAccumulationBlock = 512;

/// Accumulates replicates [first, last) of one level.
inline LevelStats accumulate_level(const LevelSampler& sampler, std::uint64_t seed, int level, std::uint64_t first,
                                   std::uint64_t last, unsigned threads = 1) {
  LevelStats total{level};
  if (last <= first) return total;
  const std::uint64_t blocks = (last - first + kAccumulationBlock - 1) / kAccumulationBlock;
  std::vector<LevelStats> partial(blocks, LevelStats{level});
  std::vector<std::exception_ptr> errors(blocks);

  auto run_block = [&](std::uint64_t b) {
    const std::uint64_t lo = first + b * kAccumulationBlock;
    const std::uint64_t hi = std::min(last, lo + kAccumulationBlock);
    std::uint64_t r = lo;
    try {
      for (; r < hi; ++r) {
        Stream rng = derive_stream(seed, static_cast<std::uint64_t>(level), r);
        const CoupledSample s = sampler(level, rng);
        partial[b].add(s.difference(), s.cost_units);
      }
    } catch (const std::exception& e) {
      errors[b] = std::make_exception_ptr(SamplingError(e.what(), level, r));
    }
  };

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  if (threads <= 1 || blocks == 1) {
    for (std::uint64_t b = 0; b < blocks; ++b) run_block(b);
  } else {
    std::vector<std::jthread> pool;
    const unsigned workers = static_cast<unsigned>(std::min<std::uint64_t>(threads, blocks));
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::uint64_t b = w; b < blocks; b += workers) run_block(b);
      });
    }
  }
  for (std::uint64_t b = 0; b < blocks; ++b) {
    if (errors[b]) std::rethrow_exception(errors[b]);
    total = merge_stats(total, partial[b]);
  }
  return total;
}

namespace detail {

inline std::vector<std::uint64_t> required_samples(std::span<const double> variances,
                                                   std::span<const std::uint64_t> counts, double epsilon) {
  double total = 0.0;
  for (std::size_t k = 0; k < variances.size(); ++k) total += std::sqrt(variances[k] * std::ldexp(1.0, static_cast<int>(k)));
  std::vector<std::uint64_t> out(counts.begin(), counts.end());
  for (std::size_t l = 0; l < variances.size(); ++l) {
    const double want = 2.0 / (epsilon * epsilon) * std::sqrt(variances[l] * std::ldexp(1.0, -static_cast<int>(l))) * total;
    out[l] = std::max(out[l], static_cast<std::uint64_t>(std::ceil(want)));
  }
  return out;
}

}  // namespace detail

/// Sample-size update N_l := max{N_l, ceil(2 ε^-2 sqrt(V_l 2^-l) Σ_k sqrt(V_k 2^k))}
/// with V_l the per-sample variance of level l.
inline std::vector<std::uint64_t> required_samples(std::span<const LevelStats> stats, double epsilon) {
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  std::vector<double> v;
  std::vector<std::uint64_t> n;
  for (const auto& s : stats) {
    if (s.count < 2) throw ConfigError("level " + std::to_string(s.level) + " has fewer than two samples");
    v.push_back(s.variance());
    n.push_back(s.count);
  }
  return detail::required_samples(v, n, epsilon);
}

/// Bias test: converged when L >= 2 and max{|Y_{L-1}|/2, |Y_L|} < ε/√2.
inline bool bias_converged(double y_prev, double y_last, int L, double epsilon) {
  if (L < 2) return false;
  return std::max(std::fabs(y_prev) / 2.0, std::fabs(y_last)) < epsilon / std::sqrt(2.0);
}

inline MLMCResult run_mlmc(const LevelSampler& sampler, const MLMCConfig& config) {
  config.validate();
  std::vector<LevelStats> stats;
  std::vector<double> seeded_variance;  // used only while a level has < 2 samples

  auto top_up = [&](int level, std::uint64_t target) {
    LevelStats& s = stats[level];
    if (target <= s.count) return;
    s = merge_stats(s, accumulate_level(sampler, config.master_seed, level, s.count, target, config.threads));
  };

  int L = 2;
  for (int l = 0; l <= L; ++l) {
    stats.push_back(LevelStats{l});
    seeded_variance.push_back(0.0);
    top_up(l, config.initial_samples);
  }

  MLMCResult result;
  for (;;) {
    for (;;) {
      std::vector<double> v(stats.size());
      std::vector<std::uint64_t> n(stats.size());
      for (std::size_t l = 0; l < stats.size(); ++l) {
        v[l] = stats[l].count >= 2 ? stats[l].variance() : seeded_variance[l];
        n[l] = stats[l].count;
      }
      const auto want = detail::required_samples(v, n, config.epsilon);
      bool grew = false;
      for (std::size_t l = 0; l < stats.size(); ++l) {
        if (n[l] == 0 || static_cast<double>(want[l] - n[l]) >= config.growth_threshold * static_cast<double>(n[l])) {
          grew = true;
        }
      }
      if (!grew) break;
      for (std::size_t l = 0; l < stats.size(); ++l) {
        top_up(static_cast<int>(l), std::max(want[l], n[l] == 0 ? config.initial_samples : n[l]));
      }
    }

    if (bias_converged(stats[L - 1].mean(), stats[L].mean(), L, config.epsilon)) {
      result.status = MLMCStatus::converged;
      break;
    }
    ++L;
    if (L > config.level_cap) {
      result.status = MLMCStatus::level_cap_reached;
      result.warning = kLevelCapWarning;
      break;
    }
    stats.push_back(LevelStats{L});
    seeded_variance.push_back(stats[L - 1].variance() / 2.0);
  }

  result.terminal_L = static_cast<int>(stats.size()) - 1;
  for (const auto& s : stats) {
    result.estimate += s.mean();
    result.total_cost_units += s.cost_units;
  }
  result.levels = std::move(stats);
  return result;
}

}  // namespace wmlmc
