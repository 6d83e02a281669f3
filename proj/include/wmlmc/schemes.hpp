#pragma once

// Coupled weak Euler paths.
//
// A level-l sample draws the fine drivers (Brownian surrogates, jump counts and
// jump sizes) on 2^l steps, builds the level-(l-1) drivers by pairwise sums,
// and evaluates the path functional on both Euler paths.

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wmlmc/alias_table.hpp"
#include "wmlmc/errors.hpp"
#include "wmlmc/increments.hpp"
#include "wmlmc/moment_match.hpp"
#include "wmlmc/random.hpp"

namespace wmlmc {

enum class IncrementBackend { binomial, normal };

inline const char* to_string(IncrementBackend b) noexcept {
  return b == IncrementBackend::binomial ? "binomial" : "normal";
}

/// Jump-size law: an exact sampler, a moment-matched discrete law, or both.
/// The binomial backend prefers the discrete law and the normal backend the
/// exact sampler; each falls back to the other when only one is present.
struct JumpSizeLaw {
  std::function<double(Stream&)> exact;
  std::shared_ptr<const MomentMatchedLaw> discrete;
  std::shared_ptr<const AliasTable> discrete_table;

  static JumpSizeLaw from_discrete(MomentMatchedLaw law) {
    JumpSizeLaw out;
    auto table = build_alias_table(law.probabilities());
    out.discrete = std::make_shared<const MomentMatchedLaw>(std::move(law));
    out.discrete_table = std::make_shared<const AliasTable>(std::move(table));
    return out;
  }

  bool empty() const noexcept { return !exact && !discrete; }

  double sample(IncrementBackend backend, Stream& rng) const {
    const bool use_discrete = discrete && (backend == IncrementBackend::binomial || !exact);
    if (use_discrete) return discrete->atoms[discrete_table->sample(rng)].value;
    return exact(rng);
  }
};

/// SDE dX = b(X)dt + Σ_k σ_k(X) dW^k + ∫ρ(X-, z) N(dt, dz) on R^d.
struct ModelSpec {
  using VectorField = std::function<void(std::span<const double> x, std::span<double> out)>;
  using ColumnField = std::function<void(std::span<const double> x, std::size_t k, std::span<double> out)>;
  using JumpMap = std::function<void(std::span<const double> x, double z, std::span<double> out)>;

  std::size_t dim_state = 1;
  std::size_t dim_noise = 1;
  std::vector<double> x0;
  VectorField drift;
  ColumnField diffusion_column;
  JumpMap jump_map;
  double jump_intensity = 0.0;
  JumpSizeLaw jump_sizes;

  bool has_jumps() const noexcept { return static_cast<bool>(jump_map); }

  void validate() const {
    if (dim_state == 0 || dim_noise == 0) throw ConfigError("model dimensions must be positive");
    if (x0.size() != dim_state) throw ConfigError("initial state has the wrong dimension");
    if (!drift || !diffusion_column) throw ConfigError("model needs drift and diffusion");
    if (has_jumps() && (!(jump_intensity > 0.0) || jump_sizes.empty())) {
      throw ConfigError("a jump map requires a positive intensity and a jump-size law");
    }
  }
};

/// States on a uniform grid, row-major (point, component).
struct GridPath {
  std::size_t dim = 0;
  std::vector<double> data;

  GridPath() = default;
  GridPath(std::size_t points, std::size_t d) : dim(d), data(points * d, 0.0) {}

  std::size_t points() const noexcept { return dim == 0 ? 0 : data.size() / dim; }
  std::span<double> state(std::size_t j) { return {data.data() + j * dim, dim}; }
  std::span<const double> state(std::size_t j) const { return {data.data() + j * dim, dim}; }
  std::span<const double> terminal() const { return state(points() - 1); }
};

struct PathFunctional {
  enum class Kind { terminal, log_time_average_exp };

  Kind kind = Kind::terminal;
  /// Undiscounted payoff of X_T (terminal) or of the per-component geometric
  /// time averages (log_time_average_exp).
  std::function<double(std::span<const double>)> payoff;
  double rate = 0.0;
  double horizon = 1.0;
};

/// Applies a path functional, discounted by e^{-rT}. The time average uses the
/// trapezoidal rule on the path's own grid.
inline double eval_functional(const PathFunctional& functional, const GridPath& path) {
  const double discount = std::exp(-functional.rate * functional.horizon);
  if (functional.kind == PathFunctional::Kind::terminal) {
    return discount * functional.payoff(path.terminal());
  }
  const std::size_t points = path.points();
  if (points < 2) throw ContractViolation("time-average functional needs at least two grid points");
  const std::size_t n = points - 1;
  std::vector<double> average(path.dim, 0.0);
  for (std::size_t j = 0; j < points; ++j) {
    const auto x = path.state(j);
    const double w = (j == 0 || j == n) ? 0.5 : 1.0;
    for (std::size_t i = 0; i < path.dim; ++i) {
      if (!(x[i] > 0.0)) throw DomainError("log of nonpositive state", j);
      average[i] += w * std::log(x[i]);
    }
  }
  for (auto& a : average) a = std::exp(a / static_cast<double>(n));
  return discount * functional.payoff(average);
}

/// Random inputs of one Euler path.
struct PathDrivers {
  IncrementMatrix<double> brownian;  // dim_noise x steps
  std::vector<std::uint64_t> jump_counts;       // empty for pure diffusions
  std::vector<std::vector<double>> jump_sizes;  // jump_sizes[j].size() == jump_counts[j]

  std::size_t steps() const noexcept { return brownian.cols; }
};

/// Pairwise-sum coupling of all drivers: counts add, size lists concatenate.
inline PathDrivers coarsen(const PathDrivers& fine) {
  PathDrivers coarse;
  coarse.brownian = couple_coarse(fine.brownian);
  if (!fine.jump_counts.empty()) {
    const std::size_t n = coarse.brownian.cols;
    coarse.jump_counts.resize(n);
    coarse.jump_sizes.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      coarse.jump_counts[j] = fine.jump_counts[2 * j] + fine.jump_counts[2 * j + 1];
      auto& sizes = coarse.jump_sizes[j];
      sizes = fine.jump_sizes[2 * j];
      sizes.insert(sizes.end(), fine.jump_sizes[2 * j + 1].begin(), fine.jump_sizes[2 * j + 1].end());
    }
  }
  return coarse;
}

/// Euler path X_j = X_{j-1} + b Δ + Σ_k σ_k ξ^k_j + Σ_i ρ(X_{j-1}, Z_{j,i}).
/// The step size is plan.step(); the driver matrix must have 2^level columns.
inline GridPath euler_path(const ModelSpec& model, const IncrementPlan& plan, const PathDrivers& drivers) {
  const std::size_t d = model.dim_state;
  const std::size_t m = model.dim_noise;
  const std::size_t n = plan.num_steps();
  if (drivers.brownian.rows != m || drivers.brownian.cols != n) {
    throw ContractViolation("increment matrix must be " + std::to_string(m) + " x " + std::to_string(n));
  }
  const bool jumps = model.has_jumps() && !drivers.jump_counts.empty();
  if (jumps && (drivers.jump_counts.size() != n || drivers.jump_sizes.size() != n)) {
    throw ContractViolation("jump arrays do not match the number of steps");
  }
  const double dt = plan.step();
  GridPath path(n + 1, d);
  std::copy(model.x0.begin(), model.x0.end(), path.state(0).begin());
  std::vector<double> drift(d), column(d), jump(d);
  for (std::size_t j = 1; j <= n; ++j) {
    const auto prev = path.state(j - 1);
    auto next = path.state(j);
    model.drift(prev, drift);
    for (std::size_t i = 0; i < d; ++i) next[i] = prev[i] + drift[i] * dt;
    for (std::size_t k = 0; k < m; ++k) {
      const double xi = drivers.brownian(k, j - 1);
      if (xi == 0.0) continue;
      model.diffusion_column(prev, k, column);
      for (std::size_t i = 0; i < d; ++i) next[i] += column[i] * xi;
    }
    if (jumps) {
      const auto& sizes = drivers.jump_sizes[j - 1];
      if (sizes.size() != drivers.jump_counts[j - 1]) {
        throw ContractViolation("jump size list does not match the jump count at step " + std::to_string(j));
      }
      for (double z : sizes) {
        model.jump_map(prev, z, jump);
        for (std::size_t i = 0; i < d; ++i) next[i] += jump[i];
      }
    }
    for (std::size_t i = 0; i < d; ++i) {
      if (!std::isfinite(next[i])) throw NumericalError("non-finite state", j);
    }
  }
  return path;
}

/// Immutable per-run sampling context: the finest level, the increment
/// backend, and the alias tables shared by every level.
class SchemeSetup {
 public:
  SchemeSetup(const ModelSpec& model, int finest_level, double horizon, IncrementBackend backend)
      : plan_(finest_level, finest_level, horizon), backend_(backend) {
    model.validate();
    if (backend == IncrementBackend::binomial) brownian_ = make_brownian_tables(plan_);
    if (model.has_jumps()) {
      jumps_ = std::make_shared<const JumpCountTables>(finest_level, model.jump_intensity, horizon);
    }
  }

  const IncrementPlan& finest_plan() const noexcept { return plan_; }
  IncrementPlan plan(int level) const { return plan_.at(level); }
  IncrementBackend backend() const noexcept { return backend_; }
  const BrownianTables* brownian_tables() const noexcept { return brownian_.get(); }
  const JumpCountTables* jump_tables() const noexcept { return jumps_.get(); }

 private:
  IncrementPlan plan_;
  IncrementBackend backend_;
  BrownianTablesPtr brownian_;
  std::shared_ptr<const JumpCountTables> jumps_;
};

/// Draws the drivers of a level-`level` path. Jump sizes come from a substream
/// seeded by the main stream and are drawn only for steps with jumps.
inline PathDrivers draw_drivers(const ModelSpec& model, const SchemeSetup& setup, int level, Stream& rng) {
  const IncrementPlan plan = setup.plan(level);
  const std::size_t n = plan.num_steps();
  const std::size_t m = model.dim_noise;
  PathDrivers drivers;
  drivers.brownian = IncrementMatrix<double>(m, n);
  if (setup.backend() == IncrementBackend::binomial) {
    const BrownianTables& tables = *setup.brownian_tables();
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < m; ++k) drivers.brownian(k, j) = brownian_increment(plan, tables, rng);
    }
  } else {
    const double sd = std::sqrt(plan.step());
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < m; ++k) drivers.brownian(k, j) = sd * standard_normal(rng);
    }
  }
  if (model.has_jumps()) {
    Stream jump_rng(rng());
    drivers.jump_counts.resize(n);
    drivers.jump_sizes.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      drivers.jump_counts[j] = jump_count_increment(plan, *setup.jump_tables(), rng);
    }
    for (std::size_t j = 0; j < n; ++j) {
      for (std::uint64_t i = 0; i < drivers.jump_counts[j]; ++i) {
        drivers.jump_sizes[j].push_back(model.jump_sizes.sample(setup.backend(), jump_rng));
      }
    }
  }
  return drivers;
}

struct CoupledSample {
  double fine_value = 0.0;
  double coarse_value = 0.0;  // 0 at level 0
  int level = 0;
  std::uint64_t cost_units = 1;

  double difference() const noexcept { return fine_value - coarse_value; }

  friend bool operator==(const CoupledSample&, const CoupledSample&) = default;
};

/// Fine and coarse legs of a level-`level` sample driven by shared increments.
inline CoupledSample coupled_sample(const ModelSpec& model, const PathFunctional& functional,
                                    const SchemeSetup& setup, int level, Stream& rng) {
  if (level < 1) throw ContractViolation("coupled_sample needs level >= 1");
  const PathDrivers fine = draw_drivers(model, setup, level, rng);
  const PathDrivers coarse = coarsen(fine);
  CoupledSample out;
  out.level = level;
  out.cost_units = std::uint64_t{1} << level;
  try {
    out.fine_value = eval_functional(functional, euler_path(model, setup.plan(level), fine));
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("fine leg: ") + e.what(), e.step());
  } catch (const DomainError& e) {
    throw DomainError(std::string("fine leg: ") + e.what(), e.index());
  }
  try {
    out.coarse_value = eval_functional(functional, euler_path(model, setup.plan(level - 1), coarse));
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("coarse leg: ") + e.what(), e.step());
  } catch (const DomainError& e) {
    throw DomainError(std::string("coarse leg: ") + e.what(), e.index());
  }
  return out;
}

/// One uncoupled evaluation at `level`.
inline double single_sample(const ModelSpec& model, const PathFunctional& functional, const SchemeSetup& setup,
                            int level, Stream& rng) {
  const PathDrivers drivers = draw_drivers(model, setup, level, rng);
  return eval_functional(functional, euler_path(model, setup.plan(level), drivers));
}

/// MLMC level sampler: single_sample at level 0, coupled difference above.
inline CoupledSample level_sample(const ModelSpec& model, const PathFunctional& functional,
                                  const SchemeSetup& setup, int level, Stream& rng) {
  if (level == 0) return {single_sample(model, functional, setup, 0, rng), 0.0, 0, 1};
  return coupled_sample(model, functional, setup, level, rng);
}

}  // namespace wmlmc
