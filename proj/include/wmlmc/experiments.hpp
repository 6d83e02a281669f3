#pragma once

// Experiment drivers behind the command-line tool: single MLMC runs, level
// variance tables with log2-slope fits, RMSE studies, moment-matching reports
// and the Lévy residual check. Each returns a plain report struct with CSV or
// JSON renderers; no timestamps, so reruns are byte-identical.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "wmlmc/levy.hpp"
#include "wmlmc/mlmc.hpp"
#include "wmlmc/models.hpp"
#include "wmlmc/moment_match.hpp"
#include "wmlmc/schemes.hpp"

namespace wmlmc {

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline LevelSampler make_level_sampler(const BenchmarkCase& bench, std::shared_ptr<const SchemeSetup> setup) {
  return [&bench, setup](int level, Stream& rng) {
    return level_sample(bench.model, bench.functional, *setup, level, rng);
  };
}

// ---------------------------------------------------------------- estimate

struct EstimateReport {
  std::string case_name;
  IncrementBackend backend = IncrementBackend::binomial;
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  double reference = 0.0;
  MLMCResult result;

  double abs_error() const { return std::fabs(result.estimate - reference); }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["case"] = case_name;
    j["increments"] = to_string(backend);
    j["epsilon"] = epsilon;
    j["seed"] = seed;
    j["estimate"] = result.estimate;
    j["reference"] = reference;
    j["abs_error"] = abs_error();
    j["total_cost_units"] = result.total_cost_units;
    j["terminal_level"] = result.terminal_L;
    j["status"] = to_string(result.status);
    if (!result.warning.empty()) j["warning"] = result.warning;
    auto& levels = j["levels"] = nlohmann::ordered_json::array();
    for (const auto& s : result.levels) {
      levels.push_back({{"level", s.level},
                        {"samples", s.count},
                        {"mean", s.mean()},
                        {"variance", s.variance()},
                        {"cost_units", s.cost_units}});
    }
    return j;
  }
};

inline EstimateReport run_estimate(const BenchmarkCase& bench, double epsilon, IncrementBackend backend,
                                   std::uint64_t seed, unsigned threads = 1, std::uint64_t initial_samples = 100) {
  auto setup = std::make_shared<const SchemeSetup>(bench.setup(backend));
  MLMCConfig config;
  config.epsilon = epsilon;
  config.level_cap = bench.finest_level;
  config.master_seed = seed;
  config.threads = threads;
  config.initial_samples = initial_samples;
  EstimateReport report;
  report.case_name = bench.name;
  report.backend = backend;
  report.epsilon = epsilon;
  report.seed = seed;
  report.reference = bench.reference_value;
  report.result = run_mlmc(make_level_sampler(bench, setup), config);
  return report;
}

// ---------------------------------------------------------- variance decay

/// Least-squares line log2 V_l ≈ intercept - slope·l.
struct SlopeFit {
  bool defined = false;
  double intercept = 0.0;  // α1
  double slope = 0.0;      // α2
  int from = 0;
  int to = 0;
};

inline SlopeFit fit_log2_slope(std::span<const int> levels, std::span<const double> variances, int from, int to) {
  SlopeFit fit;
  fit.from = from;
  fit.to = to;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (levels[i] < from || levels[i] > to) continue;
    if (!(variances[i] > 0.0)) return fit;  // log of zero variance: no fit
    const double x = levels[i];
    const double y = std::log2(variances[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  if (n < 2) return fit;
  const double denom = n * sxx - sx * sx;
  const double b = (n * sxy - sx * sy) / denom;
  fit.defined = true;
  fit.slope = -b;
  fit.intercept = (sy - b * sx) / n;
  return fit;
}

struct VarianceDecayRow {
  int level = 0;
  std::uint64_t n_pairs = 0;
  double var_diff = 0.0;
  double mean_diff = 0.0;
};

struct VarianceDecayReport {
  std::string case_name;
  IncrementBackend backend = IncrementBackend::binomial;
  std::vector<VarianceDecayRow> rows;
  SlopeFit fit;

  std::string to_csv() const {
    std::ostringstream os;
    os << "level,n_pairs,var_diff,log2_var_diff\n";
    for (const auto& r : rows) {
      os << r.level << ',' << r.n_pairs << ',' << format_double(r.var_diff) << ','
         << (r.var_diff > 0.0 ? format_double(std::log2(r.var_diff)) : std::string("-inf")) << '\n';
    }
    return os.str();
  }

  /// Trailing comment block with the fit; CSV readers skip '#' lines.
  std::string fit_summary() const {
    std::ostringstream os;
    os << "# fit_from=" << fit.from << " fit_to=" << fit.to;
    if (fit.defined) {
      os << " alpha1=" << format_double(fit.intercept) << " alpha2=" << format_double(fit.slope) << '\n';
    } else {
      os << " fit=undefined\n";
    }
    return os.str();
  }
};

/// Default fit windows: the last six levels for the geometric Asian case, all
/// levels otherwise.
inline std::pair<int, int> default_fit_window(const std::string& case_name, int min_level, int max_level) {
  if (case_name == "geo-asian") return {std::max(min_level, max_level - 5), max_level};
  return {min_level, max_level};
}

inline VarianceDecayReport variance_decay(const BenchmarkCase& bench, IncrementBackend backend, int min_level,
                                          int max_level, std::uint64_t replicates, std::uint64_t seed,
                                          std::optional<int> fit_from = {}, std::optional<int> fit_to = {},
                                          unsigned threads = 1) {
  if (replicates < 2) throw ConfigError("variance decay needs at least two replicates per level");
  if (min_level < 1 || max_level < min_level || max_level > bench.finest_level) {
    throw ConfigError("levels must satisfy 1 <= min <= max <= " + std::to_string(bench.finest_level));
  }
  auto setup = std::make_shared<const SchemeSetup>(bench.setup(backend));
  const auto sampler = make_level_sampler(bench, setup);
  VarianceDecayReport report;
  report.case_name = bench.name;
  report.backend = backend;
  std::vector<int> levels;
  std::vector<double> vars;
  for (int l = min_level; l <= max_level; ++l) {
    const LevelStats s = accumulate_level(sampler, seed, l, 0, replicates, threads);
    report.rows.push_back({l, s.count, s.variance(), s.mean()});
    levels.push_back(l);
    vars.push_back(s.variance());
  }
  const auto window = default_fit_window(bench.name, min_level, max_level);
  report.fit = fit_log2_slope(levels, vars, fit_from.value_or(window.first), fit_to.value_or(window.second));
  return report;
}

// --------------------------------------------------------------------- rmse

struct RmseRow {
  double epsilon = 0.0;
  double rmse = 0.0;
  double mean_cost = 0.0;
  std::uint64_t replicates = 0;
  std::vector<double> estimates;
};

struct RmseReport {
  std::string case_name;
  IncrementBackend backend = IncrementBackend::binomial;
  double reference = 0.0;
  std::vector<RmseRow> rows;

  std::string to_csv() const {
    std::ostringstream os;
    os << "epsilon,rmse,mean_cost,replicates\n";
    for (const auto& r : rows) {
      os << format_double(r.epsilon) << ',' << format_double(r.rmse) << ',' << format_double(r.mean_cost) << ','
         << r.replicates << '\n';
    }
    return os.str();
  }
};

/// Master seed of replicate `i` in an RMSE study.
inline std::uint64_t replicate_seed(std::uint64_t seed, std::uint64_t i) { return mix_key(seed ^ 0x726d7365ULL, i); }

inline RmseReport rmse_study(const BenchmarkCase& bench, IncrementBackend backend, std::span<const double> epsilons,
                             std::uint64_t replicates, std::uint64_t seed, unsigned threads = 1,
                             std::uint64_t initial_samples = 100) {
  if (epsilons.empty()) throw ConfigError("epsilon grid is empty");
  if (replicates < 2) throw ConfigError("RMSE study needs at least two replicates");
  RmseReport report;
  report.case_name = bench.name;
  report.backend = backend;
  report.reference = bench.reference_value;
  for (double eps : epsilons) {
    RmseRow row;
    row.epsilon = eps;
    row.replicates = replicates;
    double sq = 0.0, cost = 0.0;
    for (std::uint64_t i = 0; i < replicates; ++i) {
      const auto run = run_estimate(bench, eps, backend, replicate_seed(seed, i), threads, initial_samples);
      const double err = run.result.estimate - bench.reference_value;
      sq += err * err;
      cost += static_cast<double>(run.result.total_cost_units);
      row.estimates.push_back(run.result.estimate);
    }
    row.rmse = std::sqrt(sq / static_cast<double>(replicates));
    row.mean_cost = cost / static_cast<double>(replicates);
    report.rows.push_back(std::move(row));
  }
  return report;
}

// ------------------------------------------------------------ moment match

inline nlohmann::ordered_json moment_match_json(double m, double theta) {
  if (!(theta > 0.0)) throw ConfigError("theta must be positive");
  const auto targets = lognormal_targets(m, theta);
  const MomentMatchReport r = solve_moment_match(targets);
  nlohmann::ordered_json j;
  j["m"] = m;
  j["theta"] = theta;
  j["targets"] = targets;
  auto& atoms = j["atoms"] = nlohmann::ordered_json::array();
  for (const auto& a : r.law.atoms) atoms.push_back({{"value", a.value}, {"probability", a.probability}});
  j["degenerate"] = r.law.degenerate;
  j["residuals"] = r.residuals;
  j["mass_residual"] = r.mass_residual;
  j["max_residual"] = r.max_residual();
  j["seventh_moment_gap"] = r.seventh_moment_gap;
  j["iterations"] = r.iterations;
  return j;
}

// -------------------------------------------------------------- levy check

struct LevyCheckRow {
  int level = 0;  // fine level; the coarse level is level - 1
  DeltaSchedule schedule = DeltaSchedule::per_level;
  double delta_f = 0.0;
  double delta_c = 0.0;
  std::uint64_t replicates = 0;
  double mean_r = 0.0;
  double se_mean_r = 0.0;
  double mean_r2 = 0.0;
  double se_mean_r2 = 0.0;
  double bound = 0.0;  // 2 Δ_f ∫_{|z|≤δ_c} z² ν(dz)
  bool pass = false;
};

struct LevyCheckReport {
  double alpha = 0.0;
  std::string regime;
  std::vector<LevyCheckRow> rows;

  bool all_pass() const {
    for (const auto& r : rows) {
      if (!r.pass) return false;
    }
    return !rows.empty();
  }

  std::string to_csv() const {
    std::ostringstream os;
    os << "level,schedule,delta_f,delta_c,mean_r,se_mean_r,mean_r2,se_mean_r2,bound,pass\n";
    for (const auto& r : rows) {
      os << r.level << ',' << to_string(r.schedule) << ',' << format_double(r.delta_f) << ','
         << format_double(r.delta_c) << ',' << format_double(r.mean_r) << ',' << format_double(r.se_mean_r) << ','
         << format_double(r.mean_r2) << ',' << format_double(r.se_mean_r2) << ',' << format_double(r.bound) << ','
         << (r.pass ? "pass" : "fail") << '\n';
    }
    return os.str();
  }
};

/// Empirical mean and second moment of the coupling residual R over
/// `replicates` coarse steps per level, against the bound 2Δ_f m2(δ_c).
inline LevyCheckReport levy_check(double alpha, int min_level, int max_level, std::uint64_t replicates,
                                  std::span<const DeltaSchedule> schedules, double epsilon, std::uint64_t seed,
                                  bool discrete_jumps = false, double horizon = 1.0) {
  if (replicates < 2) throw ConfigError("levy check needs at least two replicates");
  if (min_level < 1 || max_level < min_level) throw ConfigError("levels must satisfy 1 <= min <= max");
  LevyCheckReport report;
  report.alpha = alpha;
  report.regime = levy_regime_label(alpha);
  for (DeltaSchedule schedule : schedules) {
    LevyOptions options;
    options.schedule = schedule;
    options.epsilon = epsilon;
    options.discrete_jumps = discrete_jumps;
    const LevySetup setup(power_law_measure(alpha), max_level, horizon, options);
    for (int l = min_level; l <= max_level; ++l) {
      const IncrementPlan plan = setup.plan(l);
      const double step_f = plan.step();
      const TailLaw& fine_law = setup.law(l);
      LevyCheckRow row;
      row.level = l;
      row.schedule = schedule;
      row.delta_f = fine_law.delta();
      row.delta_c = setup.delta(l - 1);
      row.replicates = replicates;
      row.bound = 2.0 * step_f * setup.spec().trunc_m2(row.delta_c);
      LevelStats first{l}, second{l};
      for (std::uint64_t r = 0; r < replicates; ++r) {
        Stream rng = derive_stream(seed, static_cast<std::uint64_t>(l) + 1000 * static_cast<int>(schedule), r);
        const auto a = fine_levy_increment(setup.spec(), fine_law, step_f, rng);
        const auto b = fine_levy_increment(setup.spec(), fine_law, step_f, rng);
        const double res = coupled_coarse_levy_increment(a, b, setup.spec(), fine_law, row.delta_c, step_f).residual;
        first.add(res, 0);
        second.add(res * res, 0);
      }
      const double n = static_cast<double>(replicates);
      row.mean_r = first.mean();
      row.se_mean_r = std::sqrt(first.variance() / n);
      row.mean_r2 = second.mean();
      row.se_mean_r2 = std::sqrt(second.variance() / n);
      row.pass = std::fabs(row.mean_r) <= 3.0 * row.se_mean_r && row.mean_r2 <= row.bound + 3.0 * row.se_mean_r2;
      report.rows.push_back(row);
    }
  }
  return report;
}

}  // namespace wmlmc
