// wmlmc: command-line harness for the MLMC experiments.
//
//   wmlmc estimate        --case C --epsilon E [--seed S] [--increments binomial|normal]
//   wmlmc variance-decay  --case C [--max-level L] [--replicates N] [--fit-from a --fit-to b]
//   wmlmc rmse            --case C --epsilon-grid a,b,c [--replicates N]
//   wmlmc moment-match    [--m M] [--theta T]
//   wmlmc levy-check      --alpha A [--max-level L] [--replicates N] [--schedule per-level|constant]
//
// Exit codes: 0 success, 1 numerical or solver failure, 2 usage error.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "wmlmc/wmlmc.hpp"

namespace {

struct Options {
  std::string case_name;
  double epsilon = 0.01;
  std::vector<double> epsilon_grid;
  std::uint64_t seed = 1;
  std::optional<std::uint64_t> replicates;
  std::string increments = "binomial";
  std::optional<int> min_level;
  std::optional<int> max_level;
  std::optional<int> fit_from;
  std::optional<int> fit_to;
  double alpha = 0.5;
  std::string schedule;
  double m = 0.05;
  double theta = 0.25;
  unsigned threads = 1;
  std::uint64_t initial_samples = 100;
  std::string out;
};

wmlmc::IncrementBackend parse_backend(const std::string& s) {
  return s == "normal" ? wmlmc::IncrementBackend::normal : wmlmc::IncrementBackend::binomial;
}

void emit(const Options& o, const std::string& body) {
  if (o.out.empty()) {
    std::cout << body;
    return;
  }
  std::ofstream f(o.out, std::ios::binary);
  if (!f) throw wmlmc::ConfigError("cannot open output file " + o.out);
  f << body;
}

int run_estimate(const Options& o) {
  const auto bench = wmlmc::find_case(o.case_name);
  const auto report = wmlmc::run_estimate(bench, o.epsilon, parse_backend(o.increments), o.seed, o.threads, o.initial_samples);
  if (!report.result.warning.empty()) std::cerr << report.result.warning << '\n';
  emit(o, report.to_json().dump(2) + "\n");
  return 0;
}

int run_variance_decay(const Options& o) {
  const auto bench = wmlmc::find_case(o.case_name);
  const int max_level = o.max_level.value_or(bench.finest_level);
  const auto report = wmlmc::variance_decay(bench, parse_backend(o.increments), o.min_level.value_or(1), max_level,
                                            o.replicates.value_or(10000), o.seed, o.fit_from, o.fit_to, o.threads);
  emit(o, report.to_csv() + report.fit_summary());
  return 0;
}

int run_rmse(const Options& o) {
  const auto bench = wmlmc::find_case(o.case_name);
  const auto report = wmlmc::rmse_study(bench, parse_backend(o.increments), o.epsilon_grid,
                                        o.replicates.value_or(50), o.seed, o.threads, o.initial_samples);
  emit(o, report.to_csv());
  return 0;
}

int run_moment_match(const Options& o) {
  emit(o, wmlmc::moment_match_json(o.m, o.theta).dump(2) + "\n");
  return 0;
}

int run_levy_check(const Options& o) {
  std::vector<wmlmc::DeltaSchedule> schedules;
  if (o.schedule == "per-level") {
    schedules = {wmlmc::DeltaSchedule::per_level};
  } else if (o.schedule == "constant") {
    schedules = {wmlmc::DeltaSchedule::constant};
  } else if (o.alpha <= wmlmc::per_level_alpha_limit()) {
    schedules = {wmlmc::DeltaSchedule::per_level, wmlmc::DeltaSchedule::constant};
  } else {
    schedules = {wmlmc::DeltaSchedule::constant};
  }
  const auto report = wmlmc::levy_check(o.alpha, o.min_level.value_or(1), o.max_level.value_or(6),
                                        o.replicates.value_or(100000), schedules, o.epsilon, o.seed);
  std::cerr << "regime: " << report.regime << '\n';
  emit(o, report.to_csv());
  return report.all_pass() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multilevel Monte Carlo for weak approximation schemes"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&o](CLI::App* sub) {
    sub->add_option("--seed", o.seed, "master seed");
    sub->add_option("--threads", o.threads, "worker threads (0 = all cores)");
    sub->add_option("--out", o.out, "write data to this file instead of stdout");
  };
  auto add_case = [&o](CLI::App* sub) {
    sub->add_option("--case", o.case_name, "maxcall3d, geo-asian or merton")
        ->required()
        ->check(CLI::IsMember(wmlmc::case_names()));
    sub->add_option("--increments", o.increments, "increment family")
        ->check(CLI::IsMember({"binomial", "normal"}));
  };
  const auto positive = CLI::PositiveNumber;

  auto* est = app.add_subcommand("estimate", "one adaptive MLMC run, JSON report");
  add_case(est);
  add_common(est);
  est->add_option("--epsilon", o.epsilon, "target accuracy")->check(positive);
  est->add_option("--initial-samples", o.initial_samples, "samples per level before the first update (default 100)");
  est->add_option("--max-level", o.max_level, "ignored; the level cap is the case's finest level");

  auto* vd = app.add_subcommand("variance-decay", "per-level variance of coupled differences, CSV");
  add_case(vd);
  add_common(vd);
  vd->add_option("--replicates", o.replicates, "coupled pairs per level");
  vd->add_option("--min-level", o.min_level, "first level (default 1)");
  vd->add_option("--max-level", o.max_level, "last level (default: the case's finest level)");
  vd->add_option("--fit-from", o.fit_from, "first level of the slope fit");
  vd->add_option("--fit-to", o.fit_to, "last level of the slope fit");

  auto* rm = app.add_subcommand("rmse", "RMSE and mean cost over independent runs, CSV");
  add_case(rm);
  add_common(rm);
  rm->add_option("--epsilon-grid", o.epsilon_grid, "comma-separated accuracies")
      ->required()
      ->delimiter(',')
      ->check(positive);
  rm->add_option("--replicates", o.replicates, "independent runs per epsilon (default 50)");
  rm->add_option("--initial-samples", o.initial_samples, "samples per level before the first update (default 100)");

  auto* mm = app.add_subcommand("moment-match", "four-atom law matching lognormal moments, JSON");
  add_common(mm);
  mm->add_option("--m", o.m, "log-mean");
  mm->add_option("--theta", o.theta, "log-standard deviation");

  auto* lc = app.add_subcommand("levy-check", "coupling residual moments against the bound, CSV");
  add_common(lc);
  lc->add_option("--alpha", o.alpha, "tail index in (0, 2)");
  lc->add_option("--epsilon", o.epsilon, "accuracy for the constant threshold schedule")->check(positive);
  lc->add_option("--replicates", o.replicates, "coarse steps per level (default 100000)");
  lc->add_option("--min-level", o.min_level, "first fine level (default 1)");
  lc->add_option("--max-level", o.max_level, "last fine level (default 6)");
  lc->add_option("--schedule", o.schedule, "threshold schedule (default: both admissible)")
      ->check(CLI::IsMember({"per-level", "constant"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*est) return run_estimate(o);
    if (*vd) return run_variance_decay(o);
    if (*rm) return run_rmse(o);
    if (*mm) return run_moment_match(o);
    if (*lc) return run_levy_check(o);
  } catch (const wmlmc::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n' << app.help();
    return 2;
  } catch (const wmlmc::SolverError& e) {
    std::cerr << "solver failed: " << e.what() << " (residual " << e.residual() << ")\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
