#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "predictimand/predictimands.hpp"
#include "predictimand/simulator.hpp"

namespace predictimand {

struct ValidationTarget {
  StrategySpec spec;
  double tolerance = 0.02;             // pass requires |bias| < tolerance
  std::optional<double> min_abs_bias;  // and, if set, |bias| > this (a known-biased estimator)
};

struct ValidationOptions {
  Profile profile;
  double horizon = 5.0;
  std::vector<ValidationTarget> targets;
  std::size_t truth_replications = 200000;
  std::uint64_t truth_seed = 20240101;
  unsigned threads = 1;
};

struct ValidationEntry {
  std::string label;
  std::string truth_key;
  double truth = 0.0;
  std::vector<std::optional<double>> estimates;  // per seed; nullopt when the fit failed
  std::vector<std::string> errors;
  double mean = 0.0, bias = 0.0, rmse = 0.0;
  double tolerance = 0.0;
  std::optional<double> min_abs_bias;
  bool pass = false;
};

struct ValidationReport {
  std::string scenario;
  std::size_t n = 0;
  std::vector<std::uint64_t> seeds;
  double horizon = 0.0;
  Profile profile;
  TruthOracle truth;
  std::vector<ValidationEntry> entries;
  bool pass = false;
};

/// Strategy name the estimate of `spec` is compared against.
inline std::string truth_key(const StrategySpec& spec) { return std::string(to_string(spec.strategy)); }

/// Seeds used for `count` replications starting from `base`.
inline std::vector<std::uint64_t> replication_seeds(std::uint64_t base, std::size_t count) {
  std::vector<std::uint64_t> out;
  for (std::size_t k = 0; k < count; ++k) out.push_back(base + k);
  return out;
}

/// simulate -> estimate for each seed and target; compares the seed mean with
/// the true risk at the horizon. Seeds run in parallel; results are stored by
/// seed index, so the report does not depend on the thread count.
inline ValidationReport validate(const IntensitySpec& spec, std::size_t n, const std::vector<std::uint64_t>& seeds,
                                 const ValidationOptions& opt) {
  spec.validate();
  if (seeds.empty()) throw usage_error("InvalidSize", "at least one seed is required");
  ValidationReport r;
  r.scenario = spec.name;
  r.n = n;
  r.seeds = seeds;
  r.horizon = opt.horizon;
  r.profile = opt.profile;
  r.truth = true_risks(spec, opt.profile, opt.horizon, opt.truth_replications, opt.truth_seed, opt.threads);

  for (const auto& target : opt.targets) {
    if (needs_post_treatment_followup(target.spec) && spec.design == Design::StopsAtTreatment)
      throw usage_error("DesignMismatch", "scenario " + spec.name + " stops at treatment; " + label(target.spec) +
                                              " needs follow-up after treatment start");
    ValidationEntry e;
    e.label = label(target.spec);
    e.truth_key = truth_key(target.spec);
    e.truth = r.truth.at_horizon(e.truth_key);
    e.tolerance = target.tolerance;
    e.min_abs_bias = target.min_abs_bias;
    e.estimates.resize(seeds.size());
    e.errors.resize(seeds.size());
    r.entries.push_back(std::move(e));
  }

  detail::parallel_for(seeds.size(), opt.threads, [&](std::size_t s) {
    const auto sim = simulate(spec, n, seeds[s], 1);
    for (std::size_t t = 0; t < opt.targets.size(); ++t) {
      auto sspec = opt.targets[t].spec;
      sspec.horizon = opt.horizon;
      try {
        r.entries[t].estimates[s] = estimate(sim.data, sspec, opt.profile).at(opt.horizon);
      } catch (const Error& err) {
        r.entries[t].errors[s] = err.what();
      }
    }
  });

  r.pass = true;
  for (auto& e : r.entries) {
    double sum = 0.0, sq = 0.0;
    std::size_t ok = 0;
    for (const auto& v : e.estimates)
      if (v) {
        sum += *v;
        sq += (*v - e.truth) * (*v - e.truth);
        ++ok;
      }
    if (ok > 0) {
      e.mean = sum / static_cast<double>(ok);
      e.bias = e.mean - e.truth;
      e.rmse = std::sqrt(sq / static_cast<double>(ok));
    }
    e.pass = ok == seeds.size() && std::abs(e.bias) < e.tolerance &&
             (!e.min_abs_bias || std::abs(e.bias) > *e.min_abs_bias);
    r.pass = r.pass && e.pass;
  }
  return r;
}

}  // namespace predictimand
