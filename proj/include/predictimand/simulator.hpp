#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "predictimand/dataset.hpp"
#include "predictimand/error.hpp"

namespace predictimand {

/// rate * m(t) * exp(sum coef * covariate), with m piecewise constant in study
/// time: m = time_multipliers[j] on [cut_{j-1}, cut_j).
struct Intensity {
  double rate = 0.0;
  std::map<std::string, double> coefficients;
  std::vector<double> time_cuts;
  std::vector<double> time_multipliers;
};

/// Death intensity after treatment; may also depend on time since treatment
/// through piecewise-constant multipliers.
struct TreatedDeathIntensity : Intensity {
  std::vector<double> since_treatment_cuts;
  std::vector<double> since_treatment_multipliers;
};

enum class Distribution { Constant, Normal, Uniform, Bernoulli };

struct BaselineCovariateSpec {
  std::string name;
  Distribution distribution = Distribution::Constant;
  double a = 0.0;  // value / mean / lower / success probability
  double b = 0.0;  // - / sd / upper / -
};

/// Piecewise constant on the grid: value on [k*step, (k+1)*step) is the previous
/// value plus drift plus sd * N(0, 1).
struct TimeVaryingCovariateSpec {
  std::string name;
  double initial = 0.0;
  std::string initial_from;  // baseline covariate whose value starts the path
  double drift = 0.0;
  double sd = 0.0;
};

/// Illness-death model: untreated -> treated -> dead, untreated -> dead.
struct IntensitySpec {
  std::string name;
  std::vector<BaselineCovariateSpec> baseline;
  std::vector<TimeVaryingCovariateSpec> time_varying;
  double grid_step = 0.5;
  Intensity treatment;
  Intensity death_untreated;
  TreatedDeathIntensity death_treated;
  double admin_time = 10.0;
  double censor_rate = 0.0;
  Design design = Design::ContinuesAfterTreatment;

  void validate() const {
    auto bad = [](const std::string& why) { return usage_error("InvalidIntensity", why); };
    auto check_pieces = [&](const std::string& what, const std::vector<double>& cuts, const std::vector<double>& mult) {
      for (std::size_t k = 0; k < cuts.size(); ++k)
        if (!(cuts[k] > 0.0) || (k > 0 && !(cuts[k] > cuts[k - 1])))
          throw bad(what + ": cuts must be positive and strictly increasing");
      if (mult.size() != (cuts.empty() && mult.empty() ? 0 : cuts.size() + 1))
        throw bad(what + ": need one multiplier per piece (cuts + 1)");
      for (double m : mult)
        if (!(m >= 0.0) || !std::isfinite(m)) throw bad(what + ": multipliers must be finite and >= 0");
    };
    std::vector<std::string> names;
    for (const auto& c : baseline) {
      names.push_back(c.name);
      if (c.distribution == Distribution::Normal && !(c.b >= 0.0)) throw bad(c.name + ": sd must be >= 0");
      if (c.distribution == Distribution::Uniform && !(c.b >= c.a)) throw bad(c.name + ": upper < lower");
      if (c.distribution == Distribution::Bernoulli && !(c.a >= 0.0 && c.a <= 1.0))
        throw bad(c.name + ": probability outside [0, 1]");
    }
    for (const auto& c : time_varying) {
      names.push_back(c.name);
      if (!(c.sd >= 0.0)) throw bad(c.name + ": sd must be >= 0");
      if (!c.initial_from.empty() &&
          std::none_of(baseline.begin(), baseline.end(), [&](const auto& b) { return b.name == c.initial_from; }))
        throw bad(c.name + ": initial_from names no baseline covariate");
    }
    if (!time_varying.empty() && !(grid_step > 0.0)) throw bad("grid_step must be > 0 with time-varying covariates");
    auto check = [&](const std::string& what, const Intensity& in) {
      if (!(in.rate >= 0.0) || !std::isfinite(in.rate)) throw bad(what + ": rate must be finite and >= 0");
      for (const auto& [k, v] : in.coefficients) {
        if (std::find(names.begin(), names.end(), k) == names.end())
          throw bad(what + ": coefficient for undeclared covariate '" + k + "'");
        if (!std::isfinite(v)) throw bad(what + ": non-finite coefficient");
      }
      check_pieces(what + " time", in.time_cuts, in.time_multipliers);
    };
    check("treatment", treatment);
    check("death_untreated", death_untreated);
    check("death_treated", death_treated);
    check_pieces("death_treated since-treatment", death_treated.since_treatment_cuts,
                 death_treated.since_treatment_multipliers);
    if (!(admin_time > 0.0) || !std::isfinite(admin_time)) throw bad("administrative censoring time must be > 0");
    if (!(censor_rate >= 0.0) || !std::isfinite(censor_rate)) throw bad("censoring rate must be >= 0");
  }
};

/// Latent clocks of one subject. `untreated_death` is T under v = infinity;
/// `treatment` is V (latent when the untreated death comes first); `death` is
/// the factual T. Infinity means "not before the simulation limit".
struct LatentTimes {
  double untreated_death = 0.0;
  double treatment = 0.0;
  double death = 0.0;
  double censoring = 0.0;
};

struct Simulation {
  CountingProcessDataset data;
  std::vector<LatentTimes> latent;
};

namespace detail {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Independent substream per (seed, index); the result never depends on which
// thread draws it.
inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), 0x5eedu};
  return std::mt19937_64(seq);
}

template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      const std::size_t lo = t * chunk, hi = std::min(n, lo + chunk);
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  for (auto& th : pool) th.join();
}

inline double piece_multiplier(const std::vector<double>& cuts, const std::vector<double>& mult, double t) {
  if (mult.empty()) return 1.0;
  return mult[static_cast<std::size_t>(std::upper_bound(cuts.begin(), cuts.end(), t) - cuts.begin())];
}

struct Trajectory {
  std::map<std::string, double> baseline;
  std::vector<std::vector<double>> tv;  // [covariate][grid cell]
  LatentTimes latent;
};

class TrajectorySampler {
 public:
  TrajectorySampler(const IntensitySpec& spec, double limit) : spec_(spec), limit_(limit) {
    if (!spec.time_varying.empty()) {
      cells_ = static_cast<std::size_t>(std::ceil(limit / spec.grid_step));
      for (std::size_t k = 1; k < cells_; ++k) grid_.push_back(static_cast<double>(k) * spec.grid_step);
    }
  }

  const std::vector<double>& grid() const { return grid_; }

  // `fixed` pins baseline covariates (prediction profile); the draws still
  // happen so the stream layout does not depend on the profile.
  Trajectory sample(std::mt19937_64& rng, const Profile* fixed = nullptr) const {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::exponential_distribution<double> expo(1.0);
    Trajectory tr;
    for (const auto& c : spec_.baseline) {
      double v = c.a;
      switch (c.distribution) {
        case Distribution::Constant: break;
        case Distribution::Normal: v = c.a + c.b * normal(rng); break;
        case Distribution::Uniform: v = c.a + (c.b - c.a) * unif(rng); break;
        case Distribution::Bernoulli: v = unif(rng) < c.a ? 1.0 : 0.0; break;
      }
      if (fixed)
        if (auto it = fixed->find(c.name); it != fixed->end()) v = it->second;
      tr.baseline[c.name] = v;
    }
    tr.tv.resize(spec_.time_varying.size());
    for (std::size_t j = 0; j < spec_.time_varying.size(); ++j) {
      const auto& c = spec_.time_varying[j];
      double v = c.initial_from.empty() ? c.initial : tr.baseline.at(c.initial_from);
      auto& path = tr.tv[j];
      path.reserve(std::max<std::size_t>(cells_, 1));
      path.push_back(v);
      for (std::size_t k = 1; k < cells_; ++k) {
        v += c.drift + c.sd * normal(rng);
        path.push_back(v);
      }
    }
    const double e_treat = expo(rng), e_death = expo(rng), e_after = expo(rng);
    const double e_cens = expo(rng);

    auto& lt = tr.latent;
    lt.treatment = invert(spec_.treatment, tr, 0.0, e_treat, nullptr);
    lt.untreated_death = invert(spec_.death_untreated, tr, 0.0, e_death, nullptr);
    if (lt.untreated_death <= lt.treatment)
      lt.death = lt.untreated_death;
    else
      lt.death = invert(spec_.death_treated, tr, lt.treatment, e_after, &spec_.death_treated);
    lt.censoring = spec_.censor_rate > 0.0 ? e_cens / spec_.censor_rate : kInf;
    return tr;
  }

  double tv_value(const Trajectory& tr, std::size_t j, double t) const {
    if (grid_.empty()) return tr.tv[j][0];
    const auto k = static_cast<std::size_t>(std::upper_bound(grid_.begin(), grid_.end(), t) - grid_.begin());
    return tr.tv[j][std::min(k, tr.tv[j].size() - 1)];
  }

 private:
  double intensity(const Intensity& in, const Trajectory& tr, double t, double since, const TreatedDeathIntensity* td) const {
    if (in.rate == 0.0) return 0.0;
    double lp = 0.0;
    for (const auto& [name, coef] : in.coefficients) {
      if (auto it = tr.baseline.find(name); it != tr.baseline.end()) {
        lp += coef * it->second;
        continue;
      }
      for (std::size_t j = 0; j < spec_.time_varying.size(); ++j)
        if (spec_.time_varying[j].name == name) lp += coef * tv_value(tr, j, t);
    }
    double m = piece_multiplier(in.time_cuts, in.time_multipliers, t);
    if (td) m *= piece_multiplier(td->since_treatment_cuts, td->since_treatment_multipliers, since);
    return in.rate * m * std::exp(lp);
  }

  // First time after `from` at which the cumulative intensity reaches `target`,
  // exact on the piecewise-constant pieces; infinity if not before the limit.
  double invert(const Intensity& in, const Trajectory& tr, double from, double target,
                const TreatedDeathIntensity* td) const {
    if (!(from < limit_) || in.rate == 0.0) return kInf;
    std::vector<double> breaks = grid_;
    breaks.insert(breaks.end(), in.time_cuts.begin(), in.time_cuts.end());
    if (td)
      for (double c : td->since_treatment_cuts) breaks.push_back(from + c);
    breaks.push_back(limit_);
    std::sort(breaks.begin(), breaks.end());
    double cum = 0.0, u = from;
    for (double next : breaks) {
      if (next <= u) continue;
      next = std::min(next, limit_);
      const double mid = 0.5 * (u + next);
      const double r = intensity(in, tr, mid, mid - from, td);
      if (r > 0.0 && cum + r * (next - u) >= target) return u + (target - cum) / r;
      cum += r * (next - u);
      u = next;
      if (u >= limit_) break;
    }
    return kInf;
  }

  const IntensitySpec& spec_;
  double limit_;
  std::size_t cells_ = 1;
  std::vector<double> grid_;
};

inline CovariateSchema simulated_schema(const IntensitySpec& spec) {
  CovariateSchema schema;
  for (const auto& c : spec.baseline) schema.covariates.push_back({c.name, CovariateKind::Baseline});
  for (const auto& c : spec.time_varying) schema.covariates.push_back({c.name, CovariateKind::TimeVarying});
  return schema;
}

// Observed follow-up of one subject, split at grid points and at treatment start.
inline SubjectRecord observe(const IntensitySpec& spec, const TrajectorySampler& sampler, const Trajectory& tr,
                             std::string id) {
  const auto& lt = tr.latent;
  const double end = std::min(spec.admin_time, lt.censoring);
  SubjectRecord s{std::move(id), {}, tr.baseline};

  auto add_span = [&](double a, double b, Status last_status, bool treated) {
    double lo = a;
    auto it = std::upper_bound(sampler.grid().begin(), sampler.grid().end(), a);
    while (true) {
      const bool interior = it != sampler.grid().end() && *it < b;
      const double hi = interior ? *it : b;
      Episode e{lo, hi, interior ? Status::Censored : last_status, treated, {}};
      for (std::size_t j = 0; j < spec.time_varying.size(); ++j)
        e.tv[spec.time_varying[j].name] = sampler.tv_value(tr, j, lo);
      s.episodes.push_back(std::move(e));
      if (!interior) break;
      lo = hi;
      ++it;
    }
  };

  if (lt.treatment < lt.untreated_death && lt.treatment < end) {
    add_span(0.0, lt.treatment, Status::TreatmentStart, false);
    if (spec.design == Design::ContinuesAfterTreatment) {
      const bool died = lt.death <= end;
      add_span(lt.treatment, died ? lt.death : end, died ? Status::Event : Status::Censored, true);
    }
  } else {
    const bool died = lt.untreated_death <= end;
    add_span(0.0, died ? lt.untreated_death : end, died ? Status::Event : Status::Censored, false);
  }
  return s;
}

}  // namespace detail

/// Draws n subjects. Each subject uses its own substream of `seed`, so the
/// output is identical for any thread count.
inline Simulation simulate(const IntensitySpec& spec, std::size_t n, std::uint64_t seed, unsigned threads = 1) {
  spec.validate();
  if (n < 1) throw usage_error("InvalidSize", "n must be >= 1");
  const detail::TrajectorySampler sampler(spec, spec.admin_time);
  Simulation sim;
  sim.data.schema = detail::simulated_schema(spec);
  sim.data.design = spec.design;
  sim.data.subjects.resize(n);
  sim.latent.resize(n);
  detail::parallel_for(n, threads, [&](std::size_t i) {
    auto rng = detail::substream(seed, i);
    const auto tr = sampler.sample(rng);
    sim.latent[i] = tr.latent;
    sim.data.subjects[i] = detail::observe(spec, sampler, tr, std::to_string(i + 1));
  });
  return sim;
}

enum class TruthMethod { Analytic, MonteCarlo };

/// True risk curves of the four strategies for one covariate profile, on an
/// evenly spaced grid over [0, horizon]. Baseline covariates missing from the
/// profile are drawn from their distributions (the truth is then marginal over them).
struct TruthOracle {
  TruthMethod method = TruthMethod::Analytic;
  double horizon = 0.0;
  std::size_t replications = 0;  // Monte Carlo only
  std::vector<double> times;
  std::map<std::string, std::vector<double>> curves;  // "hypothetical", "composite", ...
  std::map<std::string, double> standard_error;       // at the horizon; 0 when analytic

  double at_horizon(const std::string& strategy) const { return curves.at(strategy).back(); }
};

inline constexpr const char* kStrategyNames[] = {"ignore", "composite", "while-untreated", "hypothetical"};

namespace detail {

// Constant intensity for the profile, or nullopt if the intensity varies in
// time or depends on something the profile does not pin down.
inline std::optional<double> constant_rate(const IntensitySpec& spec, const Intensity& in, const Profile& profile) {
  if (!in.time_multipliers.empty()) return std::nullopt;
  double lp = 0.0;
  for (const auto& [name, coef] : in.coefficients) {
    if (coef == 0.0) continue;
    auto it = profile.find(name);
    const bool is_baseline = std::any_of(spec.baseline.begin(), spec.baseline.end(),
                                         [&](const auto& b) { return b.name == name; });
    if (it == profile.end() || !is_baseline) return std::nullopt;
    lp += coef * it->second;
  }
  return in.rate * std::exp(lp);
}

// (1 - exp(-k t)) / k, continuous at k = 0.
inline double decay_integral(double k, double t) { return k == 0.0 ? t : -std::expm1(-k * t) / k; }

}  // namespace detail

inline TruthOracle true_risks(const IntensitySpec& spec, const Profile& profile, double horizon,
                              std::size_t replications = 200000, std::uint64_t seed = 1, unsigned threads = 1,
                              std::size_t points = 101) {
  spec.validate();
  if (!(horizon >= 0.0) || !std::isfinite(horizon)) throw usage_error("InvalidHorizon", "horizon must be finite and >= 0");
  points = std::max<std::size_t>(points, 2);
  TruthOracle o;
  o.horizon = horizon;
  for (std::size_t k = 0; k < points; ++k)
    o.times.push_back(horizon * static_cast<double>(k) / static_cast<double>(points - 1));
  o.times.back() = horizon;
  for (const char* name : kStrategyNames) {
    o.curves[name].assign(points, 0.0);
    o.standard_error[name] = 0.0;
  }

  const auto a = detail::constant_rate(spec, spec.treatment, profile);
  const auto b = detail::constant_rate(spec, spec.death_untreated, profile);
  const auto c = detail::constant_rate(spec, spec.death_treated, profile);
  if (a && b && c && spec.death_treated.since_treatment_multipliers.empty()) {
    o.method = TruthMethod::Analytic;
    for (std::size_t k = 0; k < points; ++k) {
      const double t = o.times[k];
      const double ab = *a + *b;
      const double leave = -std::expm1(-ab * t);  // P(min(T, V) <= t)
      const double wu = ab > 0.0 ? *b / ab * leave : 0.0;
      const double treated_first = ab > 0.0 ? *a / ab * leave : 0.0;
      o.curves["hypothetical"][k] = -std::expm1(-*b * t);
      o.curves["composite"][k] = leave;
      o.curves["while-untreated"][k] = wu;
      o.curves["ignore"][k] = wu + treated_first - *a * std::exp(-*c * t) * detail::decay_integral(ab - *c, t);
    }
    return o;
  }

  o.method = TruthMethod::MonteCarlo;
  o.replications = replications;
  if (replications < 1) throw usage_error("InvalidSize", "Monte Carlo truth needs at least one replication");
  const detail::TrajectorySampler sampler(spec, std::max(horizon, spec.grid_step));
  std::vector<LatentTimes> lat(replications);
  detail::parallel_for(replications, threads, [&](std::size_t i) {
    auto rng = detail::substream(seed, i);
    lat[i] = sampler.sample(rng, &profile).latent;
  });
  // Counts of each first-passage time on the grid, accumulated in order.
  auto curve_of = [&](auto&& time_of) {
    std::vector<double> ts;
    for (const auto& l : lat) {
      const double t = time_of(l);
      if (t <= horizon) ts.push_back(t);
    }
    std::sort(ts.begin(), ts.end());
    std::vector<double> out(points);
    for (std::size_t k = 0; k < points; ++k)
      out[k] = static_cast<double>(std::upper_bound(ts.begin(), ts.end(), o.times[k]) - ts.begin()) /
               static_cast<double>(replications);
    return out;
  };
  o.curves["hypothetical"] = curve_of([](const LatentTimes& l) { return l.untreated_death; });
  o.curves["composite"] = curve_of([](const LatentTimes& l) { return std::min(l.untreated_death, l.treatment); });
  o.curves["while-untreated"] = curve_of(
      [](const LatentTimes& l) { return l.untreated_death <= l.treatment ? l.untreated_death : detail::kInf; });
  o.curves["ignore"] = curve_of([](const LatentTimes& l) { return l.death; });
  for (auto& [name, curve] : o.curves) {
    const double p = curve.back();
    o.standard_error[name] = std::sqrt(p * (1.0 - p) / static_cast<double>(replications));
  }
  return o;
}

}  // namespace predictimand
