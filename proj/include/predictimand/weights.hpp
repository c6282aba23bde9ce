#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "predictimand/cox.hpp"
#include "predictimand/dataset.hpp"

namespace predictimand {

enum class WeightMode { IPCW, IPTW };

struct Truncation {
  double lower_percentile = 1.0;
  double upper_percentile = 99.0;
};

struct WeightDiagnostics {
  double mean = 1.0, min = 1.0, max = 1.0;
  double ess = 0.0;  // (sum w)^2 / sum w^2 over episodes
  std::size_t episodes = 0;
  // Range over outcome event times of the mean weight among at-risk episodes.
  double at_risk_mean_min = 1.0, at_risk_mean_max = 1.0;
  std::optional<double> lower_bound, upper_bound;  // applied clamp, if any
};

struct WeightTable {
  EpisodeWeights values;  // [subject][episode]
  WeightMode mode = WeightMode::IPCW;
  std::optional<Truncation> truncation;
  WeightDiagnostics diagnostics;

  std::shared_ptr<const EpisodeWeights> shared() const { return std::make_shared<const EpisodeWeights>(values); }
};

/// Cox model for the treatment-start intensity, fitted on pre-treatment
/// person-time; events and administrative censoring act as censoring. An
/// empty covariate list gives the intercept-only (numerator) model.
inline CoxModel fit_treatment_hazard(const CountingProcessDataset& ds, const std::vector<std::string>& covariates,
                                     TieMethod ties = TieMethod::Efron, const FitOptions& opt = {}) {
  const auto split = split_at_treatment(ds);
  if (count_status(split, Status::TreatmentStart) == 0)
    throw data_error("NoTreatmentStarts", "no subject starts treatment; a treatment model cannot be fitted");
  CoxSpec spec;
  spec.event_code = Status::TreatmentStart;
  spec.covariate_terms = covariates;
  spec.ties = ties;
  return fit(split, spec, opt);
}

namespace detail {

inline double episode_linear_predictor(const CoxModel& model, const SubjectRecord& s, const Episode& e) {
  auto lookup = [&](const std::string& name) { return covariate_value(s, e, name); };
  double lp = 0.0;
  for (std::size_t j = 0; j < model.columns.size(); ++j) {
    const double b = model.beta[static_cast<Eigen::Index>(j)];
    auto v = column_value(model.columns[j], lookup, e.treated, e.tstop);
    if (!v) throw data_error("MissingCovariate", "subject " + s.id + ": no value for " + model.columns[j].covariate);
    lp += b * *v;
  }
  return lp;
}

// R's default (type 7) sample quantile.
inline double quantile(std::vector<double> v, double prob) {
  std::sort(v.begin(), v.end());
  if (v.empty()) return 0.0;
  const double h = (static_cast<double>(v.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline WeightDiagnostics diagnose(const CountingProcessDataset& ds, const EpisodeWeights& w) {
  WeightDiagnostics d;
  double sum = 0.0, sum2 = 0.0;
  d.min = std::numeric_limits<double>::infinity();
  d.max = -d.min;
  struct Row {
    double start, stop, w;
  };
  std::vector<Row> rows;
  std::vector<double> event_times;
  for (std::size_t i = 0; i < ds.subjects.size(); ++i)
    for (std::size_t k = 0; k < ds.subjects[i].episodes.size(); ++k) {
      const auto& e = ds.subjects[i].episodes[k];
      const double v = w[i][k];
      sum += v;
      sum2 += v * v;
      d.min = std::min(d.min, v);
      d.max = std::max(d.max, v);
      ++d.episodes;
      rows.push_back({e.tstart, e.tstop, v});
      if (e.status == Status::Event) event_times.push_back(e.tstop);
    }
  if (d.episodes == 0) return WeightDiagnostics{};
  d.mean = sum / static_cast<double>(d.episodes);
  d.ess = sum2 > 0.0 ? sum * sum / sum2 : 0.0;

  std::sort(event_times.begin(), event_times.end(), std::greater<>());
  event_times.erase(std::unique(event_times.begin(), event_times.end()), event_times.end());
  std::vector<std::size_t> by_stop(rows.size()), by_start(rows.size());
  std::iota(by_stop.begin(), by_stop.end(), std::size_t{0});
  std::iota(by_start.begin(), by_start.end(), std::size_t{0});
  std::sort(by_stop.begin(), by_stop.end(), [&](auto a, auto b) { return rows[a].stop > rows[b].stop; });
  std::sort(by_start.begin(), by_start.end(), [&](auto a, auto b) { return rows[a].start > rows[b].start; });
  double wsum = 0.0;
  long count = 0;
  std::size_t ia = 0, ir = 0;
  d.at_risk_mean_min = std::numeric_limits<double>::infinity();
  d.at_risk_mean_max = -d.at_risk_mean_min;
  for (double t : event_times) {
    for (; ia < rows.size() && rows[by_stop[ia]].stop >= t; ++ia, ++count) wsum += rows[by_stop[ia]].w;
    for (; ir < rows.size() && rows[by_start[ir]].start >= t; ++ir, --count) wsum -= rows[by_start[ir]].w;
    if (count <= 0) continue;
    const double m = wsum / static_cast<double>(count);
    d.at_risk_mean_min = std::min(d.at_risk_mean_min, m);
    d.at_risk_mean_max = std::max(d.at_risk_mean_max, m);
  }
  if (event_times.empty()) d.at_risk_mean_min = d.at_risk_mean_max = d.mean;
  return d;
}

}  // namespace detail

/// Stabilized weights w(t) = P_num(untreated past t | X(0)) / P_den(untreated past t | history),
/// with survival probabilities exp(-cumulative hazard) from the two treatment
/// models, evaluated at each episode's end (just before it, for the episode
/// ending in treatment start).
///
/// IPCW applies to censor-at-treatment data. IPTW also covers post-treatment
/// episodes: from treatment start onward the weight is frozen at the ratio of
/// the two treatment densities at the start time, S_num(V-) dH_num(V) /
/// (S_den(V-) dH_den(V)).
inline WeightTable stabilized_weights(const CountingProcessDataset& ds, const CoxModel& numerator,
                                      const CoxModel& denominator, WeightMode mode,
                                      std::optional<Truncation> truncation = std::nullopt) {
  if (numerator.spec.event_code != Status::TreatmentStart || denominator.spec.event_code != Status::TreatmentStart)
    throw usage_error("InvalidWeightModel", "weight models must have treatment start as their event");
  if (mode == WeightMode::IPCW)
    for (const auto& s : ds.subjects)
      for (const auto& e : s.episodes)
        if (e.treated)
          throw usage_error("DesignMismatch",
                            "IPCW weights attach to censor-at-treatment data; split at treatment first");

  const auto& hn = numerator.baseline;
  const auto& hd = denominator.baseline;
  WeightTable table;
  table.mode = mode;
  table.truncation = truncation;
  table.values.resize(ds.subjects.size());
  for (std::size_t i = 0; i < ds.subjects.size(); ++i) {
    const auto& s = ds.subjects[i];
    auto& out = table.values[i];
    out.reserve(s.episodes.size());
    double cum_n = 0.0, cum_d = 0.0;
    double frozen = 1.0;
    for (const auto& e : s.episodes) {
      if (e.treated) {
        out.push_back(frozen);
        continue;
      }
      const double lp_n = detail::episode_linear_predictor(numerator, s, e);
      const double lp_d = detail::episode_linear_predictor(denominator, s, e);
      const bool starts = e.status == Status::TreatmentStart;
      const double en = std::exp(lp_n), ed = std::exp(lp_d);
      const double end_n = cum_n + ((starts ? hn.before(e.tstop) : hn.at(e.tstop)) - hn.at(e.tstart)) * en;
      const double end_d = cum_d + ((starts ? hd.before(e.tstop) : hd.at(e.tstop)) - hd.at(e.tstart)) * ed;
      if (!(std::exp(-end_d) > 0.0))
        throw numeric_error("NonPositiveProbability",
                            "subject " + s.id + ": denominator probability of remaining untreated underflows");
      const double w = std::exp(end_d - end_n);
      out.push_back(w);
      cum_n += (hn.at(e.tstop) - hn.at(e.tstart)) * en;
      cum_d += (hd.at(e.tstop) - hd.at(e.tstart)) * ed;
      if (starts && mode == WeightMode::IPTW) {
        const double jn = hn.jump(e.tstop) * en, jd = hd.jump(e.tstop) * ed;
        if (!(jd > 0.0))
          throw numeric_error("NonPositiveProbability",
                              "subject " + s.id + ": denominator treatment hazard is zero at the start time");
        frozen = w * jn / jd;
      }
    }
  }

  if (truncation) {
    std::vector<double> all;
    for (const auto& v : table.values) all.insert(all.end(), v.begin(), v.end());
    const double lo = detail::quantile(all, truncation->lower_percentile / 100.0);
    const double hi = detail::quantile(all, truncation->upper_percentile / 100.0);
    for (auto& v : table.values)
      for (auto& w : v) w = std::clamp(w, lo, hi);
    table.diagnostics = detail::diagnose(ds, table.values);
    table.diagnostics.lower_bound = lo;
    table.diagnostics.upper_bound = hi;
  } else {
    table.diagnostics = detail::diagnose(ds, table.values);
  }
  return table;
}

}  // namespace predictimand
