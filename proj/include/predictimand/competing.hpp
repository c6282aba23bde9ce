#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "predictimand/cox.hpp"
#include "predictimand/curves.hpp"
#include "predictimand/dataset.hpp"

namespace predictimand {

inline constexpr double kNoHorizon = std::numeric_limits<double>::infinity();

namespace detail {

inline void maybe_cut(RiskCurve& c, double horizon) {
  if (std::isfinite(horizon))
    cut_at_horizon(c, horizon);
  else
    c.horizon = c.times.empty() ? 0.0 : c.times.back();
}

// Distinct event times (ascending) with at-risk counts and per-status event
// counts, over risk sets {tstart < t <= tstop}.
struct EventTable {
  std::vector<double> times;
  std::vector<double> at_risk;
  std::vector<double> events;      // status Event
  std::vector<double> treatments;  // status TreatmentStart
};

inline EventTable event_table(const CountingProcessDataset& ds) {
  struct Row {
    double start, stop;
    Status status;
  };
  std::vector<Row> rows;
  for (const auto& s : ds.subjects)
    for (const auto& e : s.episodes) rows.push_back({e.tstart, e.tstop, e.status});
  std::vector<double> starts, stops;
  std::vector<double> times;
  for (const auto& r : rows) {
    starts.push_back(r.start);
    stops.push_back(r.stop);
    if (r.status != Status::Censored) times.push_back(r.stop);
  }
  std::sort(starts.begin(), starts.end());
  std::sort(stops.begin(), stops.end());
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());

  EventTable t;
  t.times = times;
  t.at_risk.resize(times.size());
  t.events.assign(times.size(), 0.0);
  t.treatments.assign(times.size(), 0.0);
  for (std::size_t k = 0; k < times.size(); ++k) {
    // #(stop >= t) - #(start >= t)
    const auto stop_ge = stops.end() - std::lower_bound(stops.begin(), stops.end(), times[k]);
    const auto start_ge = starts.end() - std::lower_bound(starts.begin(), starts.end(), times[k]);
    t.at_risk[k] = static_cast<double>(stop_ge - start_ge);
  }
  for (const auto& r : rows) {
    if (r.status == Status::Censored) continue;
    const auto k = static_cast<std::size_t>(std::lower_bound(times.begin(), times.end(), r.stop) - times.begin());
    (r.status == Status::Event ? t.events : t.treatments)[k] += 1.0;
  }
  return t;
}

}  // namespace detail

/// 1 - Kaplan-Meier survival for one status code, ignoring every other status.
inline RiskCurve km_risk(const CountingProcessDataset& ds, Status event_code, double horizon = kNoHorizon) {
  const auto t = detail::event_table(ds);
  const auto& counts = event_code == Status::Event ? t.events : t.treatments;
  bool any = false;
  RiskCurve c;
  c.strategy = "km";
  c.times.push_back(0.0);
  c.risk.push_back(0.0);
  double s = 1.0;
  for (std::size_t k = 0; k < t.times.size(); ++k) {
    if (counts[k] == 0.0) continue;
    any = true;
    s *= 1.0 - counts[k] / t.at_risk[k];
    c.times.push_back(t.times[k]);
    c.risk.push_back(1.0 - s);
  }
  if (!any) throw data_error("NoEvents", std::string("no episodes end with status ") + std::string(to_string(event_code)));
  detail::maybe_cut(c, horizon);
  return c;
}

struct CumulativeIncidence {
  std::vector<double> times;  // starts at 0
  std::vector<double> event;
  std::vector<double> treatment;
  std::vector<double> overall_survival;
};

/// Nonparametric Aalen-Johansen estimator with treatment start as the
/// competing event (follow-up is cut at treatment start first).
inline CumulativeIncidence aalen_johansen(const CountingProcessDataset& ds) {
  const auto t = detail::event_table(split_at_treatment(ds));
  CumulativeIncidence ci{{0.0}, {0.0}, {0.0}, {1.0}};
  double s = 1.0, fe = 0.0, ft = 0.0;
  for (std::size_t k = 0; k < t.times.size(); ++k) {
    const double he = t.events[k] / t.at_risk[k];
    const double ht = t.treatments[k] / t.at_risk[k];
    fe += s * he;
    ft += s * ht;
    s *= 1.0 - he - ht;
    ci.times.push_back(t.times[k]);
    ci.event.push_back(fe);
    ci.treatment.push_back(ft);
    ci.overall_survival.push_back(s);
  }
  return ci;
}

/// Cause-specific Cox models for the event (censored at treatment start) and
/// for treatment start (censored at the event). A missing treatment model
/// means the treatment hazard is zero.
struct CauseSpecificPair {
  CoxModel event;
  std::optional<CoxModel> treatment;
};

/// Plug-in cumulative incidence for a covariate profile:
///   F_event(t) = sum_{t_k <= t} S(t_k-) dH_event(t_k | profile)
/// with S the overall event-free survival built from both cause-specific hazards.
inline CumulativeIncidence cuminc_detail(const CauseSpecificPair& pair, const Profile& profile,
                                         SurvivalForm form = SurvivalForm::ProductLimit) {
  const auto he = hazard_increments(pair.event, profile);
  std::vector<double> ht;
  if (pair.treatment) ht = hazard_increments(*pair.treatment, profile);
  const auto& te = pair.event.baseline.times;
  static const std::vector<double> kEmpty;
  const auto& tt = pair.treatment ? pair.treatment->baseline.times : kEmpty;

  CumulativeIncidence ci{{0.0}, {0.0}, {0.0}, {1.0}};
  double s = 1.0, fe = 0.0, ft = 0.0;
  std::size_t i = 0, j = 0;
  while (i < te.size() || j < tt.size()) {
    const double t = std::min(i < te.size() ? te[i] : kNoHorizon, j < tt.size() ? tt[j] : kNoHorizon);
    double de = 0.0, dt = 0.0;
    if (i < te.size() && te[i] == t) de = he[i++];
    if (j < tt.size() && tt[j] == t) dt = ht[j++];
    const double total = de + dt;
    if (form == SurvivalForm::ProductLimit) {
      // Clamp at total mass 1 so the step never drives S below zero.
      const double scale = total > 1.0 ? 1.0 / total : 1.0;
      fe += s * de * scale;
      ft += s * dt * scale;
      s *= std::max(0.0, 1.0 - total);
    } else {
      const double p = total > 0.0 ? -std::expm1(-total) : 0.0;
      if (total > 0.0) {
        fe += s * p * de / total;
        ft += s * p * dt / total;
      }
      s *= std::exp(-total);
    }
    if (t == 0.0) {
      ci.event.back() = fe;
      ci.treatment.back() = ft;
      ci.overall_survival.back() = s;
      continue;
    }
    ci.times.push_back(t);
    ci.event.push_back(fe);
    ci.treatment.push_back(ft);
    ci.overall_survival.push_back(s);
  }
  return ci;
}

inline RiskCurve cuminc(const CauseSpecificPair& pair, const Profile& profile, double horizon,
                        SurvivalForm form = SurvivalForm::ProductLimit) {
  auto ci = cuminc_detail(pair, profile, form);
  RiskCurve c;
  c.strategy = "while-untreated";
  c.profile = profile;
  c.times = std::move(ci.times);
  c.risk.reserve(ci.event.size());
  for (double v : ci.event) c.risk.push_back(std::clamp(v, 0.0, 1.0));
  detail::maybe_cut(c, horizon);
  return c;
}

/// Fits both cause-specific models on the censor-at-treatment view of `ds`.
inline CauseSpecificPair fit_cause_specific(const CountingProcessDataset& ds, CoxSpec spec,
                                            const FitOptions& opt = {}) {
  const auto split = split_at_treatment(ds);
  spec.treatment.reset();
  spec.weights.reset();
  CauseSpecificPair pair;
  spec.event_code = Status::Event;
  pair.event = fit(split, spec, opt);
  if (count_status(split, Status::TreatmentStart) > 0) {
    spec.event_code = Status::TreatmentStart;
    pair.treatment = fit(split, spec, opt);
  }
  return pair;
}

/// Risk of min(T, V) from one Cox fit on the composite endpoint.
inline RiskCurve composite_risk(const CountingProcessDataset& ds, CoxSpec spec, const Profile& profile,
                                double horizon, SurvivalForm form = SurvivalForm::ProductLimit,
                                const FitOptions& opt = {}) {
  spec.event_code = Status::Event;
  spec.treatment.reset();
  spec.weights.reset();
  const auto model = fit(compose_outcome(ds), spec, opt);
  auto c = risk_from_survival(predict_survival(model, profile, never_treated(), form),
                              std::isfinite(horizon) ? horizon : model.last_followup, "composite");
  c.profile = profile;
  return c;
}

}  // namespace predictimand
