#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "predictimand/dataset.hpp"

namespace predictimand {

// How hazard increments dH(t_k) are turned into survival:
//   Exponential   S(t) = exp(-sum dH)            (Breslow-type plug-in)
//   ProductLimit  S(t) = prod (1 - dH)           (Kaplan-Meier / Aalen-Johansen type)
enum class SurvivalForm { Exponential, ProductLimit };

namespace detail {
// Right-continuous step lookup: value at the largest time <= t, `before` if none.
inline double step_value(const std::vector<double>& times, const std::vector<double>& values, double t,
                         double before) {
  auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return before;
  return values[static_cast<std::size_t>(it - times.begin()) - 1];
}
}  // namespace detail

struct SurvivalCurve {
  std::vector<double> times;  // starts at 0
  std::vector<double> surv;

  double at(double t) const { return detail::step_value(times, surv, t, 1.0); }
};

struct RiskCurve {
  std::vector<double> times;  // starts at 0, ends at the horizon
  std::vector<double> risk;
  std::string strategy;
  Profile profile;
  double horizon = 0.0;
  std::vector<std::string> warnings;

  double at(double t) const { return detail::step_value(times, risk, t, 0.0); }
  double final_risk() const { return risk.empty() ? 0.0 : risk.back(); }
};

inline SurvivalCurve survival_from_increments(const std::vector<double>& times, const std::vector<double>& dh,
                                              SurvivalForm form) {
  SurvivalCurve c;
  c.times.reserve(times.size() + 1);
  c.surv.reserve(times.size() + 1);
  c.times.push_back(0.0);
  c.surv.push_back(1.0);
  double cum = 0.0, prod = 1.0;
  for (std::size_t k = 0; k < times.size(); ++k) {
    double s;
    if (form == SurvivalForm::Exponential) {
      cum += dh[k];
      s = std::exp(-cum);
    } else {
      prod *= std::max(0.0, 1.0 - dh[k]);
      s = prod;
    }
    if (times[k] == 0.0) {
      c.surv.back() = s;
      continue;
    }
    c.times.push_back(times[k]);
    c.surv.push_back(s);
  }
  return c;
}

/// Restricts a curve to [0, horizon] and closes it with a point at the horizon.
inline void cut_at_horizon(RiskCurve& c, double horizon) {
  c.horizon = horizon;
  std::size_t keep = 0;
  while (keep < c.times.size() && c.times[keep] <= horizon) ++keep;
  c.times.resize(keep);
  c.risk.resize(keep);
  if (c.times.empty()) {
    c.times.push_back(0.0);
    c.risk.push_back(0.0);
  }
  if (c.times.back() < horizon) {
    c.times.push_back(horizon);
    c.risk.push_back(c.risk.back());
  }
}

inline RiskCurve risk_from_survival(const SurvivalCurve& s, double horizon, std::string strategy = {}) {
  RiskCurve c;
  c.strategy = std::move(strategy);
  c.times = s.times;
  c.risk.reserve(s.surv.size());
  for (double v : s.surv) c.risk.push_back(std::clamp(1.0 - v, 0.0, 1.0));
  cut_at_horizon(c, horizon);
  return c;
}

}  // namespace predictimand
