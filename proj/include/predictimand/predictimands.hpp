#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "predictimand/competing.hpp"
#include "predictimand/cox.hpp"
#include "predictimand/curves.hpp"
#include "predictimand/dataset.hpp"
#include "predictimand/format.hpp"
#include "predictimand/weights.hpp"

namespace predictimand {

// The four ways of handling treatment started after baseline.
enum class Strategy { IgnoreTreatment, Composite, WhileUntreated, Hypothetical };

// Estimators of the hypothetical (never treated) risk.
enum class HypotheticalMethod {
  CensorBaseline,  // censor at treatment start, adjust for X(0) only
  ModelBaseline,   // A(t) as a time-dependent covariate, predict with A = 0
  CensorIPCW,      // censor at treatment start, weight by inverse P(untreated | history)
  ModelIPTW,       // marginal structural Cox model with IPT weights, predict with A = 0
};

inline constexpr HypotheticalMethod kAllHypotheticalMethods[] = {
    HypotheticalMethod::CensorBaseline, HypotheticalMethod::ModelBaseline, HypotheticalMethod::CensorIPCW,
    HypotheticalMethod::ModelIPTW};

struct WeightOptions {
  std::vector<std::string> denominator_covariates;  // X(0) and X(t) driving treatment
  std::vector<std::string> numerator_covariates;    // empty: intercept-only numerator
  std::optional<Truncation> truncation;
  // When > 0, episodes are split at multiples of this step before weighting so
  // weights are re-evaluated on a finer grid than the measurement episodes.
  double grid = 0.0;
};

struct StrategySpec {
  Strategy strategy = Strategy::IgnoreTreatment;
  std::optional<HypotheticalMethod> method;  // required iff Hypothetical
  std::vector<std::string> covariates;       // X(0) terms; empty: the profile's keys
  TieMethod ties = TieMethod::Efron;
  std::vector<double> tv_cuts;  // step-function treatment coefficient (model-based methods)
  WeightOptions weights;
  double horizon = 0.0;
  SurvivalForm form = SurvivalForm::ProductLimit;
};

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::IgnoreTreatment: return "ignore";
    case Strategy::Composite: return "composite";
    case Strategy::WhileUntreated: return "while-untreated";
    case Strategy::Hypothetical: return "hypothetical";
  }
  return "?";
}

inline std::string_view to_string(HypotheticalMethod m) {
  switch (m) {
    case HypotheticalMethod::CensorBaseline: return "censor";
    case HypotheticalMethod::ModelBaseline: return "model";
    case HypotheticalMethod::CensorIPCW: return "censor-ipcw";
    case HypotheticalMethod::ModelIPTW: return "model-iptw";
  }
  return "?";
}

inline Strategy parse_strategy(std::string_view s) {
  for (auto v : {Strategy::IgnoreTreatment, Strategy::Composite, Strategy::WhileUntreated, Strategy::Hypothetical})
    if (to_string(v) == s) return v;
  throw usage_error("UnknownStrategy", "strategy must be ignore|composite|while-untreated|hypothetical, got '" +
                                           std::string(s) + "'");
}

inline HypotheticalMethod parse_method(std::string_view s) {
  for (auto v : kAllHypotheticalMethods)
    if (to_string(v) == s) return v;
  throw usage_error("UnknownMethod",
                    "method must be censor|model|censor-ipcw|model-iptw, got '" + std::string(s) + "'");
}

inline std::string label(const StrategySpec& spec) {
  std::string out(to_string(spec.strategy));
  if (spec.strategy == Strategy::Hypothetical && spec.method) out += ":" + std::string(to_string(*spec.method));
  return out;
}

inline bool needs_post_treatment_followup(const StrategySpec& spec) {
  if (spec.strategy == Strategy::IgnoreTreatment) return true;
  return spec.strategy == Strategy::Hypothetical && spec.method &&
         (*spec.method == HypotheticalMethod::ModelBaseline || *spec.method == HypotheticalMethod::ModelIPTW);
}

/// Everything needed to predict a strategy's risk curve for any profile.
struct FittedStrategy {
  StrategySpec spec;
  std::optional<CoxModel> outcome;        // every strategy except while-untreated
  std::optional<CauseSpecificPair> pair;  // while-untreated
  std::optional<CoxModel> weight_numerator, weight_denominator;
  std::optional<WeightDiagnostics> weight_diagnostics;
  double last_event_time = 0.0;
  double last_untreated_at_risk = 0.0;
};

namespace detail {

inline void check_spec(const StrategySpec& spec, const CountingProcessDataset& ds) {
  if (spec.strategy == Strategy::Hypothetical && !spec.method)
    throw usage_error("MissingMethod", "the hypothetical strategy needs a method");
  if (spec.strategy != Strategy::Hypothetical && spec.method)
    throw usage_error("UnexpectedMethod", "a method only applies to the hypothetical strategy");
  if (needs_post_treatment_followup(spec) && ds.design == Design::StopsAtTreatment)
    throw data_error("DesignMismatch", "strategy " + label(spec) + " needs follow-up after treatment start");
}

inline CountingProcessDataset on_grid(const CountingProcessDataset& ds, double step) {
  if (!(step > 0.0)) return ds;
  double last = 0.0;
  for (const auto& s : ds.subjects) last = std::max(last, s.end_time());
  std::vector<double> cuts;
  for (double t = step; t < last; t += step) cuts.push_back(t);
  return refine_episodes(ds, cuts);
}

inline double last_untreated_time(const CountingProcessDataset& ds) {
  double t = 0.0;
  for (const auto& s : ds.subjects)
    for (const auto& e : s.episodes)
      if (!e.treated) t = std::max(t, e.tstop);
  return t;
}

}  // namespace detail

inline FittedStrategy fit_strategy(const CountingProcessDataset& ds, const StrategySpec& spec,
                                   const FitOptions& opt = {}) {
  detail::check_spec(spec, ds);
  FittedStrategy out;
  out.spec = spec;
  out.last_untreated_at_risk = detail::last_untreated_time(ds);

  CoxSpec cox;
  cox.event_code = Status::Event;
  cox.covariate_terms = spec.covariates;
  cox.ties = spec.ties;

  auto weighted = [&](const CountingProcessDataset& data, WeightMode mode) {
    const auto split = split_at_treatment(data);
    if (count_status(split, Status::TreatmentStart) == 0) return;  // nobody treated: weights are 1
    out.weight_numerator = fit_treatment_hazard(split, spec.weights.numerator_covariates, spec.ties, opt);
    out.weight_denominator = fit_treatment_hazard(split, spec.weights.denominator_covariates, spec.ties, opt);
    const auto table = stabilized_weights(data, *out.weight_numerator, *out.weight_denominator, mode,
                                          spec.weights.truncation);
    out.weight_diagnostics = table.diagnostics;
    cox.weights = table.shared();
  };

  switch (spec.strategy) {
    case Strategy::IgnoreTreatment:
      out.outcome = fit(ds, cox, opt);
      break;
    case Strategy::Composite:
      out.outcome = fit(compose_outcome(ds), cox, opt);
      break;
    case Strategy::WhileUntreated:
      out.pair = fit_cause_specific(ds, cox, opt);
      break;
    case Strategy::Hypothetical:
      switch (*spec.method) {
        case HypotheticalMethod::CensorBaseline:
          out.outcome = fit(split_at_treatment(ds), cox, opt);
          break;
        case HypotheticalMethod::ModelBaseline:
          cox.treatment = TreatmentTerm{spec.tv_cuts};
          out.outcome = fit(ds, cox, opt);
          break;
        case HypotheticalMethod::CensorIPCW: {
          const auto data = detail::on_grid(split_at_treatment(ds), spec.weights.grid);
          weighted(data, WeightMode::IPCW);
          out.outcome = fit(data, cox, opt);
          break;
        }
        case HypotheticalMethod::ModelIPTW: {
          // Outcome model: X(0) and A(t) only; X(t) enters through the weights.
          const auto data = detail::on_grid(ds, spec.weights.grid);
          weighted(data, WeightMode::IPTW);
          cox.treatment = TreatmentTerm{spec.tv_cuts};
          out.outcome = fit(data, cox, opt);
          break;
        }
      }
      break;
  }
  const auto& times = out.outcome ? out.outcome->baseline.times : out.pair->event.baseline.times;
  out.last_event_time = times.empty() ? 0.0 : times.back();
  return out;
}

/// Risk curve on [0, horizon] for a profile; curves are computed on the full
/// event-time grid, then cut at the horizon.
inline RiskCurve predict_strategy(const FittedStrategy& fitted, const Profile& profile, double horizon) {
  RiskCurve c;
  if (fitted.pair) {
    c = cuminc(*fitted.pair, profile, horizon, fitted.spec.form);
  } else {
    c = risk_from_survival(predict_survival(*fitted.outcome, profile, never_treated(), fitted.spec.form), horizon);
  }
  c.strategy = label(fitted.spec);
  c.profile = profile;
  if (horizon > fitted.last_event_time)
    c.warnings.push_back("horizon beyond last event time " + format_number(fitted.last_event_time) +
                         "; curve is flat after the last jump");
  const bool untreated_target =
      fitted.spec.strategy == Strategy::Hypothetical || fitted.spec.strategy == Strategy::WhileUntreated;
  if (untreated_target && fitted.last_untreated_at_risk < horizon)
    c.warnings.push_back("positivity: no untreated person-time at risk after t = " +
                         format_number(fitted.last_untreated_at_risk) + "; consider a shorter horizon");
  return c;
}

inline StrategySpec with_profile_covariates(StrategySpec spec, const Profile& profile) {
  if (spec.covariates.empty())
    for (const auto& [name, value] : profile) {
      (void)value;
      spec.covariates.push_back(name);
    }
  return spec;
}

inline RiskCurve estimate(const CountingProcessDataset& ds, const StrategySpec& spec, const Profile& profile,
                          const FitOptions& opt = {}) {
  const auto full = with_profile_covariates(spec, profile);
  return predict_strategy(fit_strategy(ds, full, opt), profile, spec.horizon);
}

struct StrategyResult {
  StrategySpec spec;
  std::string label;
  std::optional<RiskCurve> curve;
  std::optional<Error> error;
};

/// All four strategies (the hypothetical one once per requested method) on one
/// dataset. Failures are reported per strategy; the others still run.
inline std::vector<StrategyResult> estimate_all(
    const CountingProcessDataset& ds, const StrategySpec& shared, const Profile& profile,
    const std::vector<HypotheticalMethod>& methods = {std::begin(kAllHypotheticalMethods),
                                                      std::end(kAllHypotheticalMethods)},
    const FitOptions& opt = {}) {
  std::vector<StrategySpec> specs;
  for (auto s : {Strategy::IgnoreTreatment, Strategy::Composite, Strategy::WhileUntreated}) {
    auto spec = shared;
    spec.strategy = s;
    spec.method.reset();
    specs.push_back(spec);
  }
  for (auto m : methods) {
    auto spec = shared;
    spec.strategy = Strategy::Hypothetical;
    spec.method = m;
    specs.push_back(spec);
  }
  std::vector<StrategyResult> out;
  for (const auto& spec : specs) {
    StrategyResult r{spec, label(spec), std::nullopt, std::nullopt};
    try {
      r.curve = estimate(ds, spec, profile, opt);
    } catch (const Error& e) {
      r.error = e;
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace predictimand
