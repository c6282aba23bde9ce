#pragma once

// JSON and CSV exchange formats for fitted models, weights, curves and reports.

#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "predictimand/cox.hpp"
#include "predictimand/format.hpp"
#include "predictimand/predictimands.hpp"
#include "predictimand/scenario.hpp"
#include "predictimand/validation.hpp"
#include "predictimand/weights.hpp"

namespace predictimand {

namespace detail {

inline Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline double number_or_inf(const Json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

inline Error model_error(const std::string& why) { return usage_error("InvalidModelFile", why); }

}  // namespace detail

inline std::string profile_string(const Profile& p) {
  std::string out;
  for (const auto& [k, v] : p) {
    if (!out.empty()) out += ';';
    out += k + "=" + format_number(v);
  }
  return out;
}

inline Json model_to_json(const CoxModel& m) {
  Json j;
  j["event"] = m.spec.event_code == Status::TreatmentStart ? "treatment-start" : "event";
  j["tie"] = std::string(to_string(m.spec.ties));
  j["covariate_terms"] = m.spec.covariate_terms;
  j["treatment_cuts"] = m.spec.treatment ? Json(m.spec.treatment->cuts) : Json(nullptr);
  j["weighted"] = static_cast<bool>(m.spec.weights);
  j["terms"] = Json::array();
  for (std::size_t k = 0; k < m.columns.size(); ++k) {
    const auto& c = m.columns[k];
    Json t;
    t["name"] = c.name;
    t["beta"] = m.beta[static_cast<Eigen::Index>(k)];
    if (c.source == TermColumn::Source::Treatment) {
      t["source"] = "treatment";
      t["segment"] = {c.segment_lo, detail::finite_or_null(c.segment_hi)};
    } else {
      t["source"] = "covariate";
      t["covariate"] = c.covariate;
      if (c.level >= 0) t["level"] = c.level;
    }
    j["terms"].push_back(t);
  }
  j["covariates"] = Json::array();
  for (const auto& c : m.covariates) {
    Json cj;
    cj["name"] = c.name;
    cj["kind"] = c.kind == CovariateKind::Baseline ? "baseline" : "time-varying";
    cj["levels"] = c.levels;
    j["covariates"].push_back(cj);
  }
  j["aliased"] = m.aliased;
  j["degenerate"] = m.degenerate;
  j["events"] = m.events;
  j["event_rows"] = m.event_rows;
  j["last_followup"] = m.last_followup;
  j["convergence"] = {{"iterations", m.convergence.iterations},
                      {"gradient_norm", m.convergence.gradient_norm},
                      {"loglik", m.convergence.loglik},
                      {"converged", m.convergence.converged}};
  Json info = Json::array();
  for (Eigen::Index r = 0; r < m.information.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.information.cols(); ++c) row.push_back(m.information(r, c));
    info.push_back(row);
  }
  j["information"] = info;
  j["baseline"] = {{"time", m.baseline.times}, {"increment", m.baseline.increments}};
  return j;
}

inline CoxModel model_from_json(const Json& j) {
  try {
    CoxModel m;
    m.spec.event_code = j.at("event").get<std::string>() == "treatment-start" ? Status::TreatmentStart : Status::Event;
    m.spec.ties = parse_tie(j.at("tie").get<std::string>());
    m.spec.covariate_terms = j.at("covariate_terms").get<std::vector<std::string>>();
    if (!j.at("treatment_cuts").is_null())
      m.spec.treatment = TreatmentTerm{j.at("treatment_cuts").get<std::vector<double>>()};
    const auto& terms = j.at("terms");
    m.beta.resize(static_cast<Eigen::Index>(terms.size()));
    for (std::size_t k = 0; k < terms.size(); ++k) {
      const auto& t = terms[k];
      TermColumn c;
      c.name = t.at("name").get<std::string>();
      m.beta[static_cast<Eigen::Index>(k)] = t.at("beta").get<double>();
      if (t.at("source").get<std::string>() == "treatment") {
        c.source = TermColumn::Source::Treatment;
        c.segment_lo = t.at("segment").at(0).get<double>();
        c.segment_hi = detail::number_or_inf(t.at("segment").at(1));
      } else {
        c.covariate = t.at("covariate").get<std::string>();
        c.level = t.value("level", -1);
      }
      m.columns.push_back(std::move(c));
    }
    for (const auto& cj : j.at("covariates")) {
      CovariateInfo c;
      c.name = cj.at("name").get<std::string>();
      c.kind = cj.at("kind").get<std::string>() == "baseline" ? CovariateKind::Baseline : CovariateKind::TimeVarying;
      c.levels = cj.at("levels").get<std::vector<std::string>>();
      m.covariates.push_back(std::move(c));
    }
    m.aliased = j.at("aliased").get<std::vector<std::string>>();
    m.degenerate = j.at("degenerate").get<bool>();
    m.events = j.at("events").get<double>();
    m.event_rows = j.at("event_rows").get<std::size_t>();
    m.last_followup = j.at("last_followup").get<double>();
    const auto& cv = j.at("convergence");
    m.convergence = {cv.at("iterations").get<int>(), cv.at("gradient_norm").get<double>(),
                     cv.at("loglik").get<double>(), cv.at("converged").get<bool>()};
    const auto& info = j.at("information");
    const auto p = static_cast<Eigen::Index>(info.size());
    m.information.resize(p, p);
    for (Eigen::Index r = 0; r < p; ++r)
      for (Eigen::Index c = 0; c < p; ++c)
        m.information(r, c) = info.at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(c)).get<double>();
    m.baseline.times = j.at("baseline").at("time").get<std::vector<double>>();
    m.baseline.increments = j.at("baseline").at("increment").get<std::vector<double>>();
    if (m.baseline.times.size() != m.baseline.increments.size())
      throw detail::model_error("baseline time/increment length mismatch");
    double cum = 0.0;
    for (double d : m.baseline.increments) m.baseline.cumulative.push_back(cum += d);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw detail::model_error(std::string("malformed model: ") + e.what());
  }
}

inline Json diagnostics_to_json(const WeightDiagnostics& d) {
  Json j;
  j["mean"] = d.mean;
  j["min"] = d.min;
  j["max"] = d.max;
  j["ess"] = d.ess;
  j["episodes"] = d.episodes;
  j["at_risk_mean_min"] = d.at_risk_mean_min;
  j["at_risk_mean_max"] = d.at_risk_mean_max;
  j["at_risk_mean_within_0.8_1.2"] = d.at_risk_mean_min >= 0.8 && d.at_risk_mean_max <= 1.2;
  j["truncation_bounds"] = d.lower_bound ? Json{*d.lower_bound, *d.upper_bound} : Json(nullptr);
  return j;
}

inline WeightDiagnostics diagnostics_from_json(const Json& j) {
  WeightDiagnostics d;
  d.mean = j.at("mean").get<double>();
  d.min = j.at("min").get<double>();
  d.max = j.at("max").get<double>();
  d.ess = j.at("ess").get<double>();
  d.episodes = j.at("episodes").get<std::size_t>();
  d.at_risk_mean_min = j.at("at_risk_mean_min").get<double>();
  d.at_risk_mean_max = j.at("at_risk_mean_max").get<double>();
  if (!j.at("truncation_bounds").is_null()) {
    d.lower_bound = j.at("truncation_bounds").at(0).get<double>();
    d.upper_bound = j.at("truncation_bounds").at(1).get<double>();
  }
  return d;
}

inline Json fitted_to_json(const FittedStrategy& f) {
  Json j;
  j["label"] = label(f.spec);
  j["spec"] = strategy_to_json(f.spec);
  auto opt_model = [](const std::optional<CoxModel>& m) { return m ? model_to_json(*m) : Json(nullptr); };
  j["outcome"] = opt_model(f.outcome);
  j["event_model"] = f.pair ? model_to_json(f.pair->event) : Json(nullptr);
  j["treatment_model"] = f.pair ? opt_model(f.pair->treatment) : Json(nullptr);
  j["weight_numerator"] = opt_model(f.weight_numerator);
  j["weight_denominator"] = opt_model(f.weight_denominator);
  j["weight_diagnostics"] = f.weight_diagnostics ? diagnostics_to_json(*f.weight_diagnostics) : Json(nullptr);
  j["last_event_time"] = f.last_event_time;
  j["last_untreated_at_risk"] = f.last_untreated_at_risk;
  return j;
}

inline FittedStrategy fitted_from_json(const Json& j) {
  try {
    FittedStrategy f;
    f.spec = strategy_from_json(j.at("spec"), "/spec");
    auto opt_model = [&](const char* key) -> std::optional<CoxModel> {
      if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
      return model_from_json(j.at(key));
    };
    f.outcome = opt_model("outcome");
    if (auto ev = opt_model("event_model")) f.pair = CauseSpecificPair{*ev, opt_model("treatment_model")};
    f.weight_numerator = opt_model("weight_numerator");
    f.weight_denominator = opt_model("weight_denominator");
    if (!j.at("weight_diagnostics").is_null()) f.weight_diagnostics = diagnostics_from_json(j.at("weight_diagnostics"));
    f.last_event_time = j.at("last_event_time").get<double>();
    f.last_untreated_at_risk = j.at("last_untreated_at_risk").get<double>();
    if (!f.outcome && !f.pair) throw detail::model_error("model file holds neither an outcome model nor a pair");
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw detail::model_error(std::string("malformed model: ") + e.what());
  }
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw usage_error("FileNotFound", "cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw usage_error("InvalidJson", path + ": " + e.what());
  }
}

/// id,tstart,tstop,weight
inline void write_weights_csv(std::ostream& out, const CountingProcessDataset& ds, const WeightTable& w) {
  out << "id,tstart,tstop,weight\n";
  for (std::size_t i = 0; i < ds.subjects.size(); ++i)
    for (std::size_t k = 0; k < ds.subjects[i].episodes.size(); ++k) {
      const auto& e = ds.subjects[i].episodes[k];
      out << ds.subjects[i].id << ',' << format_number(e.tstart) << ',' << format_number(e.tstop) << ','
          << format_number(w.values[i][k]) << '\n';
    }
}

/// strategy,profile,time,risk; one block per curve.
inline void write_curves_csv(std::ostream& out, const std::vector<RiskCurve>& curves) {
  out << "strategy,profile,time,risk\n";
  for (const auto& c : curves) {
    const auto p = profile_string(c.profile);
    for (std::size_t k = 0; k < c.times.size(); ++k)
      out << c.strategy << ',' << p << ',' << format_number(c.times[k]) << ',' << format_number(c.risk[k]) << '\n';
  }
}

inline Json curve_to_json(const RiskCurve& c) {
  Json j;
  j["strategy"] = c.strategy;
  j["profile"] = Json::object();
  for (const auto& [k, v] : c.profile) j["profile"][k] = v;
  j["horizon"] = c.horizon;
  j["risk_at_horizon"] = c.final_risk();
  j["warnings"] = c.warnings;
  return j;
}

inline void write_schoenfeld_csv(std::ostream& out, const SchoenfeldTable& t) {
  out << "time,id";
  for (const auto& n : t.terms) out << ',' << n;
  out << '\n';
  for (const auto& r : t.rows) {
    out << format_number(r.time) << ',' << r.subject_id;
    for (double v : r.values) out << ',' << format_number(v);
    out << '\n';
  }
}

inline Json truth_to_json(const TruthOracle& t) {
  Json j;
  j["method"] = t.method == TruthMethod::Analytic ? "analytic" : "monte-carlo";
  j["horizon"] = t.horizon;
  j["replications"] = t.replications;
  j["at_horizon"] = Json::object();
  j["standard_error"] = Json::object();
  for (const char* name : kStrategyNames) {
    j["at_horizon"][name] = t.at_horizon(name);
    j["standard_error"][name] = t.standard_error.at(name);
  }
  return j;
}

inline void write_truth_csv(std::ostream& out, const TruthOracle& t) {
  out << "strategy,time,risk\n";
  for (const char* name : kStrategyNames) {
    const auto& c = t.curves.at(name);
    for (std::size_t k = 0; k < t.times.size(); ++k)
      out << name << ',' << format_number(t.times[k]) << ',' << format_number(c[k]) << '\n';
  }
}

inline Json report_to_json(const ValidationReport& r) {
  Json j;
  j["scenario"] = r.scenario;
  j["n"] = r.n;
  j["seeds"] = r.seeds;
  j["horizon"] = r.horizon;
  j["profile"] = Json::object();
  for (const auto& [k, v] : r.profile) j["profile"][k] = v;
  j["truth"] = truth_to_json(r.truth);
  j["entries"] = Json::array();
  for (const auto& e : r.entries) {
    Json ej;
    ej["label"] = e.label;
    ej["truth"] = e.truth;
    ej["mean"] = e.mean;
    ej["bias"] = e.bias;
    ej["rmse"] = e.rmse;
    ej["tolerance"] = e.tolerance;
    ej["min_abs_bias"] = e.min_abs_bias ? Json(*e.min_abs_bias) : Json(nullptr);
    ej["estimates"] = Json::array();
    for (const auto& v : e.estimates) ej["estimates"].push_back(v ? Json(*v) : Json(nullptr));
    Json errs = Json::array();
    for (std::size_t s = 0; s < e.errors.size(); ++s)
      if (!e.errors[s].empty()) errs.push_back({{"seed", r.seeds[s]}, {"error", e.errors[s]}});
    ej["errors"] = errs;
    ej["pass"] = e.pass;
    j["entries"].push_back(ej);
  }
  j["pass"] = r.pass;
  return j;
}

}  // namespace predictimand
