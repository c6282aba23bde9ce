#pragma once

// Scenario files: JSON documents describing an illness-death simulation and,
// optionally, a validation run. Unknown keys are rejected.

#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "predictimand/simulator.hpp"
#include "predictimand/validation.hpp"

namespace predictimand {

using Json = nlohmann::ordered_json;

struct Scenario {
  IntensitySpec intensities;
  std::optional<ValidationOptions> validation;
};

namespace detail {

inline Error config_error(const std::string& where, const std::string& why) {
  return usage_error("InvalidConfig", (where.empty() ? std::string("/") : where) + ": " + why);
}

class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw config_error(path_, "expected an object");
  }

  void allow(std::initializer_list<const char*> keys) const {
    std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& [k, v] : j_.items())
      if (!ok.count(k)) throw config_error(path_ + "/" + k, "unknown key");
  }

  bool has(const char* key) const { return j_.contains(key); }
  std::string at(const char* key) const { return path_ + "/" + key; }
  const Json& raw(const char* key) const { return j_.at(key); }

  double number(const char* key, double fallback) const {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_number()) throw config_error(at(key), "expected a number");
    return v.get<double>();
  }
  std::uint64_t unsigned_int(const char* key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_number_unsigned()) throw config_error(at(key), "expected a non-negative integer");
    return v.get<std::uint64_t>();
  }
  std::string string(const char* key, std::string fallback) const {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_string()) throw config_error(at(key), "expected a string");
    return v.get<std::string>();
  }
  std::vector<double> numbers(const char* key) const {
    std::vector<double> out;
    if (!has(key)) return out;
    const auto& v = j_.at(key);
    if (!v.is_array()) throw config_error(at(key), "expected an array of numbers");
    for (const auto& x : v) {
      if (!x.is_number()) throw config_error(at(key), "expected an array of numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }
  std::vector<std::string> strings(const char* key) const {
    std::vector<std::string> out;
    if (!has(key)) return out;
    const auto& v = j_.at(key);
    if (!v.is_array()) throw config_error(at(key), "expected an array of strings");
    for (const auto& x : v) {
      if (!x.is_string()) throw config_error(at(key), "expected an array of strings");
      out.push_back(x.get<std::string>());
    }
    return out;
  }
  std::map<std::string, double> number_map(const char* key) const {
    std::map<std::string, double> out;
    if (!has(key)) return out;
    const auto& v = j_.at(key);
    if (!v.is_object()) throw config_error(at(key), "expected an object of numbers");
    for (const auto& [k, x] : v.items()) {
      if (!x.is_number()) throw config_error(at(key) + "/" + k, "expected a number");
      out[k] = x.get<double>();
    }
    return out;
  }

 private:
  const Json& j_;
  std::string path_;
};

inline void read_intensity(const Reader& r, Intensity& in) {
  in.rate = r.number("rate", 0.0);
  in.coefficients = r.number_map("coefficients");
  in.time_cuts = r.numbers("time_cuts");
  in.time_multipliers = r.numbers("time_multipliers");
}

inline Json intensity_json(const Intensity& in) {
  Json j;
  j["rate"] = in.rate;
  j["coefficients"] = Json::object();
  for (const auto& [k, v] : in.coefficients) j["coefficients"][k] = v;
  if (!in.time_cuts.empty() || !in.time_multipliers.empty()) {
    j["time_cuts"] = in.time_cuts;
    j["time_multipliers"] = in.time_multipliers;
  }
  return j;
}

inline std::string_view to_string(Distribution d) {
  switch (d) {
    case Distribution::Constant: return "constant";
    case Distribution::Normal: return "normal";
    case Distribution::Uniform: return "uniform";
    case Distribution::Bernoulli: return "bernoulli";
  }
  return "?";
}

}  // namespace detail

inline std::string_view to_string(TieMethod t) { return t == TieMethod::Efron ? "efron" : "breslow"; }

inline TieMethod parse_tie(std::string_view s) {
  if (s == "efron") return TieMethod::Efron;
  if (s == "breslow") return TieMethod::Breslow;
  throw usage_error("UnknownTieMethod", "tie method must be efron|breslow, got '" + std::string(s) + "'");
}

inline Design parse_design(std::string_view s) {
  if (s == "stops" || s == "stops-at-treatment") return Design::StopsAtTreatment;
  if (s == "continues" || s == "continues-after-treatment") return Design::ContinuesAfterTreatment;
  throw usage_error("UnknownDesign", "design must be stops|continues, got '" + std::string(s) + "'");
}

inline std::string_view design_key(Design d) { return d == Design::StopsAtTreatment ? "stops" : "continues"; }

/// Strategy options shared by the CLI flags and scenario targets.
inline StrategySpec strategy_from_json(const Json& j, const std::string& path) {
  const detail::Reader r(j, path);
  r.allow({"strategy", "method", "covariates", "tie", "tv_cuts", "weight_covariates", "numerator_covariates",
           "truncate", "weight_grid", "form", "horizon", "tolerance", "min_abs_bias"});
  StrategySpec s;
  try {
    if (!r.has("strategy")) throw detail::config_error(r.at("strategy"), "required");
    s.strategy = parse_strategy(r.string("strategy", ""));
    if (r.has("method")) s.method = parse_method(r.string("method", ""));
    s.ties = parse_tie(r.string("tie", "efron"));
    const auto form = r.string("form", "product-limit");
    if (form == "product-limit")
      s.form = SurvivalForm::ProductLimit;
    else if (form == "exponential")
      s.form = SurvivalForm::Exponential;
    else
      throw detail::config_error(r.at("form"), "must be product-limit|exponential");
  } catch (const Error& e) {
    if (e.code() == "InvalidConfig") throw;
    throw detail::config_error(path, e.what());
  }
  s.covariates = r.strings("covariates");
  s.tv_cuts = r.numbers("tv_cuts");
  s.weights.denominator_covariates = r.strings("weight_covariates");
  s.weights.numerator_covariates = r.strings("numerator_covariates");
  s.weights.grid = r.number("weight_grid", 0.0);
  s.horizon = r.number("horizon", 0.0);
  if (r.has("truncate")) {
    const auto t = r.numbers("truncate");
    if (t.size() != 2 || !(0.0 <= t[0] && t[0] < t[1] && t[1] <= 100.0))
      throw detail::config_error(r.at("truncate"), "expected [lower, upper] percentiles with 0 <= lower < upper <= 100");
    s.weights.truncation = Truncation{t[0], t[1]};
  }
  return s;
}

inline Json strategy_to_json(const StrategySpec& s) {
  Json j;
  j["strategy"] = std::string(to_string(s.strategy));
  if (s.method) j["method"] = std::string(to_string(*s.method));
  j["covariates"] = s.covariates;
  j["tie"] = std::string(to_string(s.ties));
  j["tv_cuts"] = s.tv_cuts;
  j["weight_covariates"] = s.weights.denominator_covariates;
  j["numerator_covariates"] = s.weights.numerator_covariates;
  if (s.weights.truncation)
    j["truncate"] = {s.weights.truncation->lower_percentile, s.weights.truncation->upper_percentile};
  j["weight_grid"] = s.weights.grid;
  j["form"] = s.form == SurvivalForm::ProductLimit ? "product-limit" : "exponential";
  if (s.horizon > 0.0) j["horizon"] = s.horizon;
  return j;
}

inline Scenario scenario_from_json(const Json& root) {
  const detail::Reader r(root, "");
  r.allow({"name", "design", "grid_step", "admin_time", "censor_rate", "baseline", "time_varying", "intensities",
           "validation"});
  Scenario sc;
  auto& s = sc.intensities;
  s.name = r.string("name", "scenario");
  try {
    s.design = parse_design(r.string("design", "continues"));
  } catch (const Error& e) {
    throw detail::config_error(r.at("design"), e.what());
  }
  s.grid_step = r.number("grid_step", 0.5);
  s.admin_time = r.number("admin_time", 10.0);
  s.censor_rate = r.number("censor_rate", 0.0);

  if (r.has("baseline")) {
    const auto& arr = r.raw("baseline");
    if (!arr.is_array()) throw detail::config_error(r.at("baseline"), "expected an array");
    for (std::size_t k = 0; k < arr.size(); ++k) {
      const detail::Reader c(arr[k], r.at("baseline") + "/" + std::to_string(k));
      c.allow({"name", "distribution", "value", "mean", "sd", "lower", "upper", "p"});
      BaselineCovariateSpec b;
      b.name = c.string("name", "");
      if (b.name.empty()) throw detail::config_error(c.at("name"), "required");
      const auto dist = c.string("distribution", "constant");
      if (dist == "constant") {
        b.distribution = Distribution::Constant;
        b.a = c.number("value", 0.0);
      } else if (dist == "normal") {
        b.distribution = Distribution::Normal;
        b.a = c.number("mean", 0.0);
        b.b = c.number("sd", 1.0);
      } else if (dist == "uniform") {
        b.distribution = Distribution::Uniform;
        b.a = c.number("lower", 0.0);
        b.b = c.number("upper", 1.0);
      } else if (dist == "bernoulli") {
        b.distribution = Distribution::Bernoulli;
        b.a = c.number("p", 0.5);
      } else {
        throw detail::config_error(c.at("distribution"), "must be constant|normal|uniform|bernoulli");
      }
      s.baseline.push_back(b);
    }
  }
  if (r.has("time_varying")) {
    const auto& arr = r.raw("time_varying");
    if (!arr.is_array()) throw detail::config_error(r.at("time_varying"), "expected an array");
    for (std::size_t k = 0; k < arr.size(); ++k) {
      const detail::Reader c(arr[k], r.at("time_varying") + "/" + std::to_string(k));
      c.allow({"name", "initial", "initial_from", "drift", "sd"});
      TimeVaryingCovariateSpec t;
      t.name = c.string("name", "");
      if (t.name.empty()) throw detail::config_error(c.at("name"), "required");
      t.initial = c.number("initial", 0.0);
      t.initial_from = c.string("initial_from", "");
      t.drift = c.number("drift", 0.0);
      t.sd = c.number("sd", 0.0);
      s.time_varying.push_back(t);
    }
  }
  if (!r.has("intensities")) throw detail::config_error(r.at("intensities"), "required");
  {
    const detail::Reader in(r.raw("intensities"), r.at("intensities"));
    in.allow({"treatment", "death_untreated", "death_treated"});
    auto one = [&](const char* key, Intensity& target, bool treated) {
      if (!in.has(key)) return;
      const detail::Reader c(in.raw(key), in.at(key));
      if (treated)
        c.allow({"rate", "coefficients", "time_cuts", "time_multipliers", "since_treatment_cuts",
                 "since_treatment_multipliers"});
      else
        c.allow({"rate", "coefficients", "time_cuts", "time_multipliers"});
      detail::read_intensity(c, target);
      if (treated) {
        s.death_treated.since_treatment_cuts = c.numbers("since_treatment_cuts");
        s.death_treated.since_treatment_multipliers = c.numbers("since_treatment_multipliers");
      }
    };
    one("treatment", s.treatment, false);
    one("death_untreated", s.death_untreated, false);
    one("death_treated", s.death_treated, true);
  }
  try {
    s.validate();
  } catch (const Error& e) {
    throw detail::config_error("", e.what());
  }

  if (r.has("validation")) {
    const detail::Reader v(r.raw("validation"), r.at("validation"));
    v.allow({"horizon", "profile", "targets", "truth_replications", "truth_seed"});
    ValidationOptions opt;
    opt.horizon = v.number("horizon", 5.0);
    opt.profile = v.number_map("profile");
    opt.truth_replications = v.unsigned_int("truth_replications", opt.truth_replications);
    opt.truth_seed = v.unsigned_int("truth_seed", opt.truth_seed);
    if (v.has("targets")) {
      const auto& arr = v.raw("targets");
      if (!arr.is_array()) throw detail::config_error(v.at("targets"), "expected an array");
      for (std::size_t k = 0; k < arr.size(); ++k) {
        const std::string path = v.at("targets") + "/" + std::to_string(k);
        ValidationTarget t;
        t.spec = strategy_from_json(arr[k], path);
        const detail::Reader tr(arr[k], path);
        t.tolerance = tr.number("tolerance", 0.02);
        if (tr.has("min_abs_bias")) t.min_abs_bias = tr.number("min_abs_bias", 0.0);
        opt.targets.push_back(std::move(t));
      }
    }
    sc.validation = std::move(opt);
  }
  return sc;
}

inline Json scenario_to_json(const Scenario& sc) {
  const auto& s = sc.intensities;
  Json j;
  j["name"] = s.name;
  j["design"] = std::string(design_key(s.design));
  j["grid_step"] = s.grid_step;
  j["admin_time"] = s.admin_time;
  j["censor_rate"] = s.censor_rate;
  j["baseline"] = Json::array();
  for (const auto& b : s.baseline) {
    Json c;
    c["name"] = b.name;
    c["distribution"] = std::string(detail::to_string(b.distribution));
    switch (b.distribution) {
      case Distribution::Constant: c["value"] = b.a; break;
      case Distribution::Normal: c["mean"] = b.a; c["sd"] = b.b; break;
      case Distribution::Uniform: c["lower"] = b.a; c["upper"] = b.b; break;
      case Distribution::Bernoulli: c["p"] = b.a; break;
    }
    j["baseline"].push_back(c);
  }
  j["time_varying"] = Json::array();
  for (const auto& t : s.time_varying) {
    Json c;
    c["name"] = t.name;
    if (t.initial_from.empty())
      c["initial"] = t.initial;
    else
      c["initial_from"] = t.initial_from;
    c["drift"] = t.drift;
    c["sd"] = t.sd;
    j["time_varying"].push_back(c);
  }
  j["intensities"]["treatment"] = detail::intensity_json(s.treatment);
  j["intensities"]["death_untreated"] = detail::intensity_json(s.death_untreated);
  auto td = detail::intensity_json(s.death_treated);
  if (!s.death_treated.since_treatment_cuts.empty() || !s.death_treated.since_treatment_multipliers.empty()) {
    td["since_treatment_cuts"] = s.death_treated.since_treatment_cuts;
    td["since_treatment_multipliers"] = s.death_treated.since_treatment_multipliers;
  }
  j["intensities"]["death_treated"] = td;
  if (sc.validation) {
    const auto& v = *sc.validation;
    Json vj;
    vj["horizon"] = v.horizon;
    vj["profile"] = Json::object();
    for (const auto& [k, x] : v.profile) vj["profile"][k] = x;
    vj["truth_replications"] = v.truth_replications;
    vj["truth_seed"] = v.truth_seed;
    vj["targets"] = Json::array();
    for (const auto& t : v.targets) {
      auto tj = strategy_to_json(t.spec);
      tj["tolerance"] = t.tolerance;
      if (t.min_abs_bias) tj["min_abs_bias"] = *t.min_abs_bias;
      vj["targets"].push_back(tj);
    }
    j["validation"] = vj;
  }
  return j;
}

/// Parses scenario text; syntax errors report line and column.
inline Scenario parse_scenario(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t k = 0; k + 1 < e.byte && k < text.size(); ++k) {
      if (text[k] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw usage_error("InvalidConfig", "line " + std::to_string(line) + ", column " + std::to_string(col) +
                                           ": malformed JSON");
  }
  return scenario_from_json(j);
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw usage_error("FileNotFound", "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_scenario(ss.str());
  } catch (const Error& e) {
    throw Error(e.kind(), e.code(), path + ": " + e.detail());
  }
}

namespace scenarios {

inline std::vector<ValidationTarget> all_strategy_targets(double tolerance) {
  std::vector<ValidationTarget> out;
  for (auto st : {Strategy::IgnoreTreatment, Strategy::Composite, Strategy::WhileUntreated}) {
    StrategySpec s;
    s.strategy = st;
    out.push_back({s, tolerance, std::nullopt});
  }
  for (auto m : kAllHypotheticalMethods) {
    StrategySpec s;
    s.strategy = Strategy::Hypothetical;
    s.method = m;
    out.push_back({s, tolerance, std::nullopt});
  }
  return out;
}

/// Constant intensities, no covariates: treatment 0.1, untreated death 0.2,
/// treated death 0.05.
inline Scenario s1() {
  Scenario sc;
  auto& s = sc.intensities;
  s.name = "s1";
  s.treatment.rate = 0.1;
  s.death_untreated.rate = 0.2;
  s.death_treated.rate = 0.05;
  s.admin_time = 10.0;
  ValidationOptions v;
  v.horizon = 5.0;
  v.targets = all_strategy_targets(0.02);
  sc.validation = v;
  return sc;
}

/// Time-varying confounding: a random-walk marker z(t) (updated every half
/// unit) raises both the treatment and the death intensities.
inline Scenario s2() {
  Scenario sc;
  auto& s = sc.intensities;
  s.name = "s2";
  s.grid_step = 0.5;
  s.time_varying.push_back({"z", 0.0, "", 0.0, 0.7});
  s.treatment = {0.05, {{"z", 1.0}}, {}, {}};
  s.death_untreated = {0.1, {{"z", 1.0}}, {}, {}};
  s.death_treated.rate = 0.05;
  s.death_treated.coefficients = {{"z", 1.0}};
  s.admin_time = 10.0;
  ValidationOptions v;
  v.horizon = 5.0;
  StrategySpec naive;
  naive.strategy = Strategy::Hypothetical;
  naive.method = HypotheticalMethod::CensorBaseline;
  StrategySpec ipcw = naive;
  ipcw.method = HypotheticalMethod::CensorIPCW;
  ipcw.weights.denominator_covariates = {"z"};
  // Unweighted censoring at treatment is expected to be biased here.
  v.targets = {{naive, 1.0, 0.03}, {ipcw, 0.02, std::nullopt}};
  sc.validation = v;
  return sc;
}

/// Age-dependent treatment: younger subjects start treatment sooner; death
/// intensities rise with age and drop on treatment.
inline Scenario s3() {
  Scenario sc;
  auto& s = sc.intensities;
  s.name = "s3";
  s.baseline.push_back({"age", Distribution::Uniform, 40.0, 80.0});
  // Rates are per unit at age 60, rescaled to age 0.
  s.treatment = {0.15 * std::exp(0.05 * 60.0), {{"age", -0.05}}, {}, {}};
  s.death_untreated = {0.08 * std::exp(-0.04 * 60.0), {{"age", 0.04}}, {}, {}};
  s.death_treated.rate = 0.03 * std::exp(-0.04 * 60.0);
  s.death_treated.coefficients = {{"age", 0.04}};
  s.admin_time = 10.0;
  ValidationOptions v;
  v.horizon = 5.0;
  v.profile = {{"age", 50.0}};
  StrategySpec ignore;
  ignore.strategy = Strategy::IgnoreTreatment;
  ignore.covariates = {"age"};
  StrategySpec hyp;
  hyp.strategy = Strategy::Hypothetical;
  hyp.method = HypotheticalMethod::CensorBaseline;
  hyp.covariates = {"age"};
  v.targets = {{ignore, 0.02, std::nullopt}, {hyp, 0.02, std::nullopt}};
  sc.validation = v;
  return sc;
}

}  // namespace scenarios

inline Scenario builtin_scenario(std::string_view name) {
  if (name == "s1") return scenarios::s1();
  if (name == "s2") return scenarios::s2();
  if (name == "s3") return scenarios::s3();
  throw usage_error("UnknownScenario", "builtin scenarios are s1, s2, s3; got '" + std::string(name) + "'");
}

}  // namespace predictimand
