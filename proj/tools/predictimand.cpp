// predictimand: fit, predict, simulate, validate, weights.
//
// Exit codes: 0 ok, 1 validation tolerance failed, 2 usage/config, 3 data, 4 numeric.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "predictimand.hpp"

namespace fs = std::filesystem;
using namespace predictimand;

namespace {

struct Args {
  std::string data, out = ".", model, scenario;
  std::vector<std::string> tv_columns;
  std::string design, impute;
  std::string strategy, method, tie = "efron", form;
  std::vector<double> tv_cuts;
  std::vector<std::string> covariates, weight_covariates, numerator_covariates;
  std::vector<double> truncate;
  double weight_grid = 0.0;
  double horizon = 0.0;
  std::vector<std::string> profiles;
  bool residuals = false, all_strategies = false;
  std::string mode = "ipcw";
  std::size_t n = 1000, seeds = 20;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw usage_error("CannotWrite", "cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const Json& j) { write_file(path, j.dump(2) + "\n"); }

// Parses "k=v,k=v"; values are numbers or categorical level labels.
Profile parse_profile(const std::string& text, const std::vector<CovariateInfo>& covariates) {
  Profile p;
  for (const auto& item : split(text, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0)
      throw usage_error("InvalidProfile", "profile entries must look like name=value, got '" + item + "'");
    const auto name = item.substr(0, eq), value = item.substr(eq + 1);
    const CovariateInfo* info = nullptr;
    for (const auto& c : covariates)
      if (c.name == name) info = &c;
    if (info && info->categorical()) {
      auto it = std::find(info->levels.begin(), info->levels.end(), value);
      if (it == info->levels.end())
        throw data_error("UnknownLevel", "profile: '" + value + "' is not a level of " + name);
      p[name] = static_cast<double>(it - info->levels.begin());
    } else if (auto v = parse_number(value)) {
      p[name] = *v;
    } else {
      throw usage_error("InvalidProfile", "profile: value for " + name + " must be a number, got '" + value + "'");
    }
  }
  return p;
}

CountingProcessDataset load_data(const Args& a) {
  if (a.data.empty()) throw usage_error("MissingData", "--data is required");
  auto schema = infer_schema(a.data, a.tv_columns);
  std::optional<Design> design;
  if (!a.design.empty()) design = parse_design(a.design);
  auto ds = ingest_csv(a.data, schema, design);
  if (a.impute == "locf")
    ds = impute_tv_covariates(ds, ImputationPolicy::LOCF);
  else if (a.impute == "median")
    ds = impute_tv_covariates(ds, ImputationPolicy::MedianFallback);
  else if (!a.impute.empty())
    throw usage_error("UnknownImputation", "--impute must be locf|median");
  return ds;
}

StrategySpec strategy_spec(const Args& a, const CountingProcessDataset* ds) {
  if (a.strategy.empty()) throw usage_error("MissingStrategy", "--strategy is required");
  StrategySpec s;
  s.strategy = parse_strategy(a.strategy);
  if (!a.method.empty()) s.method = parse_method(a.method);
  s.ties = parse_tie(a.tie);
  s.tv_cuts = a.tv_cuts;
  s.covariates = a.covariates;
  if (s.covariates.empty() && ds)
    s.covariates = ds->schema.names(CovariateKind::Baseline);
  s.weights.denominator_covariates = a.weight_covariates;
  s.weights.numerator_covariates = a.numerator_covariates;
  s.weights.grid = a.weight_grid;
  if (!a.truncate.empty()) {
    if (a.truncate.size() != 2 || !(0.0 <= a.truncate[0] && a.truncate[0] < a.truncate[1] && a.truncate[1] <= 100.0))
      throw usage_error("InvalidTruncation", "--truncate takes lower,upper percentiles in [0, 100]");
    s.weights.truncation = Truncation{a.truncate[0], a.truncate[1]};
  }
  if (a.form == "exponential")
    s.form = SurvivalForm::Exponential;
  else if (a.form.empty() || a.form == "product-limit")
    s.form = SurvivalForm::ProductLimit;
  else
    throw usage_error("UnknownForm", "--form must be product-limit|exponential");
  s.horizon = a.horizon;
  return s;
}

Scenario resolve_scenario(const std::string& name) {
  if (name.empty()) throw usage_error("MissingScenario", "--scenario is required");
  if (name == "s1" || name == "s2" || name == "s3") return builtin_scenario(name);
  return load_scenario(name);
}

// ---- subcommands ----

int cmd_fit(const Args& a) {
  const auto ds = load_data(a);
  const auto spec = strategy_spec(a, &ds);
  const auto fitted = fit_strategy(ds, spec);
  const fs::path out(a.out);
  write_json(out / "model.json", fitted_to_json(fitted));
  if (fitted.pair) {
    write_json(out / "cause_event.json", model_to_json(fitted.pair->event));
    if (fitted.pair->treatment) write_json(out / "cause_treatment.json", model_to_json(*fitted.pair->treatment));
  }
  if (fitted.weight_diagnostics) write_json(out / "weight_diagnostics.json", diagnostics_to_json(*fitted.weight_diagnostics));
  if (a.residuals && fitted.outcome) {
    std::ostringstream os;
    write_schoenfeld_csv(os, schoenfeld_residuals(*fitted.outcome, ds));
    write_file(out / "schoenfeld.csv", os.str());
  }
  std::cout << "fitted " << label(spec) << " -> " << (out / "model.json").string() << "\n";
  return 0;
}

std::vector<CovariateInfo> covariates_of(const FittedStrategy& f) {
  if (f.outcome) return f.outcome->covariates;
  return f.pair->event.covariates;
}

int cmd_predict(const Args& a) {
  if (!(a.horizon > 0.0)) throw usage_error("MissingHorizon", "--horizon must be > 0");
  // No --profile: one empty profile, enough for models without covariates.
  const auto profiles = a.profiles.empty() ? std::vector<std::string>{""} : a.profiles;
  std::vector<RiskCurve> curves;
  if (a.all_strategies) {
    const auto ds = load_data(a);
    Args base = a;
    if (base.strategy.empty()) base.strategy = "ignore";
    auto shared = strategy_spec(base, &ds);
    std::vector<HypotheticalMethod> methods;
    if (!a.method.empty())
      methods.push_back(parse_method(a.method));
    else
      methods.assign(std::begin(kAllHypotheticalMethods), std::end(kAllHypotheticalMethods));
    // Methods that need post-treatment follow-up cannot run on stop-at-treatment data.
    for (const auto& text : profiles) {
      const auto profile = parse_profile(text, ds.schema.covariates);
      for (const auto& r : estimate_all(ds, shared, profile, methods)) {
        if (r.error) {
          std::cerr << "warning: " << r.label << ": " << r.error->what() << "\n";
          continue;
        }
        curves.push_back(*r.curve);
      }
    }
    if (curves.empty()) throw data_error("NoStrategyFitted", "every strategy failed on this dataset");
  } else {
    if (a.model.empty()) throw usage_error("MissingModel", "--model is required (or use --all-strategies with --data)");
    const auto fitted = fitted_from_json(read_json_file(a.model));
    for (const auto& text : profiles)
      curves.push_back(predict_strategy(fitted, parse_profile(text, covariates_of(fitted)), a.horizon));
  }
  for (auto& c : curves) cut_at_horizon(c, a.horizon);
  const fs::path out(a.out);
  std::ostringstream os;
  write_curves_csv(os, curves);
  write_file(out / "curves.csv", os.str());
  Json report;
  report["curves"] = Json::array();
  for (const auto& c : curves) {
    report["curves"].push_back(curve_to_json(c));
    for (const auto& w : c.warnings) std::cerr << "warning: " << c.strategy << ": " << w << "\n";
    std::cout << c.strategy << " [" << profile_string(c.profile) << "] risk(" << format_number(a.horizon)
              << ") = " << format_number(c.final_risk()) << "\n";
  }
  write_json(out / "report.json", report);
  return 0;
}

int cmd_simulate(const Args& a) {
  const auto sc = resolve_scenario(a.scenario);
  const auto sim = simulate(sc.intensities, a.n, a.seed, a.threads);
  const fs::path out(a.out);
  write_file(out / "data.csv", write_csv(sim.data));
  write_json(out / "scenario.json", scenario_to_json(sc));
  std::cout << "simulated " << a.n << " subjects (" << sim.data.episode_count() << " episodes) -> "
            << (out / "data.csv").string() << "\n";
  return 0;
}

int cmd_validate(const Args& a) {
  const auto sc = resolve_scenario(a.scenario);
  ValidationOptions opt = sc.validation.value_or(ValidationOptions{});
  if (opt.targets.empty()) opt.targets = scenarios::all_strategy_targets(0.02);
  if (a.horizon > 0.0) opt.horizon = a.horizon;
  opt.threads = a.threads;
  if (!a.profiles.empty()) {
    std::vector<CovariateInfo> none;
    opt.profile = parse_profile(a.profiles.front(), none);
  }
  const auto report = validate(sc.intensities, a.n, replication_seeds(a.seed, a.seeds), opt);
  const fs::path out(a.out);
  write_json(out / "report.json", report_to_json(report));
  std::ostringstream os;
  write_truth_csv(os, report.truth);
  write_file(out / "truth.csv", os.str());
  for (const auto& e : report.entries)
    std::cout << (e.pass ? "PASS " : "FAIL ") << e.label << " truth=" << format_number(e.truth)
              << " mean=" << format_number(e.mean) << " bias=" << format_number(e.bias) << "\n";
  return report.pass ? 0 : 1;
}

int cmd_weights(const Args& a) {
  const auto ds = load_data(a);
  WeightMode mode;
  if (a.mode == "ipcw")
    mode = WeightMode::IPCW;
  else if (a.mode == "iptw")
    mode = WeightMode::IPTW;
  else
    throw usage_error("UnknownWeightMode", "--mode must be ipcw|iptw");
  Args b = a;
  b.strategy = "ignore";
  const auto s = strategy_spec(b, nullptr);
  auto data = mode == WeightMode::IPCW ? split_at_treatment(ds) : ds;
  if (a.weight_grid > 0.0) data = detail::on_grid(data, a.weight_grid);
  const auto num = fit_treatment_hazard(data, s.weights.numerator_covariates, s.ties);
  const auto den = fit_treatment_hazard(data, s.weights.denominator_covariates, s.ties);
  const auto table = stabilized_weights(data, num, den, mode, s.weights.truncation);
  const fs::path out(a.out);
  std::ostringstream os;
  write_weights_csv(os, data, table);
  write_file(out / "weights.csv", os.str());
  write_json(out / "weight_diagnostics.json", diagnostics_to_json(table.diagnostics));
  write_json(out / "numerator_model.json", model_to_json(num));
  write_json(out / "denominator_model.json", model_to_json(den));
  const auto& d = table.diagnostics;
  std::cout << "weights: mean " << format_number(d.mean) << ", range [" << format_number(d.min) << ", "
            << format_number(d.max) << "], ess " << format_number(d.ess) << "\n";
  if (d.at_risk_mean_min < 0.8 || d.at_risk_mean_max > 1.2)
    std::cerr << "warning: mean weight among those at risk leaves [0.8, 1.2] (" << format_number(d.at_risk_mean_min)
              << " to " << format_number(d.at_risk_mean_max) << ")\n";
  return 0;
}

// ---- config echo / replay ----

const char* const kPathOptions[] = {"data", "model", "scenario", "out"};

Json config_echo(const std::string& sub, const CLI::App& app) {
  Json j;
  j["subcommand"] = sub;
  j["options"] = Json::object();
  for (const auto* opt : app.get_options()) {
    if (opt->count() == 0) continue;
    const auto name = opt->get_single_name();
    if (name == "help" || name == "h") continue;
    if (opt->get_expected_min() == 0) {
      j["options"][name] = true;
      continue;
    }
    auto values = opt->results();
    const bool is_path = std::find(std::begin(kPathOptions), std::end(kPathOptions), name) != std::end(kPathOptions);
    for (auto& v : values)
      if (is_path && !(name == "scenario" && (v == "s1" || v == "s2" || v == "s3")))
        v = fs::absolute(v).lexically_normal().string();
    j["options"][name] = values;
  }
  return j;
}

// argv equivalent of a config echo; `out_override` replaces the recorded --out.
std::vector<std::string> replay_args(const Json& cfg, const std::string& out_override) {
  try {
    std::vector<std::string> args{cfg.at("subcommand").get<std::string>()};
    for (const auto& [name, value] : cfg.at("options").items()) {
      if (name == "out" && !out_override.empty()) continue;
      if (value.is_boolean()) {
        if (value.get<bool>()) args.push_back("--" + name);
        continue;
      }
      for (const auto& v : value) {
        args.push_back("--" + name);
        args.push_back(v.get<std::string>());
      }
    }
    if (!out_override.empty()) {
      args.push_back("--out");
      args.push_back(out_override);
    }
    return args;
  } catch (const nlohmann::json::exception& e) {
    throw usage_error("InvalidConfig", std::string("config echo: ") + e.what());
  }
}

void report_error(const Error& e, const std::string& out_dir) {
  Json j;
  j["error"] = e.code();
  j["kind"] = e.kind() == ErrorKind::Usage ? "usage" : e.kind() == ErrorKind::Data ? "data" : "numeric";
  j["message"] = e.what();
  j["exit_code"] = exit_code(e.kind());
  std::cerr << j.dump() << "\n";
  if (!out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    std::ofstream(fs::path(out_dir) / "error.json") << j.dump(2) << "\n";
  }
}

int run(std::vector<std::string> argv_in) {
  // --config PATH replays a recorded run; an explicit --out still applies.
  std::string config_path, out_override;
  for (std::size_t k = 0; k + 1 < argv_in.size(); ++k) {
    if (argv_in[k] == "--config") config_path = argv_in[k + 1];
    if (argv_in[k] == "--out") out_override = argv_in[k + 1];
  }
  if (!config_path.empty()) argv_in = replay_args(read_json_file(config_path), out_override);

  Args a;
  CLI::App app{"Risk prediction under treatment strategies started after baseline"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand all help");
  std::string config_unused;
  app.add_option("--config", config_unused, "Replay the config.json echo of an earlier run");

  auto data_opts = [&](CLI::App* s) {
    s->add_option("--data", a.data, "Counting-process CSV (id,tstart,tstop,status,treated,...)");
    s->add_option("--tv-columns", a.tv_columns, "Columns to treat as time-varying")->delimiter(',');
    s->add_option("--design", a.design, "stops|continues (default: inferred)");
    s->add_option("--impute", a.impute, "locf|median for missing time-varying values");
  };
  auto strategy_opts = [&](CLI::App* s) {
    s->add_option("--strategy", a.strategy, "ignore|composite|while-untreated|hypothetical");
    s->add_option("--method", a.method, "censor|model|censor-ipcw|model-iptw");
    s->add_option("--tie", a.tie, "efron|breslow")->capture_default_str();
    s->add_option("--tv-cuts", a.tv_cuts, "Cut points of the treatment coefficient, e.g. 3,8")->delimiter(',');
    s->add_option("--covariates", a.covariates, "Baseline covariates (default: all baseline columns)")->delimiter(',');
    s->add_option("--form", a.form, "product-limit|exponential survival from hazard increments");
  };
  auto weight_opts = [&](CLI::App* s) {
    s->add_option("--weight-covariates", a.weight_covariates, "Covariates of the treatment model")->delimiter(',');
    s->add_option("--numerator-covariates", a.numerator_covariates, "Numerator covariates (default: none)")
        ->delimiter(',');
    s->add_option("--truncate", a.truncate, "Percentile truncation, e.g. 1,99")->delimiter(',');
    s->add_option("--weight-grid", a.weight_grid, "Re-evaluate weights on this time grid");
  };
  auto out_opt = [&](CLI::App* s) { s->add_option("--out", a.out, "Output directory")->capture_default_str(); };

  auto* fit = app.add_subcommand("fit", "Fit the models of one strategy");
  data_opts(fit);
  strategy_opts(fit);
  weight_opts(fit);
  fit->add_option("--horizon", a.horizon, "Prediction horizon recorded with the model");
  fit->add_flag("--residuals", a.residuals, "Also write Schoenfeld residuals");
  out_opt(fit);

  auto* predict = app.add_subcommand("predict", "Predict risk curves for covariate profiles");
  predict->add_option("--model", a.model, "model.json from fit");
  predict->add_option("--profile", a.profiles, "Profile like age=50,dialysis=HD (repeatable)");
  predict->add_option("--horizon", a.horizon, "Prediction horizon");
  predict->add_flag("--all-strategies", a.all_strategies, "Fit every strategy on --data and overlay the curves");
  data_opts(predict);
  strategy_opts(predict);
  weight_opts(predict);
  out_opt(predict);

  auto* sim = app.add_subcommand("simulate", "Simulate a dataset from a scenario");
  sim->add_option("--scenario", a.scenario, "Scenario JSON file or builtin s1|s2|s3");
  sim->add_option("--n", a.n, "Subjects")->capture_default_str();
  sim->add_option("--seed", a.seed, "Seed")->capture_default_str();
  sim->add_option("--threads", a.threads, "Worker threads")->capture_default_str();
  out_opt(sim);

  auto* val = app.add_subcommand("validate", "Compare estimates with the true risks of a scenario");
  val->add_option("--scenario", a.scenario, "Scenario JSON file or builtin s1|s2|s3");
  val->add_option("--n", a.n, "Subjects per replication")->capture_default_str();
  val->add_option("--seeds", a.seeds, "Replications")->capture_default_str();
  val->add_option("--seed", a.seed, "First seed")->capture_default_str();
  val->add_option("--threads", a.threads, "Worker threads")->capture_default_str();
  val->add_option("--horizon", a.horizon, "Override the scenario horizon");
  val->add_option("--profile", a.profiles, "Override the scenario profile");
  out_opt(val);

  auto* wts = app.add_subcommand("weights", "Stabilized inverse probability weights");
  data_opts(wts);
  weight_opts(wts);
  wts->add_option("--mode", a.mode, "ipcw|iptw")->capture_default_str();
  wts->add_option("--tie", a.tie, "efron|breslow")->capture_default_str();
  out_opt(wts);

  std::vector<std::string> rev(argv_in.rbegin(), argv_in.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 2;
  }

  CLI::App* chosen = app.get_subcommands().front();
  const std::string sub = chosen->get_name();
  try {
    if (sub == "fit" && a.strategy.empty()) {
      std::cerr << "--strategy is required\n\n" << chosen->help();
      return 2;
    }
    int rc = 0;
    if (sub == "fit") rc = cmd_fit(a);
    else if (sub == "predict") rc = cmd_predict(a);
    else if (sub == "simulate") rc = cmd_simulate(a);
    else if (sub == "validate") rc = cmd_validate(a);
    else if (sub == "weights") rc = cmd_weights(a);
    write_json(fs::path(a.out) / "config.json", config_echo(sub, *chosen));
    return rc;
  } catch (const Error& e) {
    report_error(e, chosen->count("--out") ? a.out : std::string());
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    report_error(usage_error("FileSystem", e.what()), "");
    return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(std::move(args));
}
