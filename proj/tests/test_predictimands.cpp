#include <gtest/gtest.h>

#include "support.hpp"

using namespace pt;

namespace {

StrategySpec spec_of(Strategy s, std::optional<HypotheticalMethod> m = std::nullopt, double horizon = 5.0) {
  StrategySpec spec;
  spec.strategy = s;
  spec.method = m;
  spec.horizon = horizon;
  return spec;
}

std::string code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

std::vector<StrategySpec> every_spec(double horizon) {
  std::vector<StrategySpec> out;
  for (auto s : {Strategy::IgnoreTreatment, Strategy::Composite, Strategy::WhileUntreated})
    out.push_back(spec_of(s, std::nullopt, horizon));
  for (auto m : kAllHypotheticalMethods) out.push_back(spec_of(Strategy::Hypothetical, m, horizon));
  return out;
}

}  // namespace

TEST(Strategy, NamesRoundTrip) {
  for (auto s : {Strategy::IgnoreTreatment, Strategy::Composite, Strategy::WhileUntreated, Strategy::Hypothetical})
    EXPECT_EQ(parse_strategy(to_string(s)), s);
  for (auto m : kAllHypotheticalMethods) EXPECT_EQ(parse_method(to_string(m)), m);
  EXPECT_EQ(code_of([] { parse_strategy("treatment-policy"); }), "UnknownStrategy");
  EXPECT_EQ(code_of([] { parse_method("gformula"); }), "UnknownMethod");
  EXPECT_EQ(label(spec_of(Strategy::Hypothetical, HypotheticalMethod::CensorIPCW)), "hypothetical:censor-ipcw");
  EXPECT_EQ(label(spec_of(Strategy::WhileUntreated)), "while-untreated");
}

TEST(Strategy, MethodOnlyWithHypothetical) {
  EXPECT_EQ(code_of([] { estimate(d4(), spec_of(Strategy::Hypothetical), {}); }), "MissingMethod");
  EXPECT_EQ(code_of([] {
              estimate(d4(), spec_of(Strategy::Composite, HypotheticalMethod::CensorBaseline), {});
            }),
            "UnexpectedMethod");
}

TEST(Strategy, DesignMismatchOnStoppedFollowUp) {
  const auto ds = d4();
  ASSERT_EQ(ds.design, Design::StopsAtTreatment);
  EXPECT_EQ(code_of([&] { estimate(ds, spec_of(Strategy::IgnoreTreatment), {}); }), "DesignMismatch");
  EXPECT_EQ(code_of([&] { estimate(ds, spec_of(Strategy::Hypothetical, HypotheticalMethod::ModelBaseline), {}); }),
            "DesignMismatch");
  EXPECT_EQ(code_of([&] { estimate(ds, spec_of(Strategy::Hypothetical, HypotheticalMethod::ModelIPTW), {}); }),
            "DesignMismatch");
  EXPECT_NO_THROW(estimate(ds, spec_of(Strategy::Composite, std::nullopt, 4), {}));
  EXPECT_NO_THROW(estimate(ds, spec_of(Strategy::WhileUntreated, std::nullopt, 4), {}));
  EXPECT_NO_THROW(estimate(ds, spec_of(Strategy::Hypothetical, HypotheticalMethod::CensorBaseline, 4), {}));
}

TEST(Strategy, EstimateAllReportsPerStrategyErrors) {
  const auto results = estimate_all(d4(), spec_of(Strategy::IgnoreTreatment, std::nullopt, 4), {});
  ASSERT_EQ(results.size(), 7u);
  std::size_t failed = 0;
  for (const auto& r : results) {
    EXPECT_NE(r.curve.has_value(), r.error.has_value()) << r.label;
    if (r.error) {
      ++failed;
      EXPECT_EQ(r.error->code(), "DesignMismatch");
    }
  }
  EXPECT_EQ(failed, 3u);
}

TEST(Strategy, D4ClosedFormValues) {
  EXPECT_NEAR(estimate(d4(), spec_of(Strategy::Composite, std::nullopt, 4), {}).at(4), 0.75, 1e-12);
  EXPECT_NEAR(estimate(d4(), spec_of(Strategy::WhileUntreated, std::nullopt, 4), {}).at(4), 0.5, 1e-12);
  // Censoring at treatment: KM with subject 2 censored at 2.
  const auto hyp = estimate(d4(), spec_of(Strategy::Hypothetical, HypotheticalMethod::CensorBaseline, 4), {});
  EXPECT_NEAR(hyp.at(1), 0.25, 1e-12);
  EXPECT_NEAR(hyp.at(4), 1.0 - 0.75 * 0.5, 1e-12);
}

TEST(Strategy, CensorBaselineIsKaplanMeierOfSplitData) {
  const auto sim = simulate(scenarios::s1().intensities, 1000, 41);
  const auto hyp = estimate(sim.data, spec_of(Strategy::Hypothetical, HypotheticalMethod::CensorBaseline, 5), {});
  const auto km = km_risk(split_at_treatment(sim.data), Status::Event, 5);
  for (double t = 0; t <= 5; t += 0.25) EXPECT_NEAR(hyp.at(t), km.at(t), 1e-12);
  const auto ign = estimate(sim.data, spec_of(Strategy::IgnoreTreatment, std::nullopt, 5), {});
  const auto km_all = km_risk(sim.data, Status::Event, 5);
  for (double t = 0; t <= 5; t += 0.25) EXPECT_NEAR(ign.at(t), km_all.at(t), 1e-12);
}

TEST(Strategy, TrivialWeightsReduceToCensorBaseline) {
  const auto sim = simulate(scenarios::s2().intensities, 600, 42);
  StrategySpec ipcw = spec_of(Strategy::Hypothetical, HypotheticalMethod::CensorIPCW, 5);
  const auto fitted = fit_strategy(sim.data, ipcw);
  ASSERT_TRUE(fitted.weight_diagnostics.has_value());
  EXPECT_EQ(fitted.weight_diagnostics->min, 1.0);
  EXPECT_EQ(fitted.weight_diagnostics->max, 1.0);
  const auto a = predict_strategy(fitted, {}, 5);
  const auto b = estimate(sim.data, spec_of(Strategy::Hypothetical, HypotheticalMethod::CensorBaseline, 5), {});
  for (double t = 0; t <= 5; t += 0.25) EXPECT_NEAR(a.at(t), b.at(t), 1e-12);
}

TEST(Strategy, NoTreatmentMakesStrategiesAgree) {
  auto spec = scenarios::s1().intensities;
  spec.treatment.rate = 0.0;
  const auto sim = simulate(spec, 800, 43);
  ASSERT_EQ(count_status(sim.data, Status::TreatmentStart), 0u);
  const auto results = estimate_all(sim.data, spec_of(Strategy::IgnoreTreatment, std::nullopt, 5), {});
  const auto& ref = *results.front().curve;
  for (const auto& r : results) {
    ASSERT_TRUE(r.curve.has_value()) << r.label << ": " << (r.error ? r.error->what() : "");
    for (double t = 0; t <= 5; t += 0.1) EXPECT_NEAR(r.curve->at(t), ref.at(t), 1e-10) << r.label << " t=" << t;
  }
}

TEST(Strategy, EstimatesNearAnalyticTruthOnConstantRates) {
  const auto sc = scenarios::s1();
  const auto truth = true_risks(sc.intensities, {}, 5.0);
  ASSERT_EQ(truth.method, TruthMethod::Analytic);
  const auto sim = simulate(sc.intensities, 4000, 44);
  for (const auto& spec : every_spec(5.0)) {
    const auto c = estimate(sim.data, spec, {});
    const double p = truth.at_horizon(std::string(to_string(spec.strategy)));
    // Roughly four standard errors at this n.
    EXPECT_NEAR(c.at(5.0), p, 0.035) << label(spec);
  }
}

TEST(Strategy, TruthOrderingWhenTreatmentLowersDeathRate) {
  const auto truth = true_risks(scenarios::s1().intensities, {}, 5.0);
  const double comp = truth.at_horizon("composite"), hyp = truth.at_horizon("hypothetical"),
               ign = truth.at_horizon("ignore"), wu = truth.at_horizon("while-untreated");
  EXPECT_GT(comp, hyp);
  EXPECT_GT(hyp, ign);
  EXPECT_GT(ign, wu);
}

TEST(Strategy, CurvesAreCutAtHorizon) {
  const auto sim = simulate(scenarios::s1().intensities, 300, 45);
  for (const auto& spec : every_spec(3.0)) {
    const auto c = estimate(sim.data, spec, {});
    EXPECT_EQ(c.times.front(), 0.0);
    EXPECT_EQ(c.risk.front(), 0.0);
    EXPECT_EQ(c.times.back(), 3.0) << label(spec);
    EXPECT_EQ(c.horizon, 3.0);
    EXPECT_EQ(c.strategy, label(spec));
    for (std::size_t k = 1; k < c.risk.size(); ++k) EXPECT_GE(c.risk[k], c.risk[k - 1]);
  }
}

TEST(Strategy, WarnsBeyondLastEvent) {
  const auto c = estimate(d1(), spec_of(Strategy::IgnoreTreatment, std::nullopt, 10.0), {{"x", 0}});
  ASSERT_FALSE(c.warnings.empty());
  EXPECT_NE(c.warnings.front().find("horizon beyond last event time 4"), std::string::npos);
  EXPECT_TRUE(estimate(d1(), spec_of(Strategy::IgnoreTreatment, std::nullopt, 2.0), {{"x", 0}}).warnings.empty());
}

TEST(Strategy, ProfileKeysBecomeCovariates) {
  const auto s = with_profile_covariates(spec_of(Strategy::IgnoreTreatment), {{"x", 1}});
  EXPECT_EQ(s.covariates, (std::vector<std::string>{"x"}));
  // D1 with x = 1 at t = 1 under the product-limit form.
  const auto m = fit(d1(), CoxSpec{.covariate_terms = {"x"}});
  const auto expected = 1.0 - predict_survival(m, {{"x", 1}}, never_treated(), SurvivalForm::ProductLimit).at(1.0);
  EXPECT_NEAR(estimate(d1(), spec_of(Strategy::IgnoreTreatment, std::nullopt, 2.0), {{"x", 1}}).at(1.0), expected,
              1e-15);
}

TEST(Strategy, TreatmentEffectEstimateInModelBaseline) {
  // Continuing follow-up with a large treated death rate: the A(t) coefficient is positive.
  auto spec = scenarios::s1().intensities;
  spec.death_treated.rate = 0.6;
  const auto sim = simulate(spec, 2000, 46);
  const auto f = fit_strategy(sim.data, spec_of(Strategy::Hypothetical, HypotheticalMethod::ModelBaseline));
  EXPECT_NEAR(f.outcome->coefficient("treated"), std::log(3.0), 0.25);
}
