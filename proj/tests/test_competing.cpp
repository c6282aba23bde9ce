#include <gtest/gtest.h>

#include "support.hpp"

using namespace pt;

TEST(KaplanMeier, D3ByHand) {
  const auto c = km_risk(d3(), Status::Event);
  EXPECT_NEAR(c.at(1.0), 1.0 / 3.0, 1e-15);  // S(1) = 2/3
  EXPECT_NEAR(c.at(2.5), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(c.at(3.0), 1.0, 1e-15);  // S(3) = 0
}

TEST(KaplanMeier, AllCensoredHasNoEvents) {
  EXPECT_THROW(km_risk(no_covariates({{1, Status::Censored}, {2, Status::Censored}}), Status::Event), Error);
}

TEST(KaplanMeier, NoCensoringIsEmpiricalCdf) {
  const auto ds = no_covariates({{1, Status::Event}, {2, Status::Event}, {2, Status::Event}, {5, Status::Event}});
  const auto c = km_risk(ds, Status::Event);
  EXPECT_NEAR(c.at(1), 0.25, 1e-15);
  EXPECT_NEAR(c.at(2), 0.75, 1e-15);
  EXPECT_NEAR(c.at(4.9), 0.75, 1e-15);
  EXPECT_NEAR(c.at(5), 1.0, 1e-15);
}

TEST(KaplanMeier, HorizonCut) {
  const auto c = km_risk(d3(), Status::Event, 2.5);
  EXPECT_EQ(c.times.back(), 2.5);
  EXPECT_EQ(c.horizon, 2.5);
  EXPECT_NEAR(c.final_risk(), 1.0 / 3.0, 1e-15);
}

TEST(AalenJohansen, D4ByHand) {
  const auto ci = aalen_johansen(d4());
  EXPECT_NEAR(ci.event.back(), 0.5, 1e-15);
  EXPECT_NEAR(ci.treatment.back(), 0.25, 1e-15);
  EXPECT_NEAR(ci.overall_survival.back(), 0.25, 1e-15);
}

TEST(CumInc, D4PlugInMatchesHand) {
  const auto pair = fit_cause_specific(d4(), CoxSpec{});
  ASSERT_TRUE(pair.treatment.has_value());
  const auto ci = cuminc_detail(pair, {});
  EXPECT_NEAR(ci.event.back(), 0.5, 1e-12);
  EXPECT_NEAR(ci.treatment.back(), 0.25, 1e-12);
  const auto c = cuminc(pair, {}, 4.0);
  EXPECT_NEAR(c.at(4.0), 0.5, 1e-12);
}

TEST(Composite, D4EqualsSumOfIncidences) {
  const auto c = composite_risk(d4(), CoxSpec{}, {}, 4.0);
  EXPECT_NEAR(c.at(4.0), 0.75, 1e-12);
}

TEST(CumInc, NoTreatmentEqualsKaplanMeier) {
  const auto ds = d3();
  const auto pair = fit_cause_specific(ds, CoxSpec{});
  EXPECT_FALSE(pair.treatment.has_value());
  const auto ci = cuminc(pair, {}, 3.0);
  const auto km = km_risk(ds, Status::Event, 3.0);
  for (double t : {0.5, 1.0, 2.0, 3.0}) EXPECT_NEAR(ci.at(t), km.at(t), 1e-12);
}

TEST(Composite, NoTreatmentEqualsIgnore) {
  const auto ds = d3();
  const auto comp = composite_risk(ds, CoxSpec{}, {}, 3.0);
  const auto ign = risk_from_survival(predict_survival(fit(ds, CoxSpec{}), {}, never_treated(), SurvivalForm::ProductLimit), 3.0);
  for (double t : {1.0, 2.0, 3.0}) EXPECT_NEAR(comp.at(t), ign.at(t), 1e-15);
}

namespace {

// Nonparametric conservation and additivity on one dataset; returns the worst gap.
double conservation_gap(const CountingProcessDataset& ds) {
  const auto ci = aalen_johansen(ds);
  double worst = 0.0;
  for (std::size_t k = 0; k < ci.times.size(); ++k)
    worst = std::max(worst, std::abs(ci.event[k] + ci.treatment[k] + ci.overall_survival[k] - 1.0));
  return worst;
}

}  // namespace

TEST(AalenJohansen, MassConservationRandom) {
  std::mt19937_64 rng(31);
  for (int rep = 0; rep < 100; ++rep) {
    auto ds = random_dataset(rng, 40, true, false).ds;
    EXPECT_LE(conservation_gap(ds), 1e-12);
  }
  const auto sim = simulate(scenarios::s1().intensities, 2000, 4);
  EXPECT_LE(conservation_gap(sim.data), 1e-12);
}

TEST(Composite, AdditivityAndOrderingNonparametric) {
  const auto sim = simulate(scenarios::s1().intensities, 1500, 5);
  const auto& ds = sim.data;
  const auto ci = aalen_johansen(ds);
  const auto comp = composite_risk(ds, CoxSpec{}, {}, 10.0);
  const auto ignore = km_risk(ds, Status::Event, 10.0);
  for (std::size_t k = 0; k < ci.times.size(); ++k) {
    const double t = ci.times[k];
    EXPECT_NEAR(comp.at(t), ci.event[k] + ci.treatment[k], 1e-12);
    EXPECT_LE(ci.event[k], ignore.at(t) + 1e-12);
    EXPECT_LE(ignore.at(t), comp.at(t) + 1e-12);
  }
}

TEST(CumInc, PlugInEqualsAalenJohansenWithoutCovariates) {
  std::mt19937_64 rng(32);
  for (int rep = 0; rep < 20; ++rep) {
    auto ds = random_dataset(rng, 30, true, false).ds;
    const auto split = split_at_treatment(ds);
    if (count_status(split, Status::Event) == 0) continue;
    CoxSpec spec;
    spec.ties = TieMethod::Breslow;
    const auto pair = fit_cause_specific(ds, spec);
    const auto plug = cuminc_detail(pair, {});
    const auto aj = aalen_johansen(ds);
    for (std::size_t k = 0; k < aj.times.size(); ++k) {
      const double t = aj.times[k];
      EXPECT_NEAR(detail::step_value(plug.times, plug.event, t, 0.0), aj.event[k], 1e-12);
    }
  }
}

TEST(RiskCurves, MonotoneBoundedStartAtZero) {
  const auto sim = simulate(scenarios::s3().intensities, 800, 6);
  CoxSpec spec;
  spec.covariate_terms = {"age"};
  const auto pair = fit_cause_specific(sim.data, spec);
  for (auto form : {SurvivalForm::ProductLimit, SurvivalForm::Exponential}) {
    const auto c = cuminc(pair, {{"age", 50}}, 6.0, form);
    EXPECT_EQ(c.times.front(), 0.0);
    EXPECT_EQ(c.risk.front(), 0.0);
    EXPECT_EQ(c.times.back(), 6.0);
    for (std::size_t k = 1; k < c.risk.size(); ++k) {
      EXPECT_GE(c.risk[k], c.risk[k - 1]);
      EXPECT_LE(c.risk[k], 1.0);
    }
  }
}
