#include <gtest/gtest.h>

#include <sstream>

#include "support.hpp"

using namespace pt;

namespace {

CountingProcessDataset read(const std::string& text, const std::vector<std::string>& tv = {}) {
  std::istringstream a(text), b(text);
  return ingest_csv(b, infer_schema(a, tv));
}

Error error_of(const std::string& text) {
  try {
    read(text);
  } catch (const Error& e) {
    return e;
  }
  return usage_error("none", "no error");
}

}  // namespace

TEST(Ingest, SingleRow) {
  auto ds = read("id,tstart,tstop,status,treated,age\n1,0,5,1,0,50\n");
  ASSERT_EQ(ds.subjects.size(), 1u);
  ASSERT_EQ(ds.subjects[0].episodes.size(), 1u);
  EXPECT_EQ(ds.subjects[0].episodes[0].tstop, 5.0);
  EXPECT_EQ(ds.subjects[0].episodes[0].status, Status::Event);
  EXPECT_EQ(ds.subjects[0].baseline.at("age"), 50.0);
}

TEST(Ingest, GapReportsLine) {
  auto e = error_of("id,tstart,tstop,status,treated\n1,0,2,0,0\n1,3,5,1,0\n");
  EXPECT_EQ(e.code(), "NonContiguousEpisodes");
  EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  EXPECT_EQ(e.kind(), ErrorKind::Data);
}

TEST(Ingest, MalformedRows) {
  EXPECT_EQ(error_of("id,tstart,tstop,status,treated\n1,0,2,0\n").code(), "MalformedRow");
  EXPECT_EQ(error_of("id,tstart,tstop,status,treated\n1,0,x,0,0\n").code(), "MalformedRow");
  EXPECT_EQ(error_of("id,tstart,tstop,status,treated\n1,0,2,7,0\n").code(), "MalformedRow");
  EXPECT_EQ(error_of("id,tstart,tstop,status,treated\n1,0,2,1,5\n").code(), "MalformedRow");
  EXPECT_EQ(error_of("id,start,stop\n1,0,2\n").code(), "MalformedRow");
  EXPECT_EQ(error_of("id,tstart,tstop,status,treated\n1,-1,2,1,0\n").code(), "NegativeTime");
}

TEST(Ingest, EventTiedWithTreatmentStartRejected) {
  auto e = error_of("id,tstart,tstop,status,treated\n1,0,2,2,0\n1,2,2,1,1\n");
  EXPECT_EQ(e.kind(), ErrorKind::Data);
}

TEST(Ingest, BaselineMustBeConstantWithinSubject) {
  std::istringstream a("id,tstart,tstop,status,treated,age\n1,0,2,0,0,50\n1,2,4,1,0,51\n");
  auto schema = infer_schema(a);
  schema.covariates[0].kind = CovariateKind::Baseline;
  std::istringstream b("id,tstart,tstop,status,treated,age\n1,0,2,0,0,50\n1,2,4,1,0,51\n");
  EXPECT_THROW(ingest_csv(b, schema), Error);
}

TEST(Ingest, UnknownColumn) {
  std::istringstream in("id,tstart,tstop,status,treated,age\n1,0,5,1,0,50\n");
  try {
    ingest_csv(in, CovariateSchema{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "UnknownCovariate");
  }
}

TEST(Ingest, D1FileEqualsInMemory) {
  const auto path = data_path("d1.csv");
  auto ds = ingest_csv(path, infer_schema(path));
  EXPECT_EQ(ds.subjects.size(), 4u);
  EXPECT_EQ(ds.episode_count(), 4u);
  EXPECT_EQ(write_csv(ds), write_csv(d1()));
}

TEST(Ingest, RowsInAnyOrder) {
  auto ds = read("id,tstart,tstop,status,treated\n1,2,4,1,1\n2,0,1,0,0\n1,0,2,2,0\n");
  ASSERT_EQ(ds.subjects[0].episodes.size(), 2u);
  EXPECT_EQ(ds.subjects[0].episodes[0].status, Status::TreatmentStart);
  EXPECT_EQ(ds.design, Design::ContinuesAfterTreatment);
}

TEST(Schema, InfersKindsAndLevels) {
  std::istringstream in(
      "id,tstart,tstop,status,treated,age,dialysis,bmi\n"
      "1,0,1,0,0,50,HD,24\n1,1,2,1,0,50,HD,\n2,0,3,0,0,60,PD,26\n");
  auto s = infer_schema(in);
  EXPECT_EQ(s.find("age")->kind, CovariateKind::Baseline);
  EXPECT_EQ(s.find("dialysis")->levels, (std::vector<std::string>{"HD", "PD"}));
  EXPECT_EQ(s.find("bmi")->kind, CovariateKind::TimeVarying);
}

TEST(RoundTrip, CohortFile) {
  const auto path = data_path("cohort.csv");
  const auto schema = infer_schema(path);
  const auto ds = ingest_csv(path, schema);
  const auto text = write_csv(ds);
  std::istringstream in(text);
  EXPECT_EQ(write_csv(ingest_csv(in, schema)), text);
  EXPECT_EQ(ds.subjects.size(), 8u);
  EXPECT_EQ(ds.design, Design::ContinuesAfterTreatment);
  // bmi missing in one row is kept missing.
  EXPECT_FALSE(ds.subjects[0].episodes[1].tv.at("bmi").has_value());
}

TEST(RoundTrip, SimulatedData) {
  const auto sim = simulate(scenarios::s2().intensities, 50, 9);
  const auto text = write_csv(sim.data);
  std::istringstream a(text), b(text);
  const auto back = ingest_csv(b, infer_schema(a, {"z"}));
  EXPECT_EQ(write_csv(back), text);
}

TEST(Ingest, WideLayoutExpands) {
  auto ds = read("id,time,status,x\n1,3,1,0.5\n2,4,0,1\n");
  ASSERT_EQ(ds.subjects.size(), 2u);
  EXPECT_EQ(ds.subjects[1].episodes[0].tstart, 0.0);
  EXPECT_EQ(ds.subjects[1].episodes[0].tstop, 4.0);
  EXPECT_EQ(ds.subjects[0].baseline.at("x"), 0.5);
}

TEST(Format, ShortestRoundTrip) {
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(format_number(5.0), "5");
  const double v = 1.0 / 3.0;
  EXPECT_EQ(*parse_number(format_number(v)), v);
  EXPECT_FALSE(parse_number("1.5x").has_value());
  EXPECT_EQ(*parse_number(" +2 "), 2.0);
}
