#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "predictimand.hpp"

namespace pt {

using namespace predictimand;

inline Episode ep(double a, double b, Status s, bool treated = false) { return Episode{a, b, s, treated, {}}; }

inline CovariateSchema schema_of(std::initializer_list<const char*> baseline,
                                 std::initializer_list<const char*> tv = {}) {
  CovariateSchema s;
  for (auto n : baseline) s.covariates.push_back({n, CovariateKind::Baseline});
  for (auto n : tv) s.covariates.push_back({n, CovariateKind::TimeVarying});
  return s;
}

// One episode (0, time] per subject with a single baseline covariate x.
inline CountingProcessDataset wide(const std::vector<std::tuple<double, Status, double>>& rows) {
  CountingProcessDataset ds;
  ds.schema = schema_of({"x"});
  int id = 1;
  for (const auto& [t, s, x] : rows) ds.subjects.push_back({std::to_string(id++), {ep(0, t, s)}, {{"x", x}}});
  return ds;
}

inline CountingProcessDataset d1() {
  return wide({{1, Status::Event, 1}, {2, Status::Event, 0}, {3, Status::Censored, 1}, {4, Status::Event, 0}});
}

inline CountingProcessDataset no_covariates(const std::vector<std::pair<double, Status>>& rows) {
  CountingProcessDataset ds;
  int id = 1;
  for (const auto& [t, s] : rows) ds.subjects.push_back({std::to_string(id++), {ep(0, t, s)}, {}});
  ds.design = infer_design(ds.subjects);
  return ds;
}

inline CountingProcessDataset d2() { return no_covariates({{1, Status::Event}, {1, Status::Event}, {2, Status::Event}}); }
inline CountingProcessDataset d3() {
  return no_covariates({{1, Status::Event}, {2, Status::Censored}, {3, Status::Event}});
}
inline CountingProcessDataset d4() {
  return no_covariates({{1, Status::Event}, {2, Status::TreatmentStart}, {3, Status::Event}, {4, Status::Censored}});
}

inline Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index k = 0;
  for (double x : v) out[k++] = x;
  return out;
}

// Small random counting-process dataset: two baseline covariates, one
// time-varying covariate, optional treatment episodes, integer-ish times so
// ties occur, random case weights when requested.
struct RandomData {
  CountingProcessDataset ds;
  std::shared_ptr<const EpisodeWeights> weights;
};

inline RandomData random_dataset(std::mt19937_64& rng, int n, bool with_treatment, bool with_weights) {
  std::uniform_int_distribution<int> tick(1, 6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> z(0.0, 1.0);
  RandomData r;
  r.ds.schema = schema_of({"x1", "x2"}, {"z"});
  auto w = std::make_shared<EpisodeWeights>();
  for (int i = 0; i < n; ++i) {
    SubjectRecord s{std::to_string(i + 1), {}, {{"x1", z(rng)}, {"x2", u(rng) < 0.5 ? 1.0 : 0.0}}};
    const double end = tick(rng) + (u(rng) < 0.3 ? 0.5 : 0.0);
    const double mid = u(rng) < 0.5 ? std::floor(end / 2.0) : 0.0;
    const bool event = u(rng) < 0.7;
    const bool treat = with_treatment && mid > 0.0 && u(rng) < 0.5;
    std::vector<double> w_i;
    if (mid > 0.0) {
      Episode a = ep(0, mid, treat ? Status::TreatmentStart : Status::Censored);
      a.tv["z"] = z(rng);
      s.episodes.push_back(a);
      Episode b = ep(mid, end, event ? Status::Event : Status::Censored, treat);
      b.tv["z"] = z(rng);
      s.episodes.push_back(b);
    } else {
      Episode a = ep(0, end, event ? Status::Event : Status::Censored);
      a.tv["z"] = z(rng);
      s.episodes.push_back(a);
    }
    for (std::size_t k = 0; k < s.episodes.size(); ++k) w_i.push_back(with_weights ? 0.5 + u(rng) : 1.0);
    w->push_back(w_i);
    r.ds.subjects.push_back(std::move(s));
  }
  r.ds.design = infer_design(r.ds.subjects);
  if (with_weights) r.weights = w;
  return r;
}

inline std::string data_path(const std::string& name) { return std::string(PREDICTIMAND_DATA_DIR) + "/" + name; }

}  // namespace pt
