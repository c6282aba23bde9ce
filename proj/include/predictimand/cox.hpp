#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "predictimand/curves.hpp"
#include "predictimand/dataset.hpp"
#include "predictimand/error.hpp"

namespace predictimand {

enum class TieMethod { Efron, Breslow };

// Per (subject, episode) case weights, indexed like the dataset they belong to.
using EpisodeWeights = std::vector<std::vector<double>>;

/// Treatment A(t) as a covariate. With cuts c1 < ... < ck the coefficient is a
/// step function of time: one coefficient per segment (0,c1], (c1,c2], ..., (ck,inf).
struct TreatmentTerm {
  std::vector<double> cuts;
};

struct CoxSpec {
  Status event_code = Status::Event;
  std::vector<std::string> covariate_terms;
  std::optional<TreatmentTerm> treatment;
  TieMethod ties = TieMethod::Efron;
  std::shared_ptr<const EpisodeWeights> weights;
};

// One column of the design matrix.
struct TermColumn {
  enum class Source { Covariate, Treatment };
  std::string name;
  Source source = Source::Covariate;
  std::string covariate;  // Covariate source
  int level = -1;         // categorical dummy: indicator of this level index
  double segment_lo = 0.0;  // Treatment source: active on (lo, hi]
  double segment_hi = std::numeric_limits<double>::infinity();
};

struct BaselineHazard {
  std::vector<double> times;       // event times, ascending
  std::vector<double> increments;  // dH0 at x = 0, untreated
  std::vector<double> cumulative;  // running sum of increments

  // H0(t), summing jumps at times <= t.
  double at(double t) const { return detail::step_value(times, cumulative, t, 0.0); }
  // H0(t-), summing jumps strictly before t.
  double before(double t) const {
    auto it = std::lower_bound(times.begin(), times.end(), t);
    return it == times.begin() ? 0.0 : cumulative[static_cast<std::size_t>(it - times.begin()) - 1];
  }
  // Increment at exactly t (0 if t is not a jump time).
  double jump(double t) const {
    auto it = std::lower_bound(times.begin(), times.end(), t);
    return (it != times.end() && *it == t) ? increments[static_cast<std::size_t>(it - times.begin())] : 0.0;
  }
};

struct Convergence {
  int iterations = 0;
  double gradient_norm = 0.0;  // max |score component| over estimable terms
  double loglik = 0.0;
  bool converged = false;
};

struct CoxModel {
  CoxSpec spec;
  std::vector<TermColumn> columns;
  std::vector<CovariateInfo> covariates;  // schema entries of the covariate terms
  Eigen::VectorXd beta;
  Eigen::MatrixXd information;
  BaselineHazard baseline;
  Convergence convergence;
  std::vector<std::string> aliased;  // constant columns, coefficient fixed at 0
  bool degenerate = false;
  double events = 0.0;              // weighted event count
  std::size_t event_rows = 0;
  double last_followup = 0.0;

  std::vector<std::string> term_names() const {
    std::vector<std::string> out;
    for (const auto& c : columns) out.push_back(c.name);
    return out;
  }
  double coefficient(const std::string& name) const {
    for (std::size_t j = 0; j < columns.size(); ++j)
      if (columns[j].name == name) return beta[static_cast<Eigen::Index>(j)];
    throw usage_error("UnknownTerm", "model has no term '" + name + "'");
  }
};

// Counting-process design: one row per (possibly split) episode.
struct CoxDesign {
  std::vector<TermColumn> columns;
  std::vector<CovariateInfo> covariates;
  Eigen::MatrixXd x;  // rows x p, centered
  Eigen::VectorXd center;
  std::vector<double> start, stop, weight;
  std::vector<char> event;
  std::vector<std::size_t> subject;
  std::vector<bool> constant;

  struct EventGroup {
    double time;
    std::vector<std::size_t> rows;
  };
  std::vector<EventGroup> groups;  // descending time
  std::vector<std::size_t> by_stop_desc, by_start_desc;

  std::size_t rows() const { return start.size(); }
  Eigen::Index p() const { return static_cast<Eigen::Index>(columns.size()); }
};

namespace detail {

inline std::string segment_name(double lo, double hi) {
  auto fmt = [](double v) {
    if (std::isinf(v)) return std::string("inf");
    std::string s = std::to_string(v);
    s.erase(s.find_last_not_of('0') + 1);
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
  };
  return "treated(" + fmt(lo) + "," + fmt(hi) + "]";
}

inline std::vector<TermColumn> expand_terms(const CovariateSchema& schema, const CoxSpec& spec,
                                            std::vector<CovariateInfo>* infos) {
  std::vector<TermColumn> cols;
  for (const auto& term : spec.covariate_terms) {
    const auto* info = schema.find(term);
    if (!info) throw usage_error("UnknownCovariate", "model term '" + term + "' is not a dataset covariate");
    if (infos) infos->push_back(*info);
    if (info->categorical()) {
      for (std::size_t l = 1; l < info->levels.size(); ++l)
        cols.push_back({term + "=" + info->levels[l], TermColumn::Source::Covariate, term, static_cast<int>(l)});
    } else {
      cols.push_back({term, TermColumn::Source::Covariate, term});
    }
  }
  if (spec.treatment) {
    const auto& cuts = spec.treatment->cuts;
    for (std::size_t k = 0; k < cuts.size(); ++k)
      if (!(cuts[k] > 0.0) || (k > 0 && !(cuts[k] > cuts[k - 1])))
        throw usage_error("InvalidSegments", "treatment segment cuts must be positive and strictly increasing");
    if (cuts.empty()) {
      cols.push_back({"treated", TermColumn::Source::Treatment});
    } else {
      double lo = 0.0;
      for (std::size_t k = 0; k <= cuts.size(); ++k) {
        double hi = k < cuts.size() ? cuts[k] : std::numeric_limits<double>::infinity();
        TermColumn c{segment_name(lo, hi), TermColumn::Source::Treatment};
        c.segment_lo = lo;
        c.segment_hi = hi;
        cols.push_back(c);
        lo = hi;
      }
    }
  }
  return cols;
}

// `value_of(covariate)` returns the covariate's value or nullopt.
template <class Lookup>
std::optional<double> column_value(const TermColumn& c, Lookup&& value_of, bool treated, double time) {
  if (c.source == TermColumn::Source::Treatment)
    return (treated && time > c.segment_lo && time <= c.segment_hi) ? 1.0 : 0.0;
  auto v = value_of(c.covariate);
  if (!v) return std::nullopt;
  if (c.level >= 0) return (static_cast<int>(std::lround(*v)) == c.level) ? 1.0 : 0.0;
  return v;
}

}  // namespace detail

inline CoxDesign build_design(const CountingProcessDataset& ds, const CoxSpec& spec) {
  CoxDesign d;
  d.columns = detail::expand_terms(ds.schema, spec, &d.covariates);
  const auto p = d.p();

  if (spec.weights) {
    const auto& w = *spec.weights;
    bool ok = w.size() == ds.subjects.size();
    for (std::size_t i = 0; ok && i < w.size(); ++i) ok = w[i].size() == ds.subjects[i].episodes.size();
    if (!ok) throw usage_error("WeightShape", "weight table does not match the dataset's episodes");
  }

  std::vector<double> cuts;
  if (spec.treatment) cuts = spec.treatment->cuts;
  std::vector<std::vector<std::size_t>> origin;
  const CountingProcessDataset* src = &ds;
  CountingProcessDataset refined;
  if (!cuts.empty()) {
    refined = refine_episodes(ds, cuts, &origin);
    src = &refined;
  }

  const std::size_t n = src->episode_count();
  d.x.resize(static_cast<Eigen::Index>(n), p);
  d.start.reserve(n);
  d.stop.reserve(n);
  d.weight.reserve(n);
  d.event.reserve(n);
  d.subject.reserve(n);
  std::size_t r = 0;
  for (std::size_t i = 0; i < src->subjects.size(); ++i) {
    const auto& s = src->subjects[i];
    for (std::size_t k = 0; k < s.episodes.size(); ++k, ++r) {
      const auto& e = s.episodes[k];
      auto lookup = [&](const std::string& name) { return covariate_value(s, e, name); };
      for (Eigen::Index j = 0; j < p; ++j) {
        auto v = detail::column_value(d.columns[static_cast<std::size_t>(j)], lookup, e.treated, e.tstop);
        if (!v || !std::isfinite(*v))
          throw data_error("MissingCovariate", "subject " + s.id + ": no value for " +
                                                   d.columns[static_cast<std::size_t>(j)].covariate +
                                                   " on (" + std::to_string(e.tstart) + ", " +
                                                   std::to_string(e.tstop) + "]");
        d.x(static_cast<Eigen::Index>(r), j) = *v;
      }
      double w = 1.0;
      if (spec.weights) {
        const std::size_t src_k = origin.empty() ? k : origin[i][k];
        w = (*spec.weights)[i][src_k];
        if (!(w >= 0.0) || !std::isfinite(w))
          throw data_error("InvalidWeight", "subject " + s.id + ": weight must be finite and >= 0");
      }
      d.start.push_back(e.tstart);
      d.stop.push_back(e.tstop);
      d.weight.push_back(w);
      d.event.push_back(e.status == spec.event_code ? 1 : 0);
      d.subject.push_back(i);
    }
  }

  // Constant columns are centered at their exact value so they vanish.
  d.center = Eigen::VectorXd::Zero(p);
  d.constant.assign(static_cast<std::size_t>(p), true);
  for (Eigen::Index j = 0; j < p; ++j) {
    if (n == 0) continue;
    const double first = d.x(0, j);
    bool constant = true;
    double sum = 0.0;
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
      constant = constant && d.x(i, j) == first;
      sum += d.x(i, j);
    }
    d.constant[static_cast<std::size_t>(j)] = constant;
    d.center[j] = constant ? first : sum / static_cast<double>(n);
    d.x.col(j).array() -= d.center[j];
  }

  d.by_stop_desc.resize(n);
  std::iota(d.by_stop_desc.begin(), d.by_stop_desc.end(), std::size_t{0});
  d.by_start_desc = d.by_stop_desc;
  std::stable_sort(d.by_stop_desc.begin(), d.by_stop_desc.end(),
                   [&](std::size_t a, std::size_t b) { return d.stop[a] > d.stop[b]; });
  std::stable_sort(d.by_start_desc.begin(), d.by_start_desc.end(),
                   [&](std::size_t a, std::size_t b) { return d.start[a] > d.start[b]; });
  for (auto row : d.by_stop_desc) {
    if (!d.event[row]) continue;
    if (d.groups.empty() || d.groups.back().time != d.stop[row]) d.groups.push_back({d.stop[row], {}});
    d.groups.back().rows.push_back(row);
  }
  return d;
}

namespace detail {

struct RiskSums {
  double s0 = 0.0;
  Eigen::VectorXd s1;
  Eigen::MatrixXd s2;
};

struct TiedSums {
  std::size_t d = 0;
  double wsum = 0.0;
  double s0 = 0.0;
  double weta = 0.0;
  Eigen::VectorXd wx, s1;
  Eigen::MatrixXd s2;
};

// Visits event times in descending order with the risk set {start < t <= stop}.
template <class Visitor>
void sweep(const CoxDesign& d, const Eigen::VectorXd& beta, bool need_s2, Visitor&& visit) {
  const auto p = d.p();
  const std::size_t n = d.rows();
  Eigen::VectorXd eta = d.x * beta;
  std::vector<double> risk(n);
  for (std::size_t i = 0; i < n; ++i) risk[i] = d.weight[i] * std::exp(eta[static_cast<Eigen::Index>(i)]);

  RiskSums rs{0.0, Eigen::VectorXd::Zero(p), need_s2 ? Eigen::MatrixXd::Zero(p, p) : Eigen::MatrixXd()};
  auto accumulate = [&](std::size_t i, double sign) {
    const double r = sign * risk[i];
    rs.s0 += r;
    auto xi = d.x.row(static_cast<Eigen::Index>(i)).transpose();
    rs.s1 += r * xi;
    if (need_s2) rs.s2.noalias() += r * xi * xi.transpose();
  };

  std::size_t ia = 0, ir = 0;
  TiedSums ts;
  for (const auto& g : d.groups) {
    while (ia < n && d.stop[d.by_stop_desc[ia]] >= g.time) accumulate(d.by_stop_desc[ia++], 1.0);
    while (ir < n && d.start[d.by_start_desc[ir]] >= g.time) accumulate(d.by_start_desc[ir++], -1.0);

    ts.d = g.rows.size();
    ts.wsum = ts.s0 = ts.weta = 0.0;
    ts.wx = Eigen::VectorXd::Zero(p);
    ts.s1 = Eigen::VectorXd::Zero(p);
    if (need_s2) ts.s2 = Eigen::MatrixXd::Zero(p, p);
    for (auto i : g.rows) {
      const double w = d.weight[i];
      auto xi = d.x.row(static_cast<Eigen::Index>(i)).transpose();
      ts.wsum += w;
      ts.weta += w * eta[static_cast<Eigen::Index>(i)];
      ts.wx += w * xi;
      ts.s0 += risk[i];
      ts.s1 += risk[i] * xi;
      if (need_s2) ts.s2.noalias() += risk[i] * xi * xi.transpose();
    }
    visit(g, rs, ts);
  }
}

// Efron: the tied events leave the risk set in d equal steps of 1/d; every
// tied event carries the group's mean weight. Breslow: one step with f = 0.
template <class Step>
void tie_steps(TieMethod ties, const TiedSums& ts, Step&& step) {
  if (ties == TieMethod::Breslow || ts.d == 1) {
    step(0.0, ts.wsum);
    return;
  }
  const double meanw = ts.wsum / static_cast<double>(ts.d);
  for (std::size_t k = 0; k < ts.d; ++k) step(static_cast<double>(k) / static_cast<double>(ts.d), meanw);
}

}  // namespace detail

struct CoxEvaluation {
  double loglik = 0.0;
  Eigen::VectorXd score;
  Eigen::MatrixXd information;
};

/// Weighted partial log-likelihood, score, and observed information at `beta`.
inline CoxEvaluation evaluate(const CoxDesign& d, const Eigen::VectorXd& beta, TieMethod ties,
                              bool need_information = true) {
  const auto p = d.p();
  CoxEvaluation ev{0.0, Eigen::VectorXd::Zero(p),
                   need_information ? Eigen::MatrixXd::Zero(p, p) : Eigen::MatrixXd()};
  detail::sweep(d, beta, need_information, [&](const auto&, const detail::RiskSums& rs, const detail::TiedSums& ts) {
    ev.loglik += ts.weta;
    ev.score += ts.wx;
    detail::tie_steps(ties, ts, [&](double f, double mass) {
      const double den = rs.s0 - f * ts.s0;
      const Eigen::VectorXd num = rs.s1 - f * ts.s1;
      ev.loglik -= mass * std::log(den);
      const Eigen::VectorXd mean = num / den;
      ev.score -= mass * mean;
      if (need_information) ev.information += mass * ((rs.s2 - f * ts.s2) / den - mean * mean.transpose());
    });
  });
  return ev;
}

inline double partial_loglik(const CountingProcessDataset& ds, const CoxSpec& spec, const Eigen::VectorXd& beta) {
  return evaluate(build_design(ds, spec), beta, spec.ties, false).loglik;
}
inline Eigen::VectorXd score(const CountingProcessDataset& ds, const CoxSpec& spec, const Eigen::VectorXd& beta) {
  return evaluate(build_design(ds, spec), beta, spec.ties, false).score;
}
inline Eigen::MatrixXd information(const CountingProcessDataset& ds, const CoxSpec& spec,
                                   const Eigen::VectorXd& beta) {
  return evaluate(build_design(ds, spec), beta, spec.ties, true).information;
}

/// Baseline hazard increments at covariates zero and A = 0 (tie-method adjusted).
inline BaselineHazard baseline_hazard(const CoxDesign& d, const Eigen::VectorXd& beta, TieMethod ties) {
  BaselineHazard h;
  const double shift = std::exp(-d.center.dot(beta));
  detail::sweep(d, beta, false, [&](const auto& g, const detail::RiskSums& rs, const detail::TiedSums& ts) {
    double inc = 0.0;
    detail::tie_steps(ties, ts, [&](double f, double mass) { inc += mass / (rs.s0 - f * ts.s0); });
    h.times.push_back(g.time);
    h.increments.push_back(inc * shift);
  });
  std::reverse(h.times.begin(), h.times.end());
  std::reverse(h.increments.begin(), h.increments.end());
  h.cumulative.resize(h.increments.size());
  std::partial_sum(h.increments.begin(), h.increments.end(), h.cumulative.begin());
  return h;
}

inline BaselineHazard baseline_cumhaz(const CoxModel& model) { return model.baseline; }

struct FitOptions {
  int max_iterations = 50;
  double score_tolerance = 1e-8;
  double loglik_tolerance = 1e-10;  // relative change
  double divergence_bound = 15.0;
  int max_halvings = 30;
};

namespace detail {

// Solves info * step = score on the active columns; throws if not positive definite.
inline Eigen::VectorXd newton_step(const CoxEvaluation& ev, const std::vector<Eigen::Index>& active) {
  const auto m = static_cast<Eigen::Index>(active.size());
  Eigen::MatrixXd a(m, m);
  Eigen::VectorXd b(m);
  for (Eigen::Index r = 0; r < m; ++r) {
    b[r] = ev.score[active[static_cast<std::size_t>(r)]];
    for (Eigen::Index c = 0; c < m; ++c)
      a(r, c) = ev.information(active[static_cast<std::size_t>(r)], active[static_cast<std::size_t>(c)]);
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  const auto dvec = ldlt.vectorD();
  const double scale = dvec.cwiseAbs().maxCoeff();
  if (ldlt.info() != Eigen::Success || !(dvec.minCoeff() > 1e-10 * std::max(scale, 1e-300)))
    throw numeric_error("SingularInformation", "information matrix is not positive definite (collinear terms?)");
  Eigen::VectorXd step = ldlt.solve(b);
  Eigen::VectorXd full = Eigen::VectorXd::Zero(ev.score.size());
  for (Eigen::Index r = 0; r < m; ++r) full[active[static_cast<std::size_t>(r)]] = step[r];
  return full;
}

inline double max_abs(const Eigen::VectorXd& v, const std::vector<Eigen::Index>& active) {
  double m = 0.0;
  for (auto j : active) m = std::max(m, std::abs(v[j]));
  return m;
}

}  // namespace detail

/// Newton-Raphson with step-halving from beta = 0.
inline CoxModel fit(const CountingProcessDataset& ds, const CoxSpec& spec, const FitOptions& opt = {}) {
  CoxDesign d = build_design(ds, spec);
  if (d.groups.empty())
    throw data_error("NoEvents", std::string("no episodes end with status ") + std::string(to_string(spec.event_code)));
  if (spec.treatment && !spec.treatment->cuts.empty()) {
    const double last = *std::max_element(d.stop.begin(), d.stop.end());
    if (spec.treatment->cuts.back() >= last)
      throw usage_error("InvalidSegments", "treatment segment cuts must lie within observed follow-up");
  }

  const auto p = d.p();
  std::vector<Eigen::Index> active;
  CoxModel m;
  m.spec = spec;
  m.columns = d.columns;
  m.covariates = d.covariates;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (d.constant[static_cast<std::size_t>(j)])
      m.aliased.push_back(d.columns[static_cast<std::size_t>(j)].name);
    else
      active.push_back(j);
  }

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  CoxEvaluation ev = evaluate(d, beta, spec.ties);
  int it = 0;
  bool converged = active.empty() || detail::max_abs(ev.score, active) < opt.score_tolerance;
  while (!converged && it < opt.max_iterations) {
    Eigen::VectorXd step = detail::newton_step(ev, active);
    Eigen::VectorXd cand = beta + step;
    CoxEvaluation cev = evaluate(d, cand, spec.ties);
    int halvings = 0;
    const double slack = 1e-13 * std::max(1.0, std::abs(ev.loglik));
    while (!(std::isfinite(cev.loglik) && cev.loglik >= ev.loglik - slack) && halvings < opt.max_halvings) {
      step *= 0.5;
      cand = beta + step;
      cev = evaluate(d, cand, spec.ties);
      ++halvings;
    }
    ++it;
    if (!(std::isfinite(cev.loglik) && cev.loglik >= ev.loglik - slack)) {
      converged = true;  // no ascent possible from beta: numerically at the maximum
      break;
    }
    const double rel = std::abs(cev.loglik - ev.loglik) / std::max(1.0, std::abs(ev.loglik));
    beta = cand;
    ev = std::move(cev);
    const double grad = detail::max_abs(ev.score, active);
    for (auto j : active)
      if (std::abs(beta[j]) > opt.divergence_bound && grad >= opt.score_tolerance)
        throw numeric_error("MonotoneLikelihood", "coefficient for '" + d.columns[static_cast<std::size_t>(j)].name +
                                                      "' diverges (|beta| > " + std::to_string(opt.divergence_bound) +
                                                      "); likelihood is monotone");
    converged = grad < opt.score_tolerance || rel < opt.loglik_tolerance;
  }
  if (!converged)
    throw numeric_error("NoConvergence", "Newton-Raphson did not converge in " + std::to_string(opt.max_iterations) +
                                             " iterations");

  m.beta = beta;
  m.information = ev.information;
  for (Eigen::Index j = 0; j < p; ++j)
    if (d.constant[static_cast<std::size_t>(j)]) {
      m.information.row(j).setZero();
      m.information.col(j).setZero();
    }
  m.convergence = {it, detail::max_abs(ev.score, active), ev.loglik, true};
  m.degenerate = !m.aliased.empty();
  if (!active.empty()) {
    try {
      (void)detail::newton_step(ev, active);
    } catch (const Error&) {
      m.degenerate = true;
    }
  }
  m.baseline = baseline_hazard(d, beta, spec.ties);
  for (std::size_t i = 0; i < d.rows(); ++i)
    if (d.event[i]) {
      m.events += d.weight[i];
      ++m.event_rows;
    }
  m.last_followup = d.stop.empty() ? 0.0 : *std::max_element(d.stop.begin(), d.stop.end());
  return m;
}

// Treatment paths A(t) for prediction.
using TreatmentPath = std::function<bool(double)>;
inline TreatmentPath never_treated() {
  return [](double) { return false; };
}
inline TreatmentPath always_treated() {
  return [](double) { return true; };
}
inline TreatmentPath treated_from(double v) {
  return [v](double t) { return t > v; };
}

/// Linear predictor at each baseline jump time for a profile and a treatment path.
inline std::vector<double> linear_predictor(const CoxModel& model, const Profile& profile,
                                            const TreatmentPath& path = never_treated()) {
  auto lookup = [&](const std::string& name) -> std::optional<double> {
    if (auto it = profile.find(name); it != profile.end()) return it->second;
    return std::nullopt;
  };
  double fixed = 0.0;
  bool has_treatment = false;
  for (std::size_t j = 0; j < model.columns.size(); ++j) {
    const auto& c = model.columns[j];
    if (c.source == TermColumn::Source::Treatment) {
      has_treatment = true;
      continue;
    }
    auto v = detail::column_value(c, lookup, false, 0.0);
    if (!v) throw data_error("ProfileIncomplete", "profile has no value for '" + c.covariate + "'");
    fixed += model.beta[static_cast<Eigen::Index>(j)] * *v;
  }
  std::vector<double> lp(model.baseline.times.size(), fixed);
  if (has_treatment)
    for (std::size_t k = 0; k < lp.size(); ++k) {
      const double t = model.baseline.times[k];
      const bool a = path(t);
      for (std::size_t j = 0; j < model.columns.size(); ++j) {
        const auto& c = model.columns[j];
        if (c.source == TermColumn::Source::Treatment)
          lp[k] += model.beta[static_cast<Eigen::Index>(j)] * *detail::column_value(c, lookup, a, t);
      }
    }
  return lp;
}

/// dH(t_k | profile) = dH0(t_k) * exp(lp(t_k)).
inline std::vector<double> hazard_increments(const CoxModel& model, const Profile& profile,
                                             const TreatmentPath& path = never_treated()) {
  auto lp = linear_predictor(model, profile, path);
  std::vector<double> dh(lp.size());
  for (std::size_t k = 0; k < lp.size(); ++k) dh[k] = model.baseline.increments[k] * std::exp(lp[k]);
  return dh;
}

inline SurvivalCurve predict_survival(const CoxModel& model, const Profile& profile,
                                      const TreatmentPath& path = never_treated(),
                                      SurvivalForm form = SurvivalForm::Exponential) {
  return survival_from_increments(model.baseline.times, hazard_increments(model, profile, path), form);
}

struct SchoenfeldResidual {
  double time = 0.0;
  std::string subject_id;
  std::vector<double> values;  // per term: observed minus risk-set weighted mean
};

struct SchoenfeldTable {
  std::vector<std::string> terms;
  std::vector<SchoenfeldResidual> rows;  // ascending time
};

inline SchoenfeldTable schoenfeld_residuals(const CoxModel& model, const CountingProcessDataset& ds) {
  const CoxDesign d = build_design(ds, model.spec);
  SchoenfeldTable out;
  out.terms = model.term_names();
  const auto p = d.p();
  detail::sweep(d, model.beta, false, [&](const auto& g, const detail::RiskSums& rs, const detail::TiedSums& ts) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(p);
    double total = 0.0;
    detail::tie_steps(model.spec.ties, ts, [&](double f, double mass) {
      mean += mass * (rs.s1 - f * ts.s1) / (rs.s0 - f * ts.s0);
      total += mass;
    });
    mean /= total;
    std::vector<SchoenfeldResidual> group;
    for (auto i : g.rows) {
      SchoenfeldResidual r{g.time, ds.subjects[d.subject[i]].id, std::vector<double>(static_cast<std::size_t>(p))};
      for (Eigen::Index j = 0; j < p; ++j)
        r.values[static_cast<std::size_t>(j)] = d.x(static_cast<Eigen::Index>(i), j) - mean[j];
      group.push_back(std::move(r));
    }
    out.rows.insert(out.rows.end(), group.rbegin(), group.rend());
  });
  std::reverse(out.rows.begin(), out.rows.end());
  return out;
}

}  // namespace predictimand
