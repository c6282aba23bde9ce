#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "predictimand/error.hpp"

namespace predictimand {

// Status codes are also the on-disk codes.
enum class Status : int { Censored = 0, Event = 1, TreatmentStart = 2 };

// Study designs: follow-up ends at treatment start, or continues after it.
enum class Design { StopsAtTreatment, ContinuesAfterTreatment };

enum class CovariateKind { Baseline, TimeVarying };

struct CovariateInfo {
  std::string name;
  CovariateKind kind = CovariateKind::Baseline;
  // Non-empty for categorical covariates; values are stored as the level index
  // and the first level is the reference category.
  std::vector<std::string> levels;
  std::string unit;

  bool categorical() const { return !levels.empty(); }
};

struct CovariateSchema {
  std::vector<CovariateInfo> covariates;
  std::string time_unit = "years";

  const CovariateInfo* find(std::string_view name) const {
    for (const auto& c : covariates)
      if (c.name == name) return &c;
    return nullptr;
  }
  bool contains(std::string_view name) const { return find(name) != nullptr; }

  std::vector<std::string> names(CovariateKind kind) const {
    std::vector<std::string> out;
    for (const auto& c : covariates)
      if (c.kind == kind) out.push_back(c.name);
    return out;
  }
};

// Baseline covariate values X(0) for prediction, keyed by covariate name.
using Profile = std::map<std::string, double>;

struct Episode {
  double tstart = 0.0;
  double tstop = 0.0;
  // Interior episodes carry Censored ("nothing happened at tstop") or
  // TreatmentStart; Event only ever appears on the final episode.
  Status status = Status::Censored;
  bool treated = false;
  // X(t) in force over (tstart, tstop]; nullopt marks a missing measurement.
  std::map<std::string, std::optional<double>> tv;
};

struct SubjectRecord {
  std::string id;
  std::vector<Episode> episodes;
  std::map<std::string, double> baseline;

  double end_time() const { return episodes.empty() ? 0.0 : episodes.back().tstop; }
  Status final_status() const { return episodes.empty() ? Status::Censored : episodes.back().status; }

  std::optional<double> treatment_time() const {
    for (const auto& e : episodes)
      if (e.status == Status::TreatmentStart) return e.tstop;
    return std::nullopt;
  }
};

// Immutable after construction; every transform returns a new dataset.
struct CountingProcessDataset {
  std::vector<SubjectRecord> subjects;
  CovariateSchema schema;
  Design design = Design::ContinuesAfterTreatment;

  std::size_t episode_count() const {
    std::size_t n = 0;
    for (const auto& s : subjects) n += s.episodes.size();
    return n;
  }
};

inline std::string_view to_string(Status s) {
  switch (s) {
    case Status::Censored: return "censored";
    case Status::Event: return "event";
    case Status::TreatmentStart: return "treatment-start";
  }
  return "?";
}

inline std::string_view to_string(Design d) {
  return d == Design::StopsAtTreatment ? "stops-at-treatment" : "continues-after-treatment";
}

// Time-varying value takes precedence over a baseline value of the same name.
inline std::optional<double> covariate_value(const SubjectRecord& subject, const Episode& episode,
                                             std::string_view name) {
  if (auto it = episode.tv.find(std::string(name)); it != episode.tv.end()) return it->second;
  if (auto it = subject.baseline.find(std::string(name)); it != subject.baseline.end())
    return it->second;
  return std::nullopt;
}

/// Checks the SubjectRecord / Episode invariants. Throws a Data error naming
/// the subject and episode index; CSV ingestion rewrites it with line numbers.
inline void validate_subject(const SubjectRecord& s, const CovariateSchema& schema) {
  auto fail = [&](const char* code, std::size_t k, const std::string& why) {
    throw data_error(code, "subject " + s.id + " episode " + std::to_string(k) + ": " + why);
  };
  if (s.episodes.empty()) throw data_error("MalformedRow", "subject " + s.id + " has no episodes");
  bool treated_seen = false;
  for (std::size_t k = 0; k < s.episodes.size(); ++k) {
    const auto& e = s.episodes[k];
    if (!std::isfinite(e.tstart) || !std::isfinite(e.tstop)) fail("MalformedRow", k, "non-finite time");
    if (e.tstart < 0.0 || e.tstop < 0.0) fail("NegativeTime", k, "negative time");
    if (k == 0 && e.tstart != 0.0) fail("NonContiguousEpisodes", k, "follow-up must start at time 0");
    if (k > 0 && e.tstart != s.episodes[k - 1].tstop)
      fail("NonContiguousEpisodes", k, "start does not equal previous stop");
    if (!(e.tstart < e.tstop)) {
      if (k > 0 && s.episodes[k - 1].status == Status::TreatmentStart)
        fail("MalformedRow", k, "event tied with treatment start");
      fail("MalformedRow", k, "tstart must be < tstop");
    }
    const bool last = k + 1 == s.episodes.size();
    if (e.status == Status::Event && !last) fail("MalformedRow", k, "event before the final episode");
    if (e.treated != treated_seen)
      fail("MalformedRow", k, treated_seen ? "treatment indicator must stay on after treatment start"
                                           : "treated episode without a preceding treatment start");
    if (e.status == Status::TreatmentStart) {
      if (treated_seen) fail("MalformedRow", k, "second treatment start");
      treated_seen = true;
    }
    for (const auto& [name, value] : e.tv) {
      (void)value;
      if (!schema.contains(name)) fail("UnknownCovariate", k, "covariate '" + name + "' not in schema");
    }
  }
  for (const auto& [name, value] : s.baseline) {
    (void)value;
    if (!schema.contains(name))
      throw data_error("UnknownCovariate", "subject " + s.id + ": covariate '" + name + "' not in schema");
  }
}

inline void validate(const CountingProcessDataset& ds) {
  for (const auto& s : ds.subjects) {
    validate_subject(s, ds.schema);
    if (ds.design == Design::StopsAtTreatment)
      for (const auto& e : s.episodes)
        if (e.treated)
          throw data_error("DesignViolation",
                           "subject " + s.id + " has treated follow-up in a stops-at-treatment dataset");
  }
}

// Any treated person-time means follow-up continues after treatment. A
// dataset without treated episodes but with treatment starts stops there.
inline Design infer_design(const std::vector<SubjectRecord>& subjects) {
  bool any_start = false;
  for (const auto& s : subjects)
    for (const auto& e : s.episodes) {
      if (e.treated) return Design::ContinuesAfterTreatment;
      any_start = any_start || e.status == Status::TreatmentStart;
    }
  return any_start ? Design::StopsAtTreatment : Design::ContinuesAfterTreatment;
}

inline double person_time(const CountingProcessDataset& ds) {
  double total = 0.0;
  for (const auto& s : ds.subjects)
    for (const auto& e : s.episodes) total += e.tstop - e.tstart;
  return total;
}

inline double treated_person_time(const CountingProcessDataset& ds) {
  double total = 0.0;
  for (const auto& s : ds.subjects)
    for (const auto& e : s.episodes)
      if (e.treated) total += e.tstop - e.tstart;
  return total;
}

inline std::size_t count_status(const CountingProcessDataset& ds, Status status) {
  std::size_t n = 0;
  for (const auto& s : ds.subjects)
    for (const auto& e : s.episodes) n += e.status == status;
  return n;
}

/// Censor-at-treatment view: follow-up ends at TreatmentStart, which becomes the
/// terminal status; post-treatment episodes are dropped.
inline CountingProcessDataset split_at_treatment(const CountingProcessDataset& ds) {
  CountingProcessDataset out{{}, ds.schema, Design::StopsAtTreatment};
  out.subjects.reserve(ds.subjects.size());
  for (const auto& s : ds.subjects) {
    SubjectRecord r{s.id, {}, s.baseline};
    for (const auto& e : s.episodes) {
      if (e.treated) break;
      r.episodes.push_back(e);
      if (e.status == Status::TreatmentStart) break;
    }
    out.subjects.push_back(std::move(r));
  }
  return out;
}

/// Outcome min(T, V): whichever of event or treatment start comes first is an Event.
inline CountingProcessDataset compose_outcome(const CountingProcessDataset& ds) {
  auto out = split_at_treatment(ds);
  for (auto& s : out.subjects)
    if (s.episodes.back().status == Status::TreatmentStart) s.episodes.back().status = Status::Event;
  return out;
}

/// Splits episodes at the given cut times. Interior pieces get status Censored
/// and inherit covariates; `origin` (if given) receives, per subject, the index
/// of the source episode of each output episode.
inline CountingProcessDataset refine_episodes(const CountingProcessDataset& ds, std::vector<double> cuts,
                                              std::vector<std::vector<std::size_t>>* origin = nullptr) {
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  CountingProcessDataset out{{}, ds.schema, ds.design};
  out.subjects.reserve(ds.subjects.size());
  if (origin) origin->assign(ds.subjects.size(), {});
  for (std::size_t i = 0; i < ds.subjects.size(); ++i) {
    const auto& s = ds.subjects[i];
    SubjectRecord r{s.id, {}, s.baseline};
    for (std::size_t k = 0; k < s.episodes.size(); ++k) {
      const auto& e = s.episodes[k];
      double lo = e.tstart;
      auto it = std::upper_bound(cuts.begin(), cuts.end(), lo);
      for (; it != cuts.end() && *it < e.tstop; ++it) {
        Episode piece = e;
        piece.tstart = lo;
        piece.tstop = *it;
        piece.status = Status::Censored;
        r.episodes.push_back(std::move(piece));
        if (origin) (*origin)[i].push_back(k);
        lo = *it;
      }
      Episode last = e;
      last.tstart = lo;
      r.episodes.push_back(std::move(last));
      if (origin) (*origin)[i].push_back(k);
    }
    out.subjects.push_back(std::move(r));
  }
  return out;
}

enum class ImputationPolicy { LOCF, MedianFallback };

/// Fills missing time-varying covariate values.
///
/// LOCF carries the last observed value forward within a subject; leading gaps
/// take the subject's first observed value. MedianFallback additionally fills
/// subjects with no observation at all with the median, across subjects, of
/// each subject's first observation. Under plain LOCF such subjects stay missing.
inline CountingProcessDataset impute_tv_covariates(const CountingProcessDataset& ds, ImputationPolicy policy) {
  auto out = ds;
  for (const auto& name : ds.schema.names(CovariateKind::TimeVarying)) {
    std::vector<double> firsts;
    std::vector<std::size_t> unobserved;
    for (std::size_t i = 0; i < out.subjects.size(); ++i) {
      auto& eps = out.subjects[i].episodes;
      std::optional<double> first;
      for (const auto& e : eps)
        if (auto it = e.tv.find(name); it != e.tv.end() && it->second) {
          first = *it->second;
          break;
        }
      if (!first) {
        unobserved.push_back(i);
        continue;
      }
      firsts.push_back(*first);
      double carry = *first;
      for (auto& e : eps) {
        auto& slot = e.tv[name];
        if (slot)
          carry = *slot;
        else
          slot = carry;
      }
    }
    if (firsts.empty() && !out.subjects.empty())
      throw data_error("NoObservationsAnywhere", "covariate '" + name + "' is missing for every subject");
    if (policy == ImputationPolicy::MedianFallback && !unobserved.empty()) {
      std::sort(firsts.begin(), firsts.end());
      const std::size_t m = firsts.size();
      const double median = m % 2 ? firsts[m / 2] : 0.5 * (firsts[m / 2 - 1] + firsts[m / 2]);
      for (auto i : unobserved)
        for (auto& e : out.subjects[i].episodes) e.tv[name] = median;
    }
  }
  return out;
}

}  // namespace predictimand
