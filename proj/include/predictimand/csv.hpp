#pragma once

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "predictimand/dataset.hpp"
#include "predictimand/format.hpp"

namespace predictimand {

namespace detail {

inline std::string trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return std::string(s);
}

inline std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    auto comma = line.find(',', pos);
    out.push_back(trim(line.substr(pos, comma == std::string_view::npos ? line.npos : comma - pos)));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
};

inline CsvTable read_table(std::istream& in) {
  CsvTable t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    if (line.find('"') != std::string::npos)
      throw data_error("MalformedRow", "line " + std::to_string(lineno) + ": quoted fields are not supported");
    auto fields = split_fields(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size())
      throw data_error("MalformedRow", "line " + std::to_string(lineno) + ": expected " +
                                           std::to_string(t.header.size()) + " fields, got " +
                                           std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
    t.line_numbers.push_back(lineno);
  }
  if (t.header.empty()) throw data_error("MalformedRow", "empty file: header required");
  return t;
}

enum class Layout { Long, Wide };

inline Layout detect_layout(const std::vector<std::string>& header) {
  static const std::vector<std::string> kLong{"id", "tstart", "tstop", "status", "treated"};
  static const std::vector<std::string> kWide{"id", "time", "status"};
  if (header.size() >= kLong.size() && std::equal(kLong.begin(), kLong.end(), header.begin()))
    return Layout::Long;
  if (header.size() >= kWide.size() && std::equal(kWide.begin(), kWide.end(), header.begin()))
    return Layout::Wide;
  throw data_error("MalformedRow",
                   "line 1: header must start with id,tstart,tstop,status,treated or id,time,status");
}

inline std::size_t first_covariate_column(Layout layout) { return layout == Layout::Long ? 5 : 3; }

}  // namespace detail

/// Builds a schema from the covariate columns of a CSV table. Non-numeric columns
/// become categorical (levels sorted, first is the reference). A column is
/// time-varying when named in `tv_names`, when it has empty fields, or when it
/// changes within a subject.
inline CovariateSchema infer_schema(std::istream& in, const std::vector<std::string>& tv_names = {}) {
  const auto table = detail::read_table(in);
  const auto layout = detail::detect_layout(table.header);
  CovariateSchema schema;
  for (std::size_t c = detail::first_covariate_column(layout); c < table.header.size(); ++c) {
    CovariateInfo info{table.header[c]};
    bool numeric = true, has_empty = false, varies = false;
    std::set<std::string> levels;
    std::map<std::string, std::string> first_by_id;
    for (const auto& row : table.rows) {
      const auto& v = row[c];
      if (v.empty()) {
        has_empty = true;
        continue;
      }
      if (!parse_number(v)) numeric = false;
      levels.insert(v);
      auto [it, inserted] = first_by_id.emplace(row[0], v);
      if (!inserted && it->second != v) varies = true;
    }
    if (!numeric) info.levels.assign(levels.begin(), levels.end());
    const bool hinted = std::find(tv_names.begin(), tv_names.end(), info.name) != tv_names.end();
    info.kind = (hinted || has_empty || varies) ? CovariateKind::TimeVarying : CovariateKind::Baseline;
    schema.covariates.push_back(std::move(info));
  }
  return schema;
}

/// Reads the long counting-process layout (or the wide baseline-only layout,
/// expanded to one episode per subject) and validates every subject.
inline CountingProcessDataset ingest_csv(std::istream& in, const CovariateSchema& schema,
                                         std::optional<Design> design = std::nullopt) {
  const auto table = detail::read_table(in);
  const auto layout = detail::detect_layout(table.header);
  const std::size_t first_cov = detail::first_covariate_column(layout);

  std::vector<const CovariateInfo*> columns;
  for (std::size_t c = first_cov; c < table.header.size(); ++c) {
    const auto* info = schema.find(table.header[c]);
    if (!info) throw data_error("UnknownCovariate", "line 1: column '" + table.header[c] + "' not in schema");
    columns.push_back(info);
  }

  struct Pending {
    SubjectRecord record;
    std::vector<std::size_t> lines;
  };
  std::vector<Pending> subjects;
  std::map<std::string, std::size_t> index_of;

  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string where = "line " + std::to_string(table.line_numbers[r]) + ": ";
    auto bad = [&](const std::string& why) { return data_error("MalformedRow", where + why); };
    if (row[0].empty()) throw bad("empty id");

    Episode e;
    std::size_t status_col = 0;
    if (layout == detail::Layout::Long) {
      auto t0 = parse_number(row[1]), t1 = parse_number(row[2]);
      if (!t0 || !t1) throw bad("tstart/tstop must be numbers");
      e.tstart = *t0;
      e.tstop = *t1;
      status_col = 3;
      if (row[4] != "0" && row[4] != "1") throw bad("treated must be 0 or 1");
      e.treated = row[4] == "1";
    } else {
      auto t = parse_number(row[1]);
      if (!t) throw bad("time must be a number");
      e.tstart = 0.0;
      e.tstop = *t;
      status_col = 2;
    }
    if (e.tstart < 0.0 || e.tstop < 0.0) throw data_error("NegativeTime", where + "negative time");
    const auto& st = row[status_col];
    if (st == "0")
      e.status = Status::Censored;
    else if (st == "1")
      e.status = Status::Event;
    else if (st == "2")
      e.status = Status::TreatmentStart;
    else
      throw bad("status must be 0, 1 or 2");

    auto [it, inserted] = index_of.emplace(row[0], subjects.size());
    if (inserted) subjects.push_back({SubjectRecord{row[0], {}, {}}, {}});
    auto& pending = subjects[it->second];

    for (std::size_t c = 0; c < columns.size(); ++c) {
      const auto& info = *columns[c];
      const auto& field = row[first_cov + c];
      std::optional<double> value;
      if (!field.empty()) {
        if (info.categorical()) {
          auto lv = std::find(info.levels.begin(), info.levels.end(), field);
          if (lv == info.levels.end()) throw bad("unknown level '" + field + "' for " + info.name);
          value = static_cast<double>(lv - info.levels.begin());
        } else {
          value = parse_number(field);
          if (!value) throw bad("non-numeric value '" + field + "' for " + info.name);
        }
      }
      if (info.kind == CovariateKind::TimeVarying) {
        e.tv[info.name] = value;
      } else {
        if (!value) throw bad("missing baseline covariate " + info.name);
        auto [b, fresh] = pending.record.baseline.emplace(info.name, *value);
        if (!fresh && b->second != *value) throw bad("baseline covariate " + info.name + " changes within subject");
      }
    }
    pending.record.episodes.push_back(std::move(e));
    pending.lines.push_back(table.line_numbers[r]);
  }

  CountingProcessDataset ds;
  ds.schema = schema;
  ds.subjects.reserve(subjects.size());
  for (auto& p : subjects) {
    // Rows of a subject may appear in any order; episodes are ordered by start.
    std::vector<std::size_t> order(p.record.episodes.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return p.record.episodes[a].tstart < p.record.episodes[b].tstart;
    });
    SubjectRecord sorted{p.record.id, {}, p.record.baseline};
    std::vector<std::size_t> lines;
    for (auto k : order) {
      sorted.episodes.push_back(std::move(p.record.episodes[k]));
      lines.push_back(p.lines[k]);
    }
    try {
      validate_subject(sorted, schema);
    } catch (const Error& err) {
      // Point at the first row of the offending subject.
      throw Error(err.kind(), err.code(), "line " + std::to_string(lines.front()) + ": " + err.detail());
    }
    ds.subjects.push_back(std::move(sorted));
  }
  ds.design = design.value_or(infer_design(ds.subjects));
  validate(ds);
  return ds;
}

inline CountingProcessDataset ingest_csv(const std::string& path, const CovariateSchema& schema,
                                         std::optional<Design> design = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw usage_error("FileNotFound", "cannot open " + path);
  return ingest_csv(in, schema, design);
}

inline CovariateSchema infer_schema(const std::string& path, const std::vector<std::string>& tv_names = {}) {
  std::ifstream in(path);
  if (!in) throw usage_error("FileNotFound", "cannot open " + path);
  return infer_schema(in, tv_names);
}

/// Writes the long layout: baseline columns, then time-varying columns, each in
/// schema order. Missing time-varying values are written as empty fields.
inline void write_csv(std::ostream& out, const CountingProcessDataset& ds) {
  std::vector<const CovariateInfo*> cols;
  for (auto kind : {CovariateKind::Baseline, CovariateKind::TimeVarying})
    for (const auto& c : ds.schema.covariates)
      if (c.kind == kind) cols.push_back(&c);
  out << "id,tstart,tstop,status,treated";
  for (const auto* c : cols) out << ',' << c->name;
  out << '\n';
  auto cell = [](const CovariateInfo& info, double v) {
    if (info.categorical()) return info.levels.at(static_cast<std::size_t>(v));
    return format_number(v);
  };
  for (const auto& s : ds.subjects)
    for (const auto& e : s.episodes) {
      out << s.id << ',' << format_number(e.tstart) << ',' << format_number(e.tstop) << ','
          << static_cast<int>(e.status) << ',' << (e.treated ? 1 : 0);
      for (const auto* c : cols) {
        out << ',';
        if (c->kind == CovariateKind::Baseline) {
          if (auto it = s.baseline.find(c->name); it != s.baseline.end()) out << cell(*c, it->second);
        } else if (auto it = e.tv.find(c->name); it != e.tv.end() && it->second) {
          out << cell(*c, *it->second);
        }
      }
      out << '\n';
    }
}

inline std::string write_csv(const CountingProcessDataset& ds) {
  std::ostringstream os;
  write_csv(os, ds);
  return os.str();
}

}  // namespace predictimand
