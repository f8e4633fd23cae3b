#pragma once

// Event log data model, CSV ingestion and outcome labelling.

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "popx/common.hpp"
#include "popx/config.hpp"
#include "popx/csv.hpp"
#include "popx/timestamp.hpp"

namespace popx {

inline constexpr std::string_view kMissingCategory = "__missing__";

enum class Role {
  kCaseId,
  kActivity,
  kTimestamp,
  kLabel,
  kStaticCategorical,
  kStaticNumeric,
  kDynamicCategorical,
  kDynamicNumeric,
};

inline std::string_view to_string(Role r) {
  switch (r) {
    case Role::kCaseId: return "case_id";
    case Role::kActivity: return "activity";
    case Role::kTimestamp: return "timestamp";
    case Role::kLabel: return "label";
    case Role::kStaticCategorical: return "static_categorical";
    case Role::kStaticNumeric: return "static_numeric";
    case Role::kDynamicCategorical: return "dynamic_categorical";
    case Role::kDynamicNumeric: return "dynamic_numeric";
  }
  return "?";
}

inline std::optional<Role> parse_role(std::string_view s) {
  for (Role r : {Role::kCaseId, Role::kActivity, Role::kTimestamp, Role::kLabel, Role::kStaticCategorical,
                 Role::kStaticNumeric, Role::kDynamicCategorical, Role::kDynamicNumeric})
    if (to_string(r) == s) return r;
  return std::nullopt;
}

struct ColumnRole {
  std::string name;
  Role role;
  bool operator==(const ColumnRole&) const = default;
};

/// Declares what every CSV column means. Column order is the file's canonical order.
struct AttributeSchema {
  std::vector<ColumnRole> columns;
  std::string timestamp_format = "%Y-%m-%d %H:%M:%S";
  std::string positive_label = "deviant";
  std::string negative_label = "regular";

  bool operator==(const AttributeSchema&) const = default;

  std::vector<std::string> names_with(Role role) const {
    std::vector<std::string> out;
    for (const auto& c : columns)
      if (c.role == role) out.push_back(c.name);
    return out;
  }

  std::optional<std::string> single(Role role) const {
    auto names = names_with(role);
    if (names.empty()) return std::nullopt;
    return names.front();
  }

  std::string case_id_column() const { return *single(Role::kCaseId); }
  std::string activity_column() const { return *single(Role::kActivity); }
  std::string timestamp_column() const { return *single(Role::kTimestamp); }

  /// Throws unless exactly one case_id/activity/timestamp, at most one label, unique names.
  void validate() const {
    std::set<std::string> seen;
    for (const auto& c : columns) {
      if (c.name.empty()) throw Error("schema: empty column name");
      if (!seen.insert(c.name).second) throw Error("schema: column '" + c.name + "' assigned more than once");
    }
    for (Role r : {Role::kCaseId, Role::kActivity, Role::kTimestamp}) {
      const auto n = names_with(r).size();
      if (n == 0) throw Error("schema: missing " + std::string(to_string(r)) + " column");
      if (n > 1) throw Error("schema: duplicate " + std::string(to_string(r)) + " column");
    }
    if (names_with(Role::kLabel).size() > 1) throw Error("schema: duplicate label column");
    if (positive_label == negative_label) throw Error("schema: positive_label equals negative_label");
  }
};

inline AttributeSchema parse_schema(std::istream& in) {
  AttributeSchema schema;
  for (const auto& section : config::parse(in)) {
    for (const auto& e : section.entries) {
      if (e.key == "timestamp_format") {
        schema.timestamp_format = e.value;
      } else if (e.key == "positive_label") {
        schema.positive_label = e.value;
      } else if (e.key == "negative_label") {
        schema.negative_label = e.value;
      } else {
        auto role = parse_role(e.value);
        if (!role)
          throw Error("schema line " + std::to_string(e.line) + ": unknown role '" + e.value + "'");
        schema.columns.push_back({e.key, *role});
      }
    }
  }
  schema.validate();
  return schema;
}

inline AttributeSchema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open schema '" + path + "'");
  return parse_schema(in);
}

inline void write_schema(std::ostream& out, const AttributeSchema& schema) {
  for (const auto& c : schema.columns) out << c.name << " = " << to_string(c.role) << '\n';
  out << "timestamp_format = " << schema.timestamp_format << '\n';
  out << "positive_label = " << schema.positive_label << '\n';
  out << "negative_label = " << schema.negative_label << '\n';
}

struct Event {
  std::string case_id;
  std::string activity;
  TimestampMs timestamp = 0;
  std::map<std::string, std::string> statics;
  std::map<std::string, std::string> dynamics;

  bool operator==(const Event&) const = default;
};

struct Trace {
  std::string case_id;
  std::vector<Event> events;
  std::optional<int> label;  // 1 = deviant, 0 = regular

  bool operator==(const Trace&) const = default;

  TimestampMs start() const { return events.front().timestamp; }
};

/// Immutable after construction; safe to share across threads.
struct EventLog {
  std::vector<Trace> traces;
  AttributeSchema schema;

  bool operator==(const EventLog&) const = default;

  std::size_t event_count() const {
    std::size_t n = 0;
    for (const auto& t : traces) n += t.events.size();
    return n;
  }
  bool fully_labelled() const {
    return std::all_of(traces.begin(), traces.end(), [](const Trace& t) { return t.label.has_value(); });
  }
};

/// Groups rows by case (traces in order of first appearance), stable-sorts each
/// trace by timestamp and checks the static/label invariants.
inline EventLog parse_csv(std::istream& in, const AttributeSchema& schema) {
  schema.validate();
  const csv::Table table = csv::read_table(in);

  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    if (!index.emplace(table.header[i], i).second)
      throw Error("csv: duplicate header column '" + table.header[i] + "'");
  }
  std::vector<std::pair<std::size_t, Role>> roles;
  for (const auto& c : schema.columns) {
    auto it = index.find(c.name);
    if (it == index.end()) throw Error("csv: schema column '" + c.name + "' missing from header");
    roles.emplace_back(it->second, c.role);
  }
  for (const auto& name : table.header) {
    if (std::none_of(schema.columns.begin(), schema.columns.end(),
                     [&](const ColumnRole& c) { return c.name == name; }))
      throw Error("csv: column '" + name + "' has no role in the schema");
  }

  EventLog log;
  log.schema = schema;
  std::unordered_map<std::string, std::size_t> trace_of;
  std::vector<std::vector<std::string>> raw_labels;  // per trace, one cell per event

  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string where = "line " + std::to_string(table.line_numbers[r]);
    Event ev;
    std::string label_cell;
    for (std::size_t k = 0; k < roles.size(); ++k) {
      const auto& [col, role] = roles[k];
      const std::string& name = schema.columns[k].name;
      const std::string& cell = row[col];
      switch (role) {
        case Role::kCaseId:
          if (cell.empty()) throw Error(where + ": empty case id");
          ev.case_id = cell;
          break;
        case Role::kActivity:
          ev.activity = cell.empty() ? std::string(kMissingCategory) : cell;
          break;
        case Role::kTimestamp: {
          auto ts = parse_timestamp(cell, schema.timestamp_format);
          if (!ts)
            throw Error(where + ": cannot parse timestamp '" + cell + "' with format '" +
                        schema.timestamp_format + "'");
          ev.timestamp = *ts;
          break;
        }
        case Role::kLabel:
          label_cell = cell;
          break;
        case Role::kStaticCategorical:
          ev.statics[name] = cell.empty() ? std::string(kMissingCategory) : cell;
          break;
        case Role::kDynamicCategorical:
          ev.dynamics[name] = cell.empty() ? std::string(kMissingCategory) : cell;
          break;
        case Role::kStaticNumeric:
        case Role::kDynamicNumeric:
          if (trim(cell).empty()) throw Error(where + ": missing numeric value in column '" + name + "'");
          (role == Role::kStaticNumeric ? ev.statics : ev.dynamics)[name] = cell;
          break;
      }
    }
    auto [it, fresh] = trace_of.emplace(ev.case_id, log.traces.size());
    if (fresh) {
      log.traces.push_back(Trace{ev.case_id, {}, std::nullopt});
      raw_labels.emplace_back();
    }
    Trace& trace = log.traces[it->second];
    if (!trace.events.empty() && trace.events.front().statics != ev.statics) {
      for (const auto& [k, v] : ev.statics)
        if (trace.events.front().statics.at(k) != v)
          throw Error(where + ": static attribute varies in case '" + ev.case_id + "' (column '" + k + "')");
    }
    trace.events.push_back(std::move(ev));
    raw_labels[it->second].push_back(std::move(label_cell));
  }

  const bool has_label = schema.single(Role::kLabel).has_value();
  for (std::size_t t = 0; t < log.traces.size(); ++t) {
    Trace& trace = log.traces[t];
    std::stable_sort(trace.events.begin(), trace.events.end(),
                     [](const Event& a, const Event& b) { return a.timestamp < b.timestamp; });
    if (!has_label) continue;
    const auto& cells = raw_labels[t];
    if (std::any_of(cells.begin(), cells.end(), [&](const std::string& c) { return c != cells.front(); }))
      throw Error("label inconsistent within case '" + trace.case_id + "'");
    if (!cells.front().empty()) trace.label = cells.front() == schema.positive_label ? 1 : 0;
  }
  return log;
}

inline EventLog load_csv(const std::string& path, const AttributeSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open event log '" + path + "'");
  return parse_csv(in, schema);
}

/// Writes one row per event, traces in log order, columns in schema order.
inline void write_csv(std::ostream& out, const EventLog& log) {
  csv::Record header;
  for (const auto& c : log.schema.columns) header.push_back(c.name);
  csv::write_record(out, header);
  csv::Record rec(header.size());
  for (const auto& trace : log.traces) {
    for (const auto& ev : trace.events) {
      for (std::size_t k = 0; k < log.schema.columns.size(); ++k) {
        const auto& col = log.schema.columns[k];
        switch (col.role) {
          case Role::kCaseId: rec[k] = ev.case_id; break;
          case Role::kActivity: rec[k] = ev.activity; break;
          case Role::kTimestamp: rec[k] = format_timestamp(ev.timestamp, log.schema.timestamp_format); break;
          case Role::kLabel:
            rec[k] = !trace.label ? "" : (*trace.label ? log.schema.positive_label : log.schema.negative_label);
            break;
          case Role::kStaticCategorical:
          case Role::kStaticNumeric: rec[k] = ev.statics.at(col.name); break;
          case Role::kDynamicCategorical:
          case Role::kDynamicNumeric: rec[k] = ev.dynamics.at(col.name); break;
        }
      }
      csv::write_record(out, rec);
    }
  }
}

/// Regular (0) iff every occurrence of `a` is followed later in the trace by `b`.
inline int eventually_followed_label(const Trace& trace, std::string_view a, std::string_view b) {
  bool pending = false;
  for (const auto& ev : trace.events) {
    if (ev.activity == a) pending = true;
    else if (ev.activity == b) pending = false;
  }
  return pending ? 1 : 0;
}

/// Returns a relabelled copy. Adds a `label` column to the schema when it has none.
inline EventLog label_eventually_followed_by(const EventLog& log, std::string_view a, std::string_view b) {
  if (a == b) throw Error("label rule: activities must differ");
  EventLog out = log;
  for (auto& trace : out.traces) trace.label = eventually_followed_label(trace, a, b);
  if (!out.schema.single(Role::kLabel)) {
    std::string name = "label";
    auto taken = [&](const std::string& n) {
      return std::any_of(out.schema.columns.begin(), out.schema.columns.end(),
                         [&](const ColumnRole& c) { return c.name == n; });
    };
    while (taken(name)) name += "_";
    out.schema.columns.push_back({name, Role::kLabel});
  }
  return out;
}

}  // namespace popx
