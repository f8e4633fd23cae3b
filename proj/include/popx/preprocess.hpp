#pragma once

// Temporal split, prefix extraction and the aggregation encoding.

#include <algorithm>
#include <cmath>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "popx/common.hpp"
#include "popx/csv.hpp"
#include "popx/eventlog.hpp"

namespace popx {

// ---------------------------------------------------------------------------
// Temporal split

struct SplitLogs {
  EventLog train;
  EventLog test;
};

/// Earliest ceil(ratio * N) cases (by first event) train, the rest test. Train
/// events at or after the first test case start are cut; emptied traces dropped.
inline SplitLogs temporal_split(const EventLog& log, double train_ratio) {
  if (!(train_ratio > 0.0 && train_ratio < 1.0)) throw Error("temporal_split: train_ratio must be in (0, 1)");
  if (!log.fully_labelled()) throw Error("temporal_split: every trace must be labelled");
  std::vector<const Trace*> order;
  for (const auto& t : log.traces)
    if (!t.events.empty()) order.push_back(&t);
  std::stable_sort(order.begin(), order.end(),
                   [](const Trace* a, const Trace* b) { return a->start() < b->start(); });
  const auto n = order.size();
  // the epsilon keeps products like 0.7 * 10 = 7.000000000000001 from rounding up
  const auto n_train = static_cast<std::size_t>(std::ceil(train_ratio * static_cast<double>(n) - 1e-9));
  if (n_train == 0 || n_train >= n) throw Error("temporal_split: one side of the split is empty");

  SplitLogs out{EventLog{{}, log.schema}, EventLog{{}, log.schema}};
  const TimestampMs test_start = order[n_train]->start();
  for (std::size_t i = 0; i < n_train; ++i) {
    Trace t = *order[i];
    std::erase_if(t.events, [&](const Event& e) { return e.timestamp >= test_start; });
    if (!t.events.empty()) out.train.traces.push_back(std::move(t));
  }
  for (std::size_t i = n_train; i < n; ++i) out.test.traces.push_back(*order[i]);
  if (out.train.traces.empty()) throw Error("temporal_split: train side is empty after cutting overlap");
  return out;
}

// ---------------------------------------------------------------------------
// Prefixes

struct Prefix {
  std::size_t trace_index;  // into PrefixLog::traces
  std::size_t length;
  std::optional<int> label;
};

/// All prefixes 1..min(|trace|, max_prefix) of each trace, ordered by case id then length.
struct PrefixLog {
  std::shared_ptr<const std::vector<Trace>> traces;
  std::vector<Prefix> prefixes;

  std::span<const Event> events(const Prefix& p) const {
    return std::span<const Event>((*traces)[p.trace_index].events).first(p.length);
  }
  const std::string& case_id(const Prefix& p) const { return (*traces)[p.trace_index].case_id; }
  std::size_t size() const { return prefixes.size(); }
};

inline PrefixLog extract_prefixes(const EventLog& log, std::size_t max_prefix) {
  if (max_prefix < 1) throw Error("extract_prefixes: max_prefix must be >= 1");
  PrefixLog out;
  auto traces = std::make_shared<std::vector<Trace>>(log.traces);
  std::vector<std::size_t> order(traces->size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return (*traces)[a].case_id < (*traces)[b].case_id; });
  for (std::size_t idx : order) {
    const Trace& t = (*traces)[idx];
    const std::size_t n = std::min(t.events.size(), max_prefix);
    for (std::size_t k = 1; k <= n; ++k) out.prefixes.push_back({idx, k, t.label});
  }
  out.traces = std::move(traces);
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

/// Distinct values per categorical attribute, in first-occurrence order.
struct Vocabulary {
  std::vector<std::string> activities;
  std::vector<std::pair<std::string, std::vector<std::string>>> attributes;  // schema order

  const std::vector<std::string>* values(std::string_view attribute) const {
    for (const auto& [name, vals] : attributes)
      if (name == attribute) return &vals;
    return nullptr;
  }
};

inline Vocabulary fit_vocabulary(const EventLog& train) {
  Vocabulary vocab;
  std::vector<std::string> cats;
  for (const auto& c : train.schema.columns)
    if (c.role == Role::kStaticCategorical || c.role == Role::kDynamicCategorical) cats.push_back(c.name);
  std::unordered_set<std::string> seen_act;
  std::vector<std::unordered_set<std::string>> seen(cats.size());
  for (const auto& name : cats) vocab.attributes.push_back({name, {}});
  for (const auto& t : train.traces) {
    for (const auto& ev : t.events) {
      if (seen_act.insert(ev.activity).second) vocab.activities.push_back(ev.activity);
      for (std::size_t i = 0; i < cats.size(); ++i) {
        const std::string* value = nullptr;
        if (auto it = ev.statics.find(cats[i]); it != ev.statics.end()) value = &it->second;
        else if (auto jt = ev.dynamics.find(cats[i]); jt != ev.dynamics.end()) value = &jt->second;
        if (value && seen[i].insert(*value).second) vocab.attributes[i].second.push_back(*value);
      }
    }
  }
  return vocab;
}

// ---------------------------------------------------------------------------
// Encoded matrix

enum class Derivation { kFrequency, kOneHot, kPassthrough, kMin, kMax, kMean, kSum, kStd, kTimestampFeature };

struct ColumnMeta {
  std::string name;
  AttributeType type = AttributeType::kEvent;
  std::string source;
  Derivation derivation = Derivation::kPassthrough;

  bool operator==(const ColumnMeta&) const = default;
};

struct RowOrigin {
  std::string case_id;
  std::size_t prefix_length = 0;
  bool operator==(const RowOrigin&) const = default;
};

/// Row-major l x p matrix with per-column attribute-type tags.
struct EncodedMatrix {
  std::vector<ColumnMeta> columns;
  std::vector<double> values;
  std::vector<int> labels;         // empty when unlabelled
  std::vector<RowOrigin> origins;  // empty when unknown (e.g. read back from CSV)

  std::size_t rows() const { return columns.empty() ? 0 : values.size() / columns.size(); }
  std::size_t cols() const { return columns.size(); }
  double at(std::size_t r, std::size_t c) const { return values[r * columns.size() + c]; }
  double& at(std::size_t r, std::size_t c) { return values[r * columns.size() + c]; }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(values).subspan(r * columns.size(), columns.size());
  }

  std::vector<std::string> signature() const {
    std::vector<std::string> names;
    names.reserve(columns.size());
    for (const auto& c : columns) names.push_back(c.name);
    return names;
  }

  std::size_t count(AttributeType t) const {
    return static_cast<std::size_t>(
        std::count_if(columns.begin(), columns.end(), [t](const ColumnMeta& c) { return c.type == t; }));
  }

  std::vector<std::size_t> columns_of(AttributeType t) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i].type == t) idx.push_back(i);
    return idx;
  }

  bool operator==(const EncodedMatrix&) const = default;
};

namespace detail {

struct Summary {
  double min = 0, max = 0, mean = 0, sum = 0, std = 0;
};

/// Sample standard deviation (n - 1); zero for a single value.
inline Summary summarize(std::span<const double> xs) {
  Summary s;
  if (xs.empty()) return s;
  s.min = *std::min_element(xs.begin(), xs.end());
  s.max = *std::max_element(xs.begin(), xs.end());
  for (double x : xs) s.sum += x;
  s.mean = s.sum / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

inline constexpr const char* kStatNames[] = {"min", "max", "mean", "sum", "std"};
inline constexpr Derivation kStatDerivations[] = {Derivation::kMin, Derivation::kMax, Derivation::kMean,
                                                  Derivation::kSum, Derivation::kStd};
inline constexpr const char* kTimeFeatures[] = {"timesincelastevent", "timesincecasestart", "timesincemidnight"};

}  // namespace detail

/// Column layout produced by aggregate_encode: control, then case, then event.
inline std::vector<ColumnMeta> encoded_columns(const AttributeSchema& schema, const Vocabulary& vocab) {
  std::vector<ColumnMeta> cols;
  const std::string act = schema.activity_column();
  for (const auto& a : vocab.activities)
    cols.push_back({act + "=" + a, AttributeType::kControl, act, Derivation::kFrequency});

  for (const auto& c : schema.columns) {
    if (c.role == Role::kStaticCategorical) {
      const auto* vals = vocab.values(c.name);
      if (!vals) continue;
      for (const auto& v : *vals) cols.push_back({c.name + "=" + v, AttributeType::kCase, c.name, Derivation::kOneHot});
    }
  }
  for (const auto& c : schema.columns)
    if (c.role == Role::kStaticNumeric)
      cols.push_back({c.name, AttributeType::kCase, c.name, Derivation::kPassthrough});

  auto add_stats = [&](const std::string& source, bool timestamp_feature) {
    for (std::size_t s = 0; s < 5; ++s)
      cols.push_back({source + "_" + detail::kStatNames[s], AttributeType::kEvent, source,
                      timestamp_feature ? Derivation::kTimestampFeature : detail::kStatDerivations[s]});
  };
  for (const char* f : detail::kTimeFeatures) add_stats(f, true);
  for (const auto& c : schema.columns)
    if (c.role == Role::kDynamicNumeric) add_stats(c.name, false);
  for (const auto& c : schema.columns) {
    if (c.role == Role::kDynamicCategorical) {
      const auto* vals = vocab.values(c.name);
      if (!vals) continue;
      for (const auto& v : *vals)
        cols.push_back({c.name + "=" + v, AttributeType::kEvent, c.name, Derivation::kFrequency});
    }
  }
  std::unordered_set<std::string> names;
  for (const auto& c : cols)
    if (!names.insert(c.name).second) throw Error("encoding: duplicate column name '" + c.name + "'");
  return cols;
}

inline EncodedMatrix aggregate_encode(const PrefixLog& prefixes, const AttributeSchema& schema,
                                      const Vocabulary& vocab) {
  EncodedMatrix m;
  m.columns = encoded_columns(schema, vocab);
  const std::size_t p = m.columns.size();
  m.values.assign(prefixes.size() * p, 0.0);

  auto index_of = [](const std::vector<std::string>& vals) {
    std::unordered_map<std::string, std::size_t> idx;
    for (std::size_t i = 0; i < vals.size(); ++i) idx.emplace(vals[i], i);
    return idx;
  };
  struct CatBlock {
    std::string name;
    bool is_static;
    std::size_t offset;
    std::unordered_map<std::string, std::size_t> index;
  };
  // Walk the layout once to find each block's offset.
  std::size_t offset = 0;
  const auto act_index = index_of(vocab.activities);
  offset += vocab.activities.size();
  std::vector<CatBlock> static_cats, dynamic_cats;
  std::vector<std::pair<std::string, std::size_t>> static_nums;
  std::vector<std::pair<std::string, std::size_t>> dynamic_nums;
  for (const auto& c : schema.columns) {
    if (c.role != Role::kStaticCategorical) continue;
    const auto* vals = vocab.values(c.name);
    if (!vals) continue;
    static_cats.push_back({c.name, true, offset, index_of(*vals)});
    offset += vals->size();
  }
  for (const auto& c : schema.columns)
    if (c.role == Role::kStaticNumeric) static_nums.emplace_back(c.name, offset++);
  const std::size_t time_offset = offset;
  offset += 15;
  for (const auto& c : schema.columns)
    if (c.role == Role::kDynamicNumeric) {
      dynamic_nums.emplace_back(c.name, offset);
      offset += 5;
    }
  for (const auto& c : schema.columns) {
    if (c.role != Role::kDynamicCategorical) continue;
    const auto* vals = vocab.values(c.name);
    if (!vals) continue;
    dynamic_cats.push_back({c.name, false, offset, index_of(*vals)});
    offset += vals->size();
  }

  bool all_labelled = true;
  std::vector<double> buf;
  for (std::size_t r = 0; r < prefixes.size(); ++r) {
    const Prefix& pre = prefixes.prefixes[r];
    const auto events = prefixes.events(pre);
    double* row = m.values.data() + r * p;
    m.origins.push_back({prefixes.case_id(pre), pre.length});
    if (pre.label) m.labels.push_back(*pre.label);
    else all_labelled = false;

    for (const auto& ev : events) {
      if (auto it = act_index.find(ev.activity); it != act_index.end()) row[it->second] += 1.0;
      for (const auto& block : dynamic_cats)
        if (auto it = block.index.find(ev.dynamics.at(block.name)); it != block.index.end())
          row[block.offset + it->second] += 1.0;
    }
    const Event& first = events.front();
    for (const auto& block : static_cats)
      if (auto it = block.index.find(first.statics.at(block.name)); it != block.index.end())
        row[block.offset + it->second] = 1.0;
    for (const auto& [name, col] : static_nums) row[col] = parse_double(first.statics.at(name), "column '" + name + "'");

    auto put_stats = [&](std::size_t col) {
      const auto s = detail::summarize(buf);
      row[col + 0] = s.min;
      row[col + 1] = s.max;
      row[col + 2] = s.mean;
      row[col + 3] = s.sum;
      row[col + 4] = s.std;
    };
    buf.clear();
    for (std::size_t i = 0; i < events.size(); ++i)
      buf.push_back(i == 0 ? 0.0 : static_cast<double>(events[i].timestamp - events[i - 1].timestamp) / 1000.0);
    put_stats(time_offset);
    buf.clear();
    for (const auto& ev : events) buf.push_back(static_cast<double>(ev.timestamp - first.timestamp) / 1000.0);
    put_stats(time_offset + 5);
    buf.clear();
    for (const auto& ev : events) buf.push_back(static_cast<double>(ms_since_midnight(ev.timestamp)) / 1000.0);
    put_stats(time_offset + 10);
    for (const auto& [name, col] : dynamic_nums) {
      buf.clear();
      for (const auto& ev : events) buf.push_back(parse_double(ev.dynamics.at(name), "column '" + name + "'"));
      put_stats(col);
    }
  }
  if (!all_labelled) m.labels.clear();
  return m;
}

// ---------------------------------------------------------------------------
// Matrix CSV (also the bridge wire format)

/// Header `<name>:<type>` per column, optional final `label` column, LF endings,
/// shortest round-trip numbers.
inline void write_matrix_csv(std::ostream& out, const EncodedMatrix& m, bool include_label) {
  if (include_label && m.labels.size() != m.rows()) throw Error("matrix export: labels missing");
  std::string line;
  for (std::size_t c = 0; c < m.cols(); ++c) {
    if (c) line += ',';
    line += csv::escape(m.columns[c].name + ":" + std::string(to_string(m.columns[c].type)));
  }
  if (include_label) line += m.cols() ? ",label" : "label";
  line += '\n';
  out << line;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    line.clear();
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) line += ',';
      line += format_double(m.at(r, c));
    }
    if (include_label) {
      if (m.cols()) line += ',';
      line += std::to_string(m.labels[r]);
    }
    line += '\n';
    out << line;
  }
}

inline EncodedMatrix read_matrix_csv(std::istream& in) {
  const csv::Table t = csv::read_table(in);
  EncodedMatrix m;
  const bool has_label = !t.header.empty() && t.header.back() == "label";
  const std::size_t p = t.header.size() - (has_label ? 1 : 0);
  for (std::size_t c = 0; c < p; ++c) {
    const auto& h = t.header[c];
    const auto colon = h.rfind(':');
    if (colon == std::string::npos) throw Error("matrix csv: header '" + h + "' lacks ':<attribute_type>'");
    ColumnMeta meta;
    meta.name = h.substr(0, colon);
    meta.type = parse_attribute_type(std::string_view(h).substr(colon + 1));
    meta.source = meta.name;
    m.columns.push_back(std::move(meta));
  }
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    for (std::size_t c = 0; c < p; ++c)
      m.values.push_back(parse_double(t.rows[r][c], "matrix csv line " + std::to_string(t.line_numbers[r])));
    if (has_label) {
      const auto& cell = t.rows[r][p];
      if (cell != "0" && cell != "1") throw Error("matrix csv: label must be 0 or 1, got '" + cell + "'");
      m.labels.push_back(cell == "1" ? 1 : 0);
    }
  }
  return m;
}

}  // namespace popx
