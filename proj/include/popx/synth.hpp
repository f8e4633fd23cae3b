#pragma once

// Seeded synthetic event logs with a planted outcome rule.
//
// Naming: activities A, B, C, ... (then A26, A27, ...); static categorical
// c1.., static numeric s1.., dynamic categorical r1.., dynamic numeric d1...
// Categorical values v1..vK are uniform; numeric values are uniform on [0, 1)
// truncated to 6 decimals. Cases start 0-2 h apart from 2020-01-01 00:00:00
// and events follow each other after 1 s to 2 h.

#include <cmath>
#include <string>
#include <vector>

#include "popx/common.hpp"
#include "popx/config.hpp"
#include "popx/eventlog.hpp"

namespace popx {

enum class RuleKind { kControlPresence, kControlFollows, kCaseThreshold, kEventMeanThreshold };

struct Rule {
  RuleKind kind = RuleKind::kControlPresence;
  std::string a;          // activity (control rules) or attribute (threshold rules)
  std::string b;          // second activity of control_follows
  double threshold = 0.5;

  static Rule control_presence(std::string a) { return {RuleKind::kControlPresence, std::move(a), {}, 0.0}; }
  static Rule control_follows(std::string a, std::string b) {
    return {RuleKind::kControlFollows, std::move(a), std::move(b), 0.0};
  }
  static Rule case_threshold(std::string attr, double t) { return {RuleKind::kCaseThreshold, std::move(attr), {}, t}; }
  static Rule event_mean_threshold(std::string attr, double t) {
    return {RuleKind::kEventMeanThreshold, std::move(attr), {}, t};
  }

  /// The attribute type whose permutation should move predictions most.
  AttributeType dominant_type() const {
    switch (kind) {
      case RuleKind::kControlPresence:
      case RuleKind::kControlFollows: return AttributeType::kControl;
      case RuleKind::kCaseThreshold: return AttributeType::kCase;
      case RuleKind::kEventMeanThreshold: return AttributeType::kEvent;
    }
    return AttributeType::kControl;
  }

  std::string to_text() const {
    switch (kind) {
      case RuleKind::kControlPresence: return "control_presence(" + a + ")";
      case RuleKind::kControlFollows: return "control_follows(" + a + "," + b + ")";
      case RuleKind::kCaseThreshold: return "case_threshold(" + a + "," + format_double(threshold) + ")";
      case RuleKind::kEventMeanThreshold: return "event_mean_threshold(" + a + "," + format_double(threshold) + ")";
    }
    return {};
  }
};

/// Parses e.g. `control_follows(A,B)` or `case_threshold(s1, 0.5)`.
inline Rule parse_rule(std::string_view text) {
  const std::string t = trim(text);
  const auto open = t.find('('), close = t.rfind(')');
  if (open == std::string::npos || close != t.size() - 1) throw Error("rule: expected name(args), got '" + t + "'");
  const std::string name = trim(std::string_view(t).substr(0, open));
  std::vector<std::string> args;
  std::string_view inner = std::string_view(t).substr(open + 1, close - open - 1);
  for (std::size_t start = 0;;) {
    const auto comma = inner.find(',', start);
    args.push_back(trim(inner.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  auto need = [&](std::size_t n) {
    if (args.size() != n) throw Error("rule: " + name + " takes " + std::to_string(n) + " argument(s)");
  };
  if (name == "control_presence") {
    need(1);
    return Rule::control_presence(args[0]);
  }
  if (name == "control_follows") {
    need(2);
    return Rule::control_follows(args[0], args[1]);
  }
  if (name == "case_threshold") {
    need(2);
    return Rule::case_threshold(args[0], parse_double(args[1], "rule threshold"));
  }
  if (name == "event_mean_threshold") {
    need(2);
    return Rule::event_mean_threshold(args[0], parse_double(args[1], "rule threshold"));
  }
  throw Error("rule: unknown rule '" + name + "'");
}

struct SynthSpec {
  std::size_t n_cases = 1000;
  std::size_t alphabet_size = 6;
  std::size_t min_length = 3;
  std::size_t max_length = 8;
  std::size_t n_static_categorical = 1;
  std::size_t n_static_numeric = 1;
  std::size_t n_dynamic_categorical = 1;
  std::size_t n_dynamic_numeric = 1;
  std::size_t categorical_cardinality = 3;
  Rule rule = Rule::control_presence("A");
  double label_noise = 0.0;
  std::uint64_t seed = 0;
};

inline std::string activity_name(std::size_t i) {
  if (i < 26) return std::string(1, static_cast<char>('A' + i));
  return "A" + std::to_string(i);
}

inline void validate(const SynthSpec& spec) {
  if (spec.n_cases < 1) throw Error("synth: n_cases must be >= 1");
  if (spec.alphabet_size < 1) throw Error("synth: alphabet_size must be >= 1");
  if (spec.min_length < 1 || spec.max_length < spec.min_length) throw Error("synth: invalid trace length range");
  if (spec.categorical_cardinality < 1) throw Error("synth: categorical_cardinality must be >= 1");
  if (!(spec.label_noise >= 0.0 && spec.label_noise < 0.5)) throw Error("synth: label_noise must be in [0, 0.5)");
  auto has_activity = [&](const std::string& a) {
    for (std::size_t i = 0; i < spec.alphabet_size; ++i)
      if (activity_name(i) == a) return true;
    return false;
  };
  auto indexed = [](const std::string& name, char prefix, std::size_t count) {
    if (name.size() < 2 || name[0] != prefix) return false;
    const auto v = try_parse_double(std::string_view(name).substr(1));
    return v && *v >= 1 && *v <= static_cast<double>(count) && *v == std::floor(*v);
  };
  const Rule& r = spec.rule;
  switch (r.kind) {
    case RuleKind::kControlFollows:
      if (r.a == r.b) throw Error("synth: control_follows needs two different activities");
      if (!has_activity(r.b)) throw Error("synth: rule activity '" + r.b + "' not in the alphabet");
      [[fallthrough]];
    case RuleKind::kControlPresence:
      if (!has_activity(r.a)) throw Error("synth: rule activity '" + r.a + "' not in the alphabet");
      break;
    case RuleKind::kCaseThreshold:
      if (!indexed(r.a, 's', spec.n_static_numeric)) throw Error("synth: unknown static numeric attribute '" + r.a + "'");
      break;
    case RuleKind::kEventMeanThreshold:
      if (!indexed(r.a, 'd', spec.n_dynamic_numeric))
        throw Error("synth: unknown dynamic numeric attribute '" + r.a + "'");
      break;
  }
}

inline AttributeSchema synth_schema(const SynthSpec& spec) {
  AttributeSchema s;
  s.columns = {{"case", Role::kCaseId}, {"activity", Role::kActivity}, {"timestamp", Role::kTimestamp},
               {"label", Role::kLabel}};
  for (std::size_t i = 1; i <= spec.n_static_categorical; ++i) s.columns.push_back({"c" + std::to_string(i), Role::kStaticCategorical});
  for (std::size_t i = 1; i <= spec.n_static_numeric; ++i) s.columns.push_back({"s" + std::to_string(i), Role::kStaticNumeric});
  for (std::size_t i = 1; i <= spec.n_dynamic_categorical; ++i) s.columns.push_back({"r" + std::to_string(i), Role::kDynamicCategorical});
  for (std::size_t i = 1; i <= spec.n_dynamic_numeric; ++i) s.columns.push_back({"d" + std::to_string(i), Role::kDynamicNumeric});
  s.timestamp_format = "%Y-%m-%d %H:%M:%S";
  s.positive_label = "deviant";
  s.negative_label = "regular";
  return s;
}

/// Noise-free outcome of the planted rule (1 = deviant).
inline int evaluate_rule(const Rule& rule, const Trace& trace) {
  switch (rule.kind) {
    case RuleKind::kControlPresence:
      for (const auto& e : trace.events)
        if (e.activity == rule.a) return 1;
      return 0;
    case RuleKind::kControlFollows:
      return eventually_followed_label(trace, rule.a, rule.b);
    case RuleKind::kCaseThreshold:
      return parse_double(trace.events.front().statics.at(rule.a), rule.a) > rule.threshold ? 1 : 0;
    case RuleKind::kEventMeanThreshold: {
      double s = 0;
      for (const auto& e : trace.events) s += parse_double(e.dynamics.at(rule.a), rule.a);
      return s / static_cast<double>(trace.events.size()) > rule.threshold ? 1 : 0;
    }
  }
  return 0;
}

namespace detail {

inline std::string synth_numeric(Rng& rng) { return format_double(std::floor(uniform01(rng) * 1e6) / 1e6); }

}  // namespace detail

/// Fully determined by spec.seed. Case i draws from its own derived stream.
inline EventLog generate_log(const SynthSpec& spec) {
  validate(spec);
  EventLog log;
  log.schema = synth_schema(spec);
  constexpr TimestampMs kBase = 1'577'836'800'000;  // 2020-01-01T00:00:00
  Rng master = make_rng(spec.seed);
  TimestampMs start = kBase;
  const auto width = std::to_string(spec.n_cases).size();
  for (std::size_t i = 0; i < spec.n_cases; ++i) {
    start += static_cast<TimestampMs>(uniform_index(master, 7201)) * 1000;
    Rng rng = make_rng(derive_seed(spec.seed, i));
    Trace trace;
    std::string id = std::to_string(i + 1);
    trace.case_id = "case_" + std::string(width - id.size(), '0') + id;
    std::map<std::string, std::string> statics;
    for (std::size_t k = 1; k <= spec.n_static_categorical; ++k)
      statics["c" + std::to_string(k)] = "v" + std::to_string(1 + uniform_index(rng, spec.categorical_cardinality));
    for (std::size_t k = 1; k <= spec.n_static_numeric; ++k) statics["s" + std::to_string(k)] = detail::synth_numeric(rng);
    const std::size_t len = spec.min_length + static_cast<std::size_t>(uniform_index(rng, spec.max_length - spec.min_length + 1));
    TimestampMs t = start;
    for (std::size_t e = 0; e < len; ++e) {
      if (e > 0) t += static_cast<TimestampMs>(1 + uniform_index(rng, 7200)) * 1000;
      Event ev;
      ev.case_id = trace.case_id;
      ev.activity = activity_name(static_cast<std::size_t>(uniform_index(rng, spec.alphabet_size)));
      ev.timestamp = t;
      ev.statics = statics;
      for (std::size_t k = 1; k <= spec.n_dynamic_categorical; ++k)
        ev.dynamics["r" + std::to_string(k)] = "v" + std::to_string(1 + uniform_index(rng, spec.categorical_cardinality));
      for (std::size_t k = 1; k <= spec.n_dynamic_numeric; ++k) ev.dynamics["d" + std::to_string(k)] = detail::synth_numeric(rng);
      trace.events.push_back(std::move(ev));
    }
    int label = evaluate_rule(spec.rule, trace);
    if (uniform01(rng) < spec.label_noise) label = 1 - label;
    trace.label = label;
    log.traces.push_back(std::move(trace));
  }
  return log;
}

/// Reads a synth spec from `key = value` entries (unknown keys are errors).
inline SynthSpec parse_synth_spec(const config::Section& section, SynthSpec spec = {}) {
  for (const auto& e : section.entries) {
    auto count = [&] {
      const double v = parse_double(e.value, e.key);
      if (v < 0 || v != std::floor(v)) throw Error("synth: '" + e.key + "' must be a nonnegative integer");
      return static_cast<std::size_t>(v);
    };
    if (e.key == "n_cases") spec.n_cases = count();
    else if (e.key == "alphabet_size") spec.alphabet_size = count();
    else if (e.key == "min_length") spec.min_length = count();
    else if (e.key == "max_length") spec.max_length = count();
    else if (e.key == "static_categorical") spec.n_static_categorical = count();
    else if (e.key == "static_numeric") spec.n_static_numeric = count();
    else if (e.key == "dynamic_categorical") spec.n_dynamic_categorical = count();
    else if (e.key == "dynamic_numeric") spec.n_dynamic_numeric = count();
    else if (e.key == "categorical_cardinality") spec.categorical_cardinality = count();
    else if (e.key == "rule") spec.rule = parse_rule(e.value);
    else if (e.key == "label_noise") spec.label_noise = parse_double(e.value, e.key);
    else if (e.key == "seed") spec.seed = static_cast<std::uint64_t>(std::stoull(e.value));
    else throw Error("synth: unknown key '" + e.key + "' on line " + std::to_string(e.line));
  }
  return spec;
}

}  // namespace popx
