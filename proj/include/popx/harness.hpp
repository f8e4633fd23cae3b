#pragma once

// End-to-end benchmark: split, encode, train every configured model, score
// AUC, apply the average-AUC filters and compute the explainability metrics.
//
// Seeds are derived hierarchically (master -> log -> model -> metric) from
// FNV-1a hashes of the ids, so adding a log or model never changes the
// randomness of the other cells.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "popx/common.hpp"
#include "popx/config.hpp"
#include "popx/eventlog.hpp"
#include "popx/explain.hpp"
#include "popx/metrics.hpp"
#include "popx/model_io.hpp"
#include "popx/models.hpp"
#include "popx/preprocess.hpp"
#include "popx/synth.hpp"

namespace popx {

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t child_seed(std::uint64_t parent, std::string_view name) { return derive_seed(parent, fnv1a(name)); }

// ---------------------------------------------------------------------------
// Configuration

struct LogSource {
  std::string id;
  std::string path;         // CSV log; empty for synthetic
  std::string schema_path;
  std::optional<SynthSpec> synth;
  bool synth_seed_given = false;
  std::optional<std::pair<std::string, std::string>> label_follows;  // relabel with a -> b
};

struct ModelConfig {
  std::string id;
  ModelKind kind = ModelKind::kLogReg;
  std::map<std::string, std::string> params;             // fixed hyperparameters
  std::map<std::string, std::vector<std::string>> grid;  // grid.<name> = v1,v2,...
  std::string command;       // external
  std::string weights_path;  // external weight file
  double timeout_seconds = 300.0;
};

struct BenchmarkConfig {
  std::vector<LogSource> logs;
  std::vector<ModelConfig> models;
  std::size_t max_prefix = 10;
  double train_ratio = 0.8;
  std::size_t pi_repeats = 1;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string output_dir;
  unsigned threads = 0;

  void validate() const {
    if (logs.empty()) throw Error("bench config: no [log ...] section");
    if (models.empty()) throw Error("bench config: at least one [model ...] section is required");
    if (!seed_given) throw Error("bench config: a seed is required (pass --seed)");
    if (max_prefix < 1) throw Error("bench config: max_prefix must be >= 1");
    if (pi_repeats < 1) throw Error("bench config: pi_repeats must be >= 1");
  }
};

namespace detail {

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  for (std::size_t start = 0;;) {
    const auto comma = s.find(',', start);
    out.push_back(trim(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::size_t to_count(const std::string& key, const std::string& v) {
  const double d = parse_double(v, key);
  if (d < 0 || d != std::floor(d)) throw Error("'" + key + "' must be a nonnegative integer");
  return static_cast<std::size_t>(d);
}

inline std::string resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return p;
  const std::filesystem::path path(p);
  return path.is_absolute() ? p : (base / path).lexically_normal().string();
}

}  // namespace detail

/// Parses a benchmark config. Relative paths resolve against `base_dir`.
inline BenchmarkConfig parse_benchmark_config(std::istream& in, const std::filesystem::path& base_dir = {}) {
  BenchmarkConfig cfg;
  for (const auto& section : config::parse(in)) {
    const auto space = section.name.find(' ');
    const std::string kind = section.name.substr(0, space);
    const std::string id = space == std::string::npos ? "" : trim(section.name.substr(space + 1));
    if (section.name.empty()) {
      for (const auto& e : section.entries) {
        if (e.key == "max_prefix") cfg.max_prefix = detail::to_count(e.key, e.value);
        else if (e.key == "train_ratio") cfg.train_ratio = parse_double(e.value, e.key);
        else if (e.key == "pi_repeats") cfg.pi_repeats = detail::to_count(e.key, e.value);
        else if (e.key == "seed") {
          cfg.seed = std::stoull(e.value);
          cfg.seed_given = true;
        } else if (e.key == "output") cfg.output_dir = detail::resolve(base_dir, e.value);
        else if (e.key == "threads") cfg.threads = static_cast<unsigned>(detail::to_count(e.key, e.value));
        else throw Error("bench config line " + std::to_string(e.line) + ": unknown key '" + e.key + "'");
      }
    } else if (kind == "log") {
      if (id.empty()) throw Error("bench config: [log] section needs an id, e.g. [log mylog]");
      LogSource src;
      src.id = id;
      config::Section synth_keys;
      for (const auto& e : section.entries) {
        if (e.key == "path") src.path = detail::resolve(base_dir, e.value);
        else if (e.key == "schema") src.schema_path = detail::resolve(base_dir, e.value);
        else if (e.key == "label_follows") {
          auto parts = detail::split_list(e.value);
          if (parts.size() != 2) throw Error("bench config: label_follows needs 'a,b'");
          src.label_follows = std::make_pair(parts[0], parts[1]);
        } else {
          if (e.key == "seed") src.synth_seed_given = true;
          synth_keys.entries.push_back(e);
        }
      }
      if (src.path.empty()) {
        src.synth = parse_synth_spec(synth_keys);
      } else {
        if (!synth_keys.entries.empty())
          throw Error("bench config: log '" + id + "' mixes a CSV path with synthetic keys ('" +
                      synth_keys.entries.front().key + "')");
        if (src.schema_path.empty()) throw Error("bench config: log '" + id + "' needs a schema");
      }
      cfg.logs.push_back(std::move(src));
    } else if (kind == "model") {
      if (id.empty()) throw Error("bench config: [model] section needs an id");
      ModelConfig mc;
      mc.id = id;
      mc.kind = parse_model_kind(section.get("kind", id));
      for (const auto& e : section.entries) {
        if (e.key == "kind") continue;
        if (e.key == "command") mc.command = e.value;
        else if (e.key == "weights") mc.weights_path = detail::resolve(base_dir, e.value);
        else if (e.key == "timeout") mc.timeout_seconds = parse_double(e.value, e.key);
        else if (e.key.rfind("grid.", 0) == 0) mc.grid[e.key.substr(5)] = detail::split_list(e.value);
        else mc.params[e.key] = e.value;
      }
      if (mc.kind == ModelKind::kExternal && mc.command.empty())
        throw Error("bench config: external model '" + id + "' needs a command");
      cfg.models.push_back(std::move(mc));
    } else {
      throw Error("bench config: unknown section [" + section.name + "]");
    }
  }
  return cfg;
}

inline BenchmarkConfig load_benchmark_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open bench config '" + path + "'");
  return parse_benchmark_config(in, std::filesystem::path(path).parent_path());
}

// ---------------------------------------------------------------------------
// Training from a parameter map

/// Trains a built-in model. Unknown parameter names are errors.
inline TrainedModel train_model(ModelKind kind, const EncodedMatrix& m, const std::map<std::string, std::string>& params,
                                std::uint64_t seed, unsigned threads = 0) {
  std::map<std::string, std::string> left = params;
  auto take = [&](const std::string& key, auto fallback) {
    auto it = left.find(key);
    if (it == left.end()) return fallback;
    const std::string v = it->second;
    left.erase(it);
    using T = decltype(fallback);
    if constexpr (std::is_same_v<T, double>) return parse_double(v, key);
    else if constexpr (std::is_same_v<T, int>) return static_cast<int>(detail::to_count(key, v));
    else return static_cast<T>(detail::to_count(key, v));
  };
  auto finish = [&](TrainedModel model) {
    if (!left.empty()) throw Error("unknown " + std::string(to_string(kind)) + " parameter '" + left.begin()->first + "'");
    return model;
  };
  switch (kind) {
    case ModelKind::kLogReg: {
      LogRegHyper h;
      h.l2 = take("l2", h.l2);
      h.max_iter = take("max_iter", h.max_iter);
      h.tol = take("tol", h.tol);
      return finish(train_logreg(m, h));
    }
    case ModelKind::kTree: {
      TreeHyper h;
      h.max_depth = take("max_depth", h.max_depth);
      h.min_samples_leaf = take("min_samples_leaf", h.min_samples_leaf);
      return finish(train_tree(m, h));
    }
    case ModelKind::kForest: {
      ForestHyper h;
      h.n_trees = take("n_trees", h.n_trees);
      h.max_depth = take("max_depth", h.max_depth);
      h.min_samples_leaf = take("min_samples_leaf", h.min_samples_leaf);
      h.max_features_fraction = take("max_features_fraction", h.max_features_fraction);
      h.seed = take("seed", seed);
      return finish(train_forest(m, h, threads));
    }
    case ModelKind::kLlm: {
      LlmHyper h;
      h.max_depth = take("max_depth", h.max_depth);
      h.min_samples_leaf = take("min_samples_leaf", h.min_samples_leaf);
      h.l2 = take("l2", h.l2);
      h.max_iter = take("max_iter", h.max_iter);
      h.tol = take("tol", h.tol);
      return finish(train_llm(m, h));
    }
    case ModelKind::kExternal: break;
  }
  throw Error("external models are trained outside the toolkit");
}

// ---------------------------------------------------------------------------
// Pipeline pieces

struct PreparedLog {
  EventLog train_log;
  EventLog test_log;
  Vocabulary vocab;
  EncodedMatrix train;
  EncodedMatrix test;
};

inline PreparedLog prepare_log(const EventLog& log, std::size_t max_prefix, double train_ratio) {
  PreparedLog out;
  auto split = temporal_split(log, train_ratio);
  out.train_log = std::move(split.train);
  out.test_log = std::move(split.test);
  out.vocab = fit_vocabulary(out.train_log);
  out.train = aggregate_encode(extract_prefixes(out.train_log, max_prefix), log.schema, out.vocab);
  out.test = aggregate_encode(extract_prefixes(out.test_log, max_prefix), log.schema, out.vocab);
  return out;
}

inline EventLog load_log_source(const LogSource& src, std::uint64_t log_seed) {
  EventLog log;
  if (src.synth) {
    SynthSpec spec = *src.synth;
    if (!src.synth_seed_given) spec.seed = child_seed(log_seed, "synth");
    log = generate_log(spec);
  } else {
    log = load_csv(src.path, load_schema(src.schema_path));
  }
  if (src.label_follows) log = label_eventually_followed_by(log, src.label_follows->first, src.label_follows->second);
  return log;
}

/// Picks the grid point with the best AUC on a temporal hold-out of the train
/// log (ties keep the earlier point), then returns the merged parameter map.
inline std::map<std::string, std::string> grid_search(const ModelConfig& mc, const PreparedLog& prep,
                                                      std::size_t max_prefix, std::uint64_t seed, unsigned threads) {
  if (mc.grid.empty()) return mc.params;
  const auto inner = temporal_split(prep.train_log, 0.8);
  const auto fit = aggregate_encode(extract_prefixes(inner.train, max_prefix), prep.train_log.schema, prep.vocab);
  const auto val = aggregate_encode(extract_prefixes(inner.test, max_prefix), prep.train_log.schema, prep.vocab);
  std::vector<std::pair<std::string, std::vector<std::string>>> axes(mc.grid.begin(), mc.grid.end());
  std::vector<std::size_t> idx(axes.size(), 0);
  std::map<std::string, std::string> best;
  double best_auc = -1.0;
  for (;;) {
    auto params = mc.params;
    for (std::size_t a = 0; a < axes.size(); ++a) params[axes[a].first] = axes[a].second[idx[a]];
    const auto model = train_model(mc.kind, fit, params, seed, threads);
    const double v = auc(val.labels, model.predict_proba(val));
    if (v > best_auc) {
      best_auc = v;
      best = params;
    }
    std::size_t a = 0;
    while (a < axes.size() && ++idx[a] == axes[a].second.size()) idx[a++] = 0;
    if (a == axes.size()) break;
  }
  return best;
}

inline constexpr double kExcludeBelow = 0.50;
inline constexpr double kXaiBelow = 0.75;
inline constexpr std::string_view kReasonBelow50 = "avg AUC below 50";
inline constexpr std::string_view kReasonBelow75 = "avg AUC below 75: excluded from XAI evaluation";

/// Empty when a log with this mean AUC gets the full XAI evaluation.
inline std::string exclusion_reason(double mean_auc) {
  if (mean_auc < kExcludeBelow) return std::string(kReasonBelow50);
  if (mean_auc < kXaiBelow) return std::string(kReasonBelow75);
  return {};
}

/// Metrics for one trained model on the test matrix.
inline void compute_xai_metrics(MetricsReport& rep, const Predictor& model, const WeightVector& w_e,
                                const EncodedMatrix& test, std::uint64_t model_seed, std::size_t pi_repeats,
                                unsigned threads) {
  const WeightVector w_pi = permutation_importance(model, test, test.labels, child_seed(model_seed, "pi"), pi_repeats,
                                                   threads);
  rep.parsimony = parsimony(w_e, test.columns);
  TypedMetric fc;
  double sum = 0;
  int defined = 0;
  const std::uint64_t fc_seed = child_seed(model_seed, "fc");
  for (AttributeType t : kAllTypes) {
    if (test.count(t) == 0) {
      fc.get(t) = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    fc.get(t) = functional_complexity(model, test, t, fc_seed + static_cast<std::uint64_t>(t));
    sum += fc.get(t);
    ++defined;
  }
  fc.total = defined ? sum / defined : std::numeric_limits<double>::quiet_NaN();
  rep.fc = fc;
  try {
    rep.irc = irc(w_pi, w_e);
  } catch (const Error&) {
    rep.irc.reset();  // degenerate ranking: reported as an empty cell
  }
  rep.lod_at_10 = lod_at_k(w_pi, w_e, test.columns, 10);
}

/// Runs every (log, model) cell. Report order is log order, then model order.
inline std::vector<MetricsReport> run_benchmark(const BenchmarkConfig& cfg) {
  cfg.validate();
  std::vector<MetricsReport> reports;
  for (const auto& src : cfg.logs) {
    const std::uint64_t log_seed = child_seed(cfg.seed, src.id);
    std::vector<MetricsReport> cells(cfg.models.size());
    for (std::size_t k = 0; k < cfg.models.size(); ++k) {
      cells[k].log_id = src.id;
      cells[k].model_id = cfg.models[k].id;
      cells[k].seed = child_seed(log_seed, cfg.models[k].id);
    }
    std::optional<PreparedLog> prep;
    try {
      prep = prepare_log(load_log_source(src, log_seed), cfg.max_prefix, cfg.train_ratio);
    } catch (const std::exception& e) {
      for (auto& c : cells) c.error = e.what();
      reports.insert(reports.end(), cells.begin(), cells.end());
      continue;
    }
    TimestampMs lo = std::numeric_limits<TimestampMs>::max(), hi = std::numeric_limits<TimestampMs>::min();
    for (const auto& t : prep->test_log.traces)
      for (const auto& e : t.events) {
        lo = std::min(lo, e.timestamp);
        hi = std::max(hi, e.timestamp);
      }

    std::vector<std::optional<TrainedModel>> models(cfg.models.size());
    double auc_sum = 0;
    int auc_count = 0;
    for (std::size_t k = 0; k < cfg.models.size(); ++k) {
      const auto& mc = cfg.models[k];
      auto& rep = cells[k];
      rep.data_start = lo;
      rep.data_end = hi;
      try {
        if (mc.kind == ModelKind::kExternal) {
          models[k] = make_external_model(mc.command, prep->test.columns, mc.timeout_seconds);
        } else {
          const auto params = grid_search(mc, *prep, cfg.max_prefix, rep.seed, cfg.threads);
          models[k] = train_model(mc.kind, prep->train, params, rep.seed, cfg.threads);
        }
        rep.auc = auc(prep->test.labels, models[k]->predict_proba(prep->test));
        auc_sum += *rep.auc;
        ++auc_count;
      } catch (const std::exception& e) {
        rep.error = e.what();
        models[k].reset();
      }
    }
    const double mean_auc = auc_count ? auc_sum / auc_count : std::numeric_limits<double>::quiet_NaN();
    const std::string reason = auc_count ? exclusion_reason(mean_auc) : std::string();
    for (std::size_t k = 0; k < cfg.models.size(); ++k) {
      auto& rep = cells[k];
      if (!models[k]) continue;
      if (!reason.empty()) {
        rep.excluded_reason = reason;
        continue;
      }
      try {
        const auto& mc = cfg.models[k];
        WeightVector w_e;
        if (mc.kind == ModelKind::kExternal) {
          if (mc.weights_path.empty()) throw Error("external model '" + mc.id + "' has no weight file");
          w_e = load_external_weights_file(mc.weights_path, prep->test.signature());
        } else {
          w_e = intrinsic_weights(*models[k]);
        }
        compute_xai_metrics(rep, *models[k], w_e, prep->test, rep.seed, cfg.pi_repeats, cfg.threads);
      } catch (const std::exception& e) {
        rep.error = e.what();
      }
    }
    reports.insert(reports.end(), cells.begin(), cells.end());
  }
  return reports;
}

// ---------------------------------------------------------------------------
// Rendering

inline constexpr std::string_view kReportHeader =
    "log,model,auc,C_control,C_case,C_event,FC_control,FC_case,FC_event,IRC,LOD@10,excluded_reason";

inline std::vector<std::string> report_cells(const MetricsReport& r, bool fixed) {
  auto num = [&](std::optional<double> v) -> std::string {
    if (!v || std::isnan(*v)) return "";
    if (!fixed) return format_double(*v);
    std::ostringstream s;
    s << std::fixed << std::setprecision(4) << *v;
    return s.str();
  };
  auto count = [](std::optional<TypedMetric> m, AttributeType t) -> std::string {
    return m ? format_double(m->get(t)) : "";
  };
  auto typed = [&](std::optional<TypedMetric> m, AttributeType t) -> std::string {
    return m ? num(m->get(t)) : "";
  };
  std::string reason = r.excluded_reason;
  if (!r.error.empty()) reason = "error: " + r.error;
  return {r.log_id,
          r.model_id,
          num(r.auc),
          count(r.parsimony, AttributeType::kControl),
          count(r.parsimony, AttributeType::kCase),
          count(r.parsimony, AttributeType::kEvent),
          typed(r.fc, AttributeType::kControl),
          typed(r.fc, AttributeType::kCase),
          typed(r.fc, AttributeType::kEvent),
          num(r.irc),
          num(r.lod_at_10),
          reason};
}

enum class ReportFormat { kTable, kCsv };

inline std::string render_report(const std::vector<MetricsReport>& reports, ReportFormat format) {
  std::ostringstream out;
  if (format == ReportFormat::kCsv) {
    out << kReportHeader << '\n';
    for (const auto& r : reports) csv::write_record(out, report_cells(r, false));
    return out.str();
  }
  std::vector<std::vector<std::string>> rows;
  rows.push_back(detail::split_list(kReportHeader));
  for (const auto& r : reports) rows.push_back(report_cells(r, true));
  std::vector<std::size_t> width(rows.front().size(), 0);
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::string line;
    for (std::size_t c = 0; c < rows[i].size(); ++c) {
      const auto& cell = rows[i][c];
      const bool left = c < 2 || c + 1 == rows[i].size();
      const std::string pad(width[c] - cell.size(), ' ');
      if (c) line += "  ";
      line += left ? cell + pad : pad + cell;
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out << line << '\n';
    if (i == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w;
      out << std::string(total + 2 * (width.size() - 1), '-') << '\n';
    }
  }
  return out.str();
}

/// Reads a CSV written by render_report back into reports (AUC and metric cells only).
inline std::vector<MetricsReport> parse_report_csv(std::istream& in) {
  const csv::Table t = csv::read_table(in);
  if (t.header != detail::split_list(kReportHeader)) throw Error("report csv: unexpected header");
  std::vector<MetricsReport> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    auto opt = [&](std::size_t c) -> std::optional<double> {
      if (row[c].empty()) return std::nullopt;
      return parse_double(row[c], "report csv line " + std::to_string(t.line_numbers[i]));
    };
    MetricsReport r;
    r.log_id = row[0];
    r.model_id = row[1];
    r.auc = opt(2);
    if (!row[3].empty()) {
      TypedMetric c{*opt(3), *opt(4), *opt(5), 0};
      c.total = c.control + c.case_ + c.event;
      r.parsimony = c;
    }
    if (!row[6].empty() || !row[7].empty() || !row[8].empty()) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      TypedMetric f{opt(6).value_or(nan), opt(7).value_or(nan), opt(8).value_or(nan), 0};
      double s = 0;
      int n = 0;
      for (double v : {f.control, f.case_, f.event})
        if (!std::isnan(v)) {
          s += v;
          ++n;
        }
      f.total = n ? s / n : nan;
      r.fc = f;
    }
    r.irc = opt(9);
    r.lod_at_10 = opt(10);
    const std::string& reason = row[11];
    if (reason.rfind("error: ", 0) == 0) r.error = reason.substr(7);
    else r.excluded_reason = reason;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace popx
