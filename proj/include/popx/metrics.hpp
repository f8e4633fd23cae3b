#pragma once

// Explainability metrics per attribute type: parsimony, functional
// complexity, importance ranking correlation and level of disagreement @k.

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "popx/auc.hpp"
#include "popx/common.hpp"
#include "popx/explain.hpp"
#include "popx/models.hpp"
#include "popx/preprocess.hpp"

namespace popx {

struct TypedMetric {
  double control = 0.0;
  double case_ = 0.0;
  double event = 0.0;
  double total = 0.0;

  double get(AttributeType t) const {
    switch (t) {
      case AttributeType::kControl: return control;
      case AttributeType::kCase: return case_;
      case AttributeType::kEvent: return event;
    }
    return 0.0;
  }
  double& get(AttributeType t) {
    switch (t) {
      case AttributeType::kControl: return control;
      case AttributeType::kCase: return case_;
      case AttributeType::kEvent: break;
    }
    return event;
  }
};

inline constexpr double kDefaultParsimonyEps = 1e-9;
inline constexpr double kDecisionThreshold = 0.5;

/// Number of columns per type whose |weight| exceeds eps.
inline TypedMetric parsimony(const WeightVector& w, std::span<const ColumnMeta> columns,
                             double eps = kDefaultParsimonyEps) {
  if (w.size() != columns.size()) throw Error("parsimony: weight vector and columns differ in length");
  TypedMetric out;
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (std::abs(w[i]) > eps) out.get(columns[i].type) += 1.0;
  out.total = out.control + out.case_ + out.event;
  return out;
}

/// Fraction of rows whose 0.5-thresholded prediction flips when every column of
/// `type` is permuted at once with the excluded-value draw.
inline double functional_complexity(const Predictor& predictor, const EncodedMatrix& m, AttributeType type,
                                    std::uint64_t seed) {
  check_signature(predictor, m);
  const auto cols = m.columns_of(type);
  if (cols.empty()) throw Error("functional_complexity: matrix has no " + std::string(to_string(type)) + " columns");
  if (m.rows() == 0) throw Error("functional_complexity: matrix has no rows");
  Rng rng = make_rng(seed);
  EncodedMatrix copy = m;
  for (std::size_t c : cols) {
    const auto distinct = distinct_values(m, c);
    permute_excluding_current(copy, c, distinct, rng);
  }
  const auto before = predictor.predict_proba(m);
  const auto after = predictor.predict_proba(copy);
  std::size_t flips = 0;
  for (std::size_t r = 0; r < before.size(); ++r)
    flips += (before[r] >= kDecisionThreshold) != (after[r] >= kDecisionThreshold) ? 1 : 0;
  return static_cast<double>(flips) / static_cast<double>(m.rows());
}

/// Spearman rank correlation: Pearson correlation of average ranks.
inline double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("spearman: vectors differ in length");
  if (a.size() < 2) throw Error("spearman: need at least 2 values");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double mean = (n + 1.0) / 2.0;  // ranks always average to this
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    const double da = ra[i] - mean, db = rb[i] - mean;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) throw Error("spearman: degenerate ranking (constant vector)");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

inline double irc(const WeightVector& w_pi, const WeightVector& w_e) {
  if (w_pi.size() != w_e.size()) throw Error("irc: weight vectors have different signatures");
  const auto a = w_pi.magnitudes();
  const auto b = w_e.magnitudes();
  return spearman(a, b);
}

struct TypeCounts {
  std::size_t control = 0;
  std::size_t case_ = 0;
  std::size_t event = 0;

  std::size_t total() const { return control + case_ + event; }
  bool operator==(const TypeCounts&) const = default;
};

/// Attribute-type composition of the k largest |w| (ties: lower column index first).
inline TypeCounts top_k_type_counts(const WeightVector& w, std::span<const ColumnMeta> columns, std::size_t k = 10) {
  if (k < 1) throw Error("top_k_type_counts: k must be >= 1");
  if (w.size() != columns.size()) throw Error("top_k_type_counts: weight vector and columns differ in length");
  const auto mag = w.magnitudes();
  std::vector<std::size_t> order(mag.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t take = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    [&](std::size_t a, std::size_t b) { return mag[a] > mag[b] || (mag[a] == mag[b] && a < b); });
  TypeCounts out;
  for (std::size_t i = 0; i < take; ++i) {
    switch (columns[order[i]].type) {
      case AttributeType::kControl: ++out.control; break;
      case AttributeType::kCase: ++out.case_; break;
      case AttributeType::kEvent: ++out.event; break;
    }
  }
  return out;
}

inline double type_count_distance(const TypeCounts& a, const TypeCounts& b) {
  auto sq = [](std::size_t x, std::size_t y) {
    const double d = static_cast<double>(x) - static_cast<double>(y);
    return d * d;
  };
  return std::sqrt(sq(a.control, b.control) + sq(a.case_, b.case_) + sq(a.event, b.event));
}

/// Euclidean distance between the top-k type counts of two weight vectors.
inline double lod_at_k(const WeightVector& w_pi, const WeightVector& w_e, std::span<const ColumnMeta> columns,
                       std::size_t k = 10) {
  if (w_pi.size() != w_e.size()) throw Error("lod_at_k: weight vectors have different signatures");
  return type_count_distance(top_k_type_counts(w_pi, columns, k), top_k_type_counts(w_e, columns, k));
}

/// Metrics of one (log, model) cell. Optional fields are unset when skipped or undefined.
struct MetricsReport {
  std::string log_id;
  std::string model_id;
  std::optional<double> auc;
  std::optional<TypedMetric> parsimony;
  std::optional<TypedMetric> fc;  // per type, NaN where the type has no columns; total = mean of the defined ones
  std::optional<double> irc;
  std::optional<double> lod_at_10;
  std::string excluded_reason;  // empty when the cell was fully evaluated
  std::string error;            // upstream failure attributed to this cell
  std::uint64_t seed = 0;
  TimestampMs data_start = 0;   // time span of the evaluated test log
  TimestampMs data_end = 0;
};

}  // namespace popx
