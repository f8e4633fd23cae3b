#pragma once

// Attribute weight vectors: permutation importance (the faithfulness oracle)
// and the weights an explainability source assigns to each encoded column.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "popx/common.hpp"
#include "popx/csv.hpp"
#include "popx/models.hpp"
#include "popx/preprocess.hpp"

namespace popx {

enum class WeightSource { kPermutation, kCoefficients, kImpurity, kExternal };

inline std::string_view to_string(WeightSource s) {
  switch (s) {
    case WeightSource::kPermutation: return "permutation";
    case WeightSource::kCoefficients: return "coefficients";
    case WeightSource::kImpurity: return "impurity";
    case WeightSource::kExternal: return "external";
  }
  return "?";
}

/// Per-column weights aligned to a column signature.
struct WeightVector {
  std::vector<double> weights;
  WeightSource source = WeightSource::kExternal;
  std::uint64_t seed = 0;     // permutation only
  std::size_t repeats = 0;    // permutation only

  std::size_t size() const { return weights.size(); }
  double operator[](std::size_t i) const { return weights[i]; }

  std::vector<double> magnitudes() const {
    std::vector<double> out(weights.size());
    std::transform(weights.begin(), weights.end(), out.begin(), [](double w) { return std::abs(w); });
    return out;
  }
};

// ---------------------------------------------------------------------------
// Excluded-value permutation

/// Sorted distinct values of a column.
inline std::vector<double> distinct_values(const EncodedMatrix& m, std::size_t col) {
  std::vector<double> vals(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) vals[r] = m.at(r, col);
  std::sort(vals.begin(), vals.end());
  vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
  return vals;
}

/// Replaces every value of column `col` in `target` by a uniform draw from the
/// column's other distinct values. Columns with a single distinct value are kept.
/// `distinct` must come from distinct_values() on the unpermuted matrix.
inline void permute_excluding_current(EncodedMatrix& target, std::size_t col, std::span<const double> distinct,
                                      Rng& rng) {
  if (distinct.size() < 2) return;
  for (std::size_t r = 0; r < target.rows(); ++r) {
    double& v = target.at(r, col);
    const auto pos = static_cast<std::size_t>(std::lower_bound(distinct.begin(), distinct.end(), v) - distinct.begin());
    auto k = static_cast<std::size_t>(uniform_index(rng, distinct.size() - 1));
    if (k >= pos) ++k;
    v = distinct[k];
  }
}

inline double mean_squared_error(std::span<const int> labels, std::span<const double> scores) {
  double s = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double d = static_cast<double>(labels[i]) - scores[i];
    s += d * d;
  }
  return s / static_cast<double>(labels.size());
}

/// Permutation importance: per column, MSE after the excluded-value permutation
/// minus MSE on the original rows, averaged over `repeats` draws. Column i uses
/// the stream seeded with seed + i, so columns can be scored in any order.
inline WeightVector permutation_importance(const Predictor& predictor, const EncodedMatrix& m,
                                           std::span<const int> labels, std::uint64_t seed,
                                           std::size_t repeats = 1, unsigned threads = 0) {
  check_signature(predictor, m);
  if (repeats < 1) throw Error("permutation_importance: repeats must be >= 1");
  if (labels.size() != m.rows()) throw Error("permutation_importance: label count differs from row count");
  detail::require_both_classes(labels, "permutation_importance");
  const double base = mean_squared_error(labels, predictor.predict_proba(m));

  WeightVector out;
  out.source = WeightSource::kPermutation;
  out.seed = seed;
  out.repeats = repeats;
  out.weights.assign(m.cols(), 0.0);
  parallel_for(
      m.cols(),
      [&](std::size_t col) {
        const auto distinct = distinct_values(m, col);
        if (distinct.size() < 2) return;
        Rng rng = make_rng(seed + col);
        EncodedMatrix copy = m;
        double total = 0.0;
        for (std::size_t rep = 0; rep < repeats; ++rep) {
          for (std::size_t r = 0; r < m.rows(); ++r) copy.at(r, col) = m.at(r, col);
          permute_excluding_current(copy, col, distinct, rng);
          total += mean_squared_error(labels, predictor.predict_proba(copy)) - base;
        }
        out.weights[col] = total / static_cast<double>(repeats);
      },
      threads);
  return out;
}

// ---------------------------------------------------------------------------
// Intrinsic weights

/// |coefficients| on the standardized scale. For the logit leaf model, the
/// support-weighted mean of per-leaf |coefficients|; constant leaves add zero.
inline WeightVector coefficient_weights(const TrainedModel& model) {
  WeightVector out;
  out.source = WeightSource::kCoefficients;
  const std::size_t p = model.columns.size();
  if (model.kind == ModelKind::kLogReg) {
    out.weights = model.linear.coef;
    for (auto& w : out.weights) w = std::abs(w);
    return out;
  }
  if (model.kind != ModelKind::kLlm) throw Error("coefficient_weights: needs a logreg or llm model, got " +
                                                 std::string(to_string(model.kind)));
  out.weights.assign(p, 0.0);
  double total = 0.0;
  for (std::size_t leaf = 0; leaf < model.leaf_models.size(); ++leaf) {
    const double support = static_cast<double>(model.leaf_support[leaf]);
    total += support;
    const auto& lm = model.leaf_models[leaf];
    if (lm.constant) continue;
    for (std::size_t c = 0; c < p; ++c) out.weights[c] += support * std::abs(lm.coef[c]);
  }
  if (total > 0)
    for (auto& w : out.weights) w /= total;
  return out;
}

/// Sum of (node fraction) x (Gini decrease) over the splits on each column.
inline std::vector<double> tree_impurity_decrease(const Tree& tree, std::size_t p) {
  std::vector<double> w(p, 0.0);
  const double root_n = static_cast<double>(tree.nodes.front().n);
  if (root_n == 0) return w;
  for (const auto& node : tree.nodes) {
    if (node.is_leaf()) continue;
    const auto& l = tree.nodes[static_cast<std::size_t>(node.left)];
    const auto& r = tree.nodes[static_cast<std::size_t>(node.right)];
    const double dec = static_cast<double>(node.n) * node.impurity - static_cast<double>(l.n) * l.impurity -
                       static_cast<double>(r.n) * r.impurity;
    w[static_cast<std::size_t>(node.feature)] += std::max(0.0, dec) / root_n;  // zero-gain splits may round below 0
  }
  return w;
}

inline WeightVector impurity_weights(const TrainedModel& model) {
  if (model.kind != ModelKind::kTree && model.kind != ModelKind::kForest)
    throw Error("impurity_weights: needs a tree or forest model, got " + std::string(to_string(model.kind)));
  WeightVector out;
  out.source = WeightSource::kImpurity;
  const std::size_t p = model.columns.size();
  out.weights.assign(p, 0.0);
  for (const auto& t : model.trees) {
    const auto w = tree_impurity_decrease(t, p);
    for (std::size_t c = 0; c < p; ++c) out.weights[c] += w[c];
  }
  for (auto& w : out.weights) w /= static_cast<double>(model.trees.size());
  return out;
}

/// The model's own weight source: coefficients for logreg/llm, impurity for tree/forest.
inline WeightVector intrinsic_weights(const TrainedModel& model) {
  switch (model.kind) {
    case ModelKind::kLogReg:
    case ModelKind::kLlm: return coefficient_weights(model);
    case ModelKind::kTree:
    case ModelKind::kForest: return impurity_weights(model);
    case ModelKind::kExternal: break;
  }
  throw Error("external models have no intrinsic weights; supply a weight file");
}

// ---------------------------------------------------------------------------
// External weight files

/// Reads `attribute,weight` lines (an optional header of exactly that text is
/// skipped). Signature columns missing from the file get weight 0 and a warning.
inline WeightVector load_external_weights(std::istream& in, const std::vector<std::string>& signature,
                                          std::vector<std::string>* warnings = nullptr) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < signature.size(); ++i) index.emplace(signature[i], i);
  WeightVector out;
  out.source = WeightSource::kExternal;
  out.weights.assign(signature.size(), 0.0);
  std::vector<bool> seen(signature.size(), false);

  csv::Reader reader(in);
  csv::Record rec;
  bool first = true;
  while (reader.next(rec)) {
    const std::string where = "weights line " + std::to_string(reader.record_line());
    if (rec.size() == 1 && trim(rec[0]).empty()) continue;
    if (first) {
      first = false;
      if (rec.size() == 2 && trim(rec[0]) == "attribute" && trim(rec[1]) == "weight") continue;
    }
    if (rec.size() != 2) throw Error(where + ": malformed, expected 'attribute,weight'");
    const auto it = index.find(rec[0]);
    if (it == index.end()) throw Error(where + ": unknown column '" + rec[0] + "'");
    const auto w = try_parse_double(rec[1]);
    if (!w) throw Error(where + ": malformed weight '" + rec[1] + "'");
    if (!std::isfinite(*w)) throw Error(where + ": non-finite weight for '" + rec[0] + "'");
    if (seen[it->second]) throw Error(where + ": duplicate column '" + rec[0] + "'");
    seen[it->second] = true;
    out.weights[it->second] = std::abs(*w);
  }
  for (std::size_t i = 0; i < signature.size(); ++i)
    if (!seen[i] && warnings) warnings->push_back("column '" + signature[i] + "' missing from weight file, using 0");
  return out;
}

inline WeightVector load_external_weights_file(const std::string& path, const std::vector<std::string>& signature,
                                               std::vector<std::string>* warnings = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open weight file '" + path + "'");
  return load_external_weights(in, signature, warnings);
}

}  // namespace popx
