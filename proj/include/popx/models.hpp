#pragma once

// Task models: the Predictor contract, logistic regression, CART trees,
// random forests and the logit leaf model (a segmentation tree with a
// logistic regression in every leaf).

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "popx/auc.hpp"
#include "popx/common.hpp"
#include "popx/preprocess.hpp"

namespace popx {

/// Anything that maps encoded rows to probabilities of the deviant class.
class Predictor {
 public:
  virtual ~Predictor() = default;

  /// One probability in [0, 1] per row of `m`.
  virtual std::vector<double> predict_proba(const EncodedMatrix& m) const = 0;

  /// Column names the predictor expects, in order. Empty means "any".
  virtual std::vector<std::string> signature() const = 0;
};

inline void check_signature(const Predictor& predictor, const EncodedMatrix& m) {
  const auto sig = predictor.signature();
  if (sig.empty()) return;
  if (sig.size() != m.cols()) {
    throw Error("column signature mismatch: model has " + std::to_string(sig.size()) + " columns, matrix has " +
                std::to_string(m.cols()));
  }
  for (std::size_t i = 0; i < sig.size(); ++i)
    if (sig[i] != m.columns[i].name)
      throw Error("column signature mismatch at column " + std::to_string(i) + ": expected '" + sig[i] +
                  "', got '" + m.columns[i].name + "'");
}

/// Adapts a row function. Handy for hand-built predictors in tests and oracles.
class FunctionPredictor : public Predictor {
 public:
  using RowFn = std::function<double(std::span<const double>)>;

  explicit FunctionPredictor(RowFn fn, std::vector<std::string> signature = {})
      : fn_(std::move(fn)), signature_(std::move(signature)) {}

  std::vector<double> predict_proba(const EncodedMatrix& m) const override {
    check_signature(*this, m);
    std::vector<double> out(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) out[r] = fn_(m.row(r));
    return out;
  }
  std::vector<std::string> signature() const override { return signature_; }

 private:
  RowFn fn_;
  std::vector<std::string> signature_;
};

// ---------------------------------------------------------------------------
// Scaling

struct Scaler {
  std::vector<double> mean;
  std::vector<double> scale;  // standard deviation, or 1 for constant columns

  static Scaler fit(const EncodedMatrix& m) {
    Scaler s;
    const std::size_t p = m.cols(), n = m.rows();
    s.mean.assign(p, 0.0);
    s.scale.assign(p, 1.0);
    if (n == 0) return s;
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < p; ++c) s.mean[c] += m.at(r, c);
    for (auto& v : s.mean) v /= static_cast<double>(n);
    std::vector<double> ss(p, 0.0);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < p; ++c) {
        const double d = m.at(r, c) - s.mean[c];
        ss[c] += d * d;
      }
    for (std::size_t c = 0; c < p; ++c) {
      const double sd = std::sqrt(ss[c] / static_cast<double>(n));
      s.scale[c] = sd > 0.0 ? sd : 1.0;
    }
    return s;
  }

  std::vector<double> transform(const EncodedMatrix& m) const {
    std::vector<double> out(m.values.size());
    const std::size_t p = m.cols();
    for (std::size_t r = 0; r < m.rows(); ++r)
      for (std::size_t c = 0; c < p; ++c) out[r * p + c] = (m.at(r, c) - mean[c]) / scale[c];
    return out;
  }
};

// ---------------------------------------------------------------------------
// Logistic regression

struct LogRegHyper {
  double l2 = 0.01;
  int max_iter = 2000;
  double tol = 1e-7;
};

/// Linear score over standardized features, or a constant probability.
struct LinearModel {
  bool constant = false;
  double constant_prob = 0.0;
  double intercept = 0.0;
  std::vector<double> coef;

  double predict_scaled(std::span<const double> z) const {
    if (constant) return constant_prob;
    double s = intercept;
    for (std::size_t c = 0; c < coef.size(); ++c) s += coef[c] * z[c];
    return sigmoid(s);
  }
};

namespace detail {

inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

/// Full-batch gradient descent on mean log loss + (l2 / 2) |w|^2, intercept
/// unpenalized. Step 0.1, halved whenever a step would increase the loss.
inline LinearModel fit_logistic(std::span<const double> z, std::size_t p, std::span<const int> y,
                                std::span<const std::size_t> rows, const LogRegHyper& hyper) {
  const std::size_t n = rows.size();
  LinearModel model;
  model.coef.assign(p, 0.0);
  auto loss_at = [&](double b, const std::vector<double>& w) {
    double loss = 0.0;
    for (std::size_t r : rows) {
      double s = b;
      const double* x = z.data() + r * p;
      for (std::size_t c = 0; c < p; ++c) s += w[c] * x[c];
      loss += y[r] ? softplus(-s) : softplus(s);
    }
    double reg = 0.0;
    for (double v : w) reg += v * v;
    return loss / static_cast<double>(n) + 0.5 * hyper.l2 * reg;
  };
  double loss = loss_at(model.intercept, model.coef);
  double lr = 0.1;
  std::vector<double> grad(p), cand(p);
  for (int iter = 0; iter < hyper.max_iter; ++iter) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double grad_b = 0.0;
    for (std::size_t r : rows) {
      const double* x = z.data() + r * p;
      double s = model.intercept;
      for (std::size_t c = 0; c < p; ++c) s += model.coef[c] * x[c];
      const double err = sigmoid(s) - y[r];
      grad_b += err;
      for (std::size_t c = 0; c < p; ++c) grad[c] += err * x[c];
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    grad_b *= inv_n;
    for (std::size_t c = 0; c < p; ++c) grad[c] = grad[c] * inv_n + hyper.l2 * model.coef[c];

    double new_loss;
    double cand_b;
    for (;;) {
      cand_b = model.intercept - lr * grad_b;
      for (std::size_t c = 0; c < p; ++c) cand[c] = model.coef[c] - lr * grad[c];
      new_loss = loss_at(cand_b, cand);
      if (new_loss <= loss || lr < 1e-12) break;
      lr /= 2.0;
    }
    if (new_loss > loss) break;
    model.intercept = cand_b;
    model.coef.swap(cand);
    const double change = loss - new_loss;
    loss = new_loss;
    if (change < hyper.tol) break;
  }
  return model;
}

inline void require_both_classes(std::span<const int> labels, std::string_view what) {
  bool pos = false, neg = false;
  for (int y : labels) (y ? pos : neg) = true;
  if (!pos || !neg) throw Error(std::string(what) + ": labels must contain both classes");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// CART

struct TreeHyper {
  int max_depth = 6;
  std::size_t min_samples_leaf = 5;
};

struct TreeNode {
  int feature = -1;  // -1 for leaves
  double threshold = 0.0;  // rows with x <= threshold go left
  int left = -1;
  int right = -1;
  double prob = 0.0;  // positive fraction of the node's training rows
  std::size_t n = 0;
  double impurity = 0.0;  // Gini
  int leaf_id = -1;

  bool is_leaf() const { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  std::size_t leaf_index(std::span<const double> x) const {
    std::size_t i = 0;
    while (!nodes[i].is_leaf())
      i = static_cast<std::size_t>(x[static_cast<std::size_t>(nodes[i].feature)] <= nodes[i].threshold ? nodes[i].left
                                                                                                        : nodes[i].right);
    return i;
  }
  double predict(std::span<const double> x) const { return nodes[leaf_index(x)].prob; }
  std::size_t leaf_count() const {
    return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
  }
};

inline double gini(double pos, double n) {
  if (n <= 0) return 0.0;
  const double p = pos / n;
  return 2.0 * p * (1.0 - p);
}

struct SplitCandidate {
  int feature = -1;
  double threshold = 0.0;
  double gain = -std::numeric_limits<double>::infinity();  // parent Gini minus weighted child Gini
};

/// Best split over `features` (ascending) for the multiset `rows`. Thresholds are
/// midpoints between consecutive distinct values; each side keeps >= min_leaf rows.
/// Ties keep the lowest feature, then the lowest threshold.
inline SplitCandidate best_split(const EncodedMatrix& m, std::span<const std::size_t> rows,
                                 std::span<const std::size_t> features, std::size_t min_leaf) {
  SplitCandidate best;
  const double n = static_cast<double>(rows.size());
  double total_pos = 0;
  for (auto r : rows) total_pos += m.labels[r];
  const double parent = gini(total_pos, n);
  std::vector<std::pair<double, int>> xs(rows.size());
  for (std::size_t f : features) {
    for (std::size_t i = 0; i < rows.size(); ++i) xs[i] = {m.at(rows[i], f), m.labels[rows[i]]};
    std::sort(xs.begin(), xs.end());
    double left_pos = 0;
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
      left_pos += xs[i].second;
      if (xs[i].first == xs[i + 1].first) continue;
      const std::size_t nl = i + 1, nr = xs.size() - nl;
      if (nl < min_leaf || nr < min_leaf) continue;
      const double dl = static_cast<double>(nl), dr = static_cast<double>(nr);
      const double child = (dl * gini(left_pos, dl) + dr * gini(total_pos - left_pos, dr)) / n;
      const double gain = parent - child;
      if (gain > best.gain) {
        best.gain = gain;
        best.feature = static_cast<int>(f);
        best.threshold = xs[i].first + (xs[i + 1].first - xs[i].first) / 2.0;
      }
    }
  }
  return best;
}

namespace detail {

struct TreeBuilder {
  const EncodedMatrix& m;
  TreeHyper hyper;
  double max_features_fraction = 1.0;
  Rng* rng = nullptr;  // per-split column sampling when fraction < 1
  bool force_root = false;
  Tree tree;

  std::vector<std::size_t> sample_features() {
    const std::size_t p = m.cols();
    std::vector<std::size_t> all(p);
    std::iota(all.begin(), all.end(), std::size_t{0});
    if (!rng || max_features_fraction >= 1.0) return all;
    std::size_t k = static_cast<std::size_t>(std::ceil(max_features_fraction * static_cast<double>(p) - 1e-9));
    k = std::clamp<std::size_t>(k, 1, p);
    for (std::size_t i = 0; i < k; ++i) std::swap(all[i], all[i + uniform_index(*rng, p - i)]);
    all.resize(k);
    std::sort(all.begin(), all.end());
    return all;
  }

  int build(std::vector<std::size_t> rows, int depth) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    double pos = 0;
    for (auto r : rows) pos += m.labels[r];
    {
      TreeNode& node = tree.nodes.back();
      node.n = rows.size();
      node.prob = rows.empty() ? 0.0 : pos / static_cast<double>(rows.size());
      node.impurity = gini(pos, static_cast<double>(rows.size()));
    }
    const bool forced = force_root && depth == 0;
    const bool pure = pos == 0 || pos == static_cast<double>(rows.size());
    if (depth >= hyper.max_depth || rows.size() < 2 * hyper.min_samples_leaf || (pure && !forced)) return id;
    const auto features = sample_features();
    const SplitCandidate split = best_split(m, rows, features, hyper.min_samples_leaf);
    if (split.feature < 0) {
      if (forced) throw Error("llm: no legal split exists for the forced root split");
      return id;
    }
    std::vector<std::size_t> left, right;
    for (auto r : rows) (m.at(r, static_cast<std::size_t>(split.feature)) <= split.threshold ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    tree.nodes[static_cast<std::size_t>(id)].feature = split.feature;
    tree.nodes[static_cast<std::size_t>(id)].threshold = split.threshold;
    const int l = build(std::move(left), depth + 1);
    tree.nodes[static_cast<std::size_t>(id)].left = l;
    const int r = build(std::move(right), depth + 1);
    tree.nodes[static_cast<std::size_t>(id)].right = r;
    return id;
  }

  Tree run(std::vector<std::size_t> rows) {
    build(std::move(rows), 0);
    int leaf = 0;
    for (auto& node : tree.nodes)
      if (node.is_leaf()) node.leaf_id = leaf++;
    return std::move(tree);
  }
};

inline std::vector<std::size_t> all_rows(const EncodedMatrix& m) {
  std::vector<std::size_t> rows(m.rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

}  // namespace detail

/// Bootstrap row sample (with replacement) drawn first from a forest tree's stream.
inline std::vector<std::size_t> bootstrap_rows(Rng& rng, std::size_t n) {
  std::vector<std::size_t> rows(n);
  for (auto& r : rows) r = static_cast<std::size_t>(uniform_index(rng, n));
  return rows;
}

struct ForestHyper {
  std::size_t n_trees = 100;
  int max_depth = 6;
  std::size_t min_samples_leaf = 5;
  double max_features_fraction = 0.5;
  std::uint64_t seed = 0;
};

/// Random stream of forest tree `index`; seeds are seed + index.
inline Rng forest_tree_rng(std::uint64_t seed, std::size_t index) { return make_rng(seed + index); }

struct LlmHyper {
  int max_depth = 1;
  std::size_t min_samples_leaf = 5;
  double l2 = 0.01;
  int max_iter = 2000;
  double tol = 1e-7;
};

// ---------------------------------------------------------------------------
// Trained models

enum class ModelKind { kLogReg, kTree, kForest, kLlm, kExternal };

inline std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::kLogReg: return "logreg";
    case ModelKind::kTree: return "tree";
    case ModelKind::kForest: return "forest";
    case ModelKind::kLlm: return "llm";
    case ModelKind::kExternal: return "external";
  }
  return "?";
}

inline ModelKind parse_model_kind(std::string_view s) {
  for (auto k : {ModelKind::kLogReg, ModelKind::kTree, ModelKind::kForest, ModelKind::kLlm, ModelKind::kExternal})
    if (to_string(k) == s) return k;
  throw Error("unknown model kind '" + std::string(s) + "'");
}

/// A fitted model. Immutable after training; predict_proba is thread-safe.
struct TrainedModel : Predictor {
  ModelKind kind = ModelKind::kLogReg;
  std::vector<ColumnMeta> columns;
  Scaler scaler;
  LinearModel linear;                  // logreg
  std::vector<Tree> trees;             // tree: 1, forest: n, llm: the segmentation tree
  std::vector<LinearModel> leaf_models;  // llm, indexed by leaf_id
  std::vector<std::size_t> leaf_support;  // llm, training rows per leaf
  std::string command;                 // external
  double timeout_seconds = 300.0;      // external
  double training_auc = std::numeric_limits<double>::quiet_NaN();

  std::vector<std::string> signature() const override {
    std::vector<std::string> out;
    for (const auto& c : columns) out.push_back(c.name);
    return out;
  }

  std::vector<double> predict_proba(const EncodedMatrix& m) const override;
};

inline double predict_row(const TrainedModel& model, std::span<const double> x, std::vector<double>& zbuf) {
  auto scaled = [&]() -> std::span<const double> {
    zbuf.resize(x.size());
    for (std::size_t c = 0; c < x.size(); ++c) zbuf[c] = (x[c] - model.scaler.mean[c]) / model.scaler.scale[c];
    return zbuf;
  };
  switch (model.kind) {
    case ModelKind::kLogReg:
      return model.linear.predict_scaled(scaled());
    case ModelKind::kTree:
      return model.trees.front().predict(x);
    case ModelKind::kForest: {
      double s = 0.0;
      for (const auto& t : model.trees) s += t.predict(x);
      return s / static_cast<double>(model.trees.size());
    }
    case ModelKind::kLlm: {
      const Tree& seg = model.trees.front();
      const auto& leaf = seg.nodes[seg.leaf_index(x)];
      return model.leaf_models[static_cast<std::size_t>(leaf.leaf_id)].predict_scaled(scaled());
    }
    case ModelKind::kExternal:
      break;
  }
  throw Error("predict_row: unsupported model kind");
}

inline std::vector<double> external_predict(const std::string& command, const EncodedMatrix& m,
                                            double timeout_seconds = 300.0);

inline std::vector<double> TrainedModel::predict_proba(const EncodedMatrix& m) const {
  check_signature(*this, m);
  if (kind == ModelKind::kExternal) return external_predict(command, m, timeout_seconds);
  std::vector<double> out(m.rows());
  std::vector<double> zbuf;
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = predict_row(*this, m.row(r), zbuf);
  return out;
}

inline std::vector<double> predict_proba(const Predictor& model, const EncodedMatrix& m) {
  return model.predict_proba(m);
}

namespace detail {

inline void finish(TrainedModel& model, const EncodedMatrix& m) {
  bool pos = false, neg = false;
  for (int y : m.labels) (y ? pos : neg) = true;
  if (pos && neg) model.training_auc = auc(m.labels, model.predict_proba(m));
}

inline void require_labels(const EncodedMatrix& m, std::string_view what) {
  if (m.labels.size() != m.rows() || m.rows() == 0)
    throw Error(std::string(what) + ": training matrix needs labels for every row");
}

inline Tree fit_tree_rows(const EncodedMatrix& m, std::vector<std::size_t> rows, const TreeHyper& hyper, Rng* rng,
                          double fraction, bool force_root) {
  if (hyper.max_depth < 0) throw Error("tree: max_depth must be >= 0");
  if (hyper.min_samples_leaf < 1) throw Error("tree: min_samples_leaf must be >= 1");
  TreeBuilder b{m, hyper, fraction, rng, force_root, {}};
  return b.run(std::move(rows));
}

}  // namespace detail

inline TrainedModel train_logreg(const EncodedMatrix& m, const LogRegHyper& hyper = {}) {
  detail::require_labels(m, "logreg");
  if (m.rows() < 2) throw Error("logreg: need at least 2 rows");
  detail::require_both_classes(m.labels, "logreg");
  if (hyper.l2 < 0) throw Error("logreg: l2 must be nonnegative");
  TrainedModel model;
  model.kind = ModelKind::kLogReg;
  model.columns = m.columns;
  model.scaler = Scaler::fit(m);
  const auto z = model.scaler.transform(m);
  const auto rows = detail::all_rows(m);
  model.linear = detail::fit_logistic(z, m.cols(), m.labels, rows, hyper);
  detail::finish(model, m);
  return model;
}

/// Trains on `rows` (a multiset of row indices); all rows when empty.
inline TrainedModel train_tree(const EncodedMatrix& m, const TreeHyper& hyper = {},
                               std::vector<std::size_t> rows = {}) {
  detail::require_labels(m, "tree");
  if (rows.empty()) rows = detail::all_rows(m);
  TrainedModel model;
  model.kind = ModelKind::kTree;
  model.columns = m.columns;
  model.scaler = Scaler::fit(m);
  model.trees.push_back(detail::fit_tree_rows(m, std::move(rows), hyper, nullptr, 1.0, false));
  detail::finish(model, m);
  return model;
}

inline TrainedModel train_forest(const EncodedMatrix& m, const ForestHyper& hyper = {}, unsigned threads = 0) {
  detail::require_labels(m, "forest");
  if (hyper.n_trees < 1) throw Error("forest: n_trees must be >= 1");
  if (!(hyper.max_features_fraction > 0.0 && hyper.max_features_fraction <= 1.0))
    throw Error("forest: max_features_fraction must be in (0, 1]");
  TrainedModel model;
  model.kind = ModelKind::kForest;
  model.columns = m.columns;
  model.scaler = Scaler::fit(m);
  model.trees.resize(hyper.n_trees);
  const TreeHyper th{hyper.max_depth, hyper.min_samples_leaf};
  parallel_for(
      hyper.n_trees,
      [&](std::size_t t) {
        Rng rng = forest_tree_rng(hyper.seed, t);
        auto rows = bootstrap_rows(rng, m.rows());
        model.trees[t] = detail::fit_tree_rows(m, std::move(rows), th, &rng, hyper.max_features_fraction, false);
      },
      threads);
  detail::finish(model, m);
  return model;
}

inline TrainedModel train_llm(const EncodedMatrix& m, const LlmHyper& hyper = {}) {
  detail::require_labels(m, "llm");
  detail::require_both_classes(m.labels, "llm");
  if (hyper.max_depth < 1) throw Error("llm: max_depth must be >= 1 (the root split is forced)");
  if (hyper.min_samples_leaf < 1) throw Error("llm: min_samples_leaf must be >= 1");
  if (m.rows() < 2 * hyper.min_samples_leaf)
    throw Error("llm: need at least 2 * min_samples_leaf rows for the forced root split");
  TrainedModel model;
  model.kind = ModelKind::kLlm;
  model.columns = m.columns;
  model.scaler = Scaler::fit(m);
  model.trees.push_back(detail::fit_tree_rows(m, detail::all_rows(m), {hyper.max_depth, hyper.min_samples_leaf},
                                              nullptr, 1.0, true));
  const Tree& seg = model.trees.front();
  const std::size_t leaves = seg.leaf_count();
  std::vector<std::vector<std::size_t>> leaf_rows(leaves);
  for (std::size_t r = 0; r < m.rows(); ++r)
    leaf_rows[static_cast<std::size_t>(seg.nodes[seg.leaf_index(m.row(r))].leaf_id)].push_back(r);
  const auto z = model.scaler.transform(m);
  const LogRegHyper lh{hyper.l2, hyper.max_iter, hyper.tol};
  for (std::size_t leaf = 0; leaf < leaves; ++leaf) {
    const auto& rows = leaf_rows[leaf];
    std::size_t pos = 0;
    for (auto r : rows) pos += static_cast<std::size_t>(m.labels[r]);
    LinearModel lm;
    if (pos == 0 || pos == rows.size()) {
      lm.constant = true;
      lm.constant_prob = pos == 0 ? 0.0 : 1.0;
    } else {
      lm = detail::fit_logistic(z, m.cols(), m.labels, rows, lh);
    }
    model.leaf_models.push_back(std::move(lm));
    model.leaf_support.push_back(rows.size());
  }
  detail::finish(model, m);
  return model;
}

/// A model that is scored by an external command over the bridge protocol.
inline TrainedModel make_external_model(std::string command, std::vector<ColumnMeta> columns,
                                        double timeout_seconds = 300.0) {
  TrainedModel model;
  model.kind = ModelKind::kExternal;
  model.columns = std::move(columns);
  model.scaler.mean.assign(model.columns.size(), 0.0);
  model.scaler.scale.assign(model.columns.size(), 1.0);
  model.command = std::move(command);
  model.timeout_seconds = timeout_seconds;
  return model;
}

}  // namespace popx

#include "popx/bridge.hpp"
