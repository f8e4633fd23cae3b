#include <gtest/gtest.h>

#include <sstream>

#include "popx/auc.hpp"
#include "popx/model_io.hpp"
#include "popx/models.hpp"
#include "popx/synth.hpp"
#include "test_helpers.hpp"

using namespace popx;
using popx::testing::make_matrix;

namespace {

EncodedMatrix random_matrix(std::uint64_t seed, std::size_t n, std::size_t p, int levels) {
  Rng rng = make_rng(seed);
  std::vector<std::vector<double>> rows(n, std::vector<double>(p));
  std::vector<int> y(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (auto& v : rows[r]) v = static_cast<double>(uniform_index(rng, static_cast<std::uint64_t>(levels)));
    y[r] = static_cast<int>(uniform_index(rng, 2));
  }
  return make_matrix(p, rows, y);
}

// Segment 0: label follows +x1, segment 1: label follows -x1.
EncodedMatrix piecewise(std::size_t n, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::vector<std::vector<double>> rows;
  std::vector<int> y;
  for (std::size_t i = 0; i < n; ++i) {
    const double seg = static_cast<double>(i % 2);
    const double x = popx::testing::normal(rng);
    const double p = sigmoid((seg == 0 ? 3.0 : -3.0) * x);
    rows.push_back({seg, x});
    y.push_back(uniform01(rng) < p ? 1 : 0);
  }
  return make_matrix(2, rows, y);
}

void expect_probabilities(const std::vector<double>& p) {
  for (double v : p) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// AUC

TEST(Auc, Examples) {
  EXPECT_EQ(auc(std::vector<int>{0, 0, 1, 1}, std::vector<double>{0.1, 0.2, 0.3, 0.4}), 1.0);
  EXPECT_EQ(auc(std::vector<int>{0, 1, 0, 1}, std::vector<double>{0.5, 0.5, 0.5, 0.5}), 0.5);
  const std::vector<int> y{1, 0, 1, 0};
  const std::vector<double> s{0.9, 0.8, 0.7, 0.6};
  EXPECT_EQ(popx::testing::pair_count_auc(y, s), 0.75);
  EXPECT_DOUBLE_EQ(auc(y, s), 0.75);
}

TEST(Auc, Errors) {
  EXPECT_THROW(auc(std::vector<int>{1, 1}, std::vector<double>{0.1, 0.2}), Error);
  EXPECT_THROW(auc(std::vector<int>{1, 0}, std::vector<double>{0.1}), Error);
  EXPECT_THROW(auc(std::vector<int>{1, 2}, std::vector<double>{0.1, 0.2}), Error);
}

TEST(Auc, ComplementSumsToOne) {
  Rng rng = make_rng(4);
  for (int it = 0; it < 100; ++it) {
    std::vector<int> y{0, 1};
    std::vector<double> s{uniform01(rng), uniform01(rng)};
    for (int i = 0; i < 30; ++i) {
      y.push_back(static_cast<int>(uniform_index(rng, 2)));
      s.push_back(uniform01(rng));
    }
    std::vector<double> c(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) c[i] = 1.0 - s[i];
    EXPECT_NEAR(auc(y, s) + auc(y, c), 1.0, 1e-12);
  }
}

// ---------------------------------------------------------------------------
// Logistic regression

TEST(LogReg, SeparableReachesAucOne) {
  const auto m = make_matrix(1, {{-2}, {-1}, {-0.5}, {0.5}, {1}, {2}}, {0, 0, 0, 1, 1, 1});
  const auto model = train_logreg(m, {0.01, 2000, 1e-7});
  EXPECT_EQ(model.training_auc, 1.0);
}

TEST(LogReg, ConstantFeatureHasNoSignal) {
  Rng rng = make_rng(8);
  std::vector<std::vector<double>> rows;
  std::vector<int> y;
  for (int i = 0; i < 200; ++i) {
    rows.push_back({3.0});
    y.push_back(static_cast<int>(uniform_index(rng, 2)));
  }
  const auto m = make_matrix(1, rows, y);
  const auto model = train_logreg(m);
  EXPECT_LT(std::abs(model.linear.coef[0]), 1e-6);
  EXPECT_NEAR(model.training_auc, 0.5, 0.05);
}

TEST(LogReg, RecoversCoefficientRatio) {
  Rng rng = make_rng(2000);
  std::vector<std::vector<double>> rows;
  std::vector<int> y;
  for (int i = 0; i < 2000; ++i) {
    const double a = popx::testing::normal(rng), b = popx::testing::normal(rng);
    rows.push_back({a, b});
    y.push_back(uniform01(rng) < sigmoid(2.0 * a - 1.0 * b) ? 1 : 0);
  }
  const auto m = make_matrix(2, rows, y);
  const auto model = train_logreg(m, {1e-4, 2000, 1e-7});
  const double w0 = model.linear.coef[0] / model.scaler.scale[0];
  const double w1 = model.linear.coef[1] / model.scaler.scale[1];
  EXPECT_NEAR(w0 / w1, -2.0, 0.2);
}

TEST(LogReg, RequiresBothClasses) {
  EXPECT_THROW(train_logreg(make_matrix(1, {{1}, {2}}, {1, 1})), Error);
  EXPECT_THROW(train_logreg(make_matrix(1, {{1}}, {1})), Error);
}

// ---------------------------------------------------------------------------
// Trees

TEST(Tree, XorAtDepthTwo) {
  const auto m = make_matrix(2, {{0, 0}, {0, 1}, {1, 0}, {1, 1}, {0, 0}, {0, 1}, {1, 0}, {1, 1}},
                             {0, 1, 1, 0, 0, 1, 1, 0});
  const auto model = train_tree(m, {2, 1});
  EXPECT_EQ(model.training_auc, 1.0);
}

TEST(Tree, PureLabelsGiveSingleLeaf) {
  const auto m = make_matrix(1, {{1}, {2}, {3}}, {1, 1, 1});
  const auto model = train_tree(m, {6, 1});
  ASSERT_EQ(model.trees[0].nodes.size(), 1u);
  EXPECT_EQ(model.trees[0].nodes[0].prob, 1.0);
}

TEST(Tree, RootSplitMatchesExhaustiveOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto m = random_matrix(seed, 50, 4, 6);
    const std::size_t min_leaf = 1 + seed % 4;
    // Oracle: every column, every midpoint between consecutive distinct values.
    double best_gain = -1;
    int best_f = -1;
    double best_t = 0;
    double pos = 0;
    for (int y : m.labels) pos += y;
    auto g = [](double p, double n) { return n == 0 ? 0.0 : 2.0 * (p / n) * (1.0 - p / n); };
    const double parent = g(pos, 50);
    for (std::size_t f = 0; f < 4; ++f) {
      std::vector<double> vals;
      for (std::size_t r = 0; r < 50; ++r) vals.push_back(m.at(r, f));
      std::sort(vals.begin(), vals.end());
      vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
      for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
        const double t = (vals[k] + vals[k + 1]) / 2.0;
        double nl = 0, pl = 0, nr = 0, pr = 0;
        for (std::size_t r = 0; r < 50; ++r) {
          if (m.at(r, f) <= t) {
            nl += 1;
            pl += m.labels[r];
          } else {
            nr += 1;
            pr += m.labels[r];
          }
        }
        if (nl < static_cast<double>(min_leaf) || nr < static_cast<double>(min_leaf)) continue;
        const double gain = parent - (nl * g(pl, nl) + nr * g(pr, nr)) / 50.0;
        if (gain > best_gain + 1e-12) {
          best_gain = gain;
          best_f = static_cast<int>(f);
          best_t = t;
        }
      }
    }
    const auto rows = detail::all_rows(m);
    const std::vector<std::size_t> features{0, 1, 2, 3};
    const auto split = best_split(m, rows, features, min_leaf);
    EXPECT_NEAR(split.gain, best_gain, 1e-12) << "seed " << seed;
    EXPECT_EQ(split.feature, best_f) << "seed " << seed;
    EXPECT_EQ(split.threshold, best_t) << "seed " << seed;
  }
}

// ---------------------------------------------------------------------------
// Forest

TEST(Forest, DegenerateForestEqualsTreeOnSameBootstrap) {
  const auto m = random_matrix(3, 120, 5, 4);
  ForestHyper fh;
  fh.n_trees = 1;
  fh.max_features_fraction = 1.0;
  fh.seed = 77;
  const auto forest = train_forest(m, fh);
  Rng rng = forest_tree_rng(77, 0);
  const auto rows = bootstrap_rows(rng, m.rows());
  const auto tree = train_tree(m, {fh.max_depth, fh.min_samples_leaf}, rows);
  EXPECT_EQ(forest.predict_proba(m), tree.predict_proba(m));
}

TEST(Forest, MeanBoundedByMemberTrees) {
  const auto m = random_matrix(5, 150, 6, 5);
  ForestHyper fh;
  fh.n_trees = 15;
  fh.seed = 1;
  const auto forest = train_forest(m, fh);
  const auto p = forest.predict_proba(m);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double lo = 1, hi = 0;
    for (const auto& t : forest.trees) {
      lo = std::min(lo, t.predict(m.row(r)));
      hi = std::max(hi, t.predict(m.row(r)));
    }
    EXPECT_GE(p[r], lo - 1e-15);
    EXPECT_LE(p[r], hi + 1e-15);
  }
}

TEST(Forest, SeededAndThreadCountIndependent) {
  const auto m = random_matrix(6, 100, 6, 5);
  ForestHyper fh;
  fh.n_trees = 12;
  fh.seed = 9;
  const auto a = train_forest(m, fh, 1);
  const auto b = train_forest(m, fh, 4);
  EXPECT_EQ(a.predict_proba(m), b.predict_proba(m));
  std::ostringstream sa, sb;
  save_model(sa, a);
  save_model(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
  fh.seed = 10;
  const auto c = train_forest(m, fh, 1);
  std::ostringstream sc;
  save_model(sc, c);
  EXPECT_NE(sa.str(), sc.str());
}

TEST(Forest, SeparableDataReachesAucOne) {
  std::vector<std::vector<double>> rows;
  std::vector<int> y;
  for (int i = 0; i < 100; ++i) {
    rows.push_back({static_cast<double>(i), static_cast<double>((i * 7) % 13)});
    y.push_back(i >= 50 ? 1 : 0);
  }
  ForestHyper fh;
  fh.n_trees = 200;
  fh.seed = 3;
  EXPECT_EQ(train_forest(make_matrix(2, rows, y), fh).training_auc, 1.0);
}

// ---------------------------------------------------------------------------
// Logit leaf model

TEST(Llm, BeatsLogRegOnPiecewiseData) {
  const auto m = piecewise(600, 12);
  const auto lr = train_logreg(m);
  const auto llm = train_llm(m);
  EXPECT_GT(llm.training_auc, lr.training_auc + 0.1);
}

TEST(Llm, DepthOneHasTwoLeaves) {
  const auto m = piecewise(200, 13);
  const auto llm = train_llm(m, {});
  EXPECT_EQ(llm.trees[0].leaf_count(), 2u);
  EXPECT_EQ(llm.leaf_models.size(), 2u);
  EXPECT_EQ(llm.leaf_support[0] + llm.leaf_support[1], m.rows());
}

TEST(Llm, SingleClassLeafIsConstant) {
  // x0 <= 0.5 rows are all negative; the forced split isolates them.
  const auto m = make_matrix(2, {{0, 1}, {0, 2}, {0, 3}, {1, 1}, {1, 2}, {1, 3}, {1, 4}},
                             {0, 0, 0, 1, 0, 1, 0});
  LlmHyper h;
  h.min_samples_leaf = 3;
  const auto llm = train_llm(m, h);
  const auto p = llm.predict_proba(m);
  EXPECT_EQ(p[0], 0.0);
  EXPECT_EQ(p[1], 0.0);
  EXPECT_EQ(p[2], 0.0);
}

TEST(Llm, ForcedSplitEvenWithoutGain) {
  // Both halves have the same class balance: zero gain, still split.
  const auto m = make_matrix(1, {{0}, {0}, {1}, {1}}, {0, 1, 0, 1});
  LlmHyper h;
  h.min_samples_leaf = 2;
  EXPECT_EQ(train_llm(m, h).trees[0].leaf_count(), 2u);
}

TEST(Llm, TooFewRows) {
  LlmHyper h;
  h.min_samples_leaf = 5;
  EXPECT_THROW(train_llm(make_matrix(1, {{0}, {1}, {2}}, {0, 1, 0}), h), Error);
}

// ---------------------------------------------------------------------------
// Contract

TEST(Predictor, EmptyRowsAndSignatureMismatch) {
  const auto m = random_matrix(1, 40, 3, 3);
  const auto model = train_logreg(m);
  EncodedMatrix empty = m;
  empty.values.clear();
  empty.labels.clear();
  EXPECT_TRUE(model.predict_proba(empty).empty());
  EncodedMatrix renamed = m;
  renamed.columns[1].name = "other";
  EXPECT_THROW(model.predict_proba(renamed), Error);
  EncodedMatrix narrow = make_matrix(2, {{1, 2}});
  EXPECT_THROW(model.predict_proba(narrow), Error);
}

TEST(Predictor, ScoresInUnitIntervalAndTrainingAucReproducible) {
  SynthSpec spec;
  spec.n_cases = 150;
  spec.seed = 21;
  const auto log = generate_log(spec);
  const auto m = aggregate_encode(extract_prefixes(log, 5), log.schema, fit_vocabulary(log));
  ForestHyper fh;
  fh.n_trees = 10;
  for (const auto& model : {train_logreg(m), train_tree(m), train_forest(m, fh), train_llm(m)}) {
    const auto p = model.predict_proba(m);
    expect_probabilities(p);
    EXPECT_EQ(auc(m.labels, p), model.training_auc) << to_string(model.kind);
  }
}

TEST(ModelIo, RoundTripPreservesPredictions) {
  SynthSpec spec;
  spec.n_cases = 120;
  spec.seed = 22;
  const auto log = generate_log(spec);
  const auto m = aggregate_encode(extract_prefixes(log, 5), log.schema, fit_vocabulary(log));
  ForestHyper fh;
  fh.n_trees = 5;
  for (const auto& model : {train_logreg(m), train_tree(m), train_forest(m, fh), train_llm(m)}) {
    std::ostringstream out;
    save_model(out, model);
    std::istringstream in(out.str());
    const auto back = load_model(in);
    EXPECT_EQ(back.predict_proba(m), model.predict_proba(m)) << to_string(model.kind);
    EXPECT_EQ(back.training_auc, model.training_auc);
    std::ostringstream again;
    save_model(again, back);
    EXPECT_EQ(again.str(), out.str());
  }
}

TEST(ModelIo, RejectsTruncatedFile) {
  const auto model = train_logreg(random_matrix(2, 30, 2, 3));
  std::ostringstream out;
  save_model(out, model);
  const std::string text = out.str();
  std::istringstream in(text.substr(0, text.size() / 2));
  EXPECT_THROW(load_model(in), Error);
}
