#include <gtest/gtest.h>

#include <numeric>

#include "popx/metrics.hpp"
#include "test_helpers.hpp"

using namespace popx;
using popx::testing::make_matrix;

namespace {

using T = AttributeType;

std::vector<ColumnMeta> typed_columns(const std::vector<AttributeType>& types) {
  std::vector<ColumnMeta> cols;
  for (std::size_t i = 0; i < types.size(); ++i) cols.push_back({"x" + std::to_string(i), types[i], "", {}});
  return cols;
}

WeightVector wv(std::vector<double> w) {
  WeightVector v;
  v.weights = std::move(w);
  return v;
}

std::vector<AttributeType> random_types(Rng& rng, std::size_t n) {
  std::vector<AttributeType> t(n);
  for (auto& x : t) x = kAllTypes[uniform_index(rng, 3)];
  return t;
}

}  // namespace

// ---------------------------------------------------------------------------
// Parsimony

TEST(Parsimony, Examples) {
  const auto zero = parsimony(wv({0, 0, 0, 0, 0}), typed_columns({T::kControl, T::kCase, T::kEvent, T::kEvent, T::kCase}));
  EXPECT_EQ(zero.control + zero.case_ + zero.event + zero.total, 0.0);
  const auto c = parsimony(wv({0.5, 0, 0.2}), typed_columns({T::kControl, T::kControl, T::kCase}));
  EXPECT_EQ(c.control, 1.0);
  EXPECT_EQ(c.case_, 1.0);
  EXPECT_EQ(c.event, 0.0);
  EXPECT_EQ(c.total, 2.0);
  EXPECT_THROW(parsimony(wv({1}), typed_columns({T::kCase, T::kCase})), Error);
}

TEST(Parsimony, MatchesScanAndIsAdditive) {
  Rng rng = make_rng(40);
  for (int it = 0; it < 200; ++it) {
    const auto types = random_types(rng, 40);
    std::vector<double> w(40);
    for (auto& v : w) {
      const auto k = uniform_index(rng, 4);
      v = k == 0 ? 0.0 : k == 1 ? 1e-10 : k == 2 ? -(uniform01(rng)) : uniform01(rng);
    }
    const auto got = parsimony(wv(w), typed_columns(types));
    double expected[3] = {0, 0, 0};
    for (std::size_t i = 0; i < 40; ++i)
      if (std::abs(w[i]) > 1e-9) expected[static_cast<int>(types[i])] += 1;
    EXPECT_EQ(got.control, expected[0]);
    EXPECT_EQ(got.case_, expected[1]);
    EXPECT_EQ(got.event, expected[2]);
    EXPECT_EQ(got.total, got.control + got.case_ + got.event);
  }
}

// ---------------------------------------------------------------------------
// Functional complexity

TEST(FunctionalComplexity, ConstantPredictorIsZero) {
  const auto m = make_matrix(3, {{0, 1, 2}, {1, 0, 3}, {0, 1, 1}}, {}, {T::kControl, T::kCase, T::kEvent});
  const FunctionPredictor f([](std::span<const double>) { return 0.9; });
  for (auto t : kAllTypes) EXPECT_EQ(functional_complexity(f, m, t, 1), 0.0);
}

TEST(FunctionalComplexity, IndicatorOnBinaryColumnFlipsEveryRow) {
  // Each draw must change a binary value, so the indicator flips on every row.
  const auto m = make_matrix(2, {{1, 5}, {1, 6}, {1, 7}, {0, 5}}, {}, {T::kControl, T::kCase});
  const FunctionPredictor f([](std::span<const double> x) { return x[0] == 1 ? 1.0 : 0.0; });
  EXPECT_EQ(functional_complexity(f, m, T::kControl, 3), 1.0);
  // Distinct values come from the evaluated rows: an all-ones column is left alone.
  const auto ones = make_matrix(2, {{1, 5}, {1, 6}, {1, 7}}, {}, {T::kControl, T::kCase});
  EXPECT_EQ(functional_complexity(f, ones, T::kControl, 3), 0.0);
}

TEST(FunctionalComplexity, TwoDistinctValuesIsDeterministic) {
  // 3 rows, two control columns with 2 distinct values each: every draw is forced.
  const auto m = make_matrix(3, {{0, 1, 4}, {1, 1, 5}, {1, 0, 6}}, {}, {T::kControl, T::kControl, T::kEvent});
  auto table = [](double a, double b) { return a + b >= 2 ? 0.9 : (a == 0 && b == 0 ? 0.7 : 0.2); };
  const FunctionPredictor f([&](std::span<const double> x) { return table(x[0], x[1]); });
  double flips = 0;
  for (std::size_t r = 0; r < 3; ++r) {
    const bool before = table(m.at(r, 0), m.at(r, 1)) >= 0.5;
    const bool after = table(1 - m.at(r, 0), 1 - m.at(r, 1)) >= 0.5;
    flips += before != after;
  }
  for (std::uint64_t seed = 0; seed < 1000; ++seed)
    ASSERT_EQ(functional_complexity(f, m, T::kControl, seed), flips / 3.0) << "seed " << seed;
}

TEST(FunctionalComplexity, MatchesEnumeratedExpectation) {
  // 3 rows, two case columns with 3 distinct values: each row has 2 x 2 equally likely draws.
  const auto m = make_matrix(3, {{0, 0, 1}, {1, 2, 1}, {2, 1, 0}}, {}, {T::kCase, T::kCase, T::kControl});
  auto table = [](double a, double b) { return (static_cast<int>(a) * 3 + static_cast<int>(b)) % 4 == 0 ? 0.8 : 0.3; };
  const FunctionPredictor f([&](std::span<const double> x) { return table(x[0], x[1]); });
  double expected = 0, variance = 0;
  for (std::size_t r = 0; r < 3; ++r) {
    const bool before = table(m.at(r, 0), m.at(r, 1)) >= 0.5;
    double p = 0;
    for (double a = 0; a < 3; ++a)
      for (double b = 0; b < 3; ++b)
        if (a != m.at(r, 0) && b != m.at(r, 1)) p += ((table(a, b) >= 0.5) != before) / 4.0;
    expected += p / 3.0;
    variance += p * (1 - p) / 9.0;
  }
  ASSERT_GT(expected, 0.0);
  double mean = 0;
  const int seeds = 1000;
  for (int s = 0; s < seeds; ++s) mean += functional_complexity(f, m, T::kCase, static_cast<std::uint64_t>(s)) / seeds;
  EXPECT_NEAR(mean, expected, 3 * std::sqrt(variance / seeds)) << "expected " << expected;
}

TEST(FunctionalComplexity, ErrorsAndBounds) {
  const auto m = make_matrix(2, {{0, 1}, {1, 0}}, {}, {T::kControl, T::kControl});
  const FunctionPredictor f([](std::span<const double> x) { return x[0]; });
  EXPECT_THROW(functional_complexity(f, m, T::kEvent, 0), Error);
  const double fc = functional_complexity(f, m, T::kControl, 0);
  EXPECT_GE(fc, 0.0);
  EXPECT_LE(fc, 1.0);
}

// ---------------------------------------------------------------------------
// Spearman and IRC

TEST(Spearman, Examples) {
  EXPECT_NEAR(spearman(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}), 1.0, 1e-15);
  EXPECT_NEAR(spearman(std::vector<double>{1, 2, 3}, std::vector<double>{3, 2, 1}), -1.0, 1e-15);
  EXPECT_NEAR(spearman(std::vector<double>{1, 1, 2}, std::vector<double>{1, 2, 3}), 0.8660254, 1e-7);
}

TEST(Spearman, DegenerateRanking) {
  try {
    spearman(std::vector<double>{2, 2, 2}, std::vector<double>{1, 2, 3});
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("degenerate ranking"), std::string::npos);
  }
  EXPECT_THROW(spearman(std::vector<double>{1}, std::vector<double>{1}), Error);
  EXPECT_THROW(spearman(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}), Error);
}

TEST(Spearman, MatchesBruteForce) {
  Rng rng = make_rng(1000);
  int checked = 0;
  while (checked < 1000) {
    const std::size_t n = 2 + uniform_index(rng, 11);
    const bool ties = uniform_index(rng, 2) == 1;
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = ties ? static_cast<double>(uniform_index(rng, 4)) : uniform01(rng);
      b[i] = ties ? static_cast<double>(uniform_index(rng, 4)) : uniform01(rng);
    }
    if (std::adjacent_find(a.begin(), a.end(), std::not_equal_to<>()) == a.end()) continue;
    if (std::adjacent_find(b.begin(), b.end(), std::not_equal_to<>()) == b.end()) continue;
    ASSERT_NEAR(spearman(a, b), popx::testing::brute_spearman(a, b), 1e-12);
    ++checked;
  }
}

TEST(Irc, Examples) {
  const auto w = wv({0.1, 0.4, 0.2, 0.3});
  EXPECT_NEAR(irc(w, w), 1.0, 1e-15);
  EXPECT_NEAR(irc(w, wv({0.4, 0.1, 0.3, 0.2})), -1.0, 1e-15);
  EXPECT_NEAR(irc(w, wv({0.3, 0.2, 0.1, 0.4})), 0.0, 1e-15);
  EXPECT_NEAR(irc(w, wv({-0.1, -0.4, 0.2, 0.3})), 1.0, 1e-15);  // magnitudes
  EXPECT_THROW(irc(w, wv({0, 0, 0, 0})), Error);
  EXPECT_THROW(irc(w, wv({1, 2})), Error);
}

TEST(Irc, SymmetricAndRankInvariant) {
  Rng rng = make_rng(7);
  for (int it = 0; it < 200; ++it) {
    const std::size_t n = 3 + uniform_index(rng, 20);
    std::vector<double> a(n), b(n), fa(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = uniform01(rng);
      b[i] = uniform01(rng);
      fa[i] = std::exp(3 * a[i]) + a[i];
    }
    EXPECT_EQ(irc(wv(a), wv(b)), irc(wv(b), wv(a)));
    EXPECT_NEAR(irc(wv(a), wv(fa)), 1.0, 1e-12);
  }
}

// ---------------------------------------------------------------------------
// Top-k and LOD

TEST(TopK, Examples) {
  const auto ten = top_k_type_counts(wv(std::vector<double>(10, 1.0)), typed_columns(std::vector<T>(10, T::kControl)));
  EXPECT_EQ(ten, (TypeCounts{10, 0, 0}));
  const auto four = top_k_type_counts(wv({1, 2, 3, 4}), typed_columns({T::kCase, T::kEvent, T::kEvent, T::kControl}));
  EXPECT_EQ(four.total(), 4u);
  EXPECT_THROW(top_k_type_counts(wv({1}), typed_columns({T::kCase}), 0), Error);
}

TEST(TopK, TiesGoToLowerIndex) {
  const auto c = top_k_type_counts(wv({1, 1, 1}), typed_columns({T::kCase, T::kEvent, T::kControl}), 2);
  EXPECT_EQ(c, (TypeCounts{0, 1, 1}));
}

TEST(TopK, MatchesSortOracleAndScaleInvariance) {
  Rng rng = make_rng(30);
  for (int it = 0; it < 200; ++it) {
    const auto types = random_types(rng, 30);
    std::vector<double> w(30);
    for (auto& v : w) v = static_cast<double>(uniform_index(rng, 8)) - 4.0;
    std::vector<std::size_t> idx(30);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return std::abs(w[a]) > std::abs(w[b]); });
    TypeCounts expected;
    for (std::size_t i = 0; i < 10; ++i) {
      if (types[idx[i]] == T::kControl) ++expected.control;
      if (types[idx[i]] == T::kCase) ++expected.case_;
      if (types[idx[i]] == T::kEvent) ++expected.event;
    }
    const auto cols = typed_columns(types);
    EXPECT_EQ(top_k_type_counts(wv(w), cols), expected);
    std::vector<double> scaled = w;
    for (auto& v : scaled) v *= 3.5;
    EXPECT_EQ(top_k_type_counts(wv(scaled), cols), expected);
  }
}

TEST(Lod, WorkedExample) {
  EXPECT_NEAR(type_count_distance({1, 2, 7}, {2, 2, 6}), 1.4142, 1e-4);
  EXPECT_NEAR(type_count_distance({10, 0, 0}, {0, 10, 0}), 14.1421, 1e-4);
  // The same counts realised by weight vectors over 12 columns.
  const auto cols = typed_columns({T::kControl, T::kControl, T::kCase, T::kCase, T::kEvent, T::kEvent, T::kEvent,
                                   T::kEvent, T::kEvent, T::kEvent, T::kEvent, T::kControl});
  const auto pi = wv({0.9, 0.01, 0.8, 0.7, 0.6, 0.6, 0.5, 0.5, 0.4, 0.4, 0.3, 0.0});
  const auto e = wv({0.9, 0.8, 0.8, 0.7, 0.6, 0.6, 0.5, 0.5, 0.4, 0.4, 0.0, 0.0});
  EXPECT_EQ(top_k_type_counts(pi, cols), (TypeCounts{1, 2, 7}));
  EXPECT_EQ(top_k_type_counts(e, cols), (TypeCounts{2, 2, 6}));
  EXPECT_NEAR(lod_at_k(pi, e, cols), std::sqrt(2.0), 1e-12);
  EXPECT_EQ(lod_at_k(pi, pi, cols), 0.0);
}

TEST(Lod, Bounds) {
  Rng rng = make_rng(11);
  for (int it = 0; it < 200; ++it) {
    const std::size_t p = 1 + uniform_index(rng, 30);
    const auto cols = typed_columns(random_types(rng, p));
    std::vector<double> a(p), b(p);
    for (std::size_t i = 0; i < p; ++i) {
      a[i] = uniform01(rng);
      b[i] = uniform01(rng);
    }
    const double lod = lod_at_k(wv(a), wv(b), cols);
    EXPECT_GE(lod, 0.0);
    EXPECT_LE(lod, 10 * std::sqrt(2.0) + 1e-12);
  }
}
