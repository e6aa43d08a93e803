#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "sonardn/selection.hpp"
#include "test_util.hpp"

using namespace sonardn;

namespace {

ScoreTable random_table(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ScoreTable t;
  for (std::size_t i = 0; i < n; ++i) {
    ModelRow r;
    char id[16];
    std::snprintf(id, sizeof id, "m%03zu", i);
    r.modelId = id;
    r.metrics = {20 + 15 * u(rng), u(rng), u(rng), 1000 * u(rng), 10 * u(rng)};
    r.meanRecall = u(rng);
    r.meanPrecision = u(rng);
    t.rows.push_back(r);
  }
  return t;
}

// Table whose tv ranks reproduce the matching outcome exactly.
ScoreTable tv_driven_table(std::size_t n, std::uint64_t seed) {
  ScoreTable t = random_table(n, seed);
  for (auto& r : t.rows) {
    r.meanPrecision = r.metrics[3] / 1000.0;
    r.meanRecall = 0.5 * r.meanPrecision;
  }
  return t;
}

}  // namespace

TEST(Rank, TwoModels) {
  const std::vector<double> v{30, 40};
  EXPECT_EQ(rank_column(v, true), (std::vector<double>{0.0, 1.0}));
}

TEST(Rank, FullTieSharesMidRank) {
  const std::vector<double> v{7, 7, 7};
  EXPECT_EQ(rank_column(v, true), (std::vector<double>{0.5, 0.5, 0.5}));
}

TEST(Rank, LowerIsBetterForBlindQuality) {
  ScoreTable t;
  for (double b : {10.0, 5.0, 20.0}) {
    ModelRow r;
    r.metrics = {1, 1, 1, 1, b};
    t.rows.push_back(r);
  }
  rank_models(t);
  EXPECT_EQ(t.rows[0].ranks[4], 0.5);
  EXPECT_EQ(t.rows[1].ranks[4], 1.0);
  EXPECT_EQ(t.rows[2].ranks[4], 0.0);
}

TEST(Rank, PartialTies) {
  // Positions 1, (2,3) tied, 4 -> ranks 1, 0.5, 0.5, 0.
  const std::vector<double> v{9, 5, 5, 1};
  EXPECT_EQ(rank_column(v, true), (std::vector<double>{1.0, 0.5, 0.5, 0.0}));
  EXPECT_THROW(rank_column(std::vector<double>{1.0}, true), Error);
  EXPECT_THROW(rank_column(std::vector<double>{1.0, NAN}, true), Error);
}

TEST(Rank, InvariantUnderMonotoneTransforms) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    ScoreTable a = random_table(15, s);
    ScoreTable b = a;
    for (auto& r : b.rows) {
      r.metrics[0] = std::exp(0.3 * r.metrics[0]);
      r.metrics[3] *= 7.5;
      r.metrics[4] = std::log(r.metrics[4] + 1.0);
    }
    rank_models(a);
    rank_models(b);
    for (std::size_t i = 0; i < a.rows.size(); ++i) EXPECT_EQ(a.rows[i].ranks, b.rows[i].ranks);
    const WeightVector w{{0.1, 0.3, 0.2, 0.25, 0.15}};
    EXPECT_EQ(score(a, w), score(b, w));
    EXPECT_EQ(select_best_model(a, w), select_best_model(b, w));
  }
}

TEST(Score, ProjectionAndHandCase) {
  ScoreTable t = random_table(8, 3);
  rank_models(t);
  const auto s = score(t, WeightVector::one_hot(0));
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(s[i], t.rows[i].ranks[0]);
  EXPECT_NEAR(weighted_score({1, 0, 0.5, 0.5, 0}, WeightVector{}.w), 0.4, 1e-15);
  EXPECT_THROW(score(t, WeightVector{{0.5, 0.5, 0.5, 0, 0}}), Error);
}

TEST(Score, DominantModelScoresOne) {
  ScoreTable t = random_table(6, 4);
  t.rows[2].metrics = {100, 1.0, 1.0, 1e6, -1.0};
  rank_models(t);
  score(t, WeightVector{});
  EXPECT_DOUBLE_EQ(t.rows[2].score, 1.0);
  std::mt19937_64 rng(1);
  for (int k = 0; k < 20; ++k) {
    WeightVector w;
    w.w = detail::dirichlet_uniform(rng);
    EXPECT_EQ(select_best_model(t, w), t.rows[2].modelId);
  }
}

TEST(Score, AffineInWeights) {
  ScoreTable t = random_table(12, 5);
  rank_models(t);
  const WeightVector w1{{0.6, 0.1, 0.1, 0.1, 0.1}}, w2{{0.0, 0.0, 0.5, 0.25, 0.25}};
  const auto s1 = score(t, w1), s2 = score(t, w2);
  for (double a : {0.0, 0.3, 0.75, 1.0}) {
    WeightVector mix;
    for (std::size_t i = 0; i < kMetricCount; ++i) mix.w[i] = a * w1.w[i] + (1 - a) * w2.w[i];
    const auto sm = score(t, mix);
    for (std::size_t i = 0; i < sm.size(); ++i) EXPECT_NEAR(sm[i], a * s1[i] + (1 - a) * s2[i], 1e-14);
  }
}

TEST(Select, SingletonAndTieBreak) {
  ScoreTable one;
  one.rows.push_back({"only", {}, {}, 0, 0, 0});
  EXPECT_EQ(select_best_model(one, WeightVector{}), "only");
  ScoreTable tie;
  for (const char* id : {"b", "a", "c"}) tie.rows.push_back({id, {1, 1, 1, 1, 1}, {}, 0, 0, 0});
  EXPECT_EQ(select_best_model(tie, WeightVector{}), "a");
  ScoreTable empty;
  EXPECT_THROW(select_best_model(empty, WeightVector{}), Error);
}

TEST(Spearman, KnownValues) {
  const std::vector<double> x{1, 2, 3, 4}, y{10, 20, 30, 1000}, z{4, 3, 2, 1};
  EXPECT_DOUBLE_EQ(*spearman(x, y), 1.0);
  EXPECT_DOUBLE_EQ(*spearman(x, z), -1.0);
  EXPECT_FALSE(spearman(x, std::vector<double>{1, 1, 1, 1}).has_value());
}

TEST(Correlation, Definitional) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0, 1);
  std::vector<double> x(30), neg(30);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = n(rng);
    neg[i] = -x[i];
  }
  const std::vector<NamedSeries> cols{{"x", x}, {"x2", x}, {"negx", neg}};
  const auto c = correlation_matrix(cols);
  EXPECT_NEAR(c.values(0, 1), 1.0, 1e-12);
  EXPECT_NEAR(c.values(0, 2), -1.0, 1e-12);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(c.values(i, i), 1.0);
  EXPECT_EQ(c.values, c.values.transpose());
}

TEST(Correlation, HandSeries) {
  const std::vector<NamedSeries> lin{{"x", {1, 2, 3}}, {"y", {2, 4, 6}}};
  EXPECT_NEAR(correlation_matrix(lin).values(0, 1), 1.0, 1e-15);
  // means 2, 2; covariance sum (-1)(-1) + 0 + (1)(0) = 1; variances 2, 2.
  const std::vector<NamedSeries> hand{{"x", {1, 2, 3}}, {"y", {1, 3, 2}}};
  EXPECT_NEAR(correlation_matrix(hand).values(0, 1), 0.5, 1e-15);
}

TEST(Correlation, Errors) {
  const std::vector<NamedSeries> flat{{"x", {1, 2, 3}}, {"flatline", {2, 2, 2}}};
  try {
    correlation_matrix(flat);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("flatline"), std::string::npos);
  }
  const std::vector<NamedSeries> shortSeries{{"x", {1, 2}}, {"y", {2, 1}}};
  EXPECT_THROW(correlation_matrix(shortSeries), Error);
  const std::vector<NamedSeries> ragged{{"x", {1, 2, 3}}, {"y", {2, 1}}};
  EXPECT_THROW(correlation_matrix(ragged), Error);
}

TEST(Correlation, PositiveSemidefinite) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0, 1);
  for (int trial = 0; trial < 10; ++trial) {
    // More series than samples gives a rank-deficient matrix.
    std::vector<NamedSeries> cols;
    for (int k = 0; k < 12; ++k) {
      NamedSeries s{"s" + std::to_string(k), std::vector<double>(6)};
      for (double& v : s.values) v = n(rng) + (k % 3) * s.values[0];
      cols.push_back(s);
    }
    EXPECT_GE(min_eigenvalue(correlation_matrix(cols)), -1e-9);
  }
}

TEST(Correlation, CsvAndHeatmap) {
  const std::vector<NamedSeries> cols{{"a", {1, 2, 3}}, {"b", {3, 2, 1}}};
  const auto c = correlation_matrix(cols);
  std::ostringstream os;
  write_correlation_csv(c, os);
  EXPECT_EQ(os.str(), "name,a,b\na,1,-1\nb,-1,1\n");
  const ImageF h = render_heatmap(c, 4);
  EXPECT_EQ(h.width(), 8);
  EXPECT_EQ(h.at(0, 0), 1.0);
  EXPECT_EQ(h.at(5, 0), 0.0);
}

TEST(GA, RecoversDrivingMetric) {
  const ScoreTable t = tv_driven_table(20, 8);
  GAConfig cfg;
  cfg.seed = 11;
  const auto r = ga_tune_weights(t, cfg);
  EXPECT_GE(r.weights.w[3], 0.8);
  EXPECT_GE(r.fitness, 0.99);
  EXPECT_EQ(r.history.size(), 100u);
}

TEST(GA, HistoryNonDecreasingAndDeterministic) {
  ScoreTable t = random_table(12, 9);
  GAConfig cfg;
  cfg.generations = 30;
  cfg.seed = 3;
  const auto a = ga_tune_weights(t, cfg);
  for (std::size_t g = 1; g < a.history.size(); ++g)
    EXPECT_GE(a.history[g].bestFitness, a.history[g - 1].bestFitness);
  cfg.jobs = 3;
  const auto b = ga_tune_weights(t, cfg);
  EXPECT_EQ(a.weights.w, b.weights.w);
  std::ostringstream la, lb;
  write_ga_log_csv(a, la);
  write_ga_log_csv(b, lb);
  EXPECT_EQ(la.str(), lb.str());
}

TEST(GA, FixedPointWithoutMutation) {
  const ScoreTable t = random_table(10, 10);
  GAConfig cfg;
  cfg.generations = 20;
  cfg.mutationScale = 0.0;
  cfg.initial = WeightVector{{0.15, 0.35, 0.1, 0.3, 0.1}};
  const auto r = ga_tune_weights(t, cfg);
  EXPECT_EQ(r.weights.w, cfg.initial->w);
}

TEST(GA, OffspringStayOnSimplex) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-0.3, 1.0);
  for (int k = 0; k < 200; ++k) {
    MetricVector v;
    for (double& x : v) x = u(rng);
    WeightVector w;
    w.w = project_simplex(v);
    EXPECT_NO_THROW(w.validate());
  }
  const ScoreTable t = random_table(12, 13);
  GAConfig cfg;
  cfg.generations = 10;
  cfg.mutationScale = 0.5;
  for (const auto& g : ga_tune_weights(t, cfg).history) EXPECT_NO_THROW(g.best.validate());
}

TEST(GA, Errors) {
  ScoreTable t = random_table(10, 14);
  for (auto& r : t.rows) r.meanRecall = r.meanPrecision = 0.4;
  EXPECT_THROW(ga_tune_weights(t, {}), Error);
  EXPECT_THROW(ga_tune_weights(random_table(4, 1), {}), Error);
  GAConfig bad;
  bad.population = 3;
  EXPECT_THROW(ga_tune_weights(random_table(10, 1), bad), Error);
}

TEST(ScoreTableCsv, RoundTrip) {
  ScoreTable t = random_table(5, 15);
  rank_models(t);
  score(t, WeightVector{});
  const auto dir = test::scratch_dir("selection_csv");
  {
    std::ofstream out(dir / "t.csv");
    write_score_table_csv(t, out);
  }
  const ScoreTable back = read_score_table_csv(dir / "t.csv");
  ASSERT_EQ(back.rows.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(back.rows[i].modelId, t.rows[i].modelId);
    for (std::size_t m = 0; m < kMetricCount; ++m) EXPECT_NEAR(back.rows[i].metrics[m], t.rows[i].metrics[m], 1e-9 * std::abs(t.rows[i].metrics[m]));
  }
  {
    std::ofstream out(dir / "w.csv");
    write_weights_csv(WeightVector{{0.1, 0.2, 0.3, 0.4, 0.0}}, out);
  }
  EXPECT_NEAR(read_weights_csv(dir / "w.csv").w[3], 0.4, 1e-15);
}
