#include <gtest/gtest.h>

#include "hare/analysis.hpp"
#include "oracles.hpp"

using namespace hare;

TEST(FBeta, KnownPrecisionRecallPairs) {
  EXPECT_NEAR(f_beta_score(0.590, 0.947, 2.0), 0.844, 0.001);
  EXPECT_NEAR(f_beta_score(0.602, 0.941, 2.0), 0.846, 0.001);
  EXPECT_NEAR(f_beta_score(0.602, 0.941, 2.0), 0.844, 0.003);
}

TEST(FBeta, ZeroDenominators) {
  EXPECT_EQ(f_beta_score(0.0, 0.0, 2.0), 0.0);
  const auto r = metrics_from_counts(0, 0, 0, 2.0);
  EXPECT_EQ(r.precision, 0.0);
  EXPECT_EQ(r.recall, 0.0);
  EXPECT_EQ(r.f_beta, 0.0);
}

TEST(Evaluate, PerfectPrediction) {
  const Labels g{0, 1, 1, 0, 1};
  const auto r = evaluate(g, g);
  EXPECT_EQ(r.precision, 1.0);
  EXPECT_EQ(r.recall, 1.0);
  EXPECT_EQ(r.f_beta, 1.0);
}

TEST(Evaluate, CountsMatchBruteForce) {
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    Labels p(rng.below(30) + 1), g(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = rng.bernoulli(0.4);
      g[i] = rng.bernoulli(0.3);
    }
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      tp += p[i] && g[i];
      fp += p[i] && !g[i];
      fn += !p[i] && g[i];
    }
    const auto r = evaluate(p, g, 2.0);
    EXPECT_EQ(r.tp, tp);
    EXPECT_EQ(r.fp, fp);
    EXPECT_EQ(r.fn, fn);
    const double prec = tp + fp ? double(tp) / double(tp + fp) : 0.0;
    const double rec = tp + fn ? double(tp) / double(tp + fn) : 0.0;
    const double f = prec + rec > 0 ? 5 * prec * rec / (4 * prec + rec) : 0.0;
    EXPECT_NEAR(r.f_beta, f, 1e-12);
  }
  EXPECT_THROW(evaluate(Labels{1}, Labels{1, 0}), Error);
}

TEST(Macro, MeansEachMetric) {
  EvalResult a, b;
  a.precision = 0.5;
  b.precision = 0.7;
  a.recall = 1.0;
  b.recall = 0.2;
  a.f_beta = f_beta_score(a.precision, a.recall, 2);
  b.f_beta = f_beta_score(b.precision, b.recall, 2);
  const std::vector<EvalResult> folds{a, b};
  const auto m = macro_average(folds);
  EXPECT_DOUBLE_EQ(m.precision, 0.6);
  EXPECT_DOUBLE_EQ(m.recall, 0.6);
  // The mean of F-2 is not F-2 of the means.
  EXPECT_DOUBLE_EQ(m.f_beta, (a.f_beta + b.f_beta) / 2);
  EXPECT_NE(m.f_beta, f_beta_score(0.6, 0.6, 2));
  const std::vector<EvalResult> one{a};
  EXPECT_DOUBLE_EQ(macro_average(one).f_beta, a.f_beta);
}

TEST(Sweep, GridAndSeparatedScores) {
  Corpus c("c", {Document("d", {{"a", "b", "c", "d"}}, Labels{1, 0, 1, 0})});
  ScoreSet s("m", {{"d", {0.83, 0.2, 0.71, 0.4}}});
  const auto sweep = threshold_sweep(c, s, 2.0, 100);
  EXPECT_EQ(sweep.thresholds.size(), 101u);
  EXPECT_EQ(sweep.results[sweep.best_index].f_beta, 1.0);
  EXPECT_NEAR(sweep.best_threshold, 0.41, 1e-12);  // lowest threshold reaching F = 1
  EXPECT_THROW(threshold_sweep(Corpus("c", {Document("d", {{"a"}})}), ScoreSet("m", {{"d", {0.5}}})), Error);
}

TEST(Sweep, RecallNonIncreasing) {
  Rng rng(7);
  std::vector<int> g(300);
  std::vector<double> s(300);
  std::vector<std::string> toks(300, "t");
  for (std::size_t i = 0; i < 300; ++i) {
    g[i] = rng.bernoulli(0.3);
    s[i] = rng.uniform();
  }
  Corpus c("c", {Document("d", {toks}, g)});
  const auto sweep = threshold_sweep(c, ScoreSet("m", {{"d", s}}));
  for (std::size_t i = 1; i < sweep.results.size(); ++i) EXPECT_LE(sweep.results[i].recall, sweep.results[i - 1].recall);
}

TEST(Lexicalization, MeanAndFilters) {
  Corpus c("c", {Document("d", {{"Pain", "pain", "walks"}})});
  ScoreSet s("m", {{"d", {0.2, 0.8, 0.4}}});
  const auto folded = lexicalization(c, s, 1, true);
  ASSERT_EQ(folded.entries.size(), 2u);
  EXPECT_EQ(folded.entries[0].token, "pain");
  EXPECT_DOUBLE_EQ(folded.entries[0].mean_score, 0.5);
  EXPECT_EQ(folded.entries[0].frequency, 2u);
  EXPECT_EQ(lexicalization(c, s, 2, true).entries.size(), 1u);
  EXPECT_EQ(lexicalization(c, s, 1, false).entries.size(), 3u);
}

TEST(Histogram, Boundaries) {
  const std::vector<double> s{0.0, 1.0};
  const auto h = score_histogram(s, 2);
  EXPECT_EQ(h.counts, (std::vector<std::size_t>{1, 1}));
  const std::vector<double> edges{0.0, 0.1, 0.2, 0.3, 0.7, 0.9999, 1.0};
  const auto h10 = score_histogram(edges, 10);
  EXPECT_EQ(h10.counts, (std::vector<std::size_t>{1, 1, 1, 1, 0, 0, 0, 1, 0, 2}));
  EXPECT_EQ(h10.total(), edges.size());
  EXPECT_NEAR(h10.mass_within(0.0, 0.2), 2.0 / 7.0, 1e-12);
  EXPECT_THROW(score_histogram(s, 0), Error);
}
