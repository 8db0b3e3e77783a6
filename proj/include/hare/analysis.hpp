#pragma once

// Evaluation metrics and score analyses: precision/recall/F-beta, macro
// averaging over folds, threshold sweeps, per-word mean scores
// (lexicalization) and score histograms.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hare/corpus.hpp"
#include "hare/error.hpp"
#include "hare/postprocess.hpp"

namespace hare {

struct EvalResult {
  double precision = 0.0;
  double recall = 0.0;
  double f_beta = 0.0;
  double beta = 2.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

// Zero denominators yield 0 rather than NaN.
inline double f_beta_score(double precision, double recall, double beta) {
  const double b2 = beta * beta;
  const double denom = b2 * precision + recall;
  if (denom <= 0.0) return 0.0;
  return (1.0 + b2) * precision * recall / denom;
}

inline EvalResult metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn, double beta) {
  EvalResult r;
  r.beta = beta;
  r.tp = tp;
  r.fp = fp;
  r.fn = fn;
  r.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  r.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  r.f_beta = f_beta_score(r.precision, r.recall, beta);
  return r;
}

inline EvalResult evaluate(std::span<const int> predicted, std::span<const int> gold, double beta = 2.0) {
  if (predicted.size() != gold.size()) {
    throw Error(ErrorCode::kAlignment, "prediction and gold lengths differ: " + std::to_string(predicted.size()) +
                                           " vs " + std::to_string(gold.size()));
  }
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const bool p = predicted[i] == kRelevant;
    const bool g = gold[i] == kRelevant;
    tp += p && g;
    fp += p && !g;
    fn += !p && g;
  }
  return metrics_from_counts(tp, fp, fn, beta);
}

// Pools every token of every document.
inline EvalResult evaluate_annotations(const Corpus& corpus, std::span<const DocumentAnnotation> annotations,
                                       double beta = 2.0) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const auto& ann : annotations) {
    const auto r = evaluate(ann.labels, corpus.document(ann.id).gold(), beta);
    tp += r.tp;
    fp += r.fp;
    fn += r.fn;
  }
  return metrics_from_counts(tp, fp, fn, beta);
}

// Unweighted mean of each metric across folds; counts are summed.
inline EvalResult macro_average(std::span<const EvalResult> folds) {
  if (folds.empty()) throw Error(ErrorCode::kInvalidArgument, "macro average of zero folds");
  EvalResult out;
  out.beta = folds.front().beta;
  for (const auto& f : folds) {
    out.precision += f.precision;
    out.recall += f.recall;
    out.f_beta += f.f_beta;
    out.tp += f.tp;
    out.fp += f.fp;
    out.fn += f.fn;
  }
  const auto n = static_cast<double>(folds.size());
  out.precision /= n;
  out.recall /= n;
  out.f_beta /= n;
  return out;
}

// ---------------------------------------------------------------------------

struct ThresholdSweep {
  std::vector<double> thresholds;
  std::vector<EvalResult> results;
  double best_threshold = 0.0;
  std::size_t best_index = 0;
};

// Evaluates at grid_size + 1 evenly spaced thresholds over [0,1], pooling all
// tokens of `corpus`. The best threshold is the lowest one reaching the
// maximum F-beta.
inline ThresholdSweep threshold_sweep(const Corpus& corpus, const ScoreSet& scores, double beta = 2.0,
                                      std::size_t grid_size = 100) {
  if (grid_size == 0) throw Error(ErrorCode::kInvalidArgument, "grid_size must be positive", "grid_size");
  std::vector<double> flat_scores;
  std::vector<int> flat_gold;
  for (const auto& doc : corpus.documents()) {
    const auto& s = scores.scores(doc.id());
    const auto& g = doc.gold();
    if (s.size() != g.size()) throw Error(ErrorCode::kAlignment, "score count differs from token count", doc.id());
    flat_scores.insert(flat_scores.end(), s.begin(), s.end());
    flat_gold.insert(flat_gold.end(), g.begin(), g.end());
  }
  ThresholdSweep sweep;
  for (std::size_t i = 0; i <= grid_size; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(grid_size);
    sweep.thresholds.push_back(t);
    sweep.results.push_back(evaluate(binarize(flat_scores, t), flat_gold, beta));
    if (sweep.results.back().f_beta > sweep.results[sweep.best_index].f_beta) sweep.best_index = i;
  }
  sweep.best_threshold = sweep.thresholds[sweep.best_index];
  return sweep;
}

// ---------------------------------------------------------------------------

struct LexicalEntry {
  std::string token;
  double mean_score = 0.0;
  std::size_t frequency = 0;
};

struct LexicalizationReport {
  std::vector<LexicalEntry> entries;  // descending mean score, then token
  std::size_t min_frequency = 1;
};

inline std::string fold_case(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

inline LexicalizationReport lexicalization(const Corpus& corpus, const ScoreSet& scores,
                                           std::size_t min_frequency = 1, bool case_fold = false) {
  std::map<std::string, std::pair<double, std::size_t>> totals;
  for (const auto& doc : corpus.documents()) {
    const auto& s = scores.scores(doc.id());
    if (s.size() != doc.token_count())
      throw Error(ErrorCode::kAlignment, "score count differs from token count", doc.id());
    std::size_t i = 0;
    for (const auto& line : doc.lines()) {
      for (const auto& tok : line) {
        auto& slot = totals[case_fold ? fold_case(tok.text) : tok.text];
        slot.first += s[i++];
        ++slot.second;
      }
    }
  }
  LexicalizationReport report;
  report.min_frequency = min_frequency;
  for (const auto& [token, total] : totals) {
    if (total.second < min_frequency) continue;
    report.entries.push_back({token, total.first / static_cast<double>(total.second), total.second});
  }
  std::stable_sort(report.entries.begin(), report.entries.end(),
                   [](const LexicalEntry& a, const LexicalEntry& b) { return a.mean_score > b.mean_score; });
  return report;
}

// ---------------------------------------------------------------------------

struct ScoreHistogram {
  std::vector<double> edges;  // bins + 1 values
  std::vector<std::size_t> counts;

  std::size_t total() const {
    std::size_t n = 0;
    for (auto c : counts) n += c;
    return n;
  }

  // Fraction of scores falling in bins entirely inside [lo, hi].
  double mass_within(double lo, double hi) const {
    const std::size_t n = total();
    if (n == 0) return 0.0;
    std::size_t inside = 0;
    for (std::size_t b = 0; b < counts.size(); ++b)
      if (edges[b] >= lo - 1e-12 && edges[b + 1] <= hi + 1e-12) inside += counts[b];
    return static_cast<double>(inside) / static_cast<double>(n);
  }
};

// Equal-width bins over [0,1]; half-open except the last, which is closed.
inline ScoreHistogram score_histogram(std::span<const double> scores, std::size_t bins = 20) {
  if (bins == 0) throw Error(ErrorCode::kInvalidArgument, "bins must be at least 1", "bins");
  ScoreHistogram h;
  for (std::size_t b = 0; b <= bins; ++b) h.edges.push_back(static_cast<double>(b) / static_cast<double>(bins));
  h.counts.assign(bins, 0);
  for (double s : scores) {
    auto b = static_cast<std::size_t>(std::floor(s * static_cast<double>(bins)));
    // floor can land one bin off near an edge; settle against the edges.
    while (b > 0 && s < h.edges[std::min(b, bins)]) --b;
    while (b + 1 < bins && s >= h.edges[b + 1]) ++b;
    h.counts[std::min(b, bins - 1)]++;
  }
  return h;
}

inline ScoreHistogram score_histogram(const ScoreSet& scores, std::size_t bins = 20) {
  std::vector<double> all;
  for (const auto& doc : scores.documents()) all.insert(all.end(), doc.scores.begin(), doc.scores.end());
  return score_histogram(all, bins);
}

}  // namespace hare
