#pragma once

// k-fold cross-validation: train on k-1 folds, tag the held-out fold, and
// estimate the fold's transition model from its training documents. Every
// document ends up with held-out raw and smoothed scores.

#include <cstddef>
#include <string>
#include <vector>

#include "hare/analysis.hpp"
#include "hare/corpus.hpp"
#include "hare/features.hpp"
#include "hare/postprocess.hpp"
#include "hare/tagger.hpp"

namespace hare {

struct FoldOutcome {
  std::size_t fold = 0;
  TrainReport report;
  TransitionModel transitions;
  EvalResult raw;       // held-out tokens, threshold from settings
  EvalResult smoothed;
};

struct CrossValidationResult {
  FoldSplit split;
  std::vector<FoldOutcome> folds;
  ScoreSet raw;        // corpus order
  ScoreSet smoothed;   // corpus order
  EvalResult macro_raw;
  EvalResult macro_smoothed;
};

inline CrossValidationResult cross_validate(const Corpus& corpus, const FeatureSource& source,
                                            const TaggerConfig& config, std::size_t fold_count,
                                            const PostProcessSettings& settings = {}, double beta = 2.0,
                                            const std::string& model_id = "cv") {
  CrossValidationResult result;
  result.split = split_folds(corpus, fold_count, config.seed);
  std::vector<DocumentScores> raw(corpus.size()), smoothed(corpus.size());
  std::vector<EvalResult> raw_evals, smoothed_evals;

  for (std::size_t fold = 0; fold < fold_count; ++fold) {
    const auto test_idx = result.split.members(corpus, fold);
    const Corpus train_corpus = corpus.subset(result.split.complement(corpus, fold));
    const Corpus test_corpus = corpus.subset(test_idx);

    FoldOutcome outcome;
    outcome.fold = fold;
    TaggerConfig fold_config = config;
    fold_config.seed = config.seed + fold;
    auto [model, report] = train(train_corpus, source, fold_config);
    outcome.report = std::move(report);
    outcome.transitions = estimate_transitions(train_corpus);

    const ScoreSet fold_raw = tag_corpus(model, test_corpus, source, model_id);
    const ScoreSet fold_smoothed = smooth_scores(test_corpus, fold_raw, outcome.transitions);
    PostProcessSettings plain = settings;
    plain.smoothing = false;
    outcome.raw = evaluate_annotations(test_corpus, annotate(test_corpus, fold_raw, plain), beta);
    outcome.smoothed = evaluate_annotations(test_corpus, annotate(test_corpus, fold_smoothed, plain), beta);
    raw_evals.push_back(outcome.raw);
    smoothed_evals.push_back(outcome.smoothed);

    for (std::size_t k = 0; k < test_idx.size(); ++k) {
      const auto& id = corpus.documents()[test_idx[k]].id();
      raw[test_idx[k]] = {id, fold_raw.scores(id)};
      smoothed[test_idx[k]] = {id, fold_smoothed.scores(id)};
    }
    result.folds.push_back(std::move(outcome));
  }
  result.raw = ScoreSet(model_id, std::move(raw), false);
  result.smoothed = ScoreSet(model_id, std::move(smoothed), true);
  result.macro_raw = macro_average(raw_evals);
  result.macro_smoothed = macro_average(smoothed_evals);
  return result;
}

}  // namespace hare
