#pragma once

// Document scoring, ranking and rank correlation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hare/error.hpp"
#include "hare/postprocess.hpp"

namespace hare {

enum class RankingMethod {
  kSegmentsTokens,  // C * segments + relevant tokens
  kSumScores,       // sum of continuous token scores
  kDensity,         // relevant tokens / all tokens
};

inline constexpr std::array<RankingMethod, 3> kAllRankingMethods = {
    RankingMethod::kSegmentsTokens, RankingMethod::kSumScores, RankingMethod::kDensity};

// Segment weight for SegmentsTokens. Documents with this many tokens or more
// would let token count override segment count.
inline constexpr double kSegmentWeight = 1e6;

inline const char* ranking_method_name(RankingMethod m) {
  switch (m) {
    case RankingMethod::kSegmentsTokens: return "segtok";
    case RankingMethod::kSumScores: return "sum";
    case RankingMethod::kDensity: return "density";
  }
  return "?";
}

inline RankingMethod parse_ranking_method(std::string_view name) {
  if (name == "segtok" || name == "segments_tokens" || name == "SegmentsTokens") return RankingMethod::kSegmentsTokens;
  if (name == "sum" || name == "sum_scores" || name == "SumScores") return RankingMethod::kSumScores;
  if (name == "density" || name == "Density") return RankingMethod::kDensity;
  throw Error(ErrorCode::kInvalidArgument, "unknown ranking method '" + std::string(name) +
                                               "' (expected segtok, sum or density)",
              "method");
}

inline double score_document(RankingMethod method, const DocumentAnnotation& ann) {
  switch (method) {
    case RankingMethod::kSegmentsTokens:
      return kSegmentWeight * static_cast<double>(ann.segments.size()) + static_cast<double>(ann.relevant_count());
    case RankingMethod::kSumScores:
      return std::accumulate(ann.scores.begin(), ann.scores.end(), 0.0);
    case RankingMethod::kDensity:
      if (ann.labels.empty()) throw Error(ErrorCode::kInvalidArgument, "density of an empty document", ann.id);
      return static_cast<double>(ann.relevant_count()) / static_cast<double>(ann.labels.size());
  }
  return 0.0;
}

struct RankedDocument {
  std::string id;
  double score = 0.0;
  std::size_t rank = 0;  // 1 = most relevant
};

struct RankingResult {
  RankingMethod method = RankingMethod::kSegmentsTokens;
  PostProcessSettings settings;
  std::vector<RankedDocument> entries;  // rank order
  std::vector<std::string> warnings;

  const RankedDocument& find(const std::string& id) const {
    for (const auto& e : entries)
      if (e.id == id) return e;
    throw Error(ErrorCode::kNotFound, "document not ranked", id);
  }
};

// Descending score; equal scores rank by ascending document id.
inline RankingResult rank_scores(std::vector<RankedDocument> docs, RankingMethod method) {
  std::sort(docs.begin(), docs.end(), [](const RankedDocument& a, const RankedDocument& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  for (std::size_t i = 0; i < docs.size(); ++i) docs[i].rank = i + 1;
  RankingResult result;
  result.method = method;
  result.entries = std::move(docs);
  return result;
}

inline RankingResult rank_documents(std::span<const DocumentAnnotation> annotations, RankingMethod method,
                                    const PostProcessSettings& settings = {}) {
  std::vector<RankedDocument> docs;
  std::vector<std::string> warnings;
  docs.reserve(annotations.size());
  for (const auto& ann : annotations) {
    if (method == RankingMethod::kSegmentsTokens && static_cast<double>(ann.labels.size()) >= kSegmentWeight)
      warnings.push_back("document " + ann.id + " has at least 1e6 tokens; segment counts may not dominate");
    docs.push_back({ann.id, score_document(method, ann), 0});
  }
  auto result = rank_scores(std::move(docs), method);
  result.settings = settings;
  result.warnings = std::move(warnings);
  return result;
}

// Fractional ranks: tied values share the mean of the positions they span.
// Rank 1 goes to the largest value.
inline std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double shared = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
    i = j + 1;
  }
  return ranks;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw Error(ErrorCode::kUndefined, "rank correlation undefined: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// Spearman's rho over paired score vectors, with average ranks for ties.
inline double spearman_rho(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::kAlignment, "rank correlation over vectors of different length");
  if (a.size() < 2) throw Error(ErrorCode::kUndefined, "rank correlation needs at least 2 documents");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  return pearson(ra, rb);
}

// Pairs documents by id; both rankings must cover the same documents.
inline double spearman_rho(const RankingResult& a, const RankingResult& b) {
  if (a.entries.size() != b.entries.size())
    throw Error(ErrorCode::kAlignment, "rankings cover different document sets");
  std::map<std::string, double> b_scores;
  for (const auto& e : b.entries) b_scores.emplace(e.id, e.score);
  std::vector<double> xs, ys;
  for (const auto& e : a.entries) {
    auto it = b_scores.find(e.id);
    if (it == b_scores.end()) throw Error(ErrorCode::kAlignment, "document missing from second ranking", e.id);
    xs.push_back(e.score);
    ys.push_back(it->second);
  }
  return spearman_rho(xs, ys);
}

// rho[g][m]: gold ranked with method g against model ranked with method m,
// in kAllRankingMethods order.
using RankingMatrix = std::array<std::array<double, 3>, 3>;

inline RankingMatrix ranking_method_matrix(std::span<const DocumentAnnotation> gold,
                                           std::span<const DocumentAnnotation> model) {
  RankingMatrix rho{};
  for (std::size_t g = 0; g < 3; ++g) {
    const auto gold_rank = rank_documents(gold, kAllRankingMethods[g]);
    for (std::size_t m = 0; m < 3; ++m) rho[g][m] = spearman_rho(gold_rank, rank_documents(model, kAllRankingMethods[m]));
  }
  return rho;
}

}  // namespace hare
