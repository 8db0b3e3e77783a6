#pragma once

// Post-processing of raw token relevance scores: Viterbi smoothing over a
// two-state transition model, binarization, segment extraction and
// collapsing of nearby segments.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "hare/corpus.hpp"
#include "hare/error.hpp"

namespace hare {

inline constexpr int kIrrelevant = 0;
inline constexpr int kRelevant = 1;

// ---------------------------------------------------------------------------
// Score sets

struct DocumentScores {
  std::string id;
  std::vector<double> scores;
};

// One relevance score in [0,1] per corpus token, grouped by document.
class ScoreSet {
 public:
  ScoreSet() = default;
  ScoreSet(std::string model_id, std::vector<DocumentScores> documents, bool smoothed = false)
      : model_id_(std::move(model_id)), smoothed_(smoothed), documents_(std::move(documents)) {
    for (std::size_t i = 0; i < documents_.size(); ++i) {
      const auto& doc = documents_[i];
      if (!index_.emplace(doc.id, i).second)
        throw Error(ErrorCode::kConflict, "duplicate document in score set", doc.id);
      for (std::size_t t = 0; t < doc.scores.size(); ++t) {
        const double s = doc.scores[t];
        if (!(s >= 0.0 && s <= 1.0))
          throw Error(ErrorCode::kInvalidArgument, "score outside [0,1]", doc.id + ":" + std::to_string(t));
      }
    }
  }

  const std::string& model_id() const { return model_id_; }
  bool smoothed() const { return smoothed_; }
  const std::vector<DocumentScores>& documents() const { return documents_; }
  std::size_t size() const { return documents_.size(); }
  bool empty() const { return documents_.empty(); }

  bool contains(const std::string& id) const { return index_.count(id) != 0; }

  const std::vector<double>& scores(const std::string& document_id) const {
    auto it = index_.find(document_id);
    if (it == index_.end()) throw Error(ErrorCode::kNotFound, "document not in score set", document_id);
    return documents_[it->second].scores;
  }

  // Throws unless there is exactly one score per corpus token.
  void validate_alignment(const Corpus& corpus) const {
    for (const auto& doc : corpus.documents()) {
      if (!contains(doc.id()))
        throw Error(ErrorCode::kAlignment, "score set has no scores for document", doc.id());
      const auto n = scores(doc.id()).size();
      if (n != doc.token_count())
        throw Error(ErrorCode::kAlignment,
                    "score set has " + std::to_string(n) + " scores for " +
                        std::to_string(doc.token_count()) + " tokens",
                    doc.id());
    }
    for (const auto& d : documents_)
      if (!corpus.contains(d.id)) throw Error(ErrorCode::kAlignment, "document not in corpus", d.id);
  }

 private:
  std::string model_id_;
  bool smoothed_ = false;
  std::vector<DocumentScores> documents_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Score files: one JSON record per document, {"id": ..., "scores": [...]}.
// The single-key form {"<id>": [...]} is accepted on input. An optional
// {"_meta": {...}} record carries provenance and is returned separately.
struct ScoreFile {
  ScoreSet scores;
  nlohmann::json meta = nlohmann::json::object();
};

inline ScoreFile parse_score_file(std::istream& in, std::string model_id) {
  ScoreFile file;
  std::vector<DocumentScores> docs;
  std::string line;
  std::size_t record_number = 0;
  bool smoothed = false;
  while (std::getline(in, line)) {
    ++record_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string locus = "record " + std::to_string(record_number);
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParse, std::string("malformed record: ") + e.what(), locus);
    }
    if (!record.is_object()) throw Error(ErrorCode::kParse, "record is not an object", locus);
    if (record.contains("_meta")) {
      file.meta = record["_meta"];
      if (file.meta.contains("smoothed") && file.meta["smoothed"].is_boolean())
        smoothed = file.meta["smoothed"].get<bool>();
      continue;
    }
    DocumentScores doc;
    const nlohmann::json* values = nullptr;
    if (record.contains("id") && record.contains("scores")) {
      doc.id = record["id"].get<std::string>();
      values = &record["scores"];
    } else if (record.size() == 1 && record.begin().value().is_array()) {
      doc.id = record.begin().key();
      values = &record.begin().value();
    } else {
      throw Error(ErrorCode::kParse, "record needs 'id' and 'scores'", locus);
    }
    for (const auto& v : *values) {
      if (!v.is_number()) throw Error(ErrorCode::kParse, "scores must be numbers", locus + " (" + doc.id + ")");
      doc.scores.push_back(v.get<double>());
    }
    docs.push_back(std::move(doc));
  }
  if (model_id.empty() && file.meta.contains("model_id")) model_id = file.meta["model_id"].get<std::string>();
  file.scores = ScoreSet(std::move(model_id), std::move(docs), smoothed);
  return file;
}

inline ScoreFile load_score_file(const std::filesystem::path& path, std::string model_id = {}) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open score file", path.string());
  return parse_score_file(in, std::move(model_id));
}

inline void write_score_file(std::ostream& out, const ScoreSet& scores,
                             nlohmann::json meta = nlohmann::json::object()) {
  meta["model_id"] = scores.model_id();
  meta["smoothed"] = scores.smoothed();
  out << nlohmann::json{{"_meta", meta}}.dump() << '\n';
  for (const auto& doc : scores.documents())
    out << nlohmann::json{{"id", doc.id}, {"scores", doc.scores}}.dump() << '\n';
}

inline void save_score_file(const std::filesystem::path& path, const ScoreSet& scores,
                            nlohmann::json meta = nlohmann::json::object()) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write score file", path.string());
  write_score_file(out, scores, std::move(meta));
}

// ---------------------------------------------------------------------------
// Thresholding and segments

struct PostProcessSettings {
  double threshold = 0.5;
  std::size_t collapse_gap = 0;
  bool smoothing = false;

  void validate() const {
    if (!(threshold >= 0.0 && threshold <= 1.0))
      throw Error(ErrorCode::kInvalidArgument, "threshold must lie in [0,1]", "threshold");
  }
};

// Inclusive token span [start, end] within one document.
struct Segment {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - start + 1; }
  friend bool operator==(const Segment&, const Segment&) = default;
};

// Score at or above the threshold counts as relevant.
inline Labels binarize(std::span<const double> scores, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0))
    throw Error(ErrorCode::kInvalidArgument, "threshold must lie in [0,1]", "threshold");
  Labels out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] >= threshold ? kRelevant : kIrrelevant;
  return out;
}

// Maximal runs of relevant labels within one document. Runs may cross line
// boundaries.
inline std::vector<Segment> extract_segments(std::span<const int> labels) {
  std::vector<Segment> out;
  std::size_t i = 0;
  while (i < labels.size()) {
    if (labels[i] != kRelevant) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < labels.size() && labels[j + 1] == kRelevant) ++j;
    out.push_back({i, j});
    i = j + 1;
  }
  return out;
}

// Merges consecutive segments separated by at most `gap` tokens. A single
// left-to-right pass is already transitive.
inline std::vector<Segment> collapse_segments(std::span<const Segment> segments, std::size_t gap) {
  std::vector<Segment> out;
  for (const auto& seg : segments) {
    if (!out.empty() && seg.start > out.back().end && seg.start - out.back().end - 1 <= gap) {
      out.back().end = std::max(out.back().end, seg.end);
    } else {
      out.push_back(seg);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Transition model and Viterbi smoothing

struct TransitionModel {
  // transition[from][to], states kIrrelevant / kRelevant.
  std::array<std::array<double, 2>, 2> transition{{{0.5, 0.5}, {0.5, 0.5}}};
  std::array<double, 2> initial{0.5, 0.5};

  void validate() const {
    auto check_row = [](const std::array<double, 2>& row, const char* what) {
      if (!(row[0] > 0.0 && row[1] > 0.0) || std::abs(row[0] + row[1] - 1.0) > 1e-9)
        throw Error(ErrorCode::kInvalidArgument, "probabilities must be positive and sum to 1", what);
    };
    check_row(transition[0], "transition[0]");
    check_row(transition[1], "transition[1]");
    check_row(initial, "initial");
  }

  nlohmann::json to_json() const {
    return {{"transition", {{transition[0][0], transition[0][1]}, {transition[1][0], transition[1][1]}}},
            {"initial", {initial[0], initial[1]}}};
  }

  static TransitionModel from_json(const nlohmann::json& j) {
    TransitionModel tm;
    try {
      for (int a = 0; a < 2; ++a) {
        tm.initial[a] = j.at("initial").at(a).get<double>();
        for (int b = 0; b < 2; ++b) tm.transition[a][b] = j.at("transition").at(a).at(b).get<double>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParse, std::string("bad transition model: ") + e.what());
    }
    tm.validate();
    return tm;
  }
};

// Add-one smoothed counts of gold transitions within lines, and of
// line-initial states. Nothing is counted across a line or document break.
inline TransitionModel estimate_transitions(const Corpus& corpus) {
  std::array<std::array<double, 2>, 2> counts{};
  std::array<double, 2> initial_counts{};
  for (const auto& doc : corpus.documents()) {
    if (!doc.has_gold()) throw Error(ErrorCode::kInvalidArgument, "transition estimation needs gold labels", doc.id());
    const auto& gold = doc.gold();
    for (std::size_t li = 0; li < doc.line_count(); ++li) {
      const std::size_t begin = doc.line_offset(li);
      const std::size_t end = doc.line_offset(li + 1);
      if (begin == end) continue;
      initial_counts[gold[begin]] += 1.0;
      for (std::size_t i = begin + 1; i < end; ++i) counts[gold[i - 1]][gold[i]] += 1.0;
    }
  }
  TransitionModel tm;
  for (int from = 0; from < 2; ++from) {
    const double total = counts[from][0] + counts[from][1];
    for (int to = 0; to < 2; ++to) tm.transition[from][to] = (counts[from][to] + 1.0) / (total + 2.0);
  }
  const double lines = initial_counts[0] + initial_counts[1];
  for (int s = 0; s < 2; ++s) tm.initial[s] = (initial_counts[s] + 1.0) / (lines + 2.0);
  return tm;
}

inline constexpr double kScoreFloor = 1e-6;

inline double clamp_score(double s) { return std::clamp(s, kScoreFloor, 1.0 - kScoreFloor); }

// Viterbi decode over one line, using the tagger outputs as per-step state
// probabilities. log_w(j, i) is the log of the best path probability ending
// in state j at step i; path is the backtraced best state sequence.
// smoothed[i] is the probability of the relevant state at step i given the
// decoded state at i-1, normalized over both states.
struct ViterbiLattice {
  Eigen::Matrix<double, 2, Eigen::Dynamic> log_w;
  std::vector<int> path;
  std::vector<double> smoothed;
};

inline ViterbiLattice viterbi_lattice(std::span<const double> line_scores, const TransitionModel& tm) {
  const std::size_t n = line_scores.size();
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "cannot smooth an empty line");

  double log_a[2][2];
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) log_a[a][b] = std::log(tm.transition[a][b]);

  ViterbiLattice lat;
  lat.log_w.resize(2, static_cast<Eigen::Index>(n));
  std::vector<std::array<int, 2>> back(n, {0, 0});

  auto log_emit = [&](std::size_t i, int state) {
    const double p = clamp_score(line_scores[i]);
    return std::log(state == kRelevant ? p : 1.0 - p);
  };

  for (int j = 0; j < 2; ++j) lat.log_w(j, 0) = std::log(tm.initial[j]) + log_emit(0, j);
  for (std::size_t i = 1; i < n; ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    for (int j = 0; j < 2; ++j) {
      const double from0 = lat.log_w(0, col - 1) + log_a[0][j];
      const double from1 = lat.log_w(1, col - 1) + log_a[1][j];
      // Ties go to the irrelevant state.
      const int best = from1 > from0 ? 1 : 0;
      back[i][j] = best;
      lat.log_w(j, col) = std::max(from0, from1) + log_emit(i, j);
    }
  }

  lat.path.assign(n, 0);
  const auto last = static_cast<Eigen::Index>(n - 1);
  lat.path[n - 1] = lat.log_w(1, last) > lat.log_w(0, last) ? 1 : 0;
  for (std::size_t i = n - 1; i > 0; --i) lat.path[i - 1] = back[i][lat.path[i]];

  // Q(j, i) = W(j, i) / W(R(i-1), i-1); s_i = Q(1, i) / (Q(0, i) + Q(1, i)).
  // With q_j = log Q(j, i), s_i = 1 / (1 + exp(q_0 - q_1)).
  lat.smoothed.resize(n);
  lat.smoothed[0] = 1.0 / (1.0 + std::exp(lat.log_w(0, 0) - lat.log_w(1, 0)));
  for (std::size_t i = 1; i < n; ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    const double denom = lat.log_w(lat.path[i - 1], col - 1);
    const double q0 = lat.log_w(0, col) - denom;
    const double q1 = lat.log_w(1, col) - denom;
    lat.smoothed[i] = 1.0 / (1.0 + std::exp(q0 - q1));
  }
  return lat;
}

inline std::vector<double> viterbi_smooth(std::span<const double> line_scores, const TransitionModel& tm) {
  return viterbi_lattice(line_scores, tm).smoothed;
}

// Smooths every line of every document; empty lines are skipped.
inline ScoreSet smooth_scores(const Corpus& corpus, const ScoreSet& raw, const TransitionModel& tm) {
  raw.validate_alignment(corpus);
  std::vector<DocumentScores> docs;
  docs.reserve(corpus.size());
  for (const auto& doc : corpus.documents()) {
    const auto& scores = raw.scores(doc.id());
    DocumentScores out{doc.id(), std::vector<double>(scores.size())};
    for (std::size_t li = 0; li < doc.line_count(); ++li) {
      const std::size_t begin = doc.line_offset(li);
      const std::size_t end = doc.line_offset(li + 1);
      if (begin == end) continue;
      const auto smoothed = viterbi_smooth(std::span<const double>(scores).subspan(begin, end - begin), tm);
      std::copy(smoothed.begin(), smoothed.end(), out.scores.begin() + static_cast<std::ptrdiff_t>(begin));
    }
    docs.push_back(std::move(out));
  }
  return ScoreSet(raw.model_id(), std::move(docs), true);
}

// ---------------------------------------------------------------------------
// Full pipeline

// Post-processed view of one document: the (possibly smoothed) scores, their
// binarization and the final segments.
struct DocumentAnnotation {
  std::string id;
  std::vector<double> scores;
  Labels labels;
  std::vector<Segment> segments;

  std::size_t relevant_count() const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), kRelevant));
  }
};

struct PostProcessResult {
  ScoreSet scores;
  std::vector<DocumentAnnotation> documents;  // corpus order
};

// Binarize, extract and collapse, on scores that are already smoothed or not.
inline std::vector<DocumentAnnotation> annotate(const Corpus& corpus, const ScoreSet& scores,
                                                const PostProcessSettings& settings) {
  settings.validate();
  std::vector<DocumentAnnotation> out;
  out.reserve(corpus.size());
  for (const auto& doc : corpus.documents()) {
    DocumentAnnotation ann;
    ann.id = doc.id();
    ann.scores = scores.scores(doc.id());
    ann.labels = binarize(ann.scores, settings.threshold);
    ann.segments = collapse_segments(extract_segments(ann.labels), settings.collapse_gap);
    out.push_back(std::move(ann));
  }
  return out;
}

// Smoothing (if enabled), then binarize, extract, collapse.
inline PostProcessResult apply_postprocessing(const Corpus& corpus, const ScoreSet& raw,
                                              const PostProcessSettings& settings,
                                              const std::optional<TransitionModel>& transitions = std::nullopt) {
  settings.validate();
  raw.validate_alignment(corpus);
  PostProcessResult result;
  if (settings.smoothing) {
    if (!transitions)
      throw Error(ErrorCode::kInvalidArgument, "smoothing requested without a transition model", "smoothing");
    result.scores = smooth_scores(corpus, raw, *transitions);
  } else {
    result.scores = raw;
  }
  result.documents = annotate(corpus, result.scores, settings);
  return result;
}

// Gold labels viewed as annotations: scores are the labels themselves and
// segments are the maximal gold runs.
inline std::vector<DocumentAnnotation> gold_annotations(const Corpus& corpus) {
  std::vector<DocumentAnnotation> out;
  out.reserve(corpus.size());
  for (const auto& doc : corpus.documents()) {
    DocumentAnnotation ann;
    ann.id = doc.id();
    ann.labels = doc.gold();
    ann.scores.assign(ann.labels.begin(), ann.labels.end());
    ann.segments = extract_segments(ann.labels);
    out.push_back(std::move(ann));
  }
  return out;
}

}  // namespace hare
