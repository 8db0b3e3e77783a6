#pragma once

// Application server state and its HTTP+JSON binding. Post-processing
// settings travel with every request; uploads are the only mutations.

#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "hare/analysis.hpp"
#include "hare/corpus.hpp"
#include "hare/error.hpp"
#include "hare/postprocess.hpp"
#include "hare/ranking.hpp"

// After Eigen: httplib pulls in <resolv.h>, whose `_res` macro collides with
// Eigen parameter names.
#include "httplib.h"

namespace hare {

using Params = std::map<std::string, std::string>;
using nlohmann::json;

inline json error_payload(const Error& e) {
  return {{"code", error_code_name(e.code())}, {"message", e.message()}, {"locus", e.locus()}};
}

inline int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotFound: return 404;
    case ErrorCode::kConflict: return 409;
    case ErrorCode::kUndefined: return 422;
    case ErrorCode::kIo: return 500;
    default: return 400;
  }
}

namespace params {

inline std::optional<std::string> get(const Params& p, const std::string& key) {
  auto it = p.find(key);
  if (it == p.end() || it->second.empty()) return std::nullopt;
  return it->second;
}

inline std::string require(const Params& p, const std::string& key) {
  auto v = get(p, key);
  if (!v) throw Error(ErrorCode::kInvalidArgument, "missing query parameter", key);
  return *v;
}

inline double number(const Params& p, const std::string& key, double fallback) {
  auto v = get(p, key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const double d = std::stod(*v, &used);
    if (used != v->size()) throw std::invalid_argument(*v);
    return d;
  } catch (const std::exception&) {
    throw Error(ErrorCode::kInvalidArgument, "expected a number, got '" + *v + "'", key);
  }
}

inline std::size_t count(const Params& p, const std::string& key, std::size_t fallback) {
  const double d = number(p, key, static_cast<double>(fallback));
  if (d < 0 || d != static_cast<double>(static_cast<std::size_t>(d)))
    throw Error(ErrorCode::kInvalidArgument, "expected a non-negative integer", key);
  return static_cast<std::size_t>(d);
}

inline bool flag(const Params& p, const std::string& key, bool fallback) {
  auto v = get(p, key);
  if (!v) return fallback;
  if (*v == "1" || *v == "true" || *v == "on" || *v == "yes") return true;
  if (*v == "0" || *v == "false" || *v == "off" || *v == "no") return false;
  throw Error(ErrorCode::kInvalidArgument, "expected a boolean, got '" + *v + "'", key);
}

inline PostProcessSettings settings(const Params& p) {
  PostProcessSettings s;
  s.threshold = number(p, "threshold", s.threshold);
  s.collapse_gap = count(p, "collapse", s.collapse_gap);
  s.smoothing = flag(p, "smooth", s.smoothing);
  s.validate();
  return s;
}

}  // namespace params

inline json settings_json(const PostProcessSettings& s) {
  return {{"threshold", s.threshold}, {"collapse", s.collapse_gap}, {"smooth", s.smoothing}};
}

inline json eval_json(const EvalResult& r) {
  return {{"precision", r.precision}, {"recall", r.recall}, {"f_beta", r.f_beta}, {"beta", r.beta},
          {"tp", r.tp},               {"fp", r.fp},         {"fn", r.fn}};
}

inline json segments_json(const std::vector<Segment>& segments) {
  json out = json::array();
  for (const auto& s : segments) out.push_back({{"start", s.start}, {"end", s.end}});
  return out;
}

class Session {
 public:
  // Registers a corpus. A transition model is estimated from its gold labels
  // when it has them.
  std::string add_corpus(std::string id, Corpus corpus) {
    if (id.empty()) throw Error(ErrorCode::kInvalidArgument, "corpus id must not be empty", "id");
    auto entry = std::make_shared<CorpusEntry>();
    if (corpus.has_gold()) entry->gold_transitions = estimate_transitions(corpus);
    entry->corpus = std::move(corpus);
    std::unique_lock lock(mutex_);
    if (corpora_.count(id)) throw Error(ErrorCode::kConflict, "corpus id already exists", id);
    corpora_.emplace(id, std::move(entry));
    return id;
  }

  // Registers a score set for a loaded corpus under `model_id`.
  std::string add_scoreset(const std::string& corpus_id, std::string model_id, ScoreSet scores,
                           std::optional<TransitionModel> transitions = std::nullopt) {
    if (model_id.empty()) model_id = scores.model_id();
    if (model_id.empty()) throw Error(ErrorCode::kInvalidArgument, "model id must not be empty", "model");
    std::unique_lock lock(mutex_);
    auto& entry = corpus_entry(corpus_id);
    scores.validate_alignment(entry.corpus);
    if (entry.models.count(model_id)) throw Error(ErrorCode::kConflict, "model id already exists", model_id);
    auto model = std::make_shared<ModelEntry>();
    model->raw = ScoreSet(model_id, scores.documents(), scores.smoothed());
    model->transitions = std::move(transitions);
    entry.models.emplace(model_id, std::move(model));
    return model_id;
  }

  // Upload bodies: corpus and score files in their line-delimited formats.
  json upload_corpus(const std::string& id, const std::string& body) {
    std::istringstream in(body);
    add_corpus(id, parse_corpus(in, id));
    return {{"id", id}};
  }

  json upload_scoreset(const std::string& corpus_id, const std::string& model_id, const std::string& body) {
    std::istringstream in(body);
    ScoreFile file = parse_score_file(in, model_id);
    std::optional<TransitionModel> tm;
    if (file.meta.contains("transitions")) tm = TransitionModel::from_json(file.meta["transitions"]);
    return {{"corpus", corpus_id}, {"model", add_scoreset(corpus_id, model_id, std::move(file.scores), tm)}};
  }

  json list_corpora() const {
    std::shared_lock lock(mutex_);
    json out = json::array();
    for (const auto& [id, entry] : corpora_) {
      json models = json::array();
      for (const auto& [m, _] : entry->models) models.push_back(m);
      out.push_back({{"id", id},
                     {"name", entry->corpus.name()},
                     {"documents", entry->corpus.size()},
                     {"tokens", entry->corpus.token_count()},
                     {"has_gold", entry->corpus.has_gold()},
                     {"models", std::move(models)}});
    }
    return out;
  }

  // Per-document summaries with model ranking and, when gold exists, gold
  // ranking and evaluation under the request's settings.
  json list_documents(const std::string& corpus_id, const Params& p) const {
    std::shared_lock lock(mutex_);
    const auto& entry = corpus_entry(corpus_id);
    const auto& model = model_entry(entry, params::require(p, "model"));
    const auto settings = params::settings(p);
    const auto method = parse_ranking_method(params::get(p, "method").value_or("segtok"));
    const auto gold_method = parse_ranking_method(params::get(p, "gold_method").value_or(ranking_method_name(method)));
    const double beta = params::number(p, "beta", 2.0);

    const auto annotations = annotate(entry.corpus, scores_for(entry, model, settings), settings);
    const auto ranking = rank_documents(annotations, method, settings);
    const bool has_gold = entry.corpus.has_gold();

    std::optional<RankingResult> gold_ranking;
    std::vector<DocumentAnnotation> gold;
    if (has_gold) {
      gold = gold_annotations(entry.corpus);
      gold_ranking = rank_documents(gold, gold_method);
    }

    json docs = json::array();
    for (std::size_t i = 0; i < annotations.size(); ++i) {
      const auto& ann = annotations[i];
      const auto& ranked = ranking.find(ann.id);
      json row{{"id", ann.id},
               {"tokens", ann.labels.size()},
               {"segments", ann.segments.size()},
               {"relevant_tokens", ann.relevant_count()},
               {"score", ranked.score},
               {"rank", ranked.rank}};
      if (has_gold) {
        const auto& g = gold_ranking->find(ann.id);
        row["gold"] = {{"segments", gold[i].segments.size()},
                       {"relevant_tokens", gold[i].relevant_count()},
                       {"score", g.score},
                       {"rank", g.rank},
                       {"evaluation", eval_json(evaluate(ann.labels, gold[i].labels, beta))}};
      }
      docs.push_back(std::move(row));
    }
    std::stable_sort(docs.begin(), docs.end(),
                     [](const json& a, const json& b) { return a["rank"].get<std::size_t>() < b["rank"].get<std::size_t>(); });
    json out{{"corpus", corpus_id},
             {"model", model.raw.model_id()},
             {"settings", settings_json(settings)},
             {"method", ranking_method_name(method)},
             {"documents", std::move(docs)},
             {"warnings", ranking.warnings}};
    if (has_gold) {
      out["gold_method"] = ranking_method_name(gold_method);
      try {
        out["rho"] = spearman_rho(*gold_ranking, ranking);
      } catch (const Error&) {
        out["rho"] = nullptr;
      }
      out["evaluation"] = eval_json(evaluate_annotations(entry.corpus, annotations, beta));
    }
    return out;
  }

  json get_document_view(const std::string& corpus_id, const std::string& document_id, const Params& p) const {
    std::shared_lock lock(mutex_);
    const auto& entry = corpus_entry(corpus_id);
    const auto& model = model_entry(entry, params::require(p, "model"));
    const auto settings = params::settings(p);
    const auto method = parse_ranking_method(params::get(p, "method").value_or("segtok"));
    const double beta = params::number(p, "beta", 2.0);
    const Document& doc = entry.corpus.document(document_id);

    const ScoreSet& scores = scores_for(entry, model, settings);
    const Corpus single(entry.corpus.name(), {doc});
    const auto ann = annotate(single, scores, settings).front();
    const auto& raw = model.raw.scores(doc.id());

    json lines = json::array();
    std::size_t flat = 0;
    for (const auto& line : doc.lines()) {
      json tokens = json::array();
      for (const auto& tok : line) {
        json t{{"index", flat},         {"text", tok.text},         {"score", ann.scores[flat]},
               {"raw_score", raw[flat]}, {"relevant", ann.labels[flat] == kRelevant}};
        if (doc.has_gold()) t["gold"] = doc.gold()[flat] == kRelevant;
        tokens.push_back(std::move(t));
        ++flat;
      }
      lines.push_back(std::move(tokens));
    }
    json summary{{"tokens", doc.token_count()},
                 {"relevant_tokens", ann.relevant_count()},
                 {"segments", ann.segments.size()},
                 {"score", score_document(method, ann)},
                 {"method", ranking_method_name(method)}};
    json out{{"corpus", corpus_id},
             {"model", model.raw.model_id()},
             {"id", doc.id()},
             {"settings", settings_json(settings)},
             {"lines", std::move(lines)},
             {"segments", segments_json(ann.segments)},
             {"summary", std::move(summary)}};
    if (doc.has_gold()) {
      out["gold_segments"] = segments_json(extract_segments(doc.gold()));
      out["summary"]["evaluation"] = eval_json(evaluate(ann.labels, doc.gold(), beta));
    }
    return out;
  }

  // kind: sweep | lexicalization | histogram. An optional `document`
  // parameter restricts the analysis to one document.
  json get_analysis(const std::string& corpus_id, const std::string& kind, const Params& p) const {
    std::shared_lock lock(mutex_);
    const auto& entry = corpus_entry(corpus_id);
    const auto& model = model_entry(entry, params::require(p, "model"));
    const auto settings = params::settings(p);
    const ScoreSet& scores = scores_for(entry, model, settings);
    Corpus scope = entry.corpus;
    if (auto doc = params::get(p, "document")) scope = Corpus(entry.corpus.name(), {entry.corpus.document(*doc)});

    json out{{"corpus", corpus_id}, {"model", model.raw.model_id()}, {"kind", kind}, {"settings", settings_json(settings)}};
    if (auto doc = params::get(p, "document")) out["document"] = *doc;
    if (kind == "sweep") {
      if (!scope.has_gold()) throw Error(ErrorCode::kInvalidArgument, "threshold sweep needs gold labels", corpus_id);
      const double beta = params::number(p, "beta", 2.0);
      const auto sweep = threshold_sweep(scope, scores, beta, params::count(p, "grid", 100));
      json rows = json::array();
      for (std::size_t i = 0; i < sweep.thresholds.size(); ++i) {
        json row = eval_json(sweep.results[i]);
        row["threshold"] = sweep.thresholds[i];
        rows.push_back(std::move(row));
      }
      out["points"] = std::move(rows);
      out["best_threshold"] = sweep.best_threshold;
      out["best_f_beta"] = sweep.results[sweep.best_index].f_beta;
    } else if (kind == "lexicalization") {
      const auto report = lexicalization(scope, scores, params::count(p, "min_frequency", 1),
                                         params::flag(p, "case_fold", false));
      json rows = json::array();
      for (const auto& e : report.entries)
        rows.push_back({{"token", e.token}, {"mean_score", e.mean_score}, {"frequency", e.frequency}});
      out["min_frequency"] = report.min_frequency;
      out["entries"] = std::move(rows);
    } else if (kind == "histogram") {
      std::vector<double> all;
      for (const auto& doc : scope.documents()) {
        const auto& s = scores.scores(doc.id());
        all.insert(all.end(), s.begin(), s.end());
      }
      const auto h = score_histogram(all, params::count(p, "bins", 20));
      out["edges"] = h.edges;
      out["counts"] = h.counts;
    } else {
      throw Error(ErrorCode::kNotFound, "unknown analysis kind (expected sweep, lexicalization or histogram)", kind);
    }
    return out;
  }

  json ranking_matrix(const std::string& corpus_id, const Params& p) const {
    std::shared_lock lock(mutex_);
    const auto& entry = corpus_entry(corpus_id);
    const auto& model = model_entry(entry, params::require(p, "model"));
    if (!entry.corpus.has_gold()) throw Error(ErrorCode::kInvalidArgument, "ranking matrix needs gold labels", corpus_id);
    const auto settings = params::settings(p);
    const auto rho = ranking_method_matrix(gold_annotations(entry.corpus),
                                           annotate(entry.corpus, scores_for(entry, model, settings), settings));
    json methods = json::array();
    for (auto m : kAllRankingMethods) methods.push_back(ranking_method_name(m));
    return {{"corpus", corpus_id}, {"model", model.raw.model_id()}, {"settings", settings_json(settings)},
            {"methods", std::move(methods)}, {"rho", rho}};
  }

 private:
  struct ModelEntry {
    ScoreSet raw;
    std::optional<TransitionModel> transitions;
    mutable std::mutex cache_mutex;
    mutable std::shared_ptr<const ScoreSet> smoothed;
  };

  struct CorpusEntry {
    Corpus corpus;
    std::optional<TransitionModel> gold_transitions;
    std::map<std::string, std::shared_ptr<ModelEntry>> models;
  };

  const CorpusEntry& corpus_entry(const std::string& id) const {
    auto it = corpora_.find(id);
    if (it == corpora_.end()) throw Error(ErrorCode::kNotFound, "unknown corpus", id);
    return *it->second;
  }
  CorpusEntry& corpus_entry(const std::string& id) {
    return const_cast<CorpusEntry&>(static_cast<const Session*>(this)->corpus_entry(id));
  }

  static const ModelEntry& model_entry(const CorpusEntry& entry, const std::string& id) {
    auto it = entry.models.find(id);
    if (it == entry.models.end()) throw Error(ErrorCode::kNotFound, "unknown model", id);
    return *it->second;
  }

  // Raw scores, or the cached smoothed scores for this model.
  static const ScoreSet& scores_for(const CorpusEntry& entry, const ModelEntry& model,
                                    const PostProcessSettings& settings) {
    if (!settings.smoothing) return model.raw;
    std::lock_guard guard(model.cache_mutex);
    if (!model.smoothed) {
      const auto& tm = model.transitions ? model.transitions : entry.gold_transitions;
      if (!tm)
        throw Error(ErrorCode::kInvalidArgument, "no transition model available for smoothing", model.raw.model_id());
      model.smoothed = std::make_shared<const ScoreSet>(smooth_scores(entry.corpus, model.raw, *tm));
    }
    return *model.smoothed;
  }

  mutable std::shared_mutex mutex_;
  std::map<std::string, std::shared_ptr<CorpusEntry>> corpora_;
};

// ---------------------------------------------------------------------------
// HTTP binding

inline Params request_params(const httplib::Request& req) {
  Params p;
  for (const auto& [k, v] : req.params) p[k] = v;
  return p;
}

inline void install_routes(httplib::Server& server, Session& session) {
  auto handle = [](httplib::Response& res, auto&& fn) {
    try {
      res.set_content(fn().dump(), "application/json");
      res.status = 200;
    } catch (const Error& e) {
      res.status = http_status(e.code());
      res.set_content(error_payload(e).dump(), "application/json");
    } catch (const std::exception& e) {
      res.status = 500;
      res.set_content(json{{"code", "internal"}, {"message", e.what()}, {"locus", ""}}.dump(), "application/json");
    }
  };
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});

  server.Get("/corpora", [&session, handle](const httplib::Request&, httplib::Response& res) {
    handle(res, [&] { return session.list_corpora(); });
  });
  server.Post("/corpora", [&session, handle](const httplib::Request& req, httplib::Response& res) {
    handle(res, [&] {
      return session.upload_corpus(params::require(request_params(req), "id"), req.body);
    });
    if (res.status == 200) res.status = 201;
  });
  server.Get(R"(/corpora/([^/]+)/documents)", [&session, handle](const httplib::Request& req, httplib::Response& res) {
    handle(res, [&] { return session.list_documents(req.matches[1], request_params(req)); });
  });
  server.Get(R"(/corpora/([^/]+)/documents/([^/]+))",
             [&session, handle](const httplib::Request& req, httplib::Response& res) {
               handle(res, [&] { return session.get_document_view(req.matches[1], req.matches[2], request_params(req)); });
             });
  server.Get(R"(/corpora/([^/]+)/analysis/([^/]+))",
             [&session, handle](const httplib::Request& req, httplib::Response& res) {
               handle(res, [&] { return session.get_analysis(req.matches[1], req.matches[2], request_params(req)); });
             });
  server.Post(R"(/corpora/([^/]+)/scoresets)", [&session, handle](const httplib::Request& req, httplib::Response& res) {
    handle(res, [&] {
      const auto p = request_params(req);
      return session.upload_scoreset(req.matches[1], params::get(p, "model").value_or(""), req.body);
    });
    if (res.status == 200) res.status = 201;
  });
  server.Get(R"(/corpora/([^/]+)/ranking-matrix)", [&session, handle](const httplib::Request& req, httplib::Response& res) {
    handle(res, [&] { return session.ranking_matrix(req.matches[1], request_params(req)); });
  });
}

}  // namespace hare
