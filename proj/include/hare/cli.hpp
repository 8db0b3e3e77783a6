#pragma once

// Command-line workflow: generate, train, tag, smooth, rank, eval, analyze,
// crossval, sweep, serve. run_cli() is the whole program; tools/hare.cpp
// only forwards argv.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "hare/analysis.hpp"
#include "hare/corpus.hpp"
#include "hare/error.hpp"
#include "hare/features.hpp"
#include "hare/pipeline.hpp"
#include "hare/postprocess.hpp"
#include "hare/ranking.hpp"
#include "hare/service.hpp"
#include "hare/synthetic.hpp"
#include "hare/tagger.hpp"

namespace hare {

inline constexpr const char* kToolVersion = "hare 1.0.0";

namespace cli {

namespace fs = std::filesystem;

// "static:PATH" or "contextual:PATH"; a bare path means static.
inline FeatureSource load_feature_source(const std::string& spec, std::size_t window, const Corpus& corpus) {
  std::string kind = "static";
  std::string path = spec;
  if (auto colon = spec.find(':'); colon != std::string::npos) {
    kind = spec.substr(0, colon);
    path = spec.substr(colon + 1);
  }
  if (!fs::exists(path)) throw Error(ErrorCode::kIo, "features file not found", path);
  if (kind == "static") return StaticFeatures{std::make_shared<const EmbeddingTable>(load_embedding_table(path)), window};
  if (kind == "contextual") {
    auto set = std::make_shared<const ContextualFeatureSet>(load_contextual_features(path, corpus));
    return ContextualFeatures{set, LayerWeights::uniform(set->layer_count())};
  }
  throw Error(ErrorCode::kInvalidArgument, "feature kind must be 'static' or 'contextual'", spec);
}

inline Corpus require_corpus(const std::string& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::kIo, "corpus file not found", path);
  return load_corpus(path);
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write output file", path);
  return out;
}

inline std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

struct PostOptions {
  double threshold = 0.5;
  std::size_t collapse = 0;
  bool smooth = false;

  PostProcessSettings settings() const {
    PostProcessSettings s{threshold, collapse, smooth};
    s.validate();
    return s;
  }

  void add(CLI::App* cmd) {
    cmd->add_option("--threshold", threshold, "Binarization threshold in [0,1]")->capture_default_str();
    cmd->add_option("--collapse", collapse, "Merge segments separated by at most K tokens")->capture_default_str();
    cmd->add_flag("--smooth", smooth, "Apply Viterbi smoothing before binarizing");
  }
};

// Transition model for smoothing: the score file's own, else the model
// file's, else estimated from the corpus gold.
inline std::optional<TransitionModel> pick_transitions(const ScoreFile& file, const std::string& model_path,
                                                       const Corpus& corpus) {
  if (file.meta.contains("transitions")) return TransitionModel::from_json(file.meta["transitions"]);
  if (!model_path.empty()) {
    const auto model = load_model(model_path);
    if (model.extras.contains("transitions")) return TransitionModel::from_json(model.extras["transitions"]);
  }
  if (corpus.has_gold()) return estimate_transitions(corpus);
  return std::nullopt;
}

inline nlohmann::json meta_block(const std::string& command, nlohmann::json effective) {
  return {{"tool", kToolVersion}, {"command", command}, {"config", std::move(effective)}};
}

inline void print_report(std::ostream& out, const TrainReport& report, const TaggerConfig& config) {
  out << "# " << kToolVersion << "\n";
  out << "# effective config: " << config_to_json(config).dump() << "\n";
  out << "epoch,train_loss,positives,negatives,dev_precision,dev_recall,dev_f2\n";
  for (const auto& e : report.epochs) {
    out << e.epoch << ',' << fmt(e.train_loss) << ',' << e.positives << ',' << e.negatives << ','
        << fmt(e.dev.precision) << ',' << fmt(e.dev.recall) << ',' << fmt(e.dev.f_beta) << "\n";
  }
  out << "# stopping_epoch=" << report.stopping_epoch << " reason=" << stop_reason_name(report.stop_reason)
      << " best_epoch=" << report.best_epoch << " best_dev_f2=" << fmt(report.best_dev_f2) << "\n";
}

// Sweep grid: one "name = v1, v2, ..." line per hyperparameter. Layer
// configurations use 'x' inside a value, e.g. "hidden_layers = 300x300, 100".
inline std::vector<std::pair<std::string, std::vector<std::string>>> parse_grid(std::istream& in) {
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos)
        throw Error(ErrorCode::kParse, "grid lines look like 'name = v1, v2'", line);
      continue;
    }
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t\r"));
      s.erase(s.find_last_not_of(" \t\r") + 1);
      return s;
    };
    const std::string key = trim(line.substr(0, eq));
    std::vector<std::string> values;
    std::istringstream items(line.substr(eq + 1));
    std::string item;
    while (std::getline(items, item, ',')) {
      item = trim(item);
      if (!item.empty()) values.push_back(item);
    }
    if (values.empty()) throw Error(ErrorCode::kParse, "grid axis has no values", key);
    TaggerConfig probe;
    set_config_value(probe, key, values.front());  // rejects unknown names
    axes.emplace_back(key, std::move(values));
  }
  if (axes.empty()) throw Error(ErrorCode::kInvalidArgument, "sweep grid is empty");
  return axes;
}

}  // namespace cli

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  namespace fs = std::filesystem;
  using namespace cli;

  CLI::App app{"Token relevance tagging, post-processing, ranking and analysis"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  std::uint64_t seed = 13;
  auto add_seed = [&seed](CLI::App* cmd) { cmd->add_option("--seed", seed, "Random seed")->capture_default_str(); };

  // generate -----------------------------------------------------------------
  auto* gen = app.add_subcommand("generate", "Write a synthetic labelled corpus and embedding table");
  SyntheticSpec syn;
  std::string gen_dir;
  std::size_t contextual_layers = 0;
  gen->add_option("--out", gen_dir, "Output directory")->required();
  gen->add_option("--docs", syn.doc_count)->capture_default_str();
  gen->add_option("--tokens", syn.tokens_per_doc, "Tokens per document")->capture_default_str();
  gen->add_option("--relevant-fraction", syn.relevant_fraction)->capture_default_str();
  gen->add_option("--noise", syn.noise, "Per-word embedding spread")->capture_default_str();
  gen->add_option("--dimension", syn.dimension)->capture_default_str();
  gen->add_option("--contextual-layers", contextual_layers, "Also write contextual features with K layers");
  add_seed(gen);

  // train --------------------------------------------------------------------
  auto* tr = app.add_subcommand("train", "Train a token relevance tagger");
  std::string corpus_path, features_spec, config_path, model_path, out_path;
  std::size_t window = 10;
  std::vector<std::string> overrides;
  tr->add_option("--corpus", corpus_path)->required();
  tr->add_option("--features", features_spec, "static:PATH or contextual:PATH")->required();
  tr->add_option("--window", window, "Static context window")->capture_default_str();
  tr->add_option("--config", config_path, "key = value tagger config file");
  tr->add_option("--set", overrides, "Override a config value, key=value");
  tr->add_option("--out", model_path, "Model output path")->required();
  add_seed(tr);

  // tag ----------------------------------------------------------------------
  auto* tag = app.add_subcommand("tag", "Score every token of a corpus");
  std::string model_id;
  tag->add_option("--model", model_path)->required();
  tag->add_option("--corpus", corpus_path)->required();
  tag->add_option("--features", features_spec)->required();
  tag->add_option("--window", window, "Ignored; the model's training window is used");
  tag->add_option("--model-id", model_id, "Identifier recorded in the score file");
  tag->add_option("--out", out_path)->required();
  add_seed(tag);

  // smooth -------------------------------------------------------------------
  auto* sm = app.add_subcommand("smooth", "Viterbi-smooth a score file");
  std::string scores_path;
  sm->add_option("--scores", scores_path)->required();
  sm->add_option("--corpus", corpus_path)->required();
  sm->add_option("--model", model_path, "Model file carrying a transition model");
  sm->add_option("--out", out_path)->required();
  add_seed(sm);

  // rank ---------------------------------------------------------------------
  auto* rk = app.add_subcommand("rank", "Rank documents by post-processed scores");
  PostOptions post;
  std::string method = "segtok", gold_method, model_method;
  rk->add_option("--corpus", corpus_path)->required();
  rk->add_option("--scores", scores_path)->required();
  rk->add_option("--model", model_path, "Model file carrying a transition model");
  rk->add_option("--method", method, "segtok | sum | density")->capture_default_str();
  rk->add_option("--model-method", model_method, "Method for model scores (default --method)");
  rk->add_option("--gold-method", gold_method, "Method for gold (default --method)");
  rk->add_option("--out", out_path, "CSV output (default stdout)");
  post.add(rk);
  add_seed(rk);

  // eval ---------------------------------------------------------------------
  auto* ev = app.add_subcommand("eval", "Evaluate post-processed scores against gold");
  double beta = 2.0;
  ev->add_option("--corpus", corpus_path)->required();
  ev->add_option("--scores", scores_path)->required();
  ev->add_option("--model", model_path, "Model file carrying a transition model");
  ev->add_option("--beta", beta)->capture_default_str();
  ev->add_option("--out", out_path, "JSON output (default stdout)");
  post.add(ev);
  add_seed(ev);

  // analyze ------------------------------------------------------------------
  auto* an = app.add_subcommand("analyze", "Threshold sweep, histogram or lexicalization as CSV");
  std::string kind;
  std::size_t grid = 100, bins = 20, min_frequency = 1;
  bool case_fold = false;
  std::string document;
  an->add_option("kind", kind, "sweep | histogram | lexicalization")->required()
      ->check(CLI::IsMember({"sweep", "histogram", "lexicalization"}));
  an->add_option("--corpus", corpus_path)->required();
  an->add_option("--scores", scores_path)->required();
  an->add_option("--model", model_path, "Model file carrying a transition model");
  an->add_option("--document", document, "Restrict to one document");
  an->add_option("--beta", beta)->capture_default_str();
  an->add_option("--grid", grid, "Sweep grid size")->capture_default_str();
  an->add_option("--bins", bins)->capture_default_str();
  an->add_option("--min-frequency", min_frequency)->capture_default_str();
  an->add_flag("--case-fold", case_fold);
  an->add_option("--out", out_path, "CSV output (default stdout)");
  an->add_flag("--smooth", post.smooth, "Analyze smoothed scores");
  add_seed(an);

  // crossval -----------------------------------------------------------------
  auto* cv = app.add_subcommand("crossval", "k-fold train/tag/evaluate at the document level");
  std::size_t folds = 10;
  std::string out_dir;
  cv->add_option("--corpus", corpus_path)->required();
  cv->add_option("--features", features_spec)->required();
  cv->add_option("--window", window)->capture_default_str();
  cv->add_option("--config", config_path);
  cv->add_option("--set", overrides);
  cv->add_option("--folds", folds)->capture_default_str();
  cv->add_option("--method", method)->capture_default_str();
  cv->add_option("--beta", beta)->capture_default_str();
  cv->add_option("--out", out_dir, "Directory for held-out score files and summary")->required();
  post.add(cv);
  add_seed(cv);

  // sweep --------------------------------------------------------------------
  auto* sw = app.add_subcommand("sweep", "Exhaustive hyperparameter grid; dev F-2 per cell");
  std::string grid_path;
  sw->add_option("--grid", grid_path, "Grid file: name = v1, v2, ...")->required();
  sw->add_option("--corpus", corpus_path)->required();
  sw->add_option("--features", features_spec)->required();
  sw->add_option("--window", window)->capture_default_str();
  sw->add_option("--config", config_path);
  sw->add_option("--set", overrides);
  sw->add_option("--out", out_path, "CSV output (default stdout)");
  add_seed(sw);

  // serve --------------------------------------------------------------------
  auto* sv = app.add_subcommand("serve", "Serve corpora and score sets over HTTP");
  std::string host = "127.0.0.1";
  int port = 8080;
  std::vector<std::string> corpus_specs, score_specs;
  sv->add_option("--host", host)->capture_default_str();
  sv->add_option("--port", port)->capture_default_str();
  sv->add_option("--corpus", corpus_specs, "ID=PATH, repeatable");
  sv->add_option("--scores", score_specs, "CORPUS:MODEL=PATH, repeatable");
  add_seed(sv);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  auto effective_config = [&]() {
    TaggerConfig config;
    config.seed = seed;
    if (!config_path.empty()) config = load_tagger_config(config_path, config);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw Error(ErrorCode::kInvalidArgument, "--set expects key=value", kv);
      set_config_value(config, kv.substr(0, eq), kv.substr(eq + 1));
    }
    config.validate();
    return config;
  };

  try {
    if (*gen) {
      syn.seed = seed;
      fs::create_directories(gen_dir);
      const auto data = generate_synthetic_corpus(syn);
      save_corpus(fs::path(gen_dir) / "corpus.jsonl", data.corpus);
      auto table_out = open_out((fs::path(gen_dir) / "embeddings.txt").string());
      write_embedding_table(table_out, data.table);
      if (contextual_layers > 0) {
        auto ctx_out = open_out((fs::path(gen_dir) / "contextual.jsonl").string());
        write_contextual_features(ctx_out, data.corpus,
                                  synthetic_contextual_features(data.corpus, data.table, contextual_layers, seed));
      }
      out << "wrote " << data.corpus.size() << " documents, " << data.corpus.token_count() << " tokens to " << gen_dir
          << "\n";
      return 0;
    }

    if (*tr) {
      const Corpus corpus = require_corpus(corpus_path);
      const auto source = load_feature_source(features_spec, window, corpus);
      const auto config = effective_config();
      auto [model, report] = train(corpus, source, config);
      // Transitions from the training documents travel with the model.
      model.extras["transitions"] = estimate_transitions(corpus).to_json();
      model.extras["tool"] = kToolVersion;
      save_model(model, model_path);
      print_report(out, report, config);
      return 0;
    }

    if (*tag) {
      const Corpus corpus = require_corpus(corpus_path);
      const auto model = load_model(model_path);
      auto source = load_feature_source(features_spec, model.window, corpus);
      const auto scores = tag_corpus(model, corpus, source, model_id.empty() ? fs::path(model_path).stem().string() : model_id);
      nlohmann::json meta = meta_block("tag", {{"model", fs::path(model_path).filename().string()},
                                               {"window", model.window},
                                               {"tagger", config_to_json(model.config)}});
      if (model.extras.contains("transitions")) meta["transitions"] = model.extras["transitions"];
      save_score_file(out_path, scores, meta);
      out << "tagged " << corpus.token_count() << " tokens in " << corpus.size() << " documents\n";
      return 0;
    }

    if (*sm) {
      const Corpus corpus = require_corpus(corpus_path);
      const auto file = load_score_file(scores_path);
      const auto tm = pick_transitions(file, model_path, corpus);
      if (!tm) throw Error(ErrorCode::kInvalidArgument, "no transition model: pass --model or use a gold corpus");
      const auto smoothed = smooth_scores(corpus, file.scores, *tm);
      nlohmann::json meta = file.meta;
      meta["transitions"] = tm->to_json();
      meta["tool"] = kToolVersion;
      meta["command"] = "smooth";
      save_score_file(out_path, smoothed, meta);
      out << "smoothed " << corpus.token_count() << " tokens\n";
      return 0;
    }

    // Commands below post-process a score file.
    auto post_process = [&](const Corpus& corpus, const ScoreFile& file) {
      const auto settings = post.settings();
      return apply_postprocessing(corpus, file.scores, settings,
                                  settings.smoothing ? pick_transitions(file, model_path, corpus) : std::nullopt);
    };

    if (*rk) {
      const Corpus corpus = require_corpus(corpus_path);
      const auto file = load_score_file(scores_path);
      const auto result = post_process(corpus, file);
      const auto m_method = parse_ranking_method(model_method.empty() ? method : model_method);
      const auto g_method = parse_ranking_method(gold_method.empty() ? method : gold_method);
      const auto ranking = rank_documents(result.documents, m_method, post.settings());
      std::optional<RankingResult> gold;
      if (corpus.has_gold()) gold = rank_documents(gold_annotations(corpus), g_method);

      std::ostringstream csv;
      csv << "# " << kToolVersion << " rank method=" << ranking_method_name(m_method)
          << " threshold=" << fmt(post.threshold) << " collapse=" << post.collapse << " smooth=" << post.smooth << "\n";
      csv << "rank,document,score" << (gold ? ",gold_rank,gold_score" : "") << "\n";
      for (const auto& e : ranking.entries) {
        csv << e.rank << ',' << e.id << ',' << fmt(e.score);
        if (gold) {
          const auto& g = gold->find(e.id);
          csv << ',' << g.rank << ',' << fmt(g.score);
        }
        csv << "\n";
      }
      if (out_path.empty()) {
        out << csv.str();
      } else {
        auto f = open_out(out_path);
        f << csv.str();
      }
      for (const auto& w : ranking.warnings) err << "warning: " << w << "\n";
      if (gold) out << "spearman_rho=" << fmt(spearman_rho(*gold, ranking)) << "\n";
      return 0;
    }

    if (*ev) {
      const Corpus corpus = require_corpus(corpus_path);
      const auto file = load_score_file(scores_path);
      const auto result = post_process(corpus, file);
      const auto overall = evaluate_annotations(corpus, result.documents, beta);
      nlohmann::json report = eval_json(overall);
      report["meta"] = meta_block("eval", settings_json(post.settings()));
      nlohmann::json per_doc = nlohmann::json::array();
      for (const auto& ann : result.documents) {
        auto row = eval_json(evaluate(ann.labels, corpus.document(ann.id).gold(), beta));
        row["id"] = ann.id;
        per_doc.push_back(std::move(row));
      }
      report["documents"] = std::move(per_doc);
      if (out_path.empty()) {
        out << report.dump(2) << "\n";
      } else {
        auto f = open_out(out_path);
        f << report.dump(2) << "\n";
      }
      return 0;
    }

    if (*an) {
      Corpus corpus = require_corpus(corpus_path);
      const auto file = load_score_file(scores_path);
      ScoreSet scores = file.scores;
      if (post.smooth) {
        const auto tm = pick_transitions(file, model_path, corpus);
        if (!tm) throw Error(ErrorCode::kInvalidArgument, "no transition model for smoothing");
        scores = smooth_scores(corpus, scores, *tm);
      }
      if (!document.empty()) corpus = Corpus(corpus.name(), {corpus.document(document)});
      std::ostringstream csv;
      csv << "# " << kToolVersion << " analyze " << kind << " smooth=" << post.smooth << "\n";
      if (kind == "sweep") {
        const auto sweep = threshold_sweep(corpus, scores, beta, grid);
        csv << "threshold,precision,recall,f_beta\n";
        for (std::size_t i = 0; i < sweep.thresholds.size(); ++i) {
          const auto& r = sweep.results[i];
          csv << fmt(sweep.thresholds[i]) << ',' << fmt(r.precision) << ',' << fmt(r.recall) << ',' << fmt(r.f_beta)
              << "\n";
        }
        csv << "# best_threshold=" << fmt(sweep.best_threshold) << "\n";
      } else if (kind == "histogram") {
        std::vector<double> all;
        for (const auto& doc : corpus.documents()) {
          const auto& s = scores.scores(doc.id());
          all.insert(all.end(), s.begin(), s.end());
        }
        const auto h = score_histogram(all, bins);
        csv << "bin_start,bin_end,count\n";
        for (std::size_t b = 0; b < h.counts.size(); ++b)
          csv << fmt(h.edges[b]) << ',' << fmt(h.edges[b + 1]) << ',' << h.counts[b] << "\n";
      } else {
        const auto report = lexicalization(corpus, scores, min_frequency, case_fold);
        csv << "token,mean_score,frequency\n";
        for (const auto& e : report.entries) csv << e.token << ',' << fmt(e.mean_score) << ',' << e.frequency << "\n";
      }
      if (out_path.empty()) {
        out << csv.str();
      } else {
        auto f = open_out(out_path);
        f << csv.str();
      }
      return 0;
    }

    if (*cv) {
      const Corpus corpus = require_corpus(corpus_path);
      const auto source = load_feature_source(features_spec, window, corpus);
      const auto config = effective_config();
      const auto settings = post.settings();
      const auto rank_method = parse_ranking_method(method);
      const auto result = cross_validate(corpus, source, config, folds, settings, beta);
      fs::create_directories(out_dir);
      const auto meta = meta_block("crossval", config_to_json(config));
      save_score_file(fs::path(out_dir) / "heldout_raw.jsonl", result.raw, meta);
      save_score_file(fs::path(out_dir) / "heldout_smoothed.jsonl", result.smoothed, meta);

      const auto gold = gold_annotations(corpus);
      const auto gold_rank = rank_documents(gold, rank_method);
      PostProcessSettings plain = settings;
      plain.smoothing = false;
      const double rho_raw = spearman_rho(gold_rank, rank_documents(annotate(corpus, result.raw, plain), rank_method));
      const double rho_smoothed =
          spearman_rho(gold_rank, rank_documents(annotate(corpus, result.smoothed, plain), rank_method));
      nlohmann::json summary{{"meta", meta},
                             {"folds", folds},
                             {"method", ranking_method_name(rank_method)},
                             {"settings", settings_json(settings)},
                             {"macro_raw", eval_json(result.macro_raw)},
                             {"macro_smoothed", eval_json(result.macro_smoothed)},
                             {"rho_raw", rho_raw},
                             {"rho_smoothed", rho_smoothed}};
      nlohmann::json per_fold = nlohmann::json::array();
      for (const auto& f : result.folds)
        per_fold.push_back({{"fold", f.fold},
                            {"stopping_epoch", f.report.stopping_epoch},
                            {"best_epoch", f.report.best_epoch},
                            {"best_dev_f2", f.report.best_dev_f2},
                            {"raw", eval_json(f.raw)},
                            {"smoothed", eval_json(f.smoothed)}});
      summary["per_fold"] = std::move(per_fold);
      auto f = open_out((fs::path(out_dir) / "summary.json").string());
      f << summary.dump(2) << "\n";
      out << "macro P/R/F" << beta << " raw      " << fmt(result.macro_raw.precision) << " "
          << fmt(result.macro_raw.recall) << " " << fmt(result.macro_raw.f_beta) << "  rho " << fmt(rho_raw) << "\n";
      out << "macro P/R/F" << beta << " smoothed " << fmt(result.macro_smoothed.precision) << " "
          << fmt(result.macro_smoothed.recall) << " " << fmt(result.macro_smoothed.f_beta) << "  rho "
          << fmt(rho_smoothed) << "\n";
      return 0;
    }

    if (*sw) {
      std::ifstream grid_in(grid_path);
      if (!grid_in) throw Error(ErrorCode::kIo, "cannot open grid file", grid_path);
      const auto axes = parse_grid(grid_in);
      const Corpus corpus = require_corpus(corpus_path);
      const auto source = load_feature_source(features_spec, window, corpus);
      const auto base = effective_config();

      std::ostringstream csv;
      csv << "# " << kToolVersion << " sweep base=" << config_to_json(base).dump() << "\n";
      for (const auto& [name, _] : axes) csv << name << ',';
      csv << "epochs,best_epoch,dev_f2\n";
      std::vector<std::size_t> cursor(axes.size(), 0);
      double best = -1.0;
      std::string best_row;
      while (true) {
        TaggerConfig config = base;
        std::string row;
        for (std::size_t a = 0; a < axes.size(); ++a) {
          set_config_value(config, axes[a].first, axes[a].second[cursor[a]]);
          row += axes[a].second[cursor[a]] + ",";
        }
        config.validate();
        const auto [model, report] = train(corpus, source, config);
        csv << row << report.stopping_epoch << ',' << report.best_epoch << ',' << fmt(report.best_dev_f2) << "\n";
        if (report.best_dev_f2 > best) {
          best = report.best_dev_f2;
          best_row = row;
        }
        // Odometer step, last axis fastest; done when the first axis wraps.
        std::size_t a = axes.size();
        while (a > 0 && ++cursor[a - 1] == axes[a - 1].second.size()) cursor[--a] = 0;
        if (a == 0) break;
      }
      csv << "# best=" << best_row << fmt(best) << "\n";
      if (out_path.empty()) {
        out << csv.str();
      } else {
        auto f = open_out(out_path);
        f << csv.str();
      }
      return 0;
    }

    if (*sv) {
      Session session;
      for (const auto& spec : corpus_specs) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos) throw Error(ErrorCode::kInvalidArgument, "--corpus expects ID=PATH", spec);
        session.add_corpus(spec.substr(0, eq), require_corpus(spec.substr(eq + 1)));
      }
      for (const auto& spec : score_specs) {
        const auto colon = spec.find(':');
        const auto eq = spec.find('=');
        if (colon == std::string::npos || eq == std::string::npos || eq < colon)
          throw Error(ErrorCode::kInvalidArgument, "--scores expects CORPUS:MODEL=PATH", spec);
        const auto file = load_score_file(spec.substr(eq + 1));
        std::optional<TransitionModel> tm;
        if (file.meta.contains("transitions")) tm = TransitionModel::from_json(file.meta["transitions"]);
        session.add_scoreset(spec.substr(0, colon), spec.substr(colon + 1, eq - colon - 1), file.scores, tm);
      }
      httplib::Server server;
      install_routes(server, session);
      out << "listening on http://" << host << ":" << port << "\n" << std::flush;
      if (!server.listen(host, port)) throw Error(ErrorCode::kIo, "cannot listen", host + ":" + std::to_string(port));
      return 0;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace hare
