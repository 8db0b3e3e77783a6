#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "hare/cli.hpp"

using namespace hare;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = 0;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "hare");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliRun r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / ("hare_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    const auto r = run({"generate", "--out", dir_.string(), "--docs", "12", "--tokens", "150", "--dimension", "8",
                        "--contextual-layers", "2"});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static std::string path(const std::string& name) { return (dir_ / name).string(); }
  static std::string corpus() { return path("corpus.jsonl"); }
  static std::string features() { return "static:" + path("embeddings.txt"); }

  static CliRun train_small(const std::string& out, std::vector<std::string> extra = {}) {
    std::vector<std::string> args{"train", "--corpus", corpus(), "--features", features(), "--window", "2",
                                  "--out", out, "--set", "hidden_layers=16,16", "--set", "max_epochs=4"};
    args.insert(args.end(), extra.begin(), extra.end());
    return run(args);
  }

  static inline fs::path dir_;
};

}  // namespace

TEST_F(CliTest, TrainWritesModelAndReport) {
  const auto r = train_small(path("m.json"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(path("m.json")));
  EXPECT_NE(r.out.find("reason="), std::string::npos);
  EXPECT_TRUE(load_model(path("m.json")).extras.contains("transitions"));
}

TEST_F(CliTest, MissingFeaturesFileNamesPath) {
  const auto r = run({"train", "--corpus", corpus(), "--features", "static:/no/such/vectors.txt", "--out", path("x.json")});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("/no/such/vectors.txt"), std::string::npos);
}

TEST_F(CliTest, ReportEchoesEffectiveConfig) {
  std::ofstream(path("cfg.txt")) << "dropout_rate = 0.9\n";
  const auto r = train_small(path("m9.json"), {"--config", path("cfg.txt")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("\"dropout_rate\":0.9"), std::string::npos) << r.out;
}

TEST_F(CliTest, EvalOnGoldScoresIsPerfect) {
  const auto c = load_corpus(corpus());
  std::vector<DocumentScores> docs;
  for (const auto& d : c.documents()) docs.push_back({d.id(), std::vector<double>(d.gold().begin(), d.gold().end())});
  save_score_file(path("gold_scores.jsonl"), ScoreSet("gold", docs));
  const auto r = run({"eval", "--corpus", corpus(), "--scores", path("gold_scores.jsonl")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["precision"], 1.0);
  EXPECT_EQ(j["recall"], 1.0);
  EXPECT_EQ(j["f_beta"], 1.0);
}

TEST_F(CliTest, TagRankAnalyzeAndDeterminism) {
  ASSERT_EQ(train_small(path("mt.json")).code, 0);
  for (const char* out : {"s1.jsonl", "s2.jsonl"}) {
    const auto r = run({"tag", "--model", path("mt.json"), "--corpus", corpus(), "--features", features(), "--out", path(out)});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  EXPECT_EQ(slurp(path("s1.jsonl")), slurp(path("s2.jsonl")));
  const auto file = load_score_file(path("s1.jsonl"));
  EXPECT_TRUE(file.meta.contains("transitions"));

  const auto r = run({"rank", "--corpus", corpus(), "--scores", path("s1.jsonl"), "--gold-method", "density",
                      "--model-method", "density", "--out", path("rank.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto c = load_corpus(corpus());
  const double rho = spearman_rho(rank_documents(gold_annotations(c), RankingMethod::kDensity),
                                  rank_documents(annotate(c, file.scores, {}), RankingMethod::kDensity));
  EXPECT_NE(r.out.find("spearman_rho=" + cli::fmt(rho)), std::string::npos) << r.out;
  EXPECT_EQ(slurp(path("rank.csv")).rfind("# hare", 0), 0u);

  const auto smoothed = run({"rank", "--corpus", corpus(), "--scores", path("s1.jsonl"), "--smooth", "--collapse", "2"});
  EXPECT_EQ(smoothed.code, 0) << smoothed.err;

  for (const char* kind : {"sweep", "histogram", "lexicalization"}) {
    const auto a = run({"analyze", kind, "--corpus", corpus(), "--scores", path("s1.jsonl")});
    EXPECT_EQ(a.code, 0) << a.err;
    EXPECT_EQ(a.out.rfind("# hare", 0), 0u);
  }
  const auto sw = run({"analyze", "sweep", "--corpus", corpus(), "--scores", path("s1.jsonl"), "--grid", "10"});
  EXPECT_EQ(std::count(sw.out.begin(), sw.out.end(), '\n'), 1 + 1 + 11 + 1);

  const auto sm = run({"smooth", "--corpus", corpus(), "--scores", path("s1.jsonl"), "--out", path("sm.jsonl")});
  ASSERT_EQ(sm.code, 0) << sm.err;
  EXPECT_TRUE(load_score_file(path("sm.jsonl")).scores.smoothed());
}

TEST_F(CliTest, ContextualTrainAndTag) {
  const std::string ctx = "contextual:" + path("contextual.jsonl");
  auto r = run({"train", "--corpus", corpus(), "--features", ctx, "--out", path("mc.json"), "--set",
                "hidden_layers=8", "--set", "max_epochs=2"});
  ASSERT_EQ(r.code, 0) << r.err;
  r = run({"tag", "--model", path("mc.json"), "--corpus", corpus(), "--features", ctx, "--out", path("sc.jsonl")});
  EXPECT_EQ(r.code, 0) << r.err;
  r = run({"tag", "--model", path("mc.json"), "--corpus", corpus(), "--features", features(), "--out", path("bad.jsonl")});
  EXPECT_NE(r.code, 0);
}

TEST_F(CliTest, SweepGrid) {
  std::ofstream(path("grid.txt")) << "dropout_rate = 0.0, 0.5\n";
  const auto r = run({"sweep", "--grid", path("grid.txt"), "--corpus", corpus(), "--features", features(), "--set",
                      "hidden_layers=8", "--set", "max_epochs=2"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::size_t rows = 0;
  std::istringstream lines(r.out);
  std::string line;
  while (std::getline(lines, line))
    if (line.rfind("0.", 0) == 0) ++rows;
  EXPECT_EQ(rows, 2u);

  std::ofstream(path("grid_bad.txt")) << "dropuot = 0.1\n";
  const auto bad = run({"sweep", "--grid", path("grid_bad.txt"), "--corpus", corpus(), "--features", features()});
  EXPECT_NE(bad.code, 0);
  EXPECT_NE(bad.err.find("dropout_rate"), std::string::npos);
}

TEST_F(CliTest, CrossValidationWritesSummary) {
  const auto r = run({"crossval", "--corpus", corpus(), "--features", features(), "--window", "2", "--folds", "3",
                      "--out", path("cv"), "--set", "hidden_layers=8", "--set", "max_epochs=2"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto summary = nlohmann::json::parse(slurp(path("cv/summary.json")));
  EXPECT_EQ(summary["per_fold"].size(), 3u);
  EXPECT_TRUE(summary.contains("rho_smoothed"));
  EXPECT_EQ(load_score_file(path("cv/heldout_raw.jsonl")).scores.size(), 12u);
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_NE(run({}).code, 0);
  EXPECT_NE(run({"rank", "--corpus", corpus()}).code, 0);
  EXPECT_NE(run({"analyze", "nope", "--corpus", corpus(), "--scores", "x"}).code, 0);
}
