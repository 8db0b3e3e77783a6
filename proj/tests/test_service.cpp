#include <gtest/gtest.h>

#include <set>
#include <sstream>
#include <thread>

#include "hare/service.hpp"

using namespace hare;

namespace {

Corpus small_gold_corpus() {
  return Corpus("c", {Document("a", {{"x", "y", "z"}, {"w", "v"}}, Labels{1, 1, 0, 0, 1}),
                      Document("b", {{"x", "q"}}, Labels{0, 0}),
                      Document("c", {{"p", "x", "y", "z"}}, Labels{1, 0, 1, 1})});
}

ScoreSet small_scores(std::string id = "m") {
  return ScoreSet(std::move(id), {{"a", {0.9, 0.6, 0.3, 0.2, 0.7}}, {"b", {0.1, 0.45}}, {"c", {0.8, 0.4, 0.9, 0.55}}});
}

std::unique_ptr<Session> loaded() {
  auto s = std::make_unique<Session>();
  s->add_corpus("c1", small_gold_corpus());
  s->add_scoreset("c1", "m", small_scores());
  return s;
}

std::set<std::size_t> covered(const json& segments) {
  std::set<std::size_t> out;
  for (const auto& s : segments)
    for (std::size_t i = s["start"]; i <= s["end"].get<std::size_t>(); ++i) out.insert(i);
  return out;
}

}  // namespace

TEST(Session, ListsCorporaAndModels) {
  const auto holder = loaded();
  const Session& s = *holder;
  const auto list = s.list_corpora();
  ASSERT_EQ(list.size(), 1u);
  EXPECT_EQ(list[0]["id"], "c1");
  EXPECT_EQ(list[0]["documents"], 3);
  EXPECT_EQ(list[0]["models"], json::array({"m"}));
}

TEST(Session, DocumentListMatchesRankingModule) {
  const auto holder = loaded();
  const Session& s = *holder;
  const auto out = s.list_documents("c1", {{"model", "m"}});
  const auto corpus = small_gold_corpus();
  const auto expected = rank_documents(annotate(corpus, small_scores(), {}), RankingMethod::kSegmentsTokens);
  ASSERT_EQ(out["documents"].size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(out["documents"][i]["id"], expected.entries[i].id);
    EXPECT_EQ(out["documents"][i]["rank"], expected.entries[i].rank);
    EXPECT_TRUE(out["documents"][i].contains("gold"));
  }
  EXPECT_TRUE(out.contains("rho"));
  EXPECT_TRUE(out["evaluation"].contains("f_beta"));
}

TEST(Session, RequestsAreIndependent) {
  const auto holder = loaded();
  const Session& s = *holder;
  const auto low = s.list_documents("c1", {{"model", "m"}, {"threshold", "0.1"}});
  const auto high = s.list_documents("c1", {{"model", "m"}, {"threshold", "0.95"}});
  const auto again = s.list_documents("c1", {{"model", "m"}, {"threshold", "0.1"}});
  EXPECT_EQ(low, again);
  EXPECT_NE(low["documents"], high["documents"]);
}

TEST(Session, UnknownIdsAreNotFound) {
  const auto holder = loaded();
  const Session& s = *holder;
  for (auto call : {+[](const Session& x) { x.list_documents("c1", {{"model", "nope"}}); },
                    +[](const Session& x) { x.list_documents("zz", {{"model", "m"}}); },
                    +[](const Session& x) { x.get_document_view("c1", "nope", {{"model", "m"}}); }}) {
    try {
      call(s);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kNotFound);
    }
  }
}

TEST(Session, DocumentViewRawAndCoverage) {
  const auto holder = loaded();
  const Session& s = *holder;
  const auto raw = s.get_document_view("c1", "a", {{"model", "m"}});
  const auto expected = small_scores().scores("a");
  std::size_t i = 0;
  for (const auto& line : raw["lines"])
    for (const auto& tok : line) EXPECT_EQ(tok["score"].get<double>(), expected[i++]);
  EXPECT_TRUE(raw["summary"]["evaluation"].contains("f_beta"));

  const auto hi = s.get_document_view("c1", "a", {{"model", "m"}, {"threshold", "0.8"}});
  const auto lo = s.get_document_view("c1", "a", {{"model", "m"}, {"threshold", "0.25"}});
  const auto big = covered(lo["segments"]);
  for (auto t : covered(hi["segments"])) EXPECT_TRUE(big.count(t));
}

TEST(Session, SmoothingUsesGoldTransitionsAndCaches) {
  const auto holder = loaded();
  const Session& s = *holder;
  const auto a = s.get_document_view("c1", "a", {{"model", "m"}, {"smooth", "true"}});
  const auto b = s.get_document_view("c1", "a", {{"model", "m"}, {"smooth", "1"}});
  EXPECT_EQ(a, b);
  const auto expected = smooth_scores(small_gold_corpus(), small_scores(), estimate_transitions(small_gold_corpus()));
  EXPECT_EQ(a["lines"][0][0]["score"].get<double>(), expected.scores("a")[0]);
  EXPECT_EQ(a["lines"][0][0]["raw_score"].get<double>(), 0.9);
}

TEST(Session, Analyses) {
  const auto holder = loaded();
  const Session& s = *holder;
  const auto sweep = s.get_analysis("c1", "sweep", {{"model", "m"}, {"grid", "10"}});
  EXPECT_EQ(sweep["points"].size(), 11u);
  const auto lex = s.get_analysis("c1", "lexicalization", {{"model", "m"}, {"min_frequency", "2"}});
  for (const auto& e : lex["entries"]) EXPECT_GE(e["frequency"].get<int>(), 2);
  const auto hist = s.get_analysis("c1", "histogram", {{"model", "m"}, {"bins", "4"}, {"document", "b"}});
  EXPECT_EQ(hist["counts"], json::array({1, 1, 0, 0}));
  EXPECT_THROW(s.get_analysis("c1", "nope", {{"model", "m"}}), Error);
}

TEST(Session, SweepWithoutGoldFails) {
  Session s;
  s.add_corpus("plain", Corpus("p", {Document("a", {{"x"}})}));
  s.add_scoreset("plain", "m", ScoreSet("m", {{"a", {0.3}}}));
  EXPECT_THROW(s.get_analysis("plain", "sweep", {{"model", "m"}}), Error);
  EXPECT_THROW(s.get_document_view("plain", "a", {{"model", "m"}, {"smooth", "1"}}), Error);
}

TEST(Session, UploadValidation) {
  auto holder = loaded();
  Session& s = *holder;
  try {
    s.add_scoreset("c1", "m", small_scores());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConflict);
  }
  try {
    s.upload_scoreset("c1", "short", "{\"id\":\"a\",\"scores\":[0.5]}\n{\"id\":\"b\",\"scores\":[0.1,0.2]}\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kAlignment);
    EXPECT_EQ(e.locus(), "a");
  }
  std::ostringstream body;
  write_score_file(body, small_scores("m2"));
  s.upload_scoreset("c1", "", body.str());
  EXPECT_EQ(s.list_corpora()[0]["models"], json::array({"m", "m2"}));
  EXPECT_THROW(s.add_corpus("c1", small_gold_corpus()), Error);
}

TEST(Session, RankingMatrixShape) {
  const auto holder = loaded();
  const Session& s = *holder;
  const auto m = s.ranking_matrix("c1", {{"model", "m"}, {"threshold", "0.5"}});
  ASSERT_EQ(m["rho"].size(), 3u);
  EXPECT_EQ(m["methods"], json::array({"segtok", "sum", "density"}));
}

TEST(Params, BadValuesAreInvalidArgument) {
  EXPECT_THROW(params::settings({{"threshold", "abc"}}), Error);
  EXPECT_THROW(params::settings({{"threshold", "2"}}), Error);
  EXPECT_THROW(params::settings({{"collapse", "-1"}}), Error);
  EXPECT_THROW(params::settings({{"smooth", "maybe"}}), Error);
  EXPECT_EQ(http_status(ErrorCode::kNotFound), 404);
  EXPECT_EQ(http_status(ErrorCode::kConflict), 409);
  EXPECT_EQ(http_status(ErrorCode::kAlignment), 400);
}

TEST(Http, RoundTrip) {
  Session session;
  httplib::Server server;
  install_routes(server, session);
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  std::ostringstream corpus_body, score_body;
  write_corpus(corpus_body, small_gold_corpus());
  write_score_file(score_body, small_scores());

  auto r = client.Post("/corpora?id=c1", corpus_body.str(), "application/x-ndjson");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 201);
  r = client.Post("/corpora?id=c1", corpus_body.str(), "application/x-ndjson");
  EXPECT_EQ(r->status, 409);
  EXPECT_EQ(json::parse(r->body)["code"], "conflict");

  r = client.Post("/corpora/c1/scoresets?model=m", score_body.str(), "application/x-ndjson");
  EXPECT_EQ(r->status, 201);

  r = client.Get("/corpora");
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(json::parse(r->body)[0]["models"], json::array({"m"}));

  r = client.Get("/corpora/c1/documents?model=m&threshold=0.5&method=density");
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(json::parse(r->body), session.list_documents("c1", {{"model", "m"}, {"method", "density"}}));

  r = client.Get("/corpora/c1/documents/a?model=m&smooth=true");
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(json::parse(r->body)["id"], "a");

  r = client.Get("/corpora/c1/analysis/histogram?model=m&bins=5");
  EXPECT_EQ(json::parse(r->body)["counts"].size(), 5u);

  r = client.Get("/corpora/c1/ranking-matrix?model=m");
  EXPECT_EQ(r->status, 200);

  r = client.Get("/corpora/c1/documents?model=missing");
  EXPECT_EQ(r->status, 404);
  const auto err = json::parse(r->body);
  EXPECT_EQ(err["code"], "not_found");
  EXPECT_EQ(err["locus"], "missing");

  r = client.Get("/corpora/c1/documents?model=m&threshold=x");
  EXPECT_EQ(r->status, 400);

  server.stop();
  thread.join();
}
