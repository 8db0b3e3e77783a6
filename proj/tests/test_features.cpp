#include <gtest/gtest.h>

#include <sstream>

#include "hare/features.hpp"
#include "hare/synthetic.hpp"

using namespace hare;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

EmbeddingTable abc_table() {
  EmbeddingTable t(2);
  t.insert("a", vec({1, 0}));
  t.insert("b", vec({0, 2}));
  t.insert("c", vec({3, 3}));
  return t;
}

}  // namespace

TEST(StaticWindow, SingleTokenLineIsItsVector) {
  const auto t = abc_table();
  Document d("d", {{"b"}});
  EXPECT_TRUE(static_window_vector(d, 0, t, 10).isApprox(vec({0, 2})));
}

TEST(StaticWindow, ThreeTokenLineMean) {
  const auto t = abc_table();
  Document d("d", {{"a", "b", "c"}});
  EXPECT_TRUE(static_window_vector(d, 1, t, 10).isApprox(vec({4.0 / 3, 5.0 / 3})));
}

TEST(StaticWindow, TruncatedAtLineBreak) {
  const auto t = abc_table();
  Document d("d", {{"a", "b"}, {"c", "a"}});
  // Token 1 ("b") sees only "a" and itself even though the window is wide.
  EXPECT_TRUE(static_window_vector(d, 1, t, 10).isApprox(vec({0.5, 1.0})));
  EXPECT_TRUE(static_window_vector(d, 2, t, 10).isApprox(vec({2.0, 1.5})));
}

TEST(StaticWindow, OovExcludedAndAllOovIsZero) {
  const auto t = abc_table();
  Document d("d", {{"a", "zz", "b"}, {"qq"}});
  EXPECT_TRUE(static_window_vector(d, 1, t, 1).isApprox(vec({0.5, 1.0})));
  EXPECT_TRUE(static_window_vector(d, 3, t, 5).isZero());
}

TEST(StaticWindow, BatchMatchesSingle) {
  const auto data = generate_synthetic_corpus({.doc_count = 3, .tokens_per_doc = 80, .dimension = 5});
  for (std::size_t w : {0u, 1u, 3u, 10u}) {
    for (const auto& doc : data.corpus.documents()) {
      const Matrix all = static_window_vectors(doc, data.table, w);
      for (std::size_t i = 0; i < doc.token_count(); ++i)
        EXPECT_LT((all.col(static_cast<Eigen::Index>(i)) - static_window_vector(doc, i, data.table, w)).norm(), 1e-12);
    }
  }
}

// Scaling every embedding scales every window mean by the same factor.
TEST(StaticWindow, LinearInTheTable) {
  const auto data = generate_synthetic_corpus({.doc_count = 2, .tokens_per_doc = 60, .dimension = 4});
  EmbeddingTable scaled(4);
  for (const auto& w : data.relevant_vocab) scaled.insert(w, 3.0 * *data.table.find(w));
  for (const auto& w : data.irrelevant_vocab) scaled.insert(w, 3.0 * *data.table.find(w));
  for (const auto& doc : data.corpus.documents())
    EXPECT_TRUE(static_window_vectors(doc, scaled, 4).isApprox(3.0 * static_window_vectors(doc, data.table, 4)));
}

TEST(Contextual, LayerCombination) {
  ContextualFeatureSet set(3, 2);
  Matrix m(3, 2);
  m << 1, 2, 3, 4, 5, 6;
  set.set_document("d", {m});
  EXPECT_TRUE(contextual_vector(set, {vec({0, 0, 1})}, "d", 0).isApprox(vec({5, 6})));
  EXPECT_TRUE(contextual_vector(set, {vec({0.5, 0.5, 0})}, "d", 0).isApprox(vec({2, 3})));

  ContextualFeatureSet one(1, 2);
  Matrix u(1, 2);
  u << 7, 8;
  one.set_document("d", {u});
  EXPECT_TRUE(contextual_vector(one, {vec({1})}, "d", 0).isApprox(vec({7, 8})));
}

TEST(Contextual, MissingTokenNamesLocation) {
  ContextualFeatureSet set(1, 2);
  set.set_document("d", {Matrix::Zero(1, 2)});
  try {
    set.layers("d", 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCoverage);
    EXPECT_NE(e.locus().find("d"), std::string::npos);
    EXPECT_NE(e.locus().find("4"), std::string::npos);
  }
}

TEST(EmbeddingFile, ParsesTable) {
  std::istringstream in("3 4\nx 1 2 3 4\ny 0 0 0 0\nz -1 0.5 2e-1 9\n");
  const auto t = parse_embedding_table(in);
  EXPECT_EQ(t.size(), 3u);
  EXPECT_EQ(t.dimension(), 4u);
  EXPECT_DOUBLE_EQ((*t.find("z"))[2], 0.2);
  EXPECT_EQ(t.find("w"), nullptr);
}

TEST(EmbeddingFile, WrongLengthNamesWord) {
  std::istringstream in("x 1 2 3 4\nbad 1 2 3\n");
  try {
    parse_embedding_table(in);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimension);
    EXPECT_NE(std::string(e.what()).find("bad"), std::string::npos);
  }
}

TEST(EmbeddingFile, RoundTripIsExact) {
  const auto data = generate_synthetic_corpus({.doc_count = 1, .tokens_per_doc = 10, .dimension = 3});
  std::ostringstream out;
  write_embedding_table(out, data.table);
  std::istringstream in(out.str());
  const auto back = parse_embedding_table(in);
  ASSERT_EQ(back.size(), data.table.size());
  for (const auto& w : data.relevant_vocab) EXPECT_EQ(*back.find(w), *data.table.find(w));
}

TEST(ContextualFile, MissingTokenIsCoverageError) {
  Corpus c("c", {Document("d", {{"a", "b"}})});
  std::istringstream in(R"({"id":"d","tokens":[[[1,2]]]})");
  try {
    parse_contextual_features(in, c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCoverage);
  }
}

TEST(ContextualFile, RoundTrip) {
  const auto data = generate_synthetic_corpus({.doc_count = 2, .tokens_per_doc = 30, .dimension = 3});
  const auto set = synthetic_contextual_features(data.corpus, data.table, 3, 4);
  std::ostringstream out;
  write_contextual_features(out, data.corpus, set);
  std::istringstream in(out.str());
  const auto back = parse_contextual_features(in, data.corpus);
  EXPECT_EQ(back.layer_count(), 3u);
  for (const auto& doc : data.corpus.documents())
    for (std::size_t i = 0; i < doc.token_count(); ++i) EXPECT_EQ(back.layers(doc.id(), i), set.layers(doc.id(), i));
}

TEST(TokenInputs, StaticAndContextualShapes) {
  const auto data = generate_synthetic_corpus({.doc_count = 2, .tokens_per_doc = 40, .dimension = 3});
  auto table = std::make_shared<const EmbeddingTable>(data.table);
  const auto s = build_token_inputs(data.corpus, StaticFeatures{table, 2});
  EXPECT_EQ(s.layers, 1u);
  EXPECT_EQ(s.token_count(), data.corpus.token_count());
  EXPECT_EQ(s.doc_offsets.back(), data.corpus.token_count());

  auto set = std::make_shared<const ContextualFeatureSet>(synthetic_contextual_features(data.corpus, data.table, 2, 1));
  const auto c = build_token_inputs(data.corpus, ContextualFeatures{set, LayerWeights::uniform(2)});
  EXPECT_EQ(c.layers, 2u);
  EXPECT_EQ(c.data.rows(), 6);
  const auto& doc = data.corpus.documents()[1];
  EXPECT_TRUE(Vector(c.block(c.doc_offsets[1] + 3, 1)).isApprox(Vector(set->layers(doc.id(), 3).row(1).transpose())));
}

TEST(Synthetic, RelevantShareNearTarget) {
  const auto data = generate_synthetic_corpus({});
  std::size_t rel = 0;
  for (const auto& doc : data.corpus.documents())
    for (int g : doc.gold()) rel += static_cast<std::size_t>(g);
  const double share = static_cast<double>(rel) / static_cast<double>(data.corpus.token_count());
  EXPECT_NEAR(share, 0.18, 0.02);
  EXPECT_EQ(data.corpus.size(), 50u);
  EXPECT_NEAR(static_cast<double>(data.corpus.token_count()) / 50.0, 500.0, 1.0);
}

TEST(Synthetic, NoiseFreeIsSeparable) {
  const auto data = generate_synthetic_corpus({.doc_count = 4, .relevant_fraction = 0.5, .noise = 0.0});
  const Vector r = *data.table.find(data.relevant_vocab[0]);
  const Vector w = *data.table.find(data.irrelevant_vocab[0]);
  for (const auto& v : data.relevant_vocab) EXPECT_TRUE(data.table.find(v)->isApprox(r));
  for (const auto& v : data.irrelevant_vocab) EXPECT_TRUE(data.table.find(v)->isApprox(w));
  EXPECT_GT((r - w).norm(), 1.0);
}

TEST(Synthetic, Deterministic) {
  const auto a = generate_synthetic_corpus({.doc_count = 5, .seed = 3});
  const auto b = generate_synthetic_corpus({.doc_count = 5, .seed = 3});
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(a.corpus.documents()[i].line_texts(), b.corpus.documents()[i].line_texts());
    EXPECT_EQ(a.corpus.documents()[i].gold(), b.corpus.documents()[i].gold());
  }
}
