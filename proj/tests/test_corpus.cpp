#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "hare/corpus.hpp"

using namespace hare;

namespace {

Corpus corpus_of(std::size_t n) {
  std::vector<Document> docs;
  for (std::size_t i = 0; i < n; ++i) docs.emplace_back("d" + std::to_string(i), std::vector<std::vector<std::string>>{{"x"}});
  return Corpus("c", std::move(docs));
}

}  // namespace

TEST(Tokenizer, SplitsTrailingPunctuation) {
  const auto doc = tokenize("Pt walks 50 ft.");
  ASSERT_EQ(doc.line_count(), 1u);
  EXPECT_EQ(doc.token_texts(), (std::vector<std::string>{"Pt", "walks", "50", "ft", "."}));
}

TEST(Tokenizer, EmptyInputHasNoTokens) {
  EXPECT_EQ(tokenize("").token_count(), 0u);
}

TEST(Tokenizer, NewlineIsALineBreak) {
  const auto doc = tokenize("a\nb");
  ASSERT_EQ(doc.line_count(), 2u);
  EXPECT_EQ(doc.lines()[0][0].text, "a");
  EXPECT_EQ(doc.lines()[1][0].text, "b");
  EXPECT_EQ(doc.token(1).line_index, 1u);
}

TEST(Tokenizer, InteriorPunctuationStaysAttached) {
  EXPECT_EQ(rule_based_tokenize_line("(w/c 50,000)"), (std::vector<std::string>{"(", "w/c", "50,000", ")"}));
  EXPECT_EQ(rule_based_tokenize_line("...!"), (std::vector<std::string>{".", ".", ".", "!"}));
}

// Concatenating a line's tokens gives back the line without whitespace.
TEST(Tokenizer, TokensJoinToLineWithoutSpaces) {
  Rng rng(5);
  const std::string alphabet = "ab1 .,;()-\t";
  for (int trial = 0; trial < 300; ++trial) {
    std::string line;
    const auto len = rng.below(30);
    for (std::size_t i = 0; i < len; ++i) line += alphabet[rng.below(alphabet.size())];
    std::string joined, squeezed;
    for (const auto& t : rule_based_tokenize_line(line)) {
      EXPECT_FALSE(t.empty());
      joined += t;
    }
    for (char c : line)
      if (c != ' ' && c != '\t') squeezed += c;
    EXPECT_EQ(joined, squeezed) << line;
  }
}

TEST(Tokenizer, PluggableTokenizer) {
  auto by_comma = [](std::string_view line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
      if (c == ',') {
        out.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    out.push_back(cur);
    return out;
  };
  EXPECT_EQ(tokenize("a b,c", "x", by_comma).token_texts(), (std::vector<std::string>{"a b", "c"}));
}

TEST(Document, GoldMustAlign) {
  try {
    Document("short", {{"a", "b"}}, Labels{1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kAlignment);
    EXPECT_EQ(e.locus(), "short");
  }
  EXPECT_THROW(Document("bad", {{"a"}}, Labels{2}), Error);
}

TEST(Document, FlatIndexing) {
  Document d("d", {{"a", "b"}, {}, {"c"}});
  EXPECT_EQ(d.token_count(), 3u);
  EXPECT_EQ(d.line_offset(2), 2u);
  EXPECT_EQ(d.line_offset(3), 3u);
  EXPECT_EQ(d.locate(2), (std::pair<std::size_t, std::size_t>{2, 0}));
  EXPECT_THROW(d.locate(3), Error);
}

TEST(CorpusIo, ParsesTwoRecords) {
  std::istringstream in(R"({"id":"a","lines":[["x","y"]],"gold":[0,1]}
{"id":"b","lines":[["z"]]}
)");
  const auto c = parse_corpus(in, "t");
  ASSERT_EQ(c.size(), 2u);
  EXPECT_TRUE(c.document("a").has_gold());
  EXPECT_FALSE(c.document("b").has_gold());
  EXPECT_FALSE(c.has_gold());
}

TEST(CorpusIo, ShortGoldIsAlignmentError) {
  std::istringstream in(R"({"id":"a","lines":[["x","y"]],"gold":[0]})");
  try {
    parse_corpus(in, "t");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kAlignment);
    EXPECT_NE(std::string(e.what()).find("a"), std::string::npos);
  }
}

TEST(CorpusIo, MalformedRecordNamesRecordNumber) {
  std::istringstream in("{\"id\":\"a\",\"lines\":[[\"x\"]]}\n{not json\n");
  try {
    parse_corpus(in, "t");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParse);
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
  }
}

TEST(CorpusIo, DuplicateIdIsConflict) {
  std::istringstream in("{\"id\":\"a\",\"lines\":[[\"x\"]]}\n{\"id\":\"a\",\"lines\":[[\"y\"]]}\n");
  try {
    parse_corpus(in, "t");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConflict);
  }
}

TEST(CorpusIo, RoundTrip) {
  Corpus c("t", {Document("a", {{"x", "y"}, {"z"}}, Labels{0, 1, 1}), Document("b", {{"q"}})});
  std::ostringstream out;
  write_corpus(out, c);
  std::istringstream in(out.str());
  const auto back = parse_corpus(in, "t");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back.document("a").line_texts(), c.document("a").line_texts());
  EXPECT_EQ(back.document("a").gold(), c.document("a").gold());
  EXPECT_FALSE(back.document("b").has_gold());
}

TEST(CorpusIo, MissingFileIsIoError) {
  try {
    load_corpus("/nonexistent/corpus.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIo);
  }
}

TEST(CorpusIo, TextFormatTokenizes) {
  const auto path = std::filesystem::temp_directory_path() / "hare_text_doc.txt";
  std::ofstream(path) << "Pt walks.\nNo pain";
  const auto c = load_corpus(path, CorpusFormat::kText);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c.documents()[0].token_count(), 5u);
  std::filesystem::remove(path);
}

TEST(Folds, FourHundredDocsTenFolds) {
  const auto c = corpus_of(400);
  const auto split = split_folds(c, 10, 1);
  for (std::size_t f = 0; f < 10; ++f) {
    EXPECT_EQ(split.members(c, f).size(), 40u);
    EXPECT_EQ(split.complement(c, f).size(), 360u);
  }
}

TEST(Folds, OneDocPerFold) {
  const auto c = corpus_of(10);
  const auto split = split_folds(c, 10, 1);
  for (std::size_t f = 0; f < 10; ++f) EXPECT_EQ(split.members(c, f).size(), 1u);
}

TEST(Folds, SeededAndValidated) {
  const auto c = corpus_of(30);
  EXPECT_EQ(split_folds(c, 3, 9).assignments, split_folds(c, 3, 9).assignments);
  EXPECT_NE(split_folds(c, 3, 9).assignments, split_folds(c, 3, 10).assignments);
  EXPECT_THROW(split_folds(c, 31, 1), Error);
  EXPECT_THROW(split_folds(c, 1, 1), Error);
}

TEST(Corpus, SubsetKeepsOrder) {
  const auto c = corpus_of(5);
  const auto s = c.subset({3, 1});
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s.documents()[0].id(), "d3");
  EXPECT_EQ(s.index_of("d1"), 1u);
  EXPECT_THROW(s.document("d0"), Error);
}
