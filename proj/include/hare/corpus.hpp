#pragma once

// Document and corpus model: tokenization, corpus files, fold splitting.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

#include "hare/error.hpp"
#include "hare/random.hpp"

namespace hare {

using Labels = std::vector<int>;

struct Token {
  std::string text;
  std::size_t line_index = 0;
  std::size_t position = 0;
};

// A tokenized document. Lines are the only sequence boundary; tokens are
// addressed either by (line, position) or by a flat document-order index.
class Document {
 public:
  Document() = default;

  Document(std::string id, const std::vector<std::vector<std::string>>& lines,
           std::optional<Labels> gold = std::nullopt)
      : id_(std::move(id)), gold_(std::move(gold)) {
    lines_.reserve(lines.size());
    for (std::size_t li = 0; li < lines.size(); ++li) {
      line_offsets_.push_back(token_count_);
      std::vector<Token> line;
      line.reserve(lines[li].size());
      for (std::size_t pos = 0; pos < lines[li].size(); ++pos) {
        if (lines[li][pos].empty()) {
          throw Error(ErrorCode::kInvalidArgument, "empty token text",
                      id_ + ":" + std::to_string(li) + ":" + std::to_string(pos));
        }
        line.push_back(Token{lines[li][pos], li, pos});
      }
      token_count_ += line.size();
      lines_.push_back(std::move(line));
    }
    line_offsets_.push_back(token_count_);
    if (gold_) {
      if (gold_->size() != token_count_) {
        throw Error(ErrorCode::kAlignment,
                    "gold has " + std::to_string(gold_->size()) + " labels for " +
                        std::to_string(token_count_) + " tokens",
                    id_);
      }
      for (int label : *gold_) {
        if (label != 0 && label != 1) {
          throw Error(ErrorCode::kInvalidArgument, "gold labels must be 0 or 1", id_);
        }
      }
    }
  }

  const std::string& id() const { return id_; }
  const std::vector<std::vector<Token>>& lines() const { return lines_; }
  std::size_t line_count() const { return lines_.size(); }
  std::size_t token_count() const { return token_count_; }

  bool has_gold() const { return gold_.has_value(); }
  const Labels& gold() const {
    if (!gold_) throw Error(ErrorCode::kInvalidArgument, "document has no gold labels", id_);
    return *gold_;
  }
  const std::optional<Labels>& maybe_gold() const { return gold_; }

  // Flat index of the first token of `line`; line_offset(line_count()) is
  // the total token count.
  std::size_t line_offset(std::size_t line) const { return line_offsets_.at(line); }

  const Token& token(std::size_t flat_index) const {
    const auto [line, pos] = locate(flat_index);
    return lines_[line][pos];
  }

  std::pair<std::size_t, std::size_t> locate(std::size_t flat_index) const {
    if (flat_index >= token_count_) {
      throw Error(ErrorCode::kInvalidArgument, "token index out of range",
                  id_ + ":" + std::to_string(flat_index));
    }
    auto it = std::upper_bound(line_offsets_.begin(), line_offsets_.end(), flat_index);
    // Empty lines share an offset with their successor; upper_bound skips them.
    const auto line = static_cast<std::size_t>(it - line_offsets_.begin()) - 1;
    return {line, flat_index - line_offsets_[line]};
  }

  std::vector<std::string> token_texts() const {
    std::vector<std::string> out;
    out.reserve(token_count_);
    for (const auto& line : lines_)
      for (const auto& tok : line) out.push_back(tok.text);
    return out;
  }

  std::vector<std::vector<std::string>> line_texts() const {
    std::vector<std::vector<std::string>> out;
    out.reserve(lines_.size());
    for (const auto& line : lines_) {
      auto& dst = out.emplace_back();
      for (const auto& tok : line) dst.push_back(tok.text);
    }
    return out;
  }

  Document with_gold(Labels gold) const { return Document(id_, line_texts(), std::move(gold)); }

 private:
  std::string id_;
  std::vector<std::vector<Token>> lines_;
  std::vector<std::size_t> line_offsets_;
  std::size_t token_count_ = 0;
  std::optional<Labels> gold_;
};

class Corpus {
 public:
  Corpus() = default;

  Corpus(std::string name, std::vector<Document> documents)
      : name_(std::move(name)), documents_(std::move(documents)) {
    for (std::size_t i = 0; i < documents_.size(); ++i) {
      if (!index_.emplace(documents_[i].id(), i).second) {
        throw Error(ErrorCode::kConflict, "duplicate document id", documents_[i].id());
      }
    }
  }

  const std::string& name() const { return name_; }
  const std::vector<Document>& documents() const { return documents_; }
  std::size_t size() const { return documents_.size(); }
  bool empty() const { return documents_.empty(); }

  bool contains(const std::string& id) const { return index_.count(id) != 0; }

  std::size_t index_of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw Error(ErrorCode::kNotFound, "unknown document", id);
    return it->second;
  }

  const Document& document(const std::string& id) const { return documents_[index_of(id)]; }

  bool has_gold() const {
    return !documents_.empty() &&
           std::all_of(documents_.begin(), documents_.end(),
                       [](const Document& d) { return d.has_gold(); });
  }

  std::size_t token_count() const {
    std::size_t n = 0;
    for (const auto& d : documents_) n += d.token_count();
    return n;
  }

  // Sub-corpus holding the documents at `indices`, in the given order.
  Corpus subset(const std::vector<std::size_t>& indices, std::string name = {}) const {
    std::vector<Document> docs;
    docs.reserve(indices.size());
    for (auto i : indices) docs.push_back(documents_.at(i));
    return Corpus(name.empty() ? name_ : std::move(name), std::move(docs));
  }

 private:
  std::string name_;
  std::vector<Document> documents_;
  std::unordered_map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Tokenization

// Splits one line into token texts.
using Tokenizer = std::function<std::vector<std::string>(std::string_view line)>;

// Whitespace split, then every leading and trailing ASCII punctuation
// character becomes its own token. Interior punctuation ("50,000", "w/c")
// stays attached.
inline std::vector<std::string> rule_based_tokenize_line(std::string_view line) {
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  auto is_punct = [](char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; };

  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && is_space(line[i])) ++i;
    std::size_t j = i;
    while (j < line.size() && !is_space(line[j])) ++j;
    if (j > i) {
      std::string_view word = line.substr(i, j - i);
      std::size_t lead = 0;
      while (lead < word.size() && is_punct(word[lead])) ++lead;
      std::size_t trail = word.size();
      while (trail > lead && is_punct(word[trail - 1])) --trail;
      for (std::size_t k = 0; k < lead; ++k) out.emplace_back(1, word[k]);
      if (trail > lead) out.emplace_back(word.substr(lead, trail - lead));
      for (std::size_t k = trail; k < word.size(); ++k) out.emplace_back(1, word[k]);
    }
    i = j;
  }
  return out;
}

inline Document tokenize(std::string_view raw_text, std::string id = "doc",
                         const Tokenizer& tokenizer = rule_based_tokenize_line) {
  std::vector<std::vector<std::string>> lines;
  if (!raw_text.empty()) {
    std::size_t start = 0;
    while (true) {
      const auto nl = raw_text.find('\n', start);
      auto line = raw_text.substr(start, nl == std::string_view::npos ? raw_text.npos : nl - start);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      lines.push_back(tokenizer(line));
      if (nl == std::string_view::npos) break;
      start = nl + 1;
    }
  }
  return Document(std::move(id), lines);
}

// ---------------------------------------------------------------------------
// Corpus files: one JSON object per line, {"id", "lines", optional "gold"}.

enum class CorpusFormat {
  kJsonl,
  kText,  // a single raw-text document, tokenized with the default tokenizer
};

inline Document document_from_json(const nlohmann::json& record, const std::string& locus) {
  if (!record.is_object()) throw Error(ErrorCode::kParse, "record is not an object", locus);
  if (!record.contains("id") || !record["id"].is_string())
    throw Error(ErrorCode::kParse, "missing string field 'id'", locus);
  if (!record.contains("lines") || !record["lines"].is_array())
    throw Error(ErrorCode::kParse, "missing array field 'lines'", locus);

  std::vector<std::vector<std::string>> lines;
  for (const auto& line : record["lines"]) {
    if (!line.is_array()) throw Error(ErrorCode::kParse, "'lines' must hold arrays", locus);
    auto& dst = lines.emplace_back();
    for (const auto& tok : line) {
      if (!tok.is_string()) throw Error(ErrorCode::kParse, "tokens must be strings", locus);
      dst.push_back(tok.get<std::string>());
    }
  }
  std::optional<Labels> gold;
  if (record.contains("gold") && !record["gold"].is_null()) {
    if (!record["gold"].is_array()) throw Error(ErrorCode::kParse, "'gold' must be an array", locus);
    gold.emplace();
    for (const auto& g : record["gold"]) {
      if (!g.is_number_integer()) throw Error(ErrorCode::kParse, "gold labels must be integers", locus);
      gold->push_back(g.get<int>());
    }
  }
  return Document(record["id"].get<std::string>(), lines, std::move(gold));
}

inline nlohmann::json document_to_json(const Document& doc) {
  nlohmann::json record;
  record["id"] = doc.id();
  record["lines"] = doc.line_texts();
  if (doc.has_gold()) record["gold"] = doc.gold();
  return record;
}

inline Corpus parse_corpus(std::istream& in, std::string name) {
  std::vector<Document> docs;
  std::string line;
  std::size_t record_number = 0;
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
    if (record.contains("_meta")) continue;
    docs.push_back(document_from_json(record, locus));
  }
  return Corpus(std::move(name), std::move(docs));
}

inline Corpus load_corpus(const std::filesystem::path& path,
                          CorpusFormat format = CorpusFormat::kJsonl) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open corpus file", path.string());
  if (format == CorpusFormat::kText) {
    std::stringstream buffer;
    buffer << in.rdbuf();
    return Corpus(path.stem().string(), {tokenize(buffer.str(), path.stem().string())});
  }
  return parse_corpus(in, path.stem().string());
}

inline void write_corpus(std::ostream& out, const Corpus& corpus) {
  for (const auto& doc : corpus.documents()) out << document_to_json(doc).dump() << '\n';
}

inline void save_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write corpus file", path.string());
  write_corpus(out, corpus);
}

// ---------------------------------------------------------------------------
// Folds

struct FoldSplit {
  std::size_t fold_count = 0;
  std::map<std::string, std::size_t> assignments;

  // Corpus positions of the documents in `fold`, in corpus order.
  std::vector<std::size_t> members(const Corpus& corpus, std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < corpus.size(); ++i)
      if (assignments.at(corpus.documents()[i].id()) == fold) out.push_back(i);
    return out;
  }

  std::vector<std::size_t> complement(const Corpus& corpus, std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < corpus.size(); ++i)
      if (assignments.at(corpus.documents()[i].id()) != fold) out.push_back(i);
    return out;
  }
};

// Seeded shuffle, then round-robin assignment.
inline FoldSplit split_folds(const Corpus& corpus, std::size_t fold_count, std::uint64_t seed) {
  if (fold_count < 2) throw Error(ErrorCode::kInvalidArgument, "fold_count must be at least 2", "fold_count");
  if (fold_count > corpus.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "fold_count " + std::to_string(fold_count) + " exceeds document count " +
                    std::to_string(corpus.size()),
                "fold_count");
  }
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  FoldSplit split;
  split.fold_count = fold_count;
  for (std::size_t k = 0; k < order.size(); ++k)
    split.assignments[corpus.documents()[order[k]].id()] = k % fold_count;
  return split;
}

}  // namespace hare
