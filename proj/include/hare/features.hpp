#pragma once

// Per-token input vectors: a static embedding table averaged over a
// line-bounded context window, or precomputed contextual layer vectors
// combined with learned layer weights.

#include <algorithm>
#include <cstddef>
#include <cstdio>
#include <type_traits>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "hare/corpus.hpp"
#include "hare/error.hpp"

namespace hare {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dimension) : dimension_(dimension) {
    if (dimension == 0) throw Error(ErrorCode::kDimension, "embedding dimension must be positive");
  }

  std::size_t dimension() const { return dimension_; }
  std::size_t size() const { return entries_.size(); }

  void insert(std::string word, Vector v) {
    if (static_cast<std::size_t>(v.size()) != dimension_) {
      throw Error(ErrorCode::kDimension,
                  "vector has length " + std::to_string(v.size()) + ", expected " +
                      std::to_string(dimension_),
                  word);
    }
    entries_.insert_or_assign(std::move(word), std::move(v));
  }

  // nullptr when the word is out of vocabulary.
  const Vector* find(const std::string& word) const {
    auto it = entries_.find(word);
    return it == entries_.end() ? nullptr : &it->second;
  }

  const std::unordered_map<std::string, Vector>& entries() const { return entries_; }

 private:
  std::size_t dimension_ = 0;
  std::unordered_map<std::string, Vector> entries_;
};

// Precomputed contextual vectors: for every token, `layer_count` vectors of
// `dimension` values, stored as one layer_count x dimension matrix per token.
class ContextualFeatureSet {
 public:
  ContextualFeatureSet() = default;
  ContextualFeatureSet(std::size_t layer_count, std::size_t dimension)
      : layer_count_(layer_count), dimension_(dimension) {
    if (layer_count == 0) throw Error(ErrorCode::kDimension, "layer count must be at least 1");
    if (dimension == 0) throw Error(ErrorCode::kDimension, "dimension must be positive");
  }

  std::size_t layer_count() const { return layer_count_; }
  std::size_t dimension() const { return dimension_; }

  void set_document(const std::string& id, std::vector<Matrix> tokens) {
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (static_cast<std::size_t>(tokens[i].rows()) != layer_count_ ||
          static_cast<std::size_t>(tokens[i].cols()) != dimension_) {
        throw Error(ErrorCode::kDimension,
                    "token layers are " + std::to_string(tokens[i].rows()) + "x" +
                        std::to_string(tokens[i].cols()),
                    id + ":" + std::to_string(i));
      }
    }
    documents_.insert_or_assign(id, std::move(tokens));
  }

  const Matrix& layers(const std::string& document_id, std::size_t token_index) const {
    auto it = documents_.find(document_id);
    if (it == documents_.end() || token_index >= it->second.size()) {
      throw Error(ErrorCode::kCoverage, "no contextual vectors for token",
                  document_id + ":" + std::to_string(token_index));
    }
    return it->second[token_index];
  }

  bool covers(const Document& doc) const {
    auto it = documents_.find(doc.id());
    return it != documents_.end() && it->second.size() == doc.token_count();
  }

  const std::unordered_map<std::string, std::vector<Matrix>>& documents() const {
    return documents_;
  }

 private:
  std::size_t layer_count_ = 0;
  std::size_t dimension_ = 0;
  std::unordered_map<std::string, std::vector<Matrix>> documents_;
};

struct LayerWeights {
  Vector weights;

  static LayerWeights uniform(std::size_t k) {
    return LayerWeights{Vector::Constant(static_cast<Eigen::Index>(k), 1.0 / static_cast<double>(k))};
  }
};

struct StaticFeatures {
  std::shared_ptr<const EmbeddingTable> table;
  std::size_t window = 10;
};

struct ContextualFeatures {
  std::shared_ptr<const ContextualFeatureSet> features;
  LayerWeights layer_weights;
};

using FeatureSource = std::variant<StaticFeatures, ContextualFeatures>;

// ---------------------------------------------------------------------------

// Mean embedding of the token and up to `window` same-line neighbours on each
// side. Out-of-vocabulary tokens are left out of the mean; an all-OOV window
// yields the zero vector.
inline Vector static_window_vector(const Document& doc, std::size_t token_index,
                                   const EmbeddingTable& table, std::size_t window) {
  const auto [line, pos] = doc.locate(token_index);
  const auto& tokens = doc.lines()[line];
  const std::size_t lo = pos >= window ? pos - window : 0;
  const std::size_t hi = std::min(tokens.size() - 1, pos + window);
  Vector sum = Vector::Zero(static_cast<Eigen::Index>(table.dimension()));
  std::size_t found = 0;
  for (std::size_t i = lo; i <= hi; ++i) {
    if (const Vector* v = table.find(tokens[i].text)) {
      sum += *v;
      ++found;
    }
  }
  if (found > 0) sum /= static_cast<double>(found);
  return sum;
}

// All window means of a document at once (dimension x token_count), via
// per-line prefix sums.
inline Matrix static_window_vectors(const Document& doc, const EmbeddingTable& table,
                                    std::size_t window) {
  const auto d = static_cast<Eigen::Index>(table.dimension());
  Matrix out = Matrix::Zero(d, static_cast<Eigen::Index>(doc.token_count()));
  for (std::size_t li = 0; li < doc.line_count(); ++li) {
    const auto& tokens = doc.lines()[li];
    const std::size_t n = tokens.size();
    if (n == 0) continue;
    Matrix prefix = Matrix::Zero(d, static_cast<Eigen::Index>(n + 1));
    std::vector<std::size_t> count(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) {
      prefix.col(static_cast<Eigen::Index>(i + 1)) = prefix.col(static_cast<Eigen::Index>(i));
      count[i + 1] = count[i];
      if (const Vector* v = table.find(tokens[i].text)) {
        prefix.col(static_cast<Eigen::Index>(i + 1)) += *v;
        ++count[i + 1];
      }
    }
    const std::size_t base = doc.line_offset(li);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t lo = i >= window ? i - window : 0;
      const std::size_t hi = std::min(n - 1, i + window) + 1;
      const std::size_t found = count[hi] - count[lo];
      if (found == 0) continue;
      out.col(static_cast<Eigen::Index>(base + i)) =
          (prefix.col(static_cast<Eigen::Index>(hi)) - prefix.col(static_cast<Eigen::Index>(lo))) /
          static_cast<double>(found);
    }
  }
  return out;
}

// Sum over layers of weight[j] * layer_vector[j].
inline Vector contextual_vector(const ContextualFeatureSet& features, const LayerWeights& layer_weights,
                                const std::string& document_id, std::size_t token_index) {
  if (static_cast<std::size_t>(layer_weights.weights.size()) != features.layer_count()) {
    throw Error(ErrorCode::kDimension,
                "layer weights have length " + std::to_string(layer_weights.weights.size()) +
                    ", feature set has " + std::to_string(features.layer_count()) + " layers");
  }
  const Matrix& layers = features.layers(document_id, token_index);
  return layers.transpose() * layer_weights.weights;
}

// ---------------------------------------------------------------------------
// Files

// Text format: `word v1 ... vd` per line. A leading "count dimension" header
// line, as written by word2vec/fastText, is skipped.
inline EmbeddingTable parse_embedding_table(std::istream& in) {
  EmbeddingTable table;
  bool sized = false;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream fields(line);
    std::string word;
    if (!(fields >> word)) continue;
    std::vector<double> values;
    std::string field;
    while (fields >> field) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(field, &used));
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw Error(ErrorCode::kParse, "non-numeric value '" + field + "'",
                    "line " + std::to_string(line_number) + " (" + word + ")");
      }
    }
    if (line_number == 1 && values.size() == 1 &&
        word.find_first_not_of("0123456789") == std::string::npos) {
      continue;
    }
    if (!sized) {
      if (values.empty()) throw Error(ErrorCode::kDimension, "entry has no values", word);
      table = EmbeddingTable(values.size());
      sized = true;
    }
    table.insert(word, Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size())));
  }
  if (!sized) throw Error(ErrorCode::kParse, "embedding table is empty");
  return table;
}

inline EmbeddingTable load_embedding_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open embedding table", path.string());
  return parse_embedding_table(in);
}

inline void write_embedding_table(std::ostream& out, const EmbeddingTable& table) {
  // Sorted for byte-stable output.
  std::vector<const std::pair<const std::string, Vector>*> rows;
  for (const auto& entry : table.entries()) rows.push_back(&entry);
  std::sort(rows.begin(), rows.end(), [](auto* a, auto* b) { return a->first < b->first; });
  char buf[32];
  for (const auto* row : rows) {
    out << row->first;
    for (Eigen::Index i = 0; i < row->second.size(); ++i) {
      std::snprintf(buf, sizeof buf, " %.17g", row->second[i]);
      out << buf;
    }
    out << '\n';
  }
}

// Contextual format: one JSON record per document,
// {"id": ..., "tokens": [[layer_0 vector, ..., layer_{k-1} vector], ...]}.
inline ContextualFeatureSet parse_contextual_features(std::istream& in, const Corpus& corpus) {
  ContextualFeatureSet set;
  bool sized = false;
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
    if (!record.contains("id") || !record.contains("tokens") || !record["tokens"].is_array())
      throw Error(ErrorCode::kParse, "record needs 'id' and 'tokens'", locus);
    const auto id = record["id"].get<std::string>();
    std::vector<Matrix> tokens;
    for (const auto& tok : record["tokens"]) {
      if (!tok.is_array() || tok.empty() || !tok[0].is_array())
        throw Error(ErrorCode::kParse, "token entry must be an array of layer vectors", locus);
      if (!sized) {
        set = ContextualFeatureSet(tok.size(), tok[0].size());
        sized = true;
      }
      Matrix m(static_cast<Eigen::Index>(tok.size()), static_cast<Eigen::Index>(set.dimension()));
      if (tok.size() != set.layer_count())
        throw Error(ErrorCode::kDimension, "inconsistent layer count", id + ":" + std::to_string(tokens.size()));
      for (std::size_t j = 0; j < tok.size(); ++j) {
        if (tok[j].size() != set.dimension())
          throw Error(ErrorCode::kDimension, "inconsistent vector dimension",
                      id + ":" + std::to_string(tokens.size()));
        for (std::size_t c = 0; c < tok[j].size(); ++c)
          m(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c)) = tok[j][c].get<double>();
      }
      tokens.push_back(std::move(m));
    }
    set.set_document(id, std::move(tokens));
  }
  if (!sized) throw Error(ErrorCode::kParse, "contextual feature file is empty");
  for (const auto& doc : corpus.documents()) {
    if (!set.covers(doc)) {
      auto it = set.documents().find(doc.id());
      const std::size_t have = it == set.documents().end() ? 0 : it->second.size();
      throw Error(ErrorCode::kCoverage,
                  "contextual vectors cover " + std::to_string(have) + " of " +
                      std::to_string(doc.token_count()) + " tokens",
                  doc.id());
    }
  }
  return set;
}

inline ContextualFeatureSet load_contextual_features(const std::filesystem::path& path,
                                                     const Corpus& corpus) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open contextual feature file", path.string());
  return parse_contextual_features(in, corpus);
}

inline void write_contextual_features(std::ostream& out, const Corpus& corpus,
                                      const ContextualFeatureSet& set) {
  for (const auto& doc : corpus.documents()) {
    nlohmann::json tokens = nlohmann::json::array();
    for (std::size_t i = 0; i < doc.token_count(); ++i) {
      const Matrix& m = set.layers(doc.id(), i);
      nlohmann::json layers = nlohmann::json::array();
      for (Eigen::Index j = 0; j < m.rows(); ++j) {
        nlohmann::json v = nlohmann::json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) v.push_back(m(j, c));
        layers.push_back(std::move(v));
      }
      tokens.push_back(std::move(layers));
    }
    out << nlohmann::json{{"id", doc.id()}, {"tokens", std::move(tokens)}}.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------

// Model inputs for every token of a corpus, one column per token. Each column
// stacks `layers` blocks of `dimension` values; a static source has a single
// block holding the window mean. The network input for a token is the
// layer-weighted sum of its blocks.
struct TokenInputs {
  std::size_t layers = 1;
  std::size_t dimension = 0;
  Matrix data;                             // (layers * dimension) x tokens
  std::vector<std::size_t> doc_offsets;    // first column of each document, plus end

  std::size_t token_count() const { return static_cast<std::size_t>(data.cols()); }

  auto block(std::size_t column, std::size_t layer) const {
    return data.col(static_cast<Eigen::Index>(column))
        .segment(static_cast<Eigen::Index>(layer * dimension), static_cast<Eigen::Index>(dimension));
  }
};

inline std::size_t source_dimension(const FeatureSource& source) {
  return std::visit(
      [](const auto& s) -> std::size_t {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, StaticFeatures>) {
          if (!s.table) throw Error(ErrorCode::kInvalidArgument, "static source has no table");
          return s.table->dimension();
        } else {
          if (!s.features) throw Error(ErrorCode::kInvalidArgument, "contextual source has no features");
          return s.features->dimension();
        }
      },
      source);
}

inline std::size_t source_layers(const FeatureSource& source) {
  if (const auto* c = std::get_if<ContextualFeatures>(&source)) return c->features->layer_count();
  return 1;
}

inline TokenInputs build_token_inputs(const Corpus& corpus, const FeatureSource& source) {
  TokenInputs inputs;
  inputs.dimension = source_dimension(source);
  inputs.layers = source_layers(source);
  const std::size_t rows = inputs.layers * inputs.dimension;
  inputs.data.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(corpus.token_count()));
  std::size_t col = 0;
  for (const auto& doc : corpus.documents()) {
    inputs.doc_offsets.push_back(col);
    if (const auto* s = std::get_if<StaticFeatures>(&source)) {
      inputs.data.middleCols(static_cast<Eigen::Index>(col), static_cast<Eigen::Index>(doc.token_count())) =
          static_window_vectors(doc, *s->table, s->window);
    } else {
      const auto& set = *std::get<ContextualFeatures>(source).features;
      for (std::size_t i = 0; i < doc.token_count(); ++i) {
        const Matrix& m = set.layers(doc.id(), i);
        for (std::size_t j = 0; j < inputs.layers; ++j) {
          inputs.data.col(static_cast<Eigen::Index>(col + i))
              .segment(static_cast<Eigen::Index>(j * inputs.dimension), static_cast<Eigen::Index>(inputs.dimension)) =
              m.row(static_cast<Eigen::Index>(j)).transpose();
        }
      }
    }
    col += doc.token_count();
  }
  inputs.doc_offsets.push_back(col);
  return inputs;
}

}  // namespace hare
