#pragma once

// Synthetic labelled corpora for benchmarks and tests. Documents are built
// from lines of tokens; relevant tokens come from their own vocabulary and
// form contiguous runs, mostly whole lines, occasionally a run inside a
// longer irrelevant line. The matching embedding table puts each vocabulary
// around its own centre with per-word Gaussian spread `noise`.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "hare/corpus.hpp"
#include "hare/error.hpp"
#include "hare/features.hpp"
#include "hare/random.hpp"

namespace hare {

struct SyntheticSpec {
  std::size_t doc_count = 50;
  std::size_t tokens_per_doc = 500;
  double relevant_fraction = 0.18;
  std::size_t relevant_vocab_size = 200;
  std::size_t irrelevant_vocab_size = 2000;
  std::size_t dimension = 16;
  double noise = 0.5;
  std::size_t min_line_length = 6;
  std::size_t max_line_length = 18;
  // Chance that a relevant run sits inside an irrelevant line rather than
  // covering a whole line.
  double inline_segment_prob = 0.2;
  // Per-document relevance varies in [1 - spread, 1 + spread] times the
  // corpus fraction, rescaled so the corpus mean is exact.
  double document_spread = 0.75;
  std::uint64_t seed = 13;

  void validate() const {
    if (!(relevant_fraction > 0.0 && relevant_fraction < 1.0))
      throw Error(ErrorCode::kInvalidArgument, "relevant_fraction must lie in (0,1)", "relevant_fraction");
    if (doc_count == 0 || tokens_per_doc == 0)
      throw Error(ErrorCode::kInvalidArgument, "doc_count and tokens_per_doc must be positive");
    if (relevant_vocab_size == 0 || irrelevant_vocab_size == 0 || dimension == 0)
      throw Error(ErrorCode::kInvalidArgument, "vocabulary sizes and dimension must be positive");
    if (min_line_length == 0 || min_line_length > max_line_length)
      throw Error(ErrorCode::kInvalidArgument, "need 0 < min_line_length <= max_line_length");
    if (!(noise >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "noise must be non-negative", "noise");
    if (!(document_spread >= 0.0 && document_spread < 1.0))
      throw Error(ErrorCode::kInvalidArgument, "document_spread must lie in [0,1)", "document_spread");
  }
};

struct SyntheticCorpus {
  Corpus corpus;
  EmbeddingTable table;
  std::vector<std::string> relevant_vocab;
  std::vector<std::string> irrelevant_vocab;
};

namespace detail {

inline std::string vocab_word(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%04zu", prefix, i);
  return buf;
}

}  // namespace detail

inline SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  SyntheticCorpus out;

  for (std::size_t i = 0; i < spec.relevant_vocab_size; ++i) out.relevant_vocab.push_back(detail::vocab_word("mob", i));
  for (std::size_t i = 0; i < spec.irrelevant_vocab_size; ++i) out.irrelevant_vocab.push_back(detail::vocab_word("w", i));

  // Class centres at +/- 1 along a random unit direction.
  const auto d = static_cast<Eigen::Index>(spec.dimension);
  Vector axis(d);
  for (Eigen::Index i = 0; i < d; ++i) axis[i] = rng.normal();
  axis.normalize();
  out.table = EmbeddingTable(spec.dimension);
  auto add_words = [&](const std::vector<std::string>& words, double sign) {
    for (const auto& w : words) {
      Vector v = sign * axis;
      for (Eigen::Index i = 0; i < d; ++i) v[i] += spec.noise * rng.normal();
      out.table.insert(w, std::move(v));
    }
  };
  add_words(out.relevant_vocab, 1.0);
  add_words(out.irrelevant_vocab, -1.0);

  std::vector<double> doc_fraction(spec.doc_count);
  double mean = 0.0;
  for (auto& f : doc_fraction) {
    f = rng.uniform(1.0 - spec.document_spread, 1.0 + spec.document_spread);
    mean += f;
  }
  mean /= static_cast<double>(spec.doc_count);
  for (auto& f : doc_fraction) f = std::min(0.95, spec.relevant_fraction * f / mean);

  auto draw = [&](const std::vector<std::string>& vocab) { return vocab[rng.below(vocab.size())]; };

  std::vector<Document> docs;
  docs.reserve(spec.doc_count);
  for (std::size_t di = 0; di < spec.doc_count; ++di) {
    std::vector<std::size_t> lengths;
    std::size_t total = 0;
    while (total < spec.tokens_per_doc) {
      auto len = spec.min_line_length + rng.below(spec.max_line_length - spec.min_line_length + 1);
      len = std::min(len, spec.tokens_per_doc - total);
      lengths.push_back(len);
      total += len;
    }

    // Pick lines to carry relevant runs until the document's quota is met.
    const auto quota = static_cast<std::size_t>(std::llround(doc_fraction[di] * static_cast<double>(total)));
    std::vector<std::size_t> order(lengths.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<std::pair<std::size_t, std::size_t>> runs(lengths.size(), {0, 0});  // [begin, end) per line
    std::size_t relevant = 0;
    for (std::size_t li : order) {
      if (relevant >= quota) break;
      const std::size_t len = lengths[li];
      const std::size_t remaining = quota - relevant;
      std::size_t run = len;
      std::size_t begin = 0;
      if (len >= 8 && rng.bernoulli(spec.inline_segment_prob)) {
        run = std::max<std::size_t>(3, len / 2);
        begin = rng.below(len - run + 1);
      }
      if (run > remaining) {
        // A partial run is only worth it if it is closer to the quota than skipping.
        if (remaining * 2 < run) break;
        run = remaining;
        begin = std::min(begin, len - run);
      }
      runs[li] = {begin, begin + run};
      relevant += run;
    }

    std::vector<std::vector<std::string>> lines;
    Labels gold;
    for (std::size_t li = 0; li < lengths.size(); ++li) {
      auto& line = lines.emplace_back();
      for (std::size_t p = 0; p < lengths[li]; ++p) {
        const bool rel = p >= runs[li].first && p < runs[li].second;
        line.push_back(draw(rel ? out.relevant_vocab : out.irrelevant_vocab));
        gold.push_back(rel ? 1 : 0);
      }
    }
    docs.emplace_back(detail::vocab_word("doc", di), lines, std::move(gold));
  }
  out.corpus = Corpus("synthetic", std::move(docs));
  return out;
}

// Contextual-style vectors for a corpus: layer 0 is the token's own
// embedding, layer 1 the mean over +/- 2 same-line neighbours, and any
// further layers are pure Gaussian noise. Useful for exercising learned
// layer weights.
inline ContextualFeatureSet synthetic_contextual_features(const Corpus& corpus, const EmbeddingTable& table,
                                                          std::size_t layer_count, std::uint64_t seed) {
  if (layer_count < 1) throw Error(ErrorCode::kInvalidArgument, "layer_count must be at least 1");
  Rng rng(seed);
  const std::size_t dim = table.dimension();
  ContextualFeatureSet set(layer_count, dim);
  for (const auto& doc : corpus.documents()) {
    const Matrix own = static_window_vectors(doc, table, 0);
    const Matrix near = static_window_vectors(doc, table, 2);
    std::vector<Matrix> tokens;
    tokens.reserve(doc.token_count());
    for (std::size_t i = 0; i < doc.token_count(); ++i) {
      Matrix m(static_cast<Eigen::Index>(layer_count), static_cast<Eigen::Index>(dim));
      for (std::size_t j = 0; j < layer_count; ++j) {
        const auto row = static_cast<Eigen::Index>(j);
        if (j == 0) {
          m.row(row) = own.col(static_cast<Eigen::Index>(i)).transpose();
        } else if (j == 1) {
          m.row(row) = near.col(static_cast<Eigen::Index>(i)).transpose();
        } else {
          for (std::size_t c = 0; c < dim; ++c) m(row, static_cast<Eigen::Index>(c)) = rng.normal();
        }
      }
      tokens.push_back(std::move(m));
    }
    set.set_document(doc.id(), std::move(tokens));
  }
  return set;
}

}  // namespace hare
