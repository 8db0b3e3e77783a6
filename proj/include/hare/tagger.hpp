#pragma once

// Feedforward token relevance tagger: relu hidden layers over token
// features, a two-class softmax output, and the training recipe of
// per-epoch negative resampling, class-weighted cross-entropy, input dropout
// and early stopping on dev F-2.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "hare/analysis.hpp"
#include "hare/corpus.hpp"
#include "hare/error.hpp"
#include "hare/features.hpp"
#include "hare/postprocess.hpp"
#include "hare/random.hpp"

namespace hare {

struct TaggerConfig {
  std::vector<std::size_t> hidden_layers{300, 300, 300};
  double dropout_rate = 0.6;
  double negative_ratio = 0.75;
  double positive_fraction = 1.0;
  double relevant_class_weight = 2.0;
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
  double early_stop_delta = 1e-5;
  double eval_threshold = 0.5;
  double learning_rate = 0.01;
  std::size_t batch_size = 64;
  double dev_fraction = 0.1;
  std::uint64_t seed = 13;

  void validate() const {
    auto fail = [](const char* field, const std::string& why) {
      throw Error(ErrorCode::kInvalidArgument, why, field);
    };
    for (auto h : hidden_layers)
      if (h == 0) fail("hidden_layers", "hidden layer sizes must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout_rate", "must lie in [0,1)");
    if (!(negative_ratio > 0.0)) fail("negative_ratio", "must be positive");
    if (!(positive_fraction > 0.0 && positive_fraction <= 1.0)) fail("positive_fraction", "must lie in (0,1]");
    if (!(relevant_class_weight > 0.0)) fail("relevant_class_weight", "must be positive");
    if (max_epochs == 0) fail("max_epochs", "must be positive");
    if (!(eval_threshold >= 0.0 && eval_threshold <= 1.0)) fail("eval_threshold", "must lie in [0,1]");
    if (!(learning_rate > 0.0)) fail("learning_rate", "must be positive");
    if (batch_size == 0) fail("batch_size", "must be positive");
    if (!(dev_fraction > 0.0 && dev_fraction < 1.0)) fail("dev_fraction", "must lie in (0,1)");
  }
};

inline const std::vector<std::string>& tagger_config_keys() {
  static const std::vector<std::string> keys = {
      "hidden_layers",  "dropout_rate",   "negative_ratio", "positive_fraction", "relevant_class_weight",
      "max_epochs",     "patience",       "early_stop_delta", "eval_threshold", "learning_rate",
      "batch_size",     "dev_fraction",   "seed"};
  return keys;
}

inline std::string join_keys(const std::vector<std::string>& keys) {
  std::string out;
  for (const auto& k : keys) out += (out.empty() ? "" : ", ") + k;
  return out;
}

// Sets one field from its text form. Unknown keys list the valid ones.
inline void set_config_value(TaggerConfig& config, std::string_view key, std::string_view value) {
  const std::string k(key);
  const std::string v(value);
  auto as_double = [&]() {
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw Error(ErrorCode::kInvalidArgument, "expected a number, got '" + v + "'", k);
    }
  };
  auto as_size = [&]() {
    const double d = as_double();
    if (d < 0 || d != std::floor(d)) throw Error(ErrorCode::kInvalidArgument, "expected a non-negative integer", k);
    return static_cast<std::size_t>(d);
  };
  if (k == "hidden_layers") {
    config.hidden_layers.clear();
    std::string item;
    std::istringstream in(v);
    const char sep = v.find('x') != std::string_view::npos ? 'x' : ',';
    while (std::getline(in, item, sep)) {
      item.erase(0, item.find_first_not_of(" \t"));
      item.erase(item.find_last_not_of(" \t") + 1);
      if (item.empty()) continue;
      try {
        config.hidden_layers.push_back(static_cast<std::size_t>(std::stoul(item)));
      } catch (const std::exception&) {
        throw Error(ErrorCode::kInvalidArgument, "bad layer size '" + item + "'", k);
      }
    }
  } else if (k == "dropout_rate") {
    config.dropout_rate = as_double();
  } else if (k == "negative_ratio") {
    config.negative_ratio = as_double();
  } else if (k == "positive_fraction") {
    config.positive_fraction = as_double();
  } else if (k == "relevant_class_weight") {
    config.relevant_class_weight = as_double();
  } else if (k == "max_epochs") {
    config.max_epochs = as_size();
  } else if (k == "patience") {
    config.patience = as_size();
  } else if (k == "early_stop_delta") {
    config.early_stop_delta = as_double();
  } else if (k == "eval_threshold") {
    config.eval_threshold = as_double();
  } else if (k == "learning_rate") {
    config.learning_rate = as_double();
  } else if (k == "batch_size") {
    config.batch_size = as_size();
  } else if (k == "dev_fraction") {
    config.dev_fraction = as_double();
  } else if (k == "seed") {
    config.seed = static_cast<std::uint64_t>(as_size());
  } else {
    throw Error(ErrorCode::kInvalidArgument,
                "unknown hyperparameter '" + k + "'; valid names: " + join_keys(tagger_config_keys()), k);
  }
}

// Flat "key = value" lines; '#' starts a comment.
inline TaggerConfig parse_tagger_config(std::istream& in, TaggerConfig config = {}) {
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto eq = line.find_first_of("=:");
    std::string key, value;
    if (eq == std::string::npos) {
      std::istringstream fields(line);
      if (!(fields >> key)) continue;
      std::getline(fields, value);
    } else {
      key = line.substr(0, eq);
      value = line.substr(eq + 1);
    }
    auto trim = [](std::string& s) {
      s.erase(0, s.find_first_not_of(" \t\r"));
      s.erase(s.find_last_not_of(" \t\r") + 1);
    };
    trim(key);
    trim(value);
    if (key.empty()) continue;
    if (value.empty())
      throw Error(ErrorCode::kParse, "missing value", "line " + std::to_string(line_number) + " (" + key + ")");
    set_config_value(config, key, value);
  }
  config.validate();
  return config;
}

inline TaggerConfig load_tagger_config(const std::filesystem::path& path, TaggerConfig config = {}) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config file", path.string());
  return parse_tagger_config(in, std::move(config));
}

inline nlohmann::json config_to_json(const TaggerConfig& c) {
  return {{"hidden_layers", c.hidden_layers},
          {"dropout_rate", c.dropout_rate},
          {"negative_ratio", c.negative_ratio},
          {"positive_fraction", c.positive_fraction},
          {"relevant_class_weight", c.relevant_class_weight},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"early_stop_delta", c.early_stop_delta},
          {"eval_threshold", c.eval_threshold},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"dev_fraction", c.dev_fraction},
          {"seed", c.seed}};
}

inline TaggerConfig config_from_json(const nlohmann::json& j) {
  TaggerConfig c;
  c.hidden_layers = j.at("hidden_layers").get<std::vector<std::size_t>>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.negative_ratio = j.at("negative_ratio").get<double>();
  c.positive_fraction = j.at("positive_fraction").get<double>();
  c.relevant_class_weight = j.at("relevant_class_weight").get<double>();
  c.max_epochs = j.at("max_epochs").get<std::size_t>();
  c.patience = j.at("patience").get<std::size_t>();
  c.early_stop_delta = j.at("early_stop_delta").get<double>();
  c.eval_threshold = j.at("eval_threshold").get<double>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.dev_fraction = j.at("dev_fraction").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

// ---------------------------------------------------------------------------
// Model

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

enum class FeatureKind { kStatic, kContextual };

struct TaggerModel {
  std::size_t input_dimension = 0;
  FeatureKind feature_kind = FeatureKind::kStatic;
  std::size_t window = 10;        // static features only
  std::size_t feature_layers = 1;  // contextual layer count, 1 for static
  std::vector<DenseLayer> layers;  // hidden layers, then the 2-way output layer
  std::optional<LayerWeights> layer_weights;  // contextual features only
  TaggerConfig config;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_dev_f2 = 0.0;
  nlohmann::json extras = nlohmann::json::object();  // persisted verbatim

  // Layer-combination weights as applied to stacked inputs.
  Vector combination() const {
    if (layer_weights) return layer_weights->weights;
    return Vector::Ones(static_cast<Eigen::Index>(feature_layers));
  }
};

// Uniform(-a, a) weights with a = sqrt(6 / fan_in) for relu layers and
// sqrt(3 / fan_in) for the output layer; zero biases.
inline TaggerModel init_model(std::size_t input_dimension, const TaggerConfig& config, Rng& rng,
                              std::size_t contextual_layers = 0) {
  if (input_dimension == 0) throw Error(ErrorCode::kDimension, "input dimension must be positive");
  TaggerModel model;
  model.input_dimension = input_dimension;
  model.config = config;
  if (contextual_layers > 0) {
    model.feature_kind = FeatureKind::kContextual;
    model.feature_layers = contextual_layers;
    model.layer_weights = LayerWeights::uniform(contextual_layers);
  }
  std::size_t fan_in = input_dimension;
  std::vector<std::size_t> sizes = config.hidden_layers;
  sizes.push_back(2);
  for (std::size_t l = 0; l < sizes.size(); ++l) {
    const bool output = l + 1 == sizes.size();
    const double a = std::sqrt((output ? 3.0 : 6.0) / static_cast<double>(fan_in));
    DenseLayer layer;
    layer.weight.resize(static_cast<Eigen::Index>(sizes[l]), static_cast<Eigen::Index>(fan_in));
    for (Eigen::Index c = 0; c < layer.weight.cols(); ++c)
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) layer.weight(r, c) = rng.uniform(-a, a);
    layer.bias = Vector::Zero(static_cast<Eigen::Index>(sizes[l]));
    model.layers.push_back(std::move(layer));
    fan_in = sizes[l];
  }
  return model;
}

namespace detail {

// Column-wise P(relevant) from 2 x B logits, numerically stable.
inline Eigen::RowVectorXd relevant_probability(const Matrix& logits) {
  Eigen::RowVectorXd diff = logits.row(1) - logits.row(0);
  Eigen::RowVectorXd p(diff.size());
  for (Eigen::Index i = 0; i < diff.size(); ++i) {
    const double z = diff[i];
    p[i] = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  }
  return p;
}

// Runs the network on combined inputs X (input_dimension x B). Keeps the
// post-activation of every hidden layer when `activations` is given.
inline Matrix forward_logits(const TaggerModel& model, const Matrix& x, std::vector<Matrix>* activations = nullptr) {
  Matrix h = x;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    Matrix z = layer.weight * h;
    z.colwise() += layer.bias;
    if (l + 1 == model.layers.size()) return z;
    h = z.cwiseMax(0.0);
    if (activations) activations->push_back(h);
  }
  return h;
}

// Combines stacked layer blocks ((layers * d) x B) into d x B inputs.
inline Matrix combine_layers(const Matrix& stacked, const Vector& weights, std::size_t dimension) {
  const auto d = static_cast<Eigen::Index>(dimension);
  Matrix x = Matrix::Zero(d, stacked.cols());
  for (Eigen::Index j = 0; j < weights.size(); ++j) x.noalias() += weights[j] * stacked.middleRows(j * d, d);
  return x;
}

}  // namespace detail

// P(relevant) for one combined feature vector. No dropout at inference.
inline double forward(const TaggerModel& model, const Vector& features) {
  if (static_cast<std::size_t>(features.size()) != model.input_dimension) {
    throw Error(ErrorCode::kDimension, "feature vector has dimension " + std::to_string(features.size()) +
                                           ", model expects " + std::to_string(model.input_dimension));
  }
  return detail::relevant_probability(detail::forward_logits(model, features))[0];
}

// Both class probabilities, {P(irrelevant), P(relevant)}.
inline std::array<double, 2> forward_distribution(const TaggerModel& model, const Vector& features) {
  const double p = forward(model, features);
  return {1.0 - p, p};
}

// P(relevant) for a batch of stacked inputs ((feature_layers * d) x B).
inline Eigen::RowVectorXd forward_stacked(const TaggerModel& model, const Matrix& stacked) {
  if (static_cast<std::size_t>(stacked.rows()) != model.feature_layers * model.input_dimension)
    throw Error(ErrorCode::kDimension, "stacked inputs have " + std::to_string(stacked.rows()) + " rows, model expects " +
                                           std::to_string(model.feature_layers * model.input_dimension));
  const Matrix x = detail::combine_layers(stacked, model.combination(), model.input_dimension);
  return detail::relevant_probability(detail::forward_logits(model, x));
}

// ---------------------------------------------------------------------------
// Loss and gradients

struct Gradients {
  std::vector<DenseLayer> layers;
  Vector layer_weights;  // empty unless the model has trainable layer weights
};

// Class-weighted cross-entropy, averaged over the batch size:
//   L = (1/B) * sum_i c_i * -log p(y_i | x_i),  c_i = relevant weight or 1.
// `dropout_mask` (d x B), when given, multiplies the combined inputs
// element-wise and must already carry the 1/(1-rate) scaling.
inline double loss_and_gradients(const TaggerModel& model, const Matrix& stacked, std::span<const int> labels,
                                 double relevant_class_weight, const Matrix* dropout_mask, Gradients* grads) {
  const Eigen::Index batch = stacked.cols();
  if (static_cast<std::size_t>(batch) != labels.size())
    throw Error(ErrorCode::kAlignment, "batch has " + std::to_string(batch) + " inputs and " +
                                           std::to_string(labels.size()) + " labels");
  const Vector combination = model.combination();
  Matrix x = detail::combine_layers(stacked, combination, model.input_dimension);
  if (dropout_mask) x = x.cwiseProduct(*dropout_mask);

  std::vector<Matrix> acts;
  const Matrix logits = detail::forward_logits(model, x, grads ? &acts : nullptr);

  const double inv_b = 1.0 / static_cast<double>(batch);
  double loss = 0.0;
  Matrix dlogits(2, batch);
  for (Eigen::Index i = 0; i < batch; ++i) {
    const double z0 = logits(0, i), z1 = logits(1, i);
    const double m = std::max(z0, z1);
    const double lse = m + std::log(std::exp(z0 - m) + std::exp(z1 - m));
    const int y = labels[static_cast<std::size_t>(i)];
    const double c = y == kRelevant ? relevant_class_weight : 1.0;
    loss += c * (lse - (y == kRelevant ? z1 : z0));
    const double p1 = std::exp(z1 - lse);
    const double p0 = std::exp(z0 - lse);
    dlogits(0, i) = c * inv_b * (p0 - (y == kIrrelevant ? 1.0 : 0.0));
    dlogits(1, i) = c * inv_b * (p1 - (y == kRelevant ? 1.0 : 0.0));
  }
  loss *= inv_b;
  if (!grads) return loss;

  const std::size_t n_layers = model.layers.size();
  grads->layers.assign(n_layers, DenseLayer{});
  Matrix delta = dlogits;
  for (std::size_t l = n_layers; l-- > 0;) {
    const Matrix& input = l == 0 ? x : acts[l - 1];
    grads->layers[l].weight.noalias() = delta * input.transpose();
    grads->layers[l].bias = delta.rowwise().sum();
    Matrix back = model.layers[l].weight.transpose() * delta;
    if (l > 0) {
      delta = back.cwiseProduct((acts[l - 1].array() > 0.0).cast<double>().matrix());
    } else {
      delta = std::move(back);
    }
  }
  // delta is now dL/dx (after dropout); map back through the mask and the
  // layer combination.
  if (model.layer_weights) {
    Matrix dx = dropout_mask ? Matrix(delta.cwiseProduct(*dropout_mask)) : delta;
    const auto d = static_cast<Eigen::Index>(model.input_dimension);
    grads->layer_weights.resize(combination.size());
    for (Eigen::Index j = 0; j < combination.size(); ++j)
      grads->layer_weights[j] = (dx.cwiseProduct(stacked.middleRows(j * d, d))).sum();
  } else {
    grads->layer_weights.resize(0);
  }
  return loss;
}

inline void apply_sgd(TaggerModel& model, const Gradients& grads, double learning_rate) {
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    model.layers[l].weight.noalias() -= learning_rate * grads.layers[l].weight;
    model.layers[l].bias.noalias() -= learning_rate * grads.layers[l].bias;
  }
  if (model.layer_weights && grads.layer_weights.size() > 0)
    model.layer_weights->weights.noalias() -= learning_rate * grads.layer_weights;
}

// ---------------------------------------------------------------------------
// Training

enum class StopReason { kEarlyStopping, kMaxEpochs };

inline const char* stop_reason_name(StopReason r) {
  return r == StopReason::kEarlyStopping ? "early_stopping" : "max_epochs";
}

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  EvalResult dev;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t stopping_epoch = 0;
  std::size_t best_epoch = 0;
  double best_dev_f2 = 0.0;
  StopReason stop_reason = StopReason::kMaxEpochs;
  std::vector<std::string> train_documents;
  std::vector<std::string> dev_documents;
};

// Sizes of one epoch's balanced sample.
struct EpochSample {
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

inline EpochSample epoch_sample_sizes(std::size_t total_positives, std::size_t total_negatives,
                                      const TaggerConfig& config) {
  EpochSample s;
  s.positives = static_cast<std::size_t>(std::llround(config.positive_fraction * static_cast<double>(total_positives)));
  s.positives = std::clamp<std::size_t>(s.positives, 1, total_positives);
  s.negatives = static_cast<std::size_t>(std::llround(config.negative_ratio * static_cast<double>(s.positives)));
  s.negatives = std::min(s.negatives, total_negatives);
  return s;
}

// Documents held out for early stopping: round(dev_fraction * n), at least
// one, chosen by seeded shuffle. Returns corpus positions {train, dev}.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_dev(std::size_t document_count,
                                                                               double dev_fraction,
                                                                               std::uint64_t seed) {
  if (document_count < 2) throw Error(ErrorCode::kInvalidArgument, "training needs at least 2 documents");
  std::vector<std::size_t> order(document_count);
  for (std::size_t i = 0; i < document_count; ++i) order[i] = i;
  Rng rng(seed ^ 0x6465765f73706c74ULL);
  rng.shuffle(order);
  auto dev_count = static_cast<std::size_t>(std::llround(dev_fraction * static_cast<double>(document_count)));
  dev_count = std::clamp<std::size_t>(dev_count, 1, document_count - 1);
  std::vector<std::size_t> dev(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(dev_count));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(dev_count), order.end());
  std::sort(dev.begin(), dev.end());
  std::sort(train.begin(), train.end());
  return {std::move(train), std::move(dev)};
}

inline Matrix gather_columns(const Matrix& data, std::span<const std::size_t> columns) {
  Matrix out(data.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t i = 0; i < columns.size(); ++i)
    out.col(static_cast<Eigen::Index>(i)) = data.col(static_cast<Eigen::Index>(columns[i]));
  return out;
}

inline Labels flat_gold(const Corpus& corpus) {
  Labels out;
  out.reserve(corpus.token_count());
  for (const auto& doc : corpus.documents()) {
    const auto& g = doc.gold();
    out.insert(out.end(), g.begin(), g.end());
  }
  return out;
}

inline Eigen::RowVectorXd score_inputs(const TaggerModel& model, const TokenInputs& inputs,
                                       std::size_t chunk = 4096) {
  Eigen::RowVectorXd out(static_cast<Eigen::Index>(inputs.token_count()));
  for (std::size_t start = 0; start < inputs.token_count(); start += chunk) {
    const auto n = static_cast<Eigen::Index>(std::min(chunk, inputs.token_count() - start));
    out.segment(static_cast<Eigen::Index>(start), n) =
        forward_stacked(model, inputs.data.middleCols(static_cast<Eigen::Index>(start), n));
  }
  return out;
}

inline EvalResult evaluate_inputs(const TaggerModel& model, const TokenInputs& inputs, std::span<const int> gold,
                                  double threshold) {
  const Eigen::RowVectorXd scores = score_inputs(model, inputs);
  Labels predicted(gold.size());
  for (std::size_t i = 0; i < gold.size(); ++i)
    predicted[i] = scores[static_cast<Eigen::Index>(i)] >= threshold ? kRelevant : kIrrelevant;
  return evaluate(predicted, gold, 2.0);
}

inline std::pair<TaggerModel, TrainReport> train(const Corpus& corpus, const FeatureSource& source,
                                                 const TaggerConfig& config) {
  config.validate();
  for (const auto& doc : corpus.documents())
    if (!doc.has_gold()) throw Error(ErrorCode::kInvalidArgument, "training document has no gold labels", doc.id());

  auto [train_idx, dev_idx] = split_dev(corpus.size(), config.dev_fraction, config.seed);
  const Corpus train_corpus = corpus.subset(train_idx);
  const Corpus dev_corpus = corpus.subset(dev_idx);

  const TokenInputs train_inputs = build_token_inputs(train_corpus, source);
  const TokenInputs dev_inputs = build_token_inputs(dev_corpus, source);
  const Labels train_gold = flat_gold(train_corpus);
  const Labels dev_gold = flat_gold(dev_corpus);

  std::vector<std::size_t> positives, negatives;
  for (std::size_t i = 0; i < train_gold.size(); ++i) (train_gold[i] == kRelevant ? positives : negatives).push_back(i);
  if (positives.empty()) throw Error(ErrorCode::kInvalidArgument, "training split has no relevant tokens");
  if (negatives.empty()) throw Error(ErrorCode::kInvalidArgument, "training split has no irrelevant tokens");

  Rng init_rng(config.seed);
  Rng sample_rng(config.seed ^ 0x73616d706c657273ULL);
  Rng dropout_rng(config.seed ^ 0x64726f706f757473ULL);

  const bool contextual = std::holds_alternative<ContextualFeatures>(source);
  TaggerModel model = init_model(train_inputs.dimension, config, init_rng, contextual ? train_inputs.layers : 0);
  if (const auto* s = std::get_if<StaticFeatures>(&source)) model.window = s->window;
  if (const auto* c = std::get_if<ContextualFeatures>(&source)) {
    if (static_cast<std::size_t>(c->layer_weights.weights.size()) == train_inputs.layers)
      model.layer_weights = c->layer_weights;
  }

  TrainReport report;
  for (auto i : train_idx) report.train_documents.push_back(corpus.documents()[i].id());
  for (auto i : dev_idx) report.dev_documents.push_back(corpus.documents()[i].id());

  TaggerModel best = model;
  double best_f2 = -std::numeric_limits<double>::infinity();
  std::size_t wait = 0;
  const double keep = 1.0 - config.dropout_rate;
  const auto sizes = epoch_sample_sizes(positives.size(), negatives.size(), config);

  std::vector<std::size_t> sample;
  std::vector<int> batch_labels;
  Gradients grads;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    sample_rng.shuffle(positives);
    sample_rng.shuffle(negatives);
    sample.assign(positives.begin(), positives.begin() + static_cast<std::ptrdiff_t>(sizes.positives));
    sample.insert(sample.end(), negatives.begin(), negatives.begin() + static_cast<std::ptrdiff_t>(sizes.negatives));
    sample_rng.shuffle(sample);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < sample.size(); start += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, sample.size() - start);
      std::span<const std::size_t> cols(sample.data() + start, n);
      const Matrix stacked = gather_columns(train_inputs.data, cols);
      batch_labels.resize(n);
      for (std::size_t i = 0; i < n; ++i) batch_labels[i] = train_gold[cols[i]];

      Matrix mask;
      const Matrix* mask_ptr = nullptr;
      if (config.dropout_rate > 0.0) {
        mask.resize(static_cast<Eigen::Index>(model.input_dimension), static_cast<Eigen::Index>(n));
        for (Eigen::Index c = 0; c < mask.cols(); ++c)
          for (Eigen::Index r = 0; r < mask.rows(); ++r) mask(r, c) = dropout_rng.uniform() < keep ? 1.0 / keep : 0.0;
        mask_ptr = &mask;
      }
      epoch_loss += static_cast<double>(n) *
                    loss_and_gradients(model, stacked, batch_labels, config.relevant_class_weight, mask_ptr, &grads);
      apply_sgd(model, grads, config.learning_rate);
    }

    EpochRecord record;
    record.epoch = epoch;
    record.positives = sizes.positives;
    record.negatives = sizes.negatives;
    record.train_loss = epoch_loss / static_cast<double>(sample.size());
    record.dev = evaluate_inputs(model, dev_inputs, dev_gold, config.eval_threshold);
    report.epochs.push_back(record);

    if (record.dev.f_beta > best_f2 + config.early_stop_delta) {
      best_f2 = record.dev.f_beta;
      best = model;
      report.best_epoch = epoch;
      wait = 0;
    } else {
      ++wait;
      if (wait >= config.patience) {
        report.stop_reason = StopReason::kEarlyStopping;
        report.stopping_epoch = epoch;
        break;
      }
    }
    report.stopping_epoch = epoch;
  }
  report.best_dev_f2 = best_f2;
  best.epochs_run = report.stopping_epoch;
  best.best_epoch = report.best_epoch;
  best.best_dev_f2 = best_f2;
  return {std::move(best), std::move(report)};
}

// ---------------------------------------------------------------------------
// Tagging

inline void check_source_matches(const TaggerModel& model, const FeatureSource& source) {
  const std::size_t dim = source_dimension(source);
  if (dim != model.input_dimension)
    throw Error(ErrorCode::kDimension, "features have dimension " + std::to_string(dim) + ", model expects " +
                                           std::to_string(model.input_dimension));
  const bool contextual = std::holds_alternative<ContextualFeatures>(source);
  if (contextual != (model.feature_kind == FeatureKind::kContextual))
    throw Error(ErrorCode::kDimension, std::string("model was trained on ") +
                                           (model.feature_kind == FeatureKind::kContextual ? "contextual" : "static") +
                                           " features");
  if (source_layers(source) != model.feature_layers)
    throw Error(ErrorCode::kDimension, "features have " + std::to_string(source_layers(source)) +
                                           " layers, model expects " + std::to_string(model.feature_layers));
}

// One score per token. Documents are scored independently, so the result
// does not depend on corpus order or batching.
inline ScoreSet tag_corpus(const TaggerModel& model, const Corpus& corpus, const FeatureSource& source,
                           std::string model_id = "model") {
  std::vector<DocumentScores> docs;
  if (corpus.empty()) return ScoreSet(std::move(model_id), std::move(docs));
  check_source_matches(model, source);
  docs.reserve(corpus.size());
  for (const auto& doc : corpus.documents()) {
    DocumentScores out{doc.id(), {}};
    if (doc.token_count() > 0) {
      const TokenInputs inputs = build_token_inputs(Corpus(corpus.name(), {doc}), source);
      const Eigen::RowVectorXd s = score_inputs(model, inputs);
      out.scores.assign(s.data(), s.data() + s.size());
    }
    docs.push_back(std::move(out));
  }
  return ScoreSet(std::move(model_id), std::move(docs));
}

// ---------------------------------------------------------------------------
// Persistence: a versioned JSON document. Doubles are written with
// round-trip precision, so a reloaded model scores identically.

inline constexpr const char* kModelFormat = "hare-tagger";
inline constexpr int kModelVersion = 1;

inline nlohmann::json model_to_json(const TaggerModel& model) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : model.layers) {
    std::vector<double> w(static_cast<std::size_t>(layer.weight.size()));
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c)
        w[static_cast<std::size_t>(r * layer.weight.cols() + c)] = layer.weight(r, c);
    layers.push_back({{"rows", layer.weight.rows()},
                      {"cols", layer.weight.cols()},
                      {"weight", std::move(w)},
                      {"bias", std::vector<double>(layer.bias.data(), layer.bias.data() + layer.bias.size())}});
  }
  nlohmann::json j{
      {"format", kModelFormat},
      {"version", kModelVersion},
      {"input_dimension", model.input_dimension},
      {"features",
       {{"kind", model.feature_kind == FeatureKind::kStatic ? "static" : "contextual"},
        {"window", model.window},
        {"layers", model.feature_layers}}},
      {"config", config_to_json(model.config)},
      {"layers", std::move(layers)},
      {"training",
       {{"epochs_run", model.epochs_run}, {"best_epoch", model.best_epoch}, {"best_dev_f2", model.best_dev_f2}}},
      {"extras", model.extras}};
  if (model.layer_weights) {
    const auto& w = model.layer_weights->weights;
    j["layer_weights"] = std::vector<double>(w.data(), w.data() + w.size());
  } else {
    j["layer_weights"] = nullptr;
  }
  return j;
}

inline TaggerModel model_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", "") != kModelFormat)
    throw Error(ErrorCode::kCorruptFile, "not a tagger model file");
  if (j.value("version", -1) != kModelVersion)
    throw Error(ErrorCode::kVersion, "model file version " + std::to_string(j.value("version", -1)) +
                                         ", expected " + std::to_string(kModelVersion));
  TaggerModel model;
  try {
    model.input_dimension = j.at("input_dimension").get<std::size_t>();
    const auto& f = j.at("features");
    model.feature_kind = f.at("kind").get<std::string>() == "contextual" ? FeatureKind::kContextual : FeatureKind::kStatic;
    model.window = f.at("window").get<std::size_t>();
    model.feature_layers = f.at("layers").get<std::size_t>();
    model.config = config_from_json(j.at("config"));
    std::size_t fan_in = model.input_dimension;
    for (const auto& lj : j.at("layers")) {
      DenseLayer layer;
      const auto rows = lj.at("rows").get<Eigen::Index>();
      const auto cols = lj.at("cols").get<Eigen::Index>();
      if (static_cast<std::size_t>(cols) != fan_in) throw Error(ErrorCode::kCorruptFile, "layer shapes do not chain");
      const auto w = lj.at("weight").get<std::vector<double>>();
      const auto b = lj.at("bias").get<std::vector<double>>();
      if (w.size() != static_cast<std::size_t>(rows * cols) || b.size() != static_cast<std::size_t>(rows))
        throw Error(ErrorCode::kCorruptFile, "layer parameter count does not match its shape");
      layer.weight.resize(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) layer.weight(r, c) = w[static_cast<std::size_t>(r * cols + c)];
      layer.bias = Eigen::Map<const Vector>(b.data(), rows);
      model.layers.push_back(std::move(layer));
      fan_in = static_cast<std::size_t>(rows);
    }
    if (model.layers.empty() || fan_in != 2) throw Error(ErrorCode::kCorruptFile, "model must end in a 2-way layer");
    if (!j.at("layer_weights").is_null()) {
      const auto w = j.at("layer_weights").get<std::vector<double>>();
      if (w.size() != model.feature_layers) throw Error(ErrorCode::kCorruptFile, "layer weight count mismatch");
      model.layer_weights = LayerWeights{Eigen::Map<const Vector>(w.data(), static_cast<Eigen::Index>(w.size()))};
    }
    const auto& t = j.at("training");
    model.epochs_run = t.at("epochs_run").get<std::size_t>();
    model.best_epoch = t.at("best_epoch").get<std::size_t>();
    model.best_dev_f2 = t.at("best_dev_f2").get<double>();
    model.extras = j.value("extras", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kCorruptFile, std::string("model file is incomplete: ") + e.what());
  }
  return model;
}

inline void save_model(const TaggerModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write model file", path.string());
  out << model_to_json(model).dump() << '\n';
}

inline TaggerModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open model file", path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kCorruptFile, std::string("model file is corrupt: ") + e.what(), path.string());
  }
  return model_from_json(j);
}

}  // namespace hare
