#include "lnprobe/langid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "lnprobe/error.hpp"
#include "model_io.hpp"

namespace lnprobe {

Eigen::VectorXd LinearClassifier::scores(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != weights.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "classifier expects dimension " +
                                                  std::to_string(weights.rows()) + ", got " +
                                                  std::to_string(x.size()));
  }
  return weights.transpose() * x + bias;
}

std::size_t LinearClassifier::predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const Eigen::VectorXd s = scores(x);
  std::size_t best = 0;
  for (Eigen::Index k = 1; k < s.size(); ++k) {
    if (s(k) > s(static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(k);
  }
  return best;
}

namespace {

struct Design {
  Eigen::MatrixXd x;            // [N x D]
  std::vector<std::size_t> y;   // class index per row
};

Design make_design(std::span<const LabeledRepr> data, const std::vector<std::string>& labels) {
  Design design;
  const auto dim = data.front().repr.vector.size();
  design.x.resize(static_cast<Eigen::Index>(data.size()), dim);
  design.y.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& example = data[i];
    if (example.repr.vector.size() != dim) {
      throw Error(ErrorCode::DimensionMismatch,
                  "example " + std::to_string(i) + " has dimension " +
                      std::to_string(example.repr.vector.size()) + ", expected " +
                      std::to_string(dim));
    }
    const auto it = std::lower_bound(labels.begin(), labels.end(), example.lang);
    if (it == labels.end() || *it != example.lang) {
      throw Error(ErrorCode::UnknownLabel, "example " + std::to_string(i) + " has unknown label " +
                                               example.lang);
    }
    design.x.row(static_cast<Eigen::Index>(i)) = example.repr.vector.transpose();
    design.y.push_back(static_cast<std::size_t>(it - labels.begin()));
  }
  return design;
}

// Row-wise softmax, shifted by the row maximum.
Eigen::MatrixXd softmax_rows(Eigen::MatrixXd scores) {
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const double top = scores.row(i).maxCoeff();
    scores.row(i) = (scores.row(i).array() - top).exp().matrix();
    scores.row(i) /= scores.row(i).sum();
  }
  return scores;
}

double objective(const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias, const Design& d, double l2) {
  Eigen::MatrixXd scores = d.x * weights;
  scores.rowwise() += bias.transpose();
  double loss = 0.0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const double top = scores.row(i).maxCoeff();
    const double log_norm = top + std::log((scores.row(i).array() - top).exp().sum());
    loss += log_norm - scores(i, static_cast<Eigen::Index>(d.y[static_cast<std::size_t>(i)]));
  }
  loss /= static_cast<double>(scores.rows());
  return loss + 0.5 * l2 * weights.squaredNorm();
}

// Unbiased draw from [0, bound) independent of the standard library's
// distribution implementation.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::mt19937_64::max() - std::mt19937_64::max() % bound;
  std::uint64_t draw;
  do {
    draw = rng();
  } while (draw >= limit);
  return draw % bound;
}

void shuffle(std::vector<std::size_t>& order, std::mt19937_64& rng) {
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[bounded(rng, i)]);
  }
}

}  // namespace

double classifier_objective(const LinearClassifier& clf, std::span<const LabeledRepr> data, double l2) {
  if (data.empty()) throw Error(ErrorCode::EmptyInput, "objective over an empty data set");
  return objective(clf.weights, clf.bias, make_design(data, clf.class_labels), l2);
}

LinearClassifier train_classifier(std::span<const LabeledRepr> data, const TrainingConfig& config) {
  if (data.empty()) throw Error(ErrorCode::EmptyInput, "no training examples");
  if (config.batch_size < 1) throw Error(ErrorCode::InvariantViolation, "batch size must be >= 1");
  std::set<std::string> distinct;
  for (const auto& example : data) distinct.insert(example.lang);
  if (distinct.size() < 2) {
    throw Error(ErrorCode::InvariantViolation, "training data needs at least two languages");
  }

  LinearClassifier clf;
  clf.class_labels.assign(distinct.begin(), distinct.end());
  const Design design = make_design(data, clf.class_labels);
  const Eigen::Index dim = design.x.cols();
  const auto classes = static_cast<Eigen::Index>(clf.class_labels.size());
  clf.weights = Eigen::MatrixXd::Zero(dim, classes);
  clf.bias = Eigen::VectorXd::Zero(classes);
  clf.meta.config = config;
  clf.meta.loss_history.push_back(objective(clf.weights, clf.bias, design, config.l2));

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(order, rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const auto rows = static_cast<Eigen::Index>(stop - start);
      Eigen::MatrixXd xb(rows, dim);
      for (Eigen::Index r = 0; r < rows; ++r) xb.row(r) = design.x.row(static_cast<Eigen::Index>(order[start + r]));

      Eigen::MatrixXd scores = xb * clf.weights;
      scores.rowwise() += clf.bias.transpose();
      Eigen::MatrixXd residual = softmax_rows(std::move(scores));
      for (Eigen::Index r = 0; r < rows; ++r) {
        residual(r, static_cast<Eigen::Index>(design.y[order[start + r]])) -= 1.0;
      }
      const double scale = 1.0 / static_cast<double>(rows);
      const Eigen::MatrixXd grad_w = scale * (xb.transpose() * residual) + config.l2 * clf.weights;
      const Eigen::VectorXd grad_b = scale * residual.colwise().sum().transpose();
      clf.weights -= config.learning_rate * grad_w;
      clf.bias -= config.learning_rate * grad_b;
    }
    clf.meta.loss_history.push_back(objective(clf.weights, clf.bias, design, config.l2));
  }
  clf.meta.final_loss = clf.meta.loss_history.back();
  return clf;
}

ClassifierEvaluation evaluate_classifier(const LinearClassifier& clf, std::span<const LabeledRepr> data) {
  if (data.empty()) throw Error(ErrorCode::EmptyInput, "no evaluation examples");
  ClassifierEvaluation eval;
  std::map<std::string, std::size_t> seen, correct;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& example = data[i];
    if (std::find(clf.class_labels.begin(), clf.class_labels.end(), example.lang) ==
        clf.class_labels.end()) {
      throw Error(ErrorCode::UnknownLabel,
                  "example " + std::to_string(i) + " has label " + example.lang +
                      " unknown to the classifier");
    }
    const auto& predicted = clf.class_labels[clf.predict(example.repr.vector)];
    ++eval.confusion[example.lang][predicted];
    ++seen[example.lang];
    if (predicted == example.lang) ++correct[example.lang];
  }
  std::size_t hits = 0;
  for (const auto& [lang, count] : seen) {
    hits += correct[lang];
    eval.per_language[lang] = static_cast<double>(correct[lang]) / static_cast<double>(count);
  }
  eval.total = data.size();
  eval.accuracy = static_cast<double>(hits) / static_cast<double>(data.size());
  return eval;
}

void save_classifier(const LinearClassifier& clf, const std::filesystem::path& basename) {
  const auto& cfg = clf.meta.config;
  nlohmann::json manifest = {
      {"format", "lnprobe-linear-classifier"},
      {"version", 1},
      {"class_labels", clf.class_labels},
      {"input_dim", clf.weights.rows()},
      {"num_classes", clf.weights.cols()},
      {"training",
       {{"epochs", cfg.epochs},
        {"learning_rate", cfg.learning_rate},
        {"batch_size", cfg.batch_size},
        {"seed", cfg.seed},
        {"l2", cfg.l2},
        {"final_loss", clf.meta.final_loss},
        {"loss_history", clf.meta.loss_history}}},
      {"layout", "weights row-major [input_dim x num_classes], then bias [num_classes]"},
  };
  std::vector<double> values;
  values.reserve(clf.weights.size() + clf.bias.size());
  for (Eigen::Index r = 0; r < clf.weights.rows(); ++r) {
    for (Eigen::Index c = 0; c < clf.weights.cols(); ++c) values.push_back(clf.weights(r, c));
  }
  for (Eigen::Index c = 0; c < clf.bias.size(); ++c) values.push_back(clf.bias(c));
  detail::save_model_pair(basename, std::move(manifest), values);
}

LinearClassifier load_classifier(const std::filesystem::path& basename) {
  auto pair = detail::load_model_pair(basename, "lnprobe-linear-classifier");
  LinearClassifier clf;
  try {
    const auto& m = pair.manifest;
    clf.class_labels = m.at("class_labels").get<std::vector<std::string>>();
    const auto in = m.at("input_dim").get<Eigen::Index>();
    const auto k = m.at("num_classes").get<Eigen::Index>();
    if (k != static_cast<Eigen::Index>(clf.class_labels.size()) ||
        static_cast<Eigen::Index>(pair.values.size()) != in * k + k) {
      throw Error(ErrorCode::InvariantViolation, basename.string() + ": shape mismatch");
    }
    const auto& t = m.at("training");
    clf.meta.config.epochs = t.at("epochs").get<std::size_t>();
    clf.meta.config.learning_rate = t.at("learning_rate").get<double>();
    clf.meta.config.batch_size = t.at("batch_size").get<std::size_t>();
    clf.meta.config.seed = t.at("seed").get<std::uint64_t>();
    clf.meta.config.l2 = t.at("l2").get<double>();
    clf.meta.final_loss = t.at("final_loss").get<double>();
    clf.meta.loss_history = t.at("loss_history").get<std::vector<double>>();
    clf.weights.resize(in, k);
    std::size_t idx = 0;
    for (Eigen::Index r = 0; r < in; ++r) {
      for (Eigen::Index c = 0; c < k; ++c) clf.weights(r, c) = pair.values[idx++];
    }
    clf.bias.resize(k);
    for (Eigen::Index c = 0; c < k; ++c) clf.bias(c) = pair.values[idx++];
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, basename.string() + ".json: " + e.what());
  }
  return clf;
}

}  // namespace lnprobe
