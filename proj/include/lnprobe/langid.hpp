#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lnprobe/embstore.hpp"

namespace lnprobe {

struct LabeledRepr {
  SentenceRepr repr;
  std::string lang;
};

struct TrainingConfig {
  std::size_t epochs = 10;
  double learning_rate = 0.01;
  std::size_t batch_size = 256;
  std::uint64_t seed = 42;
  double l2 = 1e-4;
};

struct TrainingMeta {
  TrainingConfig config;
  double final_loss = 0.0;
  std::vector<double> loss_history;  // full-data objective; [0] before training
};

// Multinomial logistic regression: scores = x^T weights + bias.
struct LinearClassifier {
  Eigen::MatrixXd weights;  // [hidden_dim x num_classes]
  Eigen::VectorXd bias;     // [num_classes]
  std::vector<std::string> class_labels;
  TrainingMeta meta;

  Eigen::VectorXd scores(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  // argmax of scores; ties go to the earliest class in class_labels.
  std::size_t predict(const Eigen::Ref<const Eigen::VectorXd>& x) const;
};

// Mean cross-entropy + (l2 / 2) * ||weights||^2, the objective minimized by
// train_classifier.
double classifier_objective(const LinearClassifier& clf, std::span<const LabeledRepr> data, double l2);

// Mini-batch gradient descent from zero weights with a fixed learning rate.
// Class labels are the sorted distinct languages; the shuffle of each epoch
// is drawn from a seeded mt19937_64, so runs are reproducible.
LinearClassifier train_classifier(std::span<const LabeledRepr> data, const TrainingConfig& config = {});

struct ClassifierEvaluation {
  double accuracy = 0.0;
  std::size_t total = 0;
  std::map<std::string, double> per_language;
  std::map<std::string, std::map<std::string, std::size_t>> confusion;  // gold -> predicted -> count
};

ClassifierEvaluation evaluate_classifier(const LinearClassifier& clf, std::span<const LabeledRepr> data);

void save_classifier(const LinearClassifier& clf, const std::filesystem::path& basename);
LinearClassifier load_classifier(const std::filesystem::path& basename);

}  // namespace lnprobe
