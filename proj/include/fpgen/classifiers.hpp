#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace fpgen {

// Rows are samples.
using FeatureMatrix = Eigen::MatrixXf;
using LabelVector = Eigen::VectorXi;  // 0 = real, 1 = synthetic

enum class ClassifierKind { LogRegL2, LinearSvmL2C1, RandomForest10, Dnn };

struct ClassifierSpec {
  ClassifierKind kind = ClassifierKind::LogRegL2;
  std::vector<int> hidden;  // Dnn only

  std::string name() const;         // "Logistic Regression", "4-Layer DNN", ...
  std::string description() const;  // "L2 regularization", "Hidden Layers: 100, 20", ...
  std::string key() const;          // short identifier: logreg, svm, rf, dnn4, dnn:100-20 ...
  bool canonical() const;
  bool operator==(const ClassifierSpec&) const = default;

  static ClassifierSpec dnn(std::vector<int> hidden) { return {ClassifierKind::Dnn, std::move(hidden)}; }
  // The six configurations of the indistinguishability table, in table order.
  static std::vector<ClassifierSpec> canonical_set();
  // Accepts the keys produced by key(); throws ConfigError otherwise.
  static ClassifierSpec parse(const std::string& key);
};

struct LogRegOptions {
  double c = 1.0;  // inverse regularisation strength; intercept is not penalised
  int max_iter = 500;
  double tol = 1e-4;  // on the max-norm of the gradient
  int history = 10;
};

struct SvmOptions {
  double c = 1.0;
  int max_iter = 1000;
  double tol = 1e-4;
};

struct ForestOptions {
  int trees = 10;
  int min_samples_split = 2;
  int max_depth = 0;  // 0 = grow until pure
};

enum class MlpOptimizer { Adam, Sgd };

struct MlpOptions {
  MlpOptimizer optimizer = MlpOptimizer::Adam;
  double lr = 1e-3;
  int batch_size = 200;
  int max_epochs = 200;
  int patience = 10;   // epochs without improvement by more than tol
  double tol = 1e-4;
  double l2 = 1e-4;
};

struct TrainOptions {
  std::uint64_t seed = 0;
  LogRegOptions logreg;
  SvmOptions svm;
  ForestOptions forest;
  MlpOptions mlp;
};

class Classifier {
 public:
  virtual ~Classifier() = default;

  // Confidence for label 1. Probability for every kind except the SVM margin.
  virtual double score(const Eigen::Ref<const Eigen::VectorXf>& x) const = 0;
  virtual int predict(const Eigen::Ref<const Eigen::VectorXf>& x) const = 0;
  virtual bool calibrated_scores() const { return true; }

  Eigen::VectorXd scores(const FeatureMatrix& x) const;
  LabelVector predictions(const FeatureMatrix& x) const;

  const ClassifierSpec& spec() const { return spec_; }
  double train_acc() const { return train_acc_; }
  bool converged() const { return converged_; }
  int iterations() const { return iterations_; }

 protected:
  friend std::unique_ptr<Classifier> fit_classifier(const ClassifierSpec&, const FeatureMatrix&, const LabelVector&,
                                                    const TrainOptions&);
  ClassifierSpec spec_;
  double train_acc_ = 0.0;
  bool converged_ = true;
  int iterations_ = 0;
};

// Fits one model; non-convergence is recorded on the model, not thrown.
std::unique_ptr<Classifier> fit_classifier(const ClassifierSpec& spec, const FeatureMatrix& x, const LabelVector& y,
                                           const TrainOptions& opts);

// Hidden widths of a fitted DNN; empty for other kinds.
std::vector<int> hidden_layer_sizes(const Classifier& model);

}  // namespace fpgen
