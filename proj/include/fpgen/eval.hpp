#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fpgen/classifiers.hpp"
#include "fpgen/image.hpp"
#include "fpgen/manifest.hpp"

namespace fpgen {

// Row-major flatten; the feature at index r * cols + c is image(r, c).
Eigen::VectorXf featurize(const ImageF& image);
ImageF unfeaturize(const Eigen::VectorXf& features, Eigen::Index rows, Eigen::Index cols);

struct LabeledSet {
  FeatureMatrix x;
  LabelVector y;
  std::vector<std::string> ids;
  std::vector<int> subjects;  // -1 for synthetic samples

  Eigen::Index size() const { return x.rows(); }
};

struct Split {
  LabeledSet train;
  LabeledSet test;
  int real_train_subjects = 0;
  int real_test_subjects = 0;
};

inline constexpr int kReferenceTrainSubjects = 2200;
inline constexpr int kReferenceTestSubjects = 500;

struct SplitConfig {
  std::uint64_t seed = 0;
  bool use_lq = false;  // featurize the 64x64 side instead of 256x256
};

// One image with its provenance, already loaded.
struct Sample {
  ImageF image;
  std::string id;
  std::optional<int> subject;
};

// Real subjects are shuffled and split floor(S * 2200 / 2700) : rest. Synthetic
// samples are split in the same ratio. The larger test class is subsampled to the
// size of the smaller. Labels: real 0, synthetic 1.
Split make_split(std::span<const Sample> real, std::span<const Sample> synth, const SplitConfig& cfg);
Split make_split(const DatasetManifest& real, const DatasetManifest& synth, const SplitConfig& cfg);

std::unique_ptr<Classifier> train_classifier(const ClassifierSpec& spec, const Split& split, const TrainOptions& opts);

struct Confusion {
  long tp = 0, fp = 0, tn = 0, fn = 0;
};

struct MetricsReport {
  ClassifierSpec spec;
  Confusion confusion;
  double acc = 0.0;  // percentages
  double fpr = 0.0;
  double fnr = 0.0;
  double train_acc = 0.0;
  bool converged = true;
};

// Positive class = synthetic (label 1).
Confusion confusion_counts(const LabelVector& predicted, const LabelVector& truth);
MetricsReport metrics_from_confusion(const Confusion& c, const ClassifierSpec& spec = {});
MetricsReport evaluate(const Classifier& model, const LabeledSet& test);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::string label;
  std::vector<RocPoint> points;  // from (0,0) to (1,1), fpr non-decreasing
  double auc = 0.0;
};

// Thresholds sweep every distinct score from high to low; equal scores enter together.
RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels);

struct ReportBundle {
  std::string table;
  std::vector<std::pair<std::string, std::string>> roc_files;  // file name, contents
};

// Markdown table with columns Model | Description | ACC | FPR | FNR (two decimals)
// and, when curves are given, one line-delimited JSON point file per curve plus a
// random-guess diagonal.
ReportBundle render_report(std::span<const MetricsReport> reports, std::span<const RocCurve> curves);
void write_report(const ReportBundle& bundle, std::span<const MetricsReport> reports,
                  const std::filesystem::path& out_dir);

struct EvaluationConfig {
  std::vector<ClassifierSpec> models = ClassifierSpec::canonical_set();
  SplitConfig split;
  TrainOptions train;
  bool margin_roc = false;  // also emit a ROC curve for the SVM margin
};

struct EvaluationResult {
  std::vector<MetricsReport> reports;
  std::vector<RocCurve> curves;
};

EvaluationResult run_evaluation(const Split& split, const EvaluationConfig& cfg);

}  // namespace fpgen
