#include "fpgen/eval.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "fpgen/data_prep.hpp"
#include "fpgen/error.hpp"
#include "fpgen/random.hpp"
#include "json.hpp"

namespace fpgen {

namespace fs = std::filesystem;
using Eigen::Index;

Eigen::VectorXf featurize(const ImageF& image) {
  return Eigen::Map<const Eigen::VectorXf>(image.data(), image.size());
}

ImageF unfeaturize(const Eigen::VectorXf& features, Index rows, Index cols) {
  if (features.size() != rows * cols) throw Error(ErrorCode::ShapeMismatch, "feature length does not match image shape");
  return Eigen::Map<const ImageF>(features.data(), rows, cols);
}

namespace {

LabeledSet assemble(std::span<const Sample> real, const std::vector<std::size_t>& real_idx, std::span<const Sample> synth,
                    const std::vector<std::size_t>& synth_idx) {
  LabeledSet set;
  const Index rows = Index(real_idx.size() + synth_idx.size());
  Index cols = -1, r = 0;
  auto add = [&](const Sample& s, int label) {
    if (cols < 0) {
      cols = s.image.size();
      set.x.resize(rows, cols);
      set.y.resize(rows);
    }
    if (s.image.size() != cols) throw Error(ErrorCode::ShapeMismatch, "sample " + s.id + " has a different feature length");
    set.x.row(r) = featurize(s.image).transpose();
    set.y[r++] = label;
    set.ids.push_back(s.id);
    set.subjects.push_back(label == 0 ? *s.subject : -1);
  };
  for (auto i : real_idx) add(real[i], 0);
  for (auto i : synth_idx) add(synth[i], 1);
  return set;
}

// floor(count * 2200 / 2700)
std::size_t train_share(std::size_t count) {
  return count * kReferenceTrainSubjects / (kReferenceTrainSubjects + kReferenceTestSubjects);
}

}  // namespace

Split make_split(std::span<const Sample> real, std::span<const Sample> synth, const SplitConfig& cfg) {
  std::set<int> subject_set;
  for (const auto& s : real) {
    if (!s.subject) throw Error(ErrorCode::MissingSubject, "real sample " + s.id + " has no subject id");
    subject_set.insert(*s.subject);
  }
  std::vector<int> subjects(subject_set.begin(), subject_set.end());
  const std::size_t train_subjects = train_share(subjects.size());
  if (train_subjects == 0 || train_subjects == subjects.size()) {
    throw Error(ErrorCode::TooFewSubjects,
                std::to_string(subjects.size()) + " real subjects cannot be split into non-empty train and test");
  }
  const std::size_t synth_train = train_share(synth.size());
  if (synth_train == 0 || synth_train == synth.size()) {
    throw Error(ErrorCode::DatasetTooSmall,
                std::to_string(synth.size()) + " synthetic samples cannot be split into non-empty train and test");
  }

  Rng rng = make_rng(cfg.seed, 71);
  std::shuffle(subjects.begin(), subjects.end(), rng);
  const std::set<int> train_set(subjects.begin(), subjects.begin() + std::ptrdiff_t(train_subjects));

  std::vector<std::size_t> real_train, real_test;
  for (std::size_t i = 0; i < real.size(); ++i) (train_set.contains(*real[i].subject) ? real_train : real_test).push_back(i);

  std::vector<std::size_t> synth_order(synth.size());
  std::iota(synth_order.begin(), synth_order.end(), 0);
  std::shuffle(synth_order.begin(), synth_order.end(), rng);
  std::vector<std::size_t> synth_train_idx(synth_order.begin(), synth_order.begin() + std::ptrdiff_t(synth_train));
  std::vector<std::size_t> synth_test_idx(synth_order.begin() + std::ptrdiff_t(synth_train), synth_order.end());
  std::sort(synth_train_idx.begin(), synth_train_idx.end());

  // Balance the test classes.
  const std::size_t k = std::min(real_test.size(), synth_test_idx.size());
  auto subsample = [&](std::vector<std::size_t>& v) {
    std::shuffle(v.begin(), v.end(), rng);
    v.resize(k);
    std::sort(v.begin(), v.end());
  };
  subsample(real_test);
  subsample(synth_test_idx);

  Split split;
  split.real_train_subjects = int(train_subjects);
  split.real_test_subjects = int(subjects.size() - train_subjects);
  split.train = assemble(real, real_train, synth, synth_train_idx);
  split.test = assemble(real, real_test, synth, synth_test_idx);
  if (split.train.x.cols() != split.test.x.cols()) throw Error(ErrorCode::ShapeMismatch, "train/test feature lengths differ");
  return split;
}

namespace {

std::vector<Sample> load_samples(const DatasetManifest& m, bool use_lq) {
  std::vector<Sample> out;
  out.reserve(m.size());
  for (const auto& e : m.entries) {
    Sample s;
    s.id = e.id;
    s.subject = e.subject;
    if (!use_lq) {
      s.image = load_hq(m, e);
    } else if (!e.lq_path.empty()) {
      s.image = load_lq(m, e);
    } else {
      s.image = to_unit<float>(derive_lq_u8(quantize_u8(load_hq(m, e)), kScaleFactor));
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

Split make_split(const DatasetManifest& real, const DatasetManifest& synth, const SplitConfig& cfg) {
  const auto r = load_samples(real, cfg.use_lq);
  const auto s = load_samples(synth, cfg.use_lq);
  return make_split(r, s, cfg);
}

std::unique_ptr<Classifier> train_classifier(const ClassifierSpec& spec, const Split& split, const TrainOptions& opts) {
  auto model = fit_classifier(spec, split.train.x, split.train.y, opts);
  if (!model->converged()) spdlog::warn("{} did not converge after {} iterations", spec.name(), model->iterations());
  return model;
}

Confusion confusion_counts(const LabelVector& predicted, const LabelVector& truth) {
  if (predicted.size() != truth.size()) throw Error(ErrorCode::ShapeMismatch, "prediction/label count mismatch");
  Confusion c;
  for (Index i = 0; i < truth.size(); ++i) {
    const bool p = predicted[i] == 1, t = truth[i] == 1;
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

MetricsReport metrics_from_confusion(const Confusion& c, const ClassifierSpec& spec) {
  MetricsReport r;
  r.spec = spec;
  r.confusion = c;
  const long total = c.tp + c.fp + c.tn + c.fn;
  r.acc = total ? 100.0 * double(c.tp + c.tn) / double(total) : 0.0;
  r.fpr = c.fp + c.tn ? 100.0 * double(c.fp) / double(c.fp + c.tn) : 0.0;
  r.fnr = c.fn + c.tp ? 100.0 * double(c.fn) / double(c.fn + c.tp) : 0.0;
  return r;
}

MetricsReport evaluate(const Classifier& model, const LabeledSet& test) {
  if (test.size() == 0) throw Error(ErrorCode::EmptyBatch, "empty test set");
  MetricsReport r = metrics_from_confusion(confusion_counts(model.predictions(test.x), test.y), model.spec());
  r.train_acc = model.train_acc();
  r.converged = model.converged();
  return r;
}

RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error(ErrorCode::ShapeMismatch, "score/label count mismatch");
  const auto pos = std::count(labels.begin(), labels.end(), 1);
  const auto neg = std::count(labels.begin(), labels.end(), 0);
  if (pos + neg != std::ptrdiff_t(labels.size())) throw Error(ErrorCode::ShapeMismatch, "labels must be 0 or 1");
  if (pos == 0 || neg == 0) throw Error(ErrorCode::EmptyBatch, "ROC needs both classes");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });

  RocCurve curve;
  curve.points.push_back({0.0, 0.0});
  long tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == s; ++i) (labels[order[i]] == 1 ? tp : fp) += 1;
    curve.points.push_back({double(fp) / double(neg), double(tp) / double(pos)});
  }
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    curve.auc += (b.fpr - a.fpr) * (b.tpr + a.tpr) * 0.5;
  }
  return curve;
}

namespace {

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string file_slug(const std::string& s) {
  std::string out;
  for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
  return out;
}

std::string roc_lines(const std::string& series, const RocCurve& c) {
  std::string out = nlohmann::json{{"series", series}, {"auc", c.auc}, {"points", c.points.size()}}.dump() + '\n';
  for (const auto& p : c.points) out += nlohmann::json{{"series", series}, {"fpr", p.fpr}, {"tpr", p.tpr}}.dump() + '\n';
  return out;
}

}  // namespace

ReportBundle render_report(std::span<const MetricsReport> reports, std::span<const RocCurve> curves) {
  ReportBundle b;
  b.table = "| Model | Description | ACC (%) | FPR (%) | FNR (%) |\n|---|---|---|---|---|\n";
  for (const auto& r : reports) {
    b.table += "| " + r.spec.name() + " | " + r.spec.description() + " | " + fixed2(r.acc) + " | " + fixed2(r.fpr) +
               " | " + fixed2(r.fnr) + " |\n";
  }
  if (curves.empty()) return b;
  for (const auto& c : curves) b.roc_files.emplace_back("roc_" + file_slug(c.label) + ".jsonl", roc_lines(c.label, c));
  RocCurve diagonal;
  diagonal.points = {{0.0, 0.0}, {1.0, 1.0}};
  diagonal.auc = 0.5;
  b.roc_files.emplace_back("roc_random_guess.jsonl", roc_lines("Random guess", diagonal));
  return b;
}

void write_report(const ReportBundle& bundle, std::span<const MetricsReport> reports, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  auto write = [&](const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!(f << text)) throw Error(ErrorCode::Io, "cannot write " + p.string());
  };
  write(out_dir / "table.md", bundle.table);
  std::string metrics;
  for (const auto& r : reports) {
    metrics += nlohmann::json{{"model", r.spec.name()},
                              {"key", r.spec.key()},
                              {"description", r.spec.description()},
                              {"canonical", r.spec.canonical()},
                              {"acc", r.acc},
                              {"fpr", r.fpr},
                              {"fnr", r.fnr},
                              {"train_acc", r.train_acc},
                              {"converged", r.converged},
                              {"tp", r.confusion.tp},
                              {"fp", r.confusion.fp},
                              {"tn", r.confusion.tn},
                              {"fn", r.confusion.fn}}
                   .dump() +
               '\n';
  }
  write(out_dir / "metrics.jsonl", metrics);
  for (const auto& [name, text] : bundle.roc_files) write(out_dir / name, text);
}

EvaluationResult run_evaluation(const Split& split, const EvaluationConfig& cfg) {
  EvaluationResult out;
  for (const auto& spec : cfg.models) {
    spdlog::info("training {} ({}) on {} samples", spec.name(), spec.description(), split.train.size());
    const auto model = train_classifier(spec, split, cfg.train);
    out.reports.push_back(evaluate(*model, split.test));
    if (model->calibrated_scores() || cfg.margin_roc) {
      const Eigen::VectorXd s = model->scores(split.test.x);
      const std::vector<double> scores(s.data(), s.data() + s.size());
      const std::vector<int> labels(split.test.y.data(), split.test.y.data() + split.test.y.size());
      RocCurve c = roc_curve(scores, labels);
      c.label = spec.name();
      out.curves.push_back(std::move(c));
    }
  }
  return out;
}

}  // namespace fpgen
