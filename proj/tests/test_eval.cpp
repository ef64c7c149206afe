#include "doctest.h"

#include <random>
#include <set>

#include "fpgen/eval.hpp"
#include "json.hpp"
#include "test_support.hpp"

using namespace fpgen;

namespace {

std::vector<Sample> real_samples(int subjects, int per_subject, float level, std::uint64_t seed, int side = 4) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.0f, 0.05f);
  std::vector<Sample> out;
  for (int s = 0; s < subjects; ++s) {
    for (int k = 0; k < per_subject; ++k) {
      Sample smp;
      smp.image = ImageF(side, side);
      for (Eigen::Index i = 0; i < smp.image.size(); ++i) smp.image.data()[i] = level + g(rng);
      smp.id = "r" + std::to_string(s) + "_" + std::to_string(k);
      smp.subject = s;
      out.push_back(std::move(smp));
    }
  }
  return out;
}

std::vector<Sample> synth_samples(int n, float level, std::uint64_t seed, int side = 4) {
  auto out = real_samples(n, 1, level, seed, side);
  for (auto& s : out) {
    s.subject.reset();
    s.id = "g" + s.id;
  }
  return out;
}

double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0;
  long pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      ++pairs;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / double(pairs);
}

}  // namespace

TEST_CASE("featurize flattens row-major") {
  const Eigen::VectorXf v = featurize(ImageF::Constant(256, 256, 0.5f));
  CHECK(v.size() == 65536);
  CHECK((v.array() == 0.5f).all());
  ImageF img = ImageF::Zero(256, 256);
  img(0, 1) = 1.0f;
  const Eigen::VectorXf w = featurize(img);
  CHECK(w[1] == 1.0f);
  CHECK(w.sum() == 1.0f);
  ImageF r(3, 5);
  r.setRandom();
  CHECK(unfeaturize(featurize(r), 3, 5) == r);
  CHECK_THROWS_AS(unfeaturize(featurize(r), 4, 4), Error);
}

TEST_CASE("toy corpus splits subjects 22 / 5") {
  const auto real = real_samples(27, 2, 0.4f, 1);
  const auto synth = synth_samples(60, 0.6f, 2);
  const Split split = make_split(real, synth, SplitConfig{5});
  CHECK(split.real_train_subjects == 22);
  CHECK(split.real_test_subjects == 5);
  std::set<int> train_subjects, test_subjects;
  for (std::size_t i = 0; i < split.train.subjects.size(); ++i) {
    if (split.train.y[Eigen::Index(i)] == 0) train_subjects.insert(split.train.subjects[i]);
  }
  for (std::size_t i = 0; i < split.test.subjects.size(); ++i) {
    if (split.test.y[Eigen::Index(i)] == 0) test_subjects.insert(split.test.subjects[i]);
  }
  CHECK(train_subjects.size() == 22);
  CHECK(test_subjects.size() <= 5);
  for (int s : test_subjects) CHECK(!train_subjects.contains(s));
  // Balanced test halves; labels real 0, synthetic 1.
  const auto test_pos = split.test.y.sum();
  CHECK(test_pos * 2 == split.test.size());
  CHECK(test_pos == 10);
  // Synthetic train and test never share a sample.
  std::set<std::string> train_ids(split.train.ids.begin(), split.train.ids.end());
  for (const auto& id : split.test.ids) CHECK(!train_ids.contains(id));
  CHECK(split.train.y.sum() == 60 * 2200 / 2700);
}

TEST_CASE("full-size subject split") {
  const auto real = real_samples(2700, 1, 0.4f, 3, 2);
  const auto synth = synth_samples(3000, 0.6f, 4, 2);
  const Split split = make_split(real, synth, SplitConfig{});
  CHECK(split.real_train_subjects == 2200);
  CHECK(split.real_test_subjects == 500);
  CHECK(split.test.size() == 1000);
}

TEST_CASE("split preconditions and determinism") {
  const auto synth = synth_samples(40, 0.6f, 5);
  auto code_of = [](auto fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Format;
  };
  CHECK(code_of([&] { make_split(real_samples(1, 3, 0.4f, 6), synth, SplitConfig{}); }) == ErrorCode::TooFewSubjects);
  auto no_subject = real_samples(10, 1, 0.4f, 7);
  no_subject[4].subject.reset();
  CHECK(code_of([&] { make_split(no_subject, synth, SplitConfig{}); }) == ErrorCode::MissingSubject);
  CHECK(code_of([&] { make_split(real_samples(10, 1, 0.4f, 7), synth_samples(1, 0.6f, 8), SplitConfig{}); }) ==
        ErrorCode::DatasetTooSmall);
  const auto real = real_samples(15, 2, 0.4f, 9);
  const Split a = make_split(real, synth, SplitConfig{11});
  const Split b = make_split(real, synth, SplitConfig{11});
  const Split c = make_split(real, synth, SplitConfig{12});
  CHECK(a.test.ids == b.test.ids);
  CHECK(a.train.x == b.train.x);
  CHECK(a.test.ids != c.test.ids);
}

TEST_CASE("confusion metrics") {
  const Confusion c{2, 1, 3, 2};
  const MetricsReport m = metrics_from_confusion(c);
  CHECK(m.acc == 62.5);
  CHECK(m.fpr == 25.0);
  CHECK(m.fnr == 50.0);
  const MetricsReport perfect = metrics_from_confusion({5, 0, 5, 0});
  CHECK(perfect.acc == 100.0);
  CHECK(perfect.fpr == 0.0);
  CHECK(perfect.fnr == 0.0);
  const MetricsReport all_pos = metrics_from_confusion({5, 5, 0, 0});
  CHECK(all_pos.fpr == 100.0);
  CHECK(all_pos.fnr == 0.0);
}

TEST_CASE("confusion counting matches a direct tally") {
  std::mt19937_64 rng(13);
  std::bernoulli_distribution coin(0.5);
  for (int t = 0; t < 200; ++t) {
    LabelVector p(50), y(50);
    for (int i = 0; i < 50; ++i) {
      p[i] = coin(rng);
      y[i] = coin(rng);
    }
    const Confusion c = confusion_counts(p, y);
    long tp = 0, fp = 0, tn = 0, fn = 0;
    for (int i = 0; i < 50; ++i) {
      tp += p[i] == 1 && y[i] == 1;
      fp += p[i] == 1 && y[i] == 0;
      tn += p[i] == 0 && y[i] == 0;
      fn += p[i] == 0 && y[i] == 1;
    }
    CHECK(c.tp == tp);
    CHECK(c.fp == fp);
    CHECK(c.tn == tn);
    CHECK(c.fn == fn);
  }
}

TEST_CASE("ROC of perfectly ordered and fully tied scores") {
  const std::vector<double> s{0.9, 0.8, 0.7, 0.2, 0.1};
  const std::vector<int> y{1, 1, 1, 0, 0};
  const RocCurve perfect = roc_curve(s, y);
  CHECK(perfect.auc == 1.0);
  CHECK(perfect.points.front().fpr == 0.0);
  CHECK(perfect.points.front().tpr == 0.0);
  CHECK(perfect.points.back().fpr == 1.0);
  CHECK(perfect.points.back().tpr == 1.0);
  const std::vector<double> tied(5, 0.4);
  const RocCurve flat = roc_curve(tied, y);
  REQUIRE(flat.points.size() == 2);
  CHECK(flat.points[1].fpr == 1.0);
  CHECK(flat.points[1].tpr == 1.0);
  CHECK(flat.auc == 0.5);
  CHECK_THROWS_AS(roc_curve(tied, std::vector<int>(5, 1)), Error);
}

TEST_CASE("AUC equals the pairwise ranking probability") {
  std::mt19937_64 rng(14);
  std::uniform_int_distribution<int> level(0, 20);  // coarse scores force ties
  std::bernoulli_distribution coin(0.4);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> s(60);
    std::vector<int> y(60);
    for (int i = 0; i < 60; ++i) {
      s[std::size_t(i)] = level(rng) / 20.0;
      y[std::size_t(i)] = coin(rng);
    }
    y[0] = 1;
    y[1] = 0;
    const RocCurve c = roc_curve(s, y);
    CHECK(std::abs(c.auc - pairwise_auc(s, y)) < 1e-9);
    for (std::size_t i = 1; i < c.points.size(); ++i) {
      CHECK(c.points[i].fpr >= c.points[i - 1].fpr);
      CHECK(c.points[i].tpr >= c.points[i - 1].tpr);
    }
  }
}

TEST_CASE("report table reproduces published rows") {
  MetricsReport r;
  r.spec = ClassifierSpec::dnn({100, 20});
  r.acc = 50.43;
  r.fpr = 19.78;
  r.fnr = 79.35;
  const std::vector<MetricsReport> one{r};
  const ReportBundle b = render_report(one, {});
  CHECK(b.table ==
        "| Model | Description | ACC (%) | FPR (%) | FNR (%) |\n"
        "|---|---|---|---|---|\n"
        "| 4-Layer DNN | Hidden Layers: 100, 20 | 50.43 | 19.78 | 79.35 |\n");
  CHECK(b.roc_files.empty());
}

TEST_CASE("report files include one ROC per curve plus the diagonal") {
  test::TempDir tmp("report");
  MetricsReport r = metrics_from_confusion({3, 1, 4, 2}, ClassifierSpec{});
  RocCurve c = roc_curve(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 0});
  c.label = "Logistic Regression";
  const std::vector<MetricsReport> reports{r};
  const std::vector<RocCurve> curves{c};
  const ReportBundle b = render_report(reports, curves);
  REQUIRE(b.roc_files.size() == 2);
  CHECK(b.roc_files[0].first == "roc_Logistic_Regression.jsonl");
  CHECK(b.roc_files[1].first == "roc_random_guess.jsonl");
  write_report(b, reports, tmp.path());
  CHECK(std::filesystem::exists(tmp / "table.md"));
  CHECK(std::filesystem::exists(tmp / "metrics.jsonl"));
  const std::string roc = test::read_bytes(tmp / "roc_Logistic_Regression.jsonl");
  const auto header = nlohmann::json::parse(roc.substr(0, roc.find('\n')));
  CHECK(header["auc"] == 1.0);
  const auto metrics = nlohmann::json::parse(test::read_bytes(tmp / "metrics.jsonl"));
  CHECK(metrics["acc"] == 70.0);
  CHECK(metrics["canonical"] == true);
}

TEST_CASE("evaluation separates trivially different corpora") {
  const auto real = real_samples(27, 4, 0.3f, 20);
  const auto synth = synth_samples(120, 0.6f, 21);
  const Split split = make_split(real, synth, SplitConfig{3});
  EvaluationConfig cfg;
  cfg.models = {ClassifierSpec{}, ClassifierSpec{ClassifierKind::LinearSvmL2C1, {}}};
  cfg.margin_roc = true;
  const EvaluationResult res = run_evaluation(split, cfg);
  REQUIRE(res.reports.size() == 2);
  REQUIRE(res.curves.size() == 2);
  for (const auto& r : res.reports) CHECK(r.acc == 100.0);
  CHECK(res.curves[0].label == "Logistic Regression");
  cfg.margin_roc = false;
  CHECK(run_evaluation(split, cfg).curves.size() == 1);
}
