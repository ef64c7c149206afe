#include "fpgen/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <sstream>

#include "fpgen/adversarial_loss.hpp"
#include "fpgen/error.hpp"
#include "fpgen/random.hpp"

namespace fpgen {

using Eigen::Index;

std::string ClassifierSpec::name() const {
  switch (kind) {
    case ClassifierKind::LogRegL2: return "Logistic Regression";
    case ClassifierKind::LinearSvmL2C1: return "Linear SVM";
    case ClassifierKind::RandomForest10: return "Random Forest";
    case ClassifierKind::Dnn: return std::to_string(hidden.size() + 2) + "-Layer DNN";
  }
  return "?";
}

std::string ClassifierSpec::description() const {
  switch (kind) {
    case ClassifierKind::LogRegL2: return "L2 regularization";
    case ClassifierKind::LinearSvmL2C1: return "L2 regularization, C=1";
    case ClassifierKind::RandomForest10: return "Using 10 estimators";
    case ClassifierKind::Dnn: {
      std::ostringstream out;
      out << "Hidden Layers: ";
      for (std::size_t i = 0; i < hidden.size(); ++i) out << (i ? ", " : "") << hidden[i];
      return out.str();
    }
  }
  return "?";
}

std::string ClassifierSpec::key() const {
  switch (kind) {
    case ClassifierKind::LogRegL2: return "logreg";
    case ClassifierKind::LinearSvmL2C1: return "svm";
    case ClassifierKind::RandomForest10: return "rf";
    case ClassifierKind::Dnn: break;
  }
  const auto canon = canonical_set();
  if (std::find(canon.begin(), canon.end(), *this) != canon.end()) return "dnn" + std::to_string(hidden.size() + 2);
  std::string k = "dnn:";
  for (std::size_t i = 0; i < hidden.size(); ++i) k += (i ? "-" : "") + std::to_string(hidden[i]);
  return k;
}

std::vector<ClassifierSpec> ClassifierSpec::canonical_set() {
  return {{ClassifierKind::LogRegL2, {}},
          {ClassifierKind::LinearSvmL2C1, {}},
          {ClassifierKind::RandomForest10, {}},
          dnn({100, 20}),
          dnn({100, 50, 10}),
          dnn({800, 400, 200, 100, 50, 20})};
}

bool ClassifierSpec::canonical() const {
  const auto canon = canonical_set();
  return std::find(canon.begin(), canon.end(), *this) != canon.end();
}

ClassifierSpec ClassifierSpec::parse(const std::string& key) {
  for (const auto& s : canonical_set()) {
    if (s.key() == key) return s;
  }
  if (key.starts_with("dnn:")) {
    ClassifierSpec s{ClassifierKind::Dnn, {}};
    std::istringstream in(key.substr(4));
    std::string part;
    while (std::getline(in, part, '-')) {
      int width = 0;
      try {
        width = std::stoi(part);
      } catch (const std::exception&) {
        width = 0;
      }
      if (width < 1) throw ConfigError("models", "bad hidden width in '" + key + "'");
      s.hidden.push_back(width);
    }
    if (s.hidden.empty()) throw ConfigError("models", "no hidden layers in '" + key + "'");
    return s;
  }
  throw ConfigError("models", "unknown model '" + key + "'");
}

Eigen::VectorXd Classifier::scores(const FeatureMatrix& x) const {
  Eigen::VectorXd out(x.rows());
  for (Index i = 0; i < x.rows(); ++i) out[i] = score(x.row(i).transpose());
  return out;
}

LabelVector Classifier::predictions(const FeatureMatrix& x) const {
  LabelVector out(x.rows());
  for (Index i = 0; i < x.rows(); ++i) out[i] = predict(x.row(i).transpose());
  return out;
}

namespace {

void check_training_data(const FeatureMatrix& x, const LabelVector& y) {
  if (x.rows() == 0) throw Error(ErrorCode::EmptyBatch, "no training samples");
  if (x.rows() != y.size()) throw Error(ErrorCode::ShapeMismatch, "feature/label count mismatch");
  if ((y.array() != 0 && y.array() != 1).any()) throw Error(ErrorCode::ShapeMismatch, "labels must be 0 or 1");
  const auto positives = y.sum();
  if (positives == 0 || positives == y.size()) throw Error(ErrorCode::DatasetTooSmall, "training data holds one class only");
}

// ---- logistic regression: 0.5|w|^2 + C * sum softplus(-s_i (w.x_i + b)), L-BFGS ----

class LogReg final : public Classifier {
 public:
  double score(const Eigen::Ref<const Eigen::VectorXf>& x) const override {
    return sigmoid(w_.dot(x.cast<double>()) + b_);
  }
  int predict(const Eigen::Ref<const Eigen::VectorXf>& x) const override { return score(x) > 0.5 ? 1 : 0; }

  void fit(const FeatureMatrix& xf, const LabelVector& y, const LogRegOptions& o) {
    const Eigen::MatrixXd x = xf.cast<double>();
    const Eigen::VectorXd s = (2 * y.array() - 1).cast<double>();
    const Index d = x.cols();

    auto objective = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
      const auto w = theta.head(d);
      const Eigen::VectorXd z = (x * w).array() + theta[d];
      double loss = 0.5 * w.squaredNorm();
      Eigen::VectorXd coef(x.rows());
      for (Index i = 0; i < x.rows(); ++i) {
        loss += o.c * softplus(-s[i] * z[i]);
        coef[i] = -o.c * s[i] * sigmoid(-s[i] * z[i]);
      }
      grad.resize(d + 1);
      grad.head(d) = w + x.transpose() * coef;
      grad[d] = coef.sum();
      return loss;
    };

    Eigen::VectorXd theta = Eigen::VectorXd::Zero(d + 1), grad;
    double f = objective(theta, grad);
    std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> memory;
    converged_ = false;
    for (iterations_ = 0; iterations_ < o.max_iter; ++iterations_) {
      if (grad.lpNorm<Eigen::Infinity>() < o.tol) {
        converged_ = true;
        break;
      }
      // Two-loop recursion.
      Eigen::VectorXd q = grad;
      std::vector<double> alpha(memory.size());
      for (std::size_t k = memory.size(); k-- > 0;) {
        const auto& [sv, yv] = memory[k];
        alpha[k] = sv.dot(q) / yv.dot(sv);
        q -= alpha[k] * yv;
      }
      if (!memory.empty()) {
        const auto& [sv, yv] = memory.back();
        q *= sv.dot(yv) / yv.squaredNorm();
      } else {
        q /= std::max(1.0, grad.norm());
      }
      for (std::size_t k = 0; k < memory.size(); ++k) {
        const auto& [sv, yv] = memory[k];
        const double beta = yv.dot(q) / yv.dot(sv);
        q += sv * (alpha[k] - beta);
      }
      Eigen::VectorXd dir = -q;
      double slope = grad.dot(dir);
      if (slope >= 0.0) {
        memory.clear();
        dir = -grad / std::max(1.0, grad.norm());
        slope = grad.dot(dir);
      }

      // Backtracking Armijo search.
      double step = 1.0;
      Eigen::VectorXd next, next_grad;
      double next_f = f;
      bool accepted = false;
      for (int tries = 0; tries < 50; ++tries) {
        next = theta + step * dir;
        next_f = objective(next, next_grad);
        if (next_f <= f + 1e-4 * step * slope) {
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) break;
      Eigen::VectorXd sv = next - theta, yv = next_grad - grad;
      if (sv.dot(yv) > 1e-12) {
        memory.emplace_back(std::move(sv), std::move(yv));
        if (int(memory.size()) > o.history) memory.pop_front();
      }
      theta = std::move(next);
      grad = std::move(next_grad);
      f = next_f;
    }
    if (!converged_ && grad.lpNorm<Eigen::Infinity>() < o.tol) converged_ = true;
    w_ = theta.head(d);
    b_ = theta[d];
  }

 private:
  Eigen::VectorXd w_;
  double b_ = 0.0;
};

// ---- linear SVM: squared hinge, L2, dual coordinate descent with a unit bias feature ----

class LinearSvm final : public Classifier {
 public:
  double score(const Eigen::Ref<const Eigen::VectorXf>& x) const override { return w_.dot(x.cast<double>()) + b_; }
  int predict(const Eigen::Ref<const Eigen::VectorXf>& x) const override { return score(x) > 0.0 ? 1 : 0; }
  bool calibrated_scores() const override { return false; }

  void fit(const FeatureMatrix& xf, const LabelVector& y, const SvmOptions& o, Rng& rng) {
    // Row-major: every coordinate step reads and updates along one sample.
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> x = xf.cast<double>();
    const Index n = x.rows(), d = x.cols();
    const Eigen::VectorXd s = (2 * y.array() - 1).cast<double>();
    const double diag = 0.5 / o.c;
    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd qii = x.rowwise().squaredNorm().array() + 1.0 + diag;
    w_ = Eigen::VectorXd::Zero(d);
    b_ = 0.0;
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index(0));
    converged_ = false;
    for (iterations_ = 0; iterations_ < o.max_iter; ++iterations_) {
      std::shuffle(order.begin(), order.end(), rng);
      double pg_max = -1e300, pg_min = 1e300;
      for (Index i : order) {
        const double g = s[i] * (x.row(i).dot(w_) + b_) - 1.0 + diag * alpha[i];
        const double pg = alpha[i] == 0.0 ? std::min(g, 0.0) : g;
        pg_max = std::max(pg_max, pg);
        pg_min = std::min(pg_min, pg);
        if (std::abs(pg) > 1e-12) {
          const double old = alpha[i];
          alpha[i] = std::max(old - g / qii[i], 0.0);
          const double delta = (alpha[i] - old) * s[i];
          w_ += delta * x.row(i).transpose();
          b_ += delta;
        }
      }
      if (pg_max - pg_min <= o.tol) {
        converged_ = true;
        ++iterations_;
        break;
      }
    }
  }

 private:
  Eigen::VectorXd w_;
  double b_ = 0.0;
};

// ---- random forest: bootstrap, sqrt(d) candidate features, gini, grown to purity ----

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  float threshold = 0.0f;
  int left = -1, right = -1;
  double p1 = 0.0;
};

class Tree {
 public:
  Tree(const FeatureMatrix& x, const LabelVector& y, std::vector<Index> idx, const ForestOptions& o, Rng& rng)
      : x_(x), y_(y), opts_(o), rng_(rng) {
    build(idx, 0);
  }

  double predict(const Eigen::Ref<const Eigen::VectorXf>& v) const {
    int k = 0;
    while (nodes_[k].feature >= 0) k = v[nodes_[k].feature] <= nodes_[k].threshold ? nodes_[k].left : nodes_[k].right;
    return nodes_[k].p1;
  }

 private:
  int build(std::vector<Index>& idx, int depth) {
    const int id = int(nodes_.size());
    nodes_.emplace_back();
    double pos = 0;
    for (Index i : idx) pos += y_[i];
    const double n = double(idx.size());
    nodes_[id].p1 = pos / n;
    const bool pure = pos == 0 || pos == n;
    if (pure || int(idx.size()) < opts_.min_samples_split || (opts_.max_depth > 0 && depth >= opts_.max_depth)) {
      return id;
    }

    const int d = int(x_.cols());
    const int max_features = std::max(1, int(std::sqrt(double(d))));
    std::vector<int> features(static_cast<std::size_t>(d));
    std::iota(features.begin(), features.end(), 0);
    int best_feature = -1;
    float best_threshold = 0.0f;
    double best_impurity = 1e300;
    std::vector<std::pair<float, int>> column(idx.size());
    // Partial Fisher-Yates; keep drawing past max_features while no split is found.
    for (int k = 0; k < d; ++k) {
      if (k >= max_features && best_feature >= 0) break;
      std::uniform_int_distribution<int> pick(k, d - 1);
      std::swap(features[std::size_t(k)], features[std::size_t(pick(rng_))]);
      const int f = features[std::size_t(k)];
      for (std::size_t j = 0; j < idx.size(); ++j) column[j] = {x_(idx[j], f), y_[idx[j]]};
      std::sort(column.begin(), column.end());
      double left_n = 0, left_pos = 0;
      for (std::size_t j = 0; j + 1 < column.size(); ++j) {
        left_n += 1;
        left_pos += column[j].second;
        if (column[j].first == column[j + 1].first) continue;
        const double right_n = n - left_n, right_pos = pos - left_pos;
        const double gl = 1.0 - (left_pos * left_pos + (left_n - left_pos) * (left_n - left_pos)) / (left_n * left_n);
        const double gr =
            1.0 - (right_pos * right_pos + (right_n - right_pos) * (right_n - right_pos)) / (right_n * right_n);
        const double impurity = left_n * gl + right_n * gr;
        if (impurity < best_impurity) {
          best_impurity = impurity;
          best_feature = f;
          best_threshold = 0.5f * (column[j].first + column[j + 1].first);
          // Midpoint may round onto the upper value; keep the partition strict.
          if (!(best_threshold < column[j + 1].first)) best_threshold = column[j].first;
        }
      }
    }
    if (best_feature < 0) return id;

    std::vector<Index> left, right;
    for (Index i : idx) (x_(i, best_feature) <= best_threshold ? left : right).push_back(i);
    idx.clear();
    idx.shrink_to_fit();
    nodes_[id].feature = best_feature;
    nodes_[id].threshold = best_threshold;
    const int l = build(left, depth + 1);
    const int r = build(right, depth + 1);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  const FeatureMatrix& x_;
  const LabelVector& y_;
  ForestOptions opts_;
  Rng& rng_;
  std::vector<TreeNode> nodes_;
};

class Forest final : public Classifier {
 public:
  double score(const Eigen::Ref<const Eigen::VectorXf>& x) const override {
    double total = 0.0;
    for (const auto& t : trees_) total += t.predict(x);
    return total / double(trees_.size());
  }
  int predict(const Eigen::Ref<const Eigen::VectorXf>& x) const override { return score(x) > 0.5 ? 1 : 0; }

  void fit(const FeatureMatrix& x, const LabelVector& y, const ForestOptions& o, Rng& rng) {
    if (o.trees < 1) throw ConfigError("forest.trees", "must be >= 1");
    const Index n = x.rows();
    std::uniform_int_distribution<Index> draw(0, n - 1);
    for (int t = 0; t < o.trees; ++t) {
      std::vector<Index> idx(static_cast<std::size_t>(n));
      for (auto& i : idx) i = draw(rng);
      trees_.emplace_back(x, y, std::move(idx), o, rng);
    }
    iterations_ = o.trees;
  }

 private:
  std::vector<Tree> trees_;
};

// ---- multilayer perceptron: ReLU hidden layers, sigmoid output, cross-entropy ----

class Mlp final : public Classifier {
 public:
  double score(const Eigen::Ref<const Eigen::VectorXf>& x) const override {
    Eigen::VectorXf a = x;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Eigen::VectorXf z = weights_[l] * a + biases_[l];
      if (l + 1 < weights_.size()) {
        a = z.cwiseMax(0.0f);
      } else {
        return sigmoid(double(z[0]));
      }
    }
    return 0.5;
  }
  int predict(const Eigen::Ref<const Eigen::VectorXf>& x) const override { return score(x) > 0.5 ? 1 : 0; }

  std::vector<int> hidden() const {
    std::vector<int> out;
    for (std::size_t l = 0; l + 1 < weights_.size(); ++l) out.push_back(int(weights_[l].rows()));
    return out;
  }

  void fit(const FeatureMatrix& x, const LabelVector& y, const std::vector<int>& hidden, const MlpOptions& o,
           Rng& rng) {
    if (o.batch_size < 1 || o.max_epochs < 1 || !(o.lr > 0.0)) throw ConfigError("mlp", "invalid optimiser settings");
    std::vector<int> sizes{int(x.cols())};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(1);
    const std::size_t layers = sizes.size() - 1;
    for (std::size_t l = 0; l < layers; ++l) {
      const int fan_in = sizes[l], fan_out = sizes[l + 1];
      const double factor = l + 1 == layers ? 2.0 : 6.0;
      std::uniform_real_distribution<float> init(-1.0f, 1.0f);
      const float bound = float(std::sqrt(factor / (fan_in + fan_out)));
      Eigen::MatrixXf w(fan_out, fan_in);
      Eigen::VectorXf b(fan_out);
      for (Index i = 0; i < w.size(); ++i) w.data()[i] = bound * init(rng);
      for (Index i = 0; i < b.size(); ++i) b[i] = bound * init(rng);
      weights_.push_back(std::move(w));
      biases_.push_back(std::move(b));
    }

    std::vector<Eigen::MatrixXf> mw, vw;
    std::vector<Eigen::VectorXf> mb, vb;
    for (std::size_t l = 0; l < layers; ++l) {
      mw.push_back(Eigen::MatrixXf::Zero(weights_[l].rows(), weights_[l].cols()));
      vw.push_back(mw.back());
      mb.push_back(Eigen::VectorXf::Zero(biases_[l].size()));
      vb.push_back(mb.back());
    }
    const float beta1 = 0.9f, beta2 = 0.999f, eps = 1e-8f, lr = float(o.lr);
    long t = 0;

    const Index n = x.rows();
    const Index batch = std::min<Index>(o.batch_size, n);
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index(0));
    std::vector<Eigen::MatrixXf> acts(layers + 1), pre(layers);
    double best = 1e300;
    int stale = 0;
    converged_ = false;
    for (iterations_ = 0; iterations_ < o.max_epochs;) {
      std::shuffle(order.begin(), order.end(), rng);
      double epoch_loss = 0.0;
      for (Index start = 0; start < n; start += batch) {
        const Index m = std::min(batch, n - start);
        acts[0].resize(m, x.cols());
        Eigen::VectorXf target(m);
        for (Index i = 0; i < m; ++i) {
          acts[0].row(i) = x.row(order[std::size_t(start + i)]);
          target[i] = float(y[order[std::size_t(start + i)]]);
        }
        for (std::size_t l = 0; l < layers; ++l) {
          pre[l] = (acts[l] * weights_[l].transpose()).rowwise() + biases_[l].transpose();
          acts[l + 1] = l + 1 < layers ? Eigen::MatrixXf(pre[l].cwiseMax(0.0f)) : pre[l];
        }
        // Cross-entropy on logits, stable form.
        double loss = 0.0;
        Eigen::MatrixXf delta(m, 1);
        for (Index i = 0; i < m; ++i) {
          const double z = pre[layers - 1](i, 0);
          loss += softplus(z) - target[i] * z;
          delta(i, 0) = float((sigmoid(z) - target[i]) / double(m));
        }
        loss /= double(m);
        double sq = 0.0;
        for (const auto& w : weights_) sq += w.squaredNorm();
        loss += 0.5 * o.l2 * sq / double(m);
        epoch_loss += loss * double(m);

        ++t;
        const float c1 = 1.0f - std::pow(beta1, float(t)), c2 = 1.0f - std::pow(beta2, float(t));
        for (std::size_t l = layers; l-- > 0;) {
          Eigen::MatrixXf gw = delta.transpose() * acts[l] + (float(o.l2) / float(m)) * weights_[l];
          Eigen::VectorXf gb = delta.colwise().sum().transpose();
          if (l > 0) delta = ((delta * weights_[l]).array() * (pre[l - 1].array() > 0.0f).cast<float>()).matrix();
          if (o.optimizer == MlpOptimizer::Sgd) {
            weights_[l] -= lr * gw;
            biases_[l] -= lr * gb;
            continue;
          }
          mw[l] = beta1 * mw[l] + (1 - beta1) * gw;
          vw[l] = beta2 * vw[l] + (1 - beta2) * gw.cwiseAbs2();
          mb[l] = beta1 * mb[l] + (1 - beta1) * gb;
          vb[l] = beta2 * vb[l] + (1 - beta2) * gb.cwiseAbs2();
          weights_[l].array() -= lr * (mw[l].array() / c1) / ((vw[l].array() / c2).sqrt() + eps);
          biases_[l].array() -= lr * (mb[l].array() / c1) / ((vb[l].array() / c2).sqrt() + eps);
        }
      }
      ++iterations_;
      epoch_loss /= double(n);
      if (!std::isfinite(epoch_loss)) {
        converged_ = false;
        break;
      }
      stale = epoch_loss > best - o.tol ? stale + 1 : 0;
      best = std::min(best, epoch_loss);
      if (stale >= o.patience) {
        converged_ = true;
        break;
      }
    }
  }

 private:
  std::vector<Eigen::MatrixXf> weights_;
  std::vector<Eigen::VectorXf> biases_;
};

}  // namespace

std::unique_ptr<Classifier> fit_classifier(const ClassifierSpec& spec, const FeatureMatrix& x, const LabelVector& y,
                                           const TrainOptions& opts) {
  check_training_data(x, y);
  Rng rng = make_rng(opts.seed, 61);
  std::unique_ptr<Classifier> model;
  switch (spec.kind) {
    case ClassifierKind::LogRegL2: {
      auto m = std::make_unique<LogReg>();
      m->fit(x, y, opts.logreg);
      model = std::move(m);
      break;
    }
    case ClassifierKind::LinearSvmL2C1: {
      auto m = std::make_unique<LinearSvm>();
      m->fit(x, y, opts.svm, rng);
      model = std::move(m);
      break;
    }
    case ClassifierKind::RandomForest10: {
      auto m = std::make_unique<Forest>();
      m->fit(x, y, opts.forest, rng);
      model = std::move(m);
      break;
    }
    case ClassifierKind::Dnn: {
      if (spec.hidden.empty()) throw ConfigError("models", "DNN needs at least one hidden layer");
      auto m = std::make_unique<Mlp>();
      m->fit(x, y, spec.hidden, opts.mlp, rng);
      model = std::move(m);
      break;
    }
  }
  model->spec_ = spec;
  model->train_acc_ = 100.0 * (model->predictions(x).array() == y.array()).cast<double>().mean();
  return model;
}

std::vector<int> hidden_layer_sizes(const Classifier& model) {
  if (const auto* mlp = dynamic_cast<const Mlp*>(&model)) return mlp->hidden();
  return {};
}

}  // namespace fpgen
