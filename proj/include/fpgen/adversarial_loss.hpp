#pragma once

#include <Eigen/Dense>

#include <cmath>

#include "fpgen/error.hpp"

namespace fpgen {

template <typename Scalar>
using ScoreVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// dL/dscores for a loss over a batch of real and a batch of fake scores.
template <typename Scalar>
struct ScoreGradients {
  ScoreVector<Scalar> real;
  ScoreVector<Scalar> fake;
};

namespace detail {

template <typename Derived>
void require_nonempty(const Eigen::DenseBase<Derived>& scores, const char* what) {
  if (scores.size() == 0) throw Error(ErrorCode::EmptyBatch, what);
}

}  // namespace detail

// log(1 + e^x) without overflow.
template <typename Scalar>
Scalar softplus(Scalar x) {
  return std::max(x, Scalar(0)) + std::log1p(std::exp(-std::abs(x)));
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

// log(sigmoid(x)) = -softplus(-x)
template <typename Scalar>
Scalar log_sigmoid(Scalar x) {
  return -softplus(-x);
}

// ---- Wasserstein critic ---------------------------------------------------

// mean(fake) - mean(real): the negated Earth-Mover estimate the critic minimises.
template <typename DerivedR, typename DerivedF>
typename DerivedR::Scalar wgan_critic_loss(const Eigen::DenseBase<DerivedR>& real, const Eigen::DenseBase<DerivedF>& fake) {
  detail::require_nonempty(real, "wgan_critic_loss: empty real batch");
  detail::require_nonempty(fake, "wgan_critic_loss: empty fake batch");
  return fake.mean() - real.mean();
}

template <typename DerivedF>
typename DerivedF::Scalar wgan_generator_loss(const Eigen::DenseBase<DerivedF>& fake) {
  detail::require_nonempty(fake, "wgan_generator_loss: empty fake batch");
  return -fake.mean();
}

template <typename DerivedR, typename DerivedF>
ScoreGradients<typename DerivedR::Scalar> wgan_critic_loss_gradients(const Eigen::DenseBase<DerivedR>& real,
                                                                      const Eigen::DenseBase<DerivedF>& fake) {
  using Scalar = typename DerivedR::Scalar;
  detail::require_nonempty(real, "wgan_critic_loss: empty real batch");
  detail::require_nonempty(fake, "wgan_critic_loss: empty fake batch");
  return {ScoreVector<Scalar>::Constant(real.size(), Scalar(-1) / Scalar(real.size())),
          ScoreVector<Scalar>::Constant(fake.size(), Scalar(1) / Scalar(fake.size()))};
}

template <typename DerivedF>
ScoreVector<typename DerivedF::Scalar> wgan_generator_loss_gradient(const Eigen::DenseBase<DerivedF>& fake) {
  using Scalar = typename DerivedF::Scalar;
  detail::require_nonempty(fake, "wgan_generator_loss: empty fake batch");
  return ScoreVector<Scalar>::Constant(fake.size(), Scalar(-1) / Scalar(fake.size()));
}

// ---- Relativistic average discriminator ----------------------------------
//
// D(x_r, x_f) = sigmoid(C(x_r) - E[C(x_f)])  and  D(x_f, x_r) = sigmoid(C(x_f) - E[C(x_r)]).
// The sigmoid wraps the difference so both losses stay finite.

template <typename Scalar>
Scalar rad(Scalar c_r, Scalar c_fake_mean) {
  return sigmoid(c_r - c_fake_mean);
}

// L_D = -E_r[log D(x_r,x_f)] - E_f[log(1 - D(x_f,x_r))]
template <typename DerivedR, typename DerivedF>
typename DerivedR::Scalar rad_discriminator_loss(const Eigen::DenseBase<DerivedR>& real,
                                                 const Eigen::DenseBase<DerivedF>& fake) {
  using Scalar = typename DerivedR::Scalar;
  detail::require_nonempty(real, "rad_discriminator_loss: empty real batch");
  detail::require_nonempty(fake, "rad_discriminator_loss: empty fake batch");
  const Scalar mean_r = real.mean();
  const Scalar mean_f = fake.mean();
  const Scalar term_r = real.derived().unaryExpr([&](Scalar c) { return softplus(mean_f - c); }).mean();
  const Scalar term_f = fake.derived().unaryExpr([&](Scalar c) { return softplus(c - mean_r); }).mean();
  return term_r + term_f;
}

// L_G = -E_r[log(1 - D(x_r,x_f))] - E_f[log D(x_f,x_r)]
template <typename DerivedR, typename DerivedF>
typename DerivedR::Scalar rad_generator_loss(const Eigen::DenseBase<DerivedR>& real,
                                             const Eigen::DenseBase<DerivedF>& fake) {
  using Scalar = typename DerivedR::Scalar;
  detail::require_nonempty(real, "rad_generator_loss: empty real batch");
  detail::require_nonempty(fake, "rad_generator_loss: empty fake batch");
  const Scalar mean_r = real.mean();
  const Scalar mean_f = fake.mean();
  const Scalar term_r = real.derived().unaryExpr([&](Scalar c) { return softplus(c - mean_f); }).mean();
  const Scalar term_f = fake.derived().unaryExpr([&](Scalar c) { return softplus(mean_r - c); }).mean();
  return term_r + term_f;
}

template <typename DerivedR, typename DerivedF>
ScoreGradients<typename DerivedR::Scalar> rad_discriminator_loss_gradients(const Eigen::DenseBase<DerivedR>& real,
                                                                            const Eigen::DenseBase<DerivedF>& fake) {
  using Scalar = typename DerivedR::Scalar;
  detail::require_nonempty(real, "rad_discriminator_loss: empty real batch");
  detail::require_nonempty(fake, "rad_discriminator_loss: empty fake batch");
  const Scalar nr = Scalar(real.size()), nf = Scalar(fake.size());
  const Scalar mean_r = real.mean(), mean_f = fake.mean();
  // s_r = sigmoid(mean_f - c_r) = d softplus(mean_f - c_r) / d(mean_f - c_r)
  const ScoreVector<Scalar> s_r = real.derived().unaryExpr([&](Scalar c) { return sigmoid(mean_f - c); });
  const ScoreVector<Scalar> s_f = fake.derived().unaryExpr([&](Scalar c) { return sigmoid(c - mean_r); });
  ScoreGradients<Scalar> g;
  g.real = (-s_r.array() / nr - s_f.sum() / (nf * nr)).matrix();
  g.fake = (s_f.array() / nf + s_r.sum() / (nr * nf)).matrix();
  return g;
}

template <typename DerivedR, typename DerivedF>
ScoreGradients<typename DerivedR::Scalar> rad_generator_loss_gradients(const Eigen::DenseBase<DerivedR>& real,
                                                                        const Eigen::DenseBase<DerivedF>& fake) {
  using Scalar = typename DerivedR::Scalar;
  detail::require_nonempty(real, "rad_generator_loss: empty real batch");
  detail::require_nonempty(fake, "rad_generator_loss: empty fake batch");
  const Scalar nr = Scalar(real.size()), nf = Scalar(fake.size());
  const Scalar mean_r = real.mean(), mean_f = fake.mean();
  const ScoreVector<Scalar> s_r = real.derived().unaryExpr([&](Scalar c) { return sigmoid(c - mean_f); });
  const ScoreVector<Scalar> s_f = fake.derived().unaryExpr([&](Scalar c) { return sigmoid(mean_r - c); });
  ScoreGradients<Scalar> g;
  g.real = (s_r.array() / nr + s_f.sum() / (nf * nr)).matrix();
  g.fake = (-s_f.array() / nf - s_r.sum() / (nr * nf)).matrix();
  return g;
}

// Mean absolute pixel error.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar content_loss(const Eigen::DenseBase<DerivedA>& sr, const Eigen::DenseBase<DerivedB>& hq) {
  if (sr.rows() != hq.rows() || sr.cols() != hq.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "content_loss operands differ in shape");
  }
  if (sr.size() == 0) throw Error(ErrorCode::EmptyBatch, "content_loss: empty image");
  return (sr.derived().array() - hq.derived().array()).abs().mean();
}

}  // namespace fpgen
