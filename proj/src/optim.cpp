#include "fpgen/optim.hpp"

#include <cmath>

namespace fpgen::nn {

void Optimizer::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

RmsProp::RmsProp(std::vector<Var> params, float lr, float alpha, float eps)
    : Optimizer(std::move(params)), lr_(lr), alpha_(alpha), eps_(eps) {
  for (const auto& p : params_) square_avg_.push_back(Eigen::ArrayXf::Zero(p.value().size()));
}

void RmsProp::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) continue;
    const auto& g = params_[i].grad().array();
    auto& sq = square_avg_[i];
    sq = alpha_ * sq + (1.0f - alpha_) * g.square();
    params_[i].mutable_value().array() -= lr_ * g / (sq.sqrt() + eps_);
  }
}

Adam::Adam(std::vector<Var> params, float lr, float beta1, float beta2, float eps)
    : Optimizer(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.push_back(Eigen::ArrayXf::Zero(p.value().size()));
    v_.push_back(Eigen::ArrayXf::Zero(p.value().size()));
  }
}

void Adam::step() {
  ++t_;
  const float c1 = 1.0f - std::pow(beta1_, float(t_));
  const float c2 = 1.0f - std::pow(beta2_, float(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) continue;
    const auto& g = params_[i].grad().array();
    m_[i] = beta1_ * m_[i] + (1.0f - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0f - beta2_) * g.square();
    params_[i].mutable_value().array() -= lr_ * (m_[i] / c1) / ((v_[i] / c2).sqrt() + eps_);
  }
}

}  // namespace fpgen::nn
