#pragma once

#include <vector>

#include "fpgen/autograd.hpp"

namespace fpgen::nn {

class Optimizer {
 public:
  explicit Optimizer(std::vector<Var> params) : params_(std::move(params)) {}
  virtual ~Optimizer() = default;

  virtual void step() = 0;
  void zero_grad();

 protected:
  std::vector<Var> params_;
};

// Running average of squared gradients (decay alpha), no momentum.
class RmsProp : public Optimizer {
 public:
  RmsProp(std::vector<Var> params, float lr, float alpha = 0.99f, float eps = 1e-8f);
  void step() override;

 private:
  float lr_, alpha_, eps_;
  std::vector<Eigen::ArrayXf> square_avg_;
};

class Adam : public Optimizer {
 public:
  Adam(std::vector<Var> params, float lr, float beta1 = 0.9f, float beta2 = 0.999f, float eps = 1e-8f);
  void step() override;

 private:
  float lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Eigen::ArrayXf> m_, v_;
};

}  // namespace fpgen::nn
