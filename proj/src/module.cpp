#include "fpgen/module.hpp"

#include <algorithm>

namespace fpgen::nn {

std::vector<Var> Module::parameter_vars() const {
  std::vector<Var> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.var);
  return out;
}

Eigen::Index Module::parameter_count() const {
  Eigen::Index total = 0;
  for (const auto& p : params_) total += p.var.value().size();
  return total;
}

void Module::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

Var Module::add_parameter(std::string name, Tensor init) {
  Var v(std::move(init), true);
  params_.push_back({std::move(name), v});
  return v;
}

Var Module::add_buffer(std::string name, Tensor init) {
  Var v(std::move(init), false);
  buffers_.push_back({std::move(name), v});
  return v;
}

void Module::add_submodule(const std::string& prefix, const Module& child) {
  for (const auto& p : child.params_) params_.push_back({prefix + "." + p.name, p.var});
  for (const auto& b : child.buffers_) buffers_.push_back({prefix + "." + b.name, b.var});
}

int count_normalization_layers(const Module& module) {
  return int(std::count_if(module.buffers().begin(), module.buffers().end(),
                           [](const NamedVar& b) { return b.name.ends_with("running_mean"); }));
}

void init_normal(Tensor& t, float stddev, Rng& rng, float mean) {
  if (stddev <= 0.0f) {
    t.array().setConstant(mean);
    return;
  }
  std::normal_distribution<float> dist(mean, stddev);
  for (auto& v : t.array()) v = dist(rng);
}

Conv2d::Conv2d(int in, int out, int kernel, int stride, int pad, bool bias) : stride_(stride), pad_(pad) {
  weight_ = add_parameter("weight", Tensor(Shape{out, in, kernel, kernel}));
  if (bias) bias_ = add_parameter("bias", Tensor(Shape{out, 1, 1, 1}));
}

ConvTranspose2d::ConvTranspose2d(int in, int out, int kernel, int stride, int pad, bool bias)
    : stride_(stride), pad_(pad) {
  weight_ = add_parameter("weight", Tensor(Shape{in, out, kernel, kernel}));
  if (bias) bias_ = add_parameter("bias", Tensor(Shape{out, 1, 1, 1}));
}

BatchNorm2d::BatchNorm2d(int channels) {
  gamma_ = add_parameter("gamma", Tensor(Shape{channels, 1, 1, 1}, 1.0f));
  beta_ = add_parameter("beta", Tensor(Shape{channels, 1, 1, 1}, 0.0f));
  stats_.running_mean = add_buffer("running_mean", Tensor(Shape{channels, 1, 1, 1}, 0.0f));
  stats_.running_var = add_buffer("running_var", Tensor(Shape{channels, 1, 1, 1}, 1.0f));
}

}  // namespace fpgen::nn
