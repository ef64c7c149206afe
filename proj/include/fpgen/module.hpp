#pragma once

#include <string>
#include <vector>

#include "fpgen/ops.hpp"
#include "fpgen/random.hpp"

namespace fpgen::nn {

struct NamedVar {
  std::string name;
  Var var;
};

// Owns named parameter and buffer handles. Submodules register their handles
// into the parent under a dotted prefix, so a module can be moved freely.
class Module {
 public:
  Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;
  Module(Module&&) = default;
  Module& operator=(Module&&) = default;
  virtual ~Module() = default;

  const std::vector<NamedVar>& parameters() const { return params_; }
  const std::vector<NamedVar>& buffers() const { return buffers_; }
  std::vector<Var> parameter_vars() const;
  Eigen::Index parameter_count() const;
  void zero_grad();

 protected:
  Var add_parameter(std::string name, Tensor init);
  Var add_buffer(std::string name, Tensor init);
  void add_submodule(const std::string& prefix, const Module& child);

 private:
  std::vector<NamedVar> params_;
  std::vector<NamedVar> buffers_;
};

// Number of normalization layers registered in a module (each owns a running mean).
int count_normalization_layers(const Module& module);

void init_normal(Tensor& t, float stddev, Rng& rng, float mean = 0.0f);

class Conv2d : public Module {
 public:
  Conv2d(int in, int out, int kernel, int stride, int pad, bool bias = true);

  Var forward(const Var& x) const { return conv2d(x, weight_, bias_, stride_, pad_); }
  Var& weight() { return weight_; }
  Var& bias() { return bias_; }
  int in_channels() const { return weight_.shape().c; }
  int out_channels() const { return weight_.shape().n; }

 private:
  Var weight_, bias_;
  int stride_, pad_;
};

class ConvTranspose2d : public Module {
 public:
  ConvTranspose2d(int in, int out, int kernel, int stride, int pad, bool bias = true);

  Var forward(const Var& x) const { return conv_transpose2d(x, weight_, bias_, stride_, pad_); }
  Var& weight() { return weight_; }
  int in_channels() const { return weight_.shape().n; }
  int out_channels() const { return weight_.shape().c; }

 private:
  Var weight_, bias_;
  int stride_, pad_;
};

class BatchNorm2d : public Module {
 public:
  explicit BatchNorm2d(int channels);

  Var forward(const Var& x, bool training) { return batch_norm(x, gamma_, beta_, stats_, training); }
  Var& gamma() { return gamma_; }
  Var& beta() { return beta_; }

 private:
  Var gamma_, beta_;
  BatchNormStats stats_;
};

}  // namespace fpgen::nn
