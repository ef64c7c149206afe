#pragma once

#include <span>

#include "fpgen/autograd.hpp"

namespace fpgen::nn {

// Convolution weights are (out, in, k, k); transposed-convolution weights are
// (in, out, k, k). Biases are (channels, 1, 1, 1). An undefined bias Var means "no bias".
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);
Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);

// x is (n, in, 1, 1), weight is (out, in, 1, 1).
Var linear(const Var& x, const Var& weight, const Var& bias);

struct BatchNormStats {
  Var running_mean;
  Var running_var;
};
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormStats& stats, bool training,
               float momentum = 0.1f, float eps = 1e-5f);

Var leaky_relu(const Var& x, float slope);
Var relu(const Var& x);
Var tanh_unit(const Var& x);  // 0.5 * tanh(x) + 0.5, range (0, 1)
Var clamp01(const Var& x);
// Same values as clamp01, but out-of-range inputs still receive the gradient
// whenever a descent step would move them back toward [0,1].
Var clamp01_inward(const Var& x);

Var add(const Var& a, const Var& b);
Var add_scaled(const Var& a, const Var& b, float scale);  // a + scale * b
Var scale(const Var& x, float s);

Var concat_channels(std::span<const Var> parts);
Var upsample_nearest2x(const Var& x);
Var reshape(const Var& x, Shape shape);
Var detach(const Var& x);

// Mean absolute difference, returned as a (1,1,1,1) tensor.
Var l1_loss(const Var& a, const Var& b);

// Output extent of a convolution along one axis.
inline int conv_out_size(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

}  // namespace fpgen::nn
