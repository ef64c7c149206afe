#include "fpgen/ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>
#include <vector>

#include "fpgen/error.hpp"

namespace fpgen::nn {

namespace {

using Eigen::Index;

struct ConvGeometry {
  int channels, height, width;  // image side
  int k, stride, pad;
  int out_h, out_w;             // column grid side

  Index rows() const { return Index(channels) * k * k; }
  Index cols() const { return Index(out_h) * out_w; }
};

// Column rows are `ld` floats apart so a batch can share one column matrix.
void im2col(const float* img, const ConvGeometry& g, float* col, Index ld) {
  for (int c = 0; c < g.channels; ++c) {
    const float* plane = img + Index(c) * g.height * g.width;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        float* row = col + ((Index(c) * g.k + ky) * g.k + kx) * ld;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          float* dst = row + Index(oy) * g.out_w;
          if (iy < 0 || iy >= g.height) {
            std::fill(dst, dst + g.out_w, 0.0f);
            continue;
          }
          const float* src = plane + Index(iy) * g.width;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            dst[ox] = (ix >= 0 && ix < g.width) ? src[ix] : 0.0f;
          }
        }
      }
    }
  }
}

// Accumulates columns back into the image (adjoint of im2col).
void col2im(const float* col, const ConvGeometry& g, float* img, Index ld) {
  for (int c = 0; c < g.channels; ++c) {
    float* plane = img + Index(c) * g.height * g.width;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const float* row = col + ((Index(c) * g.k + ky) * g.k + kx) * ld;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.height) continue;
          const float* src = row + Index(oy) * g.out_w;
          float* dst = plane + Index(iy) * g.width;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.width) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

Eigen::Map<const Eigen::VectorXf> as_vector(const Tensor& t) { return {t.data(), t.size()}; }
Eigen::Map<Eigen::VectorXf> as_vector(Tensor& t) { return {t.data(), t.size()}; }

void require(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::ShapeMismatch, what);
}

// Applies a per-element map that only needs the forward input/output to differentiate.
template <typename Fwd, typename Bwd>
Var elementwise(const Var& x, Fwd fwd, Bwd dfdx) {
  Tensor out(x.shape(), x.value().array().unaryExpr(fwd).eval());
  auto xn = x.node();
  return make_result(std::move(out), {x}, [xn, dfdx](detail::Node& self) {
    if (!xn->requires_grad) return;
    const auto& in = xn->value.array();
    const auto& y = self.value.array();
    auto& gx = xn->grad_buffer().array();
    const auto& g = self.grad.array();
    for (Index i = 0; i < g.size(); ++i) gx[i] += g[i] * dfdx(in[i], y[i]);
  });
}

// Stride-1 convolution as a sum of k*k GEMMs over shifted views of the padded
// input. Output rows are computed over the padded width; the last k-1 columns of
// each row are discarded.
// Grow-only per-thread buffers; large temporaries would otherwise be mapped and
// page-faulted afresh on every call.
float* scratch(int slot, Index size) {
  thread_local std::array<std::vector<float>, 4> buffers;
  auto& b = buffers[std::size_t(slot)];
  if (Index(b.size()) < size) b.resize(std::size_t(size));
  return b.data();
}

struct ShiftedConv {
  int cin, cout, k, pad, height, width;
  int hp, wp, out_h, out_w;
  Index plane, span;  // padded plane size, columns per tap product

  ShiftedConv(const Shape& xs, int cout_, int k_, int pad_)
      : cin(xs.c), cout(cout_), k(k_), pad(pad_), height(xs.h), width(xs.w), hp(xs.h + 2 * pad_),
        wp(xs.w + 2 * pad_), out_h(hp - k_ + 1), out_w(wp - k_ + 1), plane(Index(hp) * wp),
        span(Index(out_h) * wp) {}

  using StridedMap = Eigen::Map<RowMatrixXf, 0, Eigen::OuterStride<>>;
  using ConstStridedMap = Eigen::Map<const RowMatrixXf, 0, Eigen::OuterStride<>>;

  // Zeroed padded planes; views read past the last plane by at most k-1 floats.
  float* padded_buffer(int slot) const {
    const Index size = cin * plane + k;
    float* buf = scratch(slot, size);
    std::fill_n(buf, size, 0.0f);
    return buf;
  }
  Index offset(int tap) const { return Index(tap / k) * wp + tap % k; }

  ConstStridedMap view(const float* buf, int tap) const {
    return {buf + offset(tap), cin, span, Eigen::OuterStride<>(plane)};
  }
  StridedMap view(float* buf, int tap) const { return {buf + offset(tap), cin, span, Eigen::OuterStride<>(plane)}; }

  // Column blocks small enough that one block of every input plane stays in L2
  // across all k*k tap products.
  Index block() const { return std::clamp<Index>(Index(32768) / std::max(cin, cout), 256, std::max<Index>(span, 1)); }

  void pad_into(const float* img, float* buf) const {
    for (int c = 0; c < cin; ++c) {
      for (int r = 0; r < height; ++r) {
        std::copy_n(img + (Index(c) * height + r) * width, width, buf + c * plane + Index(r + pad) * wp + pad);
      }
    }
  }
  void add_interior(const float* buf, float* img) const {
    for (int c = 0; c < cin; ++c) {
      for (int r = 0; r < height; ++r) {
        const float* src = buf + c * plane + Index(r + pad) * wp + pad;
        float* dst = img + (Index(c) * height + r) * width;
        for (int x = 0; x < width; ++x) dst[x] += src[x];
      }
    }
  }

  // taps[t](o, c) = weight(o, c, t / k, t % k)
  std::vector<RowMatrixXf> split_taps(const Tensor& weight) const {
    std::vector<RowMatrixXf> taps;
    const int kk = k * k;
    for (int t = 0; t < kk; ++t) {
      taps.emplace_back(Eigen::Map<const RowMatrixXf, 0, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>>(
          weight.data() + t, cout, cin, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(Index(cin) * kk, kk)));
    }
    return taps;
  }
};

Var conv2d_stride1(const Var& x, const Var& weight, const Var& bias, int pad) {
  const ShiftedConv sc(x.shape(), weight.shape().n, weight.shape().h, pad);
  require(sc.out_h > 0 && sc.out_w > 0, "conv2d: kernel larger than padded input");
  const int batch = x.shape().n;
  Tensor out(Shape{batch, sc.cout, sc.out_h, sc.out_w});
  {
    const auto taps = sc.split_taps(weight.value());
    float* xp = sc.padded_buffer(0);
    RowMatrixMap y(scratch(1, sc.cout * sc.span), sc.cout, sc.span);
    for (int n = 0; n < batch; ++n) {
      sc.pad_into(x.value().sample(n), xp);
      for (Index j = 0; j < sc.span; j += sc.block()) {
        const Index w = std::min(sc.block(), sc.span - j);
        auto yb = y.middleCols(j, w);
        yb.noalias() = taps[0] * sc.view(std::as_const(xp), 0).middleCols(j, w);
        for (int t = 1; t < sc.k * sc.k; ++t) yb.noalias() += taps[t] * sc.view(std::as_const(xp), t).middleCols(j, w);
      }
      auto dst = out.channels(n);
      for (int r = 0; r < sc.out_h; ++r) {
        dst.middleCols(Index(r) * sc.out_w, sc.out_w) = y.middleCols(Index(r) * sc.wp, sc.out_w);
      }
      if (bias.defined()) dst.colwise() += as_vector(bias.value());
    }
  }

  auto xn = x.node();
  auto wn = weight.node();
  auto bn = bias.node();
  return make_result(std::move(out), {x, weight, bias.defined() ? bias : x}, [xn, wn, bn, sc](detail::Node& self) {
    const Tensor& grad = self.grad;
    const int batch = grad.shape().n;
    const int kk = sc.k * sc.k;
    const auto taps = sc.split_taps(wn->value);
    std::vector<RowMatrixXf> gtaps(kk, RowMatrixXf::Zero(sc.cout, sc.cin));
    float* xp = sc.padded_buffer(0);
    float* gxp = sc.padded_buffer(2);
    RowMatrixMap gy(scratch(3, sc.cout * sc.span), sc.cout, sc.span);
    gy.setZero();  // discarded columns stay zero
    for (int n = 0; n < batch; ++n) {
      const auto g = grad.channels(n);
      for (int r = 0; r < sc.out_h; ++r) {
        gy.middleCols(Index(r) * sc.wp, sc.out_w) = g.middleCols(Index(r) * sc.out_w, sc.out_w);
      }
      if (bn && bn->requires_grad) as_vector(bn->grad_buffer()) += g.rowwise().sum();
      if (wn->requires_grad) {
        sc.pad_into(xn->value.sample(n), xp);
        for (Index j = 0; j < sc.span; j += sc.block()) {
          const Index w = std::min(sc.block(), sc.span - j);
          for (int t = 0; t < kk; ++t) {
            gtaps[t].noalias() += gy.middleCols(j, w) * sc.view(std::as_const(xp), t).middleCols(j, w).transpose();
          }
        }
      }
      if (xn->requires_grad) {
        std::fill_n(gxp, sc.cin * sc.plane + sc.k, 0.0f);
        for (Index j = 0; j < sc.span; j += sc.block()) {
          const Index w = std::min(sc.block(), sc.span - j);
          for (int t = 0; t < kk; ++t) {
            auto v = sc.view(gxp, t).middleCols(j, w);
            v.noalias() += taps[t].transpose() * gy.middleCols(j, w);
          }
        }
        sc.add_interior(gxp, xn->grad_buffer().sample(n));
      }
    }
    if (wn->requires_grad) {
      float* gw = wn->grad_buffer().data();
      for (int o = 0; o < sc.cout; ++o) {
        for (int c = 0; c < sc.cin; ++c) {
          for (int t = 0; t < kk; ++t) gw[(Index(o) * sc.cin + c) * kk + t] += gtaps[t](o, c);
        }
      }
    }
  });
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  require(ws.c == xs.c && ws.h == ws.w, "conv2d: weight/input channel mismatch");
  const int k = ws.h;
  const ConvGeometry g{xs.c, xs.h, xs.w, k, stride, pad, conv_out_size(xs.h, k, stride, pad),
                       conv_out_size(xs.w, k, stride, pad)};
  require(g.out_h > 0 && g.out_w > 0, "conv2d: kernel larger than padded input");
  const int cout = ws.n;
  if (bias.defined()) require(bias.shape().n == cout, "conv2d: bias size mismatch");
  if (stride == 1) return conv2d_stride1(x, weight, bias, pad);

  // The whole batch shares one column matrix so each GEMM is wide even for small planes.
  const Index cols = g.cols(), ld = cols * xs.n;
  Tensor out(Shape{xs.n, cout, g.out_h, g.out_w});
  ConstRowMatrixMap w(weight.value().data(), cout, g.rows());
  RowMatrixMap col(scratch(0, g.rows() * ld), g.rows(), ld);
  for (int n = 0; n < xs.n; ++n) im2col(x.value().sample(n), g, col.data() + n * cols, ld);
  RowMatrixMap y(scratch(1, cout * ld), cout, ld);
  y.noalias() = w * col;
  for (int n = 0; n < xs.n; ++n) {
    out.channels(n) = y.middleCols(n * cols, cols);
    if (bias.defined()) out.channels(n).colwise() += as_vector(bias.value());
  }

  auto xn = x.node();
  auto wn = weight.node();
  auto bn = bias.node();
  return make_result(std::move(out), {x, weight, bias.defined() ? bias : x}, [xn, wn, bn, g, cout](detail::Node& self) {
    const Tensor& grad = self.grad;
    const int batch = grad.shape().n;
    const Index cols = g.cols(), ld = cols * batch;
    RowMatrixMap gy(scratch(1, cout * ld), cout, ld);
    for (int n = 0; n < batch; ++n) gy.middleCols(n * cols, cols) = grad.channels(n);
    if (bn && bn->requires_grad) as_vector(bn->grad_buffer()) += gy.rowwise().sum();
    RowMatrixMap col(scratch(0, g.rows() * ld), g.rows(), ld);
    if (wn->requires_grad) {
      for (int n = 0; n < batch; ++n) im2col(xn->value.sample(n), g, col.data() + n * cols, ld);
      RowMatrixMap gw(wn->grad_buffer().data(), cout, g.rows());
      gw.noalias() += gy * col.transpose();
    }
    if (xn->requires_grad) {
      ConstRowMatrixMap w(wn->value.data(), cout, g.rows());
      col.noalias() = w.transpose() * gy;
      for (int n = 0; n < batch; ++n) col2im(col.data() + n * cols, g, xn->grad_buffer().sample(n), ld);
    }
  });
}

Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  require(ws.n == xs.c && ws.h == ws.w, "conv_transpose2d: weight/input channel mismatch");
  const int k = ws.h;
  const int cout = ws.c;
  const int out_h = (xs.h - 1) * stride - 2 * pad + k;
  const int out_w = (xs.w - 1) * stride - 2 * pad + k;
  require(out_h > 0 && out_w > 0, "conv_transpose2d: empty output");
  // Geometry of the adjoint convolution: the output image is the "image" side.
  const ConvGeometry g{cout, out_h, out_w, k, stride, pad, xs.h, xs.w};
  if (bias.defined()) require(bias.shape().n == cout, "conv_transpose2d: bias size mismatch");

  const Index cols = g.cols(), ld = cols * xs.n;
  const int cin = xs.c;
  Tensor out(Shape{xs.n, cout, out_h, out_w});
  ConstRowMatrixMap w(weight.value().data(), cin, g.rows());
  RowMatrixMap xb(scratch(1, cin * ld), cin, ld);
  for (int n = 0; n < xs.n; ++n) xb.middleCols(n * cols, cols) = x.value().channels(n);
  RowMatrixMap col(scratch(0, g.rows() * ld), g.rows(), ld);
  col.noalias() = w.transpose() * xb;
  for (int n = 0; n < xs.n; ++n) {
    col2im(col.data() + n * cols, g, out.sample(n), ld);
    if (bias.defined()) out.channels(n).colwise() += as_vector(bias.value());
  }

  auto xn = x.node();
  auto wn = weight.node();
  auto bn = bias.node();
  return make_result(std::move(out), {x, weight, bias.defined() ? bias : x}, [xn, wn, bn, g, cin](detail::Node& self) {
    const Tensor& grad = self.grad;
    const int batch = grad.shape().n;
    const Index cols = g.cols(), ld = cols * batch;
    RowMatrixMap col(scratch(0, g.rows() * ld), g.rows(), ld);
    for (int n = 0; n < batch; ++n) im2col(grad.sample(n), g, col.data() + n * cols, ld);
    if (bn && bn->requires_grad)
      for (int n = 0; n < batch; ++n) as_vector(bn->grad_buffer()) += grad.channels(n).rowwise().sum();
    if (wn->requires_grad) {
      RowMatrixMap xb(scratch(1, cin * ld), cin, ld);
      for (int n = 0; n < batch; ++n) xb.middleCols(n * cols, cols) = xn->value.channels(n);
      RowMatrixMap gw(wn->grad_buffer().data(), cin, g.rows());
      gw.noalias() += xb * col.transpose();
    }
    if (xn->requires_grad) {
      ConstRowMatrixMap w(wn->value.data(), cin, g.rows());
      RowMatrixMap gx(scratch(2, cin * ld), cin, ld);
      gx.noalias() = w * col;
      for (int n = 0; n < batch; ++n) xn->grad_buffer().channels(n) += gx.middleCols(n * cols, cols);
    }
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  const Index in = xs.sample();
  require(ws.sample() == in, "linear: weight/input size mismatch");
  const int out_features = ws.n;

  Tensor out(Shape{xs.n, out_features, 1, 1});
  ConstRowMatrixMap xm(x.value().data(), xs.n, in);
  ConstRowMatrixMap wm(weight.value().data(), out_features, in);
  RowMatrixMap ym(out.data(), xs.n, out_features);
  ym.noalias() = xm * wm.transpose();
  if (bias.defined()) ym.rowwise() += as_vector(bias.value()).transpose();

  auto xn = x.node();
  auto wn = weight.node();
  auto bn = bias.node();
  return make_result(std::move(out), {x, weight, bias.defined() ? bias : x},
                     [xn, wn, bn, in, out_features](detail::Node& self) {
                       const int batch = self.value.shape().n;
                       ConstRowMatrixMap g(self.grad.data(), batch, out_features);
                       if (xn->requires_grad) {
                         ConstRowMatrixMap wm(wn->value.data(), out_features, in);
                         RowMatrixMap gx(xn->grad_buffer().data(), batch, in);
                         gx.noalias() += g * wm;
                       }
                       if (wn->requires_grad) {
                         ConstRowMatrixMap xm(xn->value.data(), batch, in);
                         RowMatrixMap gw(wn->grad_buffer().data(), out_features, in);
                         gw.noalias() += g.transpose() * xm;
                       }
                       if (bn && bn->requires_grad) as_vector(bn->grad_buffer()) += g.colwise().sum().transpose();
                     });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormStats& stats, bool training, float momentum,
               float eps) {
  const Shape s = x.shape();
  require(gamma.value().size() == s.c && beta.value().size() == s.c, "batch_norm: parameter size mismatch");
  const Index plane = s.plane();
  const Index count = Index(s.n) * plane;

  Eigen::VectorXf mean(s.c), inv_std(s.c);
  if (training) {
    require(count > 1, "batch_norm: need more than one value per channel in training mode");
    auto& rm = stats.running_mean.mutable_value().array();
    auto& rv = stats.running_var.mutable_value().array();
    for (int c = 0; c < s.c; ++c) {
      double sum = 0.0, sq = 0.0;
      for (int n = 0; n < s.n; ++n) {
        Eigen::Map<const Eigen::ArrayXf> p(x.value().sample(n) + c * plane, plane);
        sum += p.cast<double>().sum();
        sq += p.cast<double>().square().sum();
      }
      const double m = sum / double(count);
      const double var = std::max(0.0, sq / double(count) - m * m);
      mean[c] = float(m);
      inv_std[c] = float(1.0 / std::sqrt(var + eps));
      rm[c] = (1.0f - momentum) * rm[c] + momentum * float(m);
      rv[c] = (1.0f - momentum) * rv[c] + momentum * float(var * double(count) / double(count - 1));
    }
  } else {
    mean = as_vector(stats.running_mean.value());
    inv_std = (as_vector(stats.running_var.value()).array() + eps).rsqrt().matrix();
  }

  Tensor xhat(s);
  Tensor out(s);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      Eigen::Map<const Eigen::ArrayXf> p(x.value().sample(n) + c * plane, plane);
      Eigen::Map<Eigen::ArrayXf> h(xhat.sample(n) + c * plane, plane);
      Eigen::Map<Eigen::ArrayXf> y(out.sample(n) + c * plane, plane);
      h = (p - mean[c]) * inv_std[c];
      y = h * gamma.value().array()[c] + beta.value().array()[c];
    }
  }

  auto xn = x.node();
  auto gn = gamma.node();
  auto bn = beta.node();
  return make_result(std::move(out), {x, gamma, beta},
                     [xn, gn, bn, xhat = std::move(xhat), inv_std, training, plane, count](detail::Node& self) {
                       const Shape s = self.value.shape();
                       for (int c = 0; c < s.c; ++c) {
                         double sum_g = 0.0, sum_gh = 0.0;
                         for (int n = 0; n < s.n; ++n) {
                           Eigen::Map<const Eigen::ArrayXf> g(self.grad.sample(n) + c * plane, plane);
                           Eigen::Map<const Eigen::ArrayXf> h(xhat.sample(n) + c * plane, plane);
                           sum_g += g.cast<double>().sum();
                           sum_gh += (g * h).cast<double>().sum();
                         }
                         if (gn->requires_grad) gn->grad_buffer().array()[c] += float(sum_gh);
                         if (bn->requires_grad) bn->grad_buffer().array()[c] += float(sum_g);
                         if (!xn->requires_grad) continue;
                         const float gam = gn->value.array()[c];
                         const float k = gam * inv_std[c];
                         const float mg = float(sum_g / double(count));
                         const float mgh = float(sum_gh / double(count));
                         for (int n = 0; n < s.n; ++n) {
                           Eigen::Map<const Eigen::ArrayXf> g(self.grad.sample(n) + c * plane, plane);
                           Eigen::Map<const Eigen::ArrayXf> h(xhat.sample(n) + c * plane, plane);
                           Eigen::Map<Eigen::ArrayXf> gx(xn->grad_buffer().sample(n) + c * plane, plane);
                           if (training) {
                             gx += k * (g - mg - h * mgh);
                           } else {
                             gx += k * g;
                           }
                         }
                       }
                     });
}

Var leaky_relu(const Var& x, float slope) {
  return elementwise(
      x, [slope](float v) { return v > 0.0f ? v : slope * v; },
      [slope](float in, float) { return in > 0.0f ? 1.0f : slope; });
}

Var relu(const Var& x) {
  return elementwise(
      x, [](float v) { return v > 0.0f ? v : 0.0f; }, [](float in, float) { return in > 0.0f ? 1.0f : 0.0f; });
}

Var tanh_unit(const Var& x) {
  return elementwise(
      x, [](float v) { return 0.5f * std::tanh(v) + 0.5f; }, [](float, float y) { return 2.0f * y * (1.0f - y); });
}

Var clamp01(const Var& x) {
  return elementwise(
      x, [](float v) { return std::clamp(v, 0.0f, 1.0f); },
      [](float in, float) { return (in >= 0.0f && in <= 1.0f) ? 1.0f : 0.0f; });
}

Var clamp01_inward(const Var& x) {
  Tensor out(x.shape(), x.value().array().max(0.0f).min(1.0f).eval());
  auto xn = x.node();
  return make_result(std::move(out), {x}, [xn](detail::Node& self) {
    if (!xn->requires_grad) return;
    const auto& in = xn->value.array();
    auto& gx = xn->grad_buffer().array();
    const auto& g = self.grad.array();
    for (Index i = 0; i < g.size(); ++i) {
      // Descent moves the input by -g; only moves toward [0,1] pass.
      const bool blocked = (in[i] < 0.0f && g[i] > 0.0f) || (in[i] > 1.0f && g[i] < 0.0f);
      if (!blocked) gx[i] += g[i];
    }
  });
}

Var add(const Var& a, const Var& b) { return add_scaled(a, b, 1.0f); }

Var add_scaled(const Var& a, const Var& b, float s) {
  require(a.shape() == b.shape(), "add: shape mismatch");
  Tensor out(a.shape(), (a.value().array() + s * b.value().array()).eval());
  auto an = a.node();
  auto bn = b.node();
  return make_result(std::move(out), {a, b}, [an, bn, s](detail::Node& self) {
    if (an->requires_grad) an->grad_buffer().array() += self.grad.array();
    if (bn->requires_grad) bn->grad_buffer().array() += s * self.grad.array();
  });
}

Var scale(const Var& x, float s) {
  Tensor out(x.shape(), (s * x.value().array()).eval());
  auto xn = x.node();
  return make_result(std::move(out), {x}, [xn, s](detail::Node& self) {
    if (xn->requires_grad) xn->grad_buffer().array() += s * self.grad.array();
  });
}

Var concat_channels(std::span<const Var> parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  const Shape first = parts.front().shape();
  int channels = 0;
  for (const auto& p : parts) {
    const Shape s = p.shape();
    require(s.n == first.n && s.h == first.h && s.w == first.w, "concat_channels: extent mismatch");
    channels += s.c;
  }
  Tensor out(Shape{first.n, channels, first.h, first.w});
  for (int n = 0; n < first.n; ++n) {
    float* dst = out.sample(n);
    for (const auto& p : parts) {
      const Index len = p.shape().sample();
      std::copy_n(p.value().sample(n), len, dst);
      dst += len;
    }
  }
  std::vector<Var> parents(parts.begin(), parts.end());
  std::vector<std::shared_ptr<detail::Node>> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  return make_result(std::move(out), std::move(parents), [nodes](detail::Node& self) {
    const int batch = self.value.shape().n;
    for (int n = 0; n < batch; ++n) {
      const float* src = self.grad.sample(n);
      for (const auto& node : nodes) {
        const Index len = node->value.shape().sample();
        if (node->requires_grad) {
          Eigen::Map<Eigen::ArrayXf>(node->grad_buffer().sample(n), len) += Eigen::Map<const Eigen::ArrayXf>(src, len);
        }
        src += len;
      }
    }
  });
}

Var upsample_nearest2x(const Var& x) {
  const Shape s = x.shape();
  Tensor out(Shape{s.n, s.c, s.h * 2, s.w * 2});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int y = 0; y < 2 * s.h; ++y) {
        for (int xx = 0; xx < 2 * s.w; ++xx) out.at(n, c, y, xx) = x.value().at(n, c, y / 2, xx / 2);
      }
    }
  }
  auto xn = x.node();
  return make_result(std::move(out), {x}, [xn](detail::Node& self) {
    if (!xn->requires_grad) return;
    const Shape s = xn->value.shape();
    Tensor& gx = xn->grad_buffer();
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        for (int y = 0; y < 2 * s.h; ++y) {
          for (int xx = 0; xx < 2 * s.w; ++xx) gx.at(n, c, y / 2, xx / 2) += self.grad.at(n, c, y, xx);
        }
      }
    }
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(shape);
  auto xn = x.node();
  return make_result(std::move(out), {x}, [xn](detail::Node& self) {
    if (xn->requires_grad) xn->grad_buffer().array() += self.grad.array();
  });
}

Var detach(const Var& x) { return Var(x.value()); }

Var l1_loss(const Var& a, const Var& b) {
  require(a.shape() == b.shape(), "l1_loss: shape mismatch");
  const auto diff = (a.value().array() - b.value().array()).eval();
  const float n = float(diff.size());
  Tensor out(Shape{1, 1, 1, 1}, float(diff.abs().cast<double>().sum() / double(n)));
  auto an = a.node();
  auto bn = b.node();
  return make_result(std::move(out), {a, b}, [an, bn, n](detail::Node& self) {
    const float g = self.grad.array()[0] / n;
    const auto sign = (an->value.array() - bn->value.array()).sign().eval();
    if (an->requires_grad) an->grad_buffer().array() += g * sign;
    if (bn->requires_grad) bn->grad_buffer().array() -= g * sign;
  });
}

}  // namespace fpgen::nn
