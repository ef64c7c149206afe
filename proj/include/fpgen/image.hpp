#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "fpgen/error.hpp"

namespace fpgen {

// Grayscale images are row-major (row = y) dense matrices.
template <typename Scalar>
using Image = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using ImageF = Image<float>;
using ImageD = Image<double>;
using ImageU8 = Image<std::uint8_t>;

inline constexpr int kHqSize = 256;
inline constexpr int kLqSize = 64;
inline constexpr int kScaleFactor = kHqSize / kLqSize;

// Area-average downscale by an integer factor. Each output pixel is the mean of
// the factor x factor block it covers.
template <typename Derived>
Image<typename Derived::Scalar> block_mean_downscale(const Eigen::MatrixBase<Derived>& src, int factor) {
  using Scalar = typename Derived::Scalar;
  if (factor < 1 || src.rows() % factor != 0 || src.cols() % factor != 0) {
    throw Error(ErrorCode::ShapeMismatch, "image dimensions not divisible by downscale factor");
  }
  const Eigen::Index out_rows = src.rows() / factor;
  const Eigen::Index out_cols = src.cols() / factor;
  Image<Scalar> out(out_rows, out_cols);
  const Scalar inv = Scalar(1) / Scalar(factor * factor);
  for (Eigen::Index r = 0; r < out_rows; ++r) {
    for (Eigen::Index c = 0; c < out_cols; ++c) {
      out(r, c) = src.derived().block(r * factor, c * factor, factor, factor).sum() * inv;
    }
  }
  return out;
}

// HQ (256x256) -> LQ (64x64).
template <typename Derived>
Image<typename Derived::Scalar> downscale(const Eigen::MatrixBase<Derived>& hq) {
  if (hq.rows() != kHqSize || hq.cols() != kHqSize) {
    throw Error(ErrorCode::ShapeMismatch, "downscale expects a 256x256 image");
  }
  return block_mean_downscale(hq, kScaleFactor);
}

// Bilinear resample with pixel-center alignment, so equal sizes are the identity.
template <typename Derived>
Image<typename Derived::Scalar> resample_bilinear(const Eigen::MatrixBase<Derived>& src, Eigen::Index out_rows,
                                                  Eigen::Index out_cols) {
  using Scalar = typename Derived::Scalar;
  Image<Scalar> out(out_rows, out_cols);
  const double sy = double(src.rows()) / double(out_rows);
  const double sx = double(src.cols()) / double(out_cols);
  const auto max_r = src.rows() - 1;
  const auto max_c = src.cols() - 1;
  for (Eigen::Index r = 0; r < out_rows; ++r) {
    const double fy = std::clamp((double(r) + 0.5) * sy - 0.5, 0.0, double(max_r));
    const auto y0 = static_cast<Eigen::Index>(std::floor(fy));
    const auto y1 = std::min(y0 + 1, max_r);
    const double wy = fy - double(y0);
    for (Eigen::Index c = 0; c < out_cols; ++c) {
      const double fx = std::clamp((double(c) + 0.5) * sx - 0.5, 0.0, double(max_c));
      const auto x0 = static_cast<Eigen::Index>(std::floor(fx));
      const auto x1 = std::min(x0 + 1, max_c);
      const double wx = fx - double(x0);
      const double top = (1.0 - wx) * double(src(y0, x0)) + wx * double(src(y0, x1));
      const double bot = (1.0 - wx) * double(src(y1, x0)) + wx * double(src(y1, x1));
      out(r, c) = Scalar((1.0 - wy) * top + wy * bot);
    }
  }
  return out;
}

// Nearest-neighbour integer upscale.
template <typename Derived>
Image<typename Derived::Scalar> upscale_nearest(const Eigen::MatrixBase<Derived>& src, int factor) {
  Image<typename Derived::Scalar> out(src.rows() * factor, src.cols() * factor);
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    for (Eigen::Index c = 0; c < out.cols(); ++c) out(r, c) = src(r / factor, c / factor);
  }
  return out;
}

template <typename Derived>
ImageU8 quantize_u8(const Eigen::MatrixBase<Derived>& img) {
  return img.derived()
      .unaryExpr([](auto v) {
        const double d = std::clamp(double(v), 0.0, 1.0);
        return static_cast<std::uint8_t>(std::lround(d * 255.0));
      });
}

template <typename Scalar = float>
Image<Scalar> to_unit(const ImageU8& img) {
  return img.cast<Scalar>() / Scalar(255);
}

template <typename DerivedA, typename DerivedB>
double mean_abs_diff(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "mean_abs_diff operands differ in shape");
  }
  return (a.template cast<double>() - b.template cast<double>()).cwiseAbs().mean();
}

}  // namespace fpgen
