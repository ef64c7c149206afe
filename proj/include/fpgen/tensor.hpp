#pragma once

#include <Eigen/Dense>

#include <string>

namespace fpgen::nn {

using RowMatrixXf = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixMap = Eigen::Map<RowMatrixXf>;
using ConstRowMatrixMap = Eigen::Map<const RowMatrixXf>;

// NCHW extents. Dense vectors are (n, features, 1, 1).
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  Eigen::Index plane() const { return Eigen::Index(h) * w; }
  Eigen::Index sample() const { return Eigen::Index(c) * plane(); }
  Eigen::Index numel() const { return Eigen::Index(n) * sample(); }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f) : shape_(shape), data_(Eigen::ArrayXf::Constant(shape.numel(), fill)) {}
  Tensor(Shape shape, Eigen::ArrayXf data);

  const Shape& shape() const { return shape_; }
  Eigen::Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Eigen::ArrayXf& array() { return data_; }
  const Eigen::ArrayXf& array() const { return data_; }
  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }

  float* sample(int n) { return data_.data() + n * shape_.sample(); }
  const float* sample(int n) const { return data_.data() + n * shape_.sample(); }

  // (channels x pixels) view of one sample.
  RowMatrixMap channels(int n) { return {sample(n), shape_.c, shape_.plane()}; }
  ConstRowMatrixMap channels(int n) const { return {sample(n), shape_.c, shape_.plane()}; }

  float& at(int n, int c, int y, int x) { return data_[((Eigen::Index(n) * shape_.c + c) * shape_.h + y) * shape_.w + x]; }
  float at(int n, int c, int y, int x) const {
    return data_[((Eigen::Index(n) * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }

  Tensor reshaped(Shape shape) const;

 private:
  Shape shape_;
  Eigen::ArrayXf data_;
};

}  // namespace fpgen::nn
