#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "fpgen/tensor.hpp"

namespace fpgen::nn {

namespace detail {

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Tensor& grad_buffer();
};

}  // namespace detail

// Handle to a value in the computation tape. Copies share the same node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  const Tensor& grad() const { return node_->grad; }
  void zero_grad();

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  friend Var make_result(Tensor, std::vector<Var>, std::function<void(detail::Node&)>);
  std::shared_ptr<detail::Node> node_;
};

// Builds the output of an op. The backward closure is only recorded when
// gradients are enabled and some parent requires them.
Var make_result(Tensor value, std::vector<Var> parents, std::function<void(detail::Node&)> backward);

// Reverse-mode sweep from `root`, seeded with dL/droot.
void backward(const Var& root, const Tensor& seed);
// Joint sweep from several roots; shared subgraphs are traversed once.
void backward(std::span<const Var> roots, std::span<const Tensor> seeds);

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace fpgen::nn
