#include "fpgen/autograd.hpp"

#include <unordered_set>

#include "fpgen/error.hpp"

namespace fpgen::nn {

namespace {
thread_local bool g_grad_enabled = true;
}

std::string Shape::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + ")";
}

Tensor::Tensor(Shape shape, Eigen::ArrayXf data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.numel()) throw Error(ErrorCode::ShapeMismatch, "tensor data does not match " + shape_.str());
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape.numel() != shape_.numel()) {
    throw Error(ErrorCode::ShapeMismatch, "cannot reshape " + shape_.str() + " to " + shape.str());
  }
  return Tensor(shape, data_);
}

Tensor& detail::Node::grad_buffer() {
  if (grad.empty()) grad = Tensor(value.shape());
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<detail::Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

void Var::zero_grad() {
  if (node_ && !node_->grad.empty()) node_->grad.array().setZero();
}

Var make_result(Tensor value, std::vector<Var> parents, std::function<void(detail::Node&)> backward) {
  Var out(std::move(value));
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->parents.reserve(parents.size());
  for (auto& p : parents) out.node_->parents.push_back(p.node_);
  out.node_->backward = std::move(backward);
  return out;
}

void backward(const Var& root, const Tensor& seed) {
  const Var roots[] = {root};
  const Tensor seeds[] = {seed};
  backward(std::span<const Var>(roots), std::span<const Tensor>(seeds));
}

void backward(std::span<const Var> roots, std::span<const Tensor> seeds) {
  if (roots.size() != seeds.size()) throw Error(ErrorCode::ShapeMismatch, "backward: one seed per root required");
  for (std::size_t i = 0; i < roots.size(); ++i) {
    if (roots[i].requires_grad() && !(seeds[i].shape() == roots[i].shape())) {
      throw Error(ErrorCode::ShapeMismatch, "backward seed shape mismatch");
    }
  }

  // Iterative post-order DFS over the union of the root graphs gives a topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  for (const auto& root : roots) {
    if (!root.requires_grad() || !visited.insert(root.node().get()).second) continue;
    stack.emplace_back(root.node().get(), 0);
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        detail::Node* parent = node->parents[next++].get();
        if (parent->requires_grad && parent->backward && visited.insert(parent).second) stack.emplace_back(parent, 0);
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
  }

  for (std::size_t i = 0; i < roots.size(); ++i) {
    if (roots[i].requires_grad()) roots[i].node()->grad_buffer().array() += seeds[i].array();
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->backward && !node->grad.empty()) {
      node->backward(*node);
      // Interior gradients are consumed; only leaves keep theirs.
      node->grad = Tensor();
    }
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

}  // namespace fpgen::nn
