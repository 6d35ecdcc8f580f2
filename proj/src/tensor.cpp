// src/tensor.cpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "pronscore/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace pronscore::nn {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value.assign(static_cast<size_t>(shape_numel(shape)), v);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  if (shape_numel(shape) != static_cast<int64_t>(values.size()))
    throw ShapeError("tensor init: shape " + shape_str(shape) + " needs " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v) { return from({}, {v}); }

int64_t Tensor::dim(int i) const {
  const auto& s = node_->shape;
  int r = static_cast<int>(s.size());
  if (i < 0) i += r;
  if (i < 0 || i >= r)
    throw ShapeError("dim index " + std::to_string(i) + " out of rank " +
                     std::to_string(r));
  return s[static_cast<size_t>(i)];
}

double Tensor::item() const {
  if (numel() != 1)
    throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

const std::vector<double>& Tensor::grad() const {
  if (!node_ || node_->grad.size() != node_->value.size())
    throw TrainingError("grad accessed before backward");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (!node_) return;
  node_->grad.assign(node_->value.size(), 0.0);
  node_->grad_filled = false;
}

Tensor make_op(Shape shape, std::vector<double> value,
               const std::vector<Tensor>& parents,
               std::function<void(Node&)> backprop) {
  if (shape_numel(shape) != static_cast<int64_t>(value.size()))
    throw ShapeError("op result: shape " + shape_str(shape) +
                     " inconsistent with value buffer");
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool any_tracked = false;
  for (const auto& p : parents)
    if (p.defined() && p.node()->tracked()) any_tracked = true;
  if (any_tracked) {
    for (const auto& p : parents)
      if (p.defined()) n->parents.push_back(p.node());
    n->backprop = std::move(backprop);
  }
  return Tensor(std::move(n));
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw TrainingError("backward on undefined tensor");
  Node* root = loss.node().get();
  if (loss.numel() != 1)
    throw TrainingError("backward requires a scalar loss, got shape " +
                        shape_str(loss.shape()));
  if (root->backward_done)
    throw TrainingError("repeated backward through the same loss node");
  if (!root->tracked())
    throw TrainingError("backward on a graph detached from all parameters");

  // Iterative post-order DFS.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p->tracked() && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  bool any_param = false;
  for (Node* n : order) {
    if (n->requires_grad) {
      if (n->grad_filled)
        throw TrainingError(
            "parameter gradients not reset since the previous backward; "
            "call zero_grad first");
      any_param = true;
    }
  }
  if (!any_param)
    throw TrainingError("backward on a graph detached from all parameters");

  for (Node* n : order) n->ensure_grad();
  root->grad.assign(root->value.size(), 1.0);

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop) n->backprop(*n);
  }
  for (Node* n : order)
    if (n->requires_grad) n->grad_filled = true;
  root->backward_done = true;
}

}  // namespace pronscore::nn
