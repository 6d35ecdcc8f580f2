// include/pronscore/tensor.hpp
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

#ifndef PRONSCORE_TENSOR_HPP_
#define PRONSCORE_TENSOR_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "pronscore/errors.hpp"

namespace pronscore::nn {

// Rank-0 shapes are scalars (numel 1).
using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);
bool same_shape(const Shape& a, const Shape& b);

// One vertex of the reverse-mode tape. Values are computed eagerly when the
// op is built; backprop closures pull from this node's grad and accumulate
// into the parents' grads.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;  // leaf parameter
  bool grad_filled = false;    // set by backward(), cleared by zero_grad()
  bool backward_done = false;  // set on the node backward() was called on
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;

  bool tracked() const { return requires_grad || !parents.empty(); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

// Value-semantic handle to a shared graph node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double v);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t numel() const { return static_cast<int64_t>(node_->value.size()); }
  int64_t dim(int i) const;

  double item() const;  // numel-1 tensors only

  std::vector<double>& values() { return node_->value; }
  const std::vector<double>& values() const { return node_->value; }
  const std::vector<double>& grad() const;
  bool has_grad() const { return node_ && node_->grad_filled; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void zero_grad();

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Builds a graph node. Parents that are untracked constants are dropped from
// the tape so that constant-only subgraphs stay detached.
Tensor make_op(Shape shape, std::vector<double> value,
               const std::vector<Tensor>& parents,
               std::function<void(Node&)> backprop);

// Reverse-mode sweep from a scalar loss. Errors on non-scalar loss, on a
// graph with no reachable tracked parameter, on repeated backward through the
// same node, and on parameter grads not reset since the previous backward.
void backward(const Tensor& loss);

}  // namespace pronscore::nn

#endif  // PRONSCORE_TENSOR_HPP_
