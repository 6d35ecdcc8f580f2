// include/pronscore/adam.hpp
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

#ifndef PRONSCORE_ADAM_HPP_
#define PRONSCORE_ADAM_HPP_

#include <cstdint>
#include <vector>

#include "pronscore/tensor.hpp"

namespace pronscore::nn {

// Adam with bias correction. lr is the only externally mandated value
// (1e-3); the moment constants are the conventional defaults.
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t step = 0;
  std::vector<std::vector<double>> m;  // one buffer per parameter
  std::vector<std::vector<double>> v;

  static AdamState init(const std::vector<Tensor>& params, double lr);
};

// One update over all parameters; reads each parameter's grad buffer
// (zero_grad must have sized it). A zero gradient leaves the parameter
// bit-identical.
void adam_step(std::vector<Tensor>& params, AdamState& state);

}  // namespace pronscore::nn

#endif  // PRONSCORE_ADAM_HPP_
