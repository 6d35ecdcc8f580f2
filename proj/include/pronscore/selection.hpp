// include/pronscore/selection.hpp
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

#ifndef PRONSCORE_SELECTION_HPP_
#define PRONSCORE_SELECTION_HPP_

#include <map>
#include <string>
#include <vector>

#include "pronscore/checkpoint.hpp"
#include "pronscore/data_model.hpp"

namespace pronscore {

enum class SelectionStrategy { kRandom, kBest };

std::string to_string(SelectionStrategy s);
SelectionStrategy selection_strategy_from_string(const std::string& s);

struct SelectionSpec {
  int64_t n = 100;
  SelectionStrategy strategy = SelectionStrategy::kRandom;
  bool balanced = false;
  int bins = 5;  // equal-width bins over the [0,2] label range
  uint64_t seed = 0;
};

// One pool item: the stage-1 model's utterance-level absolute error plus the
// ground-truth utterance label used for balanced binning.
struct PoolItem {
  std::string utt_id;
  double abs_error = 0.0;
  double utt_label = 0.0;
};

// |predicted utterance score - label| for every record, under the given
// stage-1 checkpoint.
std::map<std::string, double> absolute_errors(
    const Checkpoint& ckpt, const std::vector<UtteranceRecord>& records,
    int batch_size = 25);

// Deterministic subset selection; output is sorted by utt_id and has exactly
// spec.n ids whenever the pool allows. Unbalanced selection is the
// single-bin case of the balanced algorithm, so balanced with bins=1 matches
// it exactly.
std::vector<std::string> select(const std::vector<PoolItem>& pool,
                                const SelectionSpec& spec);

std::vector<PoolItem> build_pool(const std::vector<UtteranceRecord>& records,
                                 const std::map<std::string, double>& abs_errors);

}  // namespace pronscore

#endif  // PRONSCORE_SELECTION_HPP_
