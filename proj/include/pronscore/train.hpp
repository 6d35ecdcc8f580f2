// include/pronscore/train.hpp
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

#ifndef PRONSCORE_TRAIN_HPP_
#define PRONSCORE_TRAIN_HPP_

#include <map>
#include <optional>
#include <vector>

#include "pronscore/checkpoint.hpp"
#include "pronscore/model.hpp"
#include "pronscore/supervision.hpp"

namespace pronscore {

struct TrainPlan {
  SupervisionRegime regime = SupervisionRegime::kUWP;
  int epochs = 100;
  int batch_size = 25;
  double lr = 1e-3;
  uint64_t seed = 0;
  // Checked against the checkpoint when finetuning, when set.
  std::optional<PoolingStrategy> pooling;
  // Off by default: the fixed-epoch-count schedule keeps the final epoch.
  bool select_best_dev = false;

  void validate() const;
};

struct TrainResult {
  ModelParams params;
  std::vector<double> loss_trace;  // mean training loss per epoch
  std::map<std::string, std::string> meta;
};

// Fresh model seeded by plan.seed, trained for plan.epochs. Deterministic:
// shuffling uses a per-epoch seed (plan.seed + epoch) and dropout draws from
// a stream derived from it. Missing labels are rejected before the first
// step; a non-finite loss aborts with epoch/step diagnostics. With
// plan.select_best_dev, dev_records must be non-null and the returned
// parameters come from the epoch with the lowest dev loss.
TrainResult train(const std::vector<UtteranceRecord>& records,
                  const ModelConfig& config, const TrainPlan& plan,
                  const std::vector<UtteranceRecord>* dev_records = nullptr);

// Stage-2 finetuning: same architecture, fresh optimizer state, every
// parameter trainable including heads unused in stage 1.
TrainResult finetune(const Checkpoint& ckpt,
                     const std::vector<UtteranceRecord>& records,
                     const TrainPlan& plan,
                     const std::vector<UtteranceRecord>* dev_records = nullptr);

}  // namespace pronscore

#endif  // PRONSCORE_TRAIN_HPP_
