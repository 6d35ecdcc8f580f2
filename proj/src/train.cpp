// src/train.cpp
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

#include "pronscore/train.hpp"

#include <cmath>
#include <limits>

#include "pronscore/adam.hpp"

namespace pronscore {

void TrainPlan::validate() const {
  if (epochs <= 0) throw ConfigError("train plan: epochs must be positive");
  if (batch_size <= 0) throw ConfigError("train plan: batch_size must be positive");
  if (!(lr >= 0.0)) throw ConfigError("train plan: lr must be non-negative");
}

namespace {

// The regime's label requirements are checked up front so a bad corpus fails
// before any parameter moves.
void check_labels(const std::vector<UtteranceRecord>& records,
                  SupervisionRegime regime, int max_seq_len) {
  const RegimeFlags flags = regime_flags(regime);
  for (const auto& rec : records) {
    if (static_cast<int>(rec.phones.size()) > max_seq_len)
      throw DataError("utterance '" + rec.utt_id + "' has " +
                      std::to_string(rec.phones.size()) +
                      " phones, max_seq_len is " + std::to_string(max_seq_len));
    if (flags.use_utt && !rec.utt_label)
      throw MissingLabelError("utterance '" + rec.utt_id +
                              "' lacks an utterance-level label required by "
                              "regime " + to_string(regime));
    if (flags.use_word && !rec.word_labels)
      throw MissingLabelError("utterance '" + rec.utt_id +
                              "' lacks word-level labels required by regime " +
                              to_string(regime));
    if (flags.use_phone)
      for (const auto& p : rec.phones)
        if (!p.phone_label)
          throw MissingLabelError("utterance '" + rec.utt_id +
                                  "' lacks phone-level labels required by "
                                  "regime " + to_string(regime));
  }
}

double dataset_loss(const ModelParams& params,
                    const std::vector<UtteranceRecord>& records,
                    SupervisionRegime regime, int batch_size) {
  double acc = 0.0;
  for (size_t start = 0; start < records.size();
       start += static_cast<size_t>(batch_size)) {
    const size_t end =
        std::min(records.size(), start + static_cast<size_t>(batch_size));
    std::vector<const UtteranceRecord*> batch;
    for (size_t i = start; i < end; ++i) batch.push_back(&records[i]);
    acc += loss(forward(batch, params), regime).item() *
           static_cast<double>(end - start);
  }
  return acc / static_cast<double>(records.size());
}

std::vector<double> run_training(ModelParams& params,
                                 const std::vector<UtteranceRecord>& records,
                                 const TrainPlan& plan,
                                 const std::vector<UtteranceRecord>* dev_records,
                                 std::map<std::string, std::string>& meta) {
  const ModelConfig& cfg = params.config();
  check_labels(records, plan.regime, cfg.max_seq_len);
  if (records.empty()) throw InsufficientDataError("training set is empty");
  if (plan.select_best_dev && (!dev_records || dev_records->empty()))
    throw ConfigError("select_best_dev requires a non-empty dev set");
  if (dev_records) check_labels(*dev_records, plan.regime, cfg.max_seq_len);

  std::vector<nn::Tensor> tensors = params.tensors();
  nn::AdamState state = nn::AdamState::init(tensors, plan.lr);

  const size_t n = records.size();
  std::vector<double> trace;
  trace.reserve(static_cast<size_t>(plan.epochs));
  double best_dev = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  ModelParams best_params;

  for (int epoch = 0; epoch < plan.epochs; ++epoch) {
    Rng epoch_rng(plan.seed + static_cast<uint64_t>(epoch));
    Rng dropout_rng = epoch_rng.split(1);
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    epoch_rng.shuffle(order);

    double epoch_loss = 0.0;
    int step = 0;
    for (size_t start = 0; start < n; start += plan.batch_size, ++step) {
      const size_t end = std::min(n, start + plan.batch_size);
      std::vector<const UtteranceRecord*> batch;
      batch.reserve(end - start);
      for (size_t i = start; i < end; ++i) batch.push_back(&records[order[i]]);

      params.zero_grad();
      Rng* drng = cfg.dropout > 0.0 ? &dropout_rng : nullptr;
      ForwardGraph g = forward(batch, params, drng);
      nn::Tensor l = loss(g, plan.regime);
      const double lval = l.item();
      if (!std::isfinite(lval))
        throw TrainingError("non-finite loss " + std::to_string(lval) +
                            " at epoch " + std::to_string(epoch) + ", step " +
                            std::to_string(step));
      nn::backward(l);
      nn::adam_step(tensors, state);
      epoch_loss += lval * static_cast<double>(end - start);
    }
    trace.push_back(epoch_loss / static_cast<double>(n));

    if (plan.select_best_dev) {
      const double dev_loss =
          dataset_loss(params, *dev_records, plan.regime, plan.batch_size);
      if (dev_loss < best_dev) {
        best_dev = dev_loss;
        best_epoch = epoch;
        best_params = params.clone();
      }
    }
  }
  if (plan.select_best_dev) {
    meta["best_epoch"] = std::to_string(best_epoch + 1);
    params = std::move(best_params);
  }
  return trace;
}

std::map<std::string, std::string> plan_meta(const TrainPlan& plan,
                                             const std::string& init) {
  return {{"regime", to_string(plan.regime)},
          {"train_seed", std::to_string(plan.seed)},
          {"epochs", std::to_string(plan.epochs)},
          {"batch_size", std::to_string(plan.batch_size)},
          {"lr", std::to_string(plan.lr)},
          {"init", init}};
}

}  // namespace

TrainResult train(const std::vector<UtteranceRecord>& records,
                  const ModelConfig& config, const TrainPlan& plan,
                  const std::vector<UtteranceRecord>* dev_records) {
  plan.validate();
  config.validate();
  if (plan.pooling && *plan.pooling != config.pooling)
    throw ConfigError("train plan requests pooling " + to_string(*plan.pooling) +
                      " but config uses " + to_string(config.pooling));
  ModelConfig cfg = config;
  cfg.seed = plan.seed;
  TrainResult result{ModelParams::init(cfg), {}, plan_meta(plan, "fresh")};
  result.loss_trace =
      run_training(result.params, records, plan, dev_records, result.meta);
  return result;
}

TrainResult finetune(const Checkpoint& ckpt,
                     const std::vector<UtteranceRecord>& records,
                     const TrainPlan& plan,
                     const std::vector<UtteranceRecord>* dev_records) {
  plan.validate();
  if (plan.pooling && *plan.pooling != ckpt.config().pooling)
    throw ConfigError("finetune plan requests pooling " +
                      to_string(*plan.pooling) + " but checkpoint uses " +
                      to_string(ckpt.config().pooling));
  TrainResult result{ckpt.params.clone(), {}, plan_meta(plan, "checkpoint")};
  result.loss_trace =
      run_training(result.params, records, plan, dev_records, result.meta);
  return result;
}

}  // namespace pronscore
